use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use super::Grid;

/// Eigenbasis of the cell-centered Neumann Laplacian.
///
/// The DCT-II vectors `cos(π k (j + 1/2) / N)` diagonalize the 3-point
/// reflecting stencil exactly, with eigenvalues of `-L`
/// `λ_k = (4 / h^2) sin^2(π k / (2N))` per axis, summed over axes.
pub struct CosineBasis {
    grid: Grid,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
    eigenvalues: Vec<f64>,
    normalization: f64,
    scratch_len: usize,
}

impl CosineBasis {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = DctPlanner::new();
        let plans: Vec<_> = grid.cells().iter().map(|&n| planner.plan_dct2(n)).collect();
        let scratch_len = plans.iter().map(|p| p.get_scratch_len()).max().unwrap_or(0);

        let axis_eigen: Vec<Vec<f64>> = (0..grid.dim())
            .map(|axis| axis_eigenvalues(grid.cells()[axis], grid.spacing(axis)))
            .collect();
        let eigenvalues = (0..grid.len())
            .map(|idx| {
                let m = grid.multi_index(idx);
                (0..grid.dim()).map(|a| axis_eigen[a][m[a]]).sum()
            })
            .collect();
        // DCT-III after DCT-II scales a length-N line by N/2.
        let normalization = grid.cells().iter().map(|&n| 2.0 / n as f64).product();

        CosineBasis { grid: grid.clone(), plans, eigenvalues, normalization, scratch_len }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalues of `-L`, indexed like cell values (mode multi-index in
    /// place of cell multi-index).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Replace `data` by `s(-L) data` for a spectral multiplier `s`.
    pub fn apply_symbol(&self, data: &mut [f64], symbol: impl Fn(f64) -> f64) {
        self.apply_weights(data, |k| symbol(self.eigenvalues[k]));
    }

    /// Like [`apply_symbol`](Self::apply_symbol) but with the multiplier
    /// given per flat mode index.
    pub fn apply_weights(&self, data: &mut [f64], weight: impl Fn(usize) -> f64) {
        assert_eq!(data.len(), self.grid.len());
        let mut line = Vec::new();
        let mut scratch = vec![0.0; self.scratch_len];
        for axis in 0..self.grid.dim() {
            self.transform_axis(data, axis, &mut line, &mut scratch, Direction::Forward);
        }
        for (k, v) in data.iter_mut().enumerate() {
            *v *= weight(k) * self.normalization;
        }
        for axis in 0..self.grid.dim() {
            self.transform_axis(data, axis, &mut line, &mut scratch, Direction::Inverse);
        }
    }

    fn transform_axis(
        &self,
        data: &mut [f64],
        axis: usize,
        line: &mut Vec<f64>,
        scratch: &mut [f64],
        dir: Direction,
    ) {
        let n = self.grid.cells()[axis];
        let s = self.grid.stride(axis);
        let plan = &self.plans[axis];
        let run = |buf: &mut [f64], scratch: &mut [f64]| match dir {
            Direction::Forward => plan.process_dct2_with_scratch(buf, scratch),
            Direction::Inverse => plan.process_dct3_with_scratch(buf, scratch),
        };
        if s == 1 {
            for chunk in data.chunks_exact_mut(n) {
                run(chunk, scratch);
            }
            return;
        }
        line.resize(n, 0.0);
        let outer = data.len() / (n * s);
        for o in 0..outer {
            for inner in 0..s {
                let base = o * n * s + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * s];
                }
                run(line, scratch);
                for (j, &v) in line.iter().enumerate() {
                    data[base + j * s] = v;
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// `λ_k = (2/h^2)(1 - cos(π k / N))` for `k = 0..N`.
pub(crate) fn axis_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}
