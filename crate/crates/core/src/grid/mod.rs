//! Cell-centered tensor-product grids on boxes with homogeneous Neumann
//! closure.
//!
//! Values are stored row-major (the last axis varies fastest). Every discrete
//! operator here is written in flux form over cell faces: a face between two
//! neighbouring cells carries the difference of their values, boundary faces
//! carry nothing. This makes `L(const) = 0` and the vanishing column sums of
//! the Laplacian exact, which the conservation properties of the stepper
//! rely on.

mod spectral;

pub use spectral::CosineBasis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1, 2 or 3 (got {0})")]
    BadDimension(usize),
    #[error("expected {expected} entries per axis list, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("extent along axis {axis} must be positive and finite (got {value})")]
    NonPositiveExtent { axis: usize, value: f64 },
    #[error("cell count along axis {axis} must be at least 2 (got {value})")]
    TooFewCells { axis: usize, value: usize },
    #[error("field does not live on this grid")]
    GridMismatch,
    #[error("field has {got} values but the grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
}

/// Box `[0, L_1] x ... x [0, L_d]` split into `N_1 x ... x N_d` equal cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    extents: [f64; MAX_DIM],
    cells: [usize; MAX_DIM],
}

/// Declarative form of a [`Grid`], as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = GridError;

    fn try_from(spec: GridSpec) -> Result<Self, Self::Error> {
        Grid::new(spec.dim, &spec.extents, &spec.cells)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            dim: g.dim,
            extents: g.extents().to_vec(),
            cells: g.cells().to_vec(),
        }
    }
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self, GridError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        for got in [extents.len(), cells.len()] {
            if got != dim {
                return Err(GridError::DimensionMismatch { expected: dim, got });
            }
        }
        let mut e = [1.0; MAX_DIM];
        let mut n = [1; MAX_DIM];
        for axis in 0..dim {
            if !(extents[axis] > 0.0 && extents[axis].is_finite()) {
                return Err(GridError::NonPositiveExtent { axis, value: extents[axis] });
            }
            if cells[axis] < 2 {
                return Err(GridError::TooFewCells { axis, value: cells[axis] });
            }
            e[axis] = extents[axis];
            n[axis] = cells[axis];
        }
        Ok(Grid { dim, extents: e, cells: n })
    }

    /// Unit-length 1D grid, handy in tests and examples.
    pub fn unit_1d(cells: usize) -> Result<Self, GridError> {
        Self::new(1, &[1.0], &[cells])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.spacing(a)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Measure of the whole box, `|Ω|`.
    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    /// Distance between consecutive indices along `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..self.dim].iter().product()
    }

    /// Multi-index of a flat cell index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.cells[axis];
            idx /= self.cells[axis];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .zip(self.cells())
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Cell center `x_k = (k + 1/2) h` along every axis.
    pub fn cell_center(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = (m[axis] as f64 + 0.5) * self.spacing(axis);
        }
        x
    }

    pub fn check(&self, f: &Field) -> Result<(), GridError> {
        if f.grid() == self {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    /// Iterate `(lo, hi)` flat index pairs of every interior face normal to
    /// `axis`, grouped as contiguous runs of length `stride(axis)`.
    fn for_each_face_run(&self, axis: usize, mut visit: impl FnMut(usize, usize, usize)) {
        let n = self.cells[axis];
        let s = self.stride(axis);
        let outer = self.len() / (n * s);
        for o in 0..outer {
            let base = o * n * s;
            for i in 0..n - 1 {
                let lo = base + i * s;
                visit(lo, lo + s, s);
            }
        }
    }

    /// Matrix-free Neumann Laplacian on raw cell values.
    pub fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        out.fill(0.0);
        for axis in 0..self.dim {
            let c = 1.0 / (self.spacing(axis) * self.spacing(axis));
            self.for_each_face_run(axis, |lo, hi, run| {
                for k in 0..run {
                    let flux = (f[hi + k] - f[lo + k]) * c;
                    out[lo + k] += flux;
                    out[hi + k] -= flux;
                }
            });
        }
    }

    /// Cellwise `|∇f|^2`: per axis, the mean of the squared face difference
    /// quotients on the two faces of the cell, with boundary faces counted
    /// as zero (no normal flux).
    pub fn gradient_sq_into(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for axis in 0..self.dim {
            let inv_h = 1.0 / self.spacing(axis);
            self.for_each_face_run(axis, |lo, hi, run| {
                for k in 0..run {
                    let g = (f[hi + k] - f[lo + k]) * inv_h;
                    let half = 0.5 * g * g;
                    out[lo + k] += half;
                    out[hi + k] += half;
                }
            });
        }
    }

    /// Discrete Dirichlet form `∑_faces (Δf/h)(Δg/h) · w`, i.e. `-⟨f, Lg⟩`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for axis in 0..self.dim {
            let c = 1.0 / (self.spacing(axis) * self.spacing(axis));
            self.for_each_face_run(axis, |lo, hi, run| {
                for k in 0..run {
                    acc += (f[hi + k] - f[lo + k]) * (g[hi + k] - g[lo + k]) * c;
                }
            });
        }
        acc * self.cell_volume()
    }

    pub fn integrate_slice(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn neumann_laplacian(&self, f: &Field) -> Result<Field, GridError> {
        self.check(f)?;
        let mut out = vec![0.0; self.len()];
        self.laplacian_into(f.values(), &mut out);
        Ok(Field::from_raw(self.clone(), out))
    }

    pub fn gradient_sq(&self, f: &Field) -> Result<Field, GridError> {
        self.check(f)?;
        let mut out = vec![0.0; self.len()];
        self.gradient_sq_into(f.values(), &mut out);
        Ok(Field::from_raw(self.clone(), out))
    }

    /// Midpoint quadrature `∑ f_k · w`.
    pub fn integrate(&self, f: &Field) -> Result<f64, GridError> {
        self.check(f)?;
        Ok(self.integrate_slice(f.values()))
    }

    /// `A^{-1/2} f` for `A = -L + I`, computed in the discrete cosine basis.
    ///
    /// Builds a fresh [`CosineBasis`]; hold on to one when applying
    /// repeatedly.
    pub fn apply_a_inv_sqrt(&self, f: &Field) -> Result<Field, GridError> {
        self.check(f)?;
        let basis = CosineBasis::new(self);
        let mut out = f.values().to_vec();
        basis.apply_symbol(&mut out, |lambda| 1.0 / (1.0 + lambda).sqrt());
        Ok(Field::from_raw(self.clone(), out))
    }
}

/// Free-function form of [`Grid::new`].
pub fn build_grid(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Grid, GridError> {
    Grid::new(dim, extents, cells)
}

/// Scalar cell values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample `f` at every cell center.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.cell_center(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Field { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate_slice(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_1d_and_2d() {
        let g = build_grid(1, &[1.0], &[8]).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.spacing(0), 0.125);

        let g = build_grid(2, &[1.0, 2.0], &[4, 8]).unwrap();
        assert_eq!(g.len(), 32);
        assert_eq!(g.spacings(), vec![0.25, 0.25]);
        assert_eq!(g.cell_volume(), 0.0625);
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(build_grid(1, &[1.0], &[1]), Err(GridError::TooFewCells { axis: 0, value: 1 }));
        assert!(matches!(build_grid(4, &[1.0; 4], &[2; 4]), Err(GridError::BadDimension(4))));
        assert!(matches!(build_grid(0, &[], &[]), Err(GridError::BadDimension(0))));
        assert!(matches!(
            build_grid(2, &[1.0], &[4, 4]),
            Err(GridError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(build_grid(1, &[0.0], &[4]), Err(GridError::NonPositiveExtent { .. })));
        assert!(matches!(build_grid(1, &[-2.0], &[4]), Err(GridError::NonPositiveExtent { .. })));
    }

    #[test]
    fn index_roundtrip_and_centers() {
        let g = build_grid(3, &[1.0, 2.0, 3.0], &[3, 4, 5]).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.stride(2), 1);
        assert_eq!(g.stride(1), 5);
        assert_eq!(g.stride(0), 20);
        let c = g.cell_center(g.flat_index(&[1, 0, 4]));
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((c[1] - 0.25).abs() < 1e-15);
        assert!((c[2] - 2.7).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_constant_is_exactly_zero() {
        for g in [
            Grid::unit_1d(8).unwrap(),
            build_grid(2, &[1.0, 3.0], &[5, 7]).unwrap(),
            build_grid(3, &[1.0, 1.0, 2.0], &[3, 4, 5]).unwrap(),
        ] {
            let f = Field::constant(&g, 3.7);
            let lf = g.neumann_laplacian(&f).unwrap();
            assert!(lf.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn integrate_basics() {
        let g = build_grid(2, &[2.0, 3.0], &[4, 6]).unwrap();
        assert!((g.integrate(&Field::constant(&g, 1.5)).unwrap() - 9.0).abs() < 1e-14);
        let mut ind = Field::zeros(&g);
        ind.values_mut()[7] = 1.0;
        assert_eq!(g.integrate(&ind).unwrap(), g.cell_volume());

        let g = Grid::unit_1d(32).unwrap();
        let f = Field::from_fn(&g, |x| x[0] * x[0]);
        assert!((g.integrate(&f).unwrap() - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn gradient_sq_of_linear_and_constant() {
        let g = Grid::unit_1d(16).unwrap();
        let c = g.gradient_sq(&Field::constant(&g, 2.0)).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        let lin = g.gradient_sq(&Field::from_fn(&g, |x| x[0])).unwrap();
        for &v in &lin.values()[1..15] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // boundary cells see only half of the one-sided difference
        assert!((lin.values()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_sq_energy_of_cosine_mode() {
        let n = 64;
        let g = Grid::unit_1d(n).unwrap();
        let f = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).cos());
        let e = g.integrate(&g.gradient_sq(&f).unwrap()).unwrap();
        // ∫ |d/dx cos(πx)|^2 over [0,1] = π^2 / 2
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((e - exact).abs() / exact < 0.02);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let a = Grid::unit_1d(8).unwrap();
        let b = Grid::unit_1d(9).unwrap();
        let f = Field::zeros(&b);
        assert_eq!(a.neumann_laplacian(&f), Err(GridError::GridMismatch));
        assert_eq!(a.gradient_sq(&f), Err(GridError::GridMismatch));
        assert_eq!(a.integrate(&f), Err(GridError::GridMismatch));
        assert_eq!(a.apply_a_inv_sqrt(&f), Err(GridError::GridMismatch));
        assert!(matches!(Field::new(&a, vec![0.0; 3]), Err(GridError::LengthMismatch { .. })));
    }

    #[test]
    fn a_inv_sqrt_fixes_constants() {
        let g = build_grid(2, &[1.0, 2.0], &[6, 10]).unwrap();
        let out = g.apply_a_inv_sqrt(&Field::constant(&g, 2.5)).unwrap();
        for &v in out.values() {
            assert!((v - 2.5).abs() < 1e-13);
        }
    }
}
