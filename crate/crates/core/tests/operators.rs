use mlab_core::grid::{CosineBasis, Field, Grid};
use nalgebra::{DMatrix, DVector};

/// Dense `-L`, assembled column by column from the matrix-free operator.
fn dense_neg_laplacian(g: &Grid) -> DMatrix<f64> {
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut out = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        g.laplacian_into(&e, &mut out);
        for i in 0..n {
            m[(i, j)] = -out[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Independent stencil: `(1/h_a^2)` per interior face, nothing across the
/// boundary.
fn stencil_neg_laplacian(g: &Grid) -> DMatrix<f64> {
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let idx = g.multi_index(i);
        for a in 0..g.dim() {
            let w = 1.0 / g.spacing(a).powi(2);
            if idx[a] + 1 < g.cells()[a] {
                let mut nb = idx;
                nb[a] += 1;
                let j = g.flat_index(&nb[..g.dim()]);
                m[(i, i)] += w;
                m[(j, j)] += w;
                m[(i, j)] -= w;
                m[(j, i)] -= w;
            }
        }
    }
    m
}

#[test]
fn operator_matches_face_stencil() {
    for g in [
        Grid::new(1, &[2.0], &[7]).unwrap(),
        Grid::new(2, &[1.0, 3.0], &[4, 6]).unwrap(),
        Grid::new(3, &[1.0, 1.0, 2.0], &[3, 4, 2]).unwrap(),
    ] {
        let diff = (dense_neg_laplacian(&g) - stencil_neg_laplacian(&g)).abs().max();
        let scale = 1.0 / g.min_spacing().powi(2);
        assert!(diff <= 1e-13 * scale, "{diff}");
    }
}

#[test]
fn spectrum_matches_dense_eigensolve() {
    // unit spacing keeps the eigenvalues O(1)
    let g = Grid::new(2, &[6.0, 5.0], &[6, 5]).unwrap();
    let mut dense: Vec<f64> = stencil_neg_laplacian(&g).symmetric_eigen().eigenvalues.iter().copied().collect();
    let mut spectral = CosineBasis::new(&g).eigenvalues().to_vec();
    dense.sort_by(f64::total_cmp);
    spectral.sort_by(f64::total_cmp);
    for (a, b) in dense.iter().zip(&spectral) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(spectral[0], 0.0);
    let h = 1.0;
    let first = 4.0 * (std::f64::consts::PI / 12.0).sin().powi(2) / (h * h);
    assert!((spectral[1] - first).abs() <= 1e-14);
}

#[test]
fn cosine_modes_are_eigenvectors() {
    let g = Grid::new(2, &[1.0, 2.0], &[12, 10]).unwrap();
    let (kx, ky) = (3.0, 2.0);
    let pi = std::f64::consts::PI;
    let f = Field::from_fn(&g, |x| (kx * pi * x[0]).cos() * (ky * pi * x[1] / 2.0).cos());
    let lam = |k: f64, n: f64, h: f64| 4.0 * (pi * k / (2.0 * n)).sin().powi(2) / (h * h);
    let expected = lam(kx, 12.0, 1.0 / 12.0) + lam(ky, 10.0, 0.2);
    let lf = g.neumann_laplacian(&f).unwrap();
    for (a, b) in lf.values().iter().zip(f.values()) {
        assert!((a + expected * b).abs() <= 1e-10 * expected, "{a} vs {}", -expected * b);
    }
}

#[test]
fn inverse_square_root_matches_dense() {
    let g = Grid::new(3, &[1.0, 1.5, 1.0], &[4, 3, 5]).unwrap();
    let f = Field::from_fn(&g, |x| 1.0 + x[0] * x[1] + (3.0 * x[2]).sin());
    let eig = (DMatrix::identity(g.len(), g.len()) + stencil_neg_laplacian(&g)).symmetric_eigen();
    let c = eig.eigenvectors.transpose() * DVector::from_column_slice(f.values());
    let scaled = DVector::from_iterator(g.len(), c.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / l.sqrt()));
    let dense = &eig.eigenvectors * scaled;
    let fast = g.apply_a_inv_sqrt(&f).unwrap();
    for (a, b) in fast.values().iter().zip(dense.iter()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

/// `exp(cos πx cos πy)` has vanishing odd derivatives on the boundary, so
/// the reflecting stencil is second order up to the wall.
#[test]
fn laplacian_is_second_order() {
    let pi = std::f64::consts::PI;
    let exact = |x: &[f64]| {
        let (cx, sx, cy, sy) = ((pi * x[0]).cos(), (pi * x[0]).sin(), (pi * x[1]).cos(), (pi * x[1]).sin());
        let q = cx * cy;
        let e = q.exp();
        let fx2 = pi * pi * (sx * sx * cy * cy - q);
        let fy2 = pi * pi * (sy * sy * cx * cx - q);
        e * (fx2 + fy2)
    };
    let errors: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&n| {
            let g = Grid::new(2, &[1.0, 1.0], &[n, n]).unwrap();
            let f = Field::from_fn(&g, |x| ((pi * x[0]).cos() * (pi * x[1]).cos()).exp());
            let lf = g.neumann_laplacian(&f).unwrap();
            (0..g.len())
                .map(|i| {
                    let c = g.cell_center(i);
                    (lf.values()[i] - exact(&c[..2])).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((rate - 2.0).abs() <= 0.2, "{errors:?}");
    }
}
