use super::{dot, sup_norm, LinearSolver, ShiftedSystem, SolveError, SolveStats};
use crate::grid::{CosineBasis, Grid};

/// Plain conjugate gradients.
#[derive(Debug, Default)]
pub struct ConjugateGradient;

impl LinearSolver for ConjugateGradient {
    fn name(&self) -> &str {
        "cg"
    }

    fn handles_nonsymmetric(&self) -> bool {
        false
    }

    fn solve(
        &mut self,
        system: &ShiftedSystem<'_>,
        rhs: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<SolveStats, SolveError> {
        pcg(self.name(), system, rhs, x, tol, max_iters, |r, z| z.copy_from_slice(r))
    }
}

/// Conjugate gradients preconditioned by the constant-coefficient operator
/// `ᾱ I − dt L` (with `ᾱ` the mean of `α`), inverted exactly in the cosine
/// basis.
pub struct CosinePreconditioned {
    basis: CosineBasis,
}

impl CosinePreconditioned {
    pub fn new(grid: &Grid) -> Self {
        CosinePreconditioned { basis: CosineBasis::new(grid) }
    }
}

impl LinearSolver for CosinePreconditioned {
    fn name(&self) -> &str {
        "pcg-cosine"
    }

    fn handles_nonsymmetric(&self) -> bool {
        false
    }

    fn solve(
        &mut self,
        system: &ShiftedSystem<'_>,
        rhs: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<SolveStats, SolveError> {
        assert_eq!(self.basis.grid(), system.grid, "preconditioner built for another grid");
        let mean_alpha = system.alpha.iter().sum::<f64>() / system.len() as f64;
        let dt = system.dt;
        let basis = &self.basis;
        let eig = basis.eigenvalues();
        pcg("pcg-cosine", system, rhs, x, tol, max_iters, |r, z| {
            z.copy_from_slice(r);
            basis.apply_weights(z, |k| 1.0 / (mean_alpha + dt * eig[k]));
        })
    }
}

fn pcg(
    name: &str,
    system: &ShiftedSystem<'_>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
    precondition: impl Fn(&[f64], &mut [f64]),
) -> Result<SolveStats, SolveError> {
    if !system.is_symmetric() {
        return Err(SolveError::NeedsSymmetric(name.to_string()));
    }
    let n = b.len();
    let b_norm = sup_norm(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats::default());
    }
    let target = tol * b_norm;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut work = vec![0.0; n];

    let mut res = system.residual(x, b, &mut r, &mut work);
    let mut iterations = 0;
    // outer loop restarts from the true residual whenever the recursive one
    // has drifted below target without the true one following
    while res > target {
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            if iterations >= max_iters {
                let res = system.residual(x, b, &mut r, &mut work);
                return Err(SolveError::NotConverged {
                    solver: name.to_string(),
                    iterations,
                    residual: res / b_norm,
                });
            }
            system.apply(&p, &mut q, &mut work);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(SolveError::Breakdown {
                    solver: name.to_string(),
                    reason: format!("non-positive curvature p·Mp = {pq:e}"),
                });
            }
            let step = rz / pq;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * q[i];
            }
            iterations += 1;
            if sup_norm(&r) <= target {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        res = system.residual(x, b, &mut r, &mut work);
    }
    Ok(SolveStats { iterations, relative_residual: res / b_norm })
}
