use super::{dot, sup_norm, LinearSolver, ShiftedSystem, SolveError, SolveStats};

/// Unpreconditioned BiCGStab; accepts the nonsymmetric `β` form directly.
#[derive(Debug, Default)]
pub struct BiCgStab;

impl LinearSolver for BiCgStab {
    fn name(&self) -> &str {
        "bicgstab"
    }

    fn handles_nonsymmetric(&self) -> bool {
        true
    }

    fn solve(
        &mut self,
        system: &ShiftedSystem<'_>,
        b: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<SolveStats, SolveError> {
        let n = b.len();
        let b_norm = sup_norm(b);
        if b_norm == 0.0 {
            x.fill(0.0);
            return Ok(SolveStats::default());
        }
        let target = tol * b_norm;
        let mut r = vec![0.0; n];
        let mut work = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];

        let mut res = system.residual(x, b, &mut r, &mut work);
        let mut iterations = 0;
        'restart: while res > target {
            let r_hat = r.clone();
            let mut rho = dot(&r_hat, &r);
            p.copy_from_slice(&r);
            loop {
                if iterations >= max_iters {
                    let res = system.residual(x, b, &mut r, &mut work);
                    return Err(SolveError::NotConverged {
                        solver: self.name().to_string(),
                        iterations,
                        residual: res / b_norm,
                    });
                }
                system.apply(&p, &mut v, &mut work);
                let rv = dot(&r_hat, &v);
                if rv == 0.0 || !rv.is_finite() {
                    res = system.residual(x, b, &mut r, &mut work);
                    iterations += 1;
                    continue 'restart;
                }
                let alpha = rho / rv;
                for i in 0..n {
                    s[i] = r[i] - alpha * v[i];
                }
                iterations += 1;
                if sup_norm(&s) <= target {
                    for i in 0..n {
                        x[i] += alpha * p[i];
                    }
                    break;
                }
                system.apply(&s, &mut t, &mut work);
                let tt = dot(&t, &t);
                if tt == 0.0 {
                    return Err(SolveError::Breakdown {
                        solver: self.name().to_string(),
                        reason: "vanishing stabilization vector".into(),
                    });
                }
                let omega = dot(&t, &s) / tt;
                for i in 0..n {
                    x[i] += alpha * p[i] + omega * s[i];
                    r[i] = s[i] - omega * t[i];
                }
                if sup_norm(&r) <= target {
                    break;
                }
                let rho_new = dot(&r_hat, &r);
                if rho_new == 0.0 || omega == 0.0 {
                    res = system.residual(x, b, &mut r, &mut work);
                    continue 'restart;
                }
                let beta = (rho_new / rho) * (alpha / omega);
                rho = rho_new;
                for i in 0..n {
                    p[i] = r[i] + beta * (p[i] - omega * v[i]);
                }
            }
            res = system.residual(x, b, &mut r, &mut work);
        }
        Ok(SolveStats { iterations, relative_residual: res / b_norm })
    }
}
