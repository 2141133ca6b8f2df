//! Problem definition: the motility function, the (regularized) consumption
//! term, initial data generators and the assembled [`ProblemSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid, GridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown motility family `{0}`")]
    UnknownFamily(String),
    #[error("motility family `{family}` expects {expected} parameters, got {got}")]
    ParameterCount { family: &'static str, expected: usize, got: usize },
    #[error("motility is not positive on [0, ∞): {0}")]
    PositivityViolation(String),
    #[error("polynomial motility needs at least one coefficient")]
    EmptyPolynomial,
    #[error("non-finite motility parameter")]
    NonFiniteParameter,
    #[error("{name} has a negative value ({value}) at cell {cell}")]
    NegativeValue { name: &'static str, cell: usize, value: f64 },
    #[error("initial density u0 must have positive mass")]
    ZeroMass,
    #[error("epsilon must be nonnegative and finite (got {0})")]
    BadEpsilon(f64),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Signal-dependent motility `φ`, positive on `[0, ∞)` and smooth by
/// construction of each family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MotilityConfig", into = "MotilityConfig")]
pub enum MotilitySpec {
    /// `φ ≡ c`
    Constant { c: f64 },
    /// `φ(v) = a e^{-v} + b`
    ExpDecay { a: f64, b: f64 },
    /// `φ(v) = a / (1 + v)^k + b`
    Rational { a: f64, b: f64, k: f64 },
    /// `φ(v) = ∑ c_i v^i`, coefficients in ascending order
    Polynomial { coeffs: Vec<f64> },
}

/// Family name plus flat parameter list, the declarative form used in
/// configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotilityConfig {
    pub family: String,
    pub params: Vec<f64>,
}

impl TryFrom<MotilityConfig> for MotilitySpec {
    type Error = ModelError;
    fn try_from(c: MotilityConfig) -> Result<Self, ModelError> {
        make_motility(&c.family, &c.params)
    }
}

impl From<MotilitySpec> for MotilityConfig {
    fn from(m: MotilitySpec) -> Self {
        let (family, params) = match m {
            MotilitySpec::Constant { c } => ("constant", vec![c]),
            MotilitySpec::ExpDecay { a, b } => ("exp_decay", vec![a, b]),
            MotilitySpec::Rational { a, b, k } => ("rational", vec![a, b, k]),
            MotilitySpec::Polynomial { coeffs } => ("polynomial", coeffs),
        };
        MotilityConfig { family: family.to_string(), params }
    }
}

/// Sampling range used to screen polynomial motilities when no root bound
/// pushes it further out.
const POLY_SCREEN_MIN: f64 = 10.0;
const POLY_SCREEN_SAMPLES: usize = 8192;

pub fn make_motility(family: &str, params: &[f64]) -> Result<MotilitySpec, ModelError> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFiniteParameter);
    }
    let expect = |family: &'static str, n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(ModelError::ParameterCount { family, expected: n, got: params.len() })
        }
    };
    let spec = match family {
        "constant" => {
            expect("constant", 1)?;
            MotilitySpec::Constant { c: params[0] }
        }
        "exp_decay" => {
            expect("exp_decay", 2)?;
            MotilitySpec::ExpDecay { a: params[0], b: params[1] }
        }
        "rational" => {
            expect("rational", 3)?;
            MotilitySpec::Rational { a: params[0], b: params[1], k: params[2] }
        }
        "polynomial" => {
            let mut coeffs = params.to_vec();
            while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
                coeffs.pop();
            }
            if coeffs.is_empty() {
                return Err(ModelError::EmptyPolynomial);
            }
            MotilitySpec::Polynomial { coeffs }
        }
        other => return Err(ModelError::UnknownFamily(other.to_string())),
    };
    spec.check_positive()?;
    Ok(spec)
}

impl MotilitySpec {
    fn check_positive(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::PositivityViolation(msg));
        match *self {
            MotilitySpec::Constant { c } if c <= 0.0 => fail(format!("constant {c} ≤ 0")),
            MotilitySpec::ExpDecay { a, b } if b < 0.0 || a + b <= 0.0 => {
                fail(format!("a e^(-v) + b with a = {a}, b = {b}"))
            }
            MotilitySpec::Rational { a, b, k } => {
                // monotone in v for k ≠ 0, so positivity at v = 0 and v → ∞ suffices
                let ok = if k > 0.0 {
                    b >= 0.0 && a + b > 0.0
                } else if k == 0.0 {
                    a + b > 0.0
                } else {
                    a >= 0.0 && b >= 0.0 && a + b > 0.0
                };
                if ok {
                    Ok(())
                } else {
                    fail(format!("a/(1+v)^k + b with a = {a}, b = {b}, k = {k}"))
                }
            }
            MotilitySpec::Polynomial { ref coeffs } => {
                let lead = *coeffs.last().expect("nonempty");
                if lead <= 0.0 {
                    return fail(format!("leading coefficient {lead} ≤ 0"));
                }
                // Cauchy bound: every real root lies in |v| ≤ 1 + max |c_i / c_n|
                let cauchy = 1.0 + coeffs[..coeffs.len() - 1].iter().fold(0.0_f64, |m, c| m.max((c / lead).abs()));
                let hi = cauchy.max(POLY_SCREEN_MIN);
                for j in 0..=POLY_SCREEN_SAMPLES {
                    let v = hi * j as f64 / POLY_SCREEN_SAMPLES as f64;
                    let p = self.eval(v);
                    if p <= 0.0 {
                        return fail(format!("φ({v}) = {p}"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            MotilitySpec::Constant { c } => c,
            MotilitySpec::ExpDecay { a, b } => a * (-v).exp() + b,
            MotilitySpec::Rational { a, b, k } => a * (1.0 + v).powf(-k) + b,
            MotilitySpec::Polynomial { ref coeffs } => horner(coeffs, v),
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match *self {
            MotilitySpec::Constant { .. } => 0.0,
            MotilitySpec::ExpDecay { a, .. } => -a * (-v).exp(),
            MotilitySpec::Rational { a, k, .. } => -a * k * (1.0 + v).powf(-k - 1.0),
            MotilitySpec::Polynomial { ref coeffs } => horner(&poly_derivative(coeffs), v),
        }
    }

    pub fn second_derivative(&self, v: f64) -> f64 {
        match *self {
            MotilitySpec::Constant { .. } => 0.0,
            MotilitySpec::ExpDecay { a, .. } => a * (-v).exp(),
            MotilitySpec::Rational { a, k, .. } => a * k * (k + 1.0) * (1.0 + v).powf(-k - 2.0),
            MotilitySpec::Polynomial { ref coeffs } => {
                horner(&poly_derivative(&poly_derivative(coeffs)), v)
            }
        }
    }
}

fn horner(coeffs: &[f64], v: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * v + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect()
}

/// `c1 ≤ φ ≤ c2` and `|φ'| ≤ c3` on `[0, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotilityBounds {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub m: f64,
}

pub const BOUNDS_SAMPLES: usize = 4096;
pub const BOUNDS_MARGIN: f64 = 0.01;

/// Certify bounds for `φ` on `[0, M]` by dense sampling, refined at the
/// sampled sign changes of `φ'` and `φ''` (the interior extrema of `φ` and
/// `|φ'|`), then widened by a 1% margin.
pub fn certify_bounds(phi: &MotilitySpec, m: f64) -> MotilityBounds {
    let m = if m.is_finite() { m.max(0.0) } else { 0.0 };
    let samples: Vec<f64> = if m == 0.0 {
        vec![0.0]
    } else {
        (0..BOUNDS_SAMPLES).map(|j| m * j as f64 / (BOUNDS_SAMPLES - 1) as f64).collect()
    };

    let mut phi_pts = samples.clone();
    let mut dphi_pts = samples.clone();
    phi_pts.extend(sign_change_roots(&samples, |v| phi.derivative(v)));
    dphi_pts.extend(sign_change_roots(&samples, |v| phi.second_derivative(v)));

    let (lo, hi) = phi_pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        let p = phi.eval(v);
        (lo.min(p), hi.max(p))
    });
    let slope = dphi_pts.iter().fold(0.0_f64, |s, &v| s.max(phi.derivative(v).abs()));

    MotilityBounds {
        c1: lo * (1.0 - BOUNDS_MARGIN),
        c2: hi * (1.0 + BOUNDS_MARGIN),
        c3: slope * (1.0 + BOUNDS_MARGIN),
        m,
    }
}

fn sign_change_roots(samples: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut roots = Vec::new();
    for w in samples.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut fa, fb) = (f(a), f(b));
        if fa == 0.0 || fa * fb >= 0.0 {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = f(mid);
            if (fm < 0.0) == (fa < 0.0) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// `u v / (1 + ε u)` cellwise; exactly `u v` at `ε = 0`.
pub fn regularized_consumption(u: &Field, v: &Field, epsilon: f64) -> Result<Field, ModelError> {
    if u.grid() != v.grid() {
        return Err(GridError::GridMismatch.into());
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(ModelError::BadEpsilon(epsilon));
    }
    check_nonnegative("u", u)?;
    check_nonnegative("v", v)?;
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&u, &v)| consumption(u, v, epsilon))
        .collect();
    Ok(Field::new(u.grid(), values)?)
}

#[inline]
pub(crate) fn consumption_coefficient(u: f64, epsilon: f64) -> f64 {
    u / (1.0 + epsilon * u)
}

#[inline]
fn consumption(u: f64, v: f64, epsilon: f64) -> f64 {
    consumption_coefficient(u, epsilon) * v
}

fn check_nonnegative(name: &'static str, f: &Field) -> Result<(), ModelError> {
    match f.values().iter().enumerate().find(|(_, &x)| !(x >= 0.0)) {
        Some((cell, &value)) => Err(ModelError::NegativeValue { name, cell, value }),
        None => Ok(()),
    }
}

/// One Gaussian bump `amplitude · exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

/// Initial-data generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Constant {
        value: f64,
    },
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    Bumps {
        bumps: Vec<Bump>,
        #[serde(default)]
        background: f64,
    },
    /// Truncated cosine series with seeded random coefficients, shifted so
    /// its minimum equals `offset`.
    RandomSmooth {
        seed: u64,
        modes: usize,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

pub fn make_initial_data(grid: &Grid, data: &InitialData) -> Result<Field, ModelError> {
    let bad = |msg: String| Err(ModelError::InitialData(msg));
    let field = match data {
        InitialData::Constant { value } => {
            if !(*value >= 0.0 && value.is_finite()) {
                return bad(format!("constant value {value} must be nonnegative"));
            }
            Field::constant(grid, *value)
        }
        InitialData::Gaussian { center, width, amplitude } => {
            let bump = Bump { center: center.clone(), width: *width, amplitude: *amplitude };
            check_bump(grid, &bump)?;
            Field::from_fn(grid, |x| eval_bump(&bump, x))
        }
        InitialData::Bumps { bumps, background } => {
            if bumps.is_empty() {
                return bad("bump list is empty".into());
            }
            if !(*background >= 0.0) {
                return bad(format!("background {background} must be nonnegative"));
            }
            for b in bumps {
                check_bump(grid, b)?;
            }
            Field::from_fn(grid, |x| background + bumps.iter().map(|b| eval_bump(b, x)).sum::<f64>())
        }
        InitialData::RandomSmooth { seed, modes, amplitude, offset } => {
            if *modes == 0 {
                return bad("random_smooth needs at least one mode".into());
            }
            if !(*amplitude >= 0.0 && *offset >= 0.0) {
                return bad("random_smooth amplitude and offset must be nonnegative".into());
            }
            random_smooth(grid, *seed, *modes, *amplitude, *offset)
        }
    };
    Ok(field)
}

fn check_bump(grid: &Grid, b: &Bump) -> Result<(), ModelError> {
    if b.center.len() != grid.dim() {
        return Err(ModelError::InitialData(format!(
            "bump center has {} coordinates on a {}-dimensional grid",
            b.center.len(),
            grid.dim()
        )));
    }
    if !(b.width > 0.0) || !(b.amplitude >= 0.0) {
        return Err(ModelError::InitialData(format!(
            "bump width {} must be positive and amplitude {} nonnegative",
            b.width, b.amplitude
        )));
    }
    Ok(())
}

fn eval_bump(b: &Bump, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(&b.center).map(|(xi, ci)| (xi - ci).powi(2)).sum();
    b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
}

fn random_smooth(grid: &Grid, seed: u64, modes: usize, amplitude: f64, offset: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let per_axis = modes + 1;
    let count = per_axis.pow(dim as u32);
    let mut terms = Vec::with_capacity(count);
    for flat in 1..count {
        let mut k = [0usize; 3];
        let mut rest = flat;
        for slot in k.iter_mut().take(dim) {
            *slot = rest % per_axis;
            rest /= per_axis;
        }
        let k2: usize = k.iter().map(|x| x * x).sum();
        let coeff = rng.gen_range(-1.0..1.0) / (1.0 + k2 as f64);
        terms.push((k, coeff));
    }
    let raw = Field::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, c)| {
                c * (0..dim)
                    .map(|a| (std::f64::consts::PI * k[a] as f64 * x[a] / grid.extents()[a]).cos())
                    .product::<f64>()
            })
            .sum()
    });
    let min = raw.min();
    raw.map(|v| offset + amplitude * (v - min))
}

/// Grid, motility, initial data and regularization parameter. `epsilon = 0`
/// is the unregularized system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub phi: MotilitySpec,
    pub u0: Field,
    pub v0: Field,
    pub epsilon: f64,
}

impl ProblemSpec {
    pub fn new(
        grid: Grid,
        phi: MotilitySpec,
        u0: Field,
        v0: Field,
        epsilon: f64,
    ) -> Result<Self, ModelError> {
        grid.check(&u0)?;
        grid.check(&v0)?;
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(ModelError::BadEpsilon(epsilon));
        }
        check_nonnegative("u0", &u0)?;
        check_nonnegative("v0", &v0)?;
        if !(u0.integral() > 0.0) {
            return Err(ModelError::ZeroMass);
        }
        Ok(ProblemSpec { grid, phi, u0, v0, epsilon })
    }

    /// Bounds for `φ` on `[0, ‖v0‖∞]`, the only range `v` ever visits.
    pub fn motility_bounds(&self) -> MotilityBounds {
        certify_bounds(&self.phi, self.v0.max())
    }

    /// `ū0 = ∫u0 / |Ω|`.
    pub fn mean_u0(&self) -> f64 {
        self.u0.integral() / self.grid.volume()
    }
}
