//! Activations and their Gaussian derivative moments.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Moments whose magnitude stays below this are treated as vanishing when
/// locating `k2` and `k3`.
pub const MOMENT_ZERO: f64 = 1e-9;

const QUAD_TARGET: f64 = 1e-13;
const QUAD_MAX_DEPTH: u32 = 30;
// The Gaussian density at 14 standard deviations is below 1e-42.
const TAIL: f64 = 14.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// `max(x, 0) + alpha * min(x, 0)`.
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    /// `x² + x³`.
    Poly23,
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
}

impl ActivationKind {
    pub fn name(&self) -> String {
        match self {
            ActivationKind::Relu => "relu".into(),
            ActivationKind::LeakyRelu { alpha } if *alpha == 0.01 => "leaky_relu".into(),
            ActivationKind::LeakyRelu { alpha } => format!("leaky_relu:{alpha}"),
            ActivationKind::Tanh => "tanh".into(),
            ActivationKind::Sigmoid => "sigmoid".into(),
            ActivationKind::Poly23 => "poly23".into(),
            ActivationKind::Polynomial(c) if c.as_slice() == [0.0, 0.0, 1.0] => "square".into(),
            ActivationKind::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                format!("poly:{}", parts.join(","))
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    /// Accepts `relu`, `leaky_relu[:alpha]`, `tanh`, `sigmoid`, `poly23`,
    /// `square` and `poly:c0,c1,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || Error::contract(format!("unknown activation `{s}`"));
        match (head, arg) {
            ("relu", None) => Ok(ActivationKind::Relu),
            ("leaky_relu", None) => Ok(ActivationKind::LeakyRelu { alpha: 0.01 }),
            ("leaky_relu", Some(a)) => Ok(ActivationKind::LeakyRelu {
                alpha: a.parse().map_err(|_| bad())?,
            }),
            ("tanh", None) => Ok(ActivationKind::Tanh),
            ("sigmoid", None) => Ok(ActivationKind::Sigmoid),
            ("poly23", None) => Ok(ActivationKind::Poly23),
            ("square", None) => Ok(ActivationKind::Polynomial(vec![0.0, 0.0, 1.0])),
            ("poly", Some(list)) => list
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(ActivationKind::Polynomial),
            _ => Err(bad()),
        }
    }
}

/// An activation together with the moment constants the attack relies on.
///
/// `k2` is the first order `k ≥ 2` with a non-vanishing standard-normal
/// moment `E σ⁽ᵏ⁾(Z)`, `k3` the first such order `≥ 3`; `nu` and `lambda`
/// are the absolute moments at those orders. Either order is `None` when no
/// order up to 4 qualifies.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    k2: Option<u32>,
    k3: Option<u32>,
    nu: f64,
    lambda: f64,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Result<Self> {
        match &kind {
            ActivationKind::LeakyRelu { alpha } if !(0.0..1.0).contains(alpha) => {
                return Err(Error::contract(format!("leaky slope {alpha} outside [0, 1)")));
            }
            ActivationKind::Polynomial(c) if c.is_empty() || c.len() > 9 => {
                return Err(Error::contract("polynomial activations need 1 to 9 coefficients"));
            }
            ActivationKind::Polynomial(c) if c.iter().any(|x| !x.is_finite()) => {
                return Err(Error::contract("polynomial coefficients must be finite"));
            }
            _ => {}
        }
        let mut act = Activation {
            kind,
            k2: None,
            k3: None,
            nu: 0.0,
            lambda: 0.0,
        };
        let moments = [act.moment(2, 1.0)?, act.moment(3, 1.0)?, act.moment(4, 1.0)?];
        let first_from = |start: u32| {
            (start..=4)
                .find(|&k| moments[(k - 2) as usize].abs() > MOMENT_ZERO)
                .map(|k| (k, moments[(k - 2) as usize].abs()))
        };
        if let Some((k, v)) = first_from(2) {
            act.k2 = Some(k);
            act.nu = v;
        }
        if let Some((k, v)) = first_from(3) {
            act.k3 = Some(k);
            act.lambda = v;
        }
        Ok(act)
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu).expect("built-in activation")
    }

    pub fn leaky_relu() -> Self {
        Self::new(ActivationKind::LeakyRelu { alpha: 0.01 }).expect("built-in activation")
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh).expect("built-in activation")
    }

    pub fn sigmoid() -> Self {
        Self::new(ActivationKind::Sigmoid).expect("built-in activation")
    }

    pub fn poly23() -> Self {
        Self::new(ActivationKind::Poly23).expect("built-in activation")
    }

    /// `σ(x) = x²`, whose third and fourth Gaussian moments vanish.
    pub fn square() -> Self {
        Self::new(ActivationKind::Polynomial(vec![0.0, 0.0, 1.0])).expect("built-in activation")
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    pub fn k2(&self) -> Option<u32> {
        self.k2
    }

    pub fn k3(&self) -> Option<u32> {
        self.k3
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Polynomial activations are not globally Lipschitz and are exempt
    /// from the 1-Lipschitz scan.
    pub fn lipschitz_exempt(&self) -> bool {
        matches!(self.kind, ActivationKind::Poly23 | ActivationKind::Polynomial(_))
    }

    /// Slope of the piecewise-linear family on the negative half-line.
    pub fn leak(&self) -> Option<f64> {
        match self.kind {
            ActivationKind::Relu => Some(0.0),
            ActivationKind::LeakyRelu { alpha } => Some(alpha),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 0.5 * (1.0 + (0.5 * x).tanh()),
            ActivationKind::Poly23 => x * x * (1.0 + x),
            ActivationKind::Polynomial(c) => horner(c, x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.derivative(1, x)
    }

    /// Pointwise `σ⁽ᵏ⁾(x)` for `k ≤ 4`. For the piecewise-linear family the
    /// kink is ignored (orders ≥ 2 are zero away from the origin).
    pub fn derivative(&self, k: u32, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::Relu | ActivationKind::LeakyRelu { .. } => {
                let alpha = self.leak().unwrap_or(0.0);
                match k {
                    0 => self.eval(x),
                    1 if x > 0.0 => 1.0,
                    1 => alpha,
                    _ => 0.0,
                }
            }
            ActivationKind::Tanh => tanh_derivative(k, x),
            ActivationKind::Sigmoid if k == 0 => self.eval(x),
            ActivationKind::Sigmoid => 0.5f64.powi(k as i32 + 1) * tanh_derivative(k, 0.5 * x),
            ActivationKind::Poly23 => horner(&differentiate(&[0.0, 0.0, 1.0, 1.0], k), x),
            ActivationKind::Polynomial(c) => horner(&differentiate(c, k), x),
        }
    }

    /// `E σ⁽ᵏ⁾(Z)` for `Z ~ N(0, variance)` and `k ∈ {0,..,4}`.
    ///
    /// Orders at and above 2 of the piecewise-linear family are
    /// distributional, i.e. the Stein integrals `E[σ(Z) Hₖ(Z)]` scaled to
    /// the given variance. Moments that vanish by parity are returned as an
    /// exact zero.
    pub fn moment(&self, order: u32, variance: f64) -> Result<f64> {
        if order > 4 {
            return Err(Error::Unsupported(format!(
                "moment of order {order} for {}",
                self.name()
            )));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::contract(format!("moment variance must be positive, got {variance}")));
        }
        let v = variance;
        match &self.kind {
            ActivationKind::Relu | ActivationKind::LeakyRelu { .. } => {
                let alpha = self.leak().unwrap_or(0.0);
                let phi0 = 1.0 / (2.0 * PI * v).sqrt();
                Ok(match order {
                    0 => (1.0 - alpha) * v * phi0,
                    1 => 0.5 * (1.0 + alpha),
                    2 => (1.0 - alpha) * phi0,
                    3 => 0.0,
                    _ => -(1.0 - alpha) * phi0 / v,
                })
            }
            ActivationKind::Tanh => {
                // tanh⁽ᵏ⁾ is odd for even k
                if order.is_multiple_of(2) {
                    Ok(0.0)
                } else {
                    gaussian_quadrature(|x| tanh_derivative(order, x), v)
                }
            }
            ActivationKind::Sigmoid => match order {
                0 => Ok(0.5),
                k if k % 2 == 0 => Ok(0.0),
                k => {
                    let scale = 0.5f64.powi(k as i32 + 1);
                    gaussian_quadrature(|x| tanh_derivative(k, 0.5 * x), v).map(|m| scale * m)
                }
            },
            ActivationKind::Poly23 => Ok(polynomial_moment(&[0.0, 0.0, 1.0, 1.0], order, v)),
            ActivationKind::Polynomial(c) => Ok(polynomial_moment(c, order, v)),
        }
    }

    /// Largest finite-difference slope `|Δσ/Δx|` over a uniform grid.
    pub fn max_slope(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let step = (hi - lo) / (points.max(2) - 1) as f64;
        (0..points.max(2) - 1)
            .map(|i| {
                let x0 = lo + step * i as f64;
                ((self.eval(x0 + step) - self.eval(x0)) / step).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn differentiate(c: &[f64], k: u32) -> Vec<f64> {
    let mut out = c.to_vec();
    for _ in 0..k {
        if out.len() <= 1 {
            return vec![0.0];
        }
        out = out.iter().enumerate().skip(1).map(|(i, &ci)| ci * i as f64).collect();
    }
    out
}

fn polynomial_moment(c: &[f64], order: u32, v: f64) -> f64 {
    let p = differentiate(c, order);
    if p.iter().step_by(2).all(|&x| x == 0.0) {
        return 0.0;
    }
    // exact for degree ≤ 2n − 1
    let nodes = NonZeroUsize::new(p.len() / 2 + 1).expect("positive");
    let rule = GaussHermite::new(nodes);
    let s = (2.0 * v).sqrt();
    rule.integrate(|x| horner(&p, s * x)) / PI.sqrt()
}

/// `E f(Z)` for `Z ~ N(0, v)` and smooth bounded `f`, by adaptive
/// bisection on paired 10/20-point Gauss-Legendre rules.
fn gaussian_quadrature(f: impl Fn(f64) -> f64, v: f64) -> Result<f64> {
    let sd = v.sqrt();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let integrand = |z: f64| f(sd * z) * norm * (-0.5 * z * z).exp();
    let coarse = GaussLegendre::new(NonZeroUsize::new(10).expect("positive"));
    let fine = GaussLegendre::new(NonZeroUsize::new(20).expect("positive"));
    let mut total = 0.0;
    let mut pending = vec![(-TAIL, TAIL, 0u32)];
    while let Some((a, b, depth)) = pending.pop() {
        let lo = coarse.integrate(a, b, integrand);
        let hi = fine.integrate(a, b, integrand);
        let budget = QUAD_TARGET * (b - a) / (2.0 * TAIL);
        if (hi - lo).abs() <= budget {
            total += hi;
        } else if depth >= QUAD_MAX_DEPTH {
            return Err(Error::NotConverged {
                what: "Gaussian quadrature",
                iterations: depth as usize,
                residual: (hi - lo).abs(),
            });
        } else {
            let mid = 0.5 * (a + b);
            pending.push((mid, b, depth + 1));
            pending.push((a, mid, depth + 1));
        }
    }
    Ok(total)
}

/// Derivatives of tanh written in `t = tanh x` and `s = 1 − t²`.
fn tanh_derivative(k: u32, x: f64) -> f64 {
    let t = x.tanh();
    let s = 1.0 - t * t;
    match k {
        0 => t,
        1 => s,
        2 => -2.0 * t * s,
        3 => -2.0 * s * (1.0 - 3.0 * t * t),
        4 => 8.0 * t * s * (2.0 - 3.0 * t * t),
        _ => unreachable!("orders above 4 are rejected earlier"),
    }
}
