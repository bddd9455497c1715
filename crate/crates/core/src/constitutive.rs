//! Scalar constitutive laws: the surface-tension equation of state, the
//! entropy it induces, and the mobilities and potentials of the regularized
//! system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Exponent of the mobility budget `G a2(r)^2 <= ETA r a1(r)`.
pub const ETA: f64 = 0.75;

/// Default convex weight, midway in `(ETA, 1)`.
pub const DEFAULT_ETA1: f64 = 0.875;

/// Tolerance of the adaptive quadrature used when no closed form exists.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogSign {
    Plus,
    Minus,
}

impl LogSign {
    fn value(self) -> f64 {
        match self {
            LogSign::Plus => 1.0,
            LogSign::Minus => -1.0,
        }
    }
}

/// Surface tension as a function of surfactant concentration.
///
/// Every model carries `sigma0 <= -sigma' <= sigma_inf` on `[0, gamma_max]`;
/// evaluations outside that range are rejected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SigmaModel {
    /// `sigma_s - beta r`
    Linear { sigma_s: f64, beta: f64 },
    /// `sigma_s - beta ln(1 +/- r / gamma_inf)`, restricted to `[0, gamma_max]`.
    Logarithmic {
        sigma_s: f64,
        beta: f64,
        gamma_inf: f64,
        sign: LogSign,
        gamma_max: f64,
    },
}

impl SigmaModel {
    pub fn linear(sigma_s: f64, beta: f64) -> Result<Self> {
        let m = SigmaModel::Linear { sigma_s, beta };
        m.validate()?;
        Ok(m)
    }

    pub fn logarithmic(
        sigma_s: f64,
        beta: f64,
        gamma_inf: f64,
        sign: LogSign,
        gamma_max: f64,
    ) -> Result<Self> {
        let m = SigmaModel::Logarithmic {
            sigma_s,
            beta,
            gamma_inf,
            sign,
            gamma_max,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        match *self {
            SigmaModel::Linear { sigma_s, beta } => {
                if !(sigma_s.is_finite() && sigma_s > 0.0) {
                    return bad(format!("sigma(0) = {sigma_s} must be positive"));
                }
                if !(beta.is_finite() && beta > 0.0) {
                    return bad(format!("linear sigma needs beta > 0, got {beta}"));
                }
            }
            SigmaModel::Logarithmic {
                sigma_s,
                beta,
                gamma_inf,
                sign,
                gamma_max,
            } => {
                if !(sigma_s.is_finite() && sigma_s > 0.0) {
                    return bad(format!("sigma(0) = {sigma_s} must be positive"));
                }
                if !(gamma_inf.is_finite() && gamma_inf > 0.0) {
                    return bad(format!("gamma_inf must be positive, got {gamma_inf}"));
                }
                if !(gamma_max.is_finite() && gamma_max > 0.0) {
                    return bad(format!(
                        "logarithmic sigma needs a finite gamma_max > 0, got {gamma_max}"
                    ));
                }
                match sign {
                    LogSign::Plus if !(beta.is_finite() && beta > 0.0) => {
                        return bad(format!(
                            "sigma_s - beta ln(1 + r/gamma_inf) is decreasing only for beta > 0, got {beta}"
                        ));
                    }
                    LogSign::Minus => {
                        if !(beta.is_finite() && beta < 0.0) {
                            return bad(format!(
                                "sigma_s - beta ln(1 - r/gamma_inf) is decreasing only for beta < 0, got {beta}"
                            ));
                        }
                        if gamma_inf <= 1.0 {
                            return bad(format!(
                                "the entropy is normalized at r = 1, so gamma_inf = {gamma_inf} must exceed 1"
                            ));
                        }
                        if gamma_max >= gamma_inf {
                            return bad(format!(
                                "gamma_max = {gamma_max} must stay below gamma_inf = {gamma_inf}"
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        match self {
            SigmaModel::Linear { .. } => "linear sigma",
            SigmaModel::Logarithmic { .. } => "logarithmic sigma",
        }
    }

    pub fn gamma_max(&self) -> f64 {
        match *self {
            SigmaModel::Linear { .. } => f64::INFINITY,
            SigmaModel::Logarithmic { gamma_max, .. } => gamma_max,
        }
    }

    /// Infimum of `-sigma'` on the admissible range.
    pub fn sigma0(&self) -> f64 {
        match *self {
            SigmaModel::Linear { beta, .. } => beta,
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign: LogSign::Plus,
                gamma_max,
                ..
            } => beta / (gamma_inf + gamma_max),
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign: LogSign::Minus,
                ..
            } => -beta / gamma_inf,
        }
    }

    /// Supremum of `-sigma'` on the admissible range.
    pub fn sigma_inf(&self) -> f64 {
        match *self {
            SigmaModel::Linear { beta, .. } => beta,
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign: LogSign::Plus,
                ..
            } => beta / gamma_inf,
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign: LogSign::Minus,
                gamma_max,
                ..
            } => -beta / (gamma_inf - gamma_max),
        }
    }

    pub fn check(&self, r: f64) -> Result<()> {
        let max = self.gamma_max();
        if r.is_nan() || r < 0.0 || r > max {
            return Err(Error::Domain {
                model: self.name(),
                value: r,
                max,
            });
        }
        Ok(())
    }

    pub fn sigma(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.sigma_unchecked(r))
    }

    pub fn sigma_prime(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.sigma_prime_unchecked(r))
    }

    pub fn sigma_second(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.sigma_second_unchecked(r))
    }

    pub(crate) fn sigma_unchecked(&self, r: f64) -> f64 {
        match *self {
            SigmaModel::Linear { sigma_s, beta } => sigma_s - beta * r,
            SigmaModel::Logarithmic {
                sigma_s,
                beta,
                gamma_inf,
                sign,
                ..
            } => sigma_s - beta * (sign.value() * r / gamma_inf).ln_1p(),
        }
    }

    pub(crate) fn sigma_prime_unchecked(&self, r: f64) -> f64 {
        match *self {
            SigmaModel::Linear { beta, .. } => -beta,
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign,
                ..
            } => {
                let s = sign.value();
                -beta * s / (gamma_inf + s * r)
            }
        }
    }

    pub(crate) fn sigma_second_unchecked(&self, r: f64) -> f64 {
        match *self {
            SigmaModel::Linear { .. } => 0.0,
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign,
                ..
            } => {
                let s = sign.value();
                let d = gamma_inf + s * r;
                beta / (d * d)
            }
        }
    }

    /// `beta1'(r) = r |sigma'(r)|`.
    pub fn beta1_prime(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.beta1_prime_unchecked(r))
    }

    pub(crate) fn beta1_prime_unchecked(&self, r: f64) -> f64 {
        r * self.sigma_prime_unchecked(r).abs()
    }

    /// `beta1(r) = int_0^r rho |sigma'(rho)| d rho`.
    pub fn beta1(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(match *self {
            SigmaModel::Linear { beta, .. } => 0.5 * beta * r * r,
            SigmaModel::Logarithmic { .. } => {
                adaptive_simpson(&|rho| self.beta1_prime_unchecked(rho), 0.0, r, QUAD_TOL)
            }
        })
    }

    /// `phi'(r) = -int_1^r sigma'(rho) / rho d rho`; `-inf` at `r = 0`.
    pub fn phi_prime(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.phi_prime_unchecked(r))
    }

    pub(crate) fn phi_prime_unchecked(&self, r: f64) -> f64 {
        match *self {
            SigmaModel::Linear { beta, .. } => beta * r.ln(),
            SigmaModel::Logarithmic {
                beta,
                gamma_inf,
                sign,
                ..
            } => {
                let s = sign.value();
                beta * s / gamma_inf * (r.ln() - ((gamma_inf + s * r) / (gamma_inf + s)).ln())
            }
        }
    }

    /// Entropy with `phi'' = -sigma'/r` and `phi(1) = phi'(1) = 0`, extended
    /// continuously to `r = 0`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        Ok(self.phi_unchecked(r))
    }

    pub(crate) fn phi_unchecked(&self, r: f64) -> f64 {
        match *self {
            SigmaModel::Linear { beta, .. } => beta * entropy_kernel(r),
            SigmaModel::Logarithmic { .. } => {
                if r == 0.0 {
                    // int_0^1 rho phi''(rho) d rho
                    return self.sigma_unchecked(0.0) - self.sigma_unchecked(1.0);
                }
                // Taylor remainder at 1: phi(r) = int_1^r (r - rho) phi''(rho) d rho.
                let integrand = |rho: f64| (r - rho) * (-self.sigma_prime_unchecked(rho)) / rho;
                adaptive_simpson(&integrand, 1.0, r, QUAD_TOL)
            }
        }
    }
}

/// `r ln r - r + 1`, equal to `1` at `r = 0`.
pub fn entropy_kernel(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        r * r.ln() - r + 1.0
    }
}

/// `(r - sqrt_eps)^2 / 2`; `sqrt_eps = 0` gives the unregularized `r^2 / 2`.
pub fn a2(r: f64, sqrt_eps: f64) -> f64 {
    let d = r - sqrt_eps;
    0.5 * d * d
}

/// `r - eps`; `eps = 0` gives the identity.
pub fn b2(r: f64, eps: f64) -> f64 {
    r - eps
}

/// Physical constants, surface-tension law and regularization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Gravity.
    pub g: f64,
    /// Surface diffusion coefficient.
    pub d: f64,
    pub sigma: SigmaModel,
    /// Regularization parameter in `(0, 1)`.
    pub eps: f64,
    /// Convex weight in `(ETA, 1)`.
    pub eta1: f64,
}

impl ModelParams {
    pub fn new(g: f64, d: f64, sigma: SigmaModel, eps: f64, eta1: f64) -> Result<Self> {
        let p = Self {
            g,
            d,
            sigma,
            eps,
            eta1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::Param(format!("G must be positive, got {}", self.g)));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::Param(format!("D must be positive, got {}", self.d)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Param(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.eta1 > ETA && self.eta1 < 1.0) {
            return Err(Error::Param(format!(
                "eta1 must lie in ({ETA}, 1), got {}",
                self.eta1
            )));
        }
        self.sigma.validate()
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn sqrt_eps(&self) -> f64 {
        self.eps.sqrt()
    }

    /// `G r^3 / 3`
    pub fn a1(&self, r: f64) -> f64 {
        self.g * r * r * r / 3.0
    }

    pub fn a2_eps(&self, r: f64) -> f64 {
        a2(r, self.sqrt_eps())
    }

    pub fn b2_eps(&self, r: f64) -> f64 {
        b2(r, self.eps)
    }

    /// `eta1 s + (1 - eta1) r`
    pub fn alpha0(&self, r: f64, s: f64) -> f64 {
        self.eta1 * s + (1.0 - self.eta1) * r
    }

    /// `int_0^r sqrt(a1) = (2/5) sqrt(G/3) r^{5/2}`
    pub fn alpha1(&self, r: f64) -> f64 {
        0.4 * (self.g / 3.0).sqrt() * r * r * r.sqrt()
    }

    /// Primitive of `a1` vanishing at zero, `G r^4 / 12`.
    pub fn a1_primitive(&self, r: f64) -> f64 {
        self.g * r * r * r * r / 12.0
    }
}
