//! Homogeneous coagulation kernels `K(x, y) = (x + y)^γ F(x / (x + y))`.
//!
//! Every kernel carries its pair of exponents `(γ, λ)`: `γ` is the degree of
//! homogeneity and `λ` is the near-origin exponent of the shape, `F(s) ~ s^{-λ}`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Tolerance used when comparing exponent combinations with their thresholds.
pub const FLAG_TOL: f64 = 1e-12;

/// Above this magnitude of `|p ln x|` the power is evaluated as `exp(sum of logs)`.
const LOG_DOMAIN_CUTOFF: f64 = 600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("exponents must be finite (gamma = {gamma}, lambda = {lambda})")]
    NonFinite { gamma: f64, lambda: f64 },
    #[error("gamma = {0} must be < 1")]
    GammaTooLarge(f64),
    #[error("gamma + lambda = {0} must be < 1")]
    SumTooLarge(f64),
    #[error("gamma + 2 lambda = {0} must be >= 0")]
    NegativeTailExponent(f64),
    #[error("the constant shape requires lambda = 0, got {0}")]
    ConstantWithLambda(f64),
    #[error("the KMR shape requires gamma + lambda = 0, got {0}")]
    KmrNotBalanced(f64),
    #[error("prefactor must be finite and positive, got {0}")]
    BadPrefactor(f64),
    #[error("kernel arguments must be finite and positive, got ({x}, {y})")]
    Domain { x: f64, y: f64 },
    #[error("shape argument must lie in (0, 1), got {0}")]
    ShapeDomain(f64),
    #[error("kernel value overflowed at ({x}, {y})")]
    Overflow { x: f64, y: f64 },
}

/// User supplied shape function `F` on `(0, 1)`.
#[derive(Clone)]
pub struct CustomShape(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl CustomShape {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    fn eval(&self, s: f64) -> f64 {
        (self.0)(s)
    }
}

impl fmt::Debug for CustomShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomShape(..)")
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    /// `F ≡ 1`, so `K = (x + y)^γ`.
    Constant,
    /// `K = x^{γ+λ} y^{-λ} + y^{γ+λ} x^{-λ}`.
    CanonicalProduct,
    /// `K = x^{-μ} + y^{-μ}` with `μ = λ = -γ`.
    Kmr,
    /// Arbitrary shape, symmetrized as `(F(s) + F(1 - s)) / 2`.
    Custom(CustomShape),
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Constant => "constant",
            Shape::CanonicalProduct => "canonical",
            Shape::Kmr => "kmr",
            Shape::Custom(_) => "custom",
        }
    }
}

/// Position of a quantity relative to a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Below,
    Equal,
    Above,
}

impl Side {
    pub fn classify(value: f64, threshold: f64) -> Side {
        if (value - threshold).abs() <= FLAG_TOL {
            Side::Equal
        } else if value < threshold {
            Side::Below
        } else {
            Side::Above
        }
    }
}

/// Derived flags that drive the regime classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelFlags {
    /// `γ` relative to `-1`.
    pub gamma_vs_minus_one: Side,
    /// `γ + λ` relative to `0`.
    pub sum_sign: Side,
    /// `γ + 2λ` relative to `1`.
    pub tail_vs_one: Side,
}

/// Product form `scale * (x^α y^β + x^β y^α)` used by the fast right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separable {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    gamma: f64,
    lambda: f64,
    shape: Shape,
    prefactor: f64,
    flags: KernelFlags,
}

impl KernelSpec {
    pub fn new(gamma: f64, lambda: f64, shape: Shape) -> Result<Self, KernelError> {
        if !gamma.is_finite() || !lambda.is_finite() {
            return Err(KernelError::NonFinite { gamma, lambda });
        }
        if gamma >= 1.0 {
            return Err(KernelError::GammaTooLarge(gamma));
        }
        let sum = gamma + lambda;
        if sum >= 1.0 {
            return Err(KernelError::SumTooLarge(sum));
        }
        let tail = gamma + 2.0 * lambda;
        if tail < -FLAG_TOL {
            return Err(KernelError::NegativeTailExponent(tail));
        }
        match shape {
            Shape::Constant if lambda.abs() > FLAG_TOL => {
                return Err(KernelError::ConstantWithLambda(lambda))
            }
            Shape::Kmr if sum.abs() > FLAG_TOL => return Err(KernelError::KmrNotBalanced(sum)),
            _ => {}
        }
        let flags = KernelFlags {
            gamma_vs_minus_one: Side::classify(gamma, -1.0),
            sum_sign: Side::classify(sum, 0.0),
            tail_vs_one: Side::classify(tail, 1.0),
        };
        Ok(Self {
            gamma,
            lambda,
            shape,
            prefactor: 1.0,
            flags,
        })
    }

    pub fn constant() -> Self {
        Self::new(0.0, 0.0, Shape::Constant).expect("constant kernel is valid")
    }

    pub fn canonical(gamma: f64, lambda: f64) -> Result<Self, KernelError> {
        Self::new(gamma, lambda, Shape::CanonicalProduct)
    }

    /// `K = x^{-μ} + y^{-μ}`.
    pub fn kmr(mu: f64) -> Result<Self, KernelError> {
        Self::new(-mu, mu, Shape::Kmr)
    }

    pub fn custom(
        gamma: f64,
        lambda: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, KernelError> {
        Self::new(gamma, lambda, Shape::Custom(CustomShape::new(f)))
    }

    /// Multiplies the kernel by a constant factor.
    pub fn with_prefactor(mut self, prefactor: f64) -> Result<Self, KernelError> {
        if !(prefactor.is_finite() && prefactor > 0.0) {
            return Err(KernelError::BadPrefactor(prefactor));
        }
        self.prefactor = prefactor;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `γ + λ`.
    pub fn sum_exponent(&self) -> f64 {
        self.gamma + self.lambda
    }

    /// `γ + 2λ`.
    pub fn tail_exponent(&self) -> f64 {
        self.gamma + 2.0 * self.lambda
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn flags(&self) -> KernelFlags {
        self.flags
    }

    pub fn separable(&self) -> Option<Separable> {
        match self.shape {
            Shape::CanonicalProduct | Shape::Kmr => Some(Separable {
                alpha: self.gamma + self.lambda,
                beta: -self.lambda,
                scale: self.prefactor,
            }),
            Shape::Constant if self.gamma == 0.0 => Some(Separable {
                alpha: 0.0,
                beta: 0.0,
                scale: 0.5 * self.prefactor,
            }),
            _ => None,
        }
    }

    /// Checked evaluation of `K(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
            return Err(KernelError::Domain { x, y });
        }
        let v = self.rate(x, y);
        if !v.is_finite() {
            return Err(KernelError::Overflow { x, y });
        }
        Ok(v)
    }

    /// Unchecked evaluation for positive finite arguments. Symmetric to the bit.
    #[inline]
    pub fn rate(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let v = match &self.shape {
            Shape::Constant => {
                if self.gamma == 0.0 {
                    1.0
                } else {
                    pow(lo + hi, self.gamma)
                }
            }
            Shape::CanonicalProduct | Shape::Kmr => {
                let a = self.gamma + self.lambda;
                let b = -self.lambda;
                mixed(hi, a, lo, b) + mixed(lo, a, hi, b)
            }
            Shape::Custom(f) => {
                let s = lo / (lo + hi);
                pow(lo + hi, self.gamma) * 0.5 * (f.eval(s) + f.eval(1.0 - s))
            }
        };
        self.prefactor * v
    }

    /// Checked evaluation of the (symmetrized) shape `F(s)`.
    pub fn shape_value(&self, s: f64) -> Result<f64, KernelError> {
        if !(s > 0.0 && s < 1.0) {
            return Err(KernelError::ShapeDomain(s));
        }
        let t = 1.0 - s;
        let v = match &self.shape {
            Shape::Constant => 1.0,
            Shape::CanonicalProduct | Shape::Kmr => {
                let a = self.gamma + self.lambda;
                let b = -self.lambda;
                mixed(s, a, t, b) + mixed(t, a, s, b)
            }
            Shape::Custom(f) => 0.5 * (f.eval(s) + f.eval(t)),
        };
        Ok(self.prefactor * v)
    }
}

#[inline]
fn pow(x: f64, p: f64) -> f64 {
    if (p * x.ln()).abs() > LOG_DOMAIN_CUTOFF {
        (p * x.ln()).exp()
    } else {
        x.powf(p)
    }
}

/// `x^a y^b`, through logs when either factor alone would leave the f64 range.
#[inline]
fn mixed(x: f64, a: f64, y: f64, b: f64) -> f64 {
    let la = a * x.ln();
    let lb = b * y.ln();
    if la.abs() > LOG_DOMAIN_CUTOFF || lb.abs() > LOG_DOMAIN_CUTOFF {
        (la + lb).exp()
    } else {
        x.powf(a) * y.powf(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_value() {
        let k = KernelSpec::canonical(-0.5, 1.0).unwrap();
        let v = k.eval(1.0, 2.0).unwrap();
        assert!((v - (0.5 + 2f64.powf(0.5))).abs() < 1e-14);
    }

    #[test]
    fn kmr_matches_canonical() {
        let a = KernelSpec::kmr(0.7).unwrap();
        let b = KernelSpec::canonical(-0.7, 0.7).unwrap();
        for &(x, y) in &[(1.0, 1.0), (3.0, 17.0), (1e5, 2.0)] {
            assert_eq!(a.eval(x, y).unwrap(), b.eval(x, y).unwrap());
        }
    }

    #[test]
    fn flags() {
        let k = KernelSpec::canonical(-1.0, 1.0).unwrap();
        assert_eq!(k.flags().gamma_vs_minus_one, Side::Equal);
        assert_eq!(k.flags().sum_sign, Side::Equal);
        assert_eq!(k.flags().tail_vs_one, Side::Equal);
        let k = KernelSpec::canonical(-1.5, 1.7).unwrap();
        assert_eq!(k.flags().gamma_vs_minus_one, Side::Below);
        assert_eq!(k.flags().sum_sign, Side::Above);
        assert_eq!(k.flags().tail_vs_one, Side::Above);
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            KernelSpec::canonical(1.0, 0.0),
            Err(KernelError::GammaTooLarge(_))
        ));
        assert!(matches!(
            KernelSpec::canonical(0.5, 0.6),
            Err(KernelError::SumTooLarge(_))
        ));
        assert!(matches!(
            KernelSpec::canonical(0.5, -0.3),
            Err(KernelError::NegativeTailExponent(_))
        ));
        assert!(matches!(
            KernelSpec::new(0.0, 0.5, Shape::Constant),
            Err(KernelError::ConstantWithLambda(_))
        ));
        assert!(matches!(
            KernelSpec::new(-0.5, 0.7, Shape::Kmr),
            Err(KernelError::KmrNotBalanced(_))
        ));
        let k = KernelSpec::constant();
        assert!(k.eval(0.0, 1.0).is_err());
        assert!(k.eval(f64::NAN, 1.0).is_err());
        assert!(k.shape_value(1.0).is_err());
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        let k = KernelSpec::canonical(-1.5, 2.0).unwrap();
        let v = k.eval(1e300, 1.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(matches!(
            k.eval(1e-300, 1.0),
            Err(KernelError::Overflow { .. })
        ));
    }

    #[test]
    fn custom_is_symmetrized() {
        let k = KernelSpec::custom(0.0, 0.5, |s| s.powf(-0.5)).unwrap();
        assert_eq!(k.rate(2.0, 5.0), k.rate(5.0, 2.0));
        let f = k.shape_value(0.25).unwrap();
        assert!((f - 0.5 * (2.0 + (0.75f64).powf(-0.5))).abs() < 1e-14);
    }

    #[test]
    fn separable_forms() {
        let s = KernelSpec::constant().separable().unwrap();
        assert_eq!(s.scale, 0.5);
        assert!(KernelSpec::new(0.5, 0.0, Shape::Constant)
            .unwrap()
            .separable()
            .is_none());
        let s = KernelSpec::canonical(-0.5, 1.0).unwrap().separable().unwrap();
        assert_eq!((s.alpha, s.beta), (0.5, -1.0));
    }
}
