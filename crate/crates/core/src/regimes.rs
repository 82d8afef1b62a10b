//! Long-time regime classification of `(γ, λ)` and the associated scaling laws.
//!
//! All prefactors are 1: only exponents and logarithmic powers are predicted.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{KernelSpec, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("time must exceed {min}, got {t}")]
    TimeTooSmall { t: f64, min: f64 },
    #[error("the flux-limited length law needs the moment M_(gamma+lambda)")]
    MissingMoment,
    #[error("moment value must be finite and positive, got {0}")]
    BadMoment(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    StationarySubcritical,
    StandardSelfSimilar,
    DiracLog,
    DiracLinear,
    LogFlux,
    CriticalAboveMinusOne,
    CriticalConjecture,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::StationarySubcritical,
        Regime::StandardSelfSimilar,
        Regime::DiracLog,
        Regime::DiracLinear,
        Regime::LogFlux,
        Regime::CriticalAboveMinusOne,
        Regime::CriticalConjecture,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::StationarySubcritical => "StationarySubcritical",
            Regime::StandardSelfSimilar => "StandardSelfSimilar",
            Regime::DiracLog => "DiracLog",
            Regime::DiracLinear => "DiracLinear",
            Regime::LogFlux => "LogFlux",
            Regime::CriticalAboveMinusOne => "CriticalAboveMinusOne",
            Regime::CriticalConjecture => "CriticalConjecture",
        }
    }
}

/// `t^power (ln t)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Law {
    pub power: f64,
    pub log_power: f64,
}

impl Law {
    pub const CONSTANT: Law = Law {
        power: 0.0,
        log_power: 0.0,
    };

    pub fn power(power: f64) -> Self {
        Self {
            power,
            log_power: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = t.powf(self.power);
        if self.log_power != 0.0 {
            v *= t.ln().powf(self.log_power);
        }
        v
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.power == 0.0, self.log_power == 0.0) {
            (true, true) => write!(f, "1"),
            (false, true) => write!(f, "t^{}", self.power),
            (true, false) => write!(f, "(ln t)^{}", self.log_power),
            (false, false) => write!(f, "t^{} (ln t)^{}", self.power, self.log_power),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentBehavior {
    DecayingPower,
    Constant,
    IncreasingPower,
    LogDecaying,
    LogIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentLaw {
    pub law: Law,
    pub behavior: MomentBehavior,
}

impl MomentLaw {
    fn from_law(law: Law) -> Self {
        let behavior = if law.power < 0.0 {
            MomentBehavior::DecayingPower
        } else if law.power > 0.0 {
            MomentBehavior::IncreasingPower
        } else if law.log_power < 0.0 {
            MomentBehavior::LogDecaying
        } else if law.log_power > 0.0 {
            MomentBehavior::LogIncreasing
        } else {
            MomentBehavior::Constant
        };
        Self { law, behavior }
    }
}

/// `L(t)`. For the flux-limited regime `L = (t / M_{γ+λ})^flux_exponent`,
/// and `law` holds the same length with the logarithmic law for `M_{γ+λ}` substituted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthLaw {
    pub law: Law,
    pub flux_exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// `Φ(ξ) ~ ξ^{-(γ+3)/2}` near the origin.
    PowerLawTail,
    /// `Φ = 0` for small `ξ`.
    VanishingNearOrigin,
    Dirac,
    /// Closed-form profile supported on `(0, ξ*)`.
    CompactSupport,
    /// Near-origin behavior depends on the undetermined `M_{γ+λ}`.
    Conjectural,
}

/// Candidate near-origin behaviors on the critical line `γ + 2λ = 1`, `γ ≤ -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OriginCandidate {
    pub condition: &'static str,
    pub power: &'static str,
    pub log_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub gamma: f64,
    pub lambda: f64,
    pub length_law: LengthLaw,
    pub m0_law: MomentLaw,
    pub mgl_law: MomentLaw,
    pub profile: ProfileKind,
    pub conjectural: bool,
    pub origin_candidates: Vec<OriginCandidate>,
}

pub fn classify(k: &KernelSpec) -> RegimeReport {
    let g = k.gamma();
    let l = k.lambda();
    let flags = k.flags();
    let a = g + l;
    let p = g + 2.0 * l;
    let standard_l = Law::power(2.0 / (1.0 - g));
    let standard_m0 = Law::power(-(1.0 + g) / (1.0 - g));

    let regime = match flags.tail_vs_one {
        Side::Below => Regime::StationarySubcritical,
        Side::Equal => match flags.gamma_vs_minus_one {
            Side::Above => Regime::CriticalAboveMinusOne,
            _ => Regime::CriticalConjecture,
        },
        Side::Above => match flags.gamma_vs_minus_one {
            Side::Above => Regime::StandardSelfSimilar,
            Side::Equal => Regime::DiracLog,
            Side::Below => match flags.sum_sign {
                Side::Above => Regime::DiracLinear,
                _ => Regime::LogFlux,
            },
        },
    };

    let (length, m0, mgl, profile) = match regime {
        Regime::StationarySubcritical | Regime::StandardSelfSimilar => (
            LengthLaw {
                law: standard_l,
                flux_exponent: None,
            },
            standard_m0,
            Law::power((p - 1.0) / (1.0 - g)),
            if regime == Regime::StationarySubcritical {
                ProfileKind::PowerLawTail
            } else {
                ProfileKind::VanishingNearOrigin
            },
        ),
        Regime::DiracLog => (
            LengthLaw {
                law: Law {
                    power: 1.0,
                    log_power: 0.5,
                },
                flux_exponent: None,
            },
            Law {
                power: 0.0,
                log_power: -0.5,
            },
            Law {
                power: l - 1.0,
                log_power: (l - 2.0) / 2.0,
            },
            ProfileKind::Dirac,
        ),
        Regime::DiracLinear => (
            LengthLaw {
                law: Law::power(1.0),
                flux_exponent: None,
            },
            Law::CONSTANT,
            Law::power(a),
            ProfileKind::Dirac,
        ),
        Regime::LogFlux => {
            let e = 1.0 / (1.0 - a);
            (
                LengthLaw {
                    law: Law {
                        power: e,
                        log_power: -p / 2.0 * e,
                    },
                    flux_exponent: Some(e),
                },
                Law {
                    power: 1.0 - e,
                    log_power: p / 2.0 * e,
                },
                Law {
                    power: 0.0,
                    log_power: p / 2.0,
                },
                ProfileKind::CompactSupport,
            )
        }
        Regime::CriticalAboveMinusOne => (
            LengthLaw {
                law: standard_l,
                flux_exponent: None,
            },
            standard_m0,
            Law::CONSTANT,
            ProfileKind::VanishingNearOrigin,
        ),
        Regime::CriticalConjecture => (
            LengthLaw {
                law: standard_l,
                flux_exponent: None,
            },
            standard_m0,
            Law::CONSTANT,
            ProfileKind::Conjectural,
        ),
    };

    let origin_candidates = if regime == Regime::CriticalConjecture {
        vec![
            OriginCandidate {
                condition: "M = 1",
                power: "-(gamma+3)/2",
                log_power: -2.0,
            },
            OriginCandidate {
                condition: "M < 1",
                power: "-(gamma+3)/2 - (M^2 - 1)",
                log_power: 0.0,
            },
        ]
    } else {
        Vec::new()
    };

    RegimeReport {
        regime,
        gamma: g,
        lambda: l,
        length_law: length,
        m0_law: MomentLaw::from_law(m0),
        mgl_law: MomentLaw::from_law(mgl),
        profile,
        conjectural: regime == Regime::CriticalConjecture,
        origin_candidates,
    }
}

/// `L(t)`. For [`Regime::LogFlux`] the moment `M_{γ+λ}(t)` must be supplied.
pub fn predicted_length(r: &RegimeReport, t: f64, m_gl: Option<f64>) -> Result<f64, RegimeError> {
    if !(t > 1.0) {
        return Err(RegimeError::TimeTooSmall { t, min: 1.0 });
    }
    match r.length_law.flux_exponent {
        Some(e) => {
            let m = m_gl.ok_or(RegimeError::MissingMoment)?;
            if !(m.is_finite() && m > 0.0) {
                return Err(RegimeError::BadMoment(m));
            }
            Ok((t / m).powf(e))
        }
        None => Ok(r.length_law.law.eval(t)),
    }
}

/// Order-of-magnitude `(M_0(t), M_{γ+λ}(t))`, up to multiplicative constants.
pub fn predicted_moments(r: &RegimeReport, t: f64) -> Result<(f64, f64), RegimeError> {
    if !(t > std::f64::consts::E) {
        return Err(RegimeError::TimeTooSmall {
            t,
            min: std::f64::consts::E,
        });
    }
    Ok((r.m0_law.law.eval(t), r.mgl_law.law.eval(t)))
}
