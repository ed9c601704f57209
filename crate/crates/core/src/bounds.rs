//! Interval bounds on the probability of causation.
//!
//! For an individual known to be exposed (`E = 1`) who went on to respond
//! (`R = 1`), the probability of causation is
//! `PC = P(R0 = 0 | R1 = 1)`, a functional of the joint law of the two
//! potential responses `(R0, R1)`. Only the marginal chances
//! `p1 = P(R1 = 1)` and `p0 = P(R0 = 1)` are ever estimable, so PC is
//! confined to the Fréchet interval
//!
//! ```text
//! max{0, 1 - p0/p1}  <=  PC  <=  min{1, (1 - p0)/p1}
//! ```
//!
//! When the exposure itself is uncertain the quantity of interest becomes
//! `PC* = PC x P(E = 1 | R = 1)`, bounded in terms of `phi = P(E = 1 | R = 1)`
//! and the prior exposure chance `theta = P(E = 1)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("{field} = {value} is not a probability in [0, 1]")]
    InvalidProbability { field: &'static str, value: f64 },
    #[error("risk ratio is undefined when both chances are zero")]
    UndefinedRatio,
    #[error("risk ratio must be a nonnegative number, got {0}")]
    InvalidRiskRatio(f64),
    #[error("conditioning event has zero chance ({0})")]
    DegenerateConditioning(&'static str),
    #[error("theta = 1 leaves no chance of non-exposure")]
    DegenerateTheta,
    #[error("joint entries sum to {0}, expected 1")]
    JointNotNormalized(f64),
    #[error("q11 = {q11} lies outside the feasible range [{lo}, {hi}]")]
    InfeasibleJoint { q11: f64, lo: f64, hi: f64 },
    #[error("interval [{lower}, {upper}] is not ordered inside [0, 1]")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("brute-force sweep needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
}

pub(crate) fn check_probability(field: &'static str, value: f64) -> Result<f64, BoundsError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(BoundsError::InvalidProbability { field, value })
    }
}

/// The two potential-response chances for an exposed individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalChances {
    p1: f64,
    p0: f64,
}

impl MarginalChances {
    /// `p1` is the chance of response under exposure, `p0` without it.
    pub fn new(p1: f64, p0: f64) -> Result<Self, BoundsError> {
        Ok(Self {
            p1: check_probability("p1", p1)?,
            p0: check_probability("p0", p0)?,
        })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// Range of `q11 = P(R0 = 1, R1 = 1)` compatible with these marginals.
    pub fn feasible_q11(&self) -> (f64, f64) {
        ((self.p0 + self.p1 - 1.0).max(0.0), self.p0.min(self.p1))
    }
}

/// Full joint law of `(R0, R1)`; `qij` is the chance of `R0 = i, R1 = j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialJoint {
    q00: f64,
    q01: f64,
    q10: f64,
    q11: f64,
}

impl PotentialJoint {
    pub fn new(q00: f64, q01: f64, q10: f64, q11: f64) -> Result<Self, BoundsError> {
        check_probability("q00", q00)?;
        check_probability("q01", q01)?;
        check_probability("q10", q10)?;
        check_probability("q11", q11)?;
        let sum = q00 + q01 + q10 + q11;
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(BoundsError::JointNotNormalized(sum));
        }
        Ok(Self { q00, q01, q10, q11 })
    }

    /// The joint with the given marginals and `P(R0 = 1, R1 = 1) = q11`.
    pub fn from_marginals(m: MarginalChances, q11: f64) -> Result<Self, BoundsError> {
        let (lo, hi) = m.feasible_q11();
        if !(q11 >= lo - SIMPLEX_TOL && q11 <= hi + SIMPLEX_TOL) {
            return Err(BoundsError::InfeasibleJoint { q11, lo, hi });
        }
        let q11 = q11.clamp(lo, hi);
        let q01 = (m.p1 - q11).max(0.0);
        let q10 = (m.p0 - q11).max(0.0);
        let q00 = (1.0 - m.p1 - m.p0 + q11).max(0.0);
        Self::new(q00, q01, q10, q11)
    }

    /// Cell chances in the order `(q00, q01, q10, q11)`.
    pub fn cells(&self) -> [f64; 4] {
        [self.q00, self.q01, self.q10, self.q11]
    }

    pub fn q00(&self) -> f64 {
        self.q00
    }

    pub fn q01(&self) -> f64 {
        self.q01
    }

    pub fn q10(&self) -> f64 {
        self.q10
    }

    pub fn q11(&self) -> f64 {
        self.q11
    }

    pub fn marginals(&self) -> MarginalChances {
        MarginalChances {
            p1: (self.q01 + self.q11).min(1.0),
            p0: (self.q10 + self.q11).min(1.0),
        }
    }
}

/// A closed sub-interval of `[0, 1]` known to contain a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyInterval {
    lower: f64,
    upper: f64,
}

impl UncertaintyInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, BoundsError> {
        let ordered = lower.is_finite() && upper.is_finite() && 0.0 <= lower && lower <= upper && upper <= 1.0;
        if ordered {
            Ok(Self { lower, upper })
        } else {
            Err(BoundsError::InvalidInterval { lower, upper })
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

impl fmt::Display for UncertaintyInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lower, self.upper)
    }
}

/// `phi = P(E = 1 | R = 1)` and the prior exposure chance `theta = P(E = 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExposureChances {
    phi: f64,
    theta: f64,
}

impl ExposureChances {
    pub fn new(phi: f64, theta: f64) -> Result<Self, BoundsError> {
        Ok(Self {
            phi: check_probability("phi", phi)?,
            theta: check_probability("theta", theta)?,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `psi = P(E = 0 | R = 1)`.
    pub fn psi(&self) -> f64 {
        1.0 - self.phi
    }
}

/// Causal risk ratio `p1 / p0`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskRatio(f64);

impl RiskRatio {
    pub fn new(value: f64) -> Result<Self, BoundsError> {
        if value.is_nan() || value < 0.0 {
            Err(BoundsError::InvalidRiskRatio(value))
        } else {
            Ok(Self(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

pub fn risk_ratio(m: MarginalChances) -> Result<RiskRatio, BoundsError> {
    match (m.p1, m.p0) {
        (p1, p0) if p0 == 0.0 && p1 == 0.0 => Err(BoundsError::UndefinedRatio),
        (_, 0.0) => Ok(RiskRatio(f64::INFINITY)),
        (p1, p0) => Ok(RiskRatio(p1 / p0)),
    }
}

/// `max(0, 1 - 1/rr)`; exceeds one half exactly when `rr > 2`.
pub fn pc_lower(rr: RiskRatio) -> f64 {
    if rr.is_infinite() {
        return 1.0;
    }
    (1.0 - 1.0 / rr.0).max(0.0)
}

/// Sharp bounds on PC from the two marginal chances.
pub fn pc_bounds(m: MarginalChances) -> Result<UncertaintyInterval, BoundsError> {
    if m.p1 == 0.0 {
        return Err(BoundsError::DegenerateConditioning("p1 = 0"));
    }
    let lower = pc_lower(risk_ratio(m)?);
    let upper = if m.p1 + m.p0 <= 1.0 {
        1.0
    } else {
        ((1.0 - m.p0) / m.p1).min(1.0)
    };
    // Rounding in the two quotients can cross by an ulp when p1 + p0 is near 1.
    UncertaintyInterval::new(lower.min(upper), upper)
}

/// Same lower bound as [`pc_bounds`] with the upper bound fixed at 1.
pub fn pc_bounds_simple(m: MarginalChances) -> Result<UncertaintyInterval, BoundsError> {
    let sharp = pc_bounds(m)?;
    UncertaintyInterval::new(sharp.lower, 1.0)
}

/// Warning attached to a PC* interval whose inputs cannot come from one
/// coherent joint distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceWarning {
    /// `theta = 0` makes exposure impossible, yet `phi > 0`.
    ExposureImpossible,
    /// The raw lower bound exceeded `phi` and was clamped.
    LowerClamped,
}

impl CoherenceWarning {
    pub fn code(&self) -> &'static str {
        match self {
            CoherenceWarning::ExposureImpossible => "W001",
            CoherenceWarning::LowerClamped => "W002",
        }
    }
}

/// PC* interval together with any coherence warning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcStarAssessment {
    pub interval: UncertaintyInterval,
    pub warning: Option<CoherenceWarning>,
}

/// Bounds on PC* computed from `phi`, its complement and `1 - theta`.
///
/// Taking the complements separately keeps the lower bound accurate when a
/// sampled chance sits within an ulp of 1.
pub(crate) fn pc_star_from_complements(phi: f64, psi: f64, theta_c: f64) -> (f64, f64, bool) {
    let raw = 1.0 - psi / theta_c;
    let lower = raw.max(0.0);
    if lower > phi {
        (phi, phi, true)
    } else {
        (lower, phi, false)
    }
}

pub fn pc_star_assess(e: ExposureChances) -> Result<PcStarAssessment, BoundsError> {
    if e.theta >= 1.0 {
        return Err(BoundsError::DegenerateTheta);
    }
    let (lower, upper, clamped) = pc_star_from_complements(e.phi, e.psi(), 1.0 - e.theta);
    let warning = if e.theta == 0.0 && e.phi > 0.0 {
        Some(CoherenceWarning::ExposureImpossible)
    } else if clamped {
        Some(CoherenceWarning::LowerClamped)
    } else {
        None
    };
    Ok(PcStarAssessment {
        interval: UncertaintyInterval::new(lower, upper)?,
        warning,
    })
}

/// Bounds on PC* = PC x phi under uncertain exposure.
pub fn pc_star_bounds(e: ExposureChances) -> Result<UncertaintyInterval, BoundsError> {
    pc_star_assess(e).map(|a| a.interval)
}

/// Scales a PC interval by the exposure probability `phi`.
pub fn pc_star_from_pc(pc: UncertaintyInterval, phi: f64) -> Result<UncertaintyInterval, BoundsError> {
    let phi = check_probability("phi", phi)?;
    UncertaintyInterval::new(pc.lower * phi, pc.upper * phi)
}

/// `P(R0 = 0 | R1 = 1)` read off a fully specified joint.
pub fn pc_from_joint(j: PotentialJoint) -> Result<f64, BoundsError> {
    let responders = j.q01 + j.q11;
    if responders <= 0.0 {
        return Err(BoundsError::DegenerateConditioning("q01 + q11 = 0"));
    }
    Ok((j.q01 / responders).min(1.0))
}

/// Range of PC over every joint compatible with `m`, found by sweeping `q11`
/// across its feasible range in `steps` evenly spaced points.
///
/// This path never touches the closed-form bounds and serves as their oracle.
pub fn brute_force_pc_range(m: MarginalChances, steps: usize) -> Result<UncertaintyInterval, BoundsError> {
    if m.p1 == 0.0 {
        return Err(BoundsError::DegenerateConditioning("p1 = 0"));
    }
    if steps < 2 {
        return Err(BoundsError::TooFewSteps(steps));
    }
    let (lo, hi) = m.feasible_q11();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let last = (steps - 1) as f64;
    for i in 0..steps {
        // Endpoints are hit exactly rather than through accumulated rounding.
        let q11 = match i {
            0 => lo,
            i if i == steps - 1 => hi,
            i => lo + (hi - lo) * (i as f64 / last),
        };
        let pc = pc_from_joint(PotentialJoint::from_marginals(m, q11)?)?;
        min = min.min(pc);
        max = max.max(pc);
    }
    UncertaintyInterval::new(min, max)
}
