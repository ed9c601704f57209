//! Finite-population potential-outcome simulator.
//!
//! Individuals carry both potential responses `(R0, R1)` drawn from a known
//! joint, plus an exposure `E`. Because the simulator sees both responses it
//! can compute the true attributable fraction among exposed responders and
//! check it against the bounds an analyst would compute from the two study
//! arms. With exposure independent of `(R0, R1)` the bounds must hold; when
//! exposure depends on the potential responses they can fail.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, check_probability, BoundsError, MarginalChances, PotentialJoint, UncertaintyInterval};
use crate::rng::{substream, Channel};

const SIM_BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no exposed responders in the population")]
    NoExposedResponders,
    #[error("the {0} arm is empty")]
    EmptyArm(&'static str),
    #[error("population size must be positive")]
    EmptyPopulation,
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Chance of exposure for each potential-response cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureTable {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

impl ExposureTable {
    pub fn constant(theta: f64) -> Self {
        Self {
            e00: theta,
            e01: theta,
            e10: theta,
            e11: theta,
        }
    }

    /// Chances in cell order `(00, 01, 10, 11)` of `(R0, R1)`.
    pub fn cells(&self) -> [f64; 4] {
        [self.e00, self.e01, self.e10, self.e11]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    /// Exposure independent of the potential responses.
    Exogenous { theta: f64 },
    /// Exposure chance depends on the `(R0, R1)` cell.
    Confounded(ExposureTable),
}

impl Exposure {
    pub fn table(&self) -> ExposureTable {
        match *self {
            Exposure::Exogenous { theta } => ExposureTable::constant(theta),
            Exposure::Confounded(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub joint: PotentialJoint,
    pub exposure: Exposure,
    pub n: u64,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        // Joints arriving through serde skip the constructor checks.
        let [q00, q01, q10, q11] = self.joint.cells();
        PotentialJoint::new(q00, q01, q10, q11)?;
        for (name, e) in ["e00", "e01", "e10", "e11"].iter().zip(self.exposure.table().cells()) {
            check_probability(name, e)?;
        }
        if self.n == 0 {
            return Err(SimError::EmptyPopulation);
        }
        Ok(())
    }

    /// The same population with exposure made independent of `(R0, R1)` at
    /// the population-average exposure rate.
    pub fn exogenized(&self) -> Self {
        let table = self.exposure.table().cells();
        let theta: f64 = self.joint.cells().iter().zip(table).map(|(q, e)| q * e).sum();
        Self {
            exposure: Exposure::Exogenous {
                theta: theta.clamp(0.0, 1.0),
            },
            ..*self
        }
    }

    pub fn from_json(json: &str) -> Result<Self, SimError> {
        let spec: Self = serde_json::from_str(json).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Counts of individuals by `(E, R0, R1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PopulationTally {
    /// Indexed `[e][r0][r1]`.
    pub counts: [[[u64; 2]; 2]; 2],
    pub n: u64,
}

impl PopulationTally {
    pub fn count(&self, e: usize, r0: usize, r1: usize) -> u64 {
        self.counts[e][r0][r1]
    }

    fn merge(mut self, other: Self) -> Self {
        for e in 0..2 {
            for r0 in 0..2 {
                for r1 in 0..2 {
                    self.counts[e][r0][r1] += other.counts[e][r0][r1];
                }
            }
        }
        self.n += other.n;
        self
    }

    fn arm(&self, e: usize) -> u64 {
        self.counts[e].iter().flatten().sum()
    }

    /// Long-format CSV `e,r0,r1,count` preceded by a `# n=` header.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# n={}\ne,r0,r1,count\n", self.n);
        for e in 0..2 {
            for r0 in 0..2 {
                for r1 in 0..2 {
                    out.push_str(&format!("{e},{r0},{r1},{}\n", self.counts[e][r0][r1]));
                }
            }
        }
        out
    }
}

pub fn simulate(spec: &PopulationSpec) -> Result<PopulationTally, SimError> {
    spec.validate()?;
    let cumulative = {
        let [q00, q01, q10, _] = spec.joint.cells();
        [q00, q00 + q01, q00 + q01 + q10]
    };
    let exposure = spec.exposure.table().cells();
    let n = spec.n as usize;
    let blocks = n.div_ceil(SIM_BLOCK);
    let tally = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(spec.seed, Channel::Population, b as u64);
            let size = SIM_BLOCK.min(n - b * SIM_BLOCK);
            let mut t = PopulationTally {
                n: size as u64,
                ..Default::default()
            };
            for _ in 0..size {
                let u: f64 = rng.random();
                let cell = cumulative.iter().take_while(|&&c| u >= c).count();
                let e = usize::from(rng.random::<f64>() < exposure[cell]);
                t.counts[e][cell >> 1][cell & 1] += 1;
            }
            t
        })
        .reduce(PopulationTally::default, PopulationTally::merge);
    Ok(tally)
}

/// True `P(R0 = 0 | E = 1, R1 = 1)` in the simulated population.
pub fn empirical_pc(t: &PopulationTally) -> Result<f64, SimError> {
    let responders = t.count(1, 0, 1) + t.count(1, 1, 1);
    if responders == 0 {
        return Err(SimError::NoExposedResponders);
    }
    Ok(t.count(1, 0, 1) as f64 / responders as f64)
}

/// What a study would see: the response rate `R1` among the exposed and
/// `R0` among the unexposed.
pub fn empirical_marginals(t: &PopulationTally) -> Result<MarginalChances, SimError> {
    let exposed = t.arm(1);
    let unexposed = t.arm(0);
    if exposed == 0 {
        return Err(SimError::EmptyArm("exposed"));
    }
    if unexposed == 0 {
        return Err(SimError::EmptyArm("unexposed"));
    }
    let p1 = (t.count(1, 0, 1) + t.count(1, 1, 1)) as f64 / exposed as f64;
    let p0 = (t.count(0, 1, 0) + t.count(0, 1, 1)) as f64 / unexposed as f64;
    Ok(MarginalChances::new(p1, p0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub empirical_pc: f64,
    pub bounds_from_arms: UncertaintyInterval,
    pub contained: bool,
    pub tally: PopulationTally,
}

/// Simulates `spec`, bounds PC from the arm-wise response rates, and checks
/// whether the population's true PC falls inside.
pub fn sufficiency_violation_demo(spec: &PopulationSpec) -> Result<ContainmentReport, SimError> {
    let tally = simulate(spec)?;
    let pc = empirical_pc(&tally)?;
    let bounds = bounds::pc_bounds(empirical_marginals(&tally)?)?;
    Ok(ContainmentReport {
        empirical_pc: pc,
        bounds_from_arms: bounds,
        contained: bounds.contains(pc),
        tally,
    })
}
