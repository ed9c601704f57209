//! Beta credence distributions over the chances entering the bounds, and
//! seeded Monte-Carlo draws of the resulting random uncertainty interval.
//!
//! Two parameterisations are supported:
//!
//! * **generative**: independent chances `theta`, `p1`, `p0`; `phi` follows by
//!   Bayes' rule and the interval is the PC* interval for exposure `theta`.
//!   The lower bound is zero exactly when `p1 <= p0`, whatever `theta` is.
//! * **direct**: `phi` and `theta` are assessed separately and the interval is
//!   `pc_star_bounds(phi, theta)`. The upper bound is `phi` and so does not
//!   depend on the `theta` prior.
//!
//! Each chance is drawn from its own random stream, which makes both of those
//! invariances hold draw-for-draw under a fixed seed.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::{self, UncertaintyInterval};
use crate::rng::{substream, Channel, BLOCK_LEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("draw {index}: interval [{lower}, {upper}] is not ordered inside [0, 1]")]
    InvalidDraw { index: usize, lower: f64, upper: f64 },
    #[error("malformed draw file: {0}")]
    Format(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if positive(alpha) && positive(beta) {
            Ok(Self { alpha, beta })
        } else {
            Err(invalid(format!(
                "Beta({alpha}, {beta}) needs positive finite parameters"
            )))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Mean and standard deviation of a Beta distribution.
pub fn beta_moments(b: BetaParams) -> (f64, f64) {
    let s = b.alpha + b.beta;
    let var = b.alpha * b.beta / (s * s * (s + 1.0));
    (b.mean(), var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialData {
    successes: u64,
    trials: u64,
}

impl BinomialData {
    pub fn new(successes: u64, trials: u64) -> Result<Self, ModelError> {
        if successes > trials {
            return Err(invalid(format!("{successes} successes exceed {trials} trials")));
        }
        Ok(Self { successes, trials })
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }
}

/// Conjugate update of a Beta prior by binomial evidence.
pub fn posterior_update(prior: BetaParams, data: BinomialData) -> BetaParams {
    BetaParams {
        alpha: prior.alpha + data.successes as f64,
        beta: prior.beta + (data.trials - data.successes) as f64,
    }
}

/// A Beta prior with optional binomial evidence for one chance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChancePrior {
    pub prior: BetaParams,
    pub data: Option<BinomialData>,
}

impl ChancePrior {
    pub fn new(prior: BetaParams) -> Self {
        Self { prior, data: None }
    }

    pub fn with_data(prior: BetaParams, data: BinomialData) -> Self {
        Self {
            prior,
            data: Some(data),
        }
    }

    pub fn posterior(&self) -> BetaParams {
        match self.data {
            Some(d) => posterior_update(self.prior, d),
            None => self.prior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Generative,
    Direct,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Generative => "generative",
            Mode::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Generative {
        theta_prior: BetaParams,
        p1: ChancePrior,
        p0: ChancePrior,
    },
    Direct {
        theta_prior: BetaParams,
        phi: ChancePrior,
    },
}

impl ModelSpec {
    pub fn mode(&self) -> Mode {
        match self {
            ModelSpec::Generative { .. } => Mode::Generative,
            ModelSpec::Direct { .. } => Mode::Direct,
        }
    }

    pub fn theta_prior(&self) -> BetaParams {
        match self {
            ModelSpec::Generative { theta_prior, .. } | ModelSpec::Direct { theta_prior, .. } => *theta_prior,
        }
    }

    /// Same spec with a different prior on `theta`.
    pub fn with_theta_prior(&self, prior: BetaParams) -> Self {
        let mut spec = *self;
        match &mut spec {
            ModelSpec::Generative { theta_prior, .. } | ModelSpec::Direct { theta_prior, .. } => *theta_prior = prior,
        }
        spec
    }

    /// Hex SHA-256 of the canonical JSON form of the model (sampling
    /// parameters excluded).
    pub fn spec_hash(&self) -> String {
        let canonical = serde_json::to_string(&RawModel::from(self)).expect("model serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }
}

/// Sampling settings read alongside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSettings {
    pub n: usize,
    pub seed: Option<u64>,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            n: 50_000,
            seed: None,
            burn_in: 0,
            thin: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeta {
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    successes: i64,
    trials: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    mode: String,
    theta_prior: RawBeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p1_prior: Option<RawBeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p1_data: Option<RawData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p0_prior: Option<RawBeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p0_data: Option<RawData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi_prior: Option<RawBeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi_data: Option<RawData>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    theta_prior: RawBeta,
    #[serde(default)]
    p1_prior: Option<RawBeta>,
    #[serde(default)]
    p1_data: Option<RawData>,
    #[serde(default)]
    p0_prior: Option<RawBeta>,
    #[serde(default)]
    p0_data: Option<RawData>,
    #[serde(default)]
    phi_prior: Option<RawBeta>,
    #[serde(default)]
    phi_data: Option<RawData>,
    #[serde(default)]
    n: Option<i64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    burn_in: Option<i64>,
    #[serde(default)]
    thin: Option<i64>,
}

impl RawConfig {
    fn model(&self) -> RawModel {
        RawModel {
            mode: self.mode.clone(),
            theta_prior: self.theta_prior,
            p1_prior: self.p1_prior,
            p1_data: self.p1_data,
            p0_prior: self.p0_prior,
            p0_data: self.p0_data,
            phi_prior: self.phi_prior,
            phi_data: self.phi_data,
        }
    }
}

fn raw_beta(b: BetaParams) -> RawBeta {
    RawBeta {
        alpha: b.alpha,
        beta: b.beta,
    }
}

fn raw_data(d: Option<BinomialData>) -> Option<RawData> {
    d.map(|d| RawData {
        successes: d.successes as i64,
        trials: d.trials as i64,
    })
}

impl From<&ModelSpec> for RawModel {
    fn from(spec: &ModelSpec) -> Self {
        let mut raw = RawModel {
            mode: spec.mode().as_str().to_string(),
            theta_prior: raw_beta(spec.theta_prior()),
            p1_prior: None,
            p1_data: None,
            p0_prior: None,
            p0_data: None,
            phi_prior: None,
            phi_data: None,
        };
        match spec {
            ModelSpec::Generative { p1, p0, .. } => {
                raw.p1_prior = Some(raw_beta(p1.prior));
                raw.p1_data = raw_data(p1.data);
                raw.p0_prior = Some(raw_beta(p0.prior));
                raw.p0_data = raw_data(p0.data);
            }
            ModelSpec::Direct { phi, .. } => {
                raw.phi_prior = Some(raw_beta(phi.prior));
                raw.phi_data = raw_data(phi.data);
            }
        }
        raw
    }
}

fn chance(name: &str, prior: Option<RawBeta>, data: Option<RawData>) -> Result<ChancePrior, ModelError> {
    let prior = prior.ok_or_else(|| invalid(format!("missing {name}_prior")))?;
    let prior = BetaParams::new(prior.alpha, prior.beta).map_err(|e| invalid(format!("{name}_prior: {e}")))?;
    let data = match data {
        None => None,
        Some(d) => {
            if d.successes < 0 || d.trials < 0 {
                return Err(invalid(format!("{name}_data: counts must be nonnegative")));
            }
            Some(
                BinomialData::new(d.successes as u64, d.trials as u64)
                    .map_err(|e| invalid(format!("{name}_data: {e}")))?,
            )
        }
    };
    Ok(ChancePrior { prior, data })
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, ModelError> {
        let theta_prior = BetaParams::new(raw.theta_prior.alpha, raw.theta_prior.beta)
            .map_err(|e| invalid(format!("theta_prior: {e}")))?;
        let forbid = |present: bool, name: &str, mode: &str| {
            if present {
                Err(invalid(format!("field {name} is not allowed in {mode} mode")))
            } else {
                Ok(())
            }
        };
        match raw.mode.as_str() {
            "generative" => {
                forbid(raw.phi_prior.is_some(), "phi_prior", "generative")?;
                forbid(raw.phi_data.is_some(), "phi_data", "generative")?;
                Ok(ModelSpec::Generative {
                    theta_prior,
                    p1: chance("p1", raw.p1_prior, raw.p1_data)?,
                    p0: chance("p0", raw.p0_prior, raw.p0_data)?,
                })
            }
            "direct" => {
                for (present, name) in [
                    (raw.p1_prior.is_some(), "p1_prior"),
                    (raw.p1_data.is_some(), "p1_data"),
                    (raw.p0_prior.is_some(), "p0_prior"),
                    (raw.p0_data.is_some(), "p0_data"),
                ] {
                    forbid(present, name, "direct")?;
                }
                Ok(ModelSpec::Direct {
                    theta_prior,
                    phi: chance("phi", raw.phi_prior, raw.phi_data)?,
                })
            }
            other => Err(invalid(format!(
                "unknown mode \"{other}\" (expected generative or direct)"
            ))),
        }
    }
}

/// Parses a model spec file: the model fields plus optional `n`, `seed`,
/// `burn_in` and `thin`.
pub fn parse_config(json: &str) -> Result<(ModelSpec, SamplerSettings), ModelError> {
    let raw: RawConfig = serde_json::from_str(json).map_err(|e| invalid(e.to_string()))?;
    let spec = ModelSpec::try_from(raw.model())?;
    let defaults = SamplerSettings::default();
    let count = |name: &str, v: Option<i64>, default: usize, min: i64| -> Result<usize, ModelError> {
        match v {
            None => Ok(default),
            Some(v) if v >= min => Ok(v as usize),
            Some(v) => Err(invalid(format!("{name} = {v} must be at least {min}"))),
        }
    };
    let settings = SamplerSettings {
        n: count("n", raw.n, defaults.n, 1)?,
        seed: raw.seed,
        burn_in: count("burn_in", raw.burn_in, defaults.burn_in, 0)?,
        thin: count("thin", raw.thin, defaults.thin, 1)?,
    };
    Ok((spec, settings))
}

/// Serializes a spec and its settings in the format [`parse_config`] reads.
pub fn config_to_json(spec: &ModelSpec, settings: &SamplerSettings) -> String {
    let mut value = serde_json::to_value(RawModel::from(spec)).expect("model serializes");
    let obj = value.as_object_mut().expect("model is an object");
    obj.insert("n".into(), settings.n.into());
    if let Some(seed) = settings.seed {
        obj.insert("seed".into(), seed.into());
    }
    obj.insert("burn_in".into(), settings.burn_in.into());
    obj.insert("thin".into(), settings.thin.into());
    serde_json::to_string_pretty(&value).expect("config serializes")
}

/// Monte-Carlo draws of the random uncertainty interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub seed: u64,
    pub mode: Mode,
    pub spec_hash: String,
    lowers: Vec<f64>,
    uppers: Vec<f64>,
}

impl DrawSet {
    /// Assembles a draw set from parallel arrays, checking every interval.
    pub fn from_parts(
        seed: u64,
        mode: Mode,
        spec_hash: String,
        lowers: Vec<f64>,
        uppers: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if lowers.len() != uppers.len() {
            return Err(ModelError::Format(format!(
                "{} lower bounds but {} upper bounds",
                lowers.len(),
                uppers.len()
            )));
        }
        if lowers.is_empty() {
            return Err(ModelError::Format("no draws".into()));
        }
        for (index, (&lower, &upper)) in lowers.iter().zip(&uppers).enumerate() {
            if UncertaintyInterval::new(lower, upper).is_err() {
                return Err(ModelError::InvalidDraw { index, lower, upper });
            }
        }
        Ok(Self {
            seed,
            mode,
            spec_hash,
            lowers,
            uppers,
        })
    }

    pub fn n(&self) -> usize {
        self.lowers.len()
    }

    pub fn lowers(&self) -> &[f64] {
        &self.lowers
    }

    pub fn uppers(&self) -> &[f64] {
        &self.uppers
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.lowers.iter().zip(&self.uppers).map(|(l, u)| u - l)
    }

    pub fn interval(&self, k: usize) -> UncertaintyInterval {
        UncertaintyInterval::new(self.lowers[k], self.uppers[k]).expect("draws are validated")
    }

    /// CSV with a commented metadata header followed by `lower,upper` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n() * 40 + 200);
        out.push_str(&format!("# pcbounds draws v{}\n", crate::VERSION));
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# n={}\n", self.n()));
        out.push_str(&format!("# mode={}\n", self.mode.as_str()));
        out.push_str(&format!("# spec_hash={}\n", self.spec_hash));
        out.push_str("lower,upper\n");
        for (l, u) in self.lowers.iter().zip(&self.uppers) {
            out.push_str(&format!("{l},{u}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ModelError> {
        let fmt_err = |m: String| ModelError::Format(m);
        let mut seed = None;
        let mut n = None;
        let mut mode = None;
        let mut spec_hash = None;
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            if let Some((key, value)) = line.trim().split_once('=') {
                match key {
                    "seed" => seed = Some(value.parse::<u64>().map_err(|e| fmt_err(format!("seed: {e}")))?),
                    "n" => n = Some(value.parse::<usize>().map_err(|e| fmt_err(format!("n: {e}")))?),
                    "mode" => {
                        mode = Some(match value {
                            "generative" => Mode::Generative,
                            "direct" => Mode::Direct,
                            other => return Err(fmt_err(format!("unknown mode {other}"))),
                        })
                    }
                    "spec_hash" => spec_hash = Some(value.to_string()),
                    _ => {}
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| fmt_err(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["lower", "upper"] {
            return Err(fmt_err(format!("expected columns lower,upper, found {headers:?}")));
        }
        let mut lowers = Vec::new();
        let mut uppers = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
            let parse = |j: usize| -> Result<f64, ModelError> {
                rec.get(j)
                    .ok_or_else(|| fmt_err(format!("row {}: missing column", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| fmt_err(format!("row {}: {e}", i + 1)))
            };
            lowers.push(parse(0)?);
            uppers.push(parse(1)?);
        }
        if let Some(n) = n {
            if n != lowers.len() {
                return Err(fmt_err(format!("header says n={n} but {} rows found", lowers.len())));
            }
        }
        Self::from_parts(
            seed.ok_or_else(|| fmt_err("missing seed header".into()))?,
            mode.ok_or_else(|| fmt_err("missing mode header".into()))?,
            spec_hash.ok_or_else(|| fmt_err("missing spec_hash header".into()))?,
            lowers,
            uppers,
        )
    }
}

/// Beta draws as `X / (X + Y)` with `X, Y` Gamma; the complement is returned
/// from the same pair so values near 1 keep full precision.
struct BetaSampler {
    x: Gamma<f64>,
    y: Gamma<f64>,
}

impl BetaSampler {
    fn new(b: BetaParams) -> Result<Self, ModelError> {
        let gamma = |shape: f64| Gamma::new(shape, 1.0).map_err(|e| invalid(format!("Beta parameter {shape}: {e}")));
        Ok(Self {
            x: gamma(b.alpha)?,
            y: gamma(b.beta)?,
        })
    }

    /// Returns `(p, 1 - p)`.
    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let x = self.x.sample(rng);
        let y = self.y.sample(rng);
        let s = x + y;
        (x / s, y / s)
    }
}

/// Interval for one generative-mode draw. The lower bound is written as
/// `theta (p1 - p0) / P(R = 1)`, which equals `1 - p0 / P(R = 1)` but is
/// exactly zero whenever `p1 <= p0`.
pub fn generative_interval(theta: f64, theta_c: f64, p1: f64, p0: f64) -> (f64, f64) {
    let response = theta * p1 + theta_c * p0;
    if response <= 0.0 {
        return (0.0, 1.0);
    }
    let upper = (theta * p1 / response).min(1.0);
    let lower = (theta * (p1 - p0) / response).max(0.0).min(upper);
    (lower, upper)
}

enum Samplers {
    Generative {
        theta: BetaSampler,
        p1: BetaSampler,
        p0: BetaSampler,
    },
    Direct {
        theta: BetaSampler,
        phi: BetaSampler,
    },
}

impl Samplers {
    fn new(spec: &ModelSpec) -> Result<Self, ModelError> {
        Ok(match spec {
            ModelSpec::Generative { theta_prior, p1, p0 } => Samplers::Generative {
                theta: BetaSampler::new(*theta_prior)?,
                p1: BetaSampler::new(p1.posterior())?,
                p0: BetaSampler::new(p0.posterior())?,
            },
            ModelSpec::Direct { theta_prior, phi } => Samplers::Direct {
                theta: BetaSampler::new(*theta_prior)?,
                phi: BetaSampler::new(phi.posterior())?,
            },
        })
    }

    /// Generates iterations `start..end` of block `block`, keeping those
    /// selected by `keep`.
    fn block(&self, seed: u64, block: u64, start: usize, end: usize, keep: impl Fn(usize) -> bool) -> Vec<(f64, f64)> {
        let mut theta_rng = substream(seed, Channel::Theta, block);
        let mut out = Vec::new();
        match self {
            Samplers::Generative { theta, p1, p0 } => {
                let mut p1_rng = substream(seed, Channel::P1, block);
                let mut p0_rng = substream(seed, Channel::P0, block);
                for g in start..end {
                    let (t, t_c) = theta.draw(&mut theta_rng);
                    let (a, _) = p1.draw(&mut p1_rng);
                    let (b, _) = p0.draw(&mut p0_rng);
                    if keep(g) {
                        out.push(generative_interval(t, t_c, a, b));
                    }
                }
            }
            Samplers::Direct { theta, phi } => {
                let mut phi_rng = substream(seed, Channel::Phi, block);
                for g in start..end {
                    let (_, t_c) = theta.draw(&mut theta_rng);
                    let (f, f_c) = phi.draw(&mut phi_rng);
                    if keep(g) {
                        let (lower, upper, _) = bounds::pc_star_from_complements(f, f_c, t_c);
                        out.push((lower, upper));
                    }
                }
            }
        }
        out
    }
}

/// Draws `n` intervals from `spec`.
///
/// The sampler is independent, so `burn_in` and `thin` only discard
/// iterations: iteration `g` is kept when `g >= burn_in` and
/// `(g - burn_in).is_multiple_of(thin)`. Iterations are generated in fixed-size blocks
/// on separate streams, so output does not depend on the thread count.
pub fn sample_draws(spec: &ModelSpec, n: usize, seed: u64, burn_in: usize, thin: usize) -> Result<DrawSet, ModelError> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if thin == 0 {
        return Err(invalid("thin must be at least 1"));
    }
    let samplers = Samplers::new(spec)?;
    let total = (n - 1)
        .checked_mul(thin)
        .and_then(|v| v.checked_add(burn_in + 1))
        .ok_or_else(|| invalid("burn_in + n * thin overflows"))?;
    let keep = |g: usize| g >= burn_in && (g - burn_in).is_multiple_of(thin);
    let blocks = total.div_ceil(BLOCK_LEN);
    let chunks: Vec<Vec<(f64, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_LEN;
            let end = (start + BLOCK_LEN).min(total);
            samplers.block(seed, b as u64, start, end, keep)
        })
        .collect();
    let (lowers, uppers): (Vec<f64>, Vec<f64>) = chunks.into_iter().flatten().unzip();
    debug_assert_eq!(lowers.len(), n);
    DrawSet::from_parts(seed, spec.mode(), spec.spec_hash(), lowers, uppers)
}

/// Fraction of draws whose lower bound is exactly zero.
pub fn prob_lower_zero(d: &DrawSet) -> f64 {
    d.lowers.iter().filter(|&&l| l == 0.0).count() as f64 / d.n() as f64
}
