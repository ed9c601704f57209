//! Reportable summaries of a [`DrawSet`].
//!
//! The posterior of the random interval is a mixture: an atom where the lower
//! bound is exactly zero (where only the upper bound varies) and a continuous
//! bivariate part. Statistics conditional on a positive lower bound are kept
//! separate from the atom and reported as absent when no draw falls there.

use serde::Serialize;
use thiserror::Error;

use crate::bounds::{self, BoundsError, ExposureChances, UncertaintyInterval};
use crate::posterior::{prob_lower_zero, DrawSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SummaryError {
    #[error("at least {needed} draws are required, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("coverage grid is empty")]
    EmptyGrid,
    #[error("grid point {index} ({value}) breaks strict ascent inside [0, 1]")]
    InvalidGrid { index: usize, value: f64 },
    #[error("no samples to bin")]
    EmptyInput,
    #[error("sample {index} = {value} lies outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("subsample of {k} draws every {stride} needs {needed} draws, only {n} available")]
    OutOfRange {
        k: usize,
        stride: usize,
        needed: usize,
        n: usize,
    },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Mean and standard deviation (divisor `n`) of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> Option<Moments> {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return None;
    }
    let mean = sum / count as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    Some(Moments {
        mean,
        sd: (ss / count as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSummary {
    pub n: usize,
    pub prob_lower_zero: f64,
    pub upper_mean: f64,
    pub upper_sd: f64,
    pub lower_mean: f64,
    pub lower_sd: f64,
    pub lower_mean_given_pos: Option<f64>,
    pub lower_sd_given_pos: Option<f64>,
    pub length_mean: f64,
    pub length_sd: f64,
    pub length_mean_given_pos: Option<f64>,
    pub length_sd_given_pos: Option<f64>,
}

pub fn summarize(d: &DrawSet) -> Result<MixtureSummary, SummaryError> {
    if d.n() < 2 {
        return Err(SummaryError::TooFewDraws { needed: 2, got: d.n() });
    }
    let upper = moments(d.uppers().iter().copied()).expect("nonempty");
    let lower = moments(d.lowers().iter().copied()).expect("nonempty");
    let length = moments(d.lengths()).expect("nonempty");
    let positive = || d.lowers().iter().zip(d.uppers()).filter(|(&l, _)| l > 0.0);
    let lower_pos = moments(positive().map(|(&l, _)| l));
    let length_pos = moments(positive().map(|(&l, &u)| u - l));
    Ok(MixtureSummary {
        n: d.n(),
        prob_lower_zero: prob_lower_zero(d),
        upper_mean: upper.mean,
        upper_sd: upper.sd,
        lower_mean: lower.mean,
        lower_sd: lower.sd,
        lower_mean_given_pos: lower_pos.map(|m| m.mean),
        lower_sd_given_pos: lower_pos.map(|m| m.sd),
        length_mean: length.mean,
        length_sd: length.sd,
        length_mean_given_pos: length_pos.map(|m| m.mean),
        length_sd_given_pos: length_pos.map(|m| m.sd),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl CoverageCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,coverage\n");
        for (p, c) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{p},{c}\n"));
        }
        out
    }
}

/// `points` evenly spaced values from 0 to 1 inclusive.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (points - 1) as f64;
            (0..points).map(|i| i as f64 / last).collect()
        }
    }
}

/// Posterior probability that each grid value lies inside the random interval.
pub fn coverage(d: &DrawSet, grid: &[f64]) -> Result<CoverageCurve, SummaryError> {
    if grid.is_empty() {
        return Err(SummaryError::EmptyGrid);
    }
    for (index, &value) in grid.iter().enumerate() {
        let in_range = (0.0..=1.0).contains(&value);
        let ascending = index == 0 || grid[index - 1] < value;
        if !(in_range && ascending) {
            return Err(SummaryError::InvalidGrid { index, value });
        }
    }
    let n = d.n() as f64;
    let values = grid
        .iter()
        .map(|&p| {
            let covered = d
                .lowers()
                .iter()
                .zip(d.uppers())
                .filter(|(&l, &u)| l <= p && p <= u)
                .count();
            covered as f64 / n
        })
        .collect();
    Ok(CoverageCurve {
        grid: grid.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramSpec {
    bins: usize,
}

impl HistogramSpec {
    pub fn new(bins: usize) -> Result<Self, SummaryError> {
        if bins == 0 {
            return Err(SummaryError::NoBins);
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Left and right edge of bin `i` on `[0, 1]`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.bins as f64;
        (i as f64 / w, (i + 1) as f64 / w)
    }
}

/// Normalised histogram masses on `[0, 1]`. Bins are `[a, b)` except the last,
/// which also takes the value 1.
pub fn density(samples: &[f64], spec: HistogramSpec) -> Result<Vec<f64>, SummaryError> {
    if samples.is_empty() {
        return Err(SummaryError::EmptyInput);
    }
    let mut counts = vec![0u64; spec.bins];
    for (index, &value) in samples.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(SummaryError::SampleOutOfRange { index, value });
        }
        let bin = ((value * spec.bins as f64) as usize).min(spec.bins - 1);
        counts[bin] += 1;
    }
    let n = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

pub fn histogram_csv(masses: &[f64], spec: HistogramSpec) -> String {
    let mut out = String::from("bin_left,bin_right,mass\n");
    for (i, m) in masses.iter().enumerate() {
        let (l, r) = spec.edges(i);
        out.push_str(&format!("{l},{r},{m}\n"));
    }
    out
}

/// One interval picked out of a draw set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsampledInterval {
    /// Zero-based position of the draw in the set.
    pub draw: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Draws number `stride, 2 stride, ..., k stride` (1-based), ordered by lower
/// bound, then upper bound, then draw position.
pub fn ordered_subsample(d: &DrawSet, k: usize, stride: usize) -> Result<Vec<SubsampledInterval>, SummaryError> {
    let needed = k.saturating_mul(stride);
    if k == 0 || stride == 0 || needed > d.n() {
        return Err(SummaryError::OutOfRange {
            k,
            stride,
            needed,
            n: d.n(),
        });
    }
    let mut picked: Vec<SubsampledInterval> = (1..=k)
        .map(|j| {
            let draw = j * stride - 1;
            SubsampledInterval {
                draw,
                lower: d.lowers()[draw],
                upper: d.uppers()[draw],
            }
        })
        .collect();
    picked.sort_by(|a, b| {
        a.lower
            .total_cmp(&b.lower)
            .then(a.upper.total_cmp(&b.upper))
            .then(a.draw.cmp(&b.draw))
    });
    Ok(picked)
}

pub fn subsample_csv(picked: &[SubsampledInterval]) -> String {
    let mut out = String::from("rank,lower,upper\n");
    for (rank, s) in picked.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", rank + 1, s.lower, s.upper));
    }
    out
}

/// The single interval obtained by plugging posterior expectations of `phi`
/// and `theta` into the PC* bounds.
pub fn individual_focused_interval(phi_bar: f64, theta_bar: f64) -> Result<UncertaintyInterval, SummaryError> {
    Ok(bounds::pc_star_bounds(ExposureChances::new(phi_bar, theta_bar)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::Mode;

    fn draws(lowers: &[f64], uppers: &[f64]) -> DrawSet {
        DrawSet::from_parts(1, Mode::Direct, "h".into(), lowers.to_vec(), uppers.to_vec()).unwrap()
    }

    #[test]
    fn summary_by_hand() {
        let d = draws(&[0.0, 0.0, 0.2], &[0.1, 0.3, 0.5]);
        let s = summarize(&d).unwrap();
        assert!((s.prob_lower_zero - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.upper_mean - 0.3).abs() < 1e-15);
        assert_eq!(s.lower_mean_given_pos, Some(0.2));
        assert_eq!(s.lower_sd_given_pos, Some(0.0));
        assert!((s.length_mean - (0.1 + 0.3 + 0.3) / 3.0).abs() < 1e-15);
        assert!((s.length_mean_given_pos.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_intervals_have_zero_length() {
        let d = draws(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]);
        let s = summarize(&d).unwrap();
        assert_eq!((s.length_mean, s.length_sd), (0.0, 0.0));
    }

    #[test]
    fn conditional_stats_absent_without_positive_lowers() {
        let s = summarize(&draws(&[0.0, 0.0], &[0.1, 0.2])).unwrap();
        assert_eq!(s.lower_mean_given_pos, None);
        assert_eq!(s.length_sd_given_pos, None);
        assert_eq!(s.prob_lower_zero, 1.0);
    }

    #[test]
    fn summary_needs_two_draws() {
        assert_eq!(
            summarize(&draws(&[0.0], &[0.1])),
            Err(SummaryError::TooFewDraws { needed: 2, got: 1 })
        );
    }

    #[test]
    fn coverage_by_hand() {
        let d = draws(&[0.0, 0.2, 0.3], &[0.1, 0.4, 0.5]);
        let c = coverage(&d, &[0.0, 0.25, 0.6]).unwrap();
        assert_eq!(c.values, vec![1.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(c.values[0], prob_lower_zero(&d));
    }

    #[test]
    fn coverage_grid_validation() {
        let d = draws(&[0.0, 0.2], &[0.1, 0.4]);
        assert_eq!(coverage(&d, &[]), Err(SummaryError::EmptyGrid));
        assert!(matches!(
            coverage(&d, &[0.2, 0.2]),
            Err(SummaryError::InvalidGrid { index: 1, .. })
        ));
        assert!(matches!(
            coverage(&d, &[1.5]),
            Err(SummaryError::InvalidGrid { index: 0, .. })
        ));
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&[0.5], HistogramSpec::new(2).unwrap()).unwrap(), vec![0.0, 1.0]);
        assert_eq!(
            density(&[1.0], HistogramSpec::new(4).unwrap()).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        let m = density(&[0.37; 10], HistogramSpec::new(10).unwrap()).unwrap();
        assert_eq!(m.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(m.iter().sum::<f64>(), 1.0);
        assert_eq!(
            density(&[], HistogramSpec::new(3).unwrap()),
            Err(SummaryError::EmptyInput)
        );
        assert!(matches!(
            density(&[0.2, 1.2], HistogramSpec::new(3).unwrap()),
            Err(SummaryError::SampleOutOfRange { index: 1, .. })
        ));
        assert_eq!(HistogramSpec::new(0), Err(SummaryError::NoBins));
    }

    #[test]
    fn subsample_order_and_range() {
        let d = draws(&[0.3, 0.1, 0.0, 0.1, 0.2, 0.0], &[0.4, 0.5, 0.2, 0.3, 0.9, 0.1]);
        let s = ordered_subsample(&d, 3, 2).unwrap();
        // Picks draws 1, 3, 5 (0-based): (0.1, 0.5), (0.1, 0.3), (0.0, 0.1).
        let got: Vec<_> = s.iter().map(|x| (x.draw, x.lower, x.upper)).collect();
        assert_eq!(got, vec![(5, 0.0, 0.1), (3, 0.1, 0.3), (1, 0.1, 0.5)]);

        let one = ordered_subsample(&d, 1, 4).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].draw, 3);

        assert!(matches!(
            ordered_subsample(&d, 1, 7),
            Err(SummaryError::OutOfRange { .. })
        ));
    }

    #[test]
    fn individual_interval_examples() {
        let i = individual_focused_interval(0.043, 0.5).unwrap();
        assert_eq!((i.lower(), i.upper()), (0.0, 0.043));
        let i = individual_focused_interval(0.043, 0.9).unwrap();
        assert_eq!((i.lower(), i.upper()), (0.0, 0.043));
        let i = individual_focused_interval(0.6, 0.2).unwrap();
        assert!((i.lower() - 0.5).abs() < 1e-15);
        assert_eq!(i.upper(), 0.6);
        assert!(individual_focused_interval(0.6, 1.0).is_err());
    }
}
