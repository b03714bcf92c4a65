//! Observation sets of the form `{x : ln f_a(x) - ln f_b(x) > c}` or `< c`.
//!
//! Every condition and barrier set in this crate has that shape. Categorical
//! sets are enumerated exactly; Gaussian sets are solved in closed form from
//! the quadratic log-density difference and measured through the normal CDF.

use serde::Serialize;

use crate::model::{EmissionModel, Observation, TwoStateHmm};
use crate::numeric::{normal_interval_mass, quadratic_positive_set, Interval};
use crate::rng::SimRng;
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

/// `{x : ln f_a(x) - ln f_b(x) > threshold}` (`Above`) or `< threshold`
/// (`Below`). Points where both densities vanish belong to neither side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRatioSet {
    pub side: Side,
    pub threshold: f64,
}

/// Explicit form of a set for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SetDescription {
    Symbols { symbols: Vec<String> },
    Intervals { intervals: Vec<Interval> },
}

impl LogRatioSet {
    pub fn above(threshold: f64) -> Self {
        LogRatioSet { side: Side::Above, threshold }
    }

    pub fn below(threshold: f64) -> Self {
        LogRatioSet { side: Side::Below, threshold }
    }

    /// Membership from the log-ratio directly.
    pub fn contains_ratio(&self, log_ratio: f64) -> bool {
        match self.side {
            Side::Above => log_ratio > self.threshold,
            Side::Below => log_ratio < self.threshold,
        }
    }

    pub fn contains(&self, model: &TwoStateHmm, x: &Observation) -> bool {
        let lf = model.log_densities(x);
        self.contains_ratio(lf[0] - lf[1])
    }

    /// Member symbol indices of a categorical model.
    pub fn symbols(&self, model: &TwoStateHmm) -> Vec<u32> {
        let n = model.alphabet().map_or(0, |a| a.len()) as u32;
        (0..n).filter(|i| self.contains(model, &Observation::Symbol(*i))).collect()
    }

    /// Open intervals making up the set for a Gaussian model.
    pub fn intervals(&self, model: &TwoStateHmm) -> Vec<Interval> {
        let (ma, va, mb, vb) = gaussian_params(model);
        // ln f_a - ln f_b - c = A x^2 + B x + C
        let a = 0.5 / vb - 0.5 / va;
        let b = ma / va - mb / vb;
        let c = -0.5 * ma * ma / va + 0.5 * mb * mb / vb + 0.5 * libm::log(vb / va)
            - self.threshold;
        match self.side {
            Side::Above => quadratic_positive_set(a, b, c),
            Side::Below => quadratic_positive_set(-a, -b, -c),
        }
    }

    /// `P_s(set)`.
    pub fn probability(&self, model: &TwoStateHmm, s: State) -> f64 {
        match model.emission(s) {
            EmissionModel::Categorical { probs, .. } => {
                self.symbols(model).iter().map(|i| probs[*i as usize]).sum()
            }
            EmissionModel::Gaussian { mean, variance } => self
                .intervals(model)
                .iter()
                .map(|iv| normal_interval_mass(*mean, *variance, iv.lo, iv.hi))
                .sum(),
        }
    }

    /// Reference measure of the set: symbol count or total interval length.
    pub fn measure(&self, model: &TwoStateHmm) -> f64 {
        if model.is_categorical() {
            self.symbols(model).len() as f64
        } else {
            self.intervals(model).iter().map(Interval::length).sum()
        }
    }

    /// Whether `P_s(set) > 0`, decided structurally rather than from a
    /// floating-point mass that may underflow in far tails.
    pub fn charged_by(&self, model: &TwoStateHmm, s: State) -> bool {
        match model.emission(s) {
            EmissionModel::Categorical { probs, .. } => {
                self.symbols(model).iter().any(|i| probs[*i as usize] > 0.0)
            }
            EmissionModel::Gaussian { .. } => self.measure(model) > 0.0,
        }
    }

    pub fn describe(&self, model: &TwoStateHmm) -> SetDescription {
        match model.alphabet() {
            Some(alphabet) => SetDescription::Symbols {
                symbols: self
                    .symbols(model)
                    .iter()
                    .map(|i| alphabet[*i as usize].clone())
                    .collect(),
            },
            None => SetDescription::Intervals { intervals: self.intervals(model) },
        }
    }

    /// A member drawn from `P_s` conditioned on the set. Falls back to a
    /// uniform draw over the set when `P_s` puts (numerically) no mass on it.
    /// Returns `None` for an empty set.
    pub fn sample(&self, model: &TwoStateHmm, s: State, rng: &mut SimRng) -> Option<Observation> {
        match model.emission(s) {
            EmissionModel::Categorical { probs, .. } => {
                let members = self.symbols(model);
                if members.is_empty() {
                    return None;
                }
                let weights: Vec<f64> = members.iter().map(|i| probs[*i as usize]).collect();
                let pick = if weights.iter().any(|w| *w > 0.0) {
                    rng.categorical(&weights)
                } else {
                    rng.below(members.len() as u64) as usize
                };
                Some(Observation::Symbol(members[pick]))
            }
            EmissionModel::Gaussian { mean, variance } => {
                let intervals = self.intervals(model);
                if intervals.is_empty() {
                    return None;
                }
                let emission = model.emission(s);
                for _ in 0..10_000 {
                    let x = emission.sample(rng);
                    if self.contains(model, &x) {
                        return Some(x);
                    }
                }
                let sd = variance.sqrt();
                let iv = intervals[rng.below(intervals.len() as u64) as usize];
                let lo = iv.lo.max(mean - 40.0 * sd).min(iv.hi);
                let hi = iv.hi.min(mean + 40.0 * sd).max(iv.lo);
                let mid = if lo < hi { rng.uniform_in(lo, hi) } else { 0.5 * (iv.lo + iv.hi) };
                Some(Observation::Real(mid))
            }
        }
    }
}

fn gaussian_params(model: &TwoStateHmm) -> (f64, f64, f64, f64) {
    match (model.emission(State::A), model.emission(State::B)) {
        (
            EmissionModel::Gaussian { mean: ma, variance: va },
            EmissionModel::Gaussian { mean: mb, variance: vb },
        ) => (*ma, *va, *mb, *vb),
        _ => panic!("interval form requires Gaussian emissions"),
    }
}
