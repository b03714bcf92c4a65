use crate::numeric::ln;
use crate::rng::SimRng;

/// A single observation. Categorical models use an index into the
/// alphabet; Gaussian models use a real value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Symbol(u32),
    Real(f64),
}

/// Emission distribution attached to one hidden state.
///
/// Densities are taken with respect to counting measure for `Categorical`
/// and Lebesgue measure for `Gaussian`.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionModel {
    Categorical { alphabet: Vec<String>, probs: Vec<f64> },
    Gaussian { mean: f64, variance: f64 },
}

impl EmissionModel {
    pub fn is_categorical(&self) -> bool {
        matches!(self, EmissionModel::Categorical { .. })
    }

    /// Log density; observations of the wrong kind or outside the alphabet
    /// have density zero.
    pub fn log_density(&self, x: &Observation) -> f64 {
        match (self, x) {
            (EmissionModel::Categorical { probs, .. }, Observation::Symbol(i)) => {
                probs.get(*i as usize).map_or(f64::NEG_INFINITY, |&p| ln(p))
            }
            (EmissionModel::Gaussian { mean, variance }, Observation::Real(v)) => {
                gaussian_log_density(*mean, *variance, *v)
            }
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn density(&self, x: &Observation) -> f64 {
        match (self, x) {
            (EmissionModel::Categorical { probs, .. }, Observation::Symbol(i)) => {
                probs.get(*i as usize).copied().unwrap_or(0.0)
            }
            _ => crate::numeric::exp(self.log_density(x)),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Observation {
        match self {
            EmissionModel::Categorical { probs, .. } => {
                Observation::Symbol(rng.categorical(probs) as u32)
            }
            EmissionModel::Gaussian { mean, variance } => {
                Observation::Real(mean + variance.sqrt() * rng.standard_normal())
            }
        }
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            EmissionModel::Categorical { alphabet, probs } => {
                if alphabet.is_empty() {
                    out.push("alphabet is empty".to_string());
                }
                let mut seen = std::collections::BTreeSet::new();
                for s in alphabet {
                    if !seen.insert(s.as_str()) {
                        out.push(format!("symbol {s:?} appears twice in the alphabet"));
                    }
                }
                if probs.len() != alphabet.len() {
                    out.push(format!(
                        "{} probabilities for an alphabet of {} symbols",
                        probs.len(),
                        alphabet.len()
                    ));
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    out.push("probabilities must be finite and nonnegative".to_string());
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    out.push(format!("probabilities sum to {sum}"));
                }
            }
            EmissionModel::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    out.push(format!("mean {mean} is not finite"));
                }
                if !(variance.is_finite() && *variance > 0.0) {
                    out.push(format!("variance {variance} is not positive"));
                }
            }
        }
        out
    }
}

pub fn gaussian_log_density(mean: f64, variance: f64, x: f64) -> f64 {
    let d = x - mean;
    -0.5 * ln(2.0 * std::f64::consts::PI * variance) - d * d / (2.0 * variance)
}
