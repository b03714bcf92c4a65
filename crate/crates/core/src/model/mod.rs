//! The two-state hidden Markov model.

mod document;
mod emission;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    format_observation, observation_lines, read_observations, write_observations, EmissionsDocument,
    GaussianParams, InitialDocument, ModelDocument, ObservationError,
};
pub use emission::{gaussian_log_density, EmissionModel, Observation};

use crate::numeric::ln;
use crate::state::State;

/// Absolute tolerance below which `p_aa` and `p_ba` count as equal.
pub const CASE_TOLERANCE: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

/// Distribution of the first hidden state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initial {
    Stationary,
    Explicit([f64; 2]),
}

/// Transition regime of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseLabel {
    /// `p_aa > p_ba`: the chain prefers to stay.
    Case1,
    /// `p_aa < p_ba`: the chain prefers to switch.
    Case2,
    /// `p_aa = p_ba`: observations are an i.i.d. mixture.
    Case3,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseLabel::Case1 => "case1",
            CaseLabel::Case2 => "case2",
            CaseLabel::Case3 => "case3",
        })
    }
}

/// A single failed model invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("NonPositiveTransition: p_{from}{to} = {value} must be positive")]
    NonPositiveTransition { from: State, to: State, value: f64 },
    #[error("RowSumViolation: row {from} sums to {sum}")]
    RowSumViolation { from: State, sum: f64 },
    #[error("BadInitial: {0}")]
    BadInitial(String),
    #[error("BadEmission: {0}")]
    BadEmission(String),
    #[error("IndistinguishableEmissions: emission distributions of a and b coincide")]
    IndistinguishableEmissions,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::NonPositiveTransition { .. } => "NonPositiveTransition",
            Violation::RowSumViolation { .. } => "RowSumViolation",
            Violation::BadInitial(_) => "BadInitial",
            Violation::BadEmission(_) => "BadEmission",
            Violation::IndistinguishableEmissions => "IndistinguishableEmissions",
        }
    }
}

/// Every invariant a candidate model violated, in check order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid model: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ModelError {
    pub violations: Vec<Violation>,
}

impl ModelError {
    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code() == code)
    }

    pub fn first_code(&self) -> &'static str {
        self.violations.first().map_or("InvalidModel", |v| v.code())
    }
}

/// A validated two-state HMM. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateHmm {
    transitions: [[f64; 2]; 2],
    log_transitions: [[f64; 2]; 2],
    initial: Initial,
    initial_probs: [f64; 2],
    log_initial: [f64; 2],
    emissions: [EmissionModel; 2],
    /// Per-symbol `[ln f_a, ln f_b]` for categorical models.
    symbol_log_density: Vec<[f64; 2]>,
}

impl TwoStateHmm {
    /// Validates the raw parts and builds the model.
    ///
    /// `transitions[l][m]` is the probability of moving from `l` to `m`,
    /// with index 0 for `a` and 1 for `b`.
    pub fn new(
        transitions: [[f64; 2]; 2],
        initial: Initial,
        emit_a: EmissionModel,
        emit_b: EmissionModel,
    ) -> Result<Self, ModelError> {
        let mut violations = Vec::new();

        for from in State::ALL {
            let row = transitions[from.index()];
            for to in State::ALL {
                let value = row[to.index()];
                if !(value > 0.0 && value.is_finite()) {
                    violations.push(Violation::NonPositiveTransition { from, to, value });
                }
            }
            let sum = row[0] + row[1];
            if !((sum - 1.0).abs() <= SUM_TOLERANCE) {
                violations.push(Violation::RowSumViolation { from, sum });
            }
        }

        if let Initial::Explicit(q) = initial {
            if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
                violations.push(Violation::BadInitial(format!(
                    "entries {q:?} must be finite and nonnegative"
                )));
            } else if !((q[0] + q[1] - 1.0).abs() <= SUM_TOLERANCE) {
                violations.push(Violation::BadInitial(format!(
                    "entries sum to {}",
                    q[0] + q[1]
                )));
            }
        }

        let mut emission_ok = true;
        for (state, e) in [(State::A, &emit_a), (State::B, &emit_b)] {
            for p in e.problems() {
                emission_ok = false;
                violations.push(Violation::BadEmission(format!("state {state}: {p}")));
            }
        }
        match (&emit_a, &emit_b) {
            (
                EmissionModel::Categorical { alphabet: xa, probs: pa },
                EmissionModel::Categorical { alphabet: xb, probs: pb },
            ) => {
                if xa != xb {
                    violations.push(Violation::BadEmission(
                        "states a and b must share one alphabet".into(),
                    ));
                } else if emission_ok && pa == pb {
                    violations.push(Violation::IndistinguishableEmissions);
                }
            }
            (
                EmissionModel::Gaussian { mean: ma, variance: va },
                EmissionModel::Gaussian { mean: mb, variance: vb },
            ) => {
                if emission_ok && ma == mb && va == vb {
                    violations.push(Violation::IndistinguishableEmissions);
                }
            }
            _ => {
                violations.push(Violation::BadEmission(
                    "states a and b must use the same emission family".into(),
                ));
            }
        }

        if !violations.is_empty() {
            return Err(ModelError { violations });
        }

        let log_transitions = [
            [ln(transitions[0][0]), ln(transitions[0][1])],
            [ln(transitions[1][0]), ln(transitions[1][1])],
        ];
        let initial_probs = match initial {
            Initial::Stationary => stationary_of(&transitions),
            Initial::Explicit(q) => q,
        };
        let symbol_log_density = match (&emit_a, &emit_b) {
            (
                EmissionModel::Categorical { probs: pa, .. },
                EmissionModel::Categorical { probs: pb, .. },
            ) => pa.iter().zip(pb).map(|(a, b)| [ln(*a), ln(*b)]).collect(),
            _ => Vec::new(),
        };
        Ok(TwoStateHmm {
            transitions,
            log_transitions,
            initial,
            initial_probs,
            log_initial: [ln(initial_probs[0]), ln(initial_probs[1])],
            emissions: [emit_a, emit_b],
            symbol_log_density,
        })
    }

    /// Same chain and emissions with a different initial distribution.
    pub fn with_initial(&self, initial: Initial) -> Result<Self, ModelError> {
        let [a, b] = self.emissions.clone();
        TwoStateHmm::new(self.transitions, initial, a, b)
    }

    pub fn transitions(&self) -> &[[f64; 2]; 2] {
        &self.transitions
    }

    #[inline]
    pub fn p(&self, from: State, to: State) -> f64 {
        self.transitions[from.index()][to.index()]
    }

    #[inline]
    pub fn log_p(&self, from: State, to: State) -> f64 {
        self.log_transitions[from.index()][to.index()]
    }

    pub fn log_transitions(&self) -> &[[f64; 2]; 2] {
        &self.log_transitions
    }

    pub fn initial(&self) -> Initial {
        self.initial
    }

    /// The initial distribution actually used for `Y_1`.
    pub fn initial_probs(&self) -> [f64; 2] {
        self.initial_probs
    }

    pub fn log_initial(&self) -> [f64; 2] {
        self.log_initial
    }

    pub fn emission(&self, s: State) -> &EmissionModel {
        &self.emissions[s.index()]
    }

    pub fn is_categorical(&self) -> bool {
        self.emissions[0].is_categorical()
    }

    /// The shared alphabet of a categorical model.
    pub fn alphabet(&self) -> Option<&[String]> {
        match &self.emissions[0] {
            EmissionModel::Categorical { alphabet, .. } => Some(alphabet),
            EmissionModel::Gaussian { .. } => None,
        }
    }

    /// `[ln f_a(x), ln f_b(x)]`.
    #[inline]
    pub fn log_densities(&self, x: &Observation) -> [f64; 2] {
        match x {
            Observation::Symbol(i) if !self.symbol_log_density.is_empty() => self
                .symbol_log_density
                .get(*i as usize)
                .copied()
                .unwrap_or([f64::NEG_INFINITY; 2]),
            _ => [
                self.emissions[0].log_density(x),
                self.emissions[1].log_density(x),
            ],
        }
    }

    /// The unique stationary distribution of the transition matrix.
    pub fn stationary(&self) -> [f64; 2] {
        stationary_of(&self.transitions)
    }

    pub fn classify_case(&self) -> CaseLabel {
        let d = self.p(State::A, State::A) - self.p(State::B, State::A);
        if d > CASE_TOLERANCE {
            CaseLabel::Case1
        } else if -d > CASE_TOLERANCE {
            CaseLabel::Case2
        } else {
            CaseLabel::Case3
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument::from_model(self)
    }
}

fn stationary_of(t: &[[f64; 2]; 2]) -> [f64; 2] {
    let p_ab = t[0][1];
    let p_ba = t[1][0];
    let z = p_ab + p_ba;
    [p_ba / z, p_ab / z]
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn cat2(pa: [f64; 2], pb: [f64; 2]) -> (EmissionModel, EmissionModel) {
        let alphabet = vec!["0".to_string(), "1".to_string()];
        (
            EmissionModel::Categorical { alphabet: alphabet.clone(), probs: pa.to_vec() },
            EmissionModel::Categorical { alphabet, probs: pb.to_vec() },
        )
    }

    pub fn model(t: [[f64; 2]; 2], pa: [f64; 2], pb: [f64; 2]) -> TwoStateHmm {
        let (a, b) = cat2(pa, pb);
        TwoStateHmm::new(t, Initial::Stationary, a, b).unwrap()
    }

    /// `[[0.9,0.1],[0.1,0.9]]`, `f_a = (0.8, 0.2)`, `f_b = (0.2, 0.8)`.
    pub fn case1_example() -> TwoStateHmm {
        model([[0.9, 0.1], [0.1, 0.9]], [0.8, 0.2], [0.2, 0.8])
    }

    pub fn case2_example() -> TwoStateHmm {
        model([[0.2, 0.8], [0.8, 0.2]], [0.8, 0.2], [0.2, 0.8])
    }

    pub fn case3_example() -> TwoStateHmm {
        model([[0.6, 0.4], [0.6, 0.4]], [0.8, 0.2], [0.2, 0.8])
    }

    pub fn sym(s: &[u32]) -> Vec<Observation> {
        s.iter().map(|&i| Observation::Symbol(i)).collect()
    }
}
