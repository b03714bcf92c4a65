//! JSON model documents and line-oriented observation files.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EmissionModel, Initial, ModelError, Observation, TwoStateHmm};

/// On-disk model description.
///
/// ```json
/// {
///   "transitions": [[0.9, 0.1], [0.1, 0.9]],
///   "initial": "stationary",
///   "emissions": {"type": "categorical", "alphabet": ["0", "1"],
///                 "probs_a": [0.8, 0.2], "probs_b": [0.2, 0.8]}
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub transitions: [[f64; 2]; 2],
    #[serde(default)]
    pub initial: InitialDocument,
    pub emissions: EmissionsDocument,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialDocument {
    #[default]
    Stationary,
    Explicit([f64; 2]),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitial {
    Name(String),
    Explicit([f64; 2]),
}

impl Serialize for InitialDocument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InitialDocument::Stationary => RawInitial::Name("stationary".into()),
            InitialDocument::Explicit(q) => RawInitial::Explicit(*q),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InitialDocument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawInitial::deserialize(d)? {
            RawInitial::Name(n) if n == "stationary" => Ok(InitialDocument::Stationary),
            RawInitial::Name(n) => Err(serde::de::Error::custom(format!(
                "unknown initial distribution {n:?}"
            ))),
            RawInitial::Explicit(q) => Ok(InitialDocument::Explicit(q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmissionsDocument {
    Categorical {
        alphabet: Vec<SymbolName>,
        probs_a: Vec<f64>,
        probs_b: Vec<f64>,
    },
    Gaussian {
        a: GaussianParams,
        b: GaussianParams,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub mean: f64,
    pub variance: f64,
}

/// Alphabet entries may be written as JSON strings or numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolName {
    Text(String),
    Number(serde_json::Number),
}

impl SymbolName {
    fn into_string(self) -> String {
        match self {
            SymbolName::Text(s) => s,
            SymbolName::Number(n) => n.to_string(),
        }
    }
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    /// Validates the document into a model.
    pub fn into_model(self) -> Result<TwoStateHmm, ModelError> {
        let initial = match self.initial {
            InitialDocument::Stationary => Initial::Stationary,
            InitialDocument::Explicit(q) => Initial::Explicit(q),
        };
        let (a, b) = match self.emissions {
            EmissionsDocument::Categorical { alphabet, probs_a, probs_b } => {
                let alphabet: Vec<String> =
                    alphabet.into_iter().map(SymbolName::into_string).collect();
                (
                    EmissionModel::Categorical { alphabet: alphabet.clone(), probs: probs_a },
                    EmissionModel::Categorical { alphabet, probs: probs_b },
                )
            }
            EmissionsDocument::Gaussian { a, b } => (
                EmissionModel::Gaussian { mean: a.mean, variance: a.variance },
                EmissionModel::Gaussian { mean: b.mean, variance: b.variance },
            ),
        };
        TwoStateHmm::new(self.transitions, initial, a, b)
    }

    pub fn from_model(m: &TwoStateHmm) -> Self {
        use crate::state::State;
        let initial = match m.initial() {
            Initial::Stationary => InitialDocument::Stationary,
            Initial::Explicit(q) => InitialDocument::Explicit(q),
        };
        let emissions = match (m.emission(State::A), m.emission(State::B)) {
            (
                EmissionModel::Categorical { alphabet, probs: pa },
                EmissionModel::Categorical { probs: pb, .. },
            ) => EmissionsDocument::Categorical {
                alphabet: alphabet.iter().cloned().map(SymbolName::Text).collect(),
                probs_a: pa.clone(),
                probs_b: pb.clone(),
            },
            (
                EmissionModel::Gaussian { mean: ma, variance: va },
                EmissionModel::Gaussian { mean: mb, variance: vb },
            ) => EmissionsDocument::Gaussian {
                a: GaussianParams { mean: *ma, variance: *va },
                b: GaussianParams { mean: *mb, variance: *vb },
            },
            _ => unreachable!("validated models share one emission family"),
        };
        ModelDocument { transitions: *m.transitions(), initial, emissions }
    }
}

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("line {line}: token {token:?} is not in the model alphabet")]
    UnknownSymbol { line: usize, token: String },
    #[error("line {line}: token {token:?} is not a finite decimal number")]
    BadReal { line: usize, token: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TwoStateHmm {
    /// Parses one observation token against this model's observation space.
    pub fn parse_observation(&self, token: &str) -> Option<Observation> {
        match self.alphabet() {
            Some(alphabet) => alphabet
                .iter()
                .position(|s| s == token)
                .map(|i| Observation::Symbol(i as u32)),
            None => token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Observation::Real),
        }
    }
}

/// Lazily parses one token per line; blank lines are skipped.
pub fn observation_lines<'m, R: BufRead + 'm>(
    model: &'m TwoStateHmm,
    reader: R,
) -> impl Iterator<Item = Result<Observation, ObservationError>> + 'm {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(ObservationError::Io(e))),
        };
        let token = line.trim();
        if token.is_empty() {
            return None;
        }
        Some(model.parse_observation(token).ok_or_else(|| {
            let (line, token) = (i + 1, token.to_string());
            if model.is_categorical() {
                ObservationError::UnknownSymbol { line, token }
            } else {
                ObservationError::BadReal { line, token }
            }
        }))
    })
}

/// Reads one token per line; blank lines are skipped.
pub fn read_observations<R: BufRead>(
    model: &TwoStateHmm,
    reader: R,
) -> Result<Vec<Observation>, ObservationError> {
    observation_lines(model, reader).collect()
}

/// Formats an observation as a file token. Reals use the shortest
/// representation that parses back to the same `f64`.
pub fn format_observation(model: &TwoStateHmm, x: &Observation) -> String {
    match (x, model.alphabet()) {
        (Observation::Symbol(i), Some(alphabet)) => alphabet[*i as usize].clone(),
        (Observation::Symbol(i), None) => i.to_string(),
        (Observation::Real(v), _) => format!("{v:?}"),
    }
}

pub fn write_observations<W: Write>(
    model: &TwoStateHmm,
    obs: &[Observation],
    mut w: W,
) -> io::Result<()> {
    for x in obs {
        writeln!(w, "{}", format_observation(model, x))?;
    }
    Ok(())
}
