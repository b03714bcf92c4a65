//! Random valid models for replicated experiments.

use serde::{Deserialize, Serialize};

use crate::model::{CaseLabel, EmissionModel, Initial, TwoStateHmm};
use crate::nodes::check_conditions;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Categorical,
    Gaussian,
}

const CASES: [CaseLabel; 3] = [CaseLabel::Case1, CaseLabel::Case2, CaseLabel::Case3];

/// Transition matrix of the requested case with entries in `[0.02, 0.98]`.
pub fn random_transitions(rng: &mut SimRng, case: CaseLabel) -> [[f64; 2]; 2] {
    let (stay_a, enter_a) = loop {
        let u = rng.uniform_in(0.02, 0.98);
        let v = rng.uniform_in(0.02, 0.98);
        match case {
            CaseLabel::Case3 => break (u, u),
            _ if (u - v).abs() < 1e-6 => continue,
            CaseLabel::Case1 => break (u.max(v), u.min(v)),
            CaseLabel::Case2 => break (u.min(v), u.max(v)),
        }
    };
    [[stay_a, 1.0 - stay_a], [enter_a, 1.0 - enter_a]]
}

fn random_probs(rng: &mut SimRng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.05, 1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn alphabet(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

/// Emission pair of the requested family. Categorical pairs use 2 to 4
/// symbols and sometimes give one state a zero-probability symbol.
pub fn random_emissions(rng: &mut SimRng, family: Family) -> (EmissionModel, EmissionModel) {
    match family {
        Family::Categorical => {
            let k = rng.range_inclusive(2, 4);
            let mut pa = random_probs(rng, k);
            let mut pb = random_probs(rng, k);
            if rng.bernoulli(0.2) {
                let target = if rng.bernoulli(0.5) { &mut pa } else { &mut pb };
                let i = rng.below(k as u64) as usize;
                target[i] = 0.0;
                let total: f64 = target.iter().sum();
                target.iter_mut().for_each(|p| *p /= total);
            }
            (
                EmissionModel::Categorical { alphabet: alphabet(k), probs: pa },
                EmissionModel::Categorical { alphabet: alphabet(k), probs: pb },
            )
        }
        Family::Gaussian => {
            let ma = rng.uniform_in(-2.0, 2.0);
            let mb = rng.uniform_in(-2.0, 2.0);
            let va = rng.uniform_in(0.25, 3.0);
            let vb = if rng.bernoulli(0.3) { va } else { rng.uniform_in(0.25, 3.0) };
            (
                EmissionModel::Gaussian { mean: ma, variance: va },
                EmissionModel::Gaussian { mean: mb, variance: vb },
            )
        }
    }
}

/// A random valid model. Unspecified case and family are drawn uniformly.
pub fn random_model(rng: &mut SimRng, case: Option<CaseLabel>, family: Option<Family>) -> TwoStateHmm {
    loop {
        let case = case.unwrap_or_else(|| CASES[rng.below(3) as usize]);
        let family = family.unwrap_or_else(|| {
            if rng.bernoulli(0.5) {
                Family::Categorical
            } else {
                Family::Gaussian
            }
        });
        let t = random_transitions(rng, case);
        let (a, b) = random_emissions(rng, family);
        if let Ok(m) = TwoStateHmm::new(t, Initial::Stationary, a, b) {
            return m;
        }
    }
}

/// A case-1 categorical model in which `p_bb f_b(x) > p_aa f_a(x)` holds
/// for no symbol, so strong `b`-nodes cannot occur.
pub fn random_dominated_model(rng: &mut SimRng) -> TwoStateHmm {
    loop {
        let stay_a = rng.uniform_in(0.55, 0.98);
        let stay_b = rng.uniform_in(1.0 - stay_a + 0.01, stay_a);
        let k = rng.range_inclusive(2, 4);
        let pa = random_probs(rng, k);
        // f_b / f_a stays within (1 - r) / (1 + r) .. (1 + r) / (1 - r),
        // which the choice of r keeps below p_aa / p_bb.
        let ratio = stay_a / stay_b;
        let r = 0.9 * (ratio - 1.0) / (ratio + 1.0);
        let w: Vec<f64> = pa.iter().map(|p| p * rng.uniform_in(1.0 - r, 1.0 + r)).collect();
        let total: f64 = w.iter().sum();
        let pb: Vec<f64> = w.iter().map(|x| x / total).collect();
        let t = [[stay_a, 1.0 - stay_a], [1.0 - stay_b, stay_b]];
        let Ok(m) = TwoStateHmm::new(
            t,
            Initial::Stationary,
            EmissionModel::Categorical { alphabet: alphabet(k), probs: pa },
            EmissionModel::Categorical { alphabet: alphabet(k), probs: pb },
        ) else {
            continue;
        };
        if m.classify_case() == CaseLabel::Case1 && check_conditions(&m).holds("b_stay_null") {
            return m;
        }
    }
}
