//! Drawing realizations `(Y_{1:n}, X_{1:n})` from a model.

use thiserror::Error;

use crate::model::{Observation, TwoStateHmm};
use crate::rng::SimRng;
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("EmptyLength: realization length must be at least 1")]
    EmptyLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub states: Vec<State>,
    pub observations: Vec<Observation>,
}

/// Samples a realization of length `n` from a fresh generator seeded with
/// `seed`. Same `(model, n, seed)` gives the same bits everywhere.
pub fn sample_realization(
    model: &TwoStateHmm,
    n: usize,
    seed: u64,
) -> Result<Realization, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptyLength);
    }
    let mut rng = SimRng::seed_from(seed);
    Ok(sample_with(model, n, &mut rng))
}

/// Samples a realization using the caller's generator, starting the chain
/// from the model's initial distribution.
pub fn sample_with(model: &TwoStateHmm, n: usize, rng: &mut SimRng) -> Realization {
    let first = State::from_index(rng.categorical(&model.initial_probs()));
    sample_from_state(model, n, first, rng)
}

/// Continues a chain: the first sampled state is `first`.
pub fn sample_from_state(
    model: &TwoStateHmm,
    n: usize,
    first: State,
    rng: &mut SimRng,
) -> Realization {
    let mut states = Vec::with_capacity(n);
    let mut observations = Vec::with_capacity(n);
    let mut y = first;
    for i in 0..n {
        if i > 0 {
            y = if rng.bernoulli(model.p(y, y.other())) { y.other() } else { y };
        }
        states.push(y);
        observations.push(model.emission(y).sample(rng));
    }
    Realization { states, observations }
}

/// Observations only, drawn as a fresh stationary-or-initial realization.
pub fn sample_observations(model: &TwoStateHmm, n: usize, rng: &mut SimRng) -> Vec<Observation> {
    sample_with(model, n, rng).observations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn zero_length_is_an_error() {
        assert_eq!(
            sample_realization(&case1_example(), 0, 1).unwrap_err(),
            SampleError::EmptyLength
        );
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = case1_example();
        let a = sample_realization(&m, 5, 42).unwrap();
        let b = sample_realization(&m, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_realization(&m, 5, 43).unwrap();
        let long = sample_realization(&m, 500, 43).unwrap();
        assert_eq!(c.states[..], long.states[..5]);
    }

    #[test]
    fn case3_state_frequency_near_stationary() {
        let m = case3_example();
        let n = 100_000;
        let r = sample_realization(&m, n, 9).unwrap();
        let count_a = r.states.iter().filter(|s| **s == State::A).count() as f64;
        let pi_a = m.stationary()[0];
        let se = (pi_a * (1.0 - pi_a) / n as f64).sqrt();
        assert!((count_a / n as f64 - pi_a).abs() < 3.0 * se);
    }

    #[test]
    fn empirical_transitions_within_three_standard_errors() {
        let m = fixtures_model();
        let n = 100_000;
        let r = sample_realization(&m, n, 2024).unwrap();
        let mut counts = [[0usize; 2]; 2];
        for w in r.states.windows(2) {
            counts[w[0].index()][w[1].index()] += 1;
        }
        for l in State::ALL {
            let row = counts[l.index()];
            let total = (row[0] + row[1]) as f64;
            for mto in State::ALL {
                let p = m.p(l, mto);
                let se = (p * (1.0 - p) / total).sqrt();
                let freq = row[mto.index()] as f64 / total;
                assert!((freq - p).abs() < 3.0 * se, "p_{l}{mto}: {freq} vs {p}");
            }
        }
    }

    fn fixtures_model() -> TwoStateHmm {
        model([[0.7, 0.3], [0.2, 0.8]], [0.5, 0.5], [0.1, 0.9])
    }

    #[test]
    fn categorical_emission_frequencies() {
        let m = case1_example();
        let r = sample_realization(&m, 50_000, 5).unwrap();
        let (mut in_a, mut zero_in_a) = (0.0, 0.0);
        for (s, x) in r.states.iter().zip(&r.observations) {
            if *s == State::A {
                in_a += 1.0;
                if *x == Observation::Symbol(0) {
                    zero_in_a += 1.0;
                }
            }
        }
        let se = (0.8f64 * 0.2 / in_a).sqrt();
        assert!((zero_in_a / in_a - 0.8).abs() < 3.0 * se);
    }
}
