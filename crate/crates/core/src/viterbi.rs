//! Batch MAP decoding in the log domain.
//!
//! Scores follow the max-plus recursion
//!
//! ```text
//! s_1(l)     = ln q_l + ln f_l(x_1)
//! s_{u+1}(m) = max_l (s_u(l) + ln p_lm) + ln f_m(x_{u+1})
//! ```
//!
//! with `-inf` for impossible prefixes. Every argmax prefers `a` on exact
//! equality, at the terminal state and at each backpointer. Among all
//! maximizing paths this selects the one that is smallest when positions
//! are compared from the last to the first (with `a < b`); the brute-force
//! oracle applies the same order.

use std::cmp::Ordering;

use thiserror::Error;

use crate::model::{Observation, TwoStateHmm};
use crate::numeric::{approx_eq_rel, compare_with_tie};
use crate::state::State;

/// Longest sequence the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ViterbiError {
    #[error("EmptyObservations: at least one observation is required")]
    EmptyObservations,
    #[error("ImpossibleObservation: every path has zero likelihood at time {time}")]
    ImpossibleObservation { time: usize },
    #[error("TooLong: brute force is limited to {max} observations, got {len}")]
    TooLong { len: usize, max: usize },
    #[error("BadInitial: initial distribution {0:?} is not a probability vector")]
    BadInitial([f64; 2]),
    #[error("BadSplit: split {split} must satisfy 1 <= split < {len}")]
    BadSplit { split: usize, len: usize },
}

impl ViterbiError {
    pub fn code(&self) -> &'static str {
        match self {
            ViterbiError::EmptyObservations => "EmptyObservations",
            ViterbiError::ImpossibleObservation { .. } => "ImpossibleObservation",
            ViterbiError::TooLong { .. } => "TooLong",
            ViterbiError::BadInitial(_) => "BadInitial",
            ViterbiError::BadSplit { .. } => "BadSplit",
        }
    }
}

/// Log scores `(ln delta_u(a), ln delta_u(b))` at 1-based time `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub time: usize,
    pub log_a: f64,
    pub log_b: f64,
}

impl ScorePair {
    #[inline]
    pub fn get(&self, s: State) -> f64 {
        match s {
            State::A => self.log_a,
            State::B => self.log_b,
        }
    }

    pub fn is_impossible(&self) -> bool {
        self.log_a == f64::NEG_INFINITY && self.log_b == f64::NEG_INFINITY
    }

    /// Terminal argmax; `a` unless `b` wins beyond the tie tolerance.
    #[inline]
    pub fn best(&self) -> State {
        if compare_with_tie(self.log_a, self.log_b) != Ordering::Less {
            State::A
        } else {
            State::B
        }
    }

    pub fn best_is_tie(&self) -> bool {
        compare_with_tie(self.log_a, self.log_b) == Ordering::Equal
    }
}

/// Packed predecessor choice for both states at one time step.
///
/// Bit 0: predecessor of `a` is `b`. Bit 1: predecessor of `b` is `b`.
/// Bits 2 and 3 flag near-ties for `a` and `b` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Backpointer(u8);

impl Backpointer {
    #[inline]
    pub fn predecessor(self, s: State) -> State {
        State::from_index(((self.0 >> s.index()) & 1) as usize)
    }

    #[inline]
    pub fn is_tie(self, s: State) -> bool {
        (self.0 >> (2 + s.index())) & 1 == 1
    }

    /// The backpointer of a step whose predecessor is fixed to `s`.
    pub fn fixed(s: State) -> Backpointer {
        match s {
            State::A => Backpointer(0),
            State::B => Backpointer(0b11),
        }
    }
}

/// Score pair for the first observation under initial log-probabilities.
#[inline]
pub fn start_scores(model: &TwoStateHmm, log_initial: [f64; 2], x: &Observation) -> ScorePair {
    let lf = model.log_densities(x);
    ScorePair { time: 1, log_a: log_initial[0] + lf[0], log_b: log_initial[1] + lf[1] }
}

/// One application of the recursion.
#[inline]
pub fn step_scores(model: &TwoStateHmm, prev: &ScorePair, x: &Observation) -> (ScorePair, Backpointer) {
    let lp = model.log_transitions();
    let lf = model.log_densities(x);
    let mut bits = 0u8;
    let mut next = [0.0; 2];
    for m in 0..2 {
        let from_a = prev.log_a + lp[0][m];
        let from_b = prev.log_b + lp[1][m];
        // a near-tie is a tie, and ties go to a
        let best = match compare_with_tie(from_a, from_b) {
            Ordering::Less => {
                bits |= 1 << m;
                from_b
            }
            Ordering::Equal => {
                bits |= 1 << (2 + m);
                from_a
            }
            Ordering::Greater => from_a,
        };
        next[m] = best + lf[m];
    }
    (
        ScorePair { time: prev.time + 1, log_a: next[0], log_b: next[1] },
        Backpointer(bits),
    )
}

/// Full forward pass: score pairs for every time and the backpointers.
/// `backpointers[0]` belongs to time 1 and is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Trellis {
    pub scores: Vec<ScorePair>,
    pub backpointers: Vec<Backpointer>,
}

/// A decoded path and its joint log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub states: Vec<State>,
    pub log_likelihood: f64,
    /// Whether any decision on the returned path was within the tie tolerance.
    pub tie: bool,
}

fn check_initial(initial: [f64; 2]) -> Result<[f64; 2], ViterbiError> {
    let ok = initial.iter().all(|v| v.is_finite() && *v >= 0.0)
        && (initial[0] + initial[1] - 1.0).abs() <= 1e-9;
    if ok {
        Ok([crate::numeric::ln(initial[0]), crate::numeric::ln(initial[1])])
    } else {
        Err(ViterbiError::BadInitial(initial))
    }
}

/// Runs the recursion over `obs` from the given initial distribution.
pub fn score_forward(
    model: &TwoStateHmm,
    obs: &[Observation],
    initial: [f64; 2],
) -> Result<Trellis, ViterbiError> {
    let log_initial = check_initial(initial)?;
    forward(model, obs, log_initial)
}

pub(crate) fn forward(
    model: &TwoStateHmm,
    obs: &[Observation],
    log_initial: [f64; 2],
) -> Result<Trellis, ViterbiError> {
    let Some((first, rest)) = obs.split_first() else {
        return Err(ViterbiError::EmptyObservations);
    };
    let mut scores = Vec::with_capacity(obs.len());
    let mut backpointers = Vec::with_capacity(obs.len());
    let mut cur = start_scores(model, log_initial, first);
    if cur.is_impossible() {
        return Err(ViterbiError::ImpossibleObservation { time: 1 });
    }
    scores.push(cur);
    backpointers.push(Backpointer::default());
    for x in rest {
        let (next, bp) = step_scores(model, &cur, x);
        if next.is_impossible() {
            return Err(ViterbiError::ImpossibleObservation { time: next.time });
        }
        scores.push(next);
        backpointers.push(bp);
        cur = next;
    }
    Ok(Trellis { scores, backpointers })
}

impl Trellis {
    /// Canonical backtrack from the terminal argmax.
    pub fn backtrack(&self) -> Alignment {
        let last = self.scores.last().expect("trellis is never empty");
        let end = last.best();
        let mut tie = last.best_is_tie();
        let states = backtrack_from(&self.backpointers, end, &mut tie);
        Alignment { states, log_likelihood: last.get(end), tie }
    }
}

/// Walks `backpointers` backwards from `end` at the final position.
/// `backpointers[0]` is never consulted.
pub(crate) fn backtrack_from(backpointers: &[Backpointer], end: State, tie: &mut bool) -> Vec<State> {
    let n = backpointers.len();
    let mut states = vec![State::A; n];
    let mut s = end;
    states[n - 1] = s;
    for i in (1..n).rev() {
        let bp = backpointers[i];
        *tie |= bp.is_tie(s);
        s = bp.predecessor(s);
        states[i - 1] = s;
    }
    states
}

/// MAP path from the model's own initial distribution.
pub fn decode_batch(model: &TwoStateHmm, obs: &[Observation]) -> Result<Alignment, ViterbiError> {
    Ok(forward(model, obs, model.log_initial())?.backtrack())
}

/// MAP path from an arbitrary initial distribution.
pub fn decode_with_initial(
    model: &TwoStateHmm,
    obs: &[Observation],
    initial: [f64; 2],
) -> Result<Alignment, ViterbiError> {
    Ok(score_forward(model, obs, initial)?.backtrack())
}

/// `ln Lambda(states; obs)` accumulated left to right in the same order
/// as the recursion, so equal paths give bit-equal values.
pub fn path_log_likelihood(
    model: &TwoStateHmm,
    log_initial: [f64; 2],
    states: &[State],
    obs: &[Observation],
) -> f64 {
    assert_eq!(states.len(), obs.len());
    let mut acc = f64::NEG_INFINITY;
    for (i, (s, x)) in states.iter().zip(obs).enumerate() {
        let lf = model.log_densities(x)[s.index()];
        acc = if i == 0 {
            log_initial[s.index()] + lf
        } else {
            acc + model.log_p(states[i - 1], *s) + lf
        };
    }
    acc
}

/// Exhaustive maximization over all `2^n` paths, `n <= 24`.
pub fn decode_brute_force(model: &TwoStateHmm, obs: &[Observation]) -> Result<Alignment, ViterbiError> {
    brute_force_with_initial(model, obs, model.log_initial())
}

pub fn brute_force_with_initial(
    model: &TwoStateHmm,
    obs: &[Observation],
    log_initial: [f64; 2],
) -> Result<Alignment, ViterbiError> {
    let n = obs.len();
    if n == 0 {
        return Err(ViterbiError::EmptyObservations);
    }
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(ViterbiError::TooLong { len: n, max: BRUTE_FORCE_MAX_LEN });
    }
    let lf: Vec<[f64; 2]> = obs.iter().map(|x| model.log_densities(x)).collect();
    let lp = model.log_transitions();
    // Bit i of `mask` is the state at position i, so ascending masks run
    // through paths in lexicographic order read from the end.
    let path_score = |mask: u32| {
        let state = |i: usize| ((mask >> i) & 1) as usize;
        let mut acc = log_initial[state(0)] + lf[0][state(0)];
        let mut dead_at = if acc == f64::NEG_INFINITY { 1 } else { 0 };
        for i in 1..n {
            acc = acc + lp[state(i - 1)][state(i)] + lf[i][state(i)];
            if dead_at == 0 && acc == f64::NEG_INFINITY {
                dead_at = i + 1;
            }
        }
        (acc, dead_at)
    };
    let mut best = f64::NEG_INFINITY;
    let mut impossible_at = 0usize;
    for mask in 0u32..(1u32 << n) {
        match path_score(mask) {
            (_, d) if d != 0 => impossible_at = impossible_at.max(d),
            (acc, _) => best = best.max(acc),
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(ViterbiError::ImpossibleObservation { time: impossible_at });
    }
    // Maximizers are the paths within the tie tolerance of the maximum; the
    // canonical one is the first of them.
    let mut chosen = None;
    let mut maximizers = 0;
    for mask in 0u32..(1u32 << n) {
        let (acc, dead_at) = path_score(mask);
        if dead_at == 0 && compare_with_tie(acc, best) == Ordering::Equal {
            chosen.get_or_insert(mask);
            maximizers += 1;
        }
    }
    let mask = chosen.expect("the maximum is attained");
    let states: Vec<State> = (0..n).map(|i| State::from_index(((mask >> i) & 1) as usize)).collect();
    Ok(Alignment { states, log_likelihood: best, tie: maximizers > 1 })
}

/// Checks that the direct maximum equals
/// `max_l [ln delta_u(l) + max ln Lambda_{p_l.}(suffix)]` to 1e-9 relative.
pub fn decomposition_check(
    model: &TwoStateHmm,
    obs: &[Observation],
    split: usize,
) -> Result<bool, ViterbiError> {
    let n = obs.len();
    if split < 1 || split >= n {
        return Err(ViterbiError::BadSplit { split, len: n });
    }
    let direct = decode_batch(model, obs)?.log_likelihood;
    let prefix = forward(model, &obs[..split], model.log_initial())?;
    let at_split = prefix.scores[split - 1];
    let mut combined = f64::NEG_INFINITY;
    for l in State::ALL {
        if at_split.get(l) == f64::NEG_INFINITY {
            continue;
        }
        let row = model.log_transitions()[l.index()];
        let suffix = match forward(model, &obs[split..], row) {
            Ok(t) => t.backtrack().log_likelihood,
            Err(ViterbiError::ImpossibleObservation { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        combined = combined.max(at_split.get(l) + suffix);
    }
    Ok(approx_eq_rel(direct, combined, 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::numeric::ln;

    #[test]
    fn worked_scores_case1() {
        // hand recursion: (0.4,0.1), (0.288,0.018), (0.05184,0.02304)
        let m = case1_example();
        let t = score_forward(&m, &sym(&[0, 0, 1]), [0.5, 0.5]).unwrap();
        let want = [(0.4, 0.1), (0.288, 0.018), (0.05184, 0.02304)];
        for (s, (a, b)) in t.scores.iter().zip(want) {
            assert!((s.log_a.exp() - a).abs() < 1e-12, "{s:?}");
            assert!((s.log_b.exp() - b).abs() < 1e-12, "{s:?}");
        }
        assert_eq!(t.scores[2].time, 3);
    }

    #[test]
    fn first_score_is_initial_times_density() {
        let m = case2_example();
        let t = score_forward(&m, &sym(&[1]), [0.3, 0.7]).unwrap();
        assert_eq!(t.scores[0].log_a, ln(0.3) + ln(0.2));
        assert_eq!(t.scores[0].log_b, ln(0.7) + ln(0.8));
    }

    #[test]
    fn case3_recursion_scales_by_running_max() {
        let m = case3_example();
        let obs = sym(&[0, 1, 1, 0]);
        let t = score_forward(&m, &obs, m.stationary()).unwrap();
        for u in 1..obs.len() {
            let c = t.scores[u - 1].log_a.max(t.scores[u - 1].log_b);
            let lf = m.log_densities(&obs[u]);
            assert!((t.scores[u].log_a - (c + ln(0.6) + lf[0])).abs() < 1e-12);
            assert!((t.scores[u].log_b - (c + ln(0.4) + lf[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_examples() {
        let a = decode_batch(&case1_example(), &sym(&[0, 0, 1])).unwrap();
        assert_eq!(crate::state::path_string(&a.states), "aaa");
        assert!((a.log_likelihood - ln(0.05184)).abs() < 1e-12);

        let c3 = decode_batch(&case3_example(), &sym(&[0, 1, 0])).unwrap();
        assert_eq!(crate::state::path_string(&c3.states), "aba");
    }

    #[test]
    fn rounding_level_tie_is_a_tie() {
        // "babab..." and "babba..." use the same transitions and emissions;
        // their partial sums differ by one ulp but both are maximizers
        let m = model(
            [[0.20142197194417746, 0.7985780280558226], [0.39080706061905973, 0.6091929393809403]],
            [0.5065855838134135, 0.49341441618658655],
            [0.8124585524494511, 0.1875414475505488],
        );
        let obs = sym(&[0, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0]);
        let dp = decode_batch(&m, &obs).unwrap();
        let brute = decode_brute_force(&m, &obs).unwrap();
        assert_eq!(crate::state::path_string(&dp.states), "babbabbbbbb");
        assert_eq!(dp.states, brute.states);
        assert!(dp.tie && brute.tie);
    }

    fn cat3(pa: [f64; 3], pb: [f64; 3]) -> TwoStateHmm {
        let alphabet: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        TwoStateHmm::new(
            [[0.9, 0.1], [0.1, 0.9]],
            crate::model::Initial::Stationary,
            crate::model::EmissionModel::Categorical { alphabet: alphabet.clone(), probs: pa.to_vec() },
            crate::model::EmissionModel::Categorical { alphabet, probs: pb.to_vec() },
        )
        .unwrap()
    }

    #[test]
    fn single_observation_tie_prefers_a() {
        let m = cat3([0.5, 0.2, 0.3], [0.5, 0.4, 0.1]);
        let a = decode_batch(&m, &sym(&[0])).unwrap();
        assert_eq!(a.states, vec![State::A]);
        assert!(a.tie);
        let bf = decode_brute_force(&m, &sym(&[0])).unwrap();
        assert_eq!(bf.states, vec![State::A]);
    }

    #[test]
    fn brute_force_examples() {
        let m = case1_example();
        let bf = decode_brute_force(&m, &sym(&[0, 0, 1])).unwrap();
        assert_eq!(crate::state::path_string(&bf.states), "aaa");
        assert!((bf.log_likelihood - ln(0.05184)).abs() < 1e-12);

        let m2 = case2_example();
        let obs = sym(&[0, 1, 0]);
        let bf = decode_brute_force(&m2, &obs).unwrap();
        let dp = decode_batch(&m2, &obs).unwrap();
        assert_eq!(bf.states, dp.states);
        assert_eq!(bf.log_likelihood, dp.log_likelihood);
        assert_eq!(crate::state::path_string(&bf.states), "aba");

        let long = sym(&[0; 25]);
        assert_eq!(
            decode_brute_force(&m, &long).unwrap_err(),
            ViterbiError::TooLong { len: 25, max: 24 }
        );
    }

    #[test]
    fn impossible_observation_time_matches_between_routes() {
        let m = cat3([0.5, 0.5, 0.0], [0.2, 0.8, 0.0]);
        let obs = sym(&[0, 1, 2, 0]);
        assert_eq!(
            decode_batch(&m, &obs).unwrap_err(),
            ViterbiError::ImpossibleObservation { time: 3 }
        );
        assert_eq!(
            decode_brute_force(&m, &obs).unwrap_err(),
            ViterbiError::ImpossibleObservation { time: 3 }
        );
    }

    #[test]
    fn empty_and_bad_inputs() {
        let m = case1_example();
        assert_eq!(decode_batch(&m, &[]).unwrap_err(), ViterbiError::EmptyObservations);
        assert!(matches!(
            score_forward(&m, &sym(&[0]), [0.7, 0.7]),
            Err(ViterbiError::BadInitial(_))
        ));
        assert!(matches!(
            decomposition_check(&m, &sym(&[0, 1]), 2),
            Err(ViterbiError::BadSplit { .. })
        ));
    }

    #[test]
    fn decomposition_two_steps_is_the_recursion() {
        let m = case1_example();
        assert!(decomposition_check(&m, &sym(&[0, 1]), 1).unwrap());
        assert!(decomposition_check(&case3_example(), &sym(&[1, 0, 0, 1]), 2).unwrap());
    }

    #[test]
    fn backpointer_packing() {
        let bp = Backpointer::fixed(State::B);
        assert_eq!(bp.predecessor(State::A), State::B);
        assert_eq!(bp.predecessor(State::B), State::B);
        assert!(!bp.is_tie(State::A));
        let bp = Backpointer::fixed(State::A);
        assert_eq!(bp.predecessor(State::B), State::A);
    }
}
