//! Constructive barrier certificates.
//!
//! A certificate is a pattern of observation sets. Any window whose
//! observations fall in the pattern's sets, in order, contains a strong
//! node whatever precedes it.
//!
//! * Case 1, target `s` with the larger stay probability: `k + 1`
//!   consecutive members of `{f_t p_tt / (f_s p_ss) < 1 - eps}`, with `k`
//!   the least positive integer such that
//!   `(1 - eps)^k < p_ab p_ba / (p_aa p_bb)`.
//! * Case 2: alternating members of `X_a = {f_a (1 - eps) > f_b}` and
//!   `X_b = {f_a < f_b (1 - eps)}`, `2k + 1` long and starting with the
//!   target's set, with `k` least such that
//!   `(1 - eps)^(2k) < p_aa p_bb / (p_ba p_ab)`. The target is `a` when
//!   `p_ba >= p_ab`.
//! * Case 3: one member of `{pi_s f_s > pi_t f_t}`, `s` the more likely
//!   state.
//!
//! Unless given explicitly, `eps` is the largest value of [`EPSILON_GRID`]
//! whose set masses reach the threshold; failing that, the largest grid
//! value whose sets are charged at all, then successive halvings of the
//! smallest grid value.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use super::sets::{LogRatioSet, SetDescription};
use crate::model::{CaseLabel, Observation, TwoStateHmm};
use crate::numeric::{compare_with_tie, ln};
use crate::rng::SimRng;
use crate::state::State;

pub const DEFAULT_MASS_THRESHOLD: f64 = 0.1;

/// `{0.05, 0.10, ..., 0.95}`.
pub const EPSILON_GRID: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75,
    0.80, 0.85, 0.90, 0.95,
];

const HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarrierError {
    #[error("MassThresholdUnreachable: no margin gives the barrier sets positive mass")]
    MassThresholdUnreachable,
    #[error("EmptyBarrierSet: margin {epsilon} leaves a barrier set without mass")]
    EmptyBarrierSet { epsilon: f64 },
    #[error("BadEpsilon: margin {0} must lie in (0, 1)")]
    BadEpsilon(f64),
    #[error("BadThreshold: mass threshold {0} must lie in (0, 1]")]
    BadThreshold(f64),
    #[error("WindowLength: window has {got} observations, certificate needs {want}")]
    WindowLength { got: usize, want: usize },
}

impl BarrierError {
    pub fn code(&self) -> &'static str {
        match self {
            BarrierError::MassThresholdUnreachable => "MassThresholdUnreachable",
            BarrierError::EmptyBarrierSet { .. } => "EmptyBarrierSet",
            BarrierError::BadEpsilon(_) => "BadEpsilon",
            BarrierError::BadThreshold(_) => "BadThreshold",
            BarrierError::WindowLength { .. } => "WindowLength",
        }
    }
}

/// One set of a certificate and the mass its own state puts on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateSet {
    pub rule: LogRatioSet,
    pub description: SetDescription,
    /// `P_a(set)` for the `a` set, `P_b(set)` for the `b` set.
    pub hit_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierCertificate {
    pub case: CaseLabel,
    pub target: State,
    pub epsilon: Option<f64>,
    pub k: usize,
    pub length: usize,
    pub set_a: Option<CertificateSet>,
    pub set_b: Option<CertificateSet>,
    /// Which set each window position must fall in.
    pub pattern: Vec<State>,
}

impl BarrierCertificate {
    pub fn set_for(&self, s: State) -> Option<&CertificateSet> {
        match s {
            State::A => self.set_a.as_ref(),
            State::B => self.set_b.as_ref(),
        }
    }

    pub fn pattern_string(&self) -> String {
        crate::state::path_string(&self.pattern)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates always serialize")
    }
}

fn certificate_set(model: &TwoStateHmm, rule: LogRatioSet, s: State) -> CertificateSet {
    CertificateSet { rule, description: rule.describe(model), hit_mass: rule.probability(model, s) }
}

/// The sets a margin `eps` induces, keyed by the state that must charge them.
fn sets_for(model: &TwoStateHmm, case: CaseLabel, target: State, eps: f64) -> Vec<(State, LogRatioSet)> {
    let shrink = ln(1.0 - eps);
    match case {
        CaseLabel::Case1 => {
            let stay = model.log_p(State::B, State::B) - model.log_p(State::A, State::A);
            match target {
                State::A => vec![(State::A, LogRatioSet::above(stay - shrink))],
                State::B => vec![(State::B, LogRatioSet::below(stay + shrink))],
            }
        }
        CaseLabel::Case2 => vec![
            (State::A, LogRatioSet::above(-shrink)),
            (State::B, LogRatioSet::below(shrink)),
        ],
        CaseLabel::Case3 => unreachable!("case 3 certificates have no margin"),
    }
}

fn min_mass(model: &TwoStateHmm, sets: &[(State, LogRatioSet)]) -> f64 {
    sets.iter().map(|(s, r)| r.probability(model, *s)).fold(f64::INFINITY, f64::min)
}

fn all_charged(model: &TwoStateHmm, sets: &[(State, LogRatioSet)]) -> bool {
    sets.iter().all(|(s, r)| r.charged_by(model, *s))
}

fn choose_epsilon(
    model: &TwoStateHmm,
    case: CaseLabel,
    target: State,
    threshold: f64,
) -> Result<f64, BarrierError> {
    for eps in EPSILON_GRID.iter().rev() {
        let sets = sets_for(model, case, target, *eps);
        if all_charged(model, &sets) && min_mass(model, &sets) >= threshold {
            return Ok(*eps);
        }
    }
    for eps in EPSILON_GRID.iter().rev() {
        if all_charged(model, &sets_for(model, case, target, *eps)) {
            return Ok(*eps);
        }
    }
    let mut eps = EPSILON_GRID[0];
    for _ in 0..HALVINGS {
        eps *= 0.5;
        if all_charged(model, &sets_for(model, case, target, eps)) {
            return Ok(eps);
        }
    }
    Err(BarrierError::MassThresholdUnreachable)
}

/// Least `k >= 1` with `(1 - eps)^(power * k) < bound`, strictly beyond the
/// tie tolerance in the log domain.
fn least_repetitions(eps: f64, power: usize, bound: f64) -> usize {
    let per_step = power as f64 * ln(1.0 - eps);
    let log_bound = ln(bound);
    let mut k = ((log_bound / per_step).floor().max(1.0)) as usize;
    while k > 1 && compare_with_tie((k - 1) as f64 * per_step, log_bound) == Ordering::Less {
        k -= 1;
    }
    while compare_with_tie(k as f64 * per_step, log_bound) != Ordering::Less {
        k += 1;
    }
    k
}

/// Builds the certificate for the model's case.
///
/// `epsilon` overrides the grid search; `mass_threshold` steers it.
pub fn build_barrier_certificate(
    model: &TwoStateHmm,
    mass_threshold: f64,
    epsilon: Option<f64>,
) -> Result<BarrierCertificate, BarrierError> {
    if !(mass_threshold > 0.0 && mass_threshold <= 1.0) {
        return Err(BarrierError::BadThreshold(mass_threshold));
    }
    if let Some(e) = epsilon {
        if !(e > 0.0 && e < 1.0) {
            return Err(BarrierError::BadEpsilon(e));
        }
    }
    let case = model.classify_case();
    let p = |l: State, m: State| model.p(l, m);
    use State::{A, B};
    match case {
        CaseLabel::Case3 => {
            let pi = model.stationary();
            let mixture = ln(pi[1]) - ln(pi[0]);
            let (target, rule) = if pi[0] >= pi[1] {
                (A, LogRatioSet::above(mixture))
            } else {
                (B, LogRatioSet::below(mixture))
            };
            let set = certificate_set(model, rule, target);
            let (set_a, set_b) = match target {
                A => (Some(set), None),
                B => (None, Some(set)),
            };
            Ok(BarrierCertificate {
                case,
                target,
                epsilon: None,
                k: 0,
                length: 1,
                set_a,
                set_b,
                pattern: vec![target],
            })
        }
        CaseLabel::Case1 | CaseLabel::Case2 => {
            let target = match case {
                CaseLabel::Case1 if p(A, A) >= p(B, B) => A,
                CaseLabel::Case1 => B,
                _ if p(B, A) >= p(A, B) => A,
                _ => B,
            };
            let eps = match epsilon {
                Some(e) => e,
                None => choose_epsilon(model, case, target, mass_threshold)?,
            };
            let sets = sets_for(model, case, target, eps);
            if !all_charged(model, &sets) {
                return Err(BarrierError::EmptyBarrierSet { epsilon: eps });
            }
            let mut set_a = None;
            let mut set_b = None;
            for (s, rule) in sets {
                let cs = certificate_set(model, rule, s);
                match s {
                    A => set_a = Some(cs),
                    B => set_b = Some(cs),
                }
            }
            let (k, pattern) = if case == CaseLabel::Case1 {
                let bound = p(A, B) * p(B, A) / (p(A, A) * p(B, B));
                let k = least_repetitions(eps, 1, bound);
                (k, vec![target; k + 1])
            } else {
                let bound = p(A, A) * p(B, B) / (p(B, A) * p(A, B));
                let k = least_repetitions(eps, 2, bound);
                let pattern = (0..=2 * k)
                    .map(|i| if i % 2 == 0 { target } else { target.other() })
                    .collect::<Vec<_>>();
                (k, pattern)
            };
            Ok(BarrierCertificate {
                case,
                target,
                epsilon: Some(eps),
                k,
                length: pattern.len(),
                set_a,
                set_b,
                pattern,
            })
        }
    }
}

/// A length-1 certificate from single-observation barriers, preferring `a`.
/// `None` when neither barrier set has positive measure.
pub fn length1_certificate(model: &TwoStateHmm) -> Option<BarrierCertificate> {
    let lp = model.log_transitions();
    let mut above = f64::NEG_INFINITY;
    let mut below = f64::INFINITY;
    for i in 0..2 {
        for j in 0..2 {
            let c = (lp[i][1] + lp[1][j]) - (lp[i][0] + lp[0][j]);
            above = above.max(c);
            below = below.min(c);
        }
    }
    let a_rule = LogRatioSet::above(above);
    let b_rule = LogRatioSet::below(below);
    let (target, set_a, set_b) = if a_rule.charged_by(model, State::A) {
        (State::A, Some(certificate_set(model, a_rule, State::A)), None)
    } else if b_rule.charged_by(model, State::B) {
        (State::B, None, Some(certificate_set(model, b_rule, State::B)))
    } else {
        return None;
    };
    Some(BarrierCertificate {
        case: model.classify_case(),
        target,
        epsilon: None,
        k: 0,
        length: 1,
        set_a,
        set_b,
        pattern: vec![target],
    })
}

/// Whether every window observation lies in its prescribed set.
pub fn verify_barrier(
    model: &TwoStateHmm,
    cert: &BarrierCertificate,
    window: &[Observation],
) -> Result<bool, BarrierError> {
    if window.len() != cert.length {
        return Err(BarrierError::WindowLength { got: window.len(), want: cert.length });
    }
    Ok(cert.pattern.iter().zip(window).all(|(s, x)| {
        cert.set_for(*s).is_some_and(|set| set.rule.contains(model, x))
    }))
}

/// Draws a window matching the certificate, each position from its state's
/// emission conditioned on the prescribed set.
pub fn sample_window(model: &TwoStateHmm, cert: &BarrierCertificate, rng: &mut SimRng) -> Vec<Observation> {
    cert.pattern
        .iter()
        .map(|s| {
            let set = cert.set_for(*s).expect("pattern states always carry a set");
            set.rule.sample(model, *s, rng).expect("certificate sets are nonempty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{EmissionModel, Initial};
    use crate::nodes::classify_step;
    use crate::viterbi;

    #[test]
    fn worked_constants_at_half_margin() {
        let c1 = build_barrier_certificate(&case1_example(), 0.1, Some(0.5)).unwrap();
        assert_eq!((c1.k, c1.length, c1.target), (7, 8, State::A));
        assert!(verify_barrier(&case1_example(), &c1, &sym(&[0; 8])).unwrap());
        assert!(!verify_barrier(&case1_example(), &c1, &sym(&[0, 0, 0, 1, 0, 0, 0, 0])).unwrap());

        let m2 = case2_example();
        let c2 = build_barrier_certificate(&m2, 0.1, Some(0.5)).unwrap();
        assert_eq!((c2.k, c2.length, c2.target), (3, 7, State::A));
        assert_eq!(c2.pattern_string(), "abababa");
        assert!(verify_barrier(&m2, &c2, &sym(&[0, 1, 0, 1, 0, 1, 0])).unwrap());
        assert!(matches!(
            verify_barrier(&m2, &c2, &sym(&[0, 1])),
            Err(BarrierError::WindowLength { got: 2, want: 7 })
        ));
    }

    #[test]
    fn grid_margin_picks_largest_admissible() {
        // ln-ratio at symbol 0 is ln 4, so eps must stay below 0.75
        let c1 = build_barrier_certificate(&case1_example(), 0.1, None).unwrap();
        assert_eq!(c1.epsilon, Some(0.7));
        assert_eq!(c1.k, 4);
        let c2 = build_barrier_certificate(&case2_example(), 0.1, None).unwrap();
        assert_eq!(c2.epsilon, Some(0.7));
        assert_eq!(c2.k, 2);
        assert!(c2.set_a.as_ref().unwrap().hit_mass > 0.0);
        assert!(c2.set_b.as_ref().unwrap().hit_mass > 0.0);
    }

    #[test]
    fn case3_certificate() {
        let m = case3_example();
        let c = build_barrier_certificate(&m, 0.1, None).unwrap();
        assert_eq!((c.length, c.k, c.target, c.epsilon), (1, 0, State::A, None));
        // 0.6 * 0.8 > 0.4 * 0.2 but 0.6 * 0.2 < 0.4 * 0.8
        assert_eq!(
            c.set_a.as_ref().unwrap().description,
            SetDescription::Symbols { symbols: vec!["0".into()] }
        );
    }

    #[test]
    fn bad_arguments() {
        let m = case1_example();
        assert_eq!(build_barrier_certificate(&m, 0.0, None), Err(BarrierError::BadThreshold(0.0)));
        assert_eq!(build_barrier_certificate(&m, 0.1, Some(1.0)), Err(BarrierError::BadEpsilon(1.0)));
        // at eps = 0.8 symbol 0 no longer qualifies
        assert_eq!(
            build_barrier_certificate(&m, 0.1, Some(0.8)),
            Err(BarrierError::EmptyBarrierSet { epsilon: 0.8 })
        );
    }

    #[test]
    fn length1_certificate_from_unequal_support() {
        let m = model([[0.9, 0.1], [0.1, 0.9]], [1.0, 0.0], [0.3, 0.7]);
        let c = length1_certificate(&m).unwrap();
        assert_eq!((c.target, c.length), (State::B, 1));
        assert!(verify_barrier(&m, &c, &sym(&[1])).unwrap());
        assert!(length1_certificate(&case1_example()).is_none());
    }

    #[test]
    fn least_repetitions_is_minimal() {
        for (eps, power, bound) in [(0.5, 1, 0.01 / 0.81), (0.5, 2, 0.0625), (0.3, 1, 0.5), (0.9, 2, 0.999)] {
            let k = least_repetitions(eps, power, bound);
            let val = |k: usize| libm::pow(1.0 - eps, (power * k) as f64);
            assert!(val(k) < bound);
            assert!(k == 1 || val(k - 1) >= bound * (1.0 - 1e-12));
        }
    }

    fn window_contains_strong_node(m: &TwoStateHmm, cert: &BarrierCertificate, prefix: &[Observation], window: &[Observation]) -> bool {
        let mut obs = prefix.to_vec();
        obs.extend_from_slice(window);
        let t = viterbi::forward(m, &obs, m.log_initial()).unwrap();
        t.scores[prefix.len()..]
            .iter()
            .any(|s| classify_step(m, s).unwrap().kind.is_strong())
            && cert.length == window.len()
    }

    #[test]
    fn sampled_windows_contain_strong_nodes() {
        let gauss = TwoStateHmm::new(
            [[0.3, 0.7], [0.6, 0.4]],
            Initial::Stationary,
            EmissionModel::Gaussian { mean: 0.0, variance: 1.0 },
            EmissionModel::Gaussian { mean: 0.8, variance: 2.0 },
        )
        .unwrap();
        let models = [case1_example(), case2_example(), case3_example(), gauss];
        let mut rng = SimRng::seed_from(77);
        for m in &models {
            let cert = build_barrier_certificate(m, 0.1, None).unwrap();
            for _ in 0..100 {
                let n = rng.range_inclusive(0, 30);
                let prefix = if n == 0 {
                    vec![]
                } else {
                    crate::sample::sample_observations(m, n, &mut rng)
                };
                let window = sample_window(m, &cert, &mut rng);
                assert!(verify_barrier(m, &cert, &window).unwrap());
                assert!(window_contains_strong_node(m, &cert, &prefix, &window));
            }
        }
    }
}
