//! Node classification, distribution-level conditions and barrier
//! certificates.
//!
//! A time `u` is an `a`-node when, from the scores at `u`, entering either
//! state at `u + 1` is at least as good through `a` as through `b`:
//!
//! ```text
//! s_u(a) + ln p_aa >= s_u(b) + ln p_ba
//! s_u(a) + ln p_ab >= s_u(b) + ln p_bb
//! ```
//!
//! It is strong when both hold strictly beyond the tie tolerance; a strong
//! node fixes the state at `u` for every continuation. `b`-nodes mirror
//! this. A step that is neither is either a "stay" step (each state is best
//! reached from itself) or a "swap" step (each from the other state).

mod barrier;
mod conditions;
mod sets;

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Observation, TwoStateHmm};
use crate::numeric::compare_with_tie;
use crate::state::State;
use crate::viterbi::{self, ScorePair, ViterbiError};

pub use barrier::{
    build_barrier_certificate, length1_certificate, sample_window, verify_barrier,
    BarrierCertificate, BarrierError, CertificateSet, DEFAULT_MASS_THRESHOLD, EPSILON_GRID,
};
pub use conditions::{check_conditions, ConditionEntry, ConditionReport};
pub use sets::{LogRatioSet, SetDescription, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    StrongA,
    WeakA,
    StrongB,
    WeakB,
    /// Not a node; both states keep their own predecessor.
    Stay,
    /// Not a node; both states take the other state as predecessor.
    Swap,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::StrongA,
        NodeKind::WeakA,
        NodeKind::StrongB,
        NodeKind::WeakB,
        NodeKind::Stay,
        NodeKind::Swap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::StrongA => "strong_a",
            NodeKind::WeakA => "weak_a",
            NodeKind::StrongB => "strong_b",
            NodeKind::WeakB => "weak_b",
            NodeKind::Stay => "stay",
            NodeKind::Swap => "swap",
        }
    }

    pub fn is_node(self) -> bool {
        !matches!(self, NodeKind::Stay | NodeKind::Swap)
    }

    pub fn is_strong(self) -> bool {
        matches!(self, NodeKind::StrongA | NodeKind::StrongB)
    }

    /// The state a node pins, if this is a node.
    pub fn node_state(self) -> Option<State> {
        match self {
            NodeKind::StrongA | NodeKind::WeakA => Some(State::A),
            NodeKind::StrongB | NodeKind::WeakB => Some(State::B),
            NodeKind::Stay | NodeKind::Swap => None,
        }
    }

    /// The state a strong node pins.
    pub fn strong_state(self) -> Option<State> {
        match self {
            NodeKind::StrongA => Some(State::A),
            NodeKind::StrongB => Some(State::B),
            _ => None,
        }
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeReport {
    pub time: usize,
    pub kind: NodeKind,
    /// `(s_u(a) + ln p_aa) - (s_u(b) + ln p_ba)`: advantage of entering `a`
    /// from `a` over entering it from `b`.
    pub margin_into_a: f64,
    /// `(s_u(a) + ln p_ab) - (s_u(b) + ln p_bb)`: the same for entering `b`.
    pub margin_into_b: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("ImpossibleScores: both scores are -inf at time {time}")]
    ImpossibleScores { time: usize },
}

/// Classifies time `u` from its score pair.
///
/// The next observation is not needed: whether `u` is a node depends only
/// on the scores at `u` and the transition matrix.
pub fn classify_step(model: &TwoStateHmm, scores: &ScorePair) -> Result<NodeReport, NodeError> {
    if scores.is_impossible() {
        return Err(NodeError::ImpossibleScores { time: scores.time });
    }
    let lp = model.log_transitions();
    let via = |from: State, to: State| scores.get(from) + lp[from.index()][to.index()];
    let (a_to_a, b_to_a) = (via(State::A, State::A), via(State::B, State::A));
    let (a_to_b, b_to_b) = (via(State::A, State::B), via(State::B, State::B));
    let into_a = compare_with_tie(a_to_a, b_to_a);
    let into_b = compare_with_tie(a_to_b, b_to_b);
    use Ordering::*;
    let kind = match (into_a, into_b) {
        (Greater, Greater) => NodeKind::StrongA,
        (Less, Less) => NodeKind::StrongB,
        (Greater, Less) => NodeKind::Stay,
        (Less, Greater) => NodeKind::Swap,
        (Greater | Equal, Greater | Equal) => NodeKind::WeakA,
        (Less | Equal, Less | Equal) => NodeKind::WeakB,
    };
    Ok(NodeReport {
        time: scores.time,
        kind,
        margin_into_a: a_to_a - b_to_a,
        margin_into_b: a_to_b - b_to_b,
    })
}

/// Classifies every step of `obs` decoded from the model's initial
/// distribution.
pub fn node_reports(model: &TwoStateHmm, obs: &[Observation]) -> Result<Vec<NodeReport>, ViterbiError> {
    let trellis = viterbi::forward(model, obs, model.log_initial())?;
    Ok(trellis
        .scores
        .iter()
        .map(|s| classify_step(model, s).expect("forward pass never yields impossible scores"))
        .collect())
}

/// Whether a single observation is a length-1 barrier for each state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Length1Barrier {
    pub a: bool,
    pub b: bool,
}

/// `x` is an `a`-barrier when `p_ia f_a(x) p_aj > p_ib f_b(x) p_bj` for all
/// four `(i, j)`, strictly beyond the tie tolerance; it is then a strong
/// `a`-node wherever it occurs after the first position.
pub fn check_length1_barrier(model: &TwoStateHmm, x: &Observation) -> Length1Barrier {
    let lf = model.log_densities(x);
    let lp = model.log_transitions();
    let through = |i: usize, s: usize, j: usize| lp[i][s] + lf[s] + lp[s][j];
    let mut a = true;
    let mut b = true;
    for i in 0..2 {
        for j in 0..2 {
            match compare_with_tie(through(i, 0, j), through(i, 1, j)) {
                Ordering::Greater => b = false,
                Ordering::Less => a = false,
                Ordering::Equal => {
                    a = false;
                    b = false;
                }
            }
        }
    }
    Length1Barrier { a, b }
}

pub const NODE_CSV_HEADER: &str = "time,kind,margin1,margin2";

/// Writes reports as `time,kind,margin1,margin2` with margins in
/// scientific notation to 17 significant digits.
pub fn write_node_csv<W: Write>(reports: &[NodeReport], mut w: W) -> io::Result<()> {
    writeln!(w, "{NODE_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e}",
            r.time, r.kind, r.margin_into_a, r.margin_into_b
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::numeric::ln;

    #[test]
    fn worked_strong_a_node() {
        let m = case1_example();
        let r = node_reports(&m, &sym(&[0, 0])).unwrap();
        assert_eq!(r[1].kind, NodeKind::StrongA);
        assert!((r[1].margin_into_a - (ln(0.2592) - ln(0.0018))).abs() < 1e-12);
        assert!((r[1].margin_into_b - (ln(0.0288) - ln(0.0162))).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_in_case1_are_a_stay_step() {
        // ratio 1 lies strictly between 1/9 and 9
        let m = case1_example();
        let s = ScorePair { time: 4, log_a: -3.0, log_b: -3.0 };
        assert_eq!(classify_step(&m, &s).unwrap().kind, NodeKind::Stay);
    }

    #[test]
    fn case2_swap_and_case3_always_node() {
        let m = case2_example();
        let s = ScorePair { time: 2, log_a: -1.0, log_b: -1.0 };
        assert_eq!(classify_step(&m, &s).unwrap().kind, NodeKind::Swap);

        let m3 = case3_example();
        let obs = sym(&[0, 1, 1, 0, 1, 0, 0, 1]);
        for r in node_reports(&m3, &obs).unwrap() {
            assert!(r.kind.is_node(), "{r:?}");
        }
    }

    #[test]
    fn ties_are_weak() {
        let m = case1_example();
        // into_a exactly tied: s_a + ln .9 = s_b + ln .1
        let s = ScorePair { time: 1, log_a: ln(0.1), log_b: ln(0.9) };
        let r = classify_step(&m, &s).unwrap();
        assert_eq!(r.kind, NodeKind::WeakB);
        let s = ScorePair { time: 1, log_a: ln(0.9), log_b: ln(0.1) };
        assert_eq!(classify_step(&m, &s).unwrap().kind, NodeKind::WeakA);
        let s = ScorePair { time: 1, log_a: f64::NEG_INFINITY, log_b: f64::NEG_INFINITY };
        assert!(classify_step(&m, &s).is_err());
        let s = ScorePair { time: 1, log_a: -5.0, log_b: f64::NEG_INFINITY };
        assert_eq!(classify_step(&m, &s).unwrap().kind, NodeKind::StrongA);
    }

    #[test]
    fn length1_barrier_examples() {
        // 0.008 < 0.162 for (b, b)
        let m = case1_example();
        assert_eq!(check_length1_barrier(&m, &sym(&[0])[0]), Length1Barrier { a: false, b: false });
        // 0.032 < 0.128 for (a, a)
        let m2 = case2_example();
        assert!(!check_length1_barrier(&m2, &sym(&[0])[0]).a);

        let unequal = model([[0.9, 0.1], [0.1, 0.9]], [1.0, 0.0], [0.3, 0.7]);
        assert_eq!(
            check_length1_barrier(&unequal, &sym(&[1])[0]),
            Length1Barrier { a: false, b: true }
        );
    }

    #[test]
    fn length1_barrier_is_strong_node_after_any_prefix() {
        let m = model([[0.7, 0.3], [0.4, 0.6]], [0.99, 0.01], [0.02, 0.98]);
        let x = sym(&[0])[0];
        assert!(check_length1_barrier(&m, &x).a);
        for prefix in [vec![1u32], vec![1, 1, 1], vec![0, 1, 0, 1]] {
            let mut obs = sym(&prefix);
            obs.push(x);
            let r = node_reports(&m, &obs).unwrap();
            assert_eq!(r.last().unwrap().kind, NodeKind::StrongA);
        }
    }

    #[test]
    fn csv_format() {
        let m = case1_example();
        let r = node_reports(&m, &sym(&[0, 0])).unwrap();
        let mut out = Vec::new();
        write_node_csv(&r, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], NODE_CSV_HEADER);
        assert!(lines[2].starts_with("2,strong_a,4.96981329957600"), "{}", lines[2]);
    }
}
