//! One replica of each property suite.
//!
//! Every function draws all of its randomness from the generator it is
//! handed, so a replica is fully determined by `(model, seed, replica)`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use super::SuiteConfig;
use crate::model::{CaseLabel, Observation, TwoStateHmm};
use crate::nodes::{
    build_barrier_certificate, check_conditions, classify_step, sample_window, verify_barrier,
    BarrierCertificate, LogRatioSet, NodeKind, NodeReport,
};
use crate::numeric::compare_with_tie;
use crate::rng::SimRng;
use crate::sample::{sample_from_state, sample_with, Realization};
use crate::state::State;
use crate::stream::StreamDecoder;
use crate::viterbi::{self, decode_batch, step_scores, ScorePair};

/// A violated property at a time index of the replica's data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub time: usize,
    pub detail: String,
}

/// Everything one replica contributes to a suite result.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicaOutcome {
    pub checks: u64,
    /// Hard property violations.
    pub failures: Vec<Failure>,
    /// Replica-level shortfalls that only fail the suite in aggregate.
    pub shortfalls: Vec<Failure>,
    /// `(successes, trials)` summed across replicas into rates.
    pub tallies: BTreeMap<&'static str, (u64, u64)>,
    /// Per-replica measurements summarised across replicas.
    pub values: BTreeMap<&'static str, f64>,
    pub skipped: Option<String>,
}

impl ReplicaOutcome {
    fn skipped(reason: impl Into<String>) -> Self {
        ReplicaOutcome { skipped: Some(reason.into()), ..Default::default() }
    }

    fn check(&mut self, ok: bool, time: usize, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(Failure { time, detail: detail() });
        }
    }

    fn tally(&mut self, key: &'static str, successes: u64, trials: u64) {
        let t = self.tallies.entry(key).or_insert((0, 0));
        t.0 += successes;
        t.1 += trials;
    }
}

fn classify_all(model: &TwoStateHmm, scores: &[ScorePair]) -> Vec<NodeReport> {
    scores
        .iter()
        .map(|s| classify_step(model, s).expect("sampled data has positive likelihood"))
        .collect()
}

fn realize(model: &TwoStateHmm, n: usize, rng: &mut SimRng) -> Realization {
    sample_with(model, n, rng)
}

/// Continues the hidden chain from `last` for `m` further steps.
fn continuation(model: &TwoStateHmm, last: State, m: usize, rng: &mut SimRng) -> Vec<Observation> {
    let next = if rng.bernoulli(model.p(last, last.other())) { last.other() } else { last };
    sample_from_state(model, m, next, rng).observations
}

/// Decoded state at the time of `scores` once `cont` has been appended.
/// Equivalent to decoding the full extended sequence, since the prefix of
/// the recursion does not depend on later observations.
fn state_after(model: &TwoStateHmm, scores: ScorePair, cont: &[Observation]) -> State {
    let mut cur = scores;
    let mut bps = Vec::with_capacity(cont.len());
    for x in cont {
        let (next, bp) = step_scores(model, &cur, x);
        bps.push(bp);
        cur = next;
    }
    let mut s = cur.best();
    for bp in bps.iter().rev() {
        s = bp.predecessor(s);
    }
    s
}

/// Gaps between strong-node boundaries (time 0, each strong node, `n`).
fn strong_gaps(reports: &[NodeReport]) -> Vec<usize> {
    let mut gaps = Vec::new();
    let mut last = 0;
    for r in reports {
        if r.kind.is_strong() {
            gaps.push(r.time - last - 1);
            last = r.time;
        }
    }
    if last < reports.len() {
        gaps.push(reports.len() - last - 1);
    }
    gaps
}

fn record_gaps(out: &mut ReplicaOutcome, reports: &[NodeReport]) {
    let gaps = strong_gaps(reports);
    let max = gaps.iter().copied().max().unwrap_or(0);
    let mean = gaps.iter().sum::<usize>() as f64 / gaps.len().max(1) as f64;
    out.values.insert("max_gap", max as f64);
    out.values.insert("mean_gap", mean);
}

/// Strong nodes fix the decoded state for every continuation.
pub fn future_invariance(model: &TwoStateHmm, n: usize, cfg: &SuiteConfig, rng: &mut SimRng) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let real = realize(model, n, rng);
    let trellis = viterbi::forward(model, &real.observations, model.log_initial())
        .expect("sampled data has positive likelihood");
    let reports = classify_all(model, &trellis.scores);

    let count = |k: NodeKind| reports.iter().filter(|r| r.kind == k).count() as u64;
    let (strong_a, strong_b) = (count(NodeKind::StrongA), count(NodeKind::StrongB));
    out.tally("strong_a_rate", strong_a, n as u64);
    out.tally("strong_b_rate", strong_b, n as u64);
    out.tally("strong_rate", strong_a + strong_b, n as u64);
    out.tally("weak_rate", count(NodeKind::WeakA) + count(NodeKind::WeakB), n as u64);
    record_gaps(&mut out, &reports);

    if model.classify_case() == CaseLabel::Case3 {
        // every step is a strong a-node exactly when p_.a f_a(x) > p_.b f_b(x)
        let set = LogRatioSet::above(model.log_p(State::A, State::B) - model.log_p(State::A, State::A));
        let pi = model.stationary();
        let mass = |s: &LogRatioSet| pi[0] * s.probability(model, State::A) + pi[1] * s.probability(model, State::B);
        out.values.insert("expected_strong_a_rate", mass(&set));
        let below = LogRatioSet::below(set.threshold);
        out.values.insert("expected_strong_b_rate", mass(&below));
    }

    let strong: Vec<&NodeReport> = reports.iter().filter(|r| r.kind.is_strong()).collect();
    let take = strong.len().min(cfg.nodes_per_replica);
    for i in 0..take {
        let node = strong[i * strong.len() / take];
        let u = node.time;
        let s = node.kind.strong_state().expect("strong");
        for _ in 0..cfg.continuations {
            let m = rng.range_inclusive(1, cfg.max_continuation);
            let cont = continuation(model, real.states[u - 1], m, rng);
            let got = state_after(model, trellis.scores[u - 1], &cont);
            out.check(got == s, u, || {
                format!("strong {s}-node at {u} decoded as {got} after {m} more observations")
            });
        }
    }
    out.tally("nodes_tested", take as u64, strong.len() as u64);
    out
}

fn strong_in_window(model: &TwoStateHmm, prefix: &[Observation], window: &[Observation]) -> Vec<NodeReport> {
    let mut obs = prefix.to_vec();
    obs.extend_from_slice(window);
    let t = viterbi::forward(model, &obs, model.log_initial()).expect("window members have positive density");
    classify_all(model, &t.scores[prefix.len()..])
}

fn random_prefix(model: &TwoStateHmm, lo: usize, hi: usize, rng: &mut SimRng) -> Vec<Observation> {
    let len = rng.range_inclusive(lo, hi);
    if len == 0 {
        Vec::new()
    } else {
        sample_with(model, len, rng).observations
    }
}

/// Windows drawn from the certificate sets contain a strong node after any
/// prefix; in case 1 every strong node past the first window position is
/// of the target state.
pub fn barriers(model: &TwoStateHmm, n: usize, cfg: &SuiteConfig, rng: &mut SimRng) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let cert = match build_barrier_certificate(model, cfg.mass_threshold, cfg.epsilon) {
        Ok(c) => c,
        Err(e) => {
            out.check(false, 0, || format!("no certificate: {e}"));
            return out;
        }
    };
    out.values.insert("certificate_length", cert.length as f64);
    for _ in 0..cfg.prefixes {
        let prefix = random_prefix(model, 0, cfg.max_prefix, rng);
        let window = sample_window(model, &cert, rng);
        let start = prefix.len() + 1;
        let member = verify_barrier(model, &cert, &window).unwrap_or(false);
        out.check(member, start, || "sampled window is not in the certificate sets".into());
        let reports = strong_in_window(model, &prefix, &window);
        let strong = reports.iter().any(|r| r.kind.is_strong());
        out.check(strong, start, || format!("no strong node in window starting at {start}"));
        if cert.case == CaseLabel::Case1 {
            check_case1_window(&mut out, &cert, &reports, start);
        }
    }
    let real = realize(model, n, rng);
    let len = cert.length;
    if n >= len {
        let hits = (0..=n - len)
            .filter(|i| verify_barrier(model, &cert, &real.observations[*i..*i + len]).unwrap_or(false))
            .count() as u64;
        out.tally("barrier_occurrence", hits, (n - len + 1) as u64);
    }
    out
}

fn check_case1_window(out: &mut ReplicaOutcome, cert: &BarrierCertificate, reports: &[NodeReport], start: usize) {
    let target = cert.target;
    for r in &reports[1..] {
        out.check(r.kind.strong_state() != Some(target.other()), r.time, || {
            format!("strong {}-node inside a {target}-barrier window", target.other())
        });
    }
    let has_target = reports.iter().any(|r| r.kind.strong_state() == Some(target));
    out.check(has_target, start, || format!("no strong {target}-node in window"));
}

/// At least one of the two dominance conditions holds.
pub fn dominance(model: &TwoStateHmm) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let report = check_conditions(model);
    out.tally("a_dominance", report.holds("a_dominance") as u64, 1);
    out.tally("b_dominance", report.holds("b_dominance") as u64, 1);
    out.check(report.some_dominance_holds(), 0, || "neither dominance condition holds".into());
    out
}

/// Case 1 paths change state only at nodes, case 2 paths repeat a state
/// only at nodes, and case 3 paths follow the pointwise rule.
pub fn case_structure(model: &TwoStateHmm, n: usize, rng: &mut SimRng) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let real = realize(model, n, rng);
    let obs = &real.observations;
    let trellis = viterbi::forward(model, obs, model.log_initial()).expect("sampled data has positive likelihood");
    let path = trellis.backtrack().states;
    let reports = classify_all(model, &trellis.scores);
    let case = model.classify_case();
    let mut changes = 0;
    for u in 0..n.saturating_sub(1) {
        let same = path[u] == path[u + 1];
        changes += (!same) as u64;
        let kind = reports[u].kind;
        match case {
            CaseLabel::Case1 => out.check(same || kind.is_node(), u + 1, || {
                format!("state changes after {kind} step")
            }),
            CaseLabel::Case2 => out.check(!same || kind.is_node(), u + 1, || {
                format!("state repeats after {kind} step")
            }),
            CaseLabel::Case3 => {}
        }
    }
    if case == CaseLabel::Case3 {
        let (la, lb) = (model.log_p(State::A, State::A), model.log_p(State::A, State::B));
        for (i, x) in obs.iter().enumerate() {
            let lf = model.log_densities(x);
            let pointwise = match compare_with_tie(la + lf[0], lb + lf[1]) {
                Ordering::Less => State::B,
                _ => State::A,
            };
            out.check(path[i] == pointwise, i + 1, || {
                format!("decoded {} but pointwise rule gives {pointwise}", path[i])
            });
            out.check(reports[i].kind.is_node(), i + 1, || format!("{} step in case 3", reports[i].kind));
        }
    }
    out.tally("state_changes", changes, n.saturating_sub(1) as u64);
    out
}

/// With a null stay set for one state in case 1: no strong nodes of that
/// state, and the path is constant after the first strong node of the other.
pub fn dominated_state(model: &TwoStateHmm, n: usize, rng: &mut SimRng) -> ReplicaOutcome {
    if model.classify_case() != CaseLabel::Case1 {
        return ReplicaOutcome::skipped("requires a case 1 model");
    }
    let report = check_conditions(model);
    let dominated = if report.holds("b_stay_null") {
        State::B
    } else if report.holds("a_stay_null") {
        State::A
    } else {
        return ReplicaOutcome::skipped("requires a null stay set for one state");
    };
    let winner = dominated.other();
    let mut out = ReplicaOutcome::default();
    let real = realize(model, n, rng);
    let trellis = viterbi::forward(model, &real.observations, model.log_initial())
        .expect("sampled data has positive likelihood");
    let path = trellis.backtrack().states;
    let reports = classify_all(model, &trellis.scores);
    for r in &reports {
        out.check(r.kind.strong_state() != Some(dominated), r.time, || {
            format!("strong {dominated}-node")
        });
    }
    let first = reports.iter().find(|r| r.kind.strong_state() == Some(winner)).map(|r| r.time);
    if let Some(u) = first {
        let bad = path[u - 1..].iter().position(|s| *s != winner);
        out.check(bad.is_none(), bad.map_or(u, |i| u + i), || {
            format!("path leaves {winner} after the first strong {winner}-node at {u}")
        });
        out.values.insert("first_strong_node", u as f64);
    }
    out.tally("reached_strong_node", first.is_some() as u64, 1);
    out
}

/// Case 2 alternation pairs. With `p_ba >= p_ab` and `X_a`, `X_b` the
/// certificate sets: in `(z1, z2)` from `X_a x X_b`, `z1` is never a
/// `b`-node; in `(z2, z3)` from `X_b x X_a`, a `b`-node at `z2` forces a
/// strong `a`-node at `z3`. The other orientation mirrors this.
pub fn alternation(model: &TwoStateHmm, cfg: &SuiteConfig, rng: &mut SimRng) -> ReplicaOutcome {
    if model.classify_case() != CaseLabel::Case2 {
        return ReplicaOutcome::skipped("requires a case 2 model");
    }
    let cert = match build_barrier_certificate(model, cfg.mass_threshold, cfg.epsilon) {
        Ok(c) => c,
        Err(e) => {
            let mut out = ReplicaOutcome::default();
            out.check(false, 0, || format!("no certificate: {e}"));
            return out;
        }
    };
    let lead = cert.target;
    let other = lead.other();
    let set = |s: State| cert.set_for(s).expect("case 2 certificates carry both sets").rule;
    let mut out = ReplicaOutcome::default();
    let mut forced = 0;
    for _ in 0..cfg.windows {
        let prefix = random_prefix(model, 1, cfg.max_prefix, rng);
        let z1 = set(lead).sample(model, lead, rng).expect("charged set");
        let z2 = set(other).sample(model, other, rng).expect("charged set");
        let r = strong_in_window(model, &prefix, &[z1, z2]);
        out.check(r[0].kind.node_state() != Some(other), r[0].time, || {
            format!("{other}-node ({}) at the {lead}-set position", r[0].kind)
        });

        let prefix = random_prefix(model, 1, cfg.max_prefix, rng);
        let z2 = set(other).sample(model, other, rng).expect("charged set");
        let z3 = set(lead).sample(model, lead, rng).expect("charged set");
        let r = strong_in_window(model, &prefix, &[z2, z3]);
        if r[0].kind.node_state() == Some(other) {
            forced += 1;
            out.check(r[1].kind.strong_state() == Some(lead), r[1].time, || {
                format!("{other}-node at {} not followed by a strong {lead}-node ({})", r[0].time, r[1].kind)
            });
        }
    }
    out.tally("other_node_at_second_pair", forced, cfg.windows as u64);
    out
}

/// The state whose strong nodes recur by construction of the certificate.
pub fn recurring_state(model: &TwoStateHmm, cfg: &SuiteConfig) -> State {
    build_barrier_certificate(model, cfg.mass_threshold, cfg.epsilon).map_or(State::A, |c| c.target)
}

/// Strong nodes of the recurring state keep arriving: more at `n` than at
/// `n / 2`.
pub fn growth(model: &TwoStateHmm, n: usize, cfg: &SuiteConfig, rng: &mut SimRng) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let target = recurring_state(model, cfg);
    let real = realize(model, n, rng);
    let trellis = viterbi::forward(model, &real.observations, model.log_initial())
        .expect("sampled data has positive likelihood");
    let reports = classify_all(model, &trellis.scores);
    let half = n / 2;
    let count = |upto: usize, pick: &dyn Fn(NodeKind) -> bool| {
        reports[..upto].iter().filter(|r| pick(r.kind)).count() as f64
    };
    let is_target = |k: NodeKind| k.strong_state() == Some(target);
    let is_strong = |k: NodeKind| k.is_strong();
    let (t_half, t_full) = (count(half, &is_target), count(n, &is_target));
    out.values.insert("target_half", t_half);
    out.values.insert("target_full", t_full);
    out.values.insert("strong_half", count(half, &is_strong));
    out.values.insert("strong_full", count(n, &is_strong));
    out.tally("grew", (t_full > t_half) as u64, 1);
    if t_full <= t_half {
        out.shortfalls.push(Failure {
            time: n,
            detail: format!("{t_full} strong {target}-nodes at {n}, {t_half} at {half}"),
        });
    }
    out
}

/// Streaming segments match batch decoding, committed states survive
/// continuations, and the buffer never exceeds the largest gap plus one.
pub fn stream(model: &TwoStateHmm, n: usize, cfg: &SuiteConfig, rng: &mut SimRng) -> ReplicaOutcome {
    let mut out = ReplicaOutcome::default();
    let real = realize(model, n, rng);
    let obs = &real.observations;
    let mut decoder = StreamDecoder::new(model.clone());
    let mut states = Vec::with_capacity(n);
    let mut last_end = 0;
    for x in obs {
        if let Some(seg) = decoder.push(x).expect("sampled data has positive likelihood") {
            out.check(seg.start == last_end + 1 && seg.end > last_end, seg.start, || {
                format!("segment {}..{} after boundary {last_end}", seg.start, seg.end)
            });
            last_end = seg.end;
            states.extend_from_slice(&seg.states);
        }
    }
    let live = decoder.clone();
    let committed = decoder.committed_len();
    if let Ok(tail) = decoder.flush() {
        states.extend_from_slice(&tail.states);
    }
    let batch = decode_batch(model, obs).expect("sampled data has positive likelihood").states;
    let mismatch = states.iter().zip(&batch).position(|(s, b)| s != b);
    out.check(mismatch.is_none() && states.len() == n, mismatch.map_or(n, |i| i + 1), || {
        "stream and batch paths differ".into()
    });
    let stats = decoder.stats();
    out.check(stats.peak_buffer == stats.max_gap + 1, n, || {
        format!("peak buffer {} with max gap {}", stats.peak_buffer, stats.max_gap)
    });
    out.values.insert("committed_fraction", stats.committed_fraction);
    out.values.insert("peak_buffer", stats.peak_buffer as f64);
    out.values.insert("max_gap", stats.max_gap as f64);

    for _ in 0..cfg.stream_continuations {
        let m = rng.range_inclusive(1, cfg.max_continuation);
        let cont = continuation(model, real.states[n - 1], m, rng);
        let mut extended = obs.clone();
        extended.extend_from_slice(&cont);
        let batch = decode_batch(model, &extended).expect("sampled data has positive likelihood").states;
        let changed = states[..committed].iter().zip(&batch).position(|(s, b)| s != b);
        out.check(changed.is_none(), changed.map_or(0, |i| i + 1), || {
            format!("committed state changed after {m} more observations")
        });
        let mut d = live.clone();
        for x in &cont {
            d.push(x).expect("sampled data has positive likelihood");
        }
        out.check(d.committed_len() >= committed, n, || "committed length decreased".into());
    }
    out
}
