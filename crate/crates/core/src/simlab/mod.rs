//! Replicated Monte Carlo verification of node, barrier and streaming
//! properties.
//!
//! A plan names a suite, a model source, the replica count `R`, the
//! sequence length `n` and a base seed. Replica `r` draws its data from
//! `SimRng::for_replica(seed, r)` and, for generated models, its model from
//! stream `r + MODEL_STREAM` of the same key, so a fixed model replayed with
//! the recorded `(seed, replica)` sees exactly the same data. Replicas may
//! run on a worker pool; results are folded in replica order, so the report
//! does not depend on the number of workers.

mod generate;
mod stats;
mod suites;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

pub use generate::{random_dominated_model, random_emissions, random_model, random_transitions, Family};
pub use stats::{mean, quantile, wilson_interval, Rate};
pub use suites::{Failure, ReplicaOutcome};
pub use sweep::{sweep_models, write_sweep_csv, SweepGrid, SweepPoint, SWEEP_CSV_HEADER};

use crate::model::{CaseLabel, ModelDocument, TwoStateHmm};
use crate::nodes::DEFAULT_MASS_THRESHOLD;
use crate::rng::SimRng;

/// Stream offset separating model draws from data draws.
pub const MODEL_STREAM: u64 = 1 << 62;

/// Counterexamples kept per suite.
const MAX_COUNTEREXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    /// Strong nodes fix the decoded state under random continuations.
    Nodes,
    /// Certificate windows contain strong nodes after random prefixes.
    Barriers,
    /// One of the two dominance conditions always holds.
    Dominance,
    /// Where decoded paths may change or repeat a state.
    CaseStructure,
    /// Case 1 with a null stay set: the dominated state never wins.
    DominatedState,
    /// Case 2 alternation pairs.
    Alternation,
    /// Strong nodes keep arriving as `n` doubles.
    Growth,
    /// Streaming decoder against batch decoding.
    Stream,
    All,
}

impl Suite {
    pub const EACH: [Suite; 8] = [
        Suite::Nodes,
        Suite::Barriers,
        Suite::Dominance,
        Suite::CaseStructure,
        Suite::DominatedState,
        Suite::Alternation,
        Suite::Growth,
        Suite::Stream,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Nodes => "nodes",
            Suite::Barriers => "barriers",
            Suite::Dominance => "dominance",
            Suite::CaseStructure => "case-structure",
            Suite::DominatedState => "dominated-state",
            Suite::Alternation => "alternation",
            Suite::Growth => "growth",
            Suite::Stream => "stream",
            Suite::All => "all",
        }
    }

    /// The suites a selector expands to.
    pub fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => Suite::EACH.to_vec(),
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Suite {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = PlanError;

    /// Accepts the descriptive names plus the legacy selectors `lemma2`,
    /// `corollary8` and `lemma10`.
    fn from_str(s: &str) -> Result<Suite, PlanError> {
        Ok(match s {
            "nodes" => Suite::Nodes,
            "barriers" => Suite::Barriers,
            "dominance" | "lemma2" => Suite::Dominance,
            "case-structure" => Suite::CaseStructure,
            "dominated-state" | "corollary8" => Suite::DominatedState,
            "alternation" | "lemma10" => Suite::Alternation,
            "growth" => Suite::Growth,
            "stream" => Suite::Stream,
            "all" => Suite::All,
            _ => return Err(PlanError::UnknownSuite(s.to_string())),
        })
    }
}

/// Where each replica's model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Fixed(TwoStateHmm),
    /// A fresh random model per replica, optionally constrained.
    Random { case: Option<CaseLabel>, family: Option<Family> },
}

/// Per-suite knobs. Defaults follow the documented acceptance settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    /// Strong nodes tested per replica in the nodes suite.
    pub nodes_per_replica: usize,
    /// Random continuations per tested node.
    pub continuations: usize,
    pub max_continuation: usize,
    /// Random prefixes per certificate in the barriers suite.
    pub prefixes: usize,
    pub max_prefix: usize,
    /// Embedded pairs per replica in the alternation suite.
    pub windows: usize,
    pub mass_threshold: f64,
    /// Fixed certificate slack; `None` searches the grid.
    pub epsilon: Option<f64>,
    pub stream_continuations: usize,
    /// Fraction of replicas that must show growth.
    pub growth_fraction: f64,
    /// Largest accepted relative change of the node rate from `n/2` to `n`.
    pub drift_limit: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            nodes_per_replica: 10,
            continuations: 200,
            max_continuation: 50,
            prefixes: 100,
            max_prefix: 30,
            windows: 1000,
            mass_threshold: DEFAULT_MASS_THRESHOLD,
            epsilon: None,
            stream_continuations: 20,
            growth_fraction: 0.99,
            drift_limit: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub suite: Suite,
    pub source: ModelSource,
    pub replicas: u64,
    pub length: usize,
    pub seed: u64,
    /// Worker threads; does not affect the report.
    pub jobs: usize,
    pub config: SuiteConfig,
}

impl ExperimentPlan {
    pub fn new(suite: Suite, source: ModelSource, replicas: u64, length: usize, seed: u64) -> Self {
        ExperimentPlan { suite, source, replicas, length, seed, jobs: 1, config: SuiteConfig::default() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let c = &self.config;
        let bad = |what: &str| Err(PlanError::Invalid(what.to_string()));
        if self.replicas == 0 {
            return bad("replicas must be at least 1");
        }
        if self.length == 0 {
            return bad("length must be at least 1");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if c.max_continuation == 0 {
            return bad("max_continuation must be at least 1");
        }
        if !(c.mass_threshold > 0.0 && c.mass_threshold <= 1.0) {
            return bad("mass threshold must lie in (0, 1]");
        }
        if c.epsilon.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&c.growth_fraction) || !(c.drift_limit > 0.0) {
            return bad("growth thresholds out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("InvalidPlan: {0}")]
    Invalid(String),
    #[error("UnknownSuite: {0:?}")]
    UnknownSuite(String),
    #[error("EmptyGrid: sweep grid has no points")]
    EmptyGrid,
    #[error("InvalidModel: {0}")]
    Model(String),
    #[error("WorkerPool: {0}")]
    Pool(String),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::Invalid(_) => "InvalidPlan",
            PlanError::UnknownSuite(_) => "UnknownSuite",
            PlanError::EmptyGrid => "EmptyGrid",
            PlanError::Model(_) => "InvalidModel",
            PlanError::Pool(_) => "WorkerPool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteStatus {
    Passed,
    Failed,
    Skipped,
}

/// A replayable failure: rerun `suite` on `model` with `(seed, replica)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub suite: Suite,
    pub model: ModelDocument,
    pub seed: u64,
    pub replica: u64,
    pub time: usize,
    pub detail: String,
}

/// Distribution of a per-replica measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

impl Summary {
    fn of(v: &[f64]) -> Summary {
        Summary {
            mean: mean(v),
            min: quantile(v, 0.0),
            q50: quantile(v, 0.5),
            q90: quantile(v, 0.9),
            q99: quantile(v, 0.99),
            max: quantile(v, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub status: SuiteStatus,
    pub replicas: u64,
    pub skipped_replicas: u64,
    pub checks: u64,
    pub failures: u64,
    pub rates: BTreeMap<String, Rate>,
    pub statistics: BTreeMap<String, Summary>,
    pub counterexamples: Vec<Counterexample>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub suite: Suite,
    pub replicas: u64,
    pub length: usize,
    pub seed: u64,
    /// The fixed model, or `None` for generated models.
    pub model: Option<ModelDocument>,
    pub config: SuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub plan: PlanSummary,
    pub passed: bool,
    pub suites: BTreeMap<Suite, SuiteResult>,
}

impl VerificationReport {
    /// Pretty JSON; byte-identical for identical plans.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn suite(&self, s: Suite) -> Option<&SuiteResult> {
        self.suites.get(&s)
    }

    pub fn counterexamples(&self) -> impl Iterator<Item = &Counterexample> {
        self.suites.values().flat_map(|r| r.counterexamples.iter())
    }
}

fn replica_model(plan: &ExperimentPlan, suite: Suite, replica: u64) -> TwoStateHmm {
    match &plan.source {
        ModelSource::Fixed(m) => m.clone(),
        ModelSource::Random { case, family } => {
            let mut rng = SimRng::for_replica(plan.seed, replica.wrapping_add(MODEL_STREAM));
            match suite {
                Suite::DominatedState => random_dominated_model(&mut rng),
                Suite::Alternation => random_model(&mut rng, Some(CaseLabel::Case2), *family),
                _ => random_model(&mut rng, *case, *family),
            }
        }
    }
}

/// Runs one replica of `suite` on `model` with the data stream of
/// `(seed, replica)`.
pub fn run_replica(
    suite: Suite,
    model: &TwoStateHmm,
    seed: u64,
    replica: u64,
    length: usize,
    config: &SuiteConfig,
) -> ReplicaOutcome {
    let mut rng = SimRng::for_replica(seed, replica);
    match suite {
        Suite::Nodes => suites::future_invariance(model, length, config, &mut rng),
        Suite::Barriers => suites::barriers(model, length, config, &mut rng),
        Suite::Dominance => suites::dominance(model),
        Suite::CaseStructure => suites::case_structure(model, length, &mut rng),
        Suite::DominatedState => suites::dominated_state(model, length, &mut rng),
        Suite::Alternation => suites::alternation(model, config, &mut rng),
        Suite::Growth => suites::growth(model, length, config, &mut rng),
        Suite::Stream => suites::stream(model, length, config, &mut rng),
        Suite::All => panic!("`all` is expanded before replicas run"),
    }
}

/// Reruns the replica behind a counterexample.
pub fn replay(cx: &Counterexample, length: usize, config: &SuiteConfig) -> Result<ReplicaOutcome, PlanError> {
    let model = cx.model.clone().into_model().map_err(|e| PlanError::Model(e.to_string()))?;
    Ok(run_replica(cx.suite, &model, cx.seed, cx.replica, length, config))
}

/// Executes every suite the plan selects.
pub fn run_suite(plan: &ExperimentPlan) -> Result<VerificationReport, PlanError> {
    run_suites(plan, &plan.suite.expand())
}

pub(crate) fn run_suites(plan: &ExperimentPlan, selected: &[Suite]) -> Result<VerificationReport, PlanError> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| PlanError::Pool(e.to_string()))?;
    let mut suites = BTreeMap::new();
    for &suite in selected {
        let outcomes: Vec<(TwoStateHmm, ReplicaOutcome)> = pool.install(|| {
            (0..plan.replicas)
                .into_par_iter()
                .map(|r| {
                    let model = replica_model(plan, suite, r);
                    let out = run_replica(suite, &model, plan.seed, r, plan.length, &plan.config);
                    (model, out)
                })
                .collect()
        });
        suites.insert(suite, aggregate(plan, suite, &outcomes));
    }
    let passed = suites.values().all(|r| r.status != SuiteStatus::Failed);
    let model = match &plan.source {
        ModelSource::Fixed(m) => Some(m.to_document()),
        ModelSource::Random { .. } => None,
    };
    Ok(VerificationReport {
        plan: PlanSummary {
            suite: plan.suite,
            replicas: plan.replicas,
            length: plan.length,
            seed: plan.seed,
            model,
            config: plan.config.clone(),
        },
        passed,
        suites,
    })
}

fn counterexample(plan: &ExperimentPlan, suite: Suite, model: &TwoStateHmm, replica: u64, f: &Failure) -> Counterexample {
    Counterexample {
        suite,
        model: model.to_document(),
        seed: plan.seed,
        replica,
        time: f.time,
        detail: f.detail.clone(),
    }
}

fn aggregate(plan: &ExperimentPlan, suite: Suite, outcomes: &[(TwoStateHmm, ReplicaOutcome)]) -> SuiteResult {
    let mut tallies: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut counterexamples = Vec::new();
    let mut shortfalls = Vec::new();
    let (mut checks, mut failures, mut skipped) = (0, 0, 0);
    let mut notes = Vec::new();

    for (r, (model, out)) in outcomes.iter().enumerate() {
        if let Some(reason) = &out.skipped {
            skipped += 1;
            if skipped == 1 {
                notes.push(format!("replicas skipped: {reason}"));
            }
            continue;
        }
        checks += out.checks;
        failures += out.failures.len() as u64;
        for f in &out.failures {
            if counterexamples.len() < MAX_COUNTEREXAMPLES {
                counterexamples.push(counterexample(plan, suite, model, r as u64, f));
            }
        }
        for f in &out.shortfalls {
            shortfalls.push(counterexample(plan, suite, model, r as u64, f));
        }
        for (k, (s, t)) in &out.tallies {
            let e = tallies.entry(k).or_insert((0, 0));
            e.0 += s;
            e.1 += t;
        }
        for (k, v) in &out.values {
            values.entry(k).or_default().push(*v);
        }
    }

    let ran = plan.replicas - skipped;
    let mut status = if ran == 0 {
        SuiteStatus::Skipped
    } else if failures > 0 {
        SuiteStatus::Failed
    } else {
        SuiteStatus::Passed
    };

    if suite == Suite::Growth && ran > 0 {
        let sum = |k: &str| values.get(k).map_or(0.0, |v| v.iter().sum::<f64>());
        let half = (plan.length / 2).max(1) as f64;
        let rate_half = sum("target_half") / (ran as f64 * half);
        let rate_full = sum("target_full") / (ran as f64 * plan.length as f64);
        let drift = if rate_half > 0.0 { (rate_full - rate_half).abs() / rate_half } else { f64::INFINITY };
        let grew = tallies.get("grew").copied().unwrap_or((0, 0));
        let fraction = grew.0 as f64 / grew.1.max(1) as f64;
        notes.push(format!(
            "grew in {}/{} replicas (need {}), node rate {rate_half:.6} at n/2 and {rate_full:.6} at n, drift {drift:.4} (limit {})",
            grew.0, grew.1, plan.config.growth_fraction, plan.config.drift_limit
        ));
        values.insert("aggregate_drift", vec![drift]);
        if fraction < plan.config.growth_fraction || !(drift < plan.config.drift_limit) {
            status = SuiteStatus::Failed;
            failures += 1;
            let first = shortfalls.into_iter().next().unwrap_or_else(|| {
                let (model, _) = &outcomes[0];
                counterexample(plan, suite, model, 0, &Failure {
                    time: plan.length,
                    detail: format!("aggregate drift {drift:.4}"),
                })
            });
            counterexamples.push(first);
        }
    }

    if suite == Suite::Nodes && values.contains_key("expected_strong_a_rate") {
        notes.push("expected_strong_*_rate: exact pointwise-rule mass, a computed baseline".into());
    }

    SuiteResult {
        status,
        replicas: plan.replicas,
        skipped_replicas: skipped,
        checks,
        failures,
        rates: tallies.into_iter().map(|(k, (s, t))| (k.to_string(), Rate::new(s, t))).collect(),
        statistics: values.into_iter().map(|(k, v)| (k.to_string(), Summary::of(&v))).collect(),
        counterexamples,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    fn fixed(suite: Suite, m: TwoStateHmm, r: u64, n: usize) -> ExperimentPlan {
        ExperimentPlan::new(suite, ModelSource::Fixed(m), r, n, 11)
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("lemma2".parse::<Suite>().unwrap(), Suite::Dominance);
        assert_eq!("lemma10".parse::<Suite>().unwrap(), Suite::Alternation);
        assert_eq!("corollary8".parse::<Suite>().unwrap(), Suite::DominatedState);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut p = fixed(Suite::Nodes, case1_example(), 0, 10);
        assert_eq!(run_suite(&p).unwrap_err().code(), "InvalidPlan");
        p.replicas = 1;
        p.length = 0;
        assert!(run_suite(&p).is_err());
        p.length = 5;
        p.config.epsilon = Some(1.5);
        assert!(run_suite(&p).is_err());
    }

    #[test]
    fn dominance_over_random_models() {
        let plan = ExperimentPlan::new(Suite::Dominance, ModelSource::Random { case: None, family: None }, 300, 1, 7);
        let report = run_suite(&plan).unwrap();
        assert!(report.passed);
        assert_eq!(report.suite(Suite::Dominance).unwrap().checks, 300);
    }

    #[test]
    fn reports_are_independent_of_worker_count() {
        let mut plan = ExperimentPlan::new(Suite::Stream, ModelSource::Random { case: None, family: None }, 6, 300, 3);
        plan.config.stream_continuations = 3;
        let one = run_suite(&plan).unwrap().to_json();
        plan.jobs = 4;
        assert_eq!(one, run_suite(&plan).unwrap().to_json());
    }

    #[test]
    fn case3_strong_rate_matches_exact_mass() {
        let mut plan = fixed(Suite::Nodes, case3_example(), 20, 2000);
        plan.config.continuations = 5;
        let report = run_suite(&plan).unwrap();
        let r = report.suite(Suite::Nodes).unwrap();
        assert_eq!(r.status, SuiteStatus::Passed);
        let rate = r.rates["strong_a_rate"];
        let expected = r.statistics["expected_strong_a_rate"].mean;
        assert!((rate.rate - expected).abs() <= 3.0 * rate.std_error(), "{} vs {expected}", rate.rate);
    }

    #[test]
    fn fixed_model_replicas_match_across_sources() {
        // the same (seed, replica) yields the same data whether or not the
        // model was generated
        let mut rng = SimRng::for_replica(5, 2 + MODEL_STREAM);
        let m = random_model(&mut rng, None, None);
        let plan = ExperimentPlan::new(Suite::CaseStructure, ModelSource::Random { case: None, family: None }, 3, 200, 5);
        assert_eq!(replica_model(&plan, Suite::CaseStructure, 2), m);
        let direct = run_replica(Suite::CaseStructure, &m, 5, 2, 200, &plan.config);
        assert_eq!(direct.checks, suites::case_structure(&m, 200, &mut SimRng::for_replica(5, 2)).checks);
    }

    #[test]
    fn failing_suite_carries_replayable_counterexample() {
        // a two-step horizon leaves no room for growth
        let plan = fixed(Suite::Growth, case1_example(), 10, 2);
        let report = run_suite(&plan).unwrap();
        assert!(!report.passed);
        let cx = report.counterexamples().next().expect("counterexample");
        let again = replay(cx, plan.length, &plan.config).unwrap();
        let f = &again.shortfalls[0];
        assert_eq!((f.time, &f.detail), (cx.time, &cx.detail));
    }

    #[test]
    fn inapplicable_models_skip() {
        let report = run_suite(&fixed(Suite::Alternation, case1_example(), 2, 10)).unwrap();
        assert_eq!(report.suite(Suite::Alternation).unwrap().status, SuiteStatus::Skipped);
        assert!(report.passed);
    }

    #[test]
    fn dominated_state_suite_on_generated_models() {
        let plan = ExperimentPlan::new(
            Suite::DominatedState,
            ModelSource::Random { case: None, family: None },
            5,
            2000,
            9,
        );
        let r = run_suite(&plan).unwrap();
        let s = r.suite(Suite::DominatedState).unwrap();
        assert_eq!(s.status, SuiteStatus::Passed);
        assert!(s.checks >= 5 * 2000);
    }

    #[test]
    fn every_suite_passes_on_example_models() {
        for m in [case1_example(), case2_example(), case3_example()] {
            let mut plan = fixed(Suite::All, m, 3, 400);
            plan.config.continuations = 10;
            plan.config.prefixes = 20;
            plan.config.windows = 100;
            plan.config.stream_continuations = 3;
            plan.config.growth_fraction = 0.0;
            plan.config.drift_limit = 10.0;
            let report = run_suite(&plan).unwrap();
            for (s, r) in &report.suites {
                assert_ne!(r.status, SuiteStatus::Failed, "{s}: {:?}", r.counterexamples);
            }
        }
    }
}
