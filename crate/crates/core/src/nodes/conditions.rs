//! Distribution-level conditions on a model.
//!
//! Each condition is a statement about one log-ratio set: either that some
//! emission distribution charges it, that it has positive reference
//! measure, or that it is null. With `d(x) = ln f_a(x) - ln f_b(x)`:
//!
//! | name               | statement                                                   |
//! |--------------------|-------------------------------------------------------------|
//! | `distinguishable`  | `lambda{d != 0} > 0`                                        |
//! | `a_barrier_set`    | `lambda{x : x is a length-1 a-barrier} > 0`                 |
//! | `b_barrier_set`    | `lambda{x : x is a length-1 b-barrier} > 0`                 |
//! | `a_dominance`      | `P_a{f_a max(p_aa, p_ba) > f_b max(p_bb, p_ab)} > 0`        |
//! | `b_dominance`      | `P_b{f_b max(p_bb, p_ab) > f_a max(p_aa, p_ba)} > 0`        |
//! | `case1_a_stay`     | `P_a{f_a p_aa > f_b p_bb} > 0`                              |
//! | `case1_b_stay`     | `P_b{f_b p_bb > f_a p_aa} > 0`                              |
//! | `case2_a_switch`   | `P_a{f_a p_ba > f_b p_ab} > 0`                              |
//! | `case2_b_switch`   | `P_b{f_b p_ab > f_a p_ba} > 0`                              |
//! | `case3_a_mixture`  | `P_a{f_a pi_a > f_b pi_b} > 0`                              |
//! | `case3_b_mixture`  | `P_b{f_b pi_b > f_a pi_a} > 0`                              |
//! | `b_stay_null`      | `lambda{p_bb f_b > p_aa f_a} = 0`                           |
//! | `a_stay_null`      | `lambda{p_aa f_a > p_bb f_b} = 0`                           |
//!
//! In case 1 the dominance conditions reduce to the `case1_*` pair, in case 2
//! to `case2_*`, in case 3 to `case3_*`; the case-specific rows are marked
//! applicable only in their own case.

use serde::Serialize;

use super::sets::{LogRatioSet, SetDescription};
use crate::model::{CaseLabel, TwoStateHmm};
use crate::numeric::ln;
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub name: &'static str,
    pub applicable: bool,
    pub holds: bool,
    /// Emission distribution whose mass the condition is about, if any.
    pub charged_by: Option<State>,
    /// `P_s(set)` for `charged_by = s`, otherwise `P_a(set)`.
    pub mass: f64,
    /// Reference measure of the set (symbol count or Lebesgue length).
    pub measure: f64,
    pub set: Option<SetDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub case: CaseLabel,
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn holds(&self, name: &str) -> bool {
        self.get(name).is_some_and(|e| e.holds)
    }

    /// At least one of the two dominance conditions holds.
    pub fn some_dominance_holds(&self) -> bool {
        self.holds("a_dominance") || self.holds("b_dominance")
    }

    /// Plain-text table, one condition per line.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<17} {:<10} {:<5} {:<24} {:<24}\n",
            "condition", "applicable", "holds", "mass", "measure"
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{:<17} {:<10} {:<5} {:<24} {:<24}\n",
                e.name,
                if e.applicable { "yes" } else { "no" },
                if e.holds { "yes" } else { "no" },
                format!("{:.16e}", e.mass),
                format!("{:.16e}", e.measure),
            ));
        }
        out
    }
}

enum Statement {
    Charged(State),
    Positive,
    Null,
}

fn entry(
    model: &TwoStateHmm,
    name: &'static str,
    applicable: bool,
    set: LogRatioSet,
    statement: Statement,
) -> ConditionEntry {
    let measure = set.measure(model);
    let (holds, charged_by) = match statement {
        Statement::Charged(s) => (set.charged_by(model, s), Some(s)),
        Statement::Positive => (measure > 0.0, None),
        Statement::Null => (measure == 0.0, None),
    };
    ConditionEntry {
        name,
        applicable,
        holds,
        charged_by,
        mass: set.probability(model, charged_by.unwrap_or(State::A)),
        measure,
        set: Some(set.describe(model)),
    }
}

/// Evaluates every named condition for the model.
pub fn check_conditions(model: &TwoStateHmm) -> ConditionReport {
    let case = model.classify_case();
    let lp = *model.log_transitions();
    let (aa, ab, ba, bb) = (lp[0][0], lp[0][1], lp[1][0], lp[1][1]);
    let mut entries = Vec::new();

    let above = LogRatioSet::above(0.0);
    let below = LogRatioSet::below(0.0);
    let differ = above.measure(model) + below.measure(model);
    entries.push(ConditionEntry {
        name: "distinguishable",
        applicable: true,
        holds: differ > 0.0,
        charged_by: None,
        mass: above.probability(model, State::A) + below.probability(model, State::A),
        measure: differ,
        set: None,
    });

    // d(x) must beat ln(p_ib p_bj) - ln(p_ia p_aj) for every (i, j).
    let mut a_barrier = f64::NEG_INFINITY;
    let mut b_barrier = f64::INFINITY;
    for i in 0..2 {
        for j in 0..2 {
            let c = (lp[i][1] + lp[1][j]) - (lp[i][0] + lp[0][j]);
            a_barrier = a_barrier.max(c);
            b_barrier = b_barrier.min(c);
        }
    }
    entries.push(entry(model, "a_barrier_set", true, LogRatioSet::above(a_barrier), Statement::Positive));
    entries.push(entry(model, "b_barrier_set", true, LogRatioSet::below(b_barrier), Statement::Positive));

    let dominance = bb.max(ab) - aa.max(ba);
    entries.push(entry(model, "a_dominance", true, LogRatioSet::above(dominance), Statement::Charged(State::A)));
    entries.push(entry(model, "b_dominance", true, LogRatioSet::below(dominance), Statement::Charged(State::B)));

    let stay = bb - aa;
    let c1 = case == CaseLabel::Case1;
    entries.push(entry(model, "case1_a_stay", c1, LogRatioSet::above(stay), Statement::Charged(State::A)));
    entries.push(entry(model, "case1_b_stay", c1, LogRatioSet::below(stay), Statement::Charged(State::B)));

    let switch = ab - ba;
    let c2 = case == CaseLabel::Case2;
    entries.push(entry(model, "case2_a_switch", c2, LogRatioSet::above(switch), Statement::Charged(State::A)));
    entries.push(entry(model, "case2_b_switch", c2, LogRatioSet::below(switch), Statement::Charged(State::B)));

    let pi = model.stationary();
    let mixture = ln(pi[1]) - ln(pi[0]);
    let c3 = case == CaseLabel::Case3;
    entries.push(entry(model, "case3_a_mixture", c3, LogRatioSet::above(mixture), Statement::Charged(State::A)));
    entries.push(entry(model, "case3_b_mixture", c3, LogRatioSet::below(mixture), Statement::Charged(State::B)));

    entries.push(entry(model, "b_stay_null", c1, LogRatioSet::below(stay), Statement::Null));
    entries.push(entry(model, "a_stay_null", c1, LogRatioSet::above(stay), Statement::Null));

    ConditionReport { case, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{EmissionModel, Initial};
    use proptest::prelude::*;

    #[test]
    fn case1_example_conditions() {
        let r = check_conditions(&case1_example());
        let a = r.get("case1_a_stay").unwrap();
        assert!(a.applicable && a.holds);
        assert!((a.mass - 0.8).abs() < 1e-15);
        let b = r.get("case1_b_stay").unwrap();
        assert!(b.holds);
        assert!((b.mass - 0.8).abs() < 1e-15);
        assert!(r.holds("a_dominance") && r.holds("b_dominance"));
        assert!(r.holds("distinguishable"));
        assert!(!r.get("case2_a_switch").unwrap().applicable);
        assert!(!r.holds("b_stay_null"));
        // 0.008 < 0.162 at symbol 0: no length-1 barrier
        assert!(!r.holds("a_barrier_set"));
    }

    #[test]
    fn null_condition_for_dominated_b() {
        // p_bb f_b = 0.4 * (0.6, 0.4) never beats p_aa f_a = 0.9 * (0.3, 0.7)
        let m = model([[0.9, 0.1], [0.6, 0.4]], [0.3, 0.7], [0.6, 0.4]);
        let r = check_conditions(&m);
        assert_eq!(r.case, CaseLabel::Case1);
        assert!(r.holds("b_stay_null"));
        assert!(!r.holds("case1_b_stay"));
        assert!(r.holds("case1_a_stay"));
    }

    #[test]
    fn gaussian_conditions() {
        let m = TwoStateHmm::new(
            [[0.9, 0.1], [0.1, 0.9]],
            Initial::Stationary,
            EmissionModel::Gaussian { mean: -1.0, variance: 1.0 },
            EmissionModel::Gaussian { mean: 1.0, variance: 1.0 },
        )
        .unwrap();
        let r = check_conditions(&m);
        // equal variances give length-1 barrier half-lines
        assert!(r.holds("a_barrier_set") && r.holds("b_barrier_set"));
        let e = r.get("case1_a_stay").unwrap();
        assert!((e.mass - crate::numeric::normal_cdf(1.0)).abs() < 1e-15);
        assert!(e.measure.is_infinite());
    }

    fn any_model() -> impl Strategy<Value = TwoStateHmm> {
        let cat = (0.01f64..0.99, 0.01f64..0.99, 0.0f64..1.0, 0.0f64..1.0, 0u8..3)
            .prop_filter_map("distinct", |(p, q, fa, fb, shape)| {
                let t = match shape {
                    0 => [[p, 1.0 - p], [q, 1.0 - q]],
                    _ => [[p, 1.0 - p], [p, 1.0 - p]],
                };
                let (a, b) = cat2([fa, 1.0 - fa], [fb, 1.0 - fb]);
                TwoStateHmm::new(t, Initial::Stationary, a, b).ok()
            });
        let gauss = (0.01f64..0.99, 0.01f64..0.99, -3.0f64..3.0, 0.1f64..5.0, -3.0f64..3.0, 0.1f64..5.0)
            .prop_filter_map("distinct", |(p, q, ma, va, mb, vb)| {
                TwoStateHmm::new(
                    [[p, 1.0 - p], [q, 1.0 - q]],
                    Initial::Stationary,
                    EmissionModel::Gaussian { mean: ma, variance: va },
                    EmissionModel::Gaussian { mean: mb, variance: vb },
                )
                .ok()
            });
        prop_oneof![cat, gauss]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn some_dominance_always_holds(m in any_model()) {
            let r = check_conditions(&m);
            prop_assert!(r.some_dominance_holds());
            // the applicable case-specific pair agrees with dominance
            let (x, y) = match r.case {
                CaseLabel::Case1 => ("case1_a_stay", "case1_b_stay"),
                CaseLabel::Case2 => ("case2_a_switch", "case2_b_switch"),
                CaseLabel::Case3 => ("case3_a_mixture", "case3_b_mixture"),
            };
            prop_assert_eq!(r.holds(x), r.holds("a_dominance"));
            prop_assert_eq!(r.holds(y), r.holds("b_dominance"));
        }
    }
}
