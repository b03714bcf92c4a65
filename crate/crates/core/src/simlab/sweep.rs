//! Grids of symmetric Gaussian models.

use std::io::{self, Write};

use super::{run_suites, ExperimentPlan, ModelSource, PlanError, Suite, VerificationReport};
use crate::model::{CaseLabel, EmissionModel, Initial, TwoStateHmm};

pub const SWEEP_CSV_HEADER: &str =
    "stay_a,stay_b,mean_a,mean_b,variance,case,strong_node_rate,mean_gap,max_gap,passed";

/// Stay probabilities crossed with mean separations. Each point is the
/// chain `[[p, 1-p], [1-p, p]]` with emissions `N(-gap/2, v)` and
/// `N(gap/2, v)`; `p = 0.5` gives a case 3 point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub stay_probs: Vec<f64>,
    pub mean_gaps: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub model: TwoStateHmm,
    pub case: CaseLabel,
    pub report: VerificationReport,
}

impl SweepGrid {
    pub fn models(&self) -> Result<Vec<TwoStateHmm>, PlanError> {
        if self.stay_probs.is_empty() || self.mean_gaps.is_empty() {
            return Err(PlanError::EmptyGrid);
        }
        let mut out = Vec::new();
        for &p in &self.stay_probs {
            for &gap in &self.mean_gaps {
                let m = TwoStateHmm::new(
                    [[p, 1.0 - p], [1.0 - p, p]],
                    Initial::Stationary,
                    EmissionModel::Gaussian { mean: -gap / 2.0, variance: self.variance },
                    EmissionModel::Gaussian { mean: gap / 2.0, variance: self.variance },
                )
                .map_err(|e| PlanError::Model(e.to_string()))?;
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// Runs the template plan's suite on every grid model. Case 3 points also
/// run the case-structure suite, which holds their pointwise-rule check.
pub fn sweep_models(grid: &SweepGrid, template: &ExperimentPlan) -> Result<Vec<SweepPoint>, PlanError> {
    let models = grid.models()?;
    models
        .into_iter()
        .map(|model| {
            let case = model.classify_case();
            let plan = ExperimentPlan { source: ModelSource::Fixed(model.clone()), ..template.clone() };
            let mut selected = template.suite.expand();
            if case == CaseLabel::Case3 && !selected.contains(&Suite::CaseStructure) {
                selected.push(Suite::CaseStructure);
            }
            let report = run_suites(&plan, &selected)?;
            Ok(SweepPoint { model, case, report })
        })
        .collect()
}

fn row(point: &SweepPoint) -> String {
    let t = point.model.transitions();
    let (ma, va, mb) = match (point.model.emission(crate::State::A), point.model.emission(crate::State::B)) {
        (EmissionModel::Gaussian { mean: a, variance }, EmissionModel::Gaussian { mean: b, .. }) => (*a, *variance, *b),
        _ => unreachable!("sweep models are Gaussian"),
    };
    let nodes = point.report.suite(Suite::Nodes);
    let fmt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    let rate = nodes.and_then(|r| r.rates.get("strong_rate")).map(|r| r.rate);
    let mean_gap = nodes.and_then(|r| r.statistics.get("mean_gap")).map(|s| s.mean);
    let max_gap = nodes.and_then(|r| r.statistics.get("max_gap")).map(|s| s.max);
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        t[0][0],
        t[1][1],
        ma,
        mb,
        va,
        point.case,
        fmt(rate),
        fmt(mean_gap),
        fmt(max_gap),
        point.report.passed
    )
}

/// Aggregate table, one row per grid point. Rates and gaps come from the
/// nodes suite and are empty when it did not run.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{}", row(p))?;
    }
    Ok(())
}
