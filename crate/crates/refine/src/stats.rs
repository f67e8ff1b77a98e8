//! Improvement statistics over finished traces.
//!
//! Relative improvement per aspect is (final − initial) / initial across
//! traces; traces whose initial score is zero cannot contribute a relative
//! figure and are counted separately, while absolute deltas include them.
//! Per-iteration mean-score curves are emitted for plotting score
//! trajectories. All means sum their inputs in a canonical order, so the
//! report is exactly invariant under reordering of the input traces.

use crate::trace::TraceState;
use aigve_core::schema::Aspect;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AspectImprovement {
    /// Traces contributing a delta for this aspect.
    pub records: usize,
    /// Traces excluded from the relative mean because their initial score
    /// was zero.
    pub zero_initial: usize,
    /// Mean of (final − initial) / initial × 100, over traces with a
    /// positive initial score.
    pub mean_relative_pct: Option<f64>,
    pub mean_absolute_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Iteration index (1-based).
    pub k: usize,
    /// Traces that reached this iteration.
    pub records: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    /// Traces with at least one iteration — the ones measured here.
    pub traces: usize,
    /// Traces ignored because they never completed an iteration.
    pub empty_traces: usize,
    pub mean_iterations: Option<f64>,
    pub per_aspect: BTreeMap<Aspect, AspectImprovement>,
    pub curves: BTreeMap<Aspect, Vec<CurvePoint>>,
}

/// Mean with the inputs summed in value order, so permuting the input
/// changes nothing — not even the last floating-point bit.
fn ordered_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

pub fn improvement_stats(traces: &[TraceState]) -> ImprovementReport {
    let measured: Vec<&TraceState> = traces.iter().filter(|t| !t.iterations.is_empty()).collect();
    let empty_traces = traces.len() - measured.len();
    let mean_iterations =
        ordered_mean(measured.iter().map(|t| t.iterations.len() as f64).collect());
    let max_k = measured.iter().map(|t| t.iterations.len()).max().unwrap_or(0);

    let mut per_aspect = BTreeMap::new();
    let mut curves = BTreeMap::new();
    for aspect in Aspect::ALL {
        let mut relatives = Vec::new();
        let mut deltas = Vec::new();
        let mut zero_initial = 0;
        for trace in &measured {
            let (Some(first), Some(last)) = (trace.iterations.first(), trace.iterations.last())
            else {
                continue;
            };
            let (Some(initial), Some(fin)) = (first.report.get(&aspect), last.report.get(&aspect))
            else {
                continue;
            };
            deltas.push(fin.score - initial.score);
            if initial.score > 0.0 {
                relatives.push((fin.score - initial.score) / initial.score * 100.0);
            } else {
                zero_initial += 1;
            }
        }
        per_aspect.insert(
            aspect,
            AspectImprovement {
                records: deltas.len(),
                zero_initial,
                mean_relative_pct: ordered_mean(relatives),
                mean_absolute_delta: ordered_mean(deltas),
            },
        );

        let mut points = Vec::new();
        for k in 1..=max_k {
            let scores: Vec<f64> = measured
                .iter()
                .filter_map(|t| t.iterations.get(k - 1))
                .filter_map(|it| it.report.get(&aspect))
                .map(|entry| entry.score)
                .collect();
            if let Some(mean_score) = ordered_mean(scores.clone()) {
                points.push(CurvePoint {
                    k,
                    records: scores.len(),
                    mean_score,
                });
            }
        }
        curves.insert(aspect, points);
    }

    ImprovementReport {
        traces: measured.len(),
        empty_traces,
        mean_iterations,
        per_aspect,
        curves,
    }
}
