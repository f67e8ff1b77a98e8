//! Shared fixtures for the refinement integration tests.
#![allow(dead_code)]

use aigve_core::schema::{serialize_report, Aspect, AspectEntry, AspectReport, ScoreBounds};
use aigve_gateway::EndpointConfig;
use aigve_refine::{RefineConfig, RefineEndpoints};
use std::collections::BTreeMap;

/// Endpoint pointing at an in-process mock backend.
pub fn mock_endpoint(url: &str) -> EndpointConfig {
    EndpointConfig::new(url, "offline-mock")
}

/// A refinement config wired entirely to in-process mocks. The evaluator URL
/// is the knob tests turn to script a score trajectory.
pub fn mock_config(evaluator_url: &str) -> RefineConfig {
    RefineConfig::new(RefineEndpoints {
        generator: mock_endpoint("mock:generator"),
        evaluator: mock_endpoint(evaluator_url),
        revisor: mock_endpoint("mock:revisor"),
    })
}

/// A nine-aspect report with every score equal, serialized the way a
/// well-behaved evaluator endpoint replies.
pub fn flat_report_text(score: f64) -> String {
    let entries: BTreeMap<Aspect, AspectEntry> = Aspect::ALL
        .into_iter()
        .map(|aspect| {
            let comment = format!(
                "The sampled frames hold {} at the same level from start to finish.",
                aspect.key()
            );
            (aspect, AspectEntry { comment, score })
        })
        .collect();
    let report = AspectReport::new(entries, &ScoreBounds::default())
        .expect("fixture scores are in bounds");
    serialize_report(&report)
}
