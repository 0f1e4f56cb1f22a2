//! Sampled normal curve with the on-time region marked, for charting a
//! plan's completion probability.

use serde::{Deserialize, Serialize};

use crate::pert::{normal_cdf, normal_pdf, CompletionProbability};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub density: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionCurve {
    pub points: Vec<CurvePoint>,
    pub z_value: Option<f64>,
    pub probability: f64,
    /// Zero spread: the outcome is a step at the deadline.
    pub degenerate: bool,
    /// The shaded interval `[from, to]` in z units, absent when degenerate.
    pub shaded: Option<(f64, f64)>,
}

/// Samples `z` over `[-range, range]` with `samples` evenly spaced points.
pub fn completion_curve(
    completion: &CompletionProbability,
    range: f64,
    samples: usize,
) -> CompletionCurve {
    let samples = samples.max(2);
    let step = 2.0 * range / (samples - 1) as f64;
    let points = (0..samples)
        .map(|i| {
            let z = -range + step * i as f64;
            CurvePoint {
                z,
                density: normal_pdf(z),
                cumulative: normal_cdf(z).expect("grid is finite"),
            }
        })
        .collect();
    CompletionCurve {
        points,
        z_value: completion.z_value,
        probability: completion.probability,
        degenerate: completion.z_value.is_none(),
        shaded: completion.z_value.map(|z| (-range, z.clamp(-range, range))),
    }
}
