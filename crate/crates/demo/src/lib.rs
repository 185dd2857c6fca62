//! Three operations for the static demo page, each returning JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use vnlab::attention::{kernel_convergence, AttnWeights, KernelSweepPoint};
use vnlab::constructions::{compile_deep_vn, run_and_report, DeepSimConfig, Reference};
use vnlab::numkit::{Matrix, Rng};
use vnlab::separability::{
    amplification_for, random_certified_instance, selection_bound, vdelta_certificate,
    CertificateOutcome,
};

#[derive(Debug, Serialize)]
pub struct KernelDemo {
    pub points: Vec<KernelSweepPoint>,
}

/// Median relative error of the random-feature kernel estimate per feature
/// count.
pub fn kernel_demo(features: &[usize], pairs: usize, seeds: u64, seed: u64) -> Result<KernelDemo, String> {
    let points = kernel_convergence(features, 3, pairs, seeds, seed).map_err(|e| e.to_string())?;
    Ok(KernelDemo { points })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub multiplier: f64,
    pub c: f64,
    pub max_abs_error: f64,
    pub min_selection_weight: f64,
    pub weight_bound: f64,
}

#[derive(Debug, Serialize)]
pub struct DeepDemo {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub sweep: Vec<SweepPoint>,
}

/// Final error of the sequential-selection program against softmax
/// attention, for `c = multiplier / δ`.
pub fn deep_demo(n: usize, d: usize, seed: u64, multipliers: &[f64]) -> Result<DeepDemo, String> {
    let mut rng = Rng::new(seed);
    let (x, cert) =
        random_certified_instance(n, d, 0.05, 20_000, &mut rng).map_err(|e| e.to_string())?;
    let w = AttnWeights::random(d, d, 0.9, &mut rng).map_err(|e| e.to_string())?;
    let delta = cert.delta;
    let sweep = multipliers
        .iter()
        .map(|&k| {
            let c = k / delta;
            let prog = compile_deep_vn(&w, &DeepSimConfig::softmax(cert.clone().with_amplification(c)))
                .map_err(|e| e.to_string())?;
            let rep = run_and_report(&x, &prog, &w, &Reference::Full, 1.0).map_err(|e| e.to_string())?;
            Ok(SweepPoint {
                multiplier: k,
                c,
                max_abs_error: rep.max_abs_error,
                min_selection_weight: rep.selection.iter().map(|s| s.weight).fold(1.0, f64::min),
                weight_bound: selection_bound(c, delta, n),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(DeepDemo { n, d, delta, sweep })
}

#[derive(Debug, Serialize)]
pub struct SeparabilityDemo {
    pub separable: Vec<bool>,
    /// Unit selection directions, for certified sets.
    pub directions: Option<Vec<Vec<f64>>>,
    pub delta: Option<f64>,
    pub suggested_c: Option<f64>,
}

/// Separability of a planar point set given as `[[x, y], ...]`.
pub fn separability_demo(points: &[[f64; 2]], epsilon: f64) -> Result<SeparabilityDemo, String> {
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let x = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
    match vdelta_certificate(&x).map_err(|e| e.to_string())? {
        CertificateOutcome::Certified(cert) => Ok(SeparabilityDemo {
            separable: vec![true; points.len()],
            directions: Some(cert.directions.to_rows()),
            delta: Some(cert.delta),
            suggested_c: Some(
                amplification_for(cert.delta, epsilon, points.len()).map_err(|e| e.to_string())?,
            ),
        }),
        CertificateOutcome::Failed { inseparable, .. } => Ok(SeparabilityDemo {
            separable: (0..points.len()).map(|i| !inseparable.contains(&i)).collect(),
            directions: None,
            delta: None,
            suggested_c: None,
        }),
    }
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = kernelConvergence)]
pub fn kernel_convergence_js(features: Vec<u32>, pairs: u32, seeds: u32, seed: u32) -> Result<String, JsValue> {
    let features: Vec<usize> = features.into_iter().map(|m| m as usize).collect();
    to_js(kernel_demo(&features, pairs as usize, seeds as u64, seed as u64))
}

#[wasm_bindgen(js_name = deepSelectionSweep)]
pub fn deep_selection_sweep_js(n: u32, d: u32, seed: u32, multipliers: Vec<f64>) -> Result<String, JsValue> {
    to_js(deep_demo(n as usize, d as usize, seed as u64, &multipliers))
}

/// `coords` is a flat `[x0, y0, x1, y1, ...]` array.
#[wasm_bindgen(js_name = separability2d)]
pub fn separability_2d_js(coords: Vec<f64>, epsilon: f64) -> Result<String, JsValue> {
    if coords.len() % 2 != 0 || coords.len() < 4 {
        return Err(JsValue::from_str("need at least two (x, y) pairs"));
    }
    let points: Vec<[f64; 2]> = coords.chunks(2).map(|c| [c[0], c[1]]).collect();
    to_js(separability_demo(&points, epsilon))
}
