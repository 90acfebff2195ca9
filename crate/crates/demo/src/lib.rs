//! Browser bindings. Every entry point takes and returns JSON strings so the
//! page can reuse the config format of the command-line runner.

use ruelle::gibbs::GibbsSampler;
use ruelle::potential::{NormalizedPotential, Potential, PotentialSpec};
use ruelle::transfer::{EigenConfig, GridSolver};
use ruelle::{AprioriMeasure, AprioriSpec, EmpiricalMeasure, SpaceKind, WeightSequence, WeightSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const L2: SpaceKind = SpaceKind::Lp { p: 2.0 };

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

fn weights(text: &str) -> Result<WeightSequence, String> {
    WeightSequence::from_spec(&parse::<WeightSpec>("weights", text)?).map_err(|e| e.to_string())
}

/// `β_n`, `d_n` and the dynamics indicators up to `horizon`.
pub fn weights_profile_value(weights_json: &str, horizon: usize) -> Result<Value, String> {
    let w = weights(weights_json)?;
    let horizon = horizon.clamp(4, 400);
    Ok(json!({
        "log_beta": (1..=horizon).map(|n| w.log_beta(1, n)).collect::<Vec<_>>(),
        "d": (1..=horizon).map(|n| w.d(n)).collect::<Vec<_>>(),
        "indicators": w.rgh_indicators(horizon),
        "flags": w.classify(Some(2.0), horizon),
        "summability": w.summability(1.0, horizon),
    }))
}

/// `λ` and `ψ` along the first axis, other coordinates at zero.
pub fn eigenfunction_profile_value(weights_json: &str, apriori_json: &str, potential_json: &str, size: usize) -> Result<Value, String> {
    let w = weights(weights_json)?;
    let m = AprioriMeasure::from_spec(&parse::<AprioriSpec>("apriori", apriori_json)?).map_err(|e| e.to_string())?;
    let p = Potential::from_spec(&parse::<PotentialSpec>("potential", potential_json)?, L2, &m).map_err(|e| e.to_string())?;
    let mut cfg = EigenConfig::default();
    cfg.grid.size = size.clamp(9, 201);
    cfg.truncation_rank = Some(2);
    let solver = GridSolver::for_potential(&p, L2, &m, &w, &cfg).map_err(|e| e.to_string())?;
    let pair = solver.eigenpair(&cfg.s_schedule, cfg.tol, cfg.max_iters).map_err(|e| e.to_string())?;
    let psi = pair.psi();
    let xs: Vec<f64> = solver.axes().first().map(|a| a.nodes().to_vec()).unwrap_or_else(|| vec![0.0]);
    let ys: Vec<f64> = xs.iter().map(|&x| psi.eval(&[x])).collect();
    Ok(json!({ "lambda": pair.lambda, "x": xs, "psi": ys, "rank": solver.axes().len() }))
}

/// First two coordinates of a particle cloud after `iters` steps from `δ_0`.
pub fn gibbs_cloud_value(
    weights_json: &str,
    potential_json: &str,
    particles: usize,
    iters: usize,
    candidates: usize,
    seed: u64,
) -> Result<Value, String> {
    let w = weights(weights_json)?;
    let m = AprioriMeasure::standard_gaussian();
    let p = Potential::from_spec(&parse::<PotentialSpec>("potential", potential_json)?, L2, &m).map_err(|e| e.to_string())?;
    let cfg = EigenConfig {
        truncation_rank: Some(2),
        ..EigenConfig::default()
    };
    let solver = GridSolver::for_potential(&p, L2, &m, &w, &cfg).map_err(|e| e.to_string())?;
    let pair = solver.eigenpair(&cfg.s_schedule, cfg.tol, cfg.max_iters).map_err(|e| e.to_string())?;
    let abar = NormalizedPotential::new(p.clone(), L2, &pair.psi(), pair.lambda, w.clone()).map_err(|e| e.to_string())?;
    let sampler = GibbsSampler::new(&abar, &m, &w, L2, candidates.clamp(1, 256), 24, seed, 0.05).map_err(|e| e.to_string())?;
    let start = EmpiricalMeasure::dirac(&[0.0], particles.clamp(1, 20_000), L2);
    let cloud = sampler.push_n(&start, iters.min(60));
    let coord = |k: usize| -> Vec<f64> { cloud.particles.iter().map(|x| x.get(k).copied().unwrap_or(0.0)).collect() };
    Ok(json!({ "lambda": pair.lambda, "x1": coord(0), "x2": coord(1) }))
}

fn out(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weights_profile(weights_json: &str, horizon: usize) -> Result<String, JsError> {
    out(weights_profile_value(weights_json, horizon))
}

#[wasm_bindgen]
pub fn eigenfunction_profile(weights_json: &str, apriori_json: &str, potential_json: &str, size: usize) -> Result<String, JsError> {
    out(eigenfunction_profile_value(weights_json, apriori_json, potential_json, size))
}

#[wasm_bindgen]
pub fn gibbs_cloud(weights_json: &str, potential_json: &str, particles: usize, iters: usize, candidates: usize, seed: u64) -> Result<String, JsError> {
    out(gibbs_cloud_value(weights_json, potential_json, particles, iters, candidates, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    const W2: &str = r#"{"kind":"constant","alpha":2.0}"#;
    const GAUSS: &str = r#"{"kind":"gaussian","mean":0.0,"variance":1.0}"#;
    const QUAD: &str = r#"{"kind":"builtin","name":"quadratic_first_coord","params":{"coef":-0.25}}"#;

    #[test]
    fn profile_of_constant_weights() {
        let v = weights_profile_value(W2, 10).unwrap();
        assert!((v["d"][2].as_f64().unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(v["indicators"]["consistent"], true);
    }

    #[test]
    fn quadratic_eigenvalue() {
        let v = eigenfunction_profile_value(W2, GAUSS, QUAD, 41).unwrap();
        assert!((v["lambda"].as_f64().unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn cloud_has_requested_size() {
        let v = gibbs_cloud_value(W2, r#"{"kind":"builtin","name":"zero"}"#, 300, 5, 4, 1).unwrap();
        assert_eq!(v["x1"].as_array().unwrap().len(), 300);
    }

    #[test]
    fn bad_json_is_an_error() {
        assert!(weights_profile_value("{", 10).unwrap_err().starts_with("weights"));
    }
}
