use serde_json::json;

use crate::error::{Error, Result};

use super::config::ScenarioConfig;

/// Builtin scenario names with one-line descriptions, in listing order.
pub const BUILTINS: &[(&str, &str)] = &[
    (
        "torus-incomplete-lightlike",
        "Lorentzian torus 2dxdy + sin(2πx)dy²; the lightlike geodesic along ∂y escapes at t = 1/π",
    ),
    (
        "half-plane-homogeneous",
        "flat half-plane 2dudv on u > 0; a timelike geodesic leaves through u = 0 at t = 1",
    ),
    (
        "plane-wave-gravitational-4d",
        "vacuum 4D plane wave with oscillating polarizations a, b and c = 0; complete to T = 100",
    ),
    (
        "ppwave-quartic-incomplete",
        "3D pp-wave with H = x⁴; a lightlike geodesic escapes in finite affine parameter",
    ),
    (
        "theorem1-quadratic-potential",
        "plane trajectory with V = −x1²; growth hypotheses certify and the arc length stays below its bound",
    ),
    (
        "theorem1-quartic-violation",
        "plane trajectory with V = −x1⁴; the quadratic potential bound fails and the trajectory escapes",
    ),
    (
        "second-symmetric-plane-wave",
        "4D plane wave with profile linear in u: ∇R ≠ 0 but ∇²R = 0",
    ),
    (
        "theorem1-nonautonomous-potential",
        "plane trajectory with time-dependent V = −t·x1²; hypotheses certify on [0, 2]",
    ),
    (
        "finsler-perturbed-quartic",
        "autonomous Finsler flow F² = g(v,v) + ε Σvᵢ⁴/g(v,v) over a curved base; F(γ') is conserved",
    ),
];

pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    BUILTINS.to_vec()
}

fn document(name: &str) -> Option<serde_json::Value> {
    let description = BUILTINS.iter().find(|(n, _)| *n == name)?.1;
    let killing_v4 = json!({ "kind": "killing", "field": ["0", "1", "0", "0"] });
    let doc = match name {
        "torus-incomplete-lightlike" => json!({
            "manifold": { "kind": "torus-lorentz", "tau": "sin(2*pi*x1)" },
            "initial_conditions": [{ "x": [0.0, 0.0], "v": [0.0, 1.0] }],
            "run": { "horizon": 2.0 },
            "checks": [
                { "kind": "killing", "field": ["0", "1"] },
                { "kind": "causal-character" }
            ]
        }),
        "half-plane-homogeneous" => json!({
            "manifold": { "kind": "half-plane" },
            "initial_conditions": [{ "x": [1.0, 0.0], "v": [-1.0, 1.0] }],
            "run": { "horizon": 10.0 },
            "checks": [
                { "kind": "killing", "field": ["0", "1"] },
                { "kind": "causal-character" }
            ]
        }),
        "plane-wave-gravitational-4d" => json!({
            "manifold": {
                "kind": "plane-wave-polarization",
                "a": "0.1*sin(u)",
                "b": "0.1*cos(0.7*u)",
                "c": "0"
            },
            "initial_conditions": [
                { "x": [0.0, 0.0, 1.0, 0.5], "v": [1.0, 0.0, 0.1, 0.0] },
                { "x": [0.0, 0.0, -0.5, 0.2], "v": [1.0, 0.5, 0.0, 0.2] }
            ],
            "run": { "horizon": 100.0, "output_step": 0.05 },
            "checks": [
                killing_v4,
                { "kind": "reduction" },
                { "kind": "vacuum" },
                { "kind": "causal-character" }
            ]
        }),
        "ppwave-quartic-incomplete" => json!({
            "manifold": { "kind": "pp-wave", "dim": 3, "h": "x1^4" },
            "initial_conditions": [{ "x": [0.0, 0.0, 1.0], "v": [1.0, 0.5, 0.0] }],
            "run": { "horizon": 10.0 },
            "checks": [
                { "kind": "killing", "field": ["0", "1", "0"] },
                { "kind": "curvature-condition", "field": ["0", "1", "0"] }
            ]
        }),
        "theorem1-quadratic-potential" => json!({
            "manifold": { "kind": "euclidean", "dim": 2 },
            "problem": { "potential": "-x1^2", "potential_dt": "0" },
            "initial_conditions": [{ "x": [1.0, 0.0], "v": [0.0, 1.0] }],
            "run": { "horizon": 2.0, "output_step": 0.01 },
            "checks": [
                { "kind": "hypotheses", "b": 2.0, "radius": 20.0 },
                { "kind": "bound-chain" },
                { "kind": "energy-ledger" }
            ]
        }),
        "theorem1-quartic-violation" => json!({
            "manifold": { "kind": "euclidean", "dim": 2 },
            "problem": { "potential": "-x1^4", "potential_dt": "0" },
            "initial_conditions": [{ "x": [1.0, 0.0], "v": [0.0, 1.0] }],
            "run": { "horizon": 2.0 },
            "checks": [
                { "kind": "hypotheses", "b": 2.0, "radius": 5.0 },
                { "kind": "bound-chain" }
            ]
        }),
        "second-symmetric-plane-wave" => json!({
            "manifold": {
                "kind": "plane-wave-polarization",
                "a": "u",
                "b": "0.5*u",
                "c": "0"
            },
            "initial_conditions": [{ "x": [0.0, 0.0, 0.5, -0.5], "v": [1.0, 0.005, 0.0, 0.1] }],
            "run": { "horizon": 5.0, "output_step": 0.01 },
            "checks": [
                { "kind": "curvature-derivative", "order": 1, "expect": "nonvanishing",
                  "points": [[0.5, 0.2, 0.3, -0.4], [1.0, 0.0, 0.5, 0.5]] },
                { "kind": "curvature-derivative", "order": 2, "expect": "vanishing",
                  "points": [[0.5, 0.2, 0.3, -0.4], [1.0, 0.0, 0.5, 0.5]] },
                killing_v4,
                { "kind": "reduction" },
                { "kind": "vacuum" },
                { "kind": "causal-character" }
            ]
        }),
        "theorem1-nonautonomous-potential" => json!({
            "manifold": { "kind": "euclidean", "dim": 2 },
            "problem": { "potential": "-t*x1^2", "potential_dt": "-x1^2" },
            "initial_conditions": [{ "x": [1.0, 0.0], "v": [0.0, 1.0] }],
            "run": { "horizon": 2.0, "output_step": 0.01 },
            "checks": [
                { "kind": "hypotheses", "b": 2.0, "radius": 20.0 },
                { "kind": "bound-chain" },
                { "kind": "energy-ledger" }
            ]
        }),
        "finsler-perturbed-quartic" => json!({
            "manifold": {
                "kind": "finsler-perturbed-quartic",
                "dim": 2,
                "epsilon": 0.1,
                "base_components": [["1 + 0.1*x2^2", "0"], ["0", "1 + 0.1*x1^2"]]
            },
            "initial_conditions": [{ "x": [0.5, 0.0], "v": [0.3, 0.4] }],
            "run": { "horizon": 10.0, "output_step": 0.05 },
            "checks": [{ "kind": "finsler-speed" }]
        }),
        _ => return None,
    };
    let mut doc = doc;
    let obj = doc.as_object_mut().expect("builtin documents are objects");
    obj.insert("name".into(), json!(name));
    obj.insert("description".into(), json!(description));
    Some(doc)
}

/// The ready-to-run configuration of a builtin scenario.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let doc = document(name).ok_or_else(|| Error::UnknownScenario {
        name: name.to_string(),
        available: BUILTINS.iter().map(|(n, _)| n.to_string()).collect(),
    })?;
    let cfg: ScenarioConfig = serde_json::from_value(doc).expect("builtin documents are valid");
    cfg.validate()?;
    Ok(cfg)
}
