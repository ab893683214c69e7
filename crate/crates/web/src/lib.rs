//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes a JSON request and returns a JSON response so the
//! page needs no generated glue beyond the three exported functions.

use serde::{Deserialize, Serialize};
use tilesim::dse::{self, DesignSpace, DsePoint, Evaluator};
use tilesim::estimator::Model;
use tilesim::sim::{simulate, SimOptions, SystemConfig};
use tilesim::workload::{LayerShape, TileConfig};
use wasm_bindgen::prelude::*;

/// Shared request fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Request {
    pub layer: LayerShape,
    pub tile: TileConfig,
    pub system: SystemConfig,
    /// Passes whose timelines are returned.
    pub passes: usize,
    pub space: Option<DesignSpace>,
    pub budgets: Vec<u64>,
}

impl Default for Request {
    fn default() -> Self {
        Self {
            layer: LayerShape::alexnet_conv3(1),
            tile: TileConfig::constrained(1, 2, 64, 6, 13),
            system: SystemConfig::default(),
            passes: 4,
            space: None,
            budgets: Vec::new(),
        }
    }
}

fn parse(json: &str) -> Result<Request, String> {
    if json.trim().is_empty() {
        return Ok(Request::default());
    }
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Simulates one tile; only the first `passes` timelines are kept.
pub fn simulate_json(json: &str) -> Result<String, String> {
    let req = parse(json)?;
    let opts = SimOptions { timelines: true, ..Default::default() };
    let mut report = simulate(&req.layer, &req.tile, &req.system, opts).map_err(|e| e.to_string())?.report;
    if let Some(p) = report.passes.as_mut() {
        p.truncate(req.passes);
    }
    to_json(&report)
}

#[derive(Serialize)]
struct EstimateResponse {
    model: String,
    total_cycles: u64,
    performance: f64,
    limit: tilesim::sim::Limit,
}

/// Runs every analytic model on one tile.
pub fn estimate_json(json: &str) -> Result<String, String> {
    let req = parse(json)?;
    let out: Result<Vec<EstimateResponse>, String> = dse::COMPARED_MODELS
        .iter()
        .map(|m| {
            let r = m.evaluate(&req.layer, &req.tile, &req.system).map_err(|e| e.to_string())?;
            Ok(EstimateResponse {
                model: r.model,
                total_cycles: r.total_cycles,
                performance: r.performance,
                limit: r.limit,
            })
        })
        .collect();
    to_json(&out?)
}

#[derive(Serialize)]
struct ExploreResponse {
    points: Vec<DsePoint>,
    frontier: Vec<dse::FrontierPoint>,
}

/// Estimator-driven search with a performance-versus-budget frontier.
pub fn explore_json(json: &str) -> Result<String, String> {
    let req = parse(json)?;
    let space = req.space.unwrap_or_else(DesignSpace::extended);
    let tiles = dse::enumerate(&space, &req.layer).map_err(|e| e.to_string())?;
    let points = dse::evaluate(&req.layer, &tiles, &req.system, Evaluator::Estimate(Model::Proposed))
        .map_err(|e| e.to_string())?;
    let budgets = if req.budgets.is_empty() {
        let lo = points.iter().map(|p| p.footprint).min().unwrap_or(1);
        let hi = points.iter().map(|p| p.footprint).max().unwrap_or(lo);
        dse::budget_grid(lo, hi, 12)
    } else {
        req.budgets
    };
    let frontier = dse::frontier(&points, &budgets, DsePoint::best_known);
    to_json(&ExploreResponse { points, frontier })
}

#[wasm_bindgen]
pub fn simulate_tile(request: &str) -> Result<String, JsValue> {
    simulate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn estimate_tile(request: &str) -> Result<String, JsValue> {
    estimate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn explore_space(request: &str) -> Result<String, JsValue> {
    explore_json(request).map_err(|e| JsValue::from_str(&e))
}
