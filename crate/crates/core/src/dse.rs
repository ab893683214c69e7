//! Design-space exploration over loop tile sizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};
use crate::estimator::Model;
use crate::sim::report::Limit;
use crate::sim::{simulate, Report, SimOptions, SystemConfig};
use crate::workload::{buffer_footprint, LayerShape, TileConfig};

/// Candidate tile sizes. Channel tiles come either from the cartesian
/// product of `tc` and `tm` or from explicit `(TM, TC)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSpace {
    pub tb: Vec<u32>,
    pub tc: Vec<u32>,
    pub tm: Vec<u32>,
    pub te: Vec<u32>,
    pub tf: Vec<u32>,
    /// Explicit `(TM, TC)` pairs; when non-empty `tc` and `tm` are ignored.
    pub pairs: Vec<(u32, u32)>,
    /// Upper bound on `TC * TM`, i.e. on the MAC units of a constrained tile.
    pub mac_budget: Option<u64>,
    /// Keep only tile sizes that divide their layer dimension.
    pub divisibility: bool,
}

impl DesignSpace {
    /// The reference space: three batch tiles, three channel pairs, two row
    /// tiles and full-width columns.
    pub fn reference() -> Self {
        Self {
            tb: vec![1, 2, 3],
            tc: Vec::new(),
            tm: Vec::new(),
            te: vec![7, 13],
            tf: vec![13],
            pairs: vec![(21, 6), (42, 3), (64, 2)],
            mac_budget: Some(128),
            divisibility: false,
        }
    }

    /// A wider conv3 space of 204 constrained points at batch 1.
    pub fn extended() -> Self {
        Self {
            tb: vec![1],
            tc: Vec::new(),
            tm: Vec::new(),
            te: vec![5, 7, 9, 13],
            tf: vec![7, 9, 13],
            pairs: vec![
                (128, 1),
                (64, 2),
                (42, 3),
                (32, 4),
                (25, 5),
                (21, 6),
                (18, 7),
                (16, 8),
                (14, 9),
                (12, 10),
                (11, 11),
                (10, 12),
                (9, 14),
                (8, 16),
                (6, 21),
                (4, 32),
                (2, 64),
            ],
            mac_budget: Some(128),
            divisibility: false,
        }
    }

    fn channel_pairs(&self) -> Vec<(u32, u32)> {
        if !self.pairs.is_empty() {
            return self.pairs.clone();
        }
        self.tm.iter().flat_map(|&m| self.tc.iter().map(move |&c| (m, c))).collect()
    }

    /// Upper bound on the number of points before filtering.
    pub fn raw_size(&self) -> usize {
        self.tb.len() * self.channel_pairs().len() * self.te.len() * self.tf.len()
    }
}

fn divides(t: u32, dim: u32) -> bool {
    dim.is_multiple_of(t)
}

/// Constrained tiles of `space` valid for `layer`, in a fixed order.
pub fn enumerate(space: &DesignSpace, layer: &LayerShape) -> Result<Vec<TileConfig>, DseError> {
    let mut out = Vec::new();
    for &tb in &space.tb {
        for (tm, tc) in space.channel_pairs() {
            if space.mac_budget.is_some_and(|b| tm as u64 * tc as u64 > b) {
                continue;
            }
            for &te in &space.te {
                for &tf in &space.tf {
                    let tile = TileConfig::constrained(tb, tc, tm, te, tf);
                    if tile.validate(layer).is_err() {
                        continue;
                    }
                    if space.divisibility
                        && !(divides(tb, layer.batch)
                            && divides(tc, layer.in_channels)
                            && divides(tm, layer.out_channels)
                            && divides(te, layer.out_height)
                            && divides(tf, layer.out_width))
                    {
                        continue;
                    }
                    out.push(tile);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(DseError::EmptySpace);
    }
    Ok(out)
}

/// How a design point is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Simulate,
    Estimate(Model),
}

impl Evaluator {
    pub fn run(&self, layer: &LayerShape, tile: &TileConfig, cfg: &SystemConfig) -> Result<Report> {
        match self {
            Evaluator::Simulate => Ok(simulate(layer, tile, cfg, SimOptions::default())?.report),
            Evaluator::Estimate(m) => m.evaluate(layer, tile, cfg),
        }
    }
}

impl fmt::Display for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluator::Simulate => f.write_str("simulate"),
            Evaluator::Estimate(m) => f.write_str(&m.name()),
        }
    }
}

impl FromStr for Evaluator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "simulate" | "sim" => Evaluator::Simulate,
            "estimate" | "proposed" => Evaluator::Estimate(Model::Proposed),
            "conventional" => Evaluator::Estimate(Model::Conventional),
            "scaled" | "scaled_uniform" => Evaluator::Estimate(Model::ScaledUniform),
            "scaled_per_type" => Evaluator::Estimate(Model::ScaledPerType),
            other => return Err(format!("unknown evaluator `{other}`")),
        })
    }
}

/// One evaluated design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsePoint {
    pub tile: TileConfig,
    pub footprint: u64,
    pub perf_estimate: Option<f64>,
    pub perf_simulated: Option<f64>,
    pub cycles_estimate: Option<u64>,
    pub cycles_simulated: Option<u64>,
    pub regime: Limit,
}

impl DsePoint {
    fn new(layer: &LayerShape, tile: TileConfig, report: &Report, simulated: bool) -> Self {
        let mut p = DsePoint {
            tile,
            footprint: buffer_footprint(layer, &tile),
            perf_estimate: None,
            perf_simulated: None,
            cycles_estimate: None,
            cycles_simulated: None,
            regime: report.limit,
        };
        p.absorb(report, simulated);
        p
    }

    /// Records a report as the simulated or estimated score.
    pub fn absorb(&mut self, report: &Report, simulated: bool) {
        if simulated {
            self.perf_simulated = Some(report.performance);
            self.cycles_simulated = Some(report.total_cycles);
            self.regime = report.limit;
        } else {
            self.perf_estimate = Some(report.performance);
            self.cycles_estimate = Some(report.total_cycles);
        }
    }

    /// Simulated performance when known, otherwise the estimate.
    pub fn best_known(&self) -> f64 {
        self.perf_simulated.or(self.perf_estimate).unwrap_or(0.0)
    }
}

#[cfg(feature = "parallel")]
fn map_points<T, F>(tiles: &[TileConfig], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&TileConfig) -> T + Sync + Send,
{
    use rayon::prelude::*;
    tiles.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<T, F>(tiles: &[TileConfig], f: F) -> Vec<T>
where
    F: Fn(&TileConfig) -> T,
{
    tiles.iter().map(f).collect()
}

/// Scores every tile. Output order follows `tiles` whatever the worker count.
pub fn evaluate(
    layer: &LayerShape,
    tiles: &[TileConfig],
    cfg: &SystemConfig,
    evaluator: Evaluator,
) -> Result<Vec<DsePoint>> {
    let simulated = evaluator == Evaluator::Simulate;
    map_points(tiles, |t| evaluator.run(layer, t, cfg).map(|r| DsePoint::new(layer, *t, &r, simulated)))
        .into_iter()
        .collect()
}

/// Deterministic best point: highest score, then smaller footprint, then tile order.
pub fn argmax<F>(points: &[DsePoint], budget: Option<u64>, score: F) -> Option<&DsePoint>
where
    F: Fn(&DsePoint) -> f64,
{
    points
        .iter()
        .filter(|p| budget.is_none_or(|b| p.footprint <= b))
        .max_by(|a, b| score(a).total_cmp(&score(b)).then(b.footprint.cmp(&a.footprint)).then(b.tile.cmp(&a.tile)))
}

/// Best performance reachable under a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub budget: u64,
    pub best: Option<DsePoint>,
    pub performance: Option<f64>,
}

/// `n` budgets spaced logarithmically between `lo` and `hi`, inclusive.
pub fn budget_grid(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    assert!(lo > 0 && hi >= lo && n >= 1, "bad budget grid");
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<u64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp().round() as u64).collect();
    v[0] = lo;
    v[n - 1] = hi;
    v.dedup();
    v
}

pub fn frontier<F>(points: &[DsePoint], budgets: &[u64], score: F) -> Vec<FrontierPoint>
where
    F: Fn(&DsePoint) -> f64 + Copy,
{
    budgets
        .iter()
        .map(|&b| {
            let best = argmax(points, Some(b), score).cloned();
            FrontierPoint { budget: b, performance: best.as_ref().map(score), best }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseResult {
    pub evaluator: String,
    pub best: DsePoint,
    pub frontier: Vec<FrontierPoint>,
    pub points: Vec<DsePoint>,
}

fn smallest_footprint(layer: &LayerShape, tiles: &[TileConfig]) -> u64 {
    tiles.iter().map(|t| buffer_footprint(layer, t)).min().unwrap_or(0)
}

fn check_budget(budget: Option<u64>) -> Result<(), DseError> {
    match budget {
        Some(0) => Err(DseError::Infeasible { budget: 0 }),
        _ => Ok(()),
    }
}

/// Evaluates every feasible point and picks the best one.
pub fn optimize(
    layer: &LayerShape,
    space: &DesignSpace,
    budget: Option<u64>,
    evaluator: Evaluator,
    cfg: &SystemConfig,
) -> Result<DseResult> {
    check_budget(budget)?;
    let tiles = enumerate(space, layer)?;
    let feasible: Vec<TileConfig> =
        tiles.iter().copied().filter(|t| budget.is_none_or(|b| buffer_footprint(layer, t) <= b)).collect();
    if feasible.is_empty() {
        return Err(DseError::Infeasible { budget: budget.unwrap_or(0) }.into());
    }
    let points = evaluate(layer, &feasible, cfg, evaluator)?;
    let best = argmax(&points, budget, DsePoint::best_known).cloned().expect("non-empty");
    let lo = smallest_footprint(layer, &feasible);
    let hi = budget.unwrap_or_else(|| feasible.iter().map(|t| buffer_footprint(layer, t)).max().unwrap_or(lo));
    let frontier = frontier(&points, &budget_grid(lo, hi.max(lo), 10), DsePoint::best_known);
    Ok(DseResult { evaluator: evaluator.to_string(), best, frontier, points })
}

/// Number of points kept by a top fraction of `n`.
pub fn top_count(n: usize, top_fraction: f64) -> usize {
    ((top_fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Outcome of estimator filtering followed by simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridResult {
    pub best: DsePoint,
    pub simulated: usize,
    pub feasible: usize,
}

/// Ranks by estimate, keeps the top fraction and returns its best simulated point.
/// `points` need `perf_estimate`; `simulate` is called for the kept ones
/// without a simulated score.
pub fn hybrid_select<F>(
    points: &[DsePoint],
    budget: Option<u64>,
    top_fraction: f64,
    mut simulate: F,
) -> Result<HybridResult>
where
    F: FnMut(&DsePoint) -> Result<f64>,
{
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(DseError::BadFraction(top_fraction).into());
    }
    let mut feasible: Vec<&DsePoint> = points.iter().filter(|p| budget.is_none_or(|b| p.footprint <= b)).collect();
    if feasible.is_empty() {
        return Err(DseError::Infeasible { budget: budget.unwrap_or(0) }.into());
    }
    feasible.sort_by(|a, b| {
        let (x, y) = (a.perf_estimate.unwrap_or(0.0), b.perf_estimate.unwrap_or(0.0));
        y.total_cmp(&x).then(a.footprint.cmp(&b.footprint)).then(a.tile.cmp(&b.tile))
    });
    let k = top_count(feasible.len(), top_fraction);
    let mut kept = Vec::with_capacity(k);
    for p in &feasible[..k] {
        let mut q = (*p).clone();
        if q.perf_simulated.is_none() {
            q.perf_simulated = Some(simulate(p)?);
        }
        kept.push(q);
    }
    let best = argmax(&kept, None, |p| p.perf_simulated.unwrap_or(0.0)).cloned().expect("non-empty");
    Ok(HybridResult { best, simulated: k, feasible: feasible.len() })
}

pub fn hybrid_optimize(
    layer: &LayerShape,
    space: &DesignSpace,
    budget: Option<u64>,
    top_fraction: f64,
    model: Model,
    cfg: &SystemConfig,
) -> Result<HybridResult> {
    check_budget(budget)?;
    let tiles = enumerate(space, layer)?;
    let feasible: Vec<TileConfig> =
        tiles.into_iter().filter(|t| budget.is_none_or(|b| buffer_footprint(layer, t) <= b)).collect();
    let points = evaluate(layer, &feasible, cfg, Evaluator::Estimate(model))?;
    hybrid_select(&points, budget, top_fraction, |p| Ok(Evaluator::Simulate.run(layer, &p.tile, cfg)?.performance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TilingMode {
    /// Channel tiles equal the unroll factors.
    Constrained,
    /// Channel tiles are chosen independently of the unroll factors;
    /// partial lanes idle for the remainder.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub tile: TileConfig,
    pub cycles: u64,
    pub footprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLayerResult {
    pub mode: TilingMode,
    /// Shared `(UM, UC)`.
    pub unroll: (u32, u32),
    pub layers: Vec<LayerChoice>,
    pub total_cycles: u64,
    pub aggregate_performance: f64,
}

/// Tiles of `space` for one layer under a fixed unroll.
fn layer_candidates(space: &DesignSpace, layer: &LayerShape, unroll: (u32, u32), mode: TilingMode) -> Vec<TileConfig> {
    let (um, uc) = unroll;
    let mut pairs = vec![(um, uc)];
    if mode == TilingMode::Unconstrained {
        let tms: Vec<u32> = space.tm.iter().copied().chain(space.pairs.iter().map(|p| p.0)).collect();
        let tcs: Vec<u32> = space.tc.iter().copied().chain(space.pairs.iter().map(|p| p.1)).collect();
        pairs.extend(tms.iter().flat_map(|&m| tcs.iter().map(move |&c| (m, c))));
        // Whole-layer channel tiles let a small layer run on a wide array.
        pairs.push((layer.out_channels, layer.in_channels));
        pairs.extend(tms.iter().map(|&m| (m, layer.in_channels)));
        pairs.extend(tcs.iter().map(|&c| (layer.out_channels, c)));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut out = Vec::new();
    for &tb in &space.tb {
        for &(tm, tc) in &pairs {
            for &te in &space.te {
                for &tf in &space.tf {
                    let tile = TileConfig { tb, tc, tm, te, tf, um, uc };
                    if tile.validate(layer).is_ok() {
                        out.push(tile);
                    }
                }
            }
        }
    }
    out
}

/// Chooses one shared unroll and per-layer tiles minimizing total cycles.
/// Every layer must fit `budget` on its own since layers run one after another.
pub fn optimize_multilayer(
    layers: &[(LayerShape, DesignSpace)],
    unrolls: &[(u32, u32)],
    budget: Option<u64>,
    mode: TilingMode,
    model: Model,
    cfg: &SystemConfig,
) -> Result<MultiLayerResult> {
    check_budget(budget)?;
    if layers.is_empty() || unrolls.is_empty() {
        return Err(DseError::EmptySpace.into());
    }
    let total_ops: u64 = layers.iter().map(|(l, _)| l.ops()).sum();
    let mut best: Option<MultiLayerResult> = None;
    for &unroll in unrolls {
        let mut choices = Vec::with_capacity(layers.len());
        for (layer, space) in layers {
            let tiles: Vec<TileConfig> = layer_candidates(space, layer, unroll, mode)
                .into_iter()
                .filter(|t| budget.is_none_or(|b| buffer_footprint(layer, t) <= b))
                .collect();
            if tiles.is_empty() {
                break;
            }
            let points = evaluate(layer, &tiles, cfg, Evaluator::Estimate(model))?;
            let p = argmax(&points, None, |p| p.perf_estimate.unwrap_or(0.0)).expect("non-empty");
            choices.push(LayerChoice { tile: p.tile, cycles: p.cycles_estimate.unwrap_or(0), footprint: p.footprint });
        }
        if choices.len() < layers.len() {
            continue;
        }
        let total_cycles: u64 = choices.iter().map(|c| c.cycles).sum();
        let cand = MultiLayerResult {
            mode,
            unroll,
            layers: choices,
            total_cycles,
            aggregate_performance: total_ops as f64 / total_cycles as f64,
        };
        if best.as_ref().is_none_or(|b| cand.total_cycles < b.total_cycles) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| match budget {
        Some(budget) => DseError::Infeasible { budget }.into(),
        // Without a budget only tile validity can rule every unroll out.
        None => DseError::EmptySpace.into(),
    })
}

/// Estimates of one point by every compared model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub tile: TileConfig,
    pub simulated_cycles: u64,
    /// `(model, estimated cycles, signed relative error)` per model.
    pub estimates: Vec<(String, u64, f64)>,
}

/// Absolute relative error statistics of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub model: String,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub stats: Vec<ErrorStats>,
}

/// Models reported by [`compare_models`] by default.
pub const COMPARED_MODELS: [Model; 4] =
    [Model::Proposed, Model::Conventional, Model::ScaledUniform, Model::ScaledPerType];

/// Signed relative error of an estimate against the simulator.
pub fn relative_error(estimate: u64, simulated: u64) -> f64 {
    (estimate as f64 - simulated as f64) / simulated as f64
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Builds error statistics from already evaluated points.
pub fn error_stats(points: &[ComparePoint]) -> Vec<ErrorStats> {
    let Some(first) = points.first() else { return Vec::new() };
    (0..first.estimates.len())
        .map(|m| {
            let mut errs: Vec<f64> = points.iter().map(|p| p.estimates[m].2.abs()).collect();
            errs.sort_by(f64::total_cmp);
            ErrorStats {
                model: first.estimates[m].0.clone(),
                mean: errs.iter().sum::<f64>() / errs.len() as f64,
                p50: percentile(&errs, 0.5),
                p90: percentile(&errs, 0.9),
                max: *errs.last().expect("non-empty"),
            }
        })
        .collect()
}

/// Simulates every tile and scores each model against it.
pub fn compare_models(
    layer: &LayerShape,
    tiles: &[TileConfig],
    cfg: &SystemConfig,
    models: &[Model],
) -> Result<CompareReport> {
    let points: Result<Vec<ComparePoint>> = map_points(tiles, |t| {
        let sim = Evaluator::Simulate.run(layer, t, cfg)?.total_cycles;
        let estimates = models
            .iter()
            .map(|m| {
                let c = m.evaluate(layer, t, cfg)?.total_cycles;
                Ok((m.name(), c, relative_error(c, sim)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComparePoint { tile: *t, simulated_cycles: sim, estimates })
    })
    .into_iter()
    .collect();
    let points = points?;
    let stats = error_stats(&points);
    Ok(CompareReport { points, stats })
}

/// Writes one CSV row per point.
pub fn write_points_csv<W: std::io::Write>(mut w: W, points: &[DsePoint]) -> std::io::Result<()> {
    writeln!(w, "tb,tc,tm,te,tf,um,uc,footprint,perf_estimate,perf_simulated,regime")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for p in points {
        let t = &p.tile;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.tb,
            t.tc,
            t.tm,
            t.te,
            t.tf,
            t.um,
            t.uc,
            p.footprint,
            opt(p.perf_estimate),
            opt(p.perf_simulated),
            match p.regime {
                Limit::CommLimited => "comm_limited",
                Limit::CompLimited => "comp_limited",
            }
        )?;
    }
    Ok(())
}

pub fn write_frontier_csv<W: std::io::Write>(mut w: W, frontier: &[FrontierPoint]) -> std::io::Result<()> {
    writeln!(w, "budget,performance,tb,tc,tm,te,tf")?;
    for f in frontier {
        match &f.best {
            Some(p) => {
                let t = &p.tile;
                writeln!(
                    w,
                    "{},{:.6},{},{},{},{},{}",
                    f.budget,
                    f.performance.unwrap_or(0.0),
                    t.tb,
                    t.tc,
                    t.tm,
                    t.te,
                    t.tf
                )?
            }
            None => writeln!(w, "{},,,,,,", f.budget)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_space_has_eighteen_points() {
        let tiles = enumerate(&DesignSpace::reference(), &LayerShape::alexnet_conv3(3)).unwrap();
        assert_eq!(tiles.len(), 18);
    }

    #[test]
    fn mac_budget_filter() {
        let space = DesignSpace {
            tb: vec![1],
            pairs: vec![(21, 6), (64, 2), (128, 3)],
            te: vec![13],
            tf: vec![13],
            mac_budget: Some(128),
            ..DesignSpace::reference()
        };
        let tiles = enumerate(&space, &LayerShape::alexnet_conv3(1)).unwrap();
        assert_eq!(tiles.iter().map(|t| t.tm * t.tc).collect::<Vec<_>>(), vec![126, 128]);
    }

    #[test]
    fn empty_space() {
        let space = DesignSpace { tb: vec![9], ..DesignSpace::reference() };
        assert_eq!(enumerate(&space, &LayerShape::alexnet_conv3(1)), Err(DseError::EmptySpace));
    }

    #[test]
    fn extended_space_size() {
        let tiles = enumerate(&DesignSpace::extended(), &LayerShape::alexnet_conv3(1)).unwrap();
        assert!(tiles.len() >= 200, "{}", tiles.len());
    }

    #[test]
    fn budget_grid_is_increasing() {
        let g = budget_grid(1000, 1_000_000, 8);
        assert_eq!(g.len(), 8);
        assert_eq!((g[0], g[7]), (1000, 1_000_000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn top_count_rounds_up() {
        assert_eq!(top_count(252, 0.01), 3);
        assert_eq!(top_count(18, 1.0), 18);
        assert_eq!(top_count(5, 0.001), 1);
    }
}
