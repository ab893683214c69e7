//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::Instant;

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use tilesim::bus::BusConfig;
use tilesim::config::RunConfig;
use tilesim::dram::{service_trace, CommandKind, DramConfig};
use tilesim::dse::{
    budget_grid, compare_models, enumerate, frontier, hybrid_select, optimize_multilayer, CompareReport, DesignSpace,
    DsePoint, TilingMode,
};
use tilesim::estimator::{estimate, step4_interval_duration, Model};
use tilesim::memmap::{
    contiguous_datasets, expand_to_dram_commands, split_into_bursts, BurstRequest, ContiguousDataset, DataType,
    MemoryLayout,
};
use tilesim::sim::{simulate, write_trace, Limit, SimOptions, SystemConfig, TraceKind};
use tilesim::workload::{buffer_footprint, pass_tile, plan_passes, LayerShape, TileConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ifm_bursts(length: u64) -> Vec<BurstRequest> {
    let ds = ContiguousDataset { id: 0, start_addr: 0, length, data_type: DataType::Ifm };
    split_into_bursts(&ds, 16, 1024)
}

fn c1_command_mapping() -> Outcome {
    let cfg = DramConfig { refresh: false, ..Default::default() };
    let bursts = ifm_bursts(120);
    let counted = expand_to_dram_commands(&bursts, &cfg, 2).total;
    // Two outstanding requests: each pair reaches the controller together,
    // the next pair only after the previous one has been served.
    let arrivals: Vec<(BurstRequest, u64)> =
        bursts.iter().enumerate().map(|(i, b)| (*b, (i as u64 / 2) * 200)).collect();
    let trace = service_trace(&arrivals, &cfg).trace;
    let emitted = trace.iter().filter(|c| c.kind != CommandKind::Ref).count();
    check(
        bursts.len() == 8 && counted == 23 && emitted == 23,
        format!("{} bursts, {counted} commands counted, {emitted} emitted", bursts.len()),
    )
}

fn c2_episode_shapes() -> Outcome {
    let cfg = DramConfig::default();
    let pair = |a: u32, b: u32| {
        let mut v = ifm_bursts(a as u64);
        v.extend(ifm_bursts(b as u64).into_iter().map(|mut r| {
            r.start_addr += a as u64;
            r
        }));
        expand_to_dram_commands(&v, &cfg, 2)
    };
    let (x, y) = (pair(16, 16), pair(16, 2));
    check(
        (x.total, x.column_cmds, y.total, y.column_cmds) == (6, 4, 5, 3),
        format!("(16,16) -> {}/{} reads, (16,2) -> {}/{} reads", x.total, x.column_cmds, y.total, y.column_cmds),
    )
}

fn c3_pass_structure() -> Outcome {
    let layer = LayerShape::new(1, 12, 12, 12, 12, 3, 3, 1).map_err(|e| e.to_string())?;
    let plan = plan_passes(&layer, &TileConfig::constrained(1, 3, 4, 5, 5));
    check(
        plan.pass_count == 48 && plan.ofm_store_period == 4,
        format!("{} passes, store every {}", plan.pass_count, plan.ofm_store_period),
    )
}

fn c4_dataset_sizes() -> Outcome {
    let layer = LayerShape::new(1, 6, 2, 5, 5, 3, 3, 1).map_err(|e| e.to_string())?;
    let layout = MemoryLayout::new(&layer, 1024);
    let lens = |tc| -> Vec<u64> {
        let tile = TileConfig::constrained(1, tc, 2, 3, 3);
        contiguous_datasets(DataType::Weight, &layer, &pass_tile(&layer, &tile, 0), &layout)
            .iter()
            .map(|d| d.length)
            .collect()
    };
    let full = lens(6);
    let mut ok = full == vec![54, 54];
    for tc in 1..6 {
        // A pass covers fewer channels, so count datasets over the whole filter set.
        let tile = TileConfig::constrained(1, tc, 2, 3, 3);
        let passes = tilesim::workload::TileGrid::new(&layer, &tile).pass_count();
        let all: Vec<u64> = (0..passes)
            .flat_map(|p| contiguous_datasets(DataType::Weight, &layer, &pass_tile(&layer, &tile, p), &layout))
            .map(|d| d.length)
            .collect();
        ok &= all.len() > 2 && all.iter().all(|&l| l < 54);
    }
    check(ok, format!("TC=6 gives {full:?}; TC<6 gives more, smaller datasets"))
}

struct Space {
    layer: LayerShape,
    report: CompareReport,
}

fn extended_space(cfg: &SystemConfig) -> Result<Space, String> {
    let layer = LayerShape::alexnet_conv3(1);
    let tiles = enumerate(&DesignSpace::extended(), &layer).map_err(|e| e.to_string())?;
    let report =
        compare_models(&layer, &tiles, cfg, &[Model::Proposed, Model::Conventional]).map_err(|e| e.to_string())?;
    Ok(Space { layer, report })
}

fn c5_fidelity(s: &Space) -> Outcome {
    let n = s.report.points.len();
    let (p, c) = (s.report.stats[0].mean, s.report.stats[1].mean);
    check(
        n >= 200 && p <= 0.10 && p < c && c >= 0.20,
        format!("{n} points, mean error proposed {:.1}%, conventional {:.1}%", p * 100.0, c * 100.0),
    )
}

/// Points scored by the simulator with the given model as estimate.
fn points(s: &Space, model: usize) -> Vec<DsePoint> {
    let ops = s.layer.ops() as f64;
    s.report
        .points
        .iter()
        .map(|p| DsePoint {
            tile: p.tile,
            footprint: buffer_footprint(&s.layer, &p.tile),
            perf_estimate: Some(ops / p.estimates[model].1 as f64),
            perf_simulated: Some(ops / p.simulated_cycles as f64),
            cycles_estimate: Some(p.estimates[model].1),
            cycles_simulated: Some(p.simulated_cycles),
            regime: Limit::CommLimited,
        })
        .collect()
}

fn c6_monotone_frontier(s: &Space) -> Outcome {
    let pts = points(s, 0);
    let lo = pts.iter().map(|p| p.footprint).min().unwrap_or(1);
    let hi = pts.iter().map(|p| p.footprint).max().unwrap_or(1);
    let f = frontier(&pts, &budget_grid(lo, hi, 12), |p| p.perf_simulated.unwrap_or(0.0));
    let perf: Vec<f64> = f.iter().map(|x| x.performance.unwrap_or(0.0)).collect();
    let monotone = perf.windows(2).all(|w| w[1] >= w[0]);
    check(
        f.len() >= 8 && monotone,
        format!("{} budgets, {:.1} to {:.1} ops/cycle", f.len(), perf[0], perf[perf.len() - 1]),
    )
}

fn c7_hybrid(s: &Space) -> Outcome {
    let global = points(s, 0).iter().map(|p| p.perf_simulated.unwrap()).fold(0.0, f64::max);
    let pick = |model| -> Result<f64, String> {
        let pts: Vec<DsePoint> = points(s, model).into_iter().map(|p| DsePoint { perf_simulated: None, ..p }).collect();
        let truth = points(s, model);
        let r = hybrid_select(&pts, None, 0.01, |p| {
            Ok(truth.iter().find(|q| q.tile == p.tile).and_then(|q| q.perf_simulated).unwrap_or(0.0))
        })
        .map_err(|e| e.to_string())?;
        Ok(r.best.perf_simulated.unwrap_or(0.0) / global)
    };
    let (p, c) = (pick(0)?, pick(1)?);
    check(p >= 0.95 && c <= p, format!("top 1%: proposed recovers {:.1}%, conventional {:.1}%", p * 100.0, c * 100.0))
}

fn c8_unconstrained_gain(cfg: &SystemConfig) -> Outcome {
    let run = RunConfig::preset("two-layer").map_err(|e| e.to_string())?;
    let space = run.space.clone().unwrap_or_default();
    let layers: Vec<(LayerShape, DesignSpace)> =
        run.layer_shapes().map_err(|e| e.to_string())?.into_iter().map(|l| (l, space.clone())).collect();
    let mut strict = false;
    let mut ok = true;
    let mut detail = Vec::new();
    for budget in [100_000u64, run.sram_budget.unwrap_or(200_000)] {
        let go = |mode| optimize_multilayer(&layers, &run.dse.unrolls, Some(budget), mode, Model::Proposed, cfg);
        match (go(TilingMode::Constrained), go(TilingMode::Unconstrained)) {
            (Ok(c), Ok(u)) => {
                ok &= u.aggregate_performance >= c.aggregate_performance;
                strict |= u.aggregate_performance > c.aggregate_performance;
                detail.push(format!(
                    "{budget}: {:.1} vs {:.1} (+{:.1}%)",
                    u.aggregate_performance,
                    c.aggregate_performance,
                    (u.aggregate_performance / c.aggregate_performance - 1.0) * 100.0
                ));
            }
            (Err(_), Ok(_)) => strict = true,
            (Ok(_), Err(e)) => return Err(format!("unconstrained infeasible at {budget}: {e}")),
            (Err(_), Err(_)) => {}
        }
    }
    check(ok && strict, format!("unconstrained vs constrained at {}", detail.join(", ")))
}

fn random_design() -> impl Strategy<Value = (LayerShape, TileConfig, SystemConfig)> {
    use proptest::prelude::*;
    let layer = (1u32..=2, 1u32..=12, 1u32..=16, 1u32..=8, 1u32..=3, 1u32..=2).prop_map(|(b, c, m, n, k, s)| {
        let hw = k + s * (n - 1);
        LayerShape::new(b, c, m, hw, hw, k, k, s).expect("valid by construction")
    });
    let system = (1u32..=4, 0u64..=16, prop::sample::select(vec![4u32, 8, 16]), 1u32..=4, 1u32..=8, any::<bool>())
        .prop_map(|(mo, lat, burst, close, banks, refresh)| {
            let mut cfg = SystemConfig::default();
            cfg.bus = BusConfig { max_outstanding: mo, request_latency: lat, max_burst_beats: burst, ..cfg.bus };
            cfg.dram = DramConfig { close_after: close, banks, refresh, ..cfg.dram };
            cfg
        });
    (layer, system).prop_flat_map(|(l, cfg)| {
        (Just(l), 1..=l.batch, 1..=l.in_channels, 1..=l.out_channels, 1..=l.out_height, 1..=l.out_width, Just(cfg))
            .prop_map(|(l, tb, tc, tm, te, tf, cfg)| (l, TileConfig::constrained(tb, tc, tm, te, tf), cfg))
    })
}

fn c9_invariants() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strategy = random_design();
    let mut total = tilesim::sim::Violations::default();
    let mut runs = 0;
    for _ in 0..100 {
        let (layer, tile, cfg) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let r = simulate(&layer, &tile, &cfg, SimOptions::default()).map_err(|e| format!("{layer:?} {tile:?}: {e}"))?;
        let v = r.report.violations.unwrap_or_default();
        total.outstanding_limit += v.outstanding_limit;
        total.phase_order += v.phase_order;
        total.channel_overlap += v.channel_overlap;
        total.row_activation += v.row_activation;
        total.close_bound += v.close_bound;
        total.beat_conservation += v.beat_conservation;
        total.double_buffer += v.double_buffer;
        total.causality += v.causality;
        runs += 1;
    }
    check(total.total() == 0, format!("{runs} configs, violations {total:?}"))
}

fn c10_determinism(cfg: &SystemConfig) -> Outcome {
    let layer = LayerShape::new(1, 8, 16, 15, 15, 3, 3, 1).map_err(|e| e.to_string())?;
    let tile = TileConfig::constrained(1, 4, 8, 5, 13);
    let capture = || -> Result<Vec<Vec<u8>>, String> {
        let out = simulate(&layer, &tile, cfg, SimOptions::all()).map_err(|e| e.to_string())?;
        let mut files = vec![out.report.to_json().map_err(|e| e.to_string())?.into_bytes()];
        for kind in [TraceKind::Dram, TraceKind::Bus, TraceKind::Passes] {
            let mut buf = Vec::new();
            write_trace(&out, kind, &mut buf).map_err(|e| e.to_string())?;
            files.push(buf);
        }
        let est = estimate(&layer, &tile, cfg).map_err(|e| e.to_string())?;
        files.push(est.to_json().map_err(|e| e.to_string())?.into_bytes());
        Ok(files)
    };
    let (a, b) = (capture()?, capture()?);
    let bytes: usize = a.iter().map(Vec::len).sum();
    check(a == b, format!("{} artifacts, {bytes} bytes identical", a.len()))
}

fn c11_interval_by_hand() -> Outcome {
    let (u, p, c, bc) = ([0.4, 0.3], [1200.0, 180.0], [120.0, 18.0], [8.0, 2.0]);
    // Hand evaluation: remaining bursts (1200/120*8, 180/18*2) = (80, 20), m = 20.
    let m = f64::min(80.0, 20.0);
    let a = [m / 8.0 * 120.0, m / 2.0 * 18.0];
    let duration = f64::max(a[0] / u[0], a[1] / u[1]);
    let e = step4_interval_duration(&u, &p, &c, &bc);
    check(
        e.a == a && e.duration == duration && e.p == vec![900.0, 0.0] && a == [300.0, 180.0],
        format!("m = {m}, A = ({}, {}), duration {}", e.a[0], e.a[1], e.duration),
    )
}

fn main() {
    let cfg = SystemConfig::default();
    let start = Instant::now();
    let space = extended_space(&cfg);
    let space_time = start.elapsed();
    let with_space = |f: fn(&Space) -> Outcome| space.as_ref().map_err(|e| e.clone()).and_then(f);

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "command mapping of a 120-element dataset", c1_command_mapping()),
        (2, "episode shapes of burst pairs", c2_episode_shapes()),
        (3, "pass structure", c3_pass_structure()),
        (4, "weight dataset sizes", c4_dataset_sizes()),
        (5, "estimator fidelity", with_space(c5_fidelity)),
        (6, "simulated performance frontier is monotone", with_space(c6_monotone_frontier)),
        (7, "hybrid filtering", with_space(c7_hybrid)),
        (8, "unconstrained tiling gain", c8_unconstrained_gain(&cfg)),
        (9, "protocol and bank invariants", c9_invariants()),
        (10, "determinism", c10_determinism(&cfg)),
        (11, "interval duration by hand", c11_interval_by_hand()),
    ];

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS criterion {n}: {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {d}");
            }
        }
    }
    println!(
        "{} of {} criteria passed ({:.1} s total, {:.1} s simulating the extended space)",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64(),
        space_time.as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
