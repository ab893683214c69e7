//! Worked examples checked against independent oracles: brute-force loop
//! nests, address enumeration and hand-timed schedules.

use tilesim::bus::{arbitrate, Bus, BusConfig, IssueRejected};
use tilesim::dram::{service_trace, CommandKind, DramConfig};
use tilesim::estimator::{
    estimate, step2_dataset_duration, step3_bandwidth, step4_interval_duration, Regime, ShareModel,
};
use tilesim::memmap::{
    burst_lengths, contiguous_datasets, element_address, expand_to_dram_commands, split_into_bursts, BurstRequest,
    DataType, Direction, MemoryLayout,
};
use tilesim::sim::{simulate, SimOptions, SystemConfig};
use tilesim::workload::{
    buffer_footprint, derive_output_dims, pass_tile, plan_passes, LayerShape, TileConfig, TileGrid,
};

fn reference_tile() -> TileConfig {
    TileConfig::constrained(1, 2, 64, 6, 13)
}

fn read(start: u64, beats: u32, dmac: DataType) -> BurstRequest {
    BurstRequest { dataset_id: 0, start_addr: start, beats, direction: Direction::Read, issuing_dmac: dmac }
}

/// Iterates the across-tiles loop nest and counts iterations.
fn brute_force_passes(l: &LayerShape, t: &TileConfig) -> (u64, u64) {
    let (mut passes, mut stores) = (0u64, 0u64);
    for _b in (0..l.batch).step_by(t.tb as usize) {
        for _e in (0..l.out_height).step_by(t.te as usize) {
            for _f in (0..l.out_width).step_by(t.tf as usize) {
                for _m in (0..l.out_channels).step_by(t.tm as usize) {
                    for c in (0..l.in_channels).step_by(t.tc as usize) {
                        passes += 1;
                        if c + t.tc >= l.in_channels {
                            stores += 1;
                        }
                    }
                }
            }
        }
    }
    (passes, stores)
}

#[test]
fn output_dims_by_direct_evaluation() {
    assert_eq!(derive_output_dims(15, 15, 3, 3, 1).unwrap(), (13, 13));
    assert_eq!(derive_output_dims(3, 3, 3, 3, 1).unwrap(), (1, 1));
    assert_eq!(derive_output_dims(227, 227, 11, 11, 4).unwrap(), ((227 - 11) / 4 + 1, 55));
}

#[test]
fn twelve_channel_layer_has_48_passes() {
    let layer = LayerShape::new(1, 12, 12, 12, 12, 3, 3, 1).unwrap();
    let tile = TileConfig::constrained(1, 3, 4, 5, 5);
    let plan = plan_passes(&layer, &tile);
    let (passes, stores) = brute_force_passes(&layer, &tile);
    assert_eq!(plan.pass_count, 48);
    assert_eq!(plan.pass_count, passes);
    assert_eq!(plan.ofm_store_period, 4);
    assert_eq!(passes / stores, 4);
}

#[test]
fn reference_tile_amounts() {
    let layer = LayerShape::alexnet_conv3(1);
    let plan = plan_passes(&layer, &reference_tile());
    assert_eq!(plan.ifm_pixels_per_pass, 2 * 8 * 15);
    assert_eq!(plan.w_weights_per_pass, 2 * 64 * 9);
    assert_eq!(buffer_footprint(&layer, &reference_tile()), 2 * (240 + 1152 + 4992));
    let unit = LayerShape::new(1, 1, 1, 1, 1, 1, 1, 1).unwrap();
    assert_eq!(buffer_footprint(&unit, &TileConfig::constrained(1, 1, 1, 1, 1)), 6);
}

/// Maximal address runs of a tensor tile, found by enumerating every
/// element and splitting at plane boundaries.
fn brute_force_runs(dt: DataType, layer: &LayerShape, tile: &TileConfig, pass: u64) -> Vec<u64> {
    let p = pass_tile(layer, tile, pass);
    let mut addrs: Vec<(u64, u64)> = Vec::new();
    match dt {
        DataType::Weight => {
            for m in p.m0..p.m0 + p.tm {
                for c in p.c0..p.c0 + p.tc {
                    for r in 0..layer.filter_height {
                        for s in 0..layer.filter_width {
                            addrs.push((m as u64, element_address(dt, [m, c, r, s], layer).unwrap()));
                        }
                    }
                }
            }
        }
        DataType::Ifm => {
            let (r0, r1) = p.ifm_rows(layer);
            let (c0, c1) = p.ifm_cols(layer);
            for b in p.b0..p.b0 + p.tb {
                for c in p.c0..p.c0 + p.tc {
                    for h in r0..r1 {
                        for w in c0..c1 {
                            let plane = b as u64 * layer.in_channels as u64 + c as u64;
                            addrs.push((plane, element_address(dt, [b, c, h, w], layer).unwrap()));
                        }
                    }
                }
            }
        }
        DataType::Ofm => unreachable!(),
    }
    addrs.sort();
    let mut runs: Vec<u64> = Vec::new();
    let mut prev: Option<(u64, u64)> = None;
    for (plane, a) in addrs {
        match prev {
            Some((pp, pa)) if pp == plane && pa + 1 == a => *runs.last_mut().unwrap() += 1,
            _ => runs.push(1),
        }
        prev = Some((plane, a));
    }
    runs
}

fn dataset_lengths(dt: DataType, layer: &LayerShape, tile: &TileConfig, pass: u64) -> Vec<u64> {
    let p = pass_tile(layer, tile, pass);
    contiguous_datasets(dt, layer, &p, &MemoryLayout::new(layer, 1024)).iter().map(|d| d.length).collect()
}

#[test]
fn six_channel_filters_form_two_54_weight_datasets() {
    let layer = LayerShape::new(1, 6, 2, 5, 5, 3, 3, 1).unwrap();
    let tile = TileConfig::constrained(1, 6, 2, 3, 3);
    assert_eq!(dataset_lengths(DataType::Weight, &layer, &tile, 0), vec![54, 54]);
    assert_eq!(brute_force_runs(DataType::Weight, &layer, &tile, 0), vec![54, 54]);
    for tc in 1..6 {
        let t = TileConfig::constrained(1, tc, 2, 3, 3);
        let lens = dataset_lengths(DataType::Weight, &layer, &t, 0);
        assert_eq!(lens, brute_force_runs(DataType::Weight, &layer, &t, 0));
        assert!(lens.iter().all(|&l| l < 54), "tc={tc}: {lens:?}");
    }
}

#[test]
fn channel_tile_of_three_gives_27_element_runs() {
    let layer = LayerShape::new(1, 12, 4, 5, 5, 3, 3, 1).unwrap();
    let tile = TileConfig::constrained(1, 3, 4, 3, 3);
    for pass in 0..4 {
        let lens = dataset_lengths(DataType::Weight, &layer, &tile, pass);
        assert_eq!(lens, brute_force_runs(DataType::Weight, &layer, &tile, pass));
        assert!(lens.iter().all(|&l| l == 27));
    }
}

#[test]
fn ifm_datasets_match_address_enumeration() {
    let layer = LayerShape::alexnet_conv3(1);
    for tile in [reference_tile(), TileConfig::constrained(1, 4, 8, 5, 7), TileConfig::constrained(1, 3, 8, 13, 13)] {
        for pass in [0, 1, 5] {
            assert_eq!(
                dataset_lengths(DataType::Ifm, &layer, &tile, pass),
                brute_force_runs(DataType::Ifm, &layer, &tile, pass),
                "{tile:?} pass {pass}"
            );
        }
    }
    assert!(dataset_lengths(DataType::Ifm, &layer, &reference_tile(), 0).iter().all(|&l| l == 120));
}

#[test]
fn burst_splits() {
    assert_eq!(burst_lengths(120, 16), [vec![16; 7], vec![8]].concat());
    assert_eq!(burst_lengths(18, 16), vec![16, 2]);
    assert_eq!(burst_lengths(16, 16), vec![16]);
}

#[test]
fn command_counts_of_burst_groups() {
    let cfg = DramConfig::default();
    let ds = tilesim::memmap::ContiguousDataset { id: 0, start_addr: 0, length: 120, data_type: DataType::Ifm };
    let bursts = split_into_bursts(&ds, 16, 1024);
    assert_eq!(bursts.len(), 8);
    assert_eq!(expand_to_dram_commands(&bursts, &cfg, 2).total, 23);
    let pair = |a, b| vec![read(0, a, DataType::Ifm), read(a as u64, b, DataType::Ifm)];
    let c = expand_to_dram_commands(&pair(16, 16), &cfg, 2);
    assert_eq!((c.total, c.column_cmds), (6, 4));
    let c = expand_to_dram_commands(&pair(16, 2), &cfg, 2);
    assert_eq!((c.total, c.column_cmds), (5, 3));
}

#[test]
fn single_read_latency_by_hand() {
    let cfg = DramConfig { refresh: false, ..Default::default() };
    let t = cfg.timing;
    let out = service_trace(&[(read(0, 16, DataType::Ifm), 100)], &cfg);
    // ACT at 100, columns at 110 and 114, last beat at 114 + tCL + tBURST.
    assert_eq!(out.completions[0], 100 + t.t_rcd + t.t_cl + 2 * t.t_burst);
}

#[test]
fn same_row_reads_share_one_activation() {
    let cfg = DramConfig { refresh: false, ..Default::default() };
    let out = service_trace(&[(read(0, 16, DataType::Ifm), 0), (read(16, 16, DataType::Ifm), 0)], &cfg);
    let acts = out.trace.iter().filter(|c| c.kind == CommandKind::Act).count();
    assert_eq!(acts, 1);
    assert_eq!(out.completions[1] - out.completions[0], 2 * cfg.timing.t_burst);
}

#[test]
fn request_reaches_dram_after_handshake_and_latency() {
    let mut bus = Bus::new(BusConfig::default(), 8);
    let id = bus.issue(read(0, 16, DataType::Ifm), 0).unwrap();
    assert_eq!(bus.read_arrival(id), 6);
    bus.issue(read(16, 16, DataType::Ifm), 1).unwrap();
    assert_eq!(bus.issue(read(32, 16, DataType::Ifm), 2), Err(IssueRejected { dmac: DataType::Ifm, in_flight: 2 }));
}

#[test]
fn round_robin_grants() {
    use DataType::*;
    assert_eq!(arbitrate([5, 5, 0], 4), vec![Ifm, Weight, Ifm, Weight]);
    assert_eq!(arbitrate([0, 3, 0], 3), vec![Weight; 3]);
    let g = arbitrate([9, 9, 9], 6);
    for d in DataType::ALL {
        assert_eq!(g.iter().filter(|&&x| x == d).count(), 2);
    }
}

#[test]
fn compute_bound_total_matches_pipeline_formula() {
    // One channel tile and a large compute per pass leave the loads hidden.
    let layer = LayerShape::new(1, 4, 4, 6, 6, 3, 3, 1).unwrap();
    let tile = TileConfig { tb: 1, tc: 4, tm: 4, te: 4, tf: 4, um: 1, uc: 1 };
    let cfg = SystemConfig::default();
    let r = simulate(&layer, &tile, &cfg, SimOptions::default()).unwrap().report;
    let grid = TileGrid::new(&layer, &tile);
    let compute = 9 * 16 * 16 + cfg.accelerator.pipeline_fill;
    assert_eq!(grid.pass_count(), 1);
    assert_eq!(r.limit, tilesim::sim::Limit::CompLimited);
    assert!(r.total_cycles >= compute);
    let e = estimate(&layer, &tile, &cfg).unwrap();
    let slack = r.total_cycles.abs_diff(e.total_cycles) as f64 / r.total_cycles as f64;
    assert!(slack < 0.05, "sim {} est {}", r.total_cycles, e.total_cycles);
}

#[test]
fn reference_tile_is_communication_limited_with_intervals() {
    let layer = LayerShape::new(1, 8, 64, 15, 15, 3, 3, 1).unwrap();
    let out = simulate(&layer, &reference_tile(), &SystemConfig::default(), SimOptions::all()).unwrap();
    let r = &out.report;
    assert_eq!(r.limit, tilesim::sim::Limit::CommLimited);
    let passes = r.passes.as_ref().unwrap();
    assert_eq!(passes.len() as u64, r.pass_count);
    for p in passes {
        let sum: u64 = p.intervals.iter().map(|i| i.end - i.start).sum();
        assert_eq!(sum, p.comm_end - p.comm_start);
        assert!(p.intervals.iter().all(|i| i.bandwidth <= 1.0));
    }
    // A window that overlaps a store carries all three DMACs at some point.
    assert!(passes.iter().any(|p| p.intervals.iter().any(|i| i.active_dmacs.len() == 3)));
    assert_eq!(r.violations.unwrap().total(), 0);
}

#[test]
fn shared_interval_lowers_per_dmac_bandwidth() {
    let cfg = SystemConfig { dram: DramConfig { refresh: false, ..Default::default() }, ..Default::default() };
    let stream = |dmac, base: u64| -> Vec<BurstRequest> { (0..64).map(|i| read(base + 16 * i, 16, dmac)).collect() };
    let alone = tilesim::sim::run_streams(&[(DataType::Ifm, stream(DataType::Ifm, 0), 0)], &cfg);
    let shared = tilesim::sim::run_streams(
        &[(DataType::Ifm, stream(DataType::Ifm, 0), 0), (DataType::Weight, stream(DataType::Weight, 1 << 20), 0)],
        &cfg,
    );
    assert!(shared[0].unwrap() > alone[0].unwrap());

    // The contention model predicts the same slowdown within 15 %.
    let t = step2_dataset_duration(&[16, 16], Direction::Read, &cfg.dram, &cfg.bus);
    let u1 = step3_bandwidth(&[(32.0, &t)], ShareModel::Contention, 1.0)[0];
    let u2 = step3_bandwidth(&[(32.0, &t), (32.0, &t)], ShareModel::Contention, 1.0)[0];
    assert!(u2 < u1);
    let sim_ratio = alone[0].unwrap() as f64 / shared[0].unwrap() as f64;
    assert!((u2 / u1 - sim_ratio).abs() / sim_ratio < 0.15, "model {} sim {}", u2 / u1, sim_ratio);
}

#[test]
fn isolated_stream_rate_matches_simulator() {
    let cfg = SystemConfig { dram: DramConfig { refresh: false, ..Default::default() }, ..Default::default() };
    let bursts: Vec<BurstRequest> =
        (0..32).flat_map(|d| [read(d * 18, 16, DataType::Weight), read(d * 18 + 16, 2, DataType::Weight)]).collect();
    let done = tilesim::sim::run_streams(&[(DataType::Weight, bursts, 0)], &cfg)[1].unwrap();
    let t = step2_dataset_duration(&[16, 2], Direction::Read, &cfg.dram, &cfg.bus);
    let predicted = 32.0 * t.t_dataset + t.tail;
    assert!((predicted - done as f64).abs() / (done as f64) < 0.05, "predicted {predicted} simulated {done}");
}

#[test]
fn two_dmac_interval_by_hand() {
    let e = step4_interval_duration(&[0.4, 0.3], &[1200.0, 180.0], &[120.0, 18.0], &[8.0, 2.0]);
    assert_eq!(e.a, vec![300.0, 180.0]);
    assert_eq!(e.p, vec![900.0, 0.0]);
    assert_eq!(e.duration, f64::max(300.0 / 0.4, 180.0 / 0.3));
}

#[test]
fn regimes_follow_turnaround_versus_execution() {
    let dram = DramConfig::default();
    // Eight outstanding 16-beat bursts keep the DRAM busy longer than a round trip.
    let wide = |l| BusConfig { max_outstanding: 8, request_latency: l, ..Default::default() };
    let a = step2_dataset_duration(&[16; 8], Direction::Read, &dram, &wide(0));
    let b = step2_dataset_duration(&[16; 8], Direction::Read, &dram, &wide(10));
    assert_eq!(a.regime, Regime::DramLimited);
    assert_eq!(a.t_dataset, b.t_dataset);
    // Single tiny bursts wait on every round trip.
    let narrow = |l| BusConfig { request_latency: l, ..Default::default() };
    let t: Vec<f64> = [10, 20, 30]
        .iter()
        .map(|&l| step2_dataset_duration(&[4], Direction::Read, &dram, &narrow(l)).t_dataset)
        .collect();
    assert_eq!(step2_dataset_duration(&[4], Direction::Read, &dram, &narrow(10)).regime, Regime::BusLimited);
    assert!((t[1] - t[0] - (t[2] - t[1])).abs() < 1e-9 && t[1] > t[0]);
}

#[test]
fn doubling_row_tile_amortizes_halo() {
    let layer = LayerShape::alexnet_conv3(1);
    let cfg = SystemConfig::default();
    let small = TileConfig::constrained(1, 4, 32, 3, 13);
    let large = TileConfig::constrained(1, 4, 32, 6, 13);
    let ts = tilesim::workload::layer_traffic(&layer, &small).total();
    let tl = tilesim::workload::layer_traffic(&layer, &large).total();
    assert!(tl < ts);
    let es = estimate(&layer, &small, &cfg).unwrap().total_cycles;
    let el = estimate(&layer, &large, &cfg).unwrap().total_cycles;
    assert!(el < es);
}
