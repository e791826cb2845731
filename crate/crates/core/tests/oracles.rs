use std::sync::Arc;

use nearsim::accel::{run_batch, AccelConfig, OptSet, Stage};
use nearsim::harness::experiment::{run_experiment, ExperimentKind, ExperimentSpec};
use nearsim::harness::output::{plot_script, plot_series};
use nearsim::host::{run_platform, CpuConfig, Platform};
use nearsim::kvstore::{build_table, hash_key, HashTable, NOT_FOUND};
use nearsim::memmodel::{FixedMemConfig, HmcConfig, MemoryConfig};
use nearsim::simkernel::SimTime;
use nearsim::workload::{batch_from_trace, QueryBatch, WorkloadGenerator, WorkloadSpec};

fn fixed_85() -> MemoryConfig {
    MemoryConfig::fixed(FixedMemConfig {
        read_latency: SimTime::from_ns(85),
        link_bandwidth: 10_000_000_000,
        max_outstanding: 16,
        ..FixedMemConfig::default()
    })
}

fn batch_of(keys: &[u64], table: &HashTable) -> QueryBatch {
    QueryBatch {
        keys: keys.to_vec(),
        expected: keys.iter().map(|&k| table.lookup_software(k).value).collect(),
        probe_index: None,
    }
}

fn logged_run(table: &Arc<HashTable>, batch: QueryBatch, accel: AccelConfig, mem: MemoryConfig) -> nearsim::host::RunReport {
    let mut p = Platform::new(mem, accel, CpuConfig::zero_cost());
    p.pipeline_log = true;
    run_platform(table, &[Arc::new(batch)], &p).unwrap()
}

#[test]
fn mean_probe_length_matches_linear_probing_expectation() {
    let t = build_table(1 << 20, 0.5, 21, 0).unwrap();
    let (mut sum, mut n) = (0u64, 0u64);
    for (_, e) in t.iter_occupied() {
        sum += u64::from(t.lookup_software(e.key).probes);
        n += 1;
    }
    let mean = sum as f64 / n as f64;
    let expect = 0.5 * (1.0 + 1.0 / (1.0 - 0.5));
    assert!((mean / expect - 1.0).abs() < 0.05, "mean probe {mean} vs {expect}");
}

#[test]
fn single_query_schedule_is_hand_computable() {
    let mut t = HashTable::new(1024, 0).unwrap();
    t.insert(42, 7).unwrap();
    let t = Arc::new(t);
    let accel = AccelConfig { scan_len: Some(1), ..AccelConfig::default() };
    let r = logged_run(&t, batch_of(&[42], &t), accel, fixed_85());
    assert_eq!(r.outcomes[0].values, vec![7]);
    let at = |s: Stage| r.pipeline_logs[0].iter().find(|e| e.stage == s).unwrap().time.ps();

    // 800 ps cycle; 8 B key read and 16 B entry read over 10 GB/s plus 85 ns.
    let key_done: u64 = 800 + 85_000;
    let key_ingest = key_done.div_ceil(800) * 800 + 800;
    let hashed = key_ingest + 4 * 800;
    let probe_done = hashed + 1_600 + 85_000;
    let probe_ingest = probe_done.div_ceil(800) * 800 + 2 * 800;
    let csu = probe_ingest + 2 * 800;
    let written = csu + 4_000;
    assert_eq!(at(Stage::KeyIssue), 0);
    assert_eq!(at(Stage::KeyIngest), key_ingest);
    assert_eq!(at(Stage::Hash), hashed);
    assert_eq!(at(Stage::ProbeIssue), hashed);
    assert_eq!(at(Stage::ProbeIngest), probe_ingest);
    assert_eq!(at(Stage::CsuOut), csu);
    assert_eq!(at(Stage::ValueWrite), written);
    assert_eq!(at(Stage::Done), written);
    assert_eq!(r.outcomes[0].t_lookup.ps(), written);
}

#[test]
fn hit_in_last_entry_costs_the_same_as_a_miss() {
    let mut t = HashTable::new(1024, 0).unwrap();
    let home = |k: u64| hash_key(k, 1024);
    let a = 1u64;
    let mut keys = vec![a];
    // Fill the next seven slots after a's home so the eighth entry holds the target.
    let mut k = 2;
    while keys.len() < 8 {
        if home(k) == home(a) {
            keys.push(k);
        }
        k += 1;
    }
    for (i, &k) in keys.iter().enumerate() {
        t.insert(k, i as u32).unwrap();
    }
    let mut miss = k;
    while home(miss) != home(a) || t.contains(miss) {
        miss += 1;
    }
    let t = Arc::new(t);
    let accel = AccelConfig { scan_len: Some(8), ..AccelConfig::default() };
    let hit = logged_run(&t, batch_of(&[keys[7]], &t), accel.clone(), fixed_85());
    let missed = logged_run(&t, batch_of(&[miss], &t), accel, fixed_85());
    assert_eq!(hit.outcomes[0].values, vec![7]);
    assert_eq!(missed.outcomes[0].values, vec![NOT_FOUND]);
    let times = |r: &nearsim::host::RunReport| r.pipeline_logs[0].iter().map(|e| (e.stage, e.time)).collect::<Vec<_>>();
    assert_eq!(times(&hit), times(&missed));
}

#[test]
fn all_miss_batch_fetches_full_windows() {
    let t = Arc::new(build_table(1 << 16, 0.5, 4, 0).unwrap());
    let spec = WorkloadSpec { hit_ratio: 0.0, batch_size: 1024, ..WorkloadSpec::default() };
    let batch = WorkloadGenerator::new(spec, &t, None).unwrap().next_batch(&t);
    for scan in [1u32, 10, 23] {
        let accel = AccelConfig { scan_len: Some(scan), ..AccelConfig::default() };
        let r = run_batch(&batch, &t, &accel, &fixed_85()).unwrap();
        assert!(r.values.iter().all(|&v| v == NOT_FOUND));
        assert_eq!(r.accel_stats.entries_fetched, 1024 * u64::from(scan));
    }
}

#[test]
fn long_windows_approach_link_bandwidth() {
    let t = Arc::new(build_table(1 << 16, 0.5, 8, 0).unwrap());
    let spec = WorkloadSpec { batch_size: 256, ..WorkloadSpec::default() };
    let batch = WorkloadGenerator::new(spec, &t, None).unwrap().next_batch(&t);
    let mut last_err = f64::MAX;
    for scan in [64u32, 128, 256] {
        let accel = AccelConfig { scan_len: Some(scan), ..OptSet::DoubleBus.apply(&AccelConfig::default()) };
        let r = run_batch(&batch, &t, &accel, &fixed_85()).unwrap();
        let rate = batch.len() as f64 / (r.t_lookup.ps() as f64 * 1e-12);
        let bound = 10e9 / (f64::from(scan) * 16.0);
        let err = (rate / bound - 1.0).abs();
        assert!(rate <= bound * 1.0001, "scan {scan}: {rate} above the link bound {bound}");
        assert!(err <= last_err + 1e-9, "error should shrink as windows grow");
        last_err = err;
    }
    assert!(last_err < 0.10, "still {:.1}% from the asymptote", last_err * 100.0);
}

#[test]
fn two_accelerators_share_eight_batches_evenly() {
    let t = Arc::new(build_table(1 << 16, 0.5, 9, 0).unwrap());
    let spec = WorkloadSpec { batch_size: 1024, n_batches: 8, ..WorkloadSpec::default() };
    let batch = WorkloadGenerator::new(spec, &t, None).unwrap().next_batch(&t);
    let batches: Vec<_> = (0..8).map(|_| Arc::new(batch.clone())).collect();
    let accel = AccelConfig { scan_len: Some(16), ..AccelConfig::default() };
    let mut p = Platform::new(MemoryConfig::hmc(HmcConfig::default()), accel, CpuConfig::default());
    let one = run_platform(&t, &batches, &p).unwrap();
    p.n_accel = 2;
    let two = run_platform(&t, &batches, &p).unwrap();
    assert_eq!(two.plan.assignments.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
    let speedup = two.full_mlookups_per_s() / one.full_mlookups_per_s();
    assert!((1.5..=2.0 + 1e-9).contains(&speedup), "speedup {speedup}");
    for o in &two.outcomes {
        assert!(o.t_full_lookup >= o.t_lookup && o.t_lookup >= o.accel_busy);
    }
}

#[test]
fn readback_adds_one_scratchpad_read_per_line() {
    let t = Arc::new(build_table(1 << 14, 0.5, 2, 0).unwrap());
    let batch = WorkloadGenerator::new(WorkloadSpec { batch_size: 1024, ..WorkloadSpec::default() }, &t, None).unwrap().next_batch(&t);
    let cpu = CpuConfig::default();
    let r = nearsim::host::run_lookup_cycle(&batch, &t, &AccelConfig { scan_len: Some(4), ..AccelConfig::default() }, &fixed_85(), &cpu).unwrap();
    assert_eq!(cpu.lines(1024 * 4), 128);
    assert_eq!(r.t_full_lookup - r.t_lookup, SimTime::from_ns(4 * 128));
}

#[test]
fn captured_trace_replays_the_same_probe_indices() {
    let t = Arc::new(build_table(1 << 16, 0.7, 12, 0).unwrap());
    let batch = WorkloadGenerator::new(WorkloadSpec { batch_size: 512, ..WorkloadSpec::default() }, &t, None).unwrap().next_batch(&t);
    let scan = 12;
    let mut p = Platform::new(fixed_85(), AccelConfig { scan_len: Some(scan), ..AccelConfig::default() }, CpuConfig::default());
    p.trace = true;
    let r = run_platform(&t, &[Arc::new(batch.clone())], &p).unwrap();
    let replay = batch_from_trace(r.trace.as_ref().unwrap(), &t, &r.layout, Some(scan)).unwrap();
    let want: Vec<u64> = batch.keys.iter().map(|&k| hash_key(k, t.capacity())).collect();
    assert_eq!(replay.probe_index.as_deref(), Some(&want[..]));
    let again = run_platform(&t, &[Arc::new(replay)], &Platform { trace: false, ..p }).unwrap();
    assert_eq!(again.outcomes[0].t_lookup, r.outcomes[0].t_lookup);
}

#[test]
fn plot_scripts_carry_one_series_per_curve() {
    let small = ["table.capacity_log2 = 12", "workload.n_batches = 1", "workload.batch_size = 64", "experiment.load_factors = 0.5"];
    let opt = run_experiment(&ExperimentSpec::from_overrides(ExperimentKind::Optimize, &small, 1).unwrap()).unwrap();
    let script = plot_script(&opt).unwrap();
    assert_eq!(plot_series(&script), 4);
    for label in ["Base", "Batch Keys", "2x Bus Width", "2x More Requests"] {
        assert!(script.contains(label), "missing {label}");
    }
    let mut scale = small.to_vec();
    scale.push("experiment.accelerators = 1, 2, 4, 8");
    let rows = run_experiment(&ExperimentSpec::from_overrides(ExperimentKind::Scale, &scale, 1).unwrap()).unwrap();
    assert_eq!(plot_series(&plot_script(&rows).unwrap()), 4);
}
