use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use nearsim::accel::{run_batch, AccelConfig, OptSet, Stage};
use nearsim::harness::experiment::ResultRow;
use nearsim::harness::output::{csv_string, read_csv};
use nearsim::harness::trace::{format_trace, parse_trace_str, MemEventSeq, TraceRecord, TraceSource};
use nearsim::host::{run_platform, CpuConfig, Platform};
use nearsim::kvstore::{build_table, hash_key, mix64, HashTable, NOT_FOUND};
use nearsim::memmodel::{FixedMemConfig, HmcConfig, MemOp, MemoryConfig};
use nearsim::simkernel::{RateLimitedLink, SimTime};
use nearsim::workload::{Distribution, QueryBatch, WorkloadGenerator, WorkloadSpec};

fn memory(cube: bool) -> MemoryConfig {
    if cube {
        MemoryConfig::hmc(HmcConfig::default())
    } else {
        MemoryConfig::fixed(FixedMemConfig::default())
    }
}

fn opt_strategy() -> impl Strategy<Value = OptSet> {
    prop::sample::select(OptSet::ALL.to_vec())
}

fn workload(log2: u32, lf: f64, hit: f64, zipf: bool, n: usize, seed: u64) -> (Arc<HashTable>, QueryBatch) {
    let table = Arc::new(build_table(1 << log2, lf, seed, 0).unwrap());
    let distribution = if zipf { Distribution::Zipf { alpha: 0.99 } } else { Distribution::Uniform };
    let spec = WorkloadSpec { distribution, hit_ratio: hit, batch_size: n, n_batches: 1, seed };
    let batch = WorkloadGenerator::new(spec, &table, None).unwrap().next_batch(&table);
    (table, batch)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hash_stays_in_range_and_masks_the_mix(key in 0u64..u64::MAX, log2 in 0u32..32) {
        let cap = 1u64 << log2;
        let h = hash_key(key, cap);
        prop_assert!(h < cap);
        prop_assert_eq!(h, mix64(key) & (cap - 1));
    }

    #[test]
    fn inserted_keys_are_found_and_others_miss(keys in prop::collection::hash_set(0u64..1 << 40, 1..200), probe in prop::collection::vec(0u64..1 << 40, 20)) {
        let mut t = HashTable::new(256, 0).unwrap();
        let mut want = HashMap::new();
        for (i, &k) in keys.iter().enumerate() {
            t.insert(k, i as u32).unwrap();
            want.insert(k, i as u32);
        }
        for (&k, &v) in &want {
            prop_assert_eq!(t.lookup_software(k).value, Some(v));
        }
        for k in probe {
            prop_assert_eq!(t.lookup_software(k).value, want.get(&k).copied());
        }
        prop_assert!(t.iter_occupied().all(|(s, e)| t.probe_distance(s) <= t.max_probe_len() && want.contains_key(&e.key)));
    }

    #[test]
    fn accelerator_matches_software_lookup(
        log2 in 6u32..11, lf in 0.05f64..0.9, hit in 0.0f64..=1.0, zipf: bool, n in 1usize..300,
        seed: u64, opt in opt_strategy(), cube: bool, separate: bool,
    ) {
        let (table, batch) = workload(log2, lf, hit, zipf, n, seed);
        let cfg = AccelConfig { separate_ports: separate, ..opt.apply(&AccelConfig::default()) };
        let r = run_batch(&batch, &table, &cfg, &memory(cube)).unwrap();
        let want: Vec<u32> = batch.keys.iter().map(|&k| table.lookup_software(k).value.unwrap_or(NOT_FOUND)).collect();
        prop_assert_eq!(r.values, want);
        prop_assert!(r.accel_stats.peak_outstanding <= cfg.max_outstanding);
        prop_assert!(r.t_full_lookup >= r.t_lookup);
    }

    #[test]
    fn results_leave_the_compare_unit_in_query_order(log2 in 8u32..12, lf in 0.1f64..0.9, n in 1usize..400, seed: u64, opt in opt_strategy(), cube: bool) {
        let (table, batch) = workload(log2, lf, 0.5, false, n, seed);
        let mut p = Platform::new(memory(cube), opt.apply(&AccelConfig::default()), CpuConfig::default());
        p.pipeline_log = true;
        let r = run_platform(&table, &[Arc::new(batch)], &p).unwrap();
        let order: Vec<u32> = r.pipeline_logs[0].iter().filter(|e| e.stage == Stage::CsuOut).map(|e| e.query).collect();
        prop_assert_eq!(order, (0..n as u32).collect::<Vec<_>>());
        let times: Vec<SimTime> = r.pipeline_logs[0].iter().filter(|e| e.stage == Stage::CsuOut).map(|e| e.time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn outstanding_requests_never_exceed_the_limit(limit in 1u32..40, log2 in 8u32..12, n in 1usize..300, seed: u64, cube: bool, batch_keys: bool) {
        let (table, batch) = workload(log2, 0.5, 0.5, false, n, seed);
        let cfg = AccelConfig { max_outstanding: limit, opt_batch_keys: batch_keys, ..AccelConfig::default() };
        let r = run_batch(&batch, &table, &cfg, &memory(cube)).unwrap();
        prop_assert!(r.accel_stats.peak_outstanding <= limit);
        prop_assert!(r.accel_stats.peak_outstanding >= 1);
    }

    #[test]
    fn link_serializes_and_conserves_bytes(gbps in 1u64..200, sizes in prop::collection::vec((1u64..512, 0u64..5_000), 1..60)) {
        let mut link = RateLimitedLink::new(gbps * 1_000_000_000, SimTime::ZERO);
        let (mut depart, mut prev_end, mut total, mut busy) = (SimTime::ZERO, SimTime::ZERO, 0u64, SimTime::ZERO);
        for (size, gap) in sizes {
            depart += SimTime::from_ps(gap);
            let ser = link.serialization(size);
            let arrive = link.transfer(size, depart);
            prop_assert!(arrive >= depart + ser);
            prop_assert!(arrive >= prev_end + ser);
            prev_end = arrive;
            total += size;
            busy += ser;
        }
        prop_assert_eq!(link.bytes_moved(), total);
        prop_assert_eq!(link.busy_time(), busy);
    }

    #[test]
    fn identical_runs_are_identical(log2 in 8u32..12, n_batches in 1usize..5, n_accel in 1usize..4, seed: u64, cube: bool) {
        let table = Arc::new(build_table(1 << log2, 0.6, seed, 0).unwrap());
        let spec = WorkloadSpec { batch_size: 128, n_batches, seed, ..WorkloadSpec::default() };
        let batches: Vec<_> = WorkloadGenerator::new(spec, &table, None).unwrap().batches(&table).into_iter().map(Arc::new).collect();
        let mut p = Platform::new(memory(cube), AccelConfig::default(), CpuConfig::default());
        p.n_accel = n_accel;
        let a = run_platform(&table, &batches, &p).unwrap();
        let b = run_platform(&table, &batches, &p).unwrap();
        prop_assert_eq!(a.events, b.events);
        prop_assert_eq!(a.wall, b.wall);
        prop_assert_eq!(&a.outcomes, &b.outcomes);
    }

    #[test]
    fn homogeneous_batches_spread_evenly(n_batches in 1usize..24, n_accel in 1usize..6) {
        let table = Arc::new(build_table(1 << 10, 0.5, 3, 0).unwrap());
        let batch = WorkloadGenerator::new(WorkloadSpec { batch_size: 32, ..WorkloadSpec::default() }, &table, None).unwrap().next_batch(&table);
        let batches: Vec<_> = (0..n_batches).map(|_| Arc::new(batch.clone())).collect();
        let mut p = Platform::new(MemoryConfig::fixed(FixedMemConfig::default()), AccelConfig::default(), CpuConfig::default());
        p.n_accel = n_accel;
        let r = run_platform(&table, &batches, &p).unwrap();
        let counts: Vec<usize> = r.plan.assignments.iter().map(Vec::len).collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), n_batches);
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        for o in &r.outcomes {
            prop_assert!(o.t_full_lookup >= o.t_lookup && o.t_lookup >= o.accel_busy);
        }
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(row_strategy(), 0..12)) {
        let text = csv_string(&rows, &["seeded".to_string()]).unwrap();
        let back = read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn trace_text_round_trips(steps in prop::collection::vec((0u64..10_000, any::<bool>(), any::<bool>(), 0u64..1 << 30, 1u32..=128), 0..50)) {
        let mut t = 0u64;
        let records = steps.into_iter().map(|(dt, cpu, write, address, size)| {
            t += dt;
            TraceRecord {
                time: SimTime::from_ps(t * 250),
                source: if cpu { TraceSource::Cpu } else { TraceSource::Acc },
                op: if write { MemOp::Write } else { MemOp::Read },
                address,
                size,
            }
        }).collect();
        let seq = MemEventSeq { records };
        prop_assert_eq!(parse_trace_str(&format_trace(&seq)).unwrap(), seq);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batching_and_wider_bus_never_slow_a_full_batch(log2 in 11u32..14, lf in 0.1f64..0.9, hit in 0.0f64..=1.0, seed: u64, cube: bool) {
        let (table, batch) = workload(log2, lf, hit, false, 1024, seed);
        let mem = memory(cube);
        let times: Vec<SimTime> = OptSet::ALL[..3].iter().map(|o| run_batch(&batch, &table, &o.apply(&AccelConfig::default()), &mem).unwrap().t_lookup).collect();
        prop_assert!(times.windows(2).all(|w| w[1] <= w[0]), "{:?}", times);
    }

    #[test]
    fn more_requests_never_slow_unsaturated_memory(log2 in 11u32..14, lf in 0.1f64..0.9, hit in 0.0f64..=1.0, seed: u64, latency in 40u64..400) {
        let (table, batch) = workload(log2, lf, hit, false, 1024, seed);
        let mem = MemoryConfig::fixed(FixedMemConfig {
            read_latency: SimTime::from_ns(latency),
            link_bandwidth: 128_000_000_000,
            max_outstanding: 32,
            ..FixedMemConfig::default()
        });
        let t = |o: OptSet| run_batch(&batch, &table, &o.apply(&AccelConfig::default()), &mem).unwrap().t_lookup;
        let (bus, more) = (t(OptSet::DoubleBus), t(OptSet::DoubleRequests));
        prop_assert!(more <= bus, "{:?} -> {:?}", bus, more);
    }
}

fn row_strategy() -> impl Strategy<Value = ResultRow> {
    (
        (prop::sample::select(vec!["verify", "optimize", "scale"]), prop::sample::select(vec!["fixed", "hmc"]), opt_strategy(), 1usize..17, 0.01f64..0.95, 1u32..200),
        (prop::sample::select(vec!["uniform", "zipf:0.99"]), 0.0f64..=1.0, 1usize..5000, 1usize..100, 1.0f64..1e10, 1.0f64..1e10),
        (0u64..1 << 40, 0u64..1 << 40, any::<u64>()),
    )
        .prop_map(|((e, m, o, n, lf, scan), (d, hit, bs, nb, t, tf), (bc, kbc, seed))| {
            let q = (bs * nb) as f64;
            ResultRow {
                experiment: e.into(),
                memory_model: m.into(),
                opts: o.name().into(),
                n_accel: n,
                load_factor: lf,
                scan_len: scan,
                distribution: d.into(),
                hit_ratio: hit,
                batch_size: bs,
                n_batches: nb,
                t_lookup_ns: t,
                t_full_lookup_ns: tf,
                mlookups_per_s: q / t * 1e3,
                full_mlookups_per_s: q / tf * 1e3,
                bank_conflicts: bc,
                key_bank_conflicts: kbc,
                seed,
            }
        })
}
