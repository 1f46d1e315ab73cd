use std::path::Path;
use std::process::{Command, Output};

use dwfl::engine::Scheme;
use dwfl::harness::{parse_config, ExperimentConfig, PerWorker, CSV_HEADER};
use dwfl::learn::{PartitionMode, TaskKind};
use proptest::prelude::*;

fn dwfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwfl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn three_rounds_give_four_lines() {
    let o = dwfl(&["--rounds", "3", "--workers", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER);
}

#[test]
fn zero_rounds_give_header_only() {
    let o = dwfl(&["--rounds", "0"]);
    assert_eq!(stdout(&o), format!("{CSV_HEADER}\n"));
}

#[test]
fn contradictory_budget_is_a_config_error() {
    let o = dwfl(&["--epsilon", "0.5", "--sigma", "1.0"]);
    assert_eq!(o.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"epsilon": 0.5, "sigma": 1.0}"#).unwrap();
    let o = dwfl(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("specify one of epsilon/sigma"));
}

#[test]
fn invalid_values_name_the_field() {
    for (args, field) in [
        (vec!["--eta", "1.5"], "eta"),
        (vec!["--workers", "1"], "workers"),
        (vec!["--delta", "2"], "delta"),
        (vec!["--workers", "3", "--beta", "0.1,0.2"], "beta"),
    ] {
        let o = dwfl(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(field), "{args:?}");
    }
    assert_eq!(dwfl(&["--preset", "nope", "--out", "x"]).status.code(), Some(1));
    assert_eq!(dwfl(&["--scheme", "mesh"]).status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_two() {
    let o = dwfl(&["--scheme", "centralized", "--rounds", "5", "--server-outage-round", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unavailable in round 2"));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"rounds": 7, "workers": 4, "sigma": 2.0}"#).unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = dwfl(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    assert_eq!(run(&[]).lines().count(), 8);
    assert_eq!(run(&["--rounds", "2"]).lines().count(), 3);
    // an epsilon flag replaces the file's sigma instead of contradicting it
    let row = run(&["--rounds", "1", "--epsilon", "0.3"]);
    let eps: f64 = row.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((eps - 0.3).abs() < 1e-12);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = dwfl(&["--rounds", "20", "--task", "logistic", "--seed", "9", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    dwfl(&["--rounds", "20", "--task", "logistic", "--seed", "10", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

fn preset_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn preset_writes_one_file_per_item_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["one", "two"]
        .iter()
        .map(|sub| {
            let out = dir.path().join(sub);
            let o = dwfl(&["--preset", "epsilon-sweep", "--rounds", "10", "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            preset_files(&out)
        })
        .collect();
    assert_eq!(runs[0].len(), 4);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(dwfl(&["--preset", "power-sweep"]).status.code(), Some(1));
}

#[test]
fn csv_dataset_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("a,b,label\n");
    for i in 0..40 {
        text.push_str(&format!("{},{},{}\n", i as f64 * 0.1, 1.0 - i as f64 * 0.05, i % 2));
    }
    std::fs::write(&data, text).unwrap();
    let o = dwfl(&["--dataset", data.to_str().unwrap(), "--task", "logistic", "--workers", "4", "--rounds", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dwfl(&["--dataset", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn per_worker() -> impl Strategy<Value = PerWorker> {
    prop_oneof![
        (-50.0f64..100.0).prop_map(PerWorker::Scalar),
        prop::collection::vec(-50.0f64..100.0, 2..5).prop_map(PerWorker::List),
    ]
}

prop_compose! {
    fn any_config()(
        scheme in prop_oneof![Just(Scheme::Dwfl), Just(Scheme::Orthogonal), Just(Scheme::Centralized)],
        workers in 2usize..50,
        rounds in 0usize..5000,
        gamma in 1e-4f64..1.0,
        eta in 1e-3f64..=1.0,
        power_dbm in per_worker(),
        gains in per_worker(),
        channel_noise_std in 0.0f64..3.0,
        budget in prop_oneof![
            (1e-3f64..5.0).prop_map(|e| (Some(e), None)),
            (0.0f64..5.0).prop_map(|s| (None, Some(s))),
            Just((None, None)),
        ],
        delta in 1e-9f64..0.5,
        g_max in 0.01f64..10.0,
        beta in per_worker(),
        logistic in any::<bool>(),
        dimension in 1usize..64,
        shards in any::<bool>(),
        seed in any::<u64>(),
        init_scale in 0.0f64..3.0,
        outage in prop::option::of(0usize..100),
    ) -> ExperimentConfig {
        ExperimentConfig {
            scheme,
            workers,
            rounds,
            gamma,
            eta,
            power_dbm,
            gains,
            channel_noise_std,
            epsilon: budget.0,
            sigma: budget.1,
            delta,
            g_max,
            beta,
            task: if logistic { TaskKind::Logistic } else { TaskKind::Quadratic },
            dimension,
            partition: if shards { PartitionMode::Shards } else { PartitionMode::Iid },
            seed,
            init_scale,
            server_outage_round: outage,
            ..Default::default()
        }
    }
}

proptest! {
    #[test]
    fn config_roundtrip(cfg in any_config()) {
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(parse_config(&text).unwrap(), cfg.clone());
        let pretty = serde_json::to_string_pretty(&cfg).unwrap();
        prop_assert_eq!(parse_config(&pretty).unwrap(), cfg);
    }
}

#[test]
fn default_config_roundtrips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    let cfg = ExperimentConfig {
        rounds: 4,
        workers: 3,
        ..Default::default()
    };
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let from_file = stdout(&dwfl(&["--config", cfg_path.to_str().unwrap()]));
    let from_flags = stdout(&dwfl(&["--rounds", "4", "--workers", "3"]));
    assert_eq!(from_file, from_flags);
}
