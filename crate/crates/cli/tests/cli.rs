use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const RUN_FILES: [(&str, &str); 5] = [
    ("queue_trace.csv", "time,q_bytes,avg_if_red,rate_estimate_if_fn"),
    ("decisions.csv", "time,flow,seq,verdict,reason,probability_used,q_bytes"),
    (
        "flows.csv",
        "flow_id,kind,generated,delivered,dropped,marked,residual,delivered_bytes",
    ),
    ("intervals.csv", "index,interval"),
    (
        "summary.csv",
        "policy,duration_s,utilization,mean_delay_s,mean_queue_bytes,sync_index,generated,delivered,dropped,marked,overflow_drops,early_drops,residual",
    ),
];

fn aqmlab(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aqmlab"));
    cmd.args(args);
    match env_seed {
        Some(s) => cmd.env("AQMLAB_SEED", s),
        None => cmd.env_remove("AQMLAB_SEED"),
    };
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fn_scenario() -> Value {
    json!({
        "duration_s": 8,
        "seed": 4,
        "sampling_interval_s": 0.05,
        "gateway": { "mu_bps": 5_000_000, "capacity_bytes": 200_000 },
        "policy": { "kind": "fn" },
        "sources": [
            { "kind": "aimd", "rtt_s": 0.06, "initial_window_packets": 1, "max_window_packets": 1000,
              "packet_size_bytes": 1000 },
            { "kind": "aimd", "rtt_s": 0.04, "initial_window_packets": 2, "max_window_packets": 1000,
              "packet_size_bytes": 1000, "start_s": 0.01 },
            { "kind": "poisson", "rate_bps": 400_000, "packet_size_bytes": 500, "ecn_capable": false }
        ]
    })
}

fn write_scenario(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_all(dir: &Path) -> Vec<Vec<u8>> {
    RUN_FILES
        .iter()
        .map(|(f, _)| fs::read(dir.join(f)).unwrap())
        .collect()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == name)
        .unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn run_writes_five_schema_stable_files_deterministically() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), "s.json", &fn_scenario());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = aqmlab(
            &["run", sc.to_str().unwrap(), "-o", dir.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for (file, header) in RUN_FILES {
        let text = fs::read_to_string(a.join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), header, "{file}");
        assert!(!text.contains('\r'));
    }
    assert_eq!(read_all(&a), read_all(&b));
    assert_eq!(fs::read_dir(&a).unwrap().count(), 5, "no staging leftovers");

    let flows = fs::read_to_string(a.join("flows.csv")).unwrap();
    let g: Vec<u64> = column(&flows, "generated")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let d: Vec<u64> = column(&flows, "delivered")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let x: Vec<u64> = column(&flows, "dropped")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let r: Vec<u64> = column(&flows, "residual")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    for i in 0..g.len() {
        assert_eq!(g[i], d[i] + x[i] + r[i]);
    }
}

#[test]
fn seed_env_overrides_scenario_seed() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), "s.json", &fn_scenario());
    let mut reseeded = fn_scenario();
    reseeded["seed"] = json!(99);
    let sc99 = write_scenario(tmp.path(), "s99.json", &reseeded);
    let dirs: Vec<PathBuf> = ["env", "file", "plain"]
        .iter()
        .map(|d| tmp.path().join(d))
        .collect();
    let runs = [
        (sc.as_path(), &dirs[0], Some("99")),
        (sc99.as_path(), &dirs[1], None),
        (sc.as_path(), &dirs[2], None),
    ];
    for (s, d, env) in runs {
        let o = aqmlab(
            &["run", s.to_str().unwrap(), "-o", d.to_str().unwrap()],
            env,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read_all(&dirs[0]), read_all(&dirs[1]));
    assert_ne!(read_all(&dirs[0]), read_all(&dirs[2]));

    let o = aqmlab(
        &["run", sc.to_str().unwrap(), "-o", dirs[2].to_str().unwrap()],
        Some("-3"),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("AQMLAB_SEED"));
}

#[test]
fn invalid_q_opt_is_named_and_leaves_no_output() {
    let tmp = TempDir::new().unwrap();
    let mut v = fn_scenario();
    v["policy"]["q_opt_bytes"] = json!(200_000);
    let sc = write_scenario(tmp.path(), "s.json", &v);
    let out = tmp.path().join("out");
    let o = aqmlab(
        &["run", sc.to_str().unwrap(), "-o", out.to_str().unwrap()],
        None,
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("q_opt_bytes"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_and_unitless_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    for (path, key) in [
        ("gateway", "mu"),
        ("policy", "t_const"),
        ("", "durations_s"),
    ] {
        let mut v = fn_scenario();
        let target = if path.is_empty() {
            &mut v
        } else {
            &mut v[path]
        };
        target[key] = json!(1);
        let sc = write_scenario(tmp.path(), "s.json", &v);
        let o = aqmlab(
            &[
                "run",
                sc.to_str().unwrap(),
                "-o",
                tmp.path().join("o").to_str().unwrap(),
            ],
            None,
        );
        assert!(!o.status.success());
        assert!(stderr(&o).contains(&format!("`{key}`")), "{}", stderr(&o));
    }
}

#[test]
fn output_dir_from_scenario_file_is_relative_to_it() {
    let tmp = TempDir::new().unwrap();
    let mut v = fn_scenario();
    v["output_dir"] = json!("results");
    v["duration_s"] = json!(1);
    let sc = write_scenario(tmp.path(), "s.json", &v);
    let o = aqmlab(&["run", sc.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("results/summary.csv").exists());
}

#[test]
fn red_and_gentle_policies_run_with_defaults() {
    let tmp = TempDir::new().unwrap();
    for (kind, name) in [
        ("red", "red"),
        ("gentle_red", "gentle_red"),
        ("gentle", "gentle_red"),
        ("drop_tail", "drop_tail"),
    ] {
        let mut v = fn_scenario();
        v["policy"] = json!({ "kind": kind });
        let sc = write_scenario(tmp.path(), "s.json", &v);
        let out = tmp.path().join(kind);
        let o = aqmlab(
            &["run", sc.to_str().unwrap(), "-o", out.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{kind}: {}", stderr(&o));
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(column(&summary, "policy")[0], name);
        let trace = fs::read_to_string(out.join("queue_trace.csv")).unwrap();
        let avg = column(&trace, "avg_if_red");
        assert_eq!(avg.iter().all(|s| s.is_empty()), kind == "drop_tail");
    }
}

#[test]
fn distcheck_reproduces_flat_histogram_and_curve() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let o = aqmlab(
        &[
            "distcheck",
            "-p",
            "0.1,1.0",
            "-n",
            "1000000",
            "--seed",
            "7",
            "-o",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let curve = fs::read_to_string(out.join("fig4_curves.csv")).unwrap();
    assert!(curve.starts_with("p,e_geometric,e_uniform,difference\n"));
    assert!(curve.lines().any(|l| l == "0.1,10.0,10.5,0.5"));
    assert_eq!(curve.lines().count(), 101);

    let hist = fs::read_to_string(out.join("histogram_p0.1.csv")).unwrap();
    assert!(hist.starts_with(
        "n,direct_count,direct_freq,geometric_pmf,uniformized_count,uniformized_freq,uniform_pmf\n"
    ));
    let freq = column(&hist, "uniformized_freq");
    let pmf = column(&hist, "uniform_pmf");
    // Rows run to the longest direct interval; the uniform law stops at 20.
    assert!(freq.len() > 20);
    for (n, (f, p)) in freq.iter().zip(&pmf).enumerate() {
        let (f, p): (f64, f64) = (f.parse().unwrap(), p.parse().unwrap());
        if n < 20 {
            assert!((p - 0.05).abs() < 1e-12, "{p}");
            assert!((f - 0.05).abs() < 0.002, "{f}");
        } else {
            assert_eq!((f, p), (0.0, 0.0));
        }
    }

    let degenerate = fs::read_to_string(out.join("histogram_p1.csv")).unwrap();
    assert_eq!(degenerate.lines().count(), 3);
    let summary = fs::read_to_string(out.join("distcheck_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn distcheck_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let o = out.to_str().unwrap();
    for args in [
        vec!["distcheck", "-p", "0.1", "-n", "0", "-o", o],
        vec!["distcheck", "-p", "0", "-n", "10", "-o", o],
        vec!["distcheck", "-p", "1.5", "-n", "10", "-o", o],
        vec!["distcheck", "-p", "abc", "-n", "10", "-o", o],
    ] {
        let r = aqmlab(&args, None);
        assert_eq!(r.status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = TempDir::new().unwrap();
    let mut v = fn_scenario();
    v["duration_s"] = json!(3);
    let sc = write_scenario(tmp.path(), "s.json", &v);
    let out = tmp.path().join("sw");
    let o = aqmlab(
        &[
            "sweep",
            sc.to_str().unwrap(),
            "--param",
            "policy.t_const_s",
            "--values",
            "0.01,0.05,0.1",
            "-o",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(text.starts_with("index,value,seed,policy,"));
    assert_eq!(column(&text, "value"), ["0.01", "0.05", "0.1"]);
    let seeds = column(&text, "seed");
    assert_ne!(seeds[0], seeds[1]);

    // Concurrent execution must not change the results.
    let out2 = tmp.path().join("sw2");
    aqmlab(
        &[
            "sweep",
            sc.to_str().unwrap(),
            "--param",
            "policy.t_const_s",
            "--values",
            "0.01,0.05,0.1",
            "-o",
            out2.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(text, fs::read_to_string(out2.join("sweep.csv")).unwrap());
}

#[test]
fn sweeping_load_saturates_utilization() {
    let tmp = TempDir::new().unwrap();
    let v = json!({
        "duration_s": 10,
        "seed": 1,
        "gateway": { "mu_bps": 1_000_000, "capacity_bytes": 20_000 },
        "policy": { "kind": "drop_tail" },
        "sources": [ { "kind": "cbr", "rate_bps": 500_000, "packet_size_bytes": 1000 } ]
    });
    let sc = write_scenario(tmp.path(), "s.json", &v);
    let out = tmp.path().join("sw");
    let o = aqmlab(
        &[
            "sweep",
            sc.to_str().unwrap(),
            "--param",
            "sources[0].rate_bps",
            "--values",
            "500000,750000,1000000,1500000,2000000",
            "-o",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let util: Vec<f64> = column(&text, "utilization")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert!((util[0] - 0.5).abs() < 0.01, "{util:?}");
    assert!(util.windows(2).all(|w| w[1] >= w[0] - 1e-3), "{util:?}");
    assert!(util[3..].iter().all(|&u| u > 0.99), "{util:?}");
}

#[test]
fn sweep_errors_happen_before_any_run() {
    let tmp = TempDir::new().unwrap();
    let sc = write_scenario(tmp.path(), "s.json", &fn_scenario());
    let out = tmp.path().join("sw");
    let o_str = out.to_str().unwrap();
    let s = sc.to_str().unwrap();
    for (param, values, needle) in [
        ("policy.bogus_s", "1", "bogus_s"),
        ("sources[7].rate_bps", "1", "out of range"),
        ("nothing.here", "1", "nothing"),
        ("policy.t_const_s", "", "at least one value"),
        ("policy.t_const_s", "0.1,-1", "t_const_s"),
    ] {
        let o = aqmlab(
            &[
                "sweep", s, "--param", param, "--values", values, "-o", o_str,
            ],
            None,
        );
        assert!(!o.status.success(), "{param}");
        assert!(stderr(&o).contains(needle), "{param}: {}", stderr(&o));
    }
    assert!(!out.exists());
}
