use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use aqmlab::analysis::{
    expected_interval, expected_time_curve, interval_stats, percent_grid, simulate_intervals,
    IntervalLaw, IntervalMode, IntervalRecord,
};
use aqmlab::report;
use aqmlab::rng::derive_seed;
use aqmlab::sim::{run_scenario, Scenario, Summary};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::output::Staging;
use crate::scenario_file::{self, ScenarioFile};

pub const RUN_FILES: [&str; 5] = [
    "queue_trace.csv",
    "decisions.csv",
    "flows.csv",
    "intervals.csv",
    "summary.csv",
];

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn resolve_output(
    cli: Option<PathBuf>,
    file: &ScenarioFile,
    scenario_path: &Path,
) -> Result<PathBuf> {
    match (cli, &file.output_dir) {
        (Some(dir), _) => Ok(dir),
        (None, Some(dir)) if dir.is_absolute() => Ok(dir.clone()),
        (None, Some(dir)) => Ok(scenario_path.parent().unwrap_or(Path::new(".")).join(dir)),
        (None, None) => {
            bail!("no output directory: pass -o or set output_dir in the scenario file")
        }
    }
}

pub fn run(scenario_path: &Path, output: Option<PathBuf>) -> Result<()> {
    let file = scenario_file::load(scenario_path)?;
    let out_dir = resolve_output(output, &file, scenario_path)?;
    let scenario = file.to_scenario()?;
    let out = run_scenario(&scenario)?;

    let mut st = Staging::new(&out_dir)?;
    st.write(RUN_FILES[0], |w| Ok(report::write_queue_trace(w, &out)?))?;
    st.write(RUN_FILES[1], |w| Ok(report::write_decisions(w, &out)?))?;
    st.write(RUN_FILES[2], |w| Ok(report::write_flows(w, &out)?))?;
    st.write(RUN_FILES[3], |w| {
        Ok(report::write_intervals(w, &out.intervals)?)
    })?;
    st.write(RUN_FILES[4], |w| Ok(report::write_summary(w, &out)?))?;
    report_written(&st.commit()?);
    let s = &out.summary;
    println!(
        "{}: utilization {:.4}, mean queue {:.1} B, mean delay {:.6} s, {} dropped, {} marked",
        s.policy, s.utilization, s.mean_queue_bytes, s.mean_delay_s, s.dropped, s.marked
    );
    Ok(())
}

pub const DISTCHECK_SUMMARY_COLUMNS: &[&str] = &[
    "p",
    "mode",
    "n",
    "seed",
    "mean",
    "expected_mean",
    "variance",
    "max_interval",
    "ks_uniform",
    "ks_geometric",
];

#[derive(Serialize)]
struct DistRow {
    p: f64,
    mode: &'static str,
    n: usize,
    seed: u64,
    mean: f64,
    expected_mean: f64,
    variance: f64,
    max_interval: u64,
    ks_uniform: f64,
    ks_geometric: f64,
}

fn dist_row(p: f64, mode: IntervalMode, seed: u64, rec: &IntervalRecord) -> Result<DistRow> {
    let st = interval_stats(rec, p)?;
    let (name, law) = match mode {
        IntervalMode::Direct => ("direct", IntervalLaw::Geometric),
        IntervalMode::Uniformized => ("uniformized", IntervalLaw::Uniform),
    };
    Ok(DistRow {
        p,
        mode: name,
        n: st.n,
        seed,
        mean: st.mean,
        expected_mean: expected_interval(p, law),
        variance: st.variance,
        max_interval: rec.max().unwrap_or(0),
        ks_uniform: st.ks_uniform,
        ks_geometric: st.ks_geometric,
    })
}

pub fn histogram_file_name(p: f64) -> String {
    format!("histogram_p{p}.csv")
}

/// `p` values are validated by the argument parser.
pub fn distcheck(ps: &[f64], n: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let mut ps = ps.to_vec();
    ps.sort_by(f64::total_cmp);
    ps.dedup();

    let mut grid = percent_grid();
    grid.extend(&ps);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let curve = expected_time_curve(&grid)?;

    let runs: Vec<(f64, u64, IntervalRecord, IntervalRecord)> = ps
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let s = derive_seed(seed, i as u64);
            let direct = simulate_intervals(p, n, IntervalMode::Direct, s)?;
            let uniformized = simulate_intervals(p, n, IntervalMode::Uniformized, s)?;
            Ok((p, s, direct, uniformized))
        })
        .collect::<Result<_>>()?;

    let mut summary = Vec::new();
    for (p, s, d, u) in &runs {
        summary.push(dist_row(*p, IntervalMode::Direct, *s, d)?);
        summary.push(dist_row(*p, IntervalMode::Uniformized, *s, u)?);
    }

    let mut st = Staging::new(out_dir)?;
    st.write("fig4_curves.csv", |w| Ok(report::write_curve(w, &curve)?))?;
    for (p, _, d, u) in &runs {
        let rows = report::histogram_rows(*p, d, u);
        st.write(&histogram_file_name(*p), |w| {
            Ok(report::write_histogram(w, &rows)?)
        })?;
    }
    st.write("distcheck_summary.csv", |w| {
        let mut wtr = csv_writer(w);
        wtr.write_record(DISTCHECK_SUMMARY_COLUMNS)?;
        for r in &summary {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    report_written(&st.commit()?);
    for r in &summary {
        println!(
            "p={} {:<11} mean {:.4} (expected {:.4}), ks_uniform {:.5}, ks_geometric {:.5}",
            r.p, r.mode, r.mean, r.expected_mean, r.ks_uniform, r.ks_geometric
        );
    }
    Ok(())
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(w)
}

/// Parses each sweep value as a JSON scalar; bare words become strings.
pub fn parse_sweep_values(raw: &[String]) -> Result<Vec<Value>> {
    let values: Vec<Value> = raw
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect();
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    if let Some(v) = values.iter().find(|v| v.is_array() || v.is_object()) {
        bail!("sweep values must be scalars, got {v}");
    }
    Ok(values)
}

pub fn sweep_scenarios(
    scenario_path: &Path,
    param: &str,
    values: &[Value],
) -> Result<Vec<Scenario>> {
    let doc = scenario_file::read_value(scenario_path)?;
    let seed_override = scenario_file::seed_override()?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut d = doc.clone();
            scenario_file::set_path(&mut d, param, v.clone())?;
            let mut file =
                scenario_file::from_value(d).with_context(|| format!("{param} = {v}"))?;
            if let Some(seed) = seed_override {
                file.seed = seed;
            }
            let mut s = file
                .to_scenario()
                .with_context(|| format!("{param} = {v}"))?;
            s.seed = derive_seed(file.seed, i as u64);
            Ok(s)
        })
        .collect()
}

pub fn sweep_header() -> Vec<&'static str> {
    let mut cols = vec!["index", "value", "seed"];
    cols.extend_from_slice(report::SUMMARY_COLUMNS);
    cols
}

pub fn sweep(
    scenario_path: &Path,
    param: &str,
    raw_values: &[String],
    out_dir: &Path,
) -> Result<()> {
    let values = parse_sweep_values(raw_values)?;
    let scenarios = sweep_scenarios(scenario_path, param, &values)?;
    let summaries: Vec<Summary> = scenarios
        .par_iter()
        .map(|s| run_scenario(s).map(|o| o.summary).map_err(|e| anyhow!(e)))
        .collect::<Result<_>>()?;

    let mut st = Staging::new(out_dir)?;
    st.write("sweep.csv", |w| {
        let mut wtr = csv_writer(w);
        wtr.write_record(sweep_header())?;
        for (i, ((v, s), sum)) in values.iter().zip(&scenarios).zip(&summaries).enumerate() {
            let value = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            wtr.serialize((i, value, s.seed, sum))?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    report_written(&st.commit()?);
    for (v, s) in values.iter().zip(&summaries) {
        println!(
            "{param} = {v}: utilization {:.4}, mean queue {:.1} B",
            s.utilization, s.mean_queue_bytes
        );
    }
    Ok(())
}
