//! CSV artifacts of a sweep and the per-seed Pareto tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::pareto::{budget_optimum, mark_dominated, ParetoPoint};
use super::run::{ExperimentResult, ResultRow};
use crate::error::{Error, Result};

/// Equalizer family encoded in a model id prefix (`ffe-` maps to `linear`).
pub fn family_of(model_id: &str) -> &str {
    let prefix = model_id.split('-').next().unwrap_or(model_id);
    match prefix {
        "ffe" => "linear",
        p => p,
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows(path, rows, &super::run::RESULT_COLUMNS)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != super::run::RESULT_COLUMNS {
        return Err(Error::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub model_id: String,
    pub snr_db: f64,
    pub macs_per_symbol: f64,
    pub seeds: usize,
    pub ser_mean: f64,
    pub ser_std: f64,
    pub ber_mean: f64,
    pub ber_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

type CellKey = (String, String, u64);

fn cell_key(r: &ResultRow) -> CellKey {
    (r.scenario.clone(), r.model_id.clone(), r.snr_db.to_bits())
}

/// Mean and sample standard deviation over seeds, in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let k = cell_key(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .iter()
        .map(|k| {
            let g = &groups[k];
            let (ser_mean, ser_std) = mean_std(&g.iter().map(|r| r.ser).collect::<Vec<_>>());
            let (ber_mean, ber_std) = mean_std(&g.iter().map(|r| r.ber).collect::<Vec<_>>());
            SummaryRow {
                scenario: g[0].scenario.clone(),
                model_id: g[0].model_id.clone(),
                snr_db: g[0].snr_db,
                macs_per_symbol: g[0].macs_per_symbol,
                seeds: g.len(),
                ser_mean,
                ser_std,
                ber_mean,
                ber_std,
            }
        })
        .collect()
}

/// The error metric the front is drawn over: BER for IM/DD, SER otherwise.
pub fn front_metric(scenario_label: &str) -> &'static str {
    if scenario_label.starts_with(Scenario::Imdd.name()) {
        "ber"
    } else {
        "ser"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub scenario: String,
    pub snr_db: f64,
    /// A seed, or `mean` for the seed-averaged front.
    pub seed: String,
    pub model_id: String,
    pub family: String,
    pub macs_per_symbol: f64,
    pub metric: String,
    pub value: f64,
    pub on_front: bool,
    pub budget_optimal: bool,
}

/// Per-seed and seed-averaged Pareto tables for every `(scenario, SNR)`.
pub fn pareto_table(rows: &[ResultRow], budget: f64) -> Vec<ParetoRow> {
    let mut out = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&ResultRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let k = (r.scenario.clone(), r.snr_db.to_bits());
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    for k in &order {
        let g = &groups[k];
        let metric = front_metric(&k.0);
        let pick = |r: &ResultRow| if metric == "ber" { r.ber } else { r.ser };
        let mut seeds: Vec<u64> = g.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut sets: Vec<(String, Vec<ParetoPoint>)> = seeds
            .iter()
            .map(|&s| {
                let pts = g
                    .iter()
                    .filter(|r| r.seed == s)
                    .map(|r| ParetoPoint::new(r.macs_per_symbol, pick(r), r.model_id.clone()))
                    .collect();
                (s.to_string(), pts)
            })
            .collect();
        let owned: Vec<ResultRow> = g.iter().map(|r| (*r).clone()).collect();
        let mean = summarize(&owned)
            .into_iter()
            .map(|s| {
                let v = if metric == "ber" { s.ber_mean } else { s.ser_mean };
                ParetoPoint::new(s.macs_per_symbol, v, s.model_id)
            })
            .collect();
        sets.push(("mean".into(), mean));
        for (seed, mut pts) in sets {
            mark_dominated(&mut pts);
            let opt = budget_optimum(&pts, budget).map(|p| p.model_id);
            for p in pts {
                out.push(ParetoRow {
                    scenario: k.0.clone(),
                    snr_db: f64::from_bits(k.1),
                    seed: seed.clone(),
                    family: family_of(&p.model_id).to_string(),
                    budget_optimal: opt.as_deref() == Some(p.model_id.as_str()),
                    model_id: p.model_id,
                    macs_per_symbol: p.macs,
                    metric: metric.into(),
                    value: p.metric,
                    on_front: !p.dominated,
                });
            }
        }
    }
    out
}

pub fn write_pareto_csv(path: &Path, rows: &[ParetoRow]) -> Result<()> {
    write_rows(
        path,
        rows,
        &[
            "scenario",
            "snr_db",
            "seed",
            "model_id",
            "family",
            "macs_per_symbol",
            "metric",
            "value",
            "on_front",
            "budget_optimal",
        ],
    )
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes results, metrics, failures, summary, Pareto, traces and the
/// resolved config under `dir`. Returns the results path.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, res: &ExperimentResult) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    write_results_csv(&results, &res.rows)?;
    write_rows(
        &dir.join("metrics.csv"),
        &res.metrics,
        &["scenario", "model_id", "seed", "snr_db", "key", "value"],
    )?;
    write_rows(
        &dir.join("failures.csv"),
        &res.failures,
        &["scenario", "model_id", "seed", "snr_db", "error"],
    )?;
    write_rows(
        &dir.join("summary.csv"),
        &summarize(&res.rows),
        &[
            "scenario",
            "model_id",
            "snr_db",
            "macs_per_symbol",
            "seeds",
            "ser_mean",
            "ser_std",
            "ber_mean",
            "ber_std",
        ],
    )?;
    write_pareto_csv(&dir.join("pareto.csv"), &pareto_table(&res.rows, cfg.mac_budget))?;
    let traces = dir.join("traces");
    if !res.traces.is_empty() {
        fs::create_dir_all(&traces)?;
    }
    for t in &res.traces {
        let name = format!(
            "{}_{}_snr{}_seed{}_{}.csv",
            sanitize(&t.scenario),
            sanitize(&t.model_id),
            t.snr_db,
            t.seed,
            t.kind
        );
        let mut w = csv::Writer::from_path(traces.join(name))?;
        w.write_record(["step", "loss", "metric"])?;
        for r in &t.rows {
            w.write_record([r.step.to_string(), r.loss.to_string(), r.metric.to_string()])?;
        }
        w.flush()?;
    }
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, seed: u64, macs: f64, ber: f64) -> ResultRow {
        ResultRow {
            scenario: "imdd".into(),
            model_id: id.into(),
            seed,
            snr_db: 20.0,
            macs_per_symbol: macs,
            ser: ber,
            ber,
            train_steps: 0,
            wall_s: None,
            config_hash: "00".into(),
        }
    }

    #[test]
    fn families_from_ids() {
        assert_eq!(family_of("ffe-61"), "linear");
        assert_eq!(family_of("volterra-121x21"), "volterra");
        assert_eq!(family_of("cnn-w67g16-c16k13s2"), "cnn");
        assert_eq!(family_of("plain"), "plain");
    }

    #[test]
    fn summary_statistics() {
        let rows = [row("a", 1, 5.0, 0.1), row("a", 2, 5.0, 0.3)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].ber_mean - 0.2).abs() < 1e-15);
        assert!((s[0].ber_std - 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn results_round_trip_and_pareto() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("ffe-5", 1, 5.0, 1e-2), row("cnn-x", 1, 50.0, 1e-3), row("volterra-9x3", 1, 21.0, 2e-2)];
        let p = dir.path().join("r.csv");
        write_results_csv(&p, &rows).unwrap();
        assert_eq!(read_results(&p).unwrap(), rows);
        let t = pareto_table(&rows, 100.0);
        let opt: Vec<_> = t.iter().filter(|r| r.seed == "1" && r.budget_optimal).collect();
        assert_eq!(opt.len(), 1);
        assert_eq!(opt[0].model_id, "cnn-x");
        let front: Vec<_> = t.iter().filter(|r| r.seed == "1" && r.on_front).map(|r| &r.model_id[..]).collect();
        assert_eq!(front, ["ffe-5", "cnn-x"]);
        assert_eq!(t.iter().filter(|r| r.seed == "mean").count(), 3);
    }
}
