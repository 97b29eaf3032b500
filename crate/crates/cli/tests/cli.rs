//! Runs the `eqlab` binary end to end.

use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
scenario = "imdd"
seeds = [1, 2]
snr_db = [20.0, 22.0]
mac_budget = 100.0

[data]
train_symbols = 3000
val_symbols = 1000
eval_symbols = 3000

[imdd.channel]
sps = 2
rolloff = 0.2
span_symbols = 32
beta2l = 0.5
nonlinearity = { kind = "eam", sat = 1.5 }

[[models]]
family = "ffe"
taps = [9, 21]

[[models]]
family = "volterra"
memory = [[21, 5]]
"#;

fn eqlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eqlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sweep_pareto_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("run");
    let o = eqlab(&["sweep", "--config", s(&cfg), "--workers", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = out.join("results.csv");
    let header = std::fs::read_to_string(&results).unwrap();
    assert!(header.starts_with(
        "scenario,model_id,seed,snr_db,macs_per_symbol,ser,ber,train_steps,wall_s,config_hash\n"
    ));
    assert_eq!(header.lines().count(), 1 + 3 * 2 * 2);
    assert!(out.join("plots/complexity_imdd_snr20.svg").exists());
    assert!(out.join("plots/snr_imdd.svg").exists());

    let o = eqlab(&["pareto", s(&results), "--budget", "100", "--out", s(&dir.path().join("p"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("budget optimum"));

    let plots = dir.path().join("plots");
    let o = eqlab(&["plot", s(&results), "--out", s(&plots)]);
    assert!(o.status.success());
    let again = eqlab(&["plot", s(&results), "--out", s(&dir.path().join("plots2"))]);
    assert!(again.status.success());
    assert_eq!(
        std::fs::read(plots.join("complexity_imdd_snr22.svg")).unwrap(),
        std::fs::read(dir.path().join("plots2/complexity_imdd_snr22.svg")).unwrap()
    );
}

#[test]
fn simulate_runs_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("one");
    let o = eqlab(&[
        "simulate", "--config", s(&cfg), "--seed", "9", "--model", "ffe-21", "--snr", "21", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("imdd,ffe-21,9,21.0,21.0,"));
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!eqlab(&["sweep"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("r.csv");
    std::fs::write(&empty, "scenario,model_id,seed,snr_db,macs_per_symbol,ser,ber,train_steps,wall_s,config_hash\n").unwrap();
    let o = eqlab(&["plot", s(&empty), "--out", s(&dir.path().join("p"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage error"));
}
