//! Deterministic SVG figures: complexity fronts and error rate versus SNR.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::output::{front_metric, pareto_table, summarize, ParetoRow};
use super::run::ResultRow;
use crate::error::{Error, Result};

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Log-log axes over a data range, padded to whole decades.
struct Axes {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Axes {
    fn new(xs: &[f64], ys: &[f64], log_x: bool) -> Self {
        let span = |v: &[f64], log: bool| {
            let (lo, hi) = v
                .iter()
                .filter(|x| x.is_finite() && (!log || **x > 0.0))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                return if log { (0.0, 1.0) } else { (0.0, 1.0) };
            }
            if log {
                let (a, b) = (lo.log10().floor(), hi.log10().ceil());
                (a, if b > a { b } else { a + 1.0 })
            } else {
                let pad = ((hi - lo) * 0.05).max(0.5);
                (lo - pad, hi + pad)
            }
        };
        Self {
            x: span(xs, log_x),
            y: span(ys, true),
            log_x,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let v = if self.log_x { x.max(1e-300).log10() } else { x };
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let v = y.max(10f64.powf(self.y.0)).log10();
        TOP + (self.y.1 - v) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn frame(&self, s: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>
"#,
            (x0 + x1) / 2.0,
            escape(title),
            x1 - x0,
            y1 - y0
        );
        let mut d = self.y.0;
        while d <= self.y.1 + 1e-9 {
            let y = self.py(10f64.powf(d));
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"##,
                x0 - 6.0,
                y + 4.0,
                d as i64
            );
            d += 1.0;
        }
        if self.log_x {
            let mut d = self.x.0;
            while d <= self.x.1 + 1e-9 {
                let x = self.px(10f64.powf(d));
                let _ = writeln!(
                    s,
                    r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{}</text>"##,
                    y1 + 18.0,
                    d as i64
                );
                d += 1.0;
            }
        } else {
            let step = nice_step(self.x.1 - self.x.0);
            let mut v = (self.x.0 / step).ceil() * step;
            while v <= self.x.1 {
                let x = self.px(v);
                let _ = writeln!(
                    s,
                    r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                    y1 + 18.0,
                    fmt_num(v)
                );
                v += step;
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 16.0,
            escape(xlabel),
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn fmt_num(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    format!("{r}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, i: usize, label: &str, c: &str) {
    let y = TOP + 10.0 + 18.0 * i as f64;
    let x = W - RIGHT + 12.0;
    let _ = writeln!(
        s,
        r#"<circle cx="{x}" cy="{y}" r="4" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
        x + 10.0,
        y + 4.0,
        escape(label)
    );
}

/// Lowest positive value, halved: zero-error points are drawn on this floor.
fn error_floor(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold(f64::INFINITY, f64::min)
        .min(1e-2)
        / 2.0
}

/// Complexity plot of one `(scenario, SNR)` group of seed-averaged rows.
pub fn complexity_svg(rows: &[ParetoRow], budget: f64) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::Usage("no points to plot".into()))?;
    let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let floor = error_floor(&vals);
    let shown: Vec<f64> = vals.iter().map(|v| v.max(floor)).collect();
    let mut xs: Vec<f64> = rows.iter().map(|r| r.macs_per_symbol.max(1.0)).collect();
    if budget > 0.0 {
        xs.push(budget);
    }
    let ax = Axes::new(&xs, &shown, true);
    let mut s = String::new();
    ax.frame(
        &mut s,
        &format!("{} at {} dB SNR", first.scenario, fmt_num(first.snr_db)),
        "MACs per symbol",
        &first.metric.to_uppercase(),
    );
    let fy = ax.py(floor);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{fy:.2}" x2="{}" y2="{fy:.2}" stroke="#999" stroke-dasharray="2 3"/><text x="{}" y="{:.2}" fill="#666">no errors</text>"##,
        W - RIGHT,
        LEFT + 4.0,
        fy - 4.0
    );
    if budget > 0.0 {
        let bx = ax.px(budget);
        let _ = writeln!(
            s,
            r##"<line x1="{bx:.2}" y1="{TOP}" x2="{bx:.2}" y2="{}" stroke="#555" stroke-dasharray="6 4"/><text x="{:.2}" y="{}" fill="#555">budget</text>"##,
            H - BOTTOM,
            bx + 4.0,
            TOP + 14.0
        );
    }
    let mut families: Vec<&str> = rows.iter().map(|r| r.family.as_str()).collect();
    families.sort_unstable();
    families.dedup();
    for (i, fam) in families.iter().enumerate() {
        for r in rows.iter().filter(|r| r.family == *fam) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
                ax.px(r.macs_per_symbol.max(1.0)),
                ax.py(r.value.max(floor)),
                color(i),
                escape(&r.model_id)
            );
        }
        legend(&mut s, i, fam, color(i));
    }
    let mut front: Vec<&ParetoRow> = rows.iter().filter(|r| r.on_front).collect();
    front.sort_by(|a, b| a.macs_per_symbol.total_cmp(&b.macs_per_symbol));
    if front.len() > 1 {
        let pts: Vec<String> = front
            .iter()
            .map(|r| format!("{:.2},{:.2}", ax.px(r.macs_per_symbol.max(1.0)), ax.py(r.value.max(floor))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }
    if let Some(o) = rows.iter().find(|r| r.budget_optimal) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="9" fill="none" stroke="black" stroke-width="2"/>"#,
            ax.px(o.macs_per_symbol.max(1.0)),
            ax.py(o.value.max(floor))
        );
        legend(&mut s, families.len(), &format!("best: {}", o.model_id), "none");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Seed-averaged error rate versus SNR, one line per model.
pub fn snr_svg(scenario: &str, rows: &[ResultRow]) -> Result<String> {
    let metric = front_metric(scenario);
    let summary = summarize(rows);
    if summary.is_empty() {
        return Err(Error::Usage("no points to plot".into()));
    }
    let val = |r: &super::output::SummaryRow| if metric == "ber" { r.ber_mean } else { r.ser_mean };
    let vals: Vec<f64> = summary.iter().map(val).collect();
    let floor = error_floor(&vals);
    let xs: Vec<f64> = summary.iter().map(|r| r.snr_db).collect();
    let shown: Vec<f64> = vals.iter().map(|v| v.max(floor)).collect();
    let ax = Axes::new(&xs, &shown, false);
    let mut s = String::new();
    ax.frame(&mut s, scenario, "SNR (dB)", &metric.to_uppercase());
    let mut models: Vec<&str> = Vec::new();
    for r in &summary {
        if !models.contains(&r.model_id.as_str()) {
            models.push(&r.model_id);
        }
    }
    for (i, m) in models.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = summary
            .iter()
            .filter(|r| r.model_id == *m)
            .map(|r| (r.snr_db, val(r).max(floor)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", ax.px(*x), ax.py(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            color(i)
        );
        for p in &path {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{}"/>"#, color(i));
        }
        legend(&mut s, i, m, color(i));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes one complexity plot per `(scenario, SNR)`, one SNR plot per
/// scenario with more than one SNR, and `plot_data.csv`. Returns the paths.
pub fn plot_results(rows: &[ResultRow], budget: f64, dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Usage("results contain no rows to plot".into()));
    }
    fs::create_dir_all(dir)?;
    let table: Vec<ParetoRow> = pareto_table(rows, budget).into_iter().filter(|r| r.seed == "mean").collect();
    let mut written = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<ParetoRow>> = BTreeMap::new();
    for r in &table {
        groups.entry((r.scenario.clone(), r.snr_db.to_bits())).or_default().push(r.clone());
    }
    for ((scenario, snr), g) in &groups {
        let p = dir.join(format!("complexity_{}_snr{}.svg", file_stem(scenario), f64::from_bits(*snr)));
        fs::write(&p, complexity_svg(g, budget)?)?;
        written.push(p);
    }
    let mut by_scenario: BTreeMap<&str, Vec<ResultRow>> = BTreeMap::new();
    for r in rows {
        by_scenario.entry(&r.scenario).or_default().push(r.clone());
    }
    for (scenario, g) in &by_scenario {
        let mut snrs: Vec<u64> = g.iter().map(|r| r.snr_db.to_bits()).collect();
        snrs.sort_unstable();
        snrs.dedup();
        if snrs.len() > 1 {
            let p = dir.join(format!("snr_{}.svg", file_stem(scenario)));
            fs::write(&p, snr_svg(scenario, g)?)?;
            written.push(p);
        }
    }
    let data = dir.join("plot_data.csv");
    super::output::write_pareto_csv(&data, &table)?;
    written.push(data);
    Ok(written)
}
