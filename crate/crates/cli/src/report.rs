//! Hand-written SVG charts over emitted search files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use qumos::engine::{pareto_front, read_episodes_csv, EpisodeRecord};
use qumos::security::SecurityReport;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Search output directory to plot; repeat to compare runs (default: --out-dir).
    #[arg(long = "run")]
    pub runs: Vec<PathBuf>,
    /// Saved `security --out` reports to add to the bar chart.
    #[arg(long = "security")]
    pub security: Vec<PathBuf>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn label(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str, xticks: bool) {
        let (x0, x1, y0, y1) = (self.px(self.x.0), self.px(self.x.1), self.py(self.y.0), self.py(self.y.1));
        let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
        let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
        for k in 0..=5 {
            let t = k as f64 / 5.0;
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let y = self.py(yv);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{yv:.2}</text>"#,
                x0 - 6.0,
                y + 4.0
            );
            let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##);
            if xticks {
                let xv = self.x.0 + t * (self.x.1 - self.x.0);
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{xv:.2}</text>"#,
                    self.px(xv),
                    y0 + 16.0
                );
            }
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, W / 2.0, H - 10.0, esc(xlabel));
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(ylabel)
        );
    }
}

fn open_svg() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Every episode as a faint dot, each run's Pareto front as a line.
pub fn pareto_svg(runs: &[(String, Vec<EpisodeRecord>)]) -> String {
    let all = runs.iter().flat_map(|(_, r)| r);
    let y_min = all.clone().map(|r| r.sec_mec).fold(0.0, f64::min).floor();
    let y_max = all.map(|r| r.sec_mec).fold(1.0, f64::max).ceil();
    let frame = Frame {
        x: (0.0, 1.0),
        y: (y_min, y_max),
    };
    let mut svg = open_svg();
    frame.axes(&mut svg, "Accuracy vs SecMec", "accuracy", "SecMec", true);
    for (i, (name, records)) in runs.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for r in records {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.3"/>"#,
                frame.px(r.acc),
                frame.py(r.sec_mec)
            );
        }
        let mut front = pareto_front(records);
        front.sort_by(|a, b| a.acc.total_cmp(&b.acc));
        let points: Vec<String> = front
            .iter()
            .map(|r| format!("{:.2},{:.2}", frame.px(r.acc), frame.py(r.sec_mec)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for r in &front {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                frame.px(r.acc),
                frame.py(r.sec_mec)
            );
        }
        let ly = TOP + 16.0 * i as f64 + 10.0;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, LEFT + 10.0, ly - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" font-size="12">{}</text>"#, LEFT + 26.0, esc(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Paired bars of accuracy and SecAcc per labelled model.
pub fn bars_svg(items: &[(String, f64, f64)]) -> String {
    let frame = Frame {
        x: (0.0, items.len().max(1) as f64),
        y: (0.0, 1.0),
    };
    let mut svg = open_svg();
    frame.axes(&mut svg, "Accuracy and SecAcc", "", "accuracy", false);
    let slot = frame.px(1.0) - frame.px(0.0);
    let bar = slot * 0.3;
    for (i, (name, acc, sec_acc)) in items.iter().enumerate() {
        let x = frame.px(i as f64) + slot * 0.2;
        for (k, (v, color)) in [(acc, COLORS[0]), (sec_acc, COLORS[4])].into_iter().enumerate() {
            let v = v.clamp(0.0, 1.0);
            let top = frame.py(v);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                x + k as f64 * bar,
                frame.py(0.0) - top
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{v:.3}</text>"#,
                x + (k as f64 + 0.5) * bar,
                top - 3.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            x + bar,
            frame.py(0.0) + 16.0,
            esc(name)
        );
    }
    for (k, (name, color)) in [("Acc", COLORS[0]), ("SecAcc", COLORS[4])].into_iter().enumerate() {
        let lx = W - RIGHT - 90.0;
        let ly = TOP + 16.0 * k as f64 + 10.0;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{color}"/>"#, ly - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" font-size="12">{name}</text>"#, lx + 16.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn best_by_acc(records: &[EpisodeRecord]) -> Option<&EpisodeRecord> {
    records
        .iter()
        .reduce(|a, b| if (b.acc, b.sec_mec) > (a.acc, a.sec_mec) { b } else { a })
}

/// Writes `pareto.svg` and `acc_secacc.svg` into `out_dir`.
pub fn run(args: &ReportArgs, out_dir: &Path) -> Result<()> {
    let dirs = if args.runs.is_empty() {
        vec![out_dir.to_path_buf()]
    } else {
        args.runs.clone()
    };
    let mut runs = Vec::new();
    for dir in &dirs {
        let path = dir.join("episodes.csv");
        let records = read_episodes_csv(&path).with_context(|| format!("reading {}", path.display()))?;
        if records.is_empty() {
            bail!("{} has no episodes", path.display());
        }
        runs.push((label(dir), records));
    }
    let mut bars: Vec<(String, f64, f64)> = runs
        .iter()
        .filter_map(|(name, r)| best_by_acc(r).map(|b| (name.clone(), b.acc, b.sec_acc)))
        .collect();
    for path in &args.security {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: SecurityReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        bars.push((label(path), report.acc, report.sec_acc));
    }
    fs::create_dir_all(out_dir)?;
    let pareto = out_dir.join("pareto.svg");
    let acc = out_dir.join("acc_secacc.svg");
    fs::write(&pareto, pareto_svg(&runs))?;
    fs::write(&acc, bars_svg(&bars))?;
    println!("{}\n{}", pareto.display(), acc.display());
    Ok(())
}
