use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::io::{list_snapshots, read_diagnostics_csv, read_snapshot, DIAGNOSTICS_FILE};
use super::HarnessError;
use crate::diagnostics::{sliding_window_series, WindowSeries};

pub const PLOT_DIR: &str = "plots";

/// Columns whose unit-window integrals are plotted.
pub const WINDOW_COLUMNS: [&str; 5] = ["l2_u_sq", "lap_v_sq", "grad_v_4", "v_t_sq", "grad_u_43"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
    pub series: Vec<(&'a str, Vec<(f64, f64)>)>,
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick spacing `1, 2, 5 × 10^k` giving about five intervals.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&x.abs()) {
        let s = format!("{x:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.2e}")
    }
}

/// Padded `[lo, hi]`; a flat series gets a band proportional to its level
/// so round-off is not magnified into visible noise.
fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let floor = 1e-6 * lo.abs().max(hi.abs()).max(1e-300);
    if hi - lo < floor {
        let mid = 0.5 * (hi + lo);
        return Some((mid - floor, mid + floor));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

pub fn render_line_plot(plot: &LinePlot) -> String {
    let transform = |y: f64| if plot.log_y { y.log10() } else { y };
    let series: Vec<(&str, Vec<(f64, f64)>)> = plot
        .series
        .iter()
        .map(|(name, pts)| {
            let kept = pts
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!plot.log_y || *y > 0.0))
                .map(|&(x, y)| (x, transform(y)))
                .collect();
            (*name, kept)
        })
        .collect();
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(plot.title));
    let xs = span(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let ys = span(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) else {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no data</text>"#, WIDTH / 2.0, HEIGHT / 2.0);
        out.push_str("</svg>\n");
        return out;
    };
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for t in nice_ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            label(t)
        );
    }
    let y_ticks: Vec<f64> = if plot.log_y {
        let ticks: Vec<f64> = (y0.ceil() as i64..=y1.floor() as i64).map(|k| k as f64).collect();
        if ticks.is_empty() {
            nice_ticks(y0, y1)
        } else {
            ticks
        }
    } else {
        nice_ticks(y0, y1)
    };
    for t in y_ticks {
        let y = py(t);
        let text = if plot.log_y { format!("1e{}", t.round() as i64) } else { label(t) };
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{text}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, escape(plot.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(plot.y_label)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in pts {
            let _ = write!(path, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.trim_end());
        if series.len() > 1 {
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" text-anchor="end" fill="{color}">{}</text>"#,
                LEFT + pw - 8.0,
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Piecewise-linear viridis approximation on `[0, 1]`.
fn colormap(s: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let pos = s * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// `values[i * ny + j]` is cell `(i, j)`, `i` along the horizontal axis.
pub fn render_heatmap(title: &str, nx: usize, ny: usize, values: &[f64]) -> String {
    assert_eq!(values.len(), nx * ny);
    let size = 360.0;
    let (cw, ch) = (size / nx as f64, size / ny as f64);
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (LEFT + size + 110.0, TOP + size + 30.0);
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + size / 2.0, escape(title));
    for i in 0..nx {
        for j in 0..ny {
            let (r, g, b) = colormap((values[i * ny + j] - lo) / range);
            let x = LEFT + i as f64 * cw;
            let y = TOP + (ny - 1 - j) as f64 * ch;
            let _ = writeln!(
                out,
                r##"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                cw + 0.01,
                ch + 0.01
            );
        }
    }
    let bar_x = LEFT + size + 20.0;
    for k in 0..64 {
        let (r, g, b) = colormap(k as f64 / 63.0);
        let y = TOP + size - (k + 1) as f64 * size / 64.0;
        let _ = writeln!(
            out,
            r##"<rect x="{bar_x}" y="{y:.3}" width="16" height="{:.3}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
            size / 64.0 + 0.01
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bar_x + 22.0, TOP + 10.0, label(hi));
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, bar_x + 22.0, TOP + size, label(lo));
    out.push_str("</svg>\n");
    out
}

fn write(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    std::fs::write(&path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

/// Render time series, window curves and snapshot plots of a run directory
/// into `dir/plots`. Output depends only on the directory contents.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let csv = dir.join(DIAGNOSTICS_FILE);
    if !csv.is_file() {
        return Err(HarnessError::Io(format!("{} not found", csv.display())));
    }
    let table = read_diagnostics_csv(&csv)?;
    let out_dir = dir.join(PLOT_DIR);
    std::fs::create_dir_all(&out_dir).map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut written = Vec::new();

    for (col, title, log_y) in [
        ("mass_u", "total mass of u", false),
        ("sup_v", "sup norm of v", false),
        ("stab_u", "sup distance of u from its mean", true),
        ("entropy_u", "entropy of u", false),
    ] {
        let series = table.series(col).ok_or_else(|| HarnessError::Io(format!("{}: missing column {col}", csv.display())))?;
        let plot = LinePlot { title, x_label: "t", y_label: col, log_y, series: vec![(col, series)] };
        write(out_dir.join(format!("{col}.svg")), render_line_plot(&plot), &mut written)?;
    }
    for col in WINDOW_COLUMNS {
        let samples = table.series(col).ok_or_else(|| HarnessError::Io(format!("{}: missing column {col}", csv.display())))?;
        let curve = match WindowSeries::unit(samples) {
            Ok(s) => sliding_window_series(&s).map_err(|e| HarnessError::Io(e.to_string()))?,
            Err(_) => Vec::new(),
        };
        let title = format!("unit-window integral of {col}");
        let plot = LinePlot { title: &title, x_label: "t", y_label: col, log_y: false, series: vec![(col, curve)] };
        write(out_dir.join(format!("window_{col}.svg")), render_line_plot(&plot), &mut written)?;
    }

    let snaps = list_snapshots(dir)?;
    let mut picks: Vec<&PathBuf> = Vec::new();
    if let (Some(first), Some(last)) = (snaps.first(), snaps.last()) {
        picks.push(first);
        picks.push(&snaps[snaps.len() / 2]);
        picks.push(last);
        picks.dedup();
    }
    for path in picks {
        let state = read_snapshot(path)?;
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let g = state.grid();
        let t = state.t;
        match g.dim() {
            1 => {
                let x: Vec<f64> = (0..g.len()).map(|i| g.cell_center(i)[0]).collect();
                let pts = |f: &[f64]| x.iter().copied().zip(f.iter().copied()).collect::<Vec<_>>();
                let title = format!("u and v at t = {}", label(t));
                let plot = LinePlot {
                    title: &title,
                    x_label: "x",
                    y_label: "value",
                    log_y: false,
                    series: vec![("u", pts(state.u.values())), ("v", pts(state.v.values()))],
                };
                write(out_dir.join(format!("{stem}.svg")), render_line_plot(&plot), &mut written)?;
            }
            dim => {
                let (nx, ny) = (g.cells()[0], g.cells()[1]);
                let nz = g.cells().get(2).copied().unwrap_or(1);
                let plane = |f: &[f64]| -> Vec<f64> {
                    if dim == 2 {
                        f.to_vec()
                    } else {
                        let k = nz / 2;
                        (0..nx * ny).map(|ij| f[ij * nz + k]).collect()
                    }
                };
                let suffix = if dim == 3 { " (middle z-slice)" } else { "" };
                for (name, f) in [("u", state.u.values()), ("v", state.v.values())] {
                    let title = format!("{name} at t = {}{suffix}", label(t));
                    write(out_dir.join(format!("{stem}_{name}.svg")), render_heatmap(&title, nx, ny, &plane(f)), &mut written)?;
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = nice_ticks(0.013, 0.049);
        assert!(t.len() >= 3 && t.iter().all(|x| (x * 200.0 - (x * 200.0).round()).abs() < 1e-9));
    }

    #[test]
    fn line_plot_is_deterministic_and_handles_log_zeros() {
        let plot = LinePlot {
            title: "a<b",
            x_label: "t",
            y_label: "y",
            log_y: true,
            series: vec![("y", vec![(0.0, 0.0), (1.0, 1e-3), (2.0, 1e-6)])],
        };
        let a = render_line_plot(&plot);
        assert_eq!(a, render_line_plot(&plot));
        assert!(a.contains("a&lt;b") && a.contains("<polyline") && a.contains("1e-3"));
        let empty = LinePlot { series: vec![("y", vec![])], ..plot };
        assert!(render_line_plot(&empty).contains("no data"));
    }

    #[test]
    fn heatmap_cells_and_colors() {
        let svg = render_heatmap("u", 2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(svg.matches("<rect").count(), 1 + 6 + 64);
        assert!(svg.contains("#440154") && svg.contains("#fde725"));
    }
}
