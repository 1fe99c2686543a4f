//! Native SVG emission: mean +/- sd band plots for training curves and a
//! heatmap for loss surfaces. String assembly only — plots are a
//! convenience artifact, the CSVs are the data of record.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::LossSurface;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

/// Line colors, cycled in series order.
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve: points are (x, mean, sd); the band spans mean +/- sd.
#[derive(Debug, Clone)]
pub struct BandSeries {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

fn push_coord(out: &mut String, x: f64, y: f64) {
    // Three decimals of pixel precision keeps files small and output
    // deterministic (the formatting is exact for the rounded value).
    let _ = write!(out, "{x:.3},{y:.3} ");
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        MARGIN_L + (x - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, y: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::MIN_POSITIVE);
        HEIGHT - MARGIN_B - (y - self.y_min) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn axes(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = write!(
        out,
        "<rect x='0' y='0' width='{WIDTH}' height='{HEIGHT}' fill='white'/>\
         <line x1='{x0}' y1='{y0}' x2='{x1}' y2='{y0}' stroke='black'/>\
         <line x1='{x0}' y1='{y0}' x2='{x0}' y2='{y1}' stroke='black'/>\
         <text x='{:.3}' y='24' text-anchor='middle' font-family='sans-serif' font-size='15'>{title}</text>\
         <text x='{:.3}' y='{:.3}' text-anchor='middle' font-family='sans-serif' font-size='12'>{x_label}</text>\
         <text x='16' y='{:.3}' text-anchor='middle' font-family='sans-serif' font-size='12' transform='rotate(-90 16 {:.3})'>{y_label}</text>",
        (x0 + x1) / 2.0,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let xp = frame.x(xv);
        let yp = frame.y(yv);
        let _ = write!(
            out,
            "<line x1='{xp:.3}' y1='{y0}' x2='{xp:.3}' y2='{:.3}' stroke='black'/>\
             <text x='{xp:.3}' y='{:.3}' text-anchor='middle' font-family='sans-serif' font-size='11'>{xv:.3}</text>\
             <line x1='{:.3}' y1='{yp:.3}' x2='{x0}' y2='{yp:.3}' stroke='black'/>\
             <text x='{:.3}' y='{:.3}' text-anchor='end' font-family='sans-serif' font-size='11'>{yv:.3}</text>",
            y0 + 4.0,
            y0 + 18.0,
            x0 - 4.0,
            x0 - 8.0,
            yp + 4.0,
        );
    }
}

/// Training-curve plot: one shaded mean +/- sd band per series.
pub fn band_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[BandSeries],
) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, m, sd) in &s.points {
            if !(x.is_finite() && m.is_finite() && sd.is_finite() && sd >= 0.0) {
                return Err(Error::NonFinite("band plot point".into()));
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(m - sd);
            y_max = y_max.max(m + sd);
        }
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let frame = Frame { x_min, x_max, y_min, y_max };

    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' viewBox='0 0 {WIDTH} {HEIGHT}'>"
    );
    axes(&mut out, &frame, title, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        out.push_str("<polygon points='");
        for &(x, m, sd) in &s.points {
            push_coord(&mut out, frame.x(x), frame.y(m + sd));
        }
        for &(x, m, sd) in s.points.iter().rev() {
            push_coord(&mut out, frame.x(x), frame.y(m - sd));
        }
        let _ = write!(out, "' fill='{color}' fill-opacity='0.18' stroke='none'/>");
        out.push_str("<polyline points='");
        for &(x, m, _) in &s.points {
            push_coord(&mut out, frame.x(x), frame.y(m));
        }
        let _ = write!(out, "' fill='none' stroke='{color}' stroke-width='1.6'/>");
        let lx = MARGIN_L + 10.0;
        let ly = MARGIN_T + 16.0 + 16.0 * i as f64;
        let _ = write!(
            out,
            "<line x1='{lx}' y1='{ly}' x2='{:.3}' y2='{ly}' stroke='{color}' stroke-width='2'/>\
             <text x='{:.3}' y='{:.3}' font-family='sans-serif' font-size='12'>{}</text>",
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            s.name,
        );
    }
    out.push_str("</svg>\n");
    write_text(path, &out)
}

/// Two-stop color ramp blue -> white -> red over `f` in [0, 1].
fn ramp(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    let (r, g, b) = if f < 0.5 {
        let t = f * 2.0;
        (lerp(37.0, 255.0, t), lerp(99.0, 255.0, t), lerp(235.0, 255.0, t))
    } else {
        let t = (f - 0.5) * 2.0;
        (lerp(255.0, 220.0, t), lerp(255.0, 38.0, t), lerp(255.0, 38.0, t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Loss-surface heatmap over the (a, b) perturbation grid.
pub fn surface_heatmap(path: &Path, title: &str, surface: &LossSurface) -> Result<()> {
    let n = surface.coords.len();
    if n == 0 || surface.grid.len() != n {
        return Err(Error::DimensionMismatch("surface grid is not square".into()));
    }
    let flat: Vec<f64> = surface.grid.iter().flatten().copied().collect();
    let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);

    let cell = (WIDTH - MARGIN_L - MARGIN_R) / n as f64;
    let cell_y = (HEIGHT - MARGIN_T - MARGIN_B) / n as f64;
    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' viewBox='0 0 {WIDTH} {HEIGHT}'>\
         <rect x='0' y='0' width='{WIDTH}' height='{HEIGHT}' fill='white'/>\
         <text x='{:.3}' y='24' text-anchor='middle' font-family='sans-serif' font-size='15'>{title}</text>",
        WIDTH / 2.0,
    );
    for (i, row) in surface.grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = MARGIN_L + j as f64 * cell;
            // Row i is coordinate a; draw a upward so the plot reads like axes.
            let y = HEIGHT - MARGIN_B - (i + 1) as f64 * cell_y;
            let color = ramp((v - lo) / span);
            let _ = write!(
                out,
                "<rect x='{x:.3}' y='{y:.3}' width='{:.3}' height='{:.3}' fill='{color}'/>",
                cell + 0.5,
                cell_y + 0.5,
            );
        }
    }
    let a0 = surface.coords[0];
    let a1 = surface.coords[n - 1];
    let _ = write!(
        out,
        "<text x='{MARGIN_L}' y='{:.3}' font-family='sans-serif' font-size='11'>{a0:.2}</text>\
         <text x='{:.3}' y='{:.3}' text-anchor='end' font-family='sans-serif' font-size='11'>{a1:.2}</text>\
         <text x='{:.3}' y='{:.3}' text-anchor='middle' font-family='sans-serif' font-size='12'>direction 2 coefficient (b)</text>\
         <text x='16' y='{:.3}' text-anchor='middle' font-family='sans-serif' font-size='12' transform='rotate(-90 16 {:.3})'>direction 1 coefficient (a)</text>\
         <text x='{:.3}' y='{:.3}' font-family='sans-serif' font-size='11'>loss {lo:.4} (blue) to {hi:.4} (red)</text>",
        HEIGHT - MARGIN_B + 16.0,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B + 16.0,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        MARGIN_L,
        MARGIN_T - 6.0,
    );
    out.push_str("</svg>\n");
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
