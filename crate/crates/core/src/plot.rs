//! Static figures: an SVG scatter of 2-D embeddings and a PGM grid of
//! exemplar images.
//!
//! Data points are filled dots colored by class; exemplars are red empty
//! circles drawn after (above) all data. Class colors cycle through
//! [`PALETTE`]. Output depends only on the inputs, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;

use crate::error::{HopeError, Result};
use crate::exemplar::ExemplarSet;
use crate::matrix::Matrix;

/// Ten category colors, indexed by `(class - 1) % 10`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub const EXEMPLAR_STROKE: &str = "#ff0000";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 120.0;

pub fn class_color(label: u32) -> &'static str {
    PALETTE[(label.max(1) as usize - 1) % PALETTE.len()]
}

/// Points to overlay as exemplars, with their class labels.
pub struct Overlay<'a> {
    pub points: &'a Matrix,
    pub labels: &'a [u32],
}

fn check_2d(m: &Matrix) -> Result<()> {
    if m.cols() != 2 {
        return Err(HopeError::PlotDimension(m.cols()));
    }
    Ok(())
}

struct Frame {
    min: [f64; 2],
    span: [f64; 2],
}

impl Frame {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for r in rows {
            for a in 0..2 {
                if r[a].is_finite() {
                    min[a] = min[a].min(r[a]);
                    max[a] = max[a].max(r[a]);
                }
            }
        }
        let mut span = [1.0; 2];
        for a in 0..2 {
            if !min[a].is_finite() {
                min[a] = 0.0;
                max[a] = 1.0;
            }
            if max[a] > min[a] {
                span[a] = max[a] - min[a];
            } else {
                min[a] -= 0.5;
            }
        }
        Frame { min, span }
    }

    fn project(&self, p: &[f64]) -> (f64, f64) {
        let w = WIDTH - 2.0 * MARGIN;
        let h = HEIGHT - 2.0 * MARGIN;
        let x = MARGIN + (p[0] - self.min[0]) / self.span[0] * w;
        // SVG y grows downward
        let y = HEIGHT - MARGIN - (p[1] - self.min[1]) / self.span[1] * h;
        (x, y)
    }
}

/// Renders a 2-D scatter plot.
///
/// `label_names[k]` is printed in the legend for class `k + 1`. The output
/// holds exactly `n` elements of class `pt` and one element of class `ex`
/// per overlay point.
pub fn scatter_svg(
    points: &Matrix,
    labels: &[u32],
    label_names: &[i64],
    overlay: Option<Overlay<'_>>,
) -> Result<String> {
    check_2d(points)?;
    if labels.len() != points.rows() {
        return Err(HopeError::DimensionMismatch {
            context: "plot labels",
            expected: points.rows(),
            actual: labels.len(),
        });
    }
    if let Some(o) = &overlay {
        check_2d(o.points)?;
        if o.labels.len() != o.points.rows() {
            return Err(HopeError::DimensionMismatch {
                context: "exemplar labels",
                expected: o.points.rows(),
                actual: o.labels.len(),
            });
        }
    }
    let frame = Frame::fit(
        points
            .iter_rows()
            .chain(overlay.iter().flat_map(|o| o.points.iter_rows())),
    );

    let mut s = String::new();
    let total_w = WIDTH + LEGEND_WIDTH;
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{HEIGHT}" viewBox="0 0 {total_w} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r##"<rect x="0" y="0" width="{total_w}" height="{HEIGHT}" fill="#ffffff"/>"##).unwrap();
    writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#cccccc"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();

    writeln!(s, r#"<g id="data">"#).unwrap();
    for (r, &l) in points.iter_rows().zip(labels) {
        let (x, y) = frame.project(r);
        writeln!(
            s,
            r#"<circle class="pt" cx="{x:.3}" cy="{y:.3}" r="3" fill="{}"/>"#,
            class_color(l)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    if let Some(o) = &overlay {
        writeln!(s, r#"<g id="exemplars">"#).unwrap();
        for (r, &l) in o.points.iter_rows().zip(o.labels) {
            let (x, y) = frame.project(r);
            writeln!(
                s,
                r#"<circle class="ex" data-class="{l}" cx="{x:.3}" cy="{y:.3}" r="7" fill="none" stroke="{EXEMPLAR_STROKE}" stroke-width="2"/>"#
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }

    let mut present: Vec<u32> = labels
        .iter()
        .chain(overlay.iter().flat_map(|o| o.labels.iter()))
        .copied()
        .collect();
    present.sort_unstable();
    present.dedup();
    writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#).unwrap();
    for (i, &l) in present.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        let name = label_names
            .get(l as usize - 1)
            .map_or_else(|| l.to_string(), |v| v.to_string());
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH + 4.0,
            y,
            class_color(l),
            WIDTH + 20.0,
            y + 9.0,
            name
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    Ok(s)
}

/// Binary PGM (P5) grid of exemplar images, one row per class and
/// `per_class` images per row, separated by one-pixel gaps.
///
/// Returns `None` when the non-bias input width is not a perfect square.
/// Gray levels map the global value range linearly onto 0..=255.
pub fn exemplar_pgm(set: &ExemplarSet) -> Option<Vec<u8>> {
    let d = set.e().cols().checked_sub(1)?;
    let side = (d as f64).sqrt().round() as usize;
    if side == 0 || side * side != d {
        return None;
    }
    let per = set.per_class();
    let classes = set.labels().iter().copied().max().unwrap_or(0) as usize;
    let gap = 1;
    let w = per * side + (per - 1) * gap;
    let h = classes * side + (classes.max(1) - 1) * gap;

    let values = set.e().iter_rows().flat_map(|r| r[..d].iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut pixels = vec![255u8; w * h];
    let mut filled = vec![0usize; classes];
    for (row, &l) in set.e().iter_rows().zip(set.labels()) {
        let gy = l as usize - 1;
        let gx = filled[gy];
        filled[gy] += 1;
        let (oy, ox) = (gy * (side + gap), gx * (side + gap));
        for py in 0..side {
            for px in 0..side {
                let v = (row[py * side + px] - lo) / span;
                pixels[(oy + py) * w + ox + px] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels);
    Some(out)
}
