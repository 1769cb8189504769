//! Minimal static SVG emitter for log-log decay plots with reference
//! slope guide lines.

use std::fmt::Write as _;

pub struct LogLogPlot {
    pub title: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    /// Reference slopes drawn as dashed guides anchored at the first point
    /// of the first series.
    pub guide_slopes: Vec<f64>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

impl LogLogPlot {
    pub fn render(&self) -> String {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (_, s) in &self.series {
            for &(x, y) in s {
                if x > 0.0 && y > 0.0 {
                    pts.push((x.log10(), y.log10()));
                }
            }
        }
        let (x0, x1) = bounds(pts.iter().map(|p| p.0));
        let (y0, y1) = bounds(pts.iter().map(|p| p.1));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * MARGIN);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" font-family="monospace" font-size="14">{}</text>"#,
            MARGIN, self.title
        );
        // Axes.
        let _ = writeln!(
            out,
            r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN,
            t = MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12">log10 t</text>"#,
            W / 2.0 - 24.0,
            H - 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="12" y="{}" font-family="monospace" font-size="12" transform="rotate(-90 12 {})">log10 value</text>"#,
            H / 2.0,
            H / 2.0
        );

        // Guide lines through the first data point.
        if let Some((gx, gy)) = pts.first().copied() {
            for slope in &self.guide_slopes {
                let yb = gy + slope * (x1 - gx);
                let _ = writeln!(
                    out,
                    r##"<line data-guide-slope="{slope}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="6,4"/>"##,
                    sx(gx),
                    sy(gy),
                    sx(x1),
                    sy(yb)
                );
                let _ = writeln!(
                    out,
                    r##"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="#888">slope {slope}</text>"##,
                    sx(x1) - 80.0,
                    sy(yb) - 6.0
                );
            }
        }

        for (i, (label, s)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = s
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0)
                .map(|(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.log10())))
                .collect();
            if path.is_empty() {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{color}">{label}</text>"#,
                W - MARGIN - 160.0,
                MARGIN + 16.0 * (i as f64 + 1.0)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
