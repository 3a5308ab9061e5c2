//! Static SVG heatmaps and line plots.

use std::fmt::Write as _;

/// Diverging blue-white-red map on `[lo, hi]`.
fn color(v: f64, lo: f64, hi: f64) -> String {
    let mid = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(1e-300);
    let t = ((v - mid) / half).clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = 1.0 + t;
        (s, s, 1.0)
    } else {
        (1.0, 1.0 - t, 1.0 - t)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8)
}

/// One coloured square per cell: `(x, y, value)` in data coordinates,
/// cells of side `cell`, y pointing up.
pub fn heatmap(title: &str, cells: &[(f64, f64, f64)], cell: f64, bounds: [f64; 4]) -> String {
    let [x0, x1, y0, y1] = bounds;
    let scale = 400.0 / (y1 - y0);
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    let (lo, hi) = cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.2), b.max(c.2)));
    let m = lo.abs().max(hi.abs());
    let (lo, hi) = if lo < 0.0 { (-m, m) } else { (lo, hi) };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">\n",
        w + 20.0,
        h + 40.0,
        w + 20.0,
        h + 40.0
    );
    let _ = writeln!(s, "<text x=\"10\" y=\"16\" font-size=\"12\">{title} [{lo:.3}, {hi:.3}]</text>");
    let side = cell * scale;
    for &(x, y, v) in cells {
        let px = 10.0 + (x - 0.5 * cell - x0) * scale;
        let py = 30.0 + (y1 - y - 0.5 * cell) * scale;
        let _ = writeln!(
            s,
            "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            side + 0.05,
            side + 0.05,
            color(v, lo, hi)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Polylines of `(x, y)` series sharing axes.
pub fn line_plot(title: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let (w, h) = (480.0, 300.0);
    let px = |x: f64| 50.0 + (x - x0) / (x1 - x0) * w;
    let py = |y: f64| 30.0 + (y1 - y) / (y1 - y0) * h;
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"370\" viewBox=\"0 0 560 370\">\n");
    let _ = writeln!(s, "<text x=\"10\" y=\"16\" font-size=\"12\">{title}</text>");
    let _ = writeln!(
        s,
        "<rect x=\"50\" y=\"30\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#888\"/>\n<text x=\"50\" y=\"350\" font-size=\"10\">{x0:.4}</text>\n<text x=\"490\" y=\"350\" font-size=\"10\">{x1:.4}</text>\n<text x=\"2\" y=\"34\" font-size=\"10\">{y1:.3}</text>\n<text x=\"2\" y=\"330\" font-size=\"10\">{y0:.3}</text>"
    );
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (k, (name, p)) in series.iter().enumerate() {
        let c = palette[k % palette.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{c}\" points=\"{}\"/>", coords.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"16\" font-size=\"11\" fill=\"{c}\">{name}</text>", 300 + 90 * k);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let cells = [(0.25, 0.25, -1.0), (0.75, 0.25, 0.0), (0.25, 0.75, 1.0)];
        let s = heatmap("t", &cells, 0.5, [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.matches("<rect").count(), 3);
        assert!(s.contains("#0000ff") && s.contains("#ff0000") && s.contains("#ffffff"));
    }

    #[test]
    fn line_plot_has_series() {
        let a = [(0.0, 1.0), (1.0, 2.0)];
        let s = line_plot("p", &[("a", &a), ("b", &a)]);
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
