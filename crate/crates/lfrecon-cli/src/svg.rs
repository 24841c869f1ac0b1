//! Minimal scatter-plot SVG writer: one panel per block, true value on
//! the x axis, estimate on the y axis, identity diagonal for reference.

const PANEL: f64 = 220.0;
const MARGIN: f64 = 46.0;
const GAP: f64 = 26.0;
const COLS: usize = 3;

fn panel_svg(out: &mut String, x0: f64, y0: f64, name: &str, points: &[(f64, f64)]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(t, e) in points {
        lo = lo.min(t).min(e);
        hi = hi.max(t).max(e);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.08 * (hi - lo).max(1e-9);
    lo -= pad;
    hi += pad;
    let scale = PANEL / (hi - lo);
    let px = |v: f64| x0 + (v - lo) * scale;
    let py = |v: f64| y0 + PANEL - (v - lo) * scale;

    out.push_str(&format!(
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL}\" height=\"{PANEL}\" \
         fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbb\" \
         stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    ));
    for &(t, e) in points {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#2563eb\" fill-opacity=\"0.6\"/>\n",
            px(t),
            py(e)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{name}</text>\n",
        x0 + PANEL / 2.0,
        y0 - 8.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"middle\" fill=\"#666\">true</text>\n",
        x0 + PANEL / 2.0,
        y0 + PANEL + 16.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
         text-anchor=\"middle\" fill=\"#666\" transform=\"rotate(-90 {:.1} {:.1})\">estimated</text>\n",
        x0 - 14.0,
        y0 + PANEL / 2.0,
        x0 - 14.0,
        y0 + PANEL / 2.0
    ));
}

pub fn scatter_svg(groups: &[(String, Vec<(f64, f64)>)]) -> String {
    let n = groups.len().max(1);
    let cols = COLS.min(n);
    let rows = n.div_ceil(cols);
    let width = MARGIN * 2.0 + cols as f64 * PANEL + (cols - 1) as f64 * GAP;
    let height = MARGIN * 2.0 + rows as f64 * PANEL + (rows - 1) as f64 * GAP;

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (idx, (name, points)) in groups.iter().enumerate() {
        let x0 = MARGIN + (idx % cols) as f64 * (PANEL + GAP);
        let y0 = MARGIN + (idx / cols) as f64 * (PANEL + GAP);
        panel_svg(&mut out, x0, y0, name, points);
    }
    out.push_str("</svg>\n");
    out
}
