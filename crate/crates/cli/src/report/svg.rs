//! Hand-written SVG 1.1: Q-V curves, zone-delta heatmaps and the
//! extractable-Q scatter. Output depends only on the inputs, so reruns are
//! byte-identical.

use std::fmt::Write;

use qvsec::qv::QvPoint;

/// Diverging palette, most negative first. The middle stop is 0 %.
pub const PALETTE: [&str; 9] = [
    "#b2182b", "#d6604d", "#f4a582", "#fddbc7", "#f7f7f7", "#d1e5f0", "#92c5de", "#4393c3", "#2166ac",
];

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn open(w: f64, h: f64, title: &str, config_hash: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(
        s,
        "<metadata><run xmlns=\"urn:qvsec:run\" config-sha256=\"{}\" generator=\"qvsec {}\"/></metadata>",
        escape(config_hash),
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(s, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>");
    s
}

fn close(mut s: String) -> String {
    s.push_str("</svg>\n");
    s
}

/// Round-number ticks covering [lo, hi].
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-12);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize + 1 };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Linear map from data to pixels.
#[derive(Clone, Copy)]
struct Axis {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(d0: f64, d1: f64, p0: f64, p1: f64) -> Self {
        let (d0, d1) = if (d1 - d0).abs() < 1e-12 { (d0 - 1.0, d1 + 1.0) } else { (d0, d1) };
        Axis { d0, d1, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = 0.05 * (hi - lo).abs().max(1e-9);
    (lo - pad, hi + pad)
}

struct Frame {
    x: Axis,
    y: Axis,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

fn draw_frame(s: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        s,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        f.left,
        f.top,
        f.right - f.left,
        f.bottom - f.top
    );
    let xt = ticks(f.x.d0, f.x.d1, 8);
    let xs = if xt.len() > 1 { xt[1] - xt[0] } else { 1.0 };
    for v in &xt {
        let px = f.x.at(*v);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/><text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            f.top,
            f.bottom,
            f.bottom + 16.0,
            tick_label(*v, xs)
        );
    }
    let yt = ticks(f.y.d0, f.y.d1, 6);
    let ys = if yt.len() > 1 { yt[1] - yt[0] } else { 1.0 };
    for v in &yt {
        let py = f.y.at(*v);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#dddddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            f.left,
            f.right,
            f.left - 6.0,
            py + 4.0,
            tick_label(*v, ys)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        0.5 * (f.left + f.right),
        f.bottom + 36.0,
        escape(x_label)
    );
    let cy = 0.5 * (f.top + f.bottom);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{cy:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {cy:.2})\">{}</text>",
        escape(y_label)
    );
}

/// Q-V curve of one bus. The nose (lowest converged Q) is marked and
/// labelled with the margin.
pub fn qv_plot(bus: u32, points: &[QvPoint], config_hash: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let mut s = open(w, h, &format!("Q-V curve, bus {bus}"), config_hash);
    let ok: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.converged)
        .filter_map(|p| p.q_fict.map(|q| (p.v_set, q)))
        .collect();
    let _ = writeln!(
        s,
        "<text x=\"{:.0}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Q-V curve at bus {bus}</text>",
        w / 2.0
    );
    if ok.is_empty() {
        let _ = writeln!(s, "<text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\">no converged points</text>", w / 2.0, h / 2.0);
        return close(s);
    }
    let (vmin, vmax) = ok.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (qmin, qmax) = ok.iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (v0, v1) = padded(vmin, vmax);
    let (q0, q1) = padded(qmin, qmax);
    let f = Frame {
        x: Axis::new(v0, v1, 70.0, w - 20.0),
        y: Axis::new(q0, q1, h - 60.0, 40.0),
        left: 70.0,
        right: w - 20.0,
        top: 40.0,
        bottom: h - 60.0,
    };
    draw_frame(&mut s, &f, "voltage setpoint (p.u.)", "fictitious generator Q (MVAr)");
    let zero = f.y.at(0.0);
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{zero:.2}\" x2=\"{:.2}\" y2=\"{zero:.2}\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>",
        f.left, f.right
    );
    let path: Vec<String> = ok.iter().map(|(v, q)| format!("{:.2},{:.2}", f.x.at(*v), f.y.at(*q))).collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#2166ac\" stroke-width=\"2\"/>", path.join(" "));
    for (v, q) in &ok {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#2166ac\"/>", f.x.at(*v), f.y.at(*q));
    }
    let (nv, nq) = ok.iter().fold(ok[0], |best, p| if p.1 < best.1 { *p } else { best });
    let margin = if nq <= 0.0 { -nq } else { 0.0 };
    let (nx, ny) = (f.x.at(nv), f.y.at(nq));
    let anchor = if nx > 0.5 * (f.left + f.right) { "end" } else { "start" };
    let dx = if anchor == "end" { -8.0 } else { 8.0 };
    let _ = writeln!(
        s,
        "<circle cx=\"{nx:.2}\" cy=\"{ny:.2}\" r=\"5\" fill=\"none\" stroke=\"#b2182b\" stroke-width=\"2\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"{anchor}\" fill=\"#b2182b\">nose: Q margin {margin:.2} MVAr at V = {nv:.4} p.u.</text>",
        nx + dx,
        ny - 8.0
    );
    close(s)
}

/// Palette colour for a percentage, saturating at ±`limit`.
pub fn color_for(pct: f64, limit: f64) -> &'static str {
    let t = (pct / limit).clamp(-1.0, 1.0);
    let idx = ((t + 1.0) / 2.0 * 9.0).floor().min(8.0) as usize;
    // keep exact zero on the neutral stop
    if pct == 0.0 {
        return PALETTE[4];
    }
    PALETTE[idx]
}

pub struct Heatmap<'a> {
    pub title: &'a str,
    /// One per row (zone).
    pub row_labels: &'a [String],
    /// One per column (case), already in display order.
    pub col_labels: &'a [String],
    /// `values[row][col]`, percent.
    pub values: &'a [Vec<f64>],
    /// Column counts of consecutive clusters; a separator goes between each.
    pub groups: &'a [usize],
    pub limit_pct: f64,
}

pub fn heatmap(hm: &Heatmap, config_hash: &str) -> String {
    let cell_w = 22.0;
    let cell_h = 26.0;
    let left = 40.0 + 7.0 * hm.row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(4) as f64;
    let top = 50.0;
    let label_room = 10.0 + 6.5 * hm.col_labels.iter().map(|l| l.chars().count()).max().unwrap_or(4) as f64;
    let n_cols = hm.col_labels.len();
    let n_rows = hm.row_labels.len();
    let grid_w = cell_w * n_cols as f64;
    let grid_h = cell_h * n_rows as f64;
    let legend_w = 90.0;
    let w = (left + grid_w + 30.0 + legend_w).max(360.0);
    let h = top + grid_h.max(9.0 * 16.0 + 10.0) + label_room + 20.0;
    let mut s = open(w, h, hm.title, config_hash);
    let _ = writeln!(s, "<text x=\"{left:.2}\" y=\"24\" font-size=\"15\">{}</text>", escape(hm.title));

    for (r, label) in hm.row_labels.iter().enumerate() {
        let y = top + cell_h * r as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + cell_h / 2.0 + 4.0,
            escape(label)
        );
        for c in 0..n_cols {
            let v = hm.values[r][c];
            let x = left + cell_w * c as f64;
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" fill=\"{}\" stroke=\"#ffffff\" stroke-width=\"0.5\"><title>{}: {} {v:.3}%</title></rect>",
                color_for(v, hm.limit_pct),
                escape(&hm.col_labels[c]),
                escape(label)
            );
        }
    }
    for (c, label) in hm.col_labels.iter().enumerate() {
        let x = left + cell_w * c as f64 + cell_w / 2.0 + 4.0;
        let y = top + grid_h + 8.0;
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"10\" transform=\"rotate(90 {x:.2} {y:.2})\">{}</text>",
            escape(label)
        );
    }
    let mut at = 0usize;
    for g in hm.groups.iter().take(hm.groups.len().saturating_sub(1)) {
        at += g;
        let x = left + cell_w * at as f64;
        let _ = writeln!(
            s,
            "<line class=\"separator\" x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
            top - 4.0,
            top + grid_h + 4.0
        );
    }
    let lx = left + grid_w + 30.0;
    let _ = writeln!(s, "<text x=\"{lx:.2}\" y=\"{:.2}\">delta Q margin</text>", top - 8.0);
    for (i, color) in PALETTE.iter().rev().enumerate() {
        let y = top + 16.0 * i as f64;
        let v = hm.limit_pct * (1.0 - 2.0 * (i as f64 + 0.5) / 9.0);
        let _ = writeln!(
            s,
            "<rect x=\"{lx:.2}\" y=\"{y:.2}\" width=\"14\" height=\"16\" fill=\"{color}\" stroke=\"#999999\" stroke-width=\"0.5\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{v:+.1}%</text>",
            lx + 18.0,
            y + 12.0
        );
    }
    close(s)
}

/// One point per bus: x = nose voltage, y = -margin (extraction negative).
pub fn scatter(points: &[(u32, f64, f64)], config_hash: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let mut s = open(w, h, "extractable Q vs collapse voltage", config_hash);
    let _ = writeln!(
        s,
        "<text x=\"{:.0}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">Max extractable Q vs voltage at collapse</text>",
        w / 2.0
    );
    if points.is_empty() {
        return close(s);
    }
    let (vmin, vmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (qmin, qmax) = points.iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.min(p.2), b.max(p.2)));
    let (v0, v1) = padded(vmin.min(0.5), vmax.max(1.0));
    let (q0, q1) = padded(qmin, qmax);
    let f = Frame {
        x: Axis::new(v0, v1, 70.0, w - 20.0),
        y: Axis::new(q0, q1, h - 60.0, 40.0),
        left: 70.0,
        right: w - 20.0,
        top: 40.0,
        bottom: h - 60.0,
    };
    draw_frame(&mut s, &f, "voltage at the nose (p.u.)", "max Q extracted (MVAr, negative)");
    for (bus, v, q) in points {
        let (x, y) = (f.x.at(*v), f.y.at(*q));
        let _ = writeln!(
            s,
            "<circle class=\"bus\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#b2182b\"><title>bus {bus}: {v:.4} p.u., {q:.2} MVAr</title></circle>\n<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"9\">{bus}</text>",
            x + 5.0,
            y - 5.0
        );
    }
    close(s)
}
