//! SVG box plots of test AUC: one panel per α, boxes grouped by n and
//! coloured by method.

use std::fmt::Write as _;

use crate::eval::ResultTable;

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles plus Tukey whiskers (furthest points within 1.5 IQR).
pub fn box_stats(values: &[f64]) -> Option<(BoxStats, Vec<f64>)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_f, hi_f) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_f && *x <= hi_f).collect();
    let outliers = v.iter().copied().filter(|x| *x < lo_f || *x > hi_f).collect();
    Some((
        BoxStats {
            q1,
            median: quantile(&v, 0.5),
            q3,
            whisker_lo: inside.first().copied().unwrap_or(q1),
            whisker_hi: inside.last().copied().unwrap_or(q3),
        },
        outliers,
    ))
}

pub fn auc_boxplot_svg(table: &ResultTable) -> String {
    let cells = table.cells();
    let mut methods: Vec<String> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut ns: Vec<usize> = Vec::new();
    for c in &cells {
        if !methods.contains(&c.method) {
            methods.push(c.method.clone());
        }
        if !alphas.contains(&c.alpha) {
            alphas.push(c.alpha);
        }
        if !ns.contains(&c.n) {
            ns.push(c.n);
        }
    }
    alphas.sort_by(f64::total_cmp);
    ns.sort_unstable();

    let (panel_w, panel_h) = (300.0, 260.0);
    let (left, top, gap) = (50.0, 40.0, 20.0);
    let width = left + alphas.len().max(1) as f64 * (panel_w + gap) + 10.0;
    let height = top + panel_h + 70.0;
    let all: Vec<f64> = cells.iter().flat_map(|c| c.aucs.iter().copied()).collect();
    let mut lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    lo = (lo - pad).max(0.0);
    hi = (hi + pad).min(1.0);
    let y_of = |v: f64| top + panel_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, &alpha) in alphas.iter().enumerate() {
        let x0 = left + p as f64 * (panel_w + gap);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.1}" y="{top:.1}" width="{panel_w:.1}" height="{panel_h:.1}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">α = {alpha}</text>"#,
            x0 + panel_w / 2.0,
            top - 12.0
        );
        for t in 0..=4 {
            let v = lo + (hi - lo) * t as f64 / 4.0;
            let y = y_of(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
                x0 + panel_w
            );
            if p == 0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
                    x0 - 4.0,
                    y + 4.0
                );
            }
        }
        let group_w = panel_w / ns.len().max(1) as f64;
        let box_w = group_w * 0.7 / methods.len().max(1) as f64;
        for (g, &n) in ns.iter().enumerate() {
            let gx = x0 + g as f64 * group_w;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n = {n}</text>"#,
                gx + group_w / 2.0,
                top + panel_h + 16.0
            );
            for (m, method) in methods.iter().enumerate() {
                let Some(cell) = cells.iter().find(|c| &c.method == method && c.alpha == alpha && c.n == n) else {
                    continue;
                };
                let Some((b, outliers)) = box_stats(&cell.aucs) else {
                    continue;
                };
                let color = PALETTE[m % PALETTE.len()];
                let bx = gx + group_w * 0.15 + m as f64 * box_w;
                let cx = bx + box_w / 2.0;
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    y_of(b.whisker_lo),
                    y_of(b.whisker_hi)
                );
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                    bx + 2.0,
                    y_of(b.q3),
                    box_w - 4.0,
                    (y_of(b.q1) - y_of(b.q3)).max(0.5)
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#,
                    bx + 2.0,
                    bx + box_w - 2.0,
                    y = y_of(b.median)
                );
                for o in outliers {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{cx:.1}" cy="{:.1}" r="2" fill="none" stroke="{color}"/>"#,
                        y_of(o)
                    );
                }
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">test AUC</text>"#,
        top + panel_h / 2.0,
        top + panel_h / 2.0
    );
    for (m, method) in methods.iter().enumerate() {
        let x = left + m as f64 * 120.0;
        let y = top + panel_h + 40.0;
        let color = PALETTE[m % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
            y - 10.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}">{method}</text>"#, x + 16.0);
    }
    s.push_str("</svg>\n");
    s
}
