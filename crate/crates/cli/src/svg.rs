//! Minimal static SVG charts for the report directory.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
        x = W - PAD,
        y = H - PAD
    )
    .unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_axis(s: &mut String, lo: f64, hi: f64) {
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * t as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            y + 4.0,
            crate::output::num(v)
        )
        .unwrap();
    }
}

/// Vertical bars with an optional dashed reference line.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64], reference: Option<f64>) -> Option<String> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let lo = values.iter().cloned().fold(0.0, f64::min);
    let hi = values
        .iter()
        .cloned()
        .chain(reference)
        .fold(f64::MIN, f64::max)
        .max(lo + 1e-12);
    let plot_h = H - 2.0 * PAD;
    let y_of = |v: f64| H - PAD - (v - lo) / (hi - lo) * plot_h;
    let slot = (W - 2.0 * PAD) / values.len() as f64;
    let mut s = header(title);
    y_axis(&mut s, lo, hi);
    for (i, (&v, l)) in values.iter().zip(labels).enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.1;
        let (top, bottom) = (y_of(v.max(0.0)), y_of(v.min(0.0)));
        writeln!(
            s,
            r##"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#4477aa"/>"##,
            slot * 0.8,
            (bottom - top).max(0.0)
        )
        .unwrap();
        if labels.len() <= 32 {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                x + slot * 0.4,
                H - PAD + 14.0,
                escape(l)
            )
            .unwrap();
        }
    }
    if let Some(r) = reference {
        writeln!(
            s,
            r#"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="red" stroke-dasharray="6,4"/>"#,
            W - PAD,
            y = y_of(r)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// One polyline per named series over shared x values.
pub fn line_chart(title: &str, xs: &[f64], series: &[(&str, Vec<f64>)]) -> Option<String> {
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    if xs.len() < 2 || all.is_empty() || all.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let lo = all.iter().cloned().fold(0.0, f64::min);
    let hi = all.iter().cloned().fold(f64::MIN, f64::max).max(lo + 1e-12);
    let x_of = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let y_of = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let colors = ["#4477aa", "#ee6677", "#228833", "#ccbb44"];
    let mut s = header(title);
    y_axis(&mut s, lo, hi);
    for &x in xs {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x_of(x),
            H - PAD + 14.0,
            crate::output::num(x)
        )
        .unwrap();
    }
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(vals)
            .map(|(&x, &v)| format!("{:.2},{:.2}", x_of(x), y_of(v)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD - 120.0,
            PAD + 14.0 * k as f64,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Some(s)
}
