//! Minimal SVG writers. Coordinates are printed with fixed precision so the
//! same input always yields the same bytes.

use std::fmt::Write as _;

use qipp_core::stats::FiveNumber;

pub struct BoxStats {
    pub label: String,
    pub summary: FiveNumber,
}

/// Significance bar between two boxes.
pub struct Bar {
    pub from: usize,
    pub to: usize,
    pub text: String,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round ticks covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Box-and-whisker plot, whiskers at min and max, with significance bars
/// stacked above the boxes.
pub fn boxplot(boxes: &[BoxStats], bars: &[Bar], x_label: &str, y_label: &str) -> String {
    let (w, h) = (120.0 + 90.0 * boxes.len().max(1) as f64, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0 + 22.0 * bars.len() as f64, 60.0);
    let lo = boxes.iter().map(|b| b.summary.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|b| b.summary.max).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else if lo.is_finite() {
        (lo - 0.5, lo + 0.5)
    } else {
        (0.0, 1.0)
    };
    let plot_h = h - top - bottom;
    let y = |v: f64| top + plot_h * (1.0 - (v - lo) / (hi - lo));
    let slot = (w - left - right) / boxes.len().max(1) as f64;
    let cx = |i: usize| left + slot * (i as f64 + 0.5);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}" stroke="black"/>"#,
        h - bottom
    );
    for t in ticks(lo, hi) {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{yt:.2}" x2="{left:.2}" y2="{yt:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            y(t) + 4.0,
            format_tick(t),
            yt = y(t),
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + (w - left - right) / 2.0,
        h - 15.0,
        escape(x_label)
    );

    let half = (slot * 0.3).min(30.0);
    for (i, b) in boxes.iter().enumerate() {
        let f = &b.summary;
        let x = cx(i);
        let _ = writeln!(s, r#"<g class="box">"#);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            y(f.max),
            y(f.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            y(f.q1),
            y(f.min)
        );
        for v in [f.min, f.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{yv:.2}" x2="{:.2}" y2="{yv:.2}" stroke="black"/>"#,
                x - half / 2.0,
                x + half / 2.0,
                yv = y(v)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            x - half,
            y(f.q3),
            2.0 * half,
            (y(f.q1) - y(f.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ym:.2}" x2="{:.2}" y2="{ym:.2}" stroke="black" stroke-width="2"/>"#,
            x - half,
            x + half,
            ym = y(f.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            h - bottom + 18.0,
            escape(&b.label)
        );
        let _ = writeln!(s, "</g>");
    }

    for (k, bar) in bars.iter().enumerate() {
        let yb = top - 12.0 - 22.0 * k as f64;
        let (x1, x2) = (cx(bar.from), cx(bar.to));
        let _ = writeln!(
            s,
            r#"<path d="M{x1:.2} {:.2} V{yb:.2} H{x2:.2} V{:.2}" fill="none" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            yb + 5.0,
            yb + 5.0,
            (x1 + x2) / 2.0,
            yb - 3.0,
            escape(&bar.text)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}
