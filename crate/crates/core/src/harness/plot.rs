use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    /// Half-height of the error whisker, if any.
    pub err: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bar chart with optional error whiskers. The axis runs from zero to
/// `y_max`, or to the largest bar plus whisker when `y_max` is `None`.
pub fn bar_chart(title: &str, bars: &[Bar], y_max: Option<f64>) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const LEFT: f64 = 50.0;
    const BOTTOM: f64 = 40.0;
    const TOP: f64 = 30.0;
    let top = y_max.unwrap_or_else(|| {
        bars.iter()
            .map(|b| b.value + b.err.unwrap_or(0.0))
            .fold(0.0, f64::max)
            * 1.1
    });
    let top = if top > 0.0 && top.is_finite() { top } else { 1.0 };
    let plot_h = H - BOTTOM - TOP;
    let y = |v: f64| H - BOTTOM - (v.max(0.0) / top).min(1.0) * plot_h;
    let slot = (W - LEFT - 10.0) / bars.len().max(1) as f64;

    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    s.push('\n');
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - BOTTOM, W - 10.0, H - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for i in 0..=4 {
        let v = top * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{:.2}</text>"#,
            LEFT - 4.0,
            y(v) + 3.0,
            v
        );
    }
    for (i, b) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let bw = slot * 0.7;
        let yt = y(b.value);
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.1}" y="{yt:.1}" width="{bw:.1}" height="{:.1}" fill="#4a7ab5"/>"##,
            H - BOTTOM - yt
        );
        if let Some(e) = b.err {
            let cx = x + bw / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                y(b.value - e),
                y(b.value + e)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            x + bw / 2.0,
            H - BOTTOM + 14.0,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
