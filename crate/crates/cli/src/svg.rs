// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

/// One labelled value per architecture.
pub struct Panel<'a> {
    pub title: &'a str,
    pub values: Vec<f64>,
}

const COLORS: [&str; 4] = ["#3b6ea8", "#c8553d", "#5b8c5a", "#8c6bb1"];

/// Grouped bar chart: one panel per metric, bars scaled to the panel maximum.
pub fn bar_chart(series: &[&str], panels: &[Panel]) -> String {
    let panel_w = 180.0;
    let plot_h = 160.0;
    let top = 40.0;
    let width = panel_w * panels.len() as f64 + 40.0;
    let height = top + plot_h + 70.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, name) in series.iter().enumerate() {
        let x = 20.0 + 110.0 * i as f64;
        writeln!(s, r#"<rect x="{x}" y="10" width="12" height="12" fill="{}"/>"#, COLORS[i % COLORS.len()]).unwrap();
        writeln!(s, r#"<text x="{}" y="20">{}</text>"#, x + 16.0, escape(name)).unwrap();
    }
    for (p, panel) in panels.iter().enumerate() {
        let x0 = 20.0 + panel_w * p as f64;
        let base = top + plot_h;
        let max = panel.values.iter().cloned().fold(0.0, f64::max);
        let bar_w = (panel_w - 40.0) / panel.values.len().max(1) as f64;
        writeln!(s, r#"<line x1="{x0}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, x0 + panel_w - 20.0).unwrap();
        for (i, &v) in panel.values.iter().enumerate() {
            let h = if max > 0.0 { plot_h * v / max } else { 0.0 };
            let x = x0 + 10.0 + bar_w * i as f64;
            writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{}</title></rect>"#,
                base - h,
                bar_w - 6.0,
                COLORS[i % COLORS.len()],
                short(v)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x + (bar_w - 6.0) / 2.0,
                base - h - 4.0,
                short(v)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + (panel_w - 20.0) / 2.0,
            base + 20.0,
            escape(panel.title)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e6) {
        format!("{v:.3e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
