//! Minimal SVG charts for evaluation results.

use std::fmt::Write;

use wolfpack_core::eval::{Heatmap, PayoffMatrix, Stance, SweepResult};

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 48.0;

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, width / 2.0);
}

/// Lone and team capture rates against the lone-capture weight.
pub fn sweep_svg(r: &SweepResult) -> String {
    let mut out = String::new();
    header(&mut out, W, H, &format!("Capture rates, {} predators", r.predators));
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN / 2.0, H - MARGIN, MARGIN);
    let max_lone = r.points.iter().map(|p| p.weights[0].lone()).fold(0.0, f64::max).max(1e-9);
    let px = |w: f64| x0 + (x1 - x0) * w / max_lone;
    let py = |rate: f64| y0 + (y1 - y0) * rate;
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = py(tick);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{tick:.2}</text>"#, x0 - 6.0, y + 4.0);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##);
    }
    for p in &r.points {
        let w = p.weights[0].lone();
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{w:.3}</text>"#, px(w), y0 + 16.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">w_lone</text>"#, (x0 + x1) / 2.0, H - 8.0);
    type Rate = fn(&wolfpack_core::eval::SweepPoint) -> f64;
    let series: [(&str, &str, Rate); 2] = [
        ("team", "#1f77b4", |p| p.team_rate),
        ("lone", "#d62728", |p| p.lone_rate),
    ];
    for (k, (name, color, rate)) in series.iter().enumerate() {
        let pts: Vec<String> = r
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", px(p.weights[0].lone()), py(rate(p))))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &r.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(p.weights[0].lone()),
                py(rate(p))
            );
        }
        let ly = y1 + 14.0 * k as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" fill="{color}">{name} capture</text>"#, x1 - 90.0);
    }
    out.push_str("</svg>\n");
    out
}

fn shade(rate: f64) -> String {
    let v = (255.0 * (1.0 - rate.clamp(0.0, 1.0))).round() as u8;
    format!("rgb({v},{v},255)")
}

/// Team-capture rate for every pair of lone-capture weights.
pub fn heatmap_svg(h: &Heatmap) -> String {
    let (rows, cols) = (h.grid_a.len(), h.grid_b.len());
    let cell = 48.0;
    let (width, height) = (MARGIN * 2.0 + cell * cols as f64, MARGIN * 2.0 + cell * rows as f64);
    let mut out = String::new();
    header(&mut out, width, height, "Team capture rate");
    for (i, a) in h.grid_a.iter().enumerate() {
        let y = MARGIN + cell * i as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, MARGIN - 4.0, y + cell / 2.0 + 4.0, a.lone());
        for (j, _) in h.grid_b.iter().enumerate() {
            let x = MARGIN + cell * j as f64;
            let rate = h.team_rate[i][j];
            let _ = writeln!(out, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="white"/>"#, shade(rate));
            let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{rate:.2}</text>"#, x + cell / 2.0, y + cell / 2.0 + 4.0);
        }
    }
    for (j, b) in h.grid_b.iter().enumerate() {
        let x = MARGIN + cell * j as f64 + cell / 2.0;
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{:.3}</text>"#, height - MARGIN + 16.0, b.lone());
    }
    out.push_str("</svg>\n");
    out
}

/// 2×2 table with "row, column" payoffs in each cell.
pub fn payoff_svg(m: &PayoffMatrix) -> String {
    let cell = 120.0;
    let (width, height) = (MARGIN * 2.0 + cell * 2.0 + 40.0, MARGIN * 2.0 + cell * 2.0);
    let x0 = MARGIN + 40.0;
    let label = |s: Stance| if s == Stance::Cooperate { "C" } else { "D" };
    let mut out = String::new();
    header(&mut out, width, height, "Empirical payoffs (row, column)");
    for (i, rs) in m.stances.iter().enumerate() {
        let y = MARGIN + cell * i as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 6.0, y + cell / 2.0, label(*rs));
        for (j, cs) in m.stances.iter().enumerate() {
            let x = x0 + cell * j as f64;
            if i == 0 {
                let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x + cell / 2.0, MARGIN - 6.0, label(*cs));
            }
            let _ = writeln!(out, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="none" stroke="black"/>"#);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle">{:.2}, {:.2}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                m.row_payoff[i][j],
                m.col_payoff[i][j]
            );
        }
    }
    if m.same_model {
        let _ = writeln!(out, r#"<text x="{x0}" y="{}">same model on both sides</text>"#, height - 12.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Picks the chart for a result JSON file written by `eval`.
pub fn svg_from_json(text: &str) -> Result<String, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if value.get("points").is_some() {
        let r: SweepResult = serde_json::from_value(value).map_err(|e| e.to_string())?;
        Ok(sweep_svg(&r))
    } else if value.get("grid_a").is_some() {
        let h: Heatmap = serde_json::from_value(value).map_err(|e| e.to_string())?;
        Ok(heatmap_svg(&h))
    } else if value.get("row_payoff").is_some() {
        let m: PayoffMatrix = serde_json::from_value(value).map_err(|e| e.to_string())?;
        Ok(payoff_svg(&m))
    } else {
        Err("not a sweep, heatmap or payoff result".into())
    }
}
