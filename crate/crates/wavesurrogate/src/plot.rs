//! Self-contained SVG charts: log-scale validation-MSE curves over epochs
//! with horizontal reference levels.
//!
//! Element roles are fixed so the output is machine-checkable: every curve is
//! one `<polyline>`, every reference level one `<line>`; axes, frame and
//! ticks are `<path>`/`<rect>` elements.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("curve `{label}` point {index} has non-positive MSE {value}; log scale needs > 0")]
    NonPositive {
        label: String,
        index: usize,
        value: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    /// (epoch, validation MSE)
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RefLine {
    pub label: String,
    pub value: f64,
}

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 600.0;
pub const MARGIN_LEFT: f64 = 80.0;
pub const MARGIN_RIGHT: f64 = 180.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 60.0;
/// Log-space padding applied above and below the data range.
pub const LOG_PAD: f64 = 0.05;

const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Affine map from (epoch, log10 MSE) to pixel coordinates; exposed so tests
/// can recompute expected coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ChartScales {
    pub x_min: f64,
    pub x_max: f64,
    /// log10 range after the 5% padding.
    pub ly_min: f64,
    pub ly_max: f64,
}

impl ChartScales {
    pub fn x_to_px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        MARGIN_LEFT + (x - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn mse_to_py(&self, v: f64) -> f64 {
        let ly = v.log10();
        let span = (self.ly_max - self.ly_min).max(f64::MIN_POSITIVE);
        let frac = (ly - self.ly_min) / span;
        HEIGHT - MARGIN_BOTTOM - frac * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Scales spanning the plotted data (curves and reference levels), padded 5%
/// in log space.
pub fn chart_scales(curves: &[Curve], refs: &[RefLine]) -> Result<ChartScales, PlotError> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(PlotError::Empty);
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for c in curves {
        for (i, &(x, v)) in c.points.iter().enumerate() {
            if !(v > 0.0) {
                return Err(PlotError::NonPositive {
                    label: c.label.clone(),
                    index: i,
                    value: v,
                });
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
    }
    for r in refs {
        if !(r.value > 0.0) {
            return Err(PlotError::NonPositive {
                label: r.label.clone(),
                index: 0,
                value: r.value,
            });
        }
        v_min = v_min.min(r.value);
        v_max = v_max.max(r.value);
    }
    let ly_min = v_min.log10();
    let ly_max = v_max.log10();
    let pad = LOG_PAD * (ly_max - ly_min).max(1e-12);
    Ok(ChartScales {
        x_min,
        x_max,
        ly_min: ly_min - pad,
        ly_max: ly_max + pad,
    })
}

/// Render the chart; deterministic function of its inputs.
pub fn render_chart(curves: &[Curve], refs: &[RefLine], title: &str) -> Result<String, PlotError> {
    let sc = chart_scales(curves, refs)?;
    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg version="1.1" width="{WIDTH}" height="{HEIGHT}" xmlns="http://www.w3.org/2000/svg">"#
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    ));
    svg.push('\n');
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    svg.push_str(&format!(
        r#"<rect class="plot-area" x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black" stroke-width="1"/>"#
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        MARGIN_TOP - 14.0,
        xml_escape(title)
    ));
    svg.push('\n');

    // y ticks at integer decades, drawn as one path
    let mut ticks = String::new();
    let dec_lo = sc.ly_min.ceil() as i64;
    let dec_hi = sc.ly_max.floor() as i64;
    for d in dec_lo..=dec_hi {
        let py = sc.mse_to_py(10f64.powi(d as i32));
        ticks.push_str(&format!(
            "M{} {:.2} L{} {:.2} ",
            MARGIN_LEFT - 6.0,
            py,
            MARGIN_LEFT,
            py
        ));
        svg.push_str(&format!(
            r#"<text x="{}" y="{:.2}" text-anchor="end" dominant-baseline="middle" font-family="sans-serif" font-size="12">1e{}</text>"#,
            MARGIN_LEFT - 9.0,
            py,
            d
        ));
        svg.push('\n');
    }
    // x ticks: five evenly spaced epoch marks
    for k in 0..=4 {
        let x = sc.x_min + (sc.x_max - sc.x_min) * k as f64 / 4.0;
        let px = sc.x_to_px(x);
        ticks.push_str(&format!(
            "M{:.2} {} L{:.2} {} ",
            px,
            HEIGHT - MARGIN_BOTTOM,
            px,
            HEIGHT - MARGIN_BOTTOM + 6.0
        ));
        svg.push_str(&format!(
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            px,
            HEIGHT - MARGIN_BOTTOM + 20.0,
            x.round() as i64
        ));
        svg.push('\n');
    }
    svg.push_str(&format!(
        r#"<path d="{}" stroke="black" stroke-width="1" fill="none"/>"#,
        ticks.trim_end()
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">epoch</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="20" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 20 {})">validation MSE</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    svg.push('\n');

    // reference levels: exactly one <line> element each
    for r in refs.iter() {
        let py = sc.mse_to_py(r.value);
        svg.push_str(&format!(
            r##"<line x1="{MARGIN_LEFT}" y1="{py:.3}" x2="{:.3}" y2="{py:.3}" stroke="#555555" stroke-width="1.2" stroke-dasharray="7 4"/>"##,
            WIDTH - MARGIN_RIGHT
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r##"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="11" fill="#555555">{}</text>"##,
            WIDTH - MARGIN_RIGHT + 6.0,
            py + 4.0,
            xml_escape(&r.label)
        ));
        svg.push('\n');
    }

    // curves: exactly one <polyline> element each
    for (k, c) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        for &(x, v) in &c.points {
            pts.push_str(&format!("{:.3},{:.3} ", sc.x_to_px(x), sc.mse_to_py(v)));
        }
        svg.push_str(&format!(
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            pts.trim_end()
        ));
        svg.push('\n');
        let ly = MARGIN_TOP + 18.0 * k as f64 + 12.0;
        svg.push_str(&format!(
            r#"<rect x="{:.1}" y="{:.1}" width="14" height="4" fill="{color}"/>"#,
            WIDTH - MARGIN_RIGHT + 8.0,
            ly - 4.0
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH - MARGIN_RIGHT + 28.0,
            ly,
            xml_escape(&c.label)
        ));
        svg.push('\n');
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, vals: &[(f64, f64)]) -> Curve {
        Curve {
            label: label.into(),
            points: vals.to_vec(),
        }
    }

    #[test]
    fn one_curve_no_refs_has_one_polyline_and_no_lines() {
        let svg = render_chart(
            &[curve("a", &[(0.0, 1e-2), (10.0, 1e-3), (20.0, 5e-4)])],
            &[],
            "t",
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<line ").count(), 0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn two_reference_levels_are_two_horizontal_lines() {
        let svg = render_chart(
            &[curve("a", &[(0.0, 1e-2), (10.0, 1e-3)])],
            &[
                RefLine {
                    label: "fom".into(),
                    value: 1e-6,
                },
                RefLine {
                    label: "rom".into(),
                    value: 1e-5,
                },
            ],
            "t",
        )
        .unwrap();
        assert_eq!(svg.matches("<line ").count(), 2);
        // horizontal: y1 == y2 on every line element
        for line in svg.lines().filter(|l| l.starts_with("<line ")) {
            let y1 = extract_attr(line, "y1");
            let y2 = extract_attr(line, "y2");
            assert_eq!(y1, y2);
        }
    }

    fn extract_attr(tag: &str, name: &str) -> String {
        let pat = format!("{name}=\"");
        let start = tag.find(&pat).unwrap() + pat.len();
        let end = tag[start..].find('"').unwrap() + start;
        tag[start..end].to_string()
    }

    #[test]
    fn axis_range_spans_data_padded_in_log_space() {
        let curves = [curve("a", &[(0.0, 1e-1), (100.0, 1e-5)])];
        let refs = [RefLine {
            label: "r".into(),
            value: 1e-6,
        }];
        let sc = chart_scales(&curves, &refs).unwrap();
        // data spans 1e-6..1e-1 → log range 5 decades, padded by 0.25 each side
        assert!((sc.ly_max - (-1.0 + 0.05 * 5.0)).abs() < 1e-12);
        assert!((sc.ly_min - (-6.0 - 0.05 * 5.0)).abs() < 1e-12);

        // emitted polyline coordinates must follow the affine map
        let svg = render_chart(&curves, &refs, "t").unwrap();
        let poly = svg
            .lines()
            .find(|l| l.starts_with("<polyline"))
            .unwrap()
            .to_string();
        let pts = extract_attr(&poly, "points");
        let first = pts.split(' ').next().unwrap();
        let (px, py) = first.split_once(',').unwrap();
        let px: f64 = px.parse().unwrap();
        let py: f64 = py.parse().unwrap();
        assert!((px - sc.x_to_px(0.0)).abs() < 0.01);
        assert!((py - sc.mse_to_py(1e-1)).abs() < 0.01);
    }

    #[test]
    fn rejects_empty_and_nonpositive() {
        assert!(matches!(render_chart(&[], &[], "t"), Err(PlotError::Empty)));
        let bad = [curve("a", &[(0.0, 0.0)])];
        assert!(matches!(
            render_chart(&bad, &[], "t"),
            Err(PlotError::NonPositive { .. })
        ));
    }

    #[test]
    fn deterministic_output() {
        let c = [curve("a", &[(0.0, 1e-2), (50.0, 1e-4)])];
        let r = [RefLine {
            label: "x".into(),
            value: 3e-4,
        }];
        assert_eq!(
            render_chart(&c, &r, "same").unwrap(),
            render_chart(&c, &r, "same").unwrap()
        );
    }
}
