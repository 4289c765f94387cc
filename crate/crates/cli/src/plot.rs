//! Hand-written SVG of a built field: level curves at `j +/- 1/3`,
//! saddle separatrices and labelled fixed points, one panel per chart.

use std::fmt::Write as _;
use std::path::Path;

use energyforge::energy::{self, level_sets, EnergyField, FixedPointValue};
use energyforge::fixed_points::PointKind;
use energyforge::ChartPoint;
use serde::{Deserialize, Serialize};

pub const SEPARATRIX_FILE: &str = "separatrices.json";

const PANEL: f64 = 420.0;
const MARGIN: f64 = 30.0;
const LEGEND_W: f64 = 190.0;
const TITLE_H: f64 = 30.0;

/// One traced branch of a saddle's stable or unstable set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Separatrix {
    pub owner: usize,
    pub stable: bool,
    pub limit: Option<usize>,
    pub points: Vec<ChartPoint>,
}

/// Read whatever artifacts `dir` holds and draw them. A missing or empty
/// field gives an empty canvas with the legend.
pub fn render_dir(dir: &Path) -> String {
    let field = energy::read_field(dir).ok().filter(|f| !f.grid.is_empty());
    let seps: Vec<Separatrix> = std::fs::read_to_string(dir.join(SEPARATRIX_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    render(field.as_ref(), &seps)
}

/// Blue at the bottom level through red at the top.
fn level_color(level: f64, k: usize) -> String {
    let t = if k > 1 { ((level - 1.0) / (k as f64 - 1.0)).clamp(0.0, 1.0) } else { 0.5 };
    let r = (40.0 + 200.0 * t).round() as u8;
    let g = (90.0 + 60.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
    let b = (220.0 - 190.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn kind_color(kind: PointKind) -> &'static str {
    match kind {
        PointKind::Sink => "#1f4fbf",
        PointKind::Saddle => "#2a9d3a",
        PointKind::Source => "#c0392b",
    }
}

struct Panel {
    chart: u8,
    left: f64,
    top: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Panel {
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let u = (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]);
        let v = (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]);
        (self.left + u * PANEL, self.top + (1.0 - v) * PANEL)
    }

    fn width(&self) -> f64 {
        (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1])
    }
}

fn path_data(points: &[(f64, f64)]) -> String {
    let mut d = String::new();
    for (k, (x, y)) in points.iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2}", if k == 0 { "M" } else { " L" });
    }
    d
}

fn legend(svg: &mut String, x: f64, levels: &[f64], k: usize) {
    let mut y = TITLE_H + 20.0;
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="12"><text x="{x:.2}" y="{y:.2}" font-weight="bold">legend</text>"#);
    y += 18.0;
    for kind in [PointKind::Sink, PointKind::Saddle, PointKind::Source] {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 6.0,
            y - 4.0,
            kind_color(kind),
            x + 18.0,
            y,
            kind.name()
        );
        y += 18.0;
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/><text x="{:.2}" y="{y:.2}">separatrix</text>"##,
        y - 4.0,
        x + 14.0,
        y - 4.0,
        x + 18.0
    );
    y += 18.0;
    for &l in levels {
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{y:.2}">phi = {l:.3}</text>"#,
            y - 4.0,
            x + 14.0,
            y - 4.0,
            level_color(l, k),
            x + 18.0
        );
        y += 16.0;
    }
    svg.push_str("</g>\n");
}

fn fixed_point_marks(svg: &mut String, panel: &Panel, field: &EnergyField, fp: &FixedPointValue, y_of: impl Fn(&FixedPointValue) -> f64) {
    let m = field.grid.manifold;
    let p = m.to_chart(&fp.location, panel.chart);
    if !p.coords.iter().all(|c| c.is_finite()) {
        return;
    }
    let inside = (0..2).all(|i| p.coords[i] >= panel.lo[i] - 1e-9 && p.coords[i] <= panel.hi[i] + 1e-9);
    if !inside && field.grid.lattice.ny > 1 {
        return;
    }
    let (x, y) = panel.map([p.coords[0], y_of(fp)]);
    let _ = writeln!(
        svg,
        r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}" stroke="white"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">p{} (index {})</text>"#,
        kind_color(fp.kind),
        x + 7.0,
        y - 7.0,
        fp.position,
        fp.index
    );
}

fn render_circle(svg: &mut String, panel: &Panel, field: &EnergyField, levels: &[f64]) {
    let l = &field.grid.lattice;
    let mut pts: Vec<(f64, f64)> = (0..l.nx).map(|ix| panel.map([l.coords(ix, 0)[0], field.values[ix]])).collect();
    pts.push(panel.map([1.0, field.values[0]]));
    for &lv in levels {
        let (x0, y) = panel.map([0.0, lv]);
        let (x1, _) = panel.map([1.0, lv]);
        let _ = writeln!(
            svg,
            r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="{}" stroke-dasharray="6 4"/>"#,
            level_color(lv, field.k)
        );
    }
    let _ = writeln!(svg, r##"<path d="{}" fill="none" stroke="#222" stroke-width="1.5"/>"##, path_data(&pts));
    for fp in &field.fixed_points {
        fixed_point_marks(svg, panel, field, fp, |fp| fp.value.unwrap_or(fp.position as f64));
    }
}

fn render_chart(svg: &mut String, panel: &Panel, field: &EnergyField, sets: &[energy::LevelSet], seps: &[Separatrix]) {
    let m = field.grid.manifold;
    // unwrapped contours on the torus also need their translates
    let shifts: Vec<[f64; 2]> = if field.grid.lattice.periodic {
        (-1..=1).flat_map(|a| (-1..=1).map(move |b| [a as f64, b as f64])).collect()
    } else {
        vec![[0.0, 0.0]]
    };
    let _ = writeln!(svg, r#"<g clip-path="url(#clip{})">"#, panel.chart);
    for set in sets {
        let color = level_color(set.level, field.k);
        for line in set.lines.iter().filter(|l| l.chart == panel.chart) {
            for s in &shifts {
                let inside = line
                    .points
                    .iter()
                    .any(|p| (0..2).all(|i| p[i] + s[i] >= panel.lo[i] && p[i] + s[i] <= panel.hi[i]));
                if !inside {
                    continue;
                }
                let pts: Vec<(f64, f64)> = line.points.iter().map(|p| panel.map([p[0] + s[0], p[1] + s[1]])).collect();
                let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#, path_data(&pts));
            }
        }
    }
    for s in seps {
        // break the polyline at seams and chart changes
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        let mut last: Option<[f64; 2]> = None;
        for p in &s.points {
            let q = m.to_chart(p, panel.chart).coords;
            let jump = last.is_some_and(|l| (q[0] - l[0]).hypot(q[1] - l[1]) > 0.5 * panel.width());
            if !q.iter().all(|c| c.is_finite()) || jump {
                runs.push(Vec::new());
            }
            if q.iter().all(|c| c.is_finite()) {
                runs.last_mut().unwrap().push(panel.map(q));
                last = Some(q);
            } else {
                last = None;
            }
        }
        let dash = if s.stable { "4 3" } else { "1 0" };
        for run in runs.iter().filter(|r| r.len() > 1) {
            let _ = writeln!(
                svg,
                r##"<path d="{}" fill="none" stroke="#555" stroke-width="1" stroke-dasharray="{dash}"/>"##,
                path_data(run)
            );
        }
    }
    svg.push_str("</g>\n");
    for fp in &field.fixed_points {
        fixed_point_marks(svg, panel, field, fp, |fp| m.to_chart(&fp.location, panel.chart).coords[1]);
    }
}

pub fn render(field: Option<&EnergyField>, seps: &[Separatrix]) -> String {
    let sets = field.map(level_sets).unwrap_or_default();
    let levels: Vec<f64> = sets.iter().map(|s| s.level).collect();
    let k = field.map_or(1, |f| f.k);
    let charts = field.map_or(1, |f| f.grid.lattice.charts);
    let width = MARGIN + charts as f64 * (PANEL + MARGIN) + LEGEND_W;
    let height = TITLE_H + PANEL + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let title = match field {
        Some(f) => format!("{} on the {}, k = {}", f.field, f.grid.manifold.kind.name(), f.k),
        None => "no energy field".to_string(),
    };
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN:.2}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
    );
    let panels: Vec<Panel> = (0..charts)
        .map(|c| {
            let (lo, hi) = match field {
                Some(f) if f.grid.lattice.is_1d() => ([0.0, 1.0 - 0.1], [1.0, f.k as f64 + 0.1]),
                Some(f) if f.grid.lattice.periodic => ([0.0, 0.0], [1.0, 1.0]),
                Some(f) => {
                    let l = &f.grid.lattice;
                    let span = l.spacing * (l.nx - 1) as f64;
                    (l.origin, [l.origin[0] + span, l.origin[1] + span])
                }
                None => ([0.0, 0.0], [1.0, 1.0]),
            };
            Panel {
                chart: c as u8,
                left: MARGIN + c as f64 * (PANEL + MARGIN),
                top: TITLE_H + MARGIN,
                lo,
                hi,
            }
        })
        .collect();
    svg.push_str("<defs>\n");
    for p in &panels {
        let _ = writeln!(
            svg,
            r#"<clipPath id="clip{}"><rect x="{:.2}" y="{:.2}" width="{PANEL:.2}" height="{PANEL:.2}"/></clipPath>"#,
            p.chart, p.left, p.top
        );
    }
    svg.push_str("</defs>\n");
    for p in &panels {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{PANEL:.2}" height="{PANEL:.2}" fill="none" stroke="#999"/>"##,
            p.left, p.top
        );
        if let Some(f) = field {
            if charts > 1 {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{} chart</text>"#,
                    p.left,
                    p.top - 6.0,
                    f.grid.manifold.chart_names()[p.chart as usize]
                );
            }
            if f.grid.lattice.is_1d() {
                render_circle(&mut svg, p, f, &levels);
            } else {
                render_chart(&mut svg, p, f, &sets, seps);
            }
        }
    }
    legend(&mut svg, MARGIN + charts as f64 * (PANEL + MARGIN), &levels, k);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_canvas_keeps_the_legend() {
        let svg = render(None, &[]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("legend"));
        assert!(svg.contains("no energy field"));
        assert!(!svg.contains("<path"));
    }

    #[test]
    fn level_colors_run_from_blue_to_red() {
        assert_eq!(level_color(1.0, 4), "#285adc");
        assert_eq!(level_color(4.0, 4), "#f05a1e");
    }
}
