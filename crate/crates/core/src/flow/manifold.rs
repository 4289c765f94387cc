use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sphere charts switch once a point gets this far from the chart origin.
pub const SPHERE_SWITCH_RADIUS: f64 = 1.5;
/// Declared overlap annulus of the two stereographic charts.
pub const SPHERE_OVERLAP: (f64, f64) = (0.5, 2.0);
/// Largest radius a sphere chart accepts before reporting a domain exit.
pub const SPHERE_DOMAIN_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ManifoldKind {
    /// Unit circle, coordinate in [0,1).
    Circle,
    /// Periodic unit square.
    Torus,
    /// Two stereographic charts: chart 0 is centred on the south pole,
    /// chart 1 on the north pole, related by `w = u / |u|^2`.
    Sphere,
    /// Closed disk of the given radius; not a closed manifold.
    PlaneDisk { radius: f64 },
}

impl ManifoldKind {
    pub fn name(&self) -> &'static str {
        match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Torus => "torus",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::PlaneDisk { .. } => "plane-disk",
        }
    }
}

/// A point in one chart. One-dimensional manifolds only use `coords[0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: u8,
    pub coords: [f64; 2],
}

impl ChartPoint {
    pub fn new(chart: u8, coords: [f64; 2]) -> Self {
        ChartPoint { chart, coords }
    }

    pub fn on_line(x: f64) -> Self {
        ChartPoint::new(0, [x, 0.0])
    }

    pub fn plane(x: f64, y: f64) -> Self {
        ChartPoint::new(0, [x, y])
    }

    pub fn norm(&self) -> f64 {
        self.coords[0].hypot(self.coords[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
}

fn wrap01(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

fn wrap_half(d: f64) -> f64 {
    d - d.round()
}

fn invert(c: [f64; 2]) -> [f64; 2] {
    let r2 = c[0] * c[0] + c[1] * c[1];
    [c[0] / r2, c[1] / r2]
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind) -> Self {
        ManifoldSpec { kind }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            _ => 2,
        }
    }

    pub fn chart_count(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => 2,
            _ => 1,
        }
    }

    pub fn is_closed(&self) -> bool {
        !matches!(self.kind, ManifoldKind::PlaneDisk { .. })
    }

    pub fn chart_names(&self) -> &'static [&'static str] {
        match self.kind {
            ManifoldKind::Sphere => &["south", "north"],
            _ => &["main"],
        }
    }

    pub fn coord_names(&self) -> &'static [&'static str] {
        match self.kind {
            ManifoldKind::Circle => &["x"],
            _ => &["x", "y"],
        }
    }

    /// Euler characteristic of the manifold.
    pub fn euler_characteristic(&self) -> i64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => 0,
            ManifoldKind::Sphere => 2,
            ManifoldKind::PlaneDisk { .. } => 1,
        }
    }

    /// Express `p` in `chart`.
    pub fn to_chart(&self, p: &ChartPoint, chart: u8) -> ChartPoint {
        if p.chart == chart {
            return *p;
        }
        match self.kind {
            ManifoldKind::Sphere => ChartPoint::new(chart, invert(p.coords)),
            _ => *p,
        }
    }

    /// Canonical representative: wrapped into [0,1) on periodic charts,
    /// moved to the other sphere chart when far from the current origin.
    pub fn normalize(&self, p: &ChartPoint) -> ChartPoint {
        match self.kind {
            ManifoldKind::Circle => ChartPoint::new(0, [wrap01(p.coords[0]), 0.0]),
            ManifoldKind::Torus => ChartPoint::new(0, [wrap01(p.coords[0]), wrap01(p.coords[1])]),
            ManifoldKind::Sphere if p.norm() > SPHERE_SWITCH_RADIUS => {
                self.to_chart(p, 1 - p.chart)
            }
            _ => *p,
        }
    }

    /// The chart that owns `p` on the sphere (|u| <= 1); identity elsewhere.
    pub fn owning(&self, p: &ChartPoint) -> ChartPoint {
        match self.kind {
            ManifoldKind::Sphere if p.norm() > 1.0 => self.to_chart(p, 1 - p.chart),
            _ => self.normalize(p),
        }
    }

    pub fn in_domain(&self, p: &ChartPoint) -> bool {
        if !(p.coords[0].is_finite() && p.coords[1].is_finite()) {
            return false;
        }
        match self.kind {
            ManifoldKind::PlaneDisk { radius } => p.norm() <= radius,
            ManifoldKind::Sphere => p.norm() <= SPHERE_DOMAIN_RADIUS,
            _ => true,
        }
    }

    /// Embedding of a sphere point in R^3 (unit sphere).
    pub fn embed(&self, p: &ChartPoint) -> [f64; 3] {
        match self.kind {
            ManifoldKind::Sphere => {
                let [a, b] = p.coords;
                let r2 = a * a + b * b;
                let z = (r2 - 1.0) / (r2 + 1.0);
                let sign = if p.chart == 0 { 1.0 } else { -1.0 };
                [2.0 * a / (1.0 + r2), 2.0 * b / (1.0 + r2), sign * z]
            }
            _ => [p.coords[0], p.coords[1], 0.0],
        }
    }

    /// Metric distance: wrap-around on periodic charts, chordal on the sphere.
    pub fn distance(&self, a: &ChartPoint, b: &ChartPoint) -> f64 {
        match self.kind {
            ManifoldKind::Circle => wrap_half(a.coords[0] - b.coords[0]).abs(),
            ManifoldKind::Torus => {
                wrap_half(a.coords[0] - b.coords[0]).hypot(wrap_half(a.coords[1] - b.coords[1]))
            }
            ManifoldKind::Sphere => {
                let (p, q) = (self.embed(a), self.embed(b));
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            }
            ManifoldKind::PlaneDisk { .. } => {
                (a.coords[0] - b.coords[0]).hypot(a.coords[1] - b.coords[1])
            }
        }
    }

    /// Coordinate difference `to - from` expressed in `from`'s chart,
    /// using the shortest representative on periodic charts.
    pub fn delta(&self, from: &ChartPoint, to: &ChartPoint) -> [f64; 2] {
        let to = self.to_chart(to, from.chart);
        let d = [to.coords[0] - from.coords[0], to.coords[1] - from.coords[1]];
        match self.kind {
            ManifoldKind::Circle => [wrap_half(d[0]), 0.0],
            ManifoldKind::Torus => [wrap_half(d[0]), wrap_half(d[1])],
            _ => d,
        }
    }

    /// `p + d` in `p`'s chart, normalized.
    pub fn offset(&self, p: &ChartPoint, d: [f64; 2]) -> ChartPoint {
        let q = ChartPoint::new(p.chart, [p.coords[0] + d[0], p.coords[1] + d[1]]);
        self.normalize(&q)
    }

    /// Check that sphere chart transitions are mutually inverse on the
    /// overlap annulus. Returns the worst round-trip error.
    pub fn check_transitions(&self) -> Result<f64> {
        if !matches!(self.kind, ManifoldKind::Sphere) {
            return Ok(0.0);
        }
        let (r0, r1) = SPHERE_OVERLAP;
        let mut worst = 0.0f64;
        for i in 0..16 {
            let r = r0 + (r1 - r0) * i as f64 / 15.0;
            for k in 0..32 {
                let a = std::f64::consts::TAU * k as f64 / 32.0;
                for chart in 0..2u8 {
                    let p = ChartPoint::new(chart, [r * a.cos(), r * a.sin()]);
                    let back = self.to_chart(&self.to_chart(&p, 1 - chart), chart);
                    worst = worst.max((back.coords[0] - p.coords[0]).hypot(back.coords[1] - p.coords[1]));
                }
            }
        }
        if worst > 1e-10 {
            return Err(Error::Spec(format!("chart transition round trip error {worst:e}")));
        }
        Ok(worst)
    }

    /// Transform a tangent vector `v` at `p` into the chart of `q = to_chart(p)`.
    pub fn push_vector(&self, p: &ChartPoint, v: [f64; 2], chart: u8) -> [f64; 2] {
        if p.chart == chart || !matches!(self.kind, ManifoldKind::Sphere) {
            return v;
        }
        // Jacobian of w = u/|u|^2
        let [a, b] = p.coords;
        let r2 = a * a + b * b;
        let r4 = r2 * r2;
        let j00 = (b * b - a * a) / r4;
        let j01 = -2.0 * a * b / r4;
        let j11 = (a * a - b * b) / r4;
        [j00 * v[0] + j01 * v[1], j01 * v[0] + j11 * v[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_transitions_round_trip() {
        let m = ManifoldSpec::new(ManifoldKind::Sphere);
        assert!(m.check_transitions().unwrap() < 1e-12);
    }

    #[test]
    fn sphere_embedding_agrees_across_charts() {
        let m = ManifoldSpec::new(ManifoldKind::Sphere);
        let p = ChartPoint::new(0, [0.7, -0.4]);
        let q = m.to_chart(&p, 1);
        let (a, b) = (m.embed(&p), m.embed(&q));
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-14);
        }
        assert!(m.distance(&p, &q) < 1e-14);
        // chart origins are the poles
        let s = m.embed(&ChartPoint::new(0, [0.0, 0.0]));
        let n = m.embed(&ChartPoint::new(1, [0.0, 0.0]));
        assert_eq!(s[2], -1.0);
        assert_eq!(n[2], 1.0);
    }

    #[test]
    fn torus_wraps_and_measures_shortest_way() {
        let m = ManifoldSpec::new(ManifoldKind::Torus);
        let p = m.normalize(&ChartPoint::plane(1.25, -0.25));
        assert_eq!(p.coords, [0.25, 0.75]);
        let a = ChartPoint::plane(0.95, 0.5);
        let b = ChartPoint::plane(0.05, 0.5);
        assert!((m.distance(&a, &b) - 0.1).abs() < 1e-12);
        let d = m.delta(&a, &b);
        assert!((d[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn push_vector_matches_finite_difference() {
        let m = ManifoldSpec::new(ManifoldKind::Sphere);
        let p = ChartPoint::new(0, [0.8, 0.3]);
        let v = [0.2, -0.5];
        let eps = 1e-6;
        let q0 = m.to_chart(&p, 1);
        let q1 = m.to_chart(&ChartPoint::new(0, [0.8 + eps * v[0], 0.3 + eps * v[1]]), 1);
        let fd = [(q1.coords[0] - q0.coords[0]) / eps, (q1.coords[1] - q0.coords[1]) / eps];
        let pv = m.push_vector(&p, v, 1);
        assert!((fd[0] - pv[0]).abs() < 1e-5 && (fd[1] - pv[1]).abs() < 1e-5);
    }
}
