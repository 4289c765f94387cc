//! Level curves of grid values by marching squares (points in one
//! dimension), linked into polylines and indexed for nearest-point queries.

use std::collections::HashMap;

use serde::Serialize;

use crate::flow::{ChartPoint, ManifoldKind, ManifoldSpec};
use crate::grid::Lattice;

#[derive(Debug, Clone, Serialize)]
pub struct Polyline {
    pub chart: u8,
    /// Vertices; unwrapped across periodic seams. A closed line repeats its
    /// first vertex at the end.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    /// Cumulative arclength at each vertex.
    #[serde(skip)]
    pub cum: Vec<f64>,
    /// Lattice cell that produced each segment.
    #[serde(skip)]
    cells: Vec<(usize, usize)>,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = if self.closed && self.points.len() > 1 { self.points.len() - 1 } else { self.points.len() };
        let mut c = [0.0, 0.0];
        for p in &self.points[..n] {
            c[0] += p[0] / n as f64;
            c[1] += p[1] / n as f64;
        }
        c
    }

    fn with_arclength(mut self) -> Self {
        let mut cum = Vec::with_capacity(self.points.len());
        let mut s = 0.0;
        for (k, p) in self.points.iter().enumerate() {
            if k > 0 {
                let q = self.points[k - 1];
                s += (p[0] - q[0]).hypot(p[1] - q[1]);
            }
            cum.push(s);
        }
        self.cum = cum;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct EdgeKey {
    chart: u8,
    vertical: bool,
    i: usize,
    j: usize,
}

/// Raw level lines of `values` at `level` on a lattice. NaN nodes, and the
/// outside of a non-periodic lattice, count as lying above the level.
pub fn level_lines(lattice: &Lattice, values: &[f64], level: f64) -> Vec<Polyline> {
    if lattice.periodic || lattice.is_1d() {
        return march(lattice, values, level);
    }
    let h = lattice.spacing;
    let padded = Lattice {
        nx: lattice.nx + 2,
        ny: lattice.ny + 2,
        origin: [lattice.origin[0] - h, lattice.origin[1] - h],
        ..*lattice
    };
    let mut v = vec![f64::NAN; padded.len()];
    for chart in 0..lattice.charts {
        for iy in 0..lattice.ny {
            for ix in 0..lattice.nx {
                v[padded.index(chart, ix + 1, iy + 1)] = values[lattice.index(chart, ix, iy)];
            }
        }
    }
    let (cx, cy) = lattice.cells();
    let mut lines = march(&padded, &v, level);
    for l in &mut lines {
        for c in &mut l.cells {
            *c = (c.0.saturating_sub(1).min(cx - 1), c.1.saturating_sub(1).min(cy - 1));
        }
    }
    lines
}

fn march(lattice: &Lattice, values: &[f64], level: f64) -> Vec<Polyline> {
    let val = |idx: usize| {
        let v = values[idx];
        if v.is_nan() {
            level + 1.0
        } else {
            v
        }
    };
    if lattice.is_1d() {
        return level_points(lattice, &val, level);
    }
    let mut points: HashMap<EdgeKey, [f64; 2]> = HashMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey, (usize, usize))> = Vec::new();
    let (cx, cy) = lattice.cells();
    let h = lattice.spacing;
    for chart in 0..lattice.charts {
        for j in 0..cy {
            for i in 0..cx {
                let i1 = lattice.wrap_x(i as i64 + 1).unwrap();
                let j1 = lattice.wrap_y(j as i64 + 1).unwrap();
                let v = [
                    val(lattice.index(chart, i, j)),
                    val(lattice.index(chart, i1, j)),
                    val(lattice.index(chart, i1, j1)),
                    val(lattice.index(chart, i, j1)),
                ];
                let inside: Vec<bool> = v.iter().map(|&x| x < level).collect();
                let bottom = EdgeKey { chart: chart as u8, vertical: false, i, j };
                let right = EdgeKey { chart: chart as u8, vertical: true, i: i1, j };
                let top = EdgeKey { chart: chart as u8, vertical: false, i, j: j1 };
                let left = EdgeKey { chart: chart as u8, vertical: true, i, j };
                // (edge, corner a, corner b)
                let edges = [(bottom, 0, 1), (right, 1, 2), (top, 3, 2), (left, 0, 3)];
                let mut crossing = Vec::with_capacity(4);
                for &(key, a, b) in &edges {
                    if inside[a] != inside[b] {
                        let t = (level - v[a]) / (v[b] - v[a]);
                        let base = lattice.coords(key.i, key.j);
                        let p = if key.vertical { [base[0], base[1] + t * h] } else { [base[0] + t * h, base[1]] };
                        points.entry(key).or_insert(p);
                        crossing.push(key);
                    }
                }
                match crossing.len() {
                    2 => segments.push((crossing[0], crossing[1], (i, j))),
                    4 => {
                        let centre = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                        if (centre < level) == inside[0] {
                            // corners 0 and 2 joined through the centre
                            segments.push((bottom, right, (i, j)));
                            segments.push((top, left, (i, j)));
                        } else {
                            segments.push((left, bottom, (i, j)));
                            segments.push((right, top, (i, j)));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    link(lattice, &points, &segments)
}

fn level_points(lattice: &Lattice, val: &dyn Fn(usize) -> f64, level: f64) -> Vec<Polyline> {
    let (cx, _) = lattice.cells();
    let mut out = Vec::new();
    for i in 0..cx {
        let i1 = lattice.wrap_x(i as i64 + 1).unwrap();
        let (a, b) = (val(i), val(i1));
        if (a < level) != (b < level) {
            let t = (level - a) / (b - a);
            let x = lattice.origin[0] + (i as f64 + t) * lattice.spacing;
            out.push(Polyline {
                chart: 0,
                points: vec![[x, 0.0]],
                closed: true,
                cum: vec![0.0],
                cells: vec![(i, 0)],
            });
        }
    }
    out
}

fn link(
    lattice: &Lattice,
    points: &HashMap<EdgeKey, [f64; 2]>,
    segments: &[(EdgeKey, EdgeKey, (usize, usize))],
) -> Vec<Polyline> {
    let mut at: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        at.entry(seg.0).or_default().push(s);
        at.entry(seg.1).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let period = lattice.nx as f64 * lattice.spacing;
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b, cell) = segments[start];
        let mut keys = vec![a, b];
        let mut cells = vec![cell];
        let mut closed = false;
        // walk forward from b
        loop {
            let last = *keys.last().unwrap();
            let next = at[&last].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (p, q, c) = segments[s];
            let other = if p == last { q } else { p };
            cells.push(c);
            keys.push(other);
            if other == keys[0] {
                closed = true;
                break;
            }
        }
        if !closed {
            // walk backward from a
            loop {
                let first = keys[0];
                let next = at[&first].iter().copied().find(|&s| !used[s]);
                let Some(s) = next else { break };
                used[s] = true;
                let (p, q, c) = segments[s];
                let other = if p == first { q } else { p };
                cells.insert(0, c);
                keys.insert(0, other);
            }
        }
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(keys.len());
        for k in &keys {
            let mut p = points[k];
            if lattice.periodic {
                if let Some(prev) = pts.last() {
                    for d in 0..2 {
                        p[d] -= ((p[d] - prev[d]) / period).round() * period;
                    }
                }
            }
            pts.push(p);
        }
        lines.push(
            Polyline {
                chart: keys[0].chart,
                points: pts,
                closed,
                cum: Vec::new(),
                cells,
            }
            .with_arclength(),
        );
    }
    lines
}

/// Where a point projects onto a contour set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub line: usize,
    /// Arclength position along the line.
    pub s: f64,
    pub distance: f64,
}

/// Closed level curves of a manifold grid function, one per boundary
/// component, with a spatial index.
#[derive(Debug, Clone, Serialize)]
pub struct ContourSet {
    pub level: f64,
    pub lines: Vec<Polyline>,
    /// Open or duplicate lines that were dropped.
    pub dropped: usize,
    #[serde(skip)]
    lattice: Lattice,
    #[serde(skip)]
    manifold: ManifoldSpec,
    #[serde(skip)]
    buckets: HashMap<(u8, usize, usize), Vec<(u32, u32)>>,
}

impl ContourSet {
    pub fn extract(manifold: ManifoldSpec, lattice: &Lattice, values: &[f64], level: f64) -> Self {
        let raw = level_lines(lattice, values, level);
        let total = raw.len();
        let lines: Vec<Polyline> = raw
            .into_iter()
            .filter(|l| l.closed)
            .filter(|l| match manifold.kind {
                // each sphere curve is kept from the chart owning its centroid
                ManifoldKind::Sphere => {
                    let c = l.centroid();
                    c[0].hypot(c[1]) <= 1.0
                }
                _ => true,
            })
            .collect();
        let dropped = total - lines.len();
        let mut buckets: HashMap<(u8, usize, usize), Vec<(u32, u32)>> = HashMap::new();
        for (li, l) in lines.iter().enumerate() {
            for (k, &(i, j)) in l.cells.iter().enumerate() {
                buckets.entry((l.chart, i, j)).or_default().push((li as u32, k as u32));
            }
        }
        ContourSet {
            level,
            lines,
            dropped,
            lattice: *lattice,
            manifold,
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Chart point of a vertex.
    pub fn vertex(&self, line: usize, k: usize) -> ChartPoint {
        let l = &self.lines[line];
        self.manifold.normalize(&ChartPoint::new(l.chart, l.points[k]))
    }

    /// Point at arclength `s` (taken modulo the length of a closed line).
    pub fn at_arclength(&self, line: usize, s: f64) -> ChartPoint {
        let l = &self.lines[line];
        if l.points.len() == 1 {
            return self.vertex(line, 0);
        }
        let len = l.length();
        let s = if l.closed && len > 0.0 { s.rem_euclid(len) } else { s.clamp(0.0, len) };
        let k = match l.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(l.points.len() - 2),
            Err(k) => k.saturating_sub(1).min(l.points.len() - 2),
        };
        let seg = l.cum[k + 1] - l.cum[k];
        let t = if seg > 0.0 { (s - l.cum[k]) / seg } else { 0.0 };
        let (a, b) = (l.points[k], l.points[k + 1]);
        self.manifold
            .normalize(&ChartPoint::new(l.chart, [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]))
    }

    /// Nearest line and arclength for `p`.
    pub fn locate(&self, p: &ChartPoint) -> Option<Located> {
        if self.lattice.is_1d() {
            return self
                .lines
                .iter()
                .enumerate()
                .map(|(li, l)| Located {
                    line: li,
                    s: 0.0,
                    distance: self.manifold.distance(p, &ChartPoint::new(0, l.points[0])),
                })
                .min_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
        }
        for reach in [1i64, 3] {
            let mut best: Option<Located> = None;
            for chart in 0..self.lattice.charts as u8 {
                let mut q = self.manifold.to_chart(p, chart);
                if self.lattice.periodic {
                    q = self.manifold.normalize(&q);
                }
                if !(q.coords[0].is_finite() && q.coords[1].is_finite()) {
                    continue;
                }
                let h = self.lattice.spacing;
                let ci = ((q.coords[0] - self.lattice.origin[0]) / h).floor() as i64;
                let cj = ((q.coords[1] - self.lattice.origin[1]) / h).floor() as i64;
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (Some(i), Some(j)) = (self.lattice.wrap_x(ci + di), self.lattice.wrap_y(cj + dj)) else {
                            continue;
                        };
                        let Some(list) = self.buckets.get(&(chart, i, j)) else { continue };
                        for &(li, k) in list {
                            let cand = self.project(li as usize, k as usize, q.coords);
                            if best.is_none_or(|b| cand.distance < b.distance) {
                                best = Some(cand);
                            }
                        }
                    }
                }
            }
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn project(&self, line: usize, k: usize, q: [f64; 2]) -> Located {
        let l = &self.lines[line];
        let (a, b) = (l.points[k], l.points[k + 1]);
        let mut d = [q[0] - a[0], q[1] - a[1]];
        if self.lattice.periodic {
            let period = self.lattice.nx as f64 * self.lattice.spacing;
            for x in &mut d {
                *x -= (*x / period).round() * period;
            }
        }
        let e = [b[0] - a[0], b[1] - a[1]];
        let ee = e[0] * e[0] + e[1] * e[1];
        let t = if ee > 0.0 { ((d[0] * e[0] + d[1] * e[1]) / ee).clamp(0.0, 1.0) } else { 0.0 };
        let r = [d[0] - t * e[0], d[1] - t * e[1]];
        Located {
            line,
            s: l.cum[k] + t * ee.sqrt(),
            distance: r[0].hypot(r[1]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn circle_level_set_of_radial_function() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::PlaneDisk { radius: 1.0 }), 64);
        let v: Vec<f64> = (0..g.len()).map(|i| g.point(i).norm()).collect();
        let set = ContourSet::extract(g.manifold, &g.lattice, &v, 0.5);
        assert_eq!(set.len(), 1);
        let l = &set.lines[0];
        assert!(l.closed);
        assert!((l.length() - std::f64::consts::PI).abs() < 1e-2);
        for p in &l.points {
            assert!((p[0].hypot(p[1]) - 0.5).abs() < 2e-3);
        }
        let hit = set.locate(&ChartPoint::plane(0.0, 0.52)).unwrap();
        assert!((hit.distance - 0.02).abs() < 3e-3);
        let back = set.at_arclength(0, hit.s);
        assert!((back.coords[0] - 0.0).abs() < 5e-3 && (back.coords[1] - 0.5).abs() < 5e-3);
    }

    #[test]
    fn torus_band_boundaries_wrap() {
        // f = cos(2 pi y): {f < 0} is a horizontal band with two boundary circles
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 32);
        let v: Vec<f64> = (0..g.len())
            .map(|i| (std::f64::consts::TAU * g.point(i).coords[1]).cos())
            .collect();
        let set = ContourSet::extract(g.manifold, &g.lattice, &v, 0.0);
        assert_eq!(set.len(), 2);
        for l in &set.lines {
            assert!(l.closed);
            assert!((l.length() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_disks_give_two_lines() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 64);
        let v: Vec<f64> = (0..g.len())
            .map(|i| {
                let p = g.point(i);
                let d1 = g.manifold.distance(&p, &ChartPoint::plane(0.25, 0.25));
                let d2 = g.manifold.distance(&p, &ChartPoint::plane(0.75, 0.75));
                d1.min(d2)
            })
            .collect();
        let set = ContourSet::extract(g.manifold, &g.lattice, &v, 0.1);
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn circle_points() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Circle), 16);
        let v: Vec<f64> = (0..g.len())
            .map(|i| -(std::f64::consts::TAU * g.point(i).coords[0]).cos())
            .collect();
        let set = ContourSet::extract(g.manifold, &g.lattice, &v, 0.0);
        assert_eq!(set.len(), 2);
        let xs: Vec<f64> = set.lines.iter().map(|l| l.points[0][0]).collect();
        assert!((xs[0] - 0.25).abs() < 1e-2 && (xs[1] - 0.75).abs() < 1e-2);
    }

    #[test]
    fn nan_counts_as_outside() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 16);
        let v: Vec<f64> = (0..g.len())
            .map(|i| {
                let d = g.manifold.distance(&g.point(i), &ChartPoint::plane(0.5, 0.5));
                if d < 0.3 {
                    d
                } else {
                    f64::NAN
                }
            })
            .collect();
        let set = ContourSet::extract(g.manifold, &g.lattice, &v, 0.2);
        assert_eq!(set.len(), 1);
    }
}
