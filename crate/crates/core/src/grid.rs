//! Sampling grids on each chart and interpolation of grid values.

use serde::{Deserialize, Serialize};

use crate::flow::{ChartPoint, ManifoldKind, ManifoldSpec};

/// Half-width of the square each sphere chart grid covers.
pub const SPHERE_GRID_HALF_WIDTH: f64 = 1.25;

/// Regular lattice of nodes, repeated per chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub charts: usize,
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub spacing: f64,
    /// Indices wrap in both directions (circle, torus).
    pub periodic: bool,
}

impl Lattice {
    pub fn per_chart(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len(&self) -> usize {
        self.charts * self.per_chart()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, chart: usize, ix: usize, iy: usize) -> usize {
        chart * self.per_chart() + iy * self.nx + ix
    }

    /// (chart, ix, iy) of a node.
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let chart = idx / self.per_chart();
        let r = idx % self.per_chart();
        (chart, r % self.nx, r / self.nx)
    }

    pub fn coords(&self, ix: usize, iy: usize) -> [f64; 2] {
        let y = if self.ny == 1 { 0.0 } else { self.origin[1] + iy as f64 * self.spacing };
        [self.origin[0] + ix as f64 * self.spacing, y]
    }

    pub fn is_1d(&self) -> bool {
        self.ny == 1
    }

    /// Cells per chart along x and y.
    pub fn cells(&self) -> (usize, usize) {
        if self.periodic {
            (self.nx, self.ny)
        } else {
            (self.nx - 1, self.ny.saturating_sub(1).max(1))
        }
    }

    /// Wrap or reject a signed node index along x.
    pub fn wrap_x(&self, i: i64) -> Option<usize> {
        wrap(i, self.nx, self.periodic)
    }

    pub fn wrap_y(&self, j: i64) -> Option<usize> {
        wrap(j, self.ny, self.periodic)
    }

    /// Value at chart coordinates by (bi)linear interpolation; `None` outside
    /// the lattice or next to a NaN node.
    pub fn interpolate_in(&self, values: &[f64], chart: usize, c: [f64; 2]) -> Option<f64> {
        let fx = (c[0] - self.origin[0]) / self.spacing;
        let (i0, tx) = self.cell_coord(fx, self.nx)?;
        let base = chart * self.per_chart();
        if self.is_1d() {
            let i1 = self.wrap_x(i0 as i64 + 1)?;
            let (a, b) = (values[base + i0], values[base + i1]);
            let v = a + tx * (b - a);
            return v.is_finite().then_some(v);
        }
        let fy = (c[1] - self.origin[1]) / self.spacing;
        let (j0, ty) = self.cell_coord(fy, self.ny)?;
        let i1 = self.wrap_x(i0 as i64 + 1)?;
        let j1 = self.wrap_y(j0 as i64 + 1)?;
        let v00 = values[base + j0 * self.nx + i0];
        let v10 = values[base + j0 * self.nx + i1];
        let v01 = values[base + j1 * self.nx + i0];
        let v11 = values[base + j1 * self.nx + i1];
        let v = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
        v.is_finite().then_some(v)
    }

    /// Cell index and fractional offset for a fractional node coordinate.
    fn cell_coord(&self, f: f64, n: usize) -> Option<(usize, f64)> {
        if !f.is_finite() {
            return None;
        }
        if self.periodic {
            let fl = f.floor();
            let t = f - fl;
            return Some(((fl as i64).rem_euclid(n as i64) as usize, t));
        }
        let last = (n - 1) as f64;
        if f < -1e-9 || f > last + 1e-9 {
            return None;
        }
        let f = f.clamp(0.0, last);
        let i = (f.floor() as usize).min(n - 2);
        Some((i, f - i as f64))
    }
}

fn wrap(i: i64, n: usize, periodic: bool) -> Option<usize> {
    if periodic {
        Some(i.rem_euclid(n as i64) as usize)
    } else if i < 0 || i >= n as i64 {
        None
    } else {
        Some(i as usize)
    }
}

/// Node grid covering a manifold: periodic on the circle and torus, one
/// square per sphere chart, the bounding square of a planar disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub manifold: ManifoldSpec,
    /// Cells per side.
    pub resolution: usize,
    pub lattice: Lattice,
}

impl Grid {
    pub fn new(manifold: ManifoldSpec, resolution: usize) -> Self {
        let n = resolution;
        let lattice = match manifold.kind {
            ManifoldKind::Circle => Lattice {
                charts: 1,
                nx: n,
                ny: 1,
                origin: [0.0, 0.0],
                spacing: 1.0 / n as f64,
                periodic: true,
            },
            ManifoldKind::Torus => Lattice {
                charts: 1,
                nx: n,
                ny: n,
                origin: [0.0, 0.0],
                spacing: 1.0 / n as f64,
                periodic: true,
            },
            ManifoldKind::Sphere => Lattice {
                charts: 2,
                nx: n + 1,
                ny: n + 1,
                origin: [-SPHERE_GRID_HALF_WIDTH, -SPHERE_GRID_HALF_WIDTH],
                spacing: 2.0 * SPHERE_GRID_HALF_WIDTH / n as f64,
                periodic: false,
            },
            ManifoldKind::PlaneDisk { radius } => Lattice {
                charts: 1,
                nx: n + 1,
                ny: n + 1,
                origin: [-radius, -radius],
                spacing: 2.0 * radius / n as f64,
                periodic: false,
            },
        };
        Grid {
            manifold,
            resolution,
            lattice,
        }
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Node spacing in chart coordinates.
    pub fn h(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn point(&self, idx: usize) -> ChartPoint {
        let (chart, ix, iy) = self.lattice.split(idx);
        ChartPoint::new(chart as u8, self.lattice.coords(ix, iy))
    }

    /// Nodes that lie on the manifold (planar nodes outside the disk do not).
    pub fn active(&self, idx: usize) -> bool {
        match self.manifold.kind {
            ManifoldKind::PlaneDisk { radius } => self.point(idx).norm() <= radius + 1e-12,
            _ => true,
        }
    }

    /// Interpolated value at `p`, read from the chart that owns it.
    pub fn interpolate(&self, values: &[f64], p: &ChartPoint) -> Option<f64> {
        let q = self.manifold.owning(p);
        self.lattice.interpolate_in(values, q.chart as usize, q.coords)
    }

    /// Pairs of nodes adjacent along a grid line (each pair once).
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let l = &self.lattice;
        let mut out = Vec::new();
        for chart in 0..l.charts {
            for iy in 0..l.ny {
                for ix in 0..l.nx {
                    let a = l.index(chart, ix, iy);
                    if let Some(jx) = l.wrap_x(ix as i64 + 1) {
                        if jx != ix {
                            out.push((a, l.index(chart, jx, iy)));
                        }
                    }
                    if !l.is_1d() {
                        if let Some(jy) = l.wrap_y(iy as i64 + 1) {
                            if jy != iy {
                                out.push((a, l.index(chart, ix, jy)));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Node whose position equals `p` up to `1e-9` of a spacing.
    pub fn node_at(&self, p: &ChartPoint) -> Option<usize> {
        let l = &self.lattice;
        let charts: Vec<ChartPoint> = (0..l.charts)
            .map(|c| self.manifold.to_chart(p, c as u8))
            .map(|q| if l.periodic { self.manifold.normalize(&q) } else { q })
            .collect();
        for q in charts {
            let fx = (q.coords[0] - l.origin[0]) / l.spacing;
            let fy = if l.is_1d() { 0.0 } else { (q.coords[1] - l.origin[1]) / l.spacing };
            let (rx, ry) = (fx.round(), fy.round());
            if !(fx.is_finite() && fy.is_finite()) || (fx - rx).abs() > 1e-9 || (fy - ry).abs() > 1e-9 {
                continue;
            }
            let ix = l.wrap_x(rx as i64);
            let iy = l.wrap_y(ry as i64);
            if let (Some(ix), Some(iy)) = (ix, iy) {
                return Some(l.index(q.chart as usize, ix, iy));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_nodes_and_cell_midpoints() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 4);
        let mut v = vec![0.0; g.len()];
        // corners of cell (0,0): (1,1,2,2) along y
        v[g.lattice.index(0, 0, 0)] = 1.0;
        v[g.lattice.index(0, 1, 0)] = 1.0;
        v[g.lattice.index(0, 0, 1)] = 2.0;
        v[g.lattice.index(0, 1, 1)] = 2.0;
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(0.125, 0.125)), Some(1.5));
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(0.25, 0.25)), Some(2.0));
        // wraps across the seam
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(1.0, 0.0)), Some(1.0));
    }

    #[test]
    fn nan_corner_blocks_interpolation() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::PlaneDisk { radius: 1.0 }), 4);
        let mut v = vec![1.0; g.len()];
        v[0] = f64::NAN;
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(-0.9, -0.9)), None);
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(0.1, 0.1)), Some(1.0));
        assert_eq!(g.interpolate(&v, &ChartPoint::plane(2.0, 0.1)), None);
    }

    #[test]
    fn sphere_nodes_and_lookup() {
        let g = Grid::new(ManifoldSpec::new(ManifoldKind::Sphere), 8);
        assert_eq!(g.len(), 2 * 81);
        let south = g.node_at(&ChartPoint::new(0, [0.0, 0.0])).unwrap();
        assert_eq!(g.point(south).coords, [0.0, 0.0]);
        let north = g.node_at(&ChartPoint::new(1, [0.0, 0.0])).unwrap();
        assert_eq!(g.point(north).chart, 1);
    }

    #[test]
    fn adjacency_counts() {
        let t = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 8);
        assert_eq!(t.adjacent_pairs().len(), 2 * 64);
        let c = Grid::new(ManifoldSpec::new(ManifoldKind::Circle), 8);
        assert_eq!(c.adjacent_pairs().len(), 8);
        let s = Grid::new(ManifoldSpec::new(ManifoldKind::Sphere), 4);
        assert_eq!(s.adjacent_pairs().len(), 2 * 2 * 4 * 5);
    }
}
