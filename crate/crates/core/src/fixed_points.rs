//! Fixed points: detection, hyperbolicity screening, eigenframe charts,
//! local Morse functions and invariant manifold traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::BoxCover;
use crate::error::{Error, Result};
use crate::flow::{ChartPoint, Direction, FlowSystem, ManifoldKind, TrajectorySegment};

pub const DEFAULT_HYPERBOLICITY_TOL: f64 = 1e-3;
/// Residual accepted for a refined zero.
pub const ZERO_TOL: f64 = 1e-10;
/// Zeros closer than this are the same point.
pub const MERGE_DIST: f64 = 1e-6;
/// Offset along eigen-directions where manifold branches start.
pub const BRANCH_OFFSET: f64 = 1e-4;
/// A branch stops once it is this close to another fixed point.
pub const BRANCH_CAPTURE: f64 = 1e-3;
pub const BRANCH_T_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Sink,
    Saddle,
    Source,
}

impl PointKind {
    pub fn of(index: usize, dim: usize) -> Self {
        if index == 0 {
            PointKind::Sink
        } else if index == dim {
            PointKind::Source
        } else {
            PointKind::Saddle
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PointKind::Sink => "sink",
            PointKind::Saddle => "saddle",
            PointKind::Source => "source",
        }
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn inverse(m: &Mat2, dim: usize) -> Option<Mat2> {
    if dim == 1 {
        return (m[0][0] != 0.0).then(|| [[1.0 / m[0][0], 0.0], [0.0, 1.0]]);
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// How the chart frame was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    Eigen,
    /// Defective or complex spectrum with a single invariant subspace;
    /// the identity frame is used.
    Orthogonal,
}

/// Affine chart `x = M (y - p)` with unstable coordinates first.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChartFrame {
    pub origin: ChartPoint,
    pub dim: usize,
    /// Maps chart displacements to frame coordinates.
    pub to_frame: Mat2,
    /// Columns are the frame axes in chart coordinates.
    pub axes: Mat2,
    pub kind: FrameKind,
}

impl ChartFrame {
    pub fn coords(&self, system: &FlowSystem, y: &ChartPoint) -> [f64; 2] {
        let d = system.manifold.delta(&self.origin, y);
        let x = mat_vec(&self.to_frame, d);
        if self.dim == 1 {
            [x[0], 0.0]
        } else {
            x
        }
    }

    pub fn point(&self, system: &FlowSystem, x: [f64; 2]) -> ChartPoint {
        let x = if self.dim == 1 { [x[0], 0.0] } else { x };
        let mut d = mat_vec(&self.axes, x);
        if self.dim == 1 {
            d[1] = 0.0;
        }
        system.manifold.offset(&self.origin, d)
    }

    /// Chart-space length of the longest unit frame vector (Frobenius bound).
    fn stretch(&self) -> f64 {
        let mut s = 0.0;
        for c in 0..self.dim {
            for r in 0..self.dim {
                s += self.axes[r][c] * self.axes[r][c];
            }
        }
        s.sqrt().max(1e-300)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointRecord {
    pub id: usize,
    pub location: ChartPoint,
    pub dim: usize,
    pub index: usize,
    pub kind: PointKind,
    pub linearization: Mat2,
    /// (real, imaginary) parts, unstable first.
    pub eigenvalues: Vec<(f64, f64)>,
    pub frame: ChartFrame,
    /// Radius of the frame-coordinate ball where the chart is valid.
    pub radius: f64,
}

impl FixedPointRecord {
    pub fn local_morse(&self, c: f64) -> LocalMorseChart {
        LocalMorseChart {
            owner: self.id,
            c,
            index: self.index,
            dim: self.dim,
            frame: self.frame,
            radius: self.radius,
            scale: 1.0,
        }
    }

    /// Frame coordinates of `y`.
    pub fn coords(&self, system: &FlowSystem, y: &ChartPoint) -> [f64; 2] {
        self.frame.coords(system, y)
    }

    pub fn point(&self, system: &FlowSystem, x: [f64; 2]) -> ChartPoint {
        self.frame.point(system, x)
    }

    pub fn min_abs_real(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.0.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// `phi(y) = c - sum_{i<=index} x_i^2 + sum_{i>index} x_i^2` where
/// `x = xi / scale` and `xi` are frame coordinates of `y`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalMorseChart {
    pub owner: usize,
    pub c: f64,
    pub index: usize,
    pub dim: usize,
    pub frame: ChartFrame,
    /// Frame-coordinate radius of the ball where the chart is valid.
    pub radius: f64,
    pub scale: f64,
}

impl LocalMorseChart {
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn eval_coords(&self, x: [f64; 2]) -> f64 {
        let mut v = self.c;
        for (i, xi) in x.iter().take(self.dim).enumerate() {
            if i < self.index {
                v -= xi * xi;
            } else {
                v += xi * xi;
            }
        }
        v
    }

    /// Scaled coordinates of `y`, if it lies in the chart ball.
    pub fn coords(&self, system: &FlowSystem, y: &ChartPoint) -> Option<[f64; 2]> {
        let xi = self.frame.coords(system, y);
        (xi[0].hypot(xi[1]) <= self.radius).then(|| [xi[0] / self.scale, xi[1] / self.scale])
    }

    /// Chart point with scaled coordinates `x`.
    pub fn point(&self, system: &FlowSystem, x: [f64; 2]) -> ChartPoint {
        self.frame.point(system, [x[0] * self.scale, x[1] * self.scale])
    }

    pub fn eval(&self, system: &FlowSystem, y: &ChartPoint) -> Result<f64> {
        self.coords(system, y)
            .map(|x| self.eval_coords(x))
            .ok_or(Error::OutsideChart(*y))
    }

    /// Value if `y` is in the chart ball.
    pub fn try_eval(&self, system: &FlowSystem, y: &ChartPoint) -> Option<f64> {
        self.coords(system, y).map(|x| self.eval_coords(x))
    }

    /// Derivative of the chart function along the field at `y`.
    pub fn rate(&self, system: &FlowSystem, y: &ChartPoint) -> Option<f64> {
        let x = self.coords(system, y)?;
        let v = system.velocity(&system.manifold.normalize(y));
        let v = system.manifold.push_vector(y, v, self.frame.origin.chart);
        let dv = mat_vec(&self.frame.to_frame, v);
        let mut r = 0.0;
        for i in 0..self.dim {
            let sign = if i < self.index { -1.0 } else { 1.0 };
            r += sign * 2.0 * x[i] * dv[i] / self.scale;
        }
        Some(r)
    }
}

fn field_norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Central-difference Jacobian in chart coordinates.
pub fn jacobian(system: &FlowSystem, p: &ChartPoint, h: f64) -> Mat2 {
    let dim = system.dim();
    let mut j = [[0.0; 2]; 2];
    for c in 0..dim {
        let mut a = *p;
        let mut b = *p;
        a.coords[c] += h;
        b.coords[c] -= h;
        let (fa, fb) = (system.velocity(&a), system.velocity(&b));
        for r in 0..dim {
            j[r][c] = (fa[r] - fb[r]) / (2.0 * h);
        }
    }
    if dim == 1 {
        j[1][1] = 1.0;
    }
    j
}

/// Damped Newton iteration in the chart of `start`.
fn refine_zero(system: &FlowSystem, start: ChartPoint) -> Option<ChartPoint> {
    let dim = system.dim();
    let mut p = start;
    let mut v = system.velocity(&p);
    let mut r = field_norm(v);
    for _ in 0..80 {
        if r <= 1e-14 {
            break;
        }
        let j = jacobian(system, &p, 1e-7);
        let jinv = inverse(&j, dim)?;
        let mut step = mat_vec(&jinv, v);
        if dim == 1 {
            step[1] = 0.0;
        }
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let q = ChartPoint::new(p.chart, [p.coords[0] - alpha * step[0], p.coords[1] - alpha * step[1]]);
            let vq = system.velocity(&q);
            let rq = field_norm(vq);
            if rq.is_finite() && rq < r {
                p = q;
                v = vq;
                r = rq;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (r <= ZERO_TOL).then_some(p)
}

fn spectrum(a: &Mat2, dim: usize) -> Vec<(f64, f64)> {
    if dim == 1 {
        return vec![(a[0][0], 0.0)];
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        vec![(tr / 2.0 + s, 0.0), (tr / 2.0 - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        vec![(tr / 2.0, s), (tr / 2.0, -s)]
    }
}

/// Unit eigenvector for a real eigenvalue, sign fixed so its largest
/// component is positive.
fn eigenvector(a: &Mat2, mu: f64) -> Option<[f64; 2]> {
    let m = [[a[0][0] - mu, a[0][1]], [a[1][0], a[1][1] - mu]];
    // null vector from the larger row
    let r0 = m[0][0].hypot(m[0][1]);
    let r1 = m[1][0].hypot(m[1][1]);
    let scale = r0.max(r1);
    let v = if scale < 1e-12 * (1.0 + mu.abs()) {
        return None;
    } else if r0 >= r1 {
        [-m[0][1], m[0][0]]
    } else {
        [-m[1][1], m[1][0]]
    };
    let n = v[0].hypot(v[1]);
    let mut v = [v[0] / n, v[1] / n];
    let lead = if v[0].abs() >= v[1].abs() { v[0] } else { v[1] };
    if lead < 0.0 {
        v = [-v[0], -v[1]];
    }
    Some(v)
}

fn build_frame(location: ChartPoint, a: &Mat2, eig: &[(f64, f64)], dim: usize) -> Result<ChartFrame> {
    let identity = [[1.0, 0.0], [0.0, 1.0]];
    if dim == 1 {
        return Ok(ChartFrame {
            origin: location,
            dim,
            to_frame: identity,
            axes: identity,
            kind: FrameKind::Eigen,
        });
    }
    let distinct_real = eig.iter().all(|e| e.1 == 0.0) && (eig[0].0 - eig[1].0).abs() > 1e-9 * (1.0 + eig[0].0.abs());
    if distinct_real {
        if let (Some(v0), Some(v1)) = (eigenvector(a, eig[0].0), eigenvector(a, eig[1].0)) {
            let axes = [[v0[0], v1[0]], [v0[1], v1[1]]];
            let cond = (v0[0] * v1[1] - v0[1] * v1[0]).abs();
            if cond > 1e-6 {
                let to_frame = inverse(&axes, 2).expect("independent eigenvectors");
                return Ok(ChartFrame {
                    origin: location,
                    dim,
                    to_frame,
                    axes,
                    kind: FrameKind::Eigen,
                });
            }
        }
    }
    // single invariant subspace (both eigenvalues on one side): the identity
    // frame works when the symmetric part is definite with that sign
    let same_side = eig[0].0.signum() == eig[1].0.signum();
    let sym = [[a[0][0], 0.5 * (a[0][1] + a[1][0])], [0.5 * (a[0][1] + a[1][0]), a[1][1]]];
    let sym_eig = spectrum(&sym, 2);
    let definite = sym_eig.iter().all(|e| e.0.signum() == eig[0].0.signum() && e.0.abs() > 1e-12);
    if same_side && definite {
        return Ok(ChartFrame {
            origin: location,
            dim,
            to_frame: identity,
            axes: identity,
            kind: FrameKind::Orthogonal,
        });
    }
    Err(Error::DefectiveFrame {
        location,
        reason: format!("eigenvalues {eig:?} admit neither an eigenbasis nor a definite orthogonal frame"),
    })
}

/// Largest frame-coordinate radius, up to `cap`, on which the field stays
/// within 10% of its linearization.
fn chart_radius(system: &FlowSystem, location: &ChartPoint, a: &Mat2, frame: &ChartFrame, cap: f64) -> f64 {
    let dim = system.dim();
    let dirs: Vec<[f64; 2]> = if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..128)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 128.0;
                [t.cos(), t.sin()]
            })
            .collect()
    };
    let steps = 400;
    let mut r = cap;
    for d in dirs {
        for j in 1..=steps {
            let s = cap * j as f64 / steps as f64;
            if s > r {
                break;
            }
            let mut dy = mat_vec(&frame.axes, [s * d[0], s * d[1]]);
            if dim == 1 {
                dy[1] = 0.0;
            }
            let y = ChartPoint::new(location.chart, [location.coords[0] + dy[0], location.coords[1] + dy[1]]);
            let lin = mat_vec(a, dy);
            let lin = if dim == 1 { [lin[0], 0.0] } else { lin };
            let v = system.velocity(&y);
            let rem = field_norm([v[0] - lin[0], v[1] - lin[1]]);
            if !(rem < 0.1 * field_norm(lin)) {
                r = r.min(cap * (j - 1) as f64 / steps as f64);
                break;
            }
        }
    }
    r
}

/// Chart-space cap on the ball around `p` given the other fixed points.
fn radius_cap(system: &FlowSystem, p: &ChartPoint, others: &[ChartPoint]) -> f64 {
    let m = &system.manifold;
    let base: f64 = match m.kind {
        ManifoldKind::Circle | ManifoldKind::Torus => 0.25,
        ManifoldKind::Sphere => 1.0,
        ManifoldKind::PlaneDisk { radius } => 0.9 * (radius - p.norm()),
    };
    others
        .iter()
        .filter(|q| m.distance(p, q) > MERGE_DIST)
        .map(|q| 0.5 * m.distance(p, q))
        .fold(base, f64::min)
}

/// Build the record for a refined zero.
pub fn classify(
    system: &FlowSystem,
    id: usize,
    location: ChartPoint,
    others: &[ChartPoint],
    hyperbolicity_tol: f64,
) -> Result<FixedPointRecord> {
    let dim = system.dim();
    let location = system.manifold.owning(&location);
    let a = jacobian(system, &location, 1e-5);
    let mut eig = spectrum(&a, dim);
    let min_re = eig.iter().map(|e| e.0.abs()).fold(f64::INFINITY, f64::min);
    if min_re < hyperbolicity_tol {
        return Err(Error::NonHyperbolic { location, min_re });
    }
    // unstable first, then by decreasing real part
    eig.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let index = eig.iter().filter(|e| e.0 > 0.0).count();
    let frame = build_frame(location, &a, &eig, dim)?;
    let cap = radius_cap(system, &location, others) / frame.stretch();
    let radius = chart_radius(system, &location, &a, &frame, cap);
    if !(radius > 0.0) {
        return Err(Error::DefectiveFrame {
            location,
            reason: "no ball where the linearization dominates".into(),
        });
    }
    Ok(FixedPointRecord {
        id,
        location,
        dim,
        index,
        kind: PointKind::of(index, dim),
        linearization: a,
        eigenvalues: eig,
        frame,
        radius,
    })
}

fn sign_change(cover: &BoxCover, system: &FlowSystem, b: usize) -> bool {
    let corners = cover.corners(b);
    let vals: Vec<[f64; 2]> = corners.iter().map(|c| system.velocity(c)).collect();
    (0..system.dim()).all(|k| {
        let lo = vals.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
        let hi = vals.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
        lo <= 0.0 && hi >= 0.0
    })
}

/// Zeros of the field, refined and merged, in deterministic order.
pub fn find_zeros(system: &FlowSystem, cover: &BoxCover) -> Vec<ChartPoint> {
    let side = cover.side();
    let found: Vec<ChartPoint> = (0..cover.len())
        .into_par_iter()
        .filter(|&b| sign_change(cover, system, b))
        .filter_map(|b| {
            let c = cover.corners(b)[0];
            let centre = ChartPoint::new(
                c.chart,
                [c.coords[0] + 0.5 * side, if system.dim() == 1 { 0.0 } else { c.coords[1] + 0.5 * side }],
            );
            let z = refine_zero(system, centre)?;
            let d = (z.coords[0] - centre.coords[0]).hypot(z.coords[1] - centre.coords[1]);
            if d > 2.0 * side {
                return None;
            }
            let z = system.manifold.owning(&z);
            system.manifold.in_domain(&z).then_some(z)
        })
        .collect();
    let mut zeros: Vec<ChartPoint> = Vec::new();
    for z in found {
        if zeros.iter().all(|q| system.manifold.distance(q, &z) >= MERGE_DIST) {
            zeros.push(z);
        }
    }
    zeros.sort_by(|a, b| location_key(a).partial_cmp(&location_key(b)).unwrap());
    zeros
}

/// Lexicographic key (chart, coordinates) used for deterministic ordering.
pub fn location_key(p: &ChartPoint) -> (u8, f64, f64) {
    (p.chart, p.coords[0], p.coords[1])
}

/// Locate, refine and classify every fixed point.
pub fn find_fixed_points(system: &FlowSystem, cover: &BoxCover, hyperbolicity_tol: f64) -> Result<Vec<FixedPointRecord>> {
    let zeros = find_zeros(system, cover);
    zeros
        .iter()
        .enumerate()
        .map(|(id, z)| classify(system, id, *z, &zeros, hyperbolicity_tol))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    /// Frame direction the branch leaves along.
    pub start_direction: [f64; 2],
    pub segment: TrajectorySegment,
    /// Fixed point the branch was captured by.
    pub limit: Option<usize>,
    /// Integration failure, e.g. leaving a planar domain.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantManifoldTrace {
    pub owner: usize,
    pub stability: Stability,
    pub branches: Vec<Branch>,
}

impl InvariantManifoldTrace {
    /// Every sampled point of the traced set, including the owner.
    pub fn points<'a>(&'a self, owner: &'a ChartPoint) -> impl Iterator<Item = &'a ChartPoint> + 'a {
        std::iter::once(owner).chain(self.branches.iter().flat_map(|b| b.segment.samples.iter().map(|s| &s.1)))
    }
}

/// Start directions in frame coordinates: +/- each axis of the traced
/// subspace, plus the diagonals when that subspace is the whole plane.
fn branch_directions(record: &FixedPointRecord, stability: Stability) -> Vec<[f64; 2]> {
    let axes: Vec<usize> = match stability {
        Stability::Unstable => (0..record.index).collect(),
        Stability::Stable => (record.index..record.dim).collect(),
    };
    let mut out = Vec::new();
    for &a in &axes {
        for s in [1.0, -1.0] {
            let mut d = [0.0; 2];
            d[a] = s;
            out.push(d);
        }
    }
    if axes.len() == 2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            out.push([sx * h, sy * h]);
        }
    }
    out
}

pub fn trace_invariant_manifold(
    system: &FlowSystem,
    records: &[FixedPointRecord],
    owner: usize,
    stability: Stability,
) -> InvariantManifoldTrace {
    let record = &records[owner];
    let direction = match stability {
        Stability::Unstable => Direction::Forward,
        Stability::Stable => Direction::Backward,
    };
    let branches = branch_directions(record, stability)
        .into_par_iter()
        .map(|d| {
            // offset of length BRANCH_OFFSET in chart space
            let axis = mat_vec(&record.frame.axes, d);
            let n = field_norm(if record.dim == 1 { [axis[0], 0.0] } else { axis });
            let start = record.point(system, [d[0] * BRANCH_OFFSET / n, d[1] * BRANCH_OFFSET / n]);
            let sign = direction.sign();
            let mut samples = vec![(0.0, start)];
            let mut limit = None;
            let walked = system.walk(&start, direction, BRANCH_T_MAX, |_, _, t, q| {
                samples.push((sign * t, *q));
                for r in records {
                    if r.id != owner && system.manifold.distance(&r.location, q) < BRANCH_CAPTURE {
                        limit = Some(r.id);
                        return Ok(true);
                    }
                }
                Ok(false)
            });
            Branch {
                start_direction: d,
                segment: TrajectorySegment { samples, direction },
                limit,
                failure: walked.err().map(|e| e.to_string()),
            }
        })
        .collect();
    InvariantManifoldTrace {
        owner,
        stability,
        branches,
    }
}

/// Stable and unstable traces for every record, indexed by record id.
pub fn trace_all(system: &FlowSystem, records: &[FixedPointRecord]) -> Vec<(InvariantManifoldTrace, InvariantManifoldTrace)> {
    records
        .iter()
        .map(|r| {
            (
                trace_invariant_manifold(system, records, r.id, Stability::Stable),
                trace_invariant_manifold(system, records, r.id, Stability::Unstable),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchEnd {
    pub stability: Stability,
    pub end: ChartPoint,
    pub limit: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub id: usize,
    pub location: ChartPoint,
    pub index: usize,
    pub kind: PointKind,
    pub eigenvalues: Vec<(f64, f64)>,
    pub radius: f64,
    pub frame: FrameKind,
    pub branch_ends: Vec<BranchEnd>,
}

impl FixedPointReport {
    pub fn new(record: &FixedPointRecord, traces: &(InvariantManifoldTrace, InvariantManifoldTrace)) -> Self {
        let branch_ends = [&traces.0, &traces.1]
            .iter()
            .flat_map(|t| {
                t.branches.iter().map(|b| BranchEnd {
                    stability: t.stability,
                    end: *b.segment.end(),
                    limit: b.limit,
                    failure: b.failure.clone(),
                })
            })
            .collect();
        FixedPointReport {
            id: record.id,
            location: record.location,
            index: record.index,
            kind: record.kind,
            eigenvalues: record.eigenvalues.clone(),
            radius: record.radius,
            frame: record.frame.kind,
            branch_ends,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Catalog, ManifoldSpec, VectorField};

    fn plane(src: &str, radius: f64) -> FlowSystem {
        let m = ManifoldSpec::new(ManifoldKind::PlaneDisk { radius });
        FlowSystem::new(m, VectorField::parse_single(&m, src).unwrap()).unwrap()
    }

    fn records(sys: &FlowSystem, n: usize) -> Vec<FixedPointRecord> {
        let cover = BoxCover::new(sys.manifold, n);
        find_fixed_points(sys, &cover, DEFAULT_HYPERBOLICITY_TOL).unwrap()
    }

    #[test]
    fn planar_saddle_is_index_one() {
        let sys = FlowSystem::new(Catalog::PlanarSaddle.manifold(), VectorField::catalog(Catalog::PlanarSaddle)).unwrap();
        let r = records(&sys, 16);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].index, 1);
        assert_eq!(r[0].kind, PointKind::Saddle);
        assert!(r[0].location.norm() < 1e-10);
        assert!((r[0].eigenvalues[0].0 - std::f64::consts::LN_2).abs() < 1e-8);
        assert!((r[0].eigenvalues[1].0 + std::f64::consts::LN_2).abs() < 1e-8);
    }

    #[test]
    fn radial_sink() {
        let sys = plane("-x, -y", 1.0);
        let r = records(&sys, 9);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].kind, PointKind::Sink);
        for e in &r[0].eigenvalues {
            assert!((e.0 + 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn centre_is_rejected() {
        let sys = FlowSystem::new(Catalog::PlanarCenter.manifold(), VectorField::catalog(Catalog::PlanarCenter)).unwrap();
        let cover = BoxCover::new(sys.manifold, 8);
        assert!(matches!(
            find_fixed_points(&sys, &cover, DEFAULT_HYPERBOLICITY_TOL),
            Err(Error::NonHyperbolic { .. })
        ));
    }

    #[test]
    fn rotated_sink_frame_is_inverse_rotation() {
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        // A = R diag(-1,-2) R^T
        let a00 = -c * c - 2.0 * s * s;
        let a01 = -c * s + 2.0 * s * c;
        let a11 = -s * s - 2.0 * c * c;
        let sys = plane(&format!("{a00}*x + {a01}*y, {a01}*x + {a11}*y"), 1.0);
        let r = &records(&sys, 8)[0];
        let expect = [[c, s], [-s, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.frame.to_frame[i][j] - expect[i][j]).abs() < 1e-6, "{:?}", r.frame.to_frame);
            }
        }
    }

    #[test]
    fn cubic_saddle_radius_respects_remainder_bound() {
        let sys = plane("x*0.6931471805599453 + x^3, -y*0.6931471805599453", 3.0);
        let r = &records(&sys, 12)[0];
        assert!(r.radius * r.radius <= 0.1 * std::f64::consts::LN_2 + 1e-12);
        assert!(r.radius * r.radius >= 0.9 * 0.1 * std::f64::consts::LN_2);
    }

    #[test]
    fn local_morse_values() {
        let sys = FlowSystem::new(Catalog::PlanarSaddle.manifold(), VectorField::catalog(Catalog::PlanarSaddle)).unwrap();
        let r = &records(&sys, 16)[0];
        let phi = r.local_morse(2.0);
        assert_eq!(phi.eval(&sys, &r.location).unwrap(), 2.0);
        assert!((phi.eval(&sys, &ChartPoint::plane(0.5, 0.0)).unwrap() - 1.75).abs() < 1e-12);
        let sink = plane("-x, -y", 1.0);
        let s = &records(&sink, 9)[0];
        let x = (1.0f64 / 6.0).sqrt();
        assert!((s.local_morse(1.0).eval_coords([x, x]) - 4.0 / 3.0).abs() < 1e-12);
        assert!(matches!(phi.eval(&sys, &ChartPoint::plane(3.9, 0.0)), Err(Error::OutsideChart(_))));
    }

    #[test]
    fn torus_indices() {
        let sys = FlowSystem::new(
            Catalog::TorusHeightGradient.manifold(),
            VectorField::catalog(Catalog::TorusHeightGradient),
        )
        .unwrap();
        let r = records(&sys, 16);
        let mut idx: Vec<usize> = r.iter().map(|p| p.index).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 1, 2]);
    }

    #[test]
    fn saddle_traces_follow_axes() {
        let sys = FlowSystem::new(Catalog::PlanarSaddle.manifold(), VectorField::catalog(Catalog::PlanarSaddle)).unwrap();
        let r = records(&sys, 16);
        let unstable = trace_invariant_manifold(&sys, &r, 0, Stability::Unstable);
        assert_eq!(unstable.branches.len(), 2);
        for b in &unstable.branches {
            // leaves the disk along the x axis
            assert!(b.failure.is_some());
            assert!(b.segment.samples.iter().all(|s| s.1.coords[1].abs() < 1e-12));
        }
        let stable = trace_invariant_manifold(&sys, &r, 0, Stability::Stable);
        for b in &stable.branches {
            assert!(b.segment.samples.iter().all(|s| s.1.coords[0].abs() < 1e-12));
        }
    }

    #[test]
    fn sink_has_no_unstable_branches() {
        let sys = plane("-x, -y", 1.0);
        let r = records(&sys, 9);
        assert!(trace_invariant_manifold(&sys, &r, 0, Stability::Unstable).branches.is_empty());
    }
}
