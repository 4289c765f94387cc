use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::field::VectorField;
use crate::flow::manifold::{ChartPoint, ManifoldKind, ManifoldSpec};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_STEP: f64 = 0.05;
/// Time resolution of event location.
pub const EVENT_TIME_TOL: f64 = 1e-8;
const MIN_STEP: f64 = 1e-12;

// Dormand-Prince 5(4) tableau. The field is autonomous, so the nodes c_i
// never appear.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn of(duration: f64) -> Self {
        if duration < 0.0 {
            Direction::Backward
        } else {
            Direction::Forward
        }
    }
}

/// Sampled orbit piece. Times are signed flow times relative to the start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub samples: Vec<(f64, ChartPoint)>,
    pub direction: Direction,
}

impl TrajectorySegment {
    pub fn end(&self) -> &ChartPoint {
        &self.samples.last().expect("segment has at least the start sample").1
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    /// Unsigned flow time to the crossing.
    pub time: f64,
    pub point: ChartPoint,
}

/// A manifold together with a vector field and integrator settings.
/// Immutable; every query is a pure function of its arguments.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    pub manifold: ManifoldSpec,
    pub field: VectorField,
    pub tol: f64,
    pub max_step: f64,
}

struct StepOutcome {
    point: ChartPoint,
    err: f64,
}

impl FlowSystem {
    pub fn new(manifold: ManifoldSpec, field: VectorField) -> Result<Self> {
        manifold.check_transitions()?;
        Ok(FlowSystem {
            manifold,
            field,
            tol: DEFAULT_TOL,
            max_step: DEFAULT_MAX_STEP,
        })
    }

    pub fn with_tolerances(mut self, tol: f64, max_step: f64) -> Self {
        self.tol = tol;
        self.max_step = max_step;
        self
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Same system with time reversed.
    pub fn reversed(&self) -> Self {
        FlowSystem {
            field: self.field.reversed(),
            ..self.clone()
        }
    }

    pub fn velocity(&self, p: &ChartPoint) -> [f64; 2] {
        self.field.eval(p)
    }

    /// Worst inward-pointing margin on the boundary circle of a plane disk,
    /// sampled at 360 points. Positive means the field points strictly inward
    /// everywhere. `None` for closed manifolds.
    pub fn trapping_margin(&self) -> Option<f64> {
        let ManifoldKind::PlaneDisk { radius } = self.manifold.kind else {
            return None;
        };
        let mut worst = f64::INFINITY;
        for k in 0..360 {
            let a = (k as f64).to_radians();
            let (c, s) = (a.cos(), a.sin());
            let v = self.velocity(&ChartPoint::plane(radius * c, radius * s));
            worst = worst.min(-(v[0] * c + v[1] * s));
        }
        Some(worst)
    }

    pub fn is_trapped(&self) -> bool {
        self.trapping_margin().is_none_or(|m| m > 0.0)
    }

    fn rk_step(&self, p: &ChartPoint, h: f64) -> Result<StepOutcome> {
        let n = self.dim();
        let mut k = [[0.0f64; 2]; 7];
        for s in 0..7 {
            let mut y = p.coords;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        y[i] += h * a * kj[i];
                    }
                }
            }
            let v = self.velocity(&ChartPoint::new(p.chart, y));
            if !(v[0].is_finite() && v[1].is_finite()) {
                return Err(Error::NonFinite(ChartPoint::new(p.chart, y)));
            }
            k[s] = v;
        }
        let mut y = p.coords;
        let mut err = 0.0f64;
        for i in 0..n {
            let mut dy = 0.0;
            let mut de = 0.0;
            for s in 0..7 {
                dy += B[s] * k[s][i];
                de += E[s] * k[s][i];
            }
            let y1 = p.coords[i] + h * dy;
            let scale = self.tol * (1.0 + p.coords[i].abs().max(y1.abs()));
            err = err.max((h * de).abs() / scale);
            y[i] = y1;
        }
        Ok(StepOutcome {
            point: ChartPoint::new(p.chart, y),
            err,
        })
    }

    /// Advance by at most `h_try` (signed). Returns the accepted step, the
    /// normalized new point and a suggested next step size.
    fn adaptive_step(&self, t: f64, p: &ChartPoint, h_try: f64) -> Result<(f64, ChartPoint, f64)> {
        let mut h = h_try;
        loop {
            if h.abs() < MIN_STEP {
                return Err(Error::StepUnderflow { time: t });
            }
            let out = self.rk_step(p, h)?;
            if out.err <= 1.0 {
                let grow = if out.err == 0.0 { 5.0 } else { (0.9 * out.err.powf(-0.2)).clamp(0.2, 5.0) };
                let q = self.manifold.normalize(&out.point);
                if !self.manifold.in_domain(&q) {
                    return Err(Error::LeftDomain { time: t + h, point: q });
                }
                return Ok((h, q, h.abs() * grow));
            }
            h *= (0.9 * out.err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }

    /// Walk along the orbit in `direction`, calling `visit(t_prev, p_prev, t, p)`
    /// after every accepted step (unsigned times) until it returns `true` or
    /// `t_max` is reached. Returns whether the visitor stopped the walk.
    pub fn walk<F>(&self, start: &ChartPoint, direction: Direction, t_max: f64, mut visit: F) -> Result<bool>
    where
        F: FnMut(f64, &ChartPoint, f64, &ChartPoint) -> Result<bool>,
    {
        let sign = direction.sign();
        let mut t = 0.0f64;
        let mut p = self.manifold.normalize(start);
        let mut h = self.max_step;
        while t < t_max {
            let h_try = h.min(self.max_step).min(t_max - t);
            let (taken, q, next) = self.adaptive_step(t, &p, sign * h_try)?;
            let t_new = if (t_max - (t + taken.abs())).abs() < 1e-14 * t_max.max(1.0) {
                t_max
            } else {
                t + taken.abs()
            };
            if visit(t, &p, t_new, &q)? {
                return Ok(true);
            }
            t = t_new;
            p = q;
            h = next;
        }
        Ok(false)
    }

    /// Point reached after flowing for signed time `duration`.
    pub fn flow(&self, start: &ChartPoint, duration: f64) -> Result<ChartPoint> {
        let mut end = self.manifold.normalize(start);
        self.walk(start, Direction::of(duration), duration.abs(), |_, _, _, q| {
            end = *q;
            Ok(false)
        })?;
        Ok(end)
    }

    /// Sampled trajectory over signed time `duration`, with tolerance `tol`.
    pub fn integrate(&self, start: &ChartPoint, duration: f64, tol: f64) -> Result<TrajectorySegment> {
        let sys;
        let this = if tol != self.tol {
            sys = FlowSystem { tol, ..self.clone() };
            &sys
        } else {
            self
        };
        let direction = Direction::of(duration);
        let sign = direction.sign();
        let mut samples = vec![(0.0, self.manifold.normalize(start))];
        this.walk(start, direction, duration.abs(), |_, _, t, q| {
            samples.push((sign * t, *q));
            Ok(false)
        })?;
        Ok(TrajectorySegment { samples, direction })
    }

    /// Exact single step of size `s` from `p`, used for event refinement.
    fn sub_step(&self, p: &ChartPoint, s: f64) -> Result<ChartPoint> {
        if s == 0.0 {
            return Ok(*p);
        }
        // subdivide if the requested step is coarse relative to tolerance
        let out = self.rk_step(p, s)?;
        let q = if out.err <= 1.0 {
            out.point
        } else {
            let half = self.rk_step(p, s / 2.0)?.point;
            self.rk_step(&half, s / 2.0)?.point
        };
        Ok(self.manifold.normalize(&q))
    }

    /// First time in (0, t_max] at which `g` changes sign along the orbit.
    pub fn hit_time<G>(&self, start: &ChartPoint, g: G, direction: Direction, t_max: f64) -> Result<Hit>
    where
        G: Fn(&ChartPoint) -> f64,
    {
        let p0 = self.manifold.normalize(start);
        let g0 = g(&p0);
        if g0 == 0.0 {
            return Err(Error::HitPrecondition("test function vanishes at the start point".into()));
        }
        if !g0.is_finite() {
            return Err(Error::HitPrecondition("test function is not finite at the start point".into()));
        }
        let sign0 = g0.signum();
        let crossed = |v: f64| v * sign0 <= 0.0;
        let dir = direction.sign();
        let mut found = None;
        self.walk(&p0, direction, t_max, |t0, p_prev, t1, q| {
            if !crossed(g(q)) {
                return Ok(false);
            }
            let (mut lo, mut hi) = (0.0f64, t1 - t0);
            let mut best = *q;
            while hi - lo > EVENT_TIME_TOL {
                let mid = 0.5 * (lo + hi);
                let pm = self.sub_step(p_prev, dir * mid)?;
                if crossed(g(&pm)) {
                    hi = mid;
                    best = pm;
                } else {
                    lo = mid;
                }
            }
            found = Some(Hit {
                time: t0 + hi,
                point: best,
            });
            Ok(true)
        })?;
        found.ok_or(Error::NoCrossing { t_max })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::field::Catalog;
    use std::f64::consts::LN_2;

    fn saddle() -> FlowSystem {
        FlowSystem::new(Catalog::PlanarSaddle.manifold(), VectorField::catalog(Catalog::PlanarSaddle)).unwrap()
    }

    fn decay() -> FlowSystem {
        let m = ManifoldSpec::new(ManifoldKind::PlaneDisk { radius: 4.0 });
        FlowSystem::new(m, VectorField::parse_single(&m, "-x, 0").unwrap()).unwrap()
    }

    #[test]
    fn model_saddle_unit_time() {
        let q = saddle().flow(&ChartPoint::plane(1.0, 1.0), 1.0).unwrap();
        assert!((q.coords[0] - 2.0).abs() < 1e-10, "{q:?}");
        assert!((q.coords[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = ChartPoint::plane(0.3, -0.7);
        assert_eq!(saddle().flow(&p, 0.0).unwrap(), p);
        let seg = saddle().integrate(&p, 0.0, 1e-9).unwrap();
        assert_eq!(seg.samples.len(), 1);
    }

    #[test]
    fn exponential_decay_half_life() {
        let q = decay().flow(&ChartPoint::plane(1.0, 0.0), LN_2).unwrap();
        assert!((q.coords[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn segment_times_are_monotone_and_bounded_by_max_step() {
        let seg = saddle().integrate(&ChartPoint::plane(0.1, 1.0), -1.3, 1e-9).unwrap();
        assert_eq!(seg.direction, Direction::Backward);
        for w in seg.samples.windows(2) {
            assert!(w[1].0 < w[0].0);
            assert!(w[0].0 - w[1].0 <= DEFAULT_MAX_STEP + 1e-12);
        }
        assert!((seg.duration() + 1.3).abs() < 1e-12);
    }

    #[test]
    fn hit_time_half_level() {
        let hit = decay()
            .hit_time(&ChartPoint::plane(1.0, 0.0), |p| p.coords[0] - 0.5, Direction::Forward, 5.0)
            .unwrap();
        assert!((hit.time - LN_2).abs() < 1e-8);
        assert!((hit.point.coords[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn hit_time_rejects_degenerate_start() {
        let err = decay().hit_time(&ChartPoint::plane(0.5, 0.0), |p| p.coords[0] - 0.5, Direction::Forward, 5.0);
        assert!(matches!(err, Err(Error::HitPrecondition(_))));
    }

    #[test]
    fn hit_time_reports_missing_crossing() {
        let err = decay().hit_time(&ChartPoint::plane(1.0, 0.0), |p| p.coords[0] - 2.0, Direction::Forward, 1.0);
        assert!(matches!(err, Err(Error::NoCrossing { .. })));
    }

    #[test]
    fn backward_exit_from_disk_is_reported() {
        let err = saddle().flow(&ChartPoint::plane(1.0, 1.0), -3.0);
        assert!(matches!(err, Err(Error::LeftDomain { .. })));
    }

    #[test]
    fn torus_wraps_during_integration() {
        let m = ManifoldSpec::new(ManifoldKind::Torus);
        let sys = FlowSystem::new(m, VectorField::parse_single(&m, "1, 0.5").unwrap()).unwrap();
        let q = sys.flow(&ChartPoint::plane(0.9, 0.9), 1.25).unwrap();
        assert!((q.coords[0] - 0.15).abs() < 1e-10);
        assert!((q.coords[1] - 0.525).abs() < 1e-10);
    }

    #[test]
    fn trapping_margin_detects_inward_fields() {
        let m = ManifoldSpec::new(ManifoldKind::PlaneDisk { radius: 1.0 });
        let sink = FlowSystem::new(m, VectorField::parse_single(&m, "-x, -y").unwrap()).unwrap();
        assert!(sink.is_trapped());
        assert!(!saddle().is_trapped());
        let center = FlowSystem::new(m, VectorField::catalog(Catalog::PlanarCenter)).unwrap();
        assert!(!center.is_trapped());
    }
}
