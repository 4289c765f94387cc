//! Saddle stages: the disk bundle `d_i` on the lower level curve of the
//! local chart, its projection onto the previous boundary, the time
//! functions `t_1`, `T_1` and the level profile `psi` along `R_i`.

use rayon::prelude::*;
use serde::Serialize;

use super::{Boundary, Builder, Outcome, Probe, Region, ScaffoldCounts, StageLog, CHART_MARGIN, HIT_T_MAX, MAX_HALVINGS, THIRD};
use crate::contour::level_lines;
use crate::error::{Error, Result};
use crate::fixed_points::LocalMorseChart;
use crate::flow::{ChartPoint, Direction, FlowSystem};
use crate::grid::Lattice;

/// Samples per arc of `d_i`.
const ARC_SAMPLES: usize = 129;
const PROFILE_SAMPLES: usize = 64;
/// Target agreement of the level profile between the points of `c_i`.
pub const PSI_SPREAD_TOL: f64 = 1e-4;
/// Smallest chart scale, in grid spacings, used to improve that agreement.
const MIN_BLOCK_CELLS: f64 = 4.0;

/// Scaled coordinates of the four points of `c_i`.
fn c_points() -> [[f64; 2]; 4] {
    let u = (7.0f64 / 12.0).sqrt();
    [[u, 0.5], [-u, 0.5], [u, -0.5], [-u, -0.5]]
}

/// Cubic Hermite table of `psi(t) = phi_p(f^{-t}(c))`.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Profile {
    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `None` outside the tabulated range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        if !(0.0..=self.end()).contains(&t) {
            return None;
        }
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return Some(self.values[k]),
            Err(k) => k - 1,
        };
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            h00 * self.values[k]
                + h10 * h * self.slopes[k]
                + h01 * self.values[k + 1]
                + h11 * h * self.slopes[k + 1],
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileInfo {
    /// Backward time from `c_i` to the upper level `c + 1/3`.
    pub t2: f64,
    /// Backward time to `c + 1/3 + halo`; the table covers `[0, t2_halo]`.
    pub t2_halo: f64,
    pub profile: Profile,
    /// Largest deviation of a single point of `c_i` from the mean profile.
    pub spread: f64,
}

fn backward_to_level(system: &FlowSystem, chart: &LocalMorseChart, start: &ChartPoint, level: f64) -> Result<f64> {
    let g = |p: &ChartPoint| chart.try_eval(system, p).map_or(1.0, |v| v - level);
    Ok(system.hit_time(start, g, Direction::Backward, HIT_T_MAX)?.time)
}

/// Level profile of a saddle chart along the backward orbits of `c_i`,
/// averaged over the four points of `c_i`.
pub fn saddle_profile(system: &FlowSystem, chart: &LocalMorseChart, halo: f64) -> Result<ProfileInfo> {
    let starts: Vec<ChartPoint> = c_points().iter().map(|x| chart.point(system, *x)).collect();
    let t2 = backward_to_level(system, chart, &starts[0], chart.c + THIRD)?;
    let t2_halo = backward_to_level(system, chart, &starts[0], chart.c + THIRD + halo)?;
    let times: Vec<f64> = (0..PROFILE_SAMPLES)
        .map(|j| t2_halo * j as f64 / (PROFILE_SAMPLES - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(times.len());
    let mut slopes = Vec::with_capacity(times.len());
    let mut spread = 0.0f64;
    for &t in &times {
        let mut vs = [0.0; 4];
        let mut ds = [0.0; 4];
        for (k, c) in starts.iter().enumerate() {
            let p = system.flow(c, -t)?;
            vs[k] = chart.eval(system, &p)?;
            ds[k] = -chart.rate(system, &p).ok_or(Error::OutsideChart(p))?;
        }
        let mean = vs.iter().sum::<f64>() / 4.0;
        spread = vs.iter().fold(spread, |m, v| m.max((v - mean).abs()));
        values.push(mean);
        slopes.push(ds.iter().sum::<f64>() / 4.0);
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format("the saddle level profile is not strictly increasing".into()));
    }
    Ok(ProfileInfo {
        t2,
        t2_halo,
        profile: Profile { times, values, slopes },
        spread,
    })
}

/// Component counts of the scaffold read off the chart function on a
/// lattice over the scaled square `[-TOPOLOGY_BOX, TOPOLOGY_BOX]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScaffoldTopology {
    /// Components of the lower level curve `phi_p = c - 1/3`.
    pub sigma_minus: usize,
    /// Runs of that curve with `|x_s| <= 1/2`.
    pub d_arcs: usize,
    /// End points of those runs.
    pub c_points: usize,
    /// Crossings of the curve with the unstable axis `x_s = 0`.
    pub q_points: usize,
}

/// Half-width of the square the topology is read on; it lies inside the
/// chart ball, whose scaled radius is at least `CHART_MARGIN`.
const TOPOLOGY_BOX: f64 = 0.8;

pub fn scaffold_topology(system: &FlowSystem, chart: &LocalMorseChart) -> ScaffoldTopology {
    let n = 161;
    let w = TOPOLOGY_BOX;
    let lattice = Lattice {
        charts: 1,
        nx: n,
        ny: n,
        origin: [-w, -w],
        spacing: 2.0 * w / (n - 1) as f64,
        periodic: false,
    };
    let values: Vec<f64> = (0..lattice.len())
        .map(|idx| {
            let (_, ix, iy) = lattice.split(idx);
            let y = chart.point(system, lattice.coords(ix, iy));
            chart.try_eval(system, &y).unwrap_or(f64::NAN)
        })
        .collect();
    // level curves come back closed along the lattice edge; cut them there
    let on_square = |p: &[f64; 2]| p[0].abs().max(p[1].abs()) <= w + 1e-12;
    let mut pieces: Vec<Vec<[f64; 2]>> = Vec::new();
    for line in level_lines(&lattice, &values, chart.c - THIRD) {
        let mut pts = line.points.clone();
        if line.closed {
            pts.pop();
            if let Some(cut) = pts.iter().position(|p| !on_square(p)) {
                pts.rotate_left(cut);
            }
        }
        let mut current = Vec::new();
        for p in pts {
            if on_square(&p) {
                current.push(p);
            } else if !current.is_empty() {
                pieces.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            pieces.push(current);
        }
    }
    let mut topo = ScaffoldTopology {
        sigma_minus: pieces.len(),
        d_arcs: 0,
        c_points: 0,
        q_points: 0,
    };
    for piece in &pieces {
        let inside: Vec<bool> = piece.iter().map(|p| p[1].abs() <= 0.5).collect();
        for (k, &on) in inside.iter().enumerate() {
            if on && (k == 0 || !inside[k - 1]) {
                topo.d_arcs += 1;
                topo.c_points += 1;
            }
            if on && (k + 1 == inside.len() || !inside[k + 1]) {
                topo.c_points += 1;
            }
        }
        topo.q_points += piece.windows(2).filter(|w| (w[0][1] < 0.0) != (w[1][1] < 0.0)).count();
    }
    topo
}

/// One arc of `d_i` and its image `d_{i-1}` on a boundary line.
#[derive(Debug, Clone)]
struct Arc {
    line: usize,
    /// Arclength of the image start on the line, in `[0, length)`.
    start: f64,
    span: f64,
    /// Offsets from `start`, increasing, with the entry times there.
    offsets: Vec<f64>,
    t1: Vec<f64>,
}

impl Arc {
    fn t1_at(&self, offset: f64) -> f64 {
        let k = match self.offsets.binary_search_by(|x| x.partial_cmp(&offset).unwrap()) {
            Ok(k) => return self.t1[k],
            Err(0) => return self.t1[0],
            Err(k) if k >= self.offsets.len() => return *self.t1.last().unwrap(),
            Err(k) => k - 1,
        };
        let w = (offset - self.offsets[k]) / (self.offsets[k + 1] - self.offsets[k]);
        self.t1[k] + w * (self.t1[k + 1] - self.t1[k])
    }
}

struct Scaffold {
    chart: LocalMorseChart,
    arcs: Vec<Arc>,
    lengths: Vec<f64>,
    reached: Vec<bool>,
    collar: f64,
    info: ProfileInfo,
    t1_range: (f64, f64),
    t_cap: f64,
}

/// `|x_u x_s|` on the orbit cylinder through `c_i`.
fn kappa() -> f64 {
    (7.0f64 / 12.0).sqrt() * 0.5
}

impl Scaffold {
    /// `None` when `d_i` or the saddle block meets `U_{i-1}`.
    fn build(b: &Builder, i: usize, chart: LocalMorseChart, boundary: &Boundary) -> Result<Option<Scaffold>> {
        let sys = b.system;
        let arc_x = |sign: f64, k: usize| {
            let xs = -0.5 + k as f64 / (ARC_SAMPLES - 1) as f64;
            [sign * (THIRD + xs * xs).sqrt(), xs]
        };
        for sign in [1.0, -1.0] {
            for k in 0..ARC_SAMPLES {
                if boundary.g(&chart.point(sys, arc_x(sign, k))) <= 0.0 {
                    return Ok(None);
                }
            }
        }
        let m = 41;
        for a in 0..m {
            for c in 0..m {
                let x = [-1.0 + 2.0 * a as f64 / (m - 1) as f64, -1.0 + 2.0 * c as f64 / (m - 1) as f64];
                let in_block = (x[0] * x[1]).abs() <= kappa()
                    && x[0] * x[0] - x[1] * x[1] <= THIRD
                    && x[1] * x[1] - x[0] * x[0] <= THIRD + b.delta;
                if in_block && boundary.g(&chart.point(sys, x)) <= 0.0 {
                    return Ok(None);
                }
            }
        }
        let lengths: Vec<f64> = boundary.contours.lines.iter().map(|l| l.length()).collect();
        let mut arcs = Vec::new();
        for sign in [1.0, -1.0] {
            let hits: Vec<Probe> = (0..ARC_SAMPLES)
                .into_par_iter()
                .map(|k| boundary.probe(sys, &chart.point(sys, arc_x(sign, k)), Direction::Forward, HIT_T_MAX))
                .collect();
            let mut line = None;
            let mut raw = Vec::with_capacity(ARC_SAMPLES);
            for (k, h) in hits.into_iter().enumerate() {
                let h = match h {
                    Probe::Hit(h) => h,
                    Probe::Miss => {
                        return Err(Error::scaffold(i, format!("the orbit from {:?} on d_i misses the previous boundary", chart.point(sys, arc_x(sign, k)))))
                    }
                    Probe::Failed => {
                        return Err(Error::scaffold(i, format!("the orbit from {:?} on d_i fails to reach a boundary curve", chart.point(sys, arc_x(sign, k)))))
                    }
                };
                if *line.get_or_insert(h.located.line) != h.located.line {
                    return Err(Error::scaffold(i, "orbits from one arc of d_i reach two boundary components"));
                }
                if h.time <= 0.0 {
                    return Err(Error::scaffold(i, "non-positive entry time t_1"));
                }
                raw.push((h.located.s, h.time));
            }
            let line = line.unwrap();
            arcs.push(unwrap_arc(i, line, lengths[line], raw)?);
        }
        let mut reached = vec![false; lengths.len()];
        for a in &arcs {
            reached[a.line] = true;
        }
        let collar = collar_depth(i, &arcs, &lengths)?;
        let info = saddle_profile(sys, &chart, b.delta).map_err(|e| Error::scaffold(i, e.to_string()))?;
        let t1_range = arcs
            .iter()
            .flat_map(|a| a.t1.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        let t_cap = t1_range.1.max(1.0) + info.t2_halo + 0.25;
        Ok(Some(Scaffold {
            chart,
            arcs,
            lengths,
            reached,
            collar,
            info,
            t1_range,
            t_cap,
        }))
    }

    /// `T_1` at arclength `s` of a reached line, and whether the point lies
    /// in `d_{i-1}`.
    fn time_cap(&self, line: usize, s: f64) -> (f64, bool) {
        let len = self.lengths[line];
        let mut best: Option<(f64, f64)> = None;
        for a in self.arcs.iter().filter(|a| a.line == line) {
            let ds = (s - a.start).rem_euclid(len);
            if ds <= a.span {
                return (a.t1_at(ds), true);
            }
            let after = ds - a.span;
            let before = len - ds;
            let (dist, t_end) = if after <= before { (after, *a.t1.last().unwrap()) } else { (before, a.t1[0]) };
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, t_end));
            }
        }
        match best {
            Some((dist, t_end)) if dist < self.collar => {
                let u = dist / self.collar;
                (t_end + u * (1.0 - t_end), false)
            }
            _ => (1.0, false),
        }
    }

    fn classify(&self, b: &Builder, i: usize, boundary: &Boundary, y: &ChartPoint) -> Outcome {
        let sys = b.system;
        let base = i as f64;
        let top = base + THIRD + b.delta;
        match boundary.probe(sys, y, Direction::Forward, self.t_cap) {
            Probe::Failed => Outcome::flagged(),
            Probe::Hit(hit) if !self.reached[hit.located.line] => {
                let v = base + hit.time - 2.0 * THIRD;
                if v <= top {
                    Outcome::set(v, Region::Tube { j: 4, stage: i })
                } else {
                    Outcome::none()
                }
            }
            Probe::Hit(hit) => {
                let tau = hit.time;
                let (t1, in_d) = self.time_cap(hit.located.line, hit.located.s);
                if tau <= t1 {
                    Outcome::set(base - (2.0 - tau / t1) * THIRD, Region::Tube { j: 1, stage: i })
                } else if in_d {
                    match self.chart.try_eval(sys, y) {
                        Some(v) if v <= top => Outcome::set(v, Region::Tube { j: 3, stage: i }),
                        _ => Outcome::none(),
                    }
                } else {
                    match self.info.profile.eval(tau - t1) {
                        Some(v) => Outcome::set(v, Region::Tube { j: 2, stage: i }),
                        None => Outcome::none(),
                    }
                }
            }
            Probe::Miss => {
                // orbits that stay near the saddle past the time cap
                let Some(x) = self.chart.coords(sys, y) else { return Outcome::none() };
                let v = self.chart.eval_coords(x);
                let in_block = (x[0] * x[1]).abs() <= kappa() * (1.0 + 1e-9)
                    && x[0] * x[0] - x[1] * x[1] <= THIRD + 1e-9
                    && v <= top;
                if in_block {
                    Outcome::set(v, Region::Tube { j: 3, stage: i })
                } else {
                    Outcome::none()
                }
            }
        }
    }
}

/// Turn raw `(s, t_1)` samples along one arc into an increasing table.
fn unwrap_arc(i: usize, line: usize, len: f64, raw: Vec<(f64, f64)>) -> Result<Arc> {
    let mut s = Vec::with_capacity(raw.len());
    let mut t1: Vec<f64> = raw.iter().map(|r| r.1).collect();
    s.push(raw[0].0);
    for w in raw.windows(2) {
        let mut d = w[1].0 - w[0].0;
        d -= (d / len).round() * len;
        s.push(s.last().unwrap() + d);
    }
    if s.last() < s.first() {
        s.reverse();
        t1.reverse();
    }
    if s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::scaffold(i, "the image of d_i on the boundary is not monotone"));
    }
    let start = s[0];
    let span = s.last().unwrap() - start;
    if span >= len {
        return Err(Error::scaffold(i, "the image of d_i wraps around a whole boundary component"));
    }
    Ok(Arc {
        line,
        start: start.rem_euclid(len),
        span,
        offsets: s.iter().map(|x| x - start).collect(),
        t1,
    })
}

/// A quarter of the smallest gap between images of `d_i` on one line.
fn collar_depth(i: usize, arcs: &[Arc], lengths: &[f64]) -> Result<f64> {
    let mut depth = f64::INFINITY;
    for a in arcs {
        let len = lengths[a.line];
        let mut gap = len - a.span;
        for o in arcs.iter().filter(|o| o.line == a.line && !std::ptr::eq(*o, a)) {
            let ds = (o.start - a.start).rem_euclid(len);
            if ds <= a.span || (a.start - o.start).rem_euclid(len) <= o.span {
                return Err(Error::scaffold(i, "the two images of d_i overlap"));
            }
            gap = gap.min(ds - a.span);
        }
        depth = depth.min(0.25 * gap);
    }
    Ok(depth)
}

pub(super) fn saddle_stage(b: &Builder, i: usize) -> Result<(Vec<(usize, Outcome)>, StageLog)> {
    let record = b.record(i);
    if record.dim != 2 {
        return Err(Error::scaffold(i, "saddles are only handled in two dimensions"));
    }
    if b.record(1).kind != super::PointKind::Sink {
        return Err(Error::scaffold(i, "the order does not start with a sink"));
    }
    let boundary = Boundary::new(&b.grid, &b.halo, i as f64 - 2.0 * THIRD);
    if boundary.contours.is_empty() {
        return Err(Error::scaffold(i, "the previous sublevel set has no closed boundary curve"));
    }
    let base = record.local_morse(i as f64);
    let mut rho = record.radius / CHART_MARGIN;
    let mut halvings = 0;
    let mut scaffold = loop {
        if let Some(s) = Scaffold::build(b, i, base.with_scale(rho), &boundary)? {
            break s;
        }
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(Error::scaffold(i, "d_i meets the previous sublevel set at every chart scale"));
        }
        rho *= 0.5;
    };
    // a smaller chart follows the flow more closely, as long as the saddle
    // block still spans several grid cells
    while scaffold.info.spread > PSI_SPREAD_TOL && 0.5 * rho >= MIN_BLOCK_CELLS * b.grid.h() {
        match Scaffold::build(b, i, base.with_scale(0.5 * rho), &boundary)? {
            Some(s) if s.info.spread < scaffold.info.spread => {
                scaffold = s;
                rho *= 0.5;
                halvings += 1;
            }
            _ => break,
        }
    }
    let outcomes = b
        .open_nodes()
        .into_par_iter()
        .map(|n| (n, scaffold.classify(b, i, &boundary, &b.grid.point(n))))
        .collect();
    let topo = scaffold_topology(b.system, &scaffold.chart);
    let mut log = StageLog::new(i, record, rho);
    log.halvings = halvings;
    log.boundary_components = boundary.contours.len();
    log.reached_components = scaffold.reached.iter().filter(|&&r| r).count();
    log.t2 = Some(scaffold.info.t2);
    log.psi_spread = Some(scaffold.info.spread);
    log.t1_range = Some(scaffold.t1_range);
    log.collar_depth = Some(scaffold.collar);
    log.scaffold = Some(ScaffoldCounts {
        sigma_minus: topo.sigma_minus,
        d_arcs: scaffold.arcs.len(),
        c_points: 2 * scaffold.arcs.len(),
        q_points: topo.q_points,
    });
    Ok((outcomes, log))
}
