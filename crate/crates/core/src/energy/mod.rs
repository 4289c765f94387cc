//! Inductive construction of a continuous energy function on a node grid.
//!
//! Fixed points are processed in the order of an [`OrderedSpectrum`]. After
//! stage `i` every node of `U_i = {phi <= i + 1/3}` carries its final value;
//! nodes just outside `U_i` carry provisional values in a halo band that is
//! only used to locate the boundary `dU_i` for the next stage.

mod io;
mod saddle;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::contour::{ContourSet, Located};
use crate::error::{Error, Result};
use crate::fixed_points::{FixedPointRecord, LocalMorseChart, PointKind};
use crate::flow::{ChartPoint, Direction, FlowSystem};
use crate::grid::Grid;
use crate::order::OrderedSpectrum;
use crate::pipeline::Analysis;

pub use io::{level_sets, read_field, write_field, write_levels, LevelSet, GRID_FILE, LEVELS_FILE, LOG_FILE, META_FILE};
pub use saddle::{saddle_profile, scaffold_topology, Profile, ProfileInfo, ScaffoldTopology};

pub const THIRD: f64 = 1.0 / 3.0;
/// Width of the provisional band kept above each sublevel set.
pub const DEFAULT_HALO: f64 = 0.25;
pub const DEFAULT_RESOLUTION: usize = 256;
/// Chart scales are halved at most this many times to separate a new
/// fixed point's scaffold from the current sublevel set.
pub const MAX_HALVINGS: usize = 20;
/// A stage fails when more than this fraction of its nodes is flagged.
pub const FLAG_FRACTION: f64 = 1e-3;
/// Orbits longer than this never reach the boundary.
pub const HIT_T_MAX: f64 = 100.0;
/// Saddle and source charts use `r_p / CHART_MARGIN` as scale.
const CHART_MARGIN: f64 = 1.2;
/// A boundary hit must lie within this many grid spacings of a contour.
const LOCATE_SLACK: f64 = 2.0;

/// Where a node's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Undefined,
    /// Local chart of the fixed point at (1-based) order position `s`.
    Local(usize),
    /// Tube `V^j` added at stage `stage`.
    Tube { j: u8, stage: usize },
    /// Closing tube of the last source.
    Closing(usize),
}

impl Region {
    pub fn tag(&self) -> String {
        match self {
            Region::Undefined => "undefined".into(),
            Region::Local(s) => format!("local_p{s}"),
            Region::Tube { j, stage } => format!("V{j}_{stage}"),
            Region::Closing(k) => format!("Vk_{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "undefined" {
            return Some(Region::Undefined);
        }
        if let Some(r) = s.strip_prefix("local_p") {
            return r.parse().ok().map(Region::Local);
        }
        if let Some(r) = s.strip_prefix("Vk_") {
            return r.parse().ok().map(Region::Closing);
        }
        let r = s.strip_prefix('V')?;
        let (j, stage) = r.split_once('_')?;
        Some(Region::Tube {
            j: j.parse().ok()?,
            stage: stage.parse().ok()?,
        })
    }

    pub fn is_defined(&self) -> bool {
        *self != Region::Undefined
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.tag())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Grid cells per chart side.
    pub resolution: usize,
    pub halo: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            resolution: DEFAULT_RESOLUTION,
            halo: DEFAULT_HALO,
        }
    }
}

/// Component counts of a saddle scaffold in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScaffoldCounts {
    pub sigma_minus: usize,
    pub d_arcs: usize,
    pub c_points: usize,
    pub q_points: usize,
}

/// Diagnostics of one stage of the construction.
#[derive(Debug, Clone, Serialize)]
pub struct StageLog {
    pub stage: usize,
    pub point: usize,
    pub kind: PointKind,
    pub level: f64,
    /// Chart scale of the new fixed point.
    pub rho: f64,
    pub halvings: usize,
    /// Components of the previous boundary, and how many of them the new
    /// scaffold reaches.
    pub boundary_components: usize,
    pub reached_components: usize,
    pub t2: Option<f64>,
    pub psi_spread: Option<f64>,
    pub t1_range: Option<(f64, f64)>,
    pub collar_depth: Option<f64>,
    pub scaffold: Option<ScaffoldCounts>,
    pub classified: usize,
    pub flagged: usize,
    pub regions: BTreeMap<String, usize>,
}

impl StageLog {
    fn new(stage: usize, record: &FixedPointRecord, rho: f64) -> Self {
        StageLog {
            stage,
            point: record.id,
            kind: record.kind,
            level: stage as f64 + THIRD,
            rho,
            halvings: 0,
            boundary_components: 0,
            reached_components: 0,
            t2: None,
            psi_spread: None,
            t1_range: None,
            collar_depth: None,
            scaffold: None,
            classified: 0,
            flagged: 0,
            regions: BTreeMap::new(),
        }
    }
}

/// Value of the energy function at a fixed point, by order position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointValue {
    pub position: usize,
    pub id: usize,
    pub kind: PointKind,
    pub index: usize,
    pub location: ChartPoint,
    /// Grid node at the fixed point, if there is one.
    pub node: Option<usize>,
    /// Stored node value, or the interpolated value off-grid.
    pub value: Option<f64>,
}

/// The sampled energy function with its provenance.
#[derive(Debug, Clone)]
pub struct EnergyField {
    pub grid: Grid,
    /// One value per grid node; NaN where undefined.
    pub values: Vec<f64>,
    pub regions: Vec<Region>,
    pub k: usize,
    pub fixed_points: Vec<FixedPointValue>,
    pub field: String,
    /// Hash of the flow spec the field was built from.
    pub spec_hash: String,
    pub stages: Vec<StageLog>,
}

impl EnergyField {
    /// Interpolated value at `p`.
    pub fn eval(&self, p: &ChartPoint) -> Option<f64> {
        self.grid.interpolate(&self.values, p)
    }

    /// Active nodes left without a value.
    pub fn undefined(&self) -> usize {
        (0..self.grid.len())
            .filter(|&n| self.grid.active(n) && !self.values[n].is_finite())
            .count()
    }

    /// Largest `|phi(a) - phi(b)|` over adjacent defined nodes with
    /// different region tags.
    pub fn interface_jump(&self) -> f64 {
        self.grid
            .adjacent_pairs()
            .into_iter()
            .filter(|&(a, b)| self.regions[a] != self.regions[b])
            .map(|(a, b)| (self.values[a] - self.values[b]).abs())
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    /// Smallest and largest defined value.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        Some(it.fold((first, first), |(a, b), v| (a.min(v), b.max(v))))
    }
}

/// Outcome of probing one node during a stage.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    value: f64,
    region: Region,
    flagged: bool,
}

impl Outcome {
    fn set(value: f64, region: Region) -> Self {
        Outcome {
            value,
            region,
            flagged: false,
        }
    }

    fn none() -> Self {
        Outcome {
            value: f64::NAN,
            region: Region::Undefined,
            flagged: false,
        }
    }

    fn flagged() -> Self {
        Outcome {
            flagged: true,
            ..Outcome::none()
        }
    }
}

/// Forward hit of the boundary of the previous sublevel set.
#[derive(Debug, Clone, Copy)]
struct BoundaryHit {
    time: f64,
    located: Located,
}

enum Probe {
    Hit(BoundaryHit),
    Miss,
    Failed,
}

/// The level set `dU_{i-1}` at level `i - 2/3`, seen through the halo.
struct Boundary<'a> {
    grid: &'a Grid,
    halo: &'a [f64],
    level: f64,
    contours: ContourSet,
}

impl<'a> Boundary<'a> {
    fn new(grid: &'a Grid, halo: &'a [f64], level: f64) -> Self {
        let contours = ContourSet::extract(grid.manifold, &grid.lattice, halo, level);
        Boundary {
            grid,
            halo,
            level,
            contours,
        }
    }

    /// Negative inside the previous sublevel set.
    fn g(&self, p: &ChartPoint) -> f64 {
        self.grid.interpolate(self.halo, p).map_or(1.0, |v| v - self.level)
    }

    fn probe(&self, system: &FlowSystem, y: &ChartPoint, direction: Direction, t_max: f64) -> Probe {
        match system.hit_time(y, |p| self.g(p), direction, t_max) {
            Ok(hit) => match self.contours.locate(&hit.point) {
                Some(located) if located.distance <= LOCATE_SLACK * self.grid.h() => Probe::Hit(BoundaryHit {
                    time: hit.time,
                    located,
                }),
                _ => Probe::Failed,
            },
            Err(Error::NoCrossing { .. }) | Err(Error::LeftDomain { .. }) => Probe::Miss,
            Err(_) => Probe::Failed,
        }
    }
}

struct Builder<'a> {
    system: &'a FlowSystem,
    records: &'a [FixedPointRecord],
    order: &'a [usize],
    grid: Grid,
    delta: f64,
    values: Vec<f64>,
    halo: Vec<f64>,
    regions: Vec<Region>,
    logs: Vec<StageLog>,
}

/// Run the whole induction and return the sampled energy function.
pub fn build(analysis: &Analysis, spectrum: &OrderedSpectrum, opts: &BuildOptions) -> Result<EnergyField> {
    let system = &analysis.system;
    if !system.is_trapped() {
        return Err(Error::Spec(
            "the flow is not inward-pointing on the disk boundary; the construction needs a trapped region".into(),
        ));
    }
    let grid = Grid::new(system.manifold, opts.resolution);
    let n = grid.len();
    let mut b = Builder {
        system,
        records: &analysis.records,
        order: &spectrum.order,
        grid,
        delta: opts.halo,
        values: vec![f64::NAN; n],
        halo: vec![f64::NAN; n],
        regions: vec![Region::Undefined; n],
        logs: Vec::new(),
    };
    let k = spectrum.order.len();
    for i in 1..=k {
        let record = &b.records[b.order[i - 1]];
        let (outcomes, mut log) = match record.kind {
            PointKind::Sink => b.sink_stage(i)?,
            PointKind::Saddle => saddle::saddle_stage(&b, i)?,
            PointKind::Source => b.source_stage(i)?,
        };
        b.commit(i, &outcomes, &mut log)?;
        b.logs.push(log);
    }
    b.finish(k)
}

impl<'a> Builder<'a> {
    fn record(&self, i: usize) -> &'a FixedPointRecord {
        &self.records[self.order[i - 1]]
    }

    /// Active nodes outside `U_{i-1}`.
    fn open_nodes(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&n| self.grid.active(n) && !self.values[n].is_finite())
            .collect()
    }

    fn sink_count(&self) -> usize {
        self.order.iter().filter(|&&id| self.records[id].kind == PointKind::Sink).count()
    }

    /// Chart of the sink at position `s`, scaled so that its ball reaches the
    /// last sink level plus the halo.
    fn sink_chart(&self, s: usize) -> LocalMorseChart {
        let r = self.record(s);
        let m = self.sink_count() as f64;
        let reach = (m + THIRD + self.delta - s as f64).sqrt();
        r.local_morse(s as f64).with_scale(r.radius / reach)
    }

    fn sink_stage(&self, i: usize) -> Result<(Vec<(usize, Outcome)>, StageLog)> {
        if (1..i).any(|s| self.record(s).kind != PointKind::Sink) {
            return Err(Error::scaffold(i, "a sink follows a saddle or source in the order"));
        }
        let charts: Vec<LocalMorseChart> = (1..=i).map(|s| self.sink_chart(s)).collect();
        let top = i as f64 + THIRD + self.delta;
        let outcomes = self
            .open_nodes()
            .into_par_iter()
            .map(|n| {
                let y = self.grid.point(n);
                let mut found: Option<(f64, usize)> = None;
                let mut overlap = false;
                for (s, chart) in charts.iter().enumerate() {
                    if let Some(v) = chart.try_eval(self.system, &y) {
                        if v <= top {
                            overlap |= found.is_some();
                            found = Some((v, s + 1));
                        }
                    }
                }
                let out = match found {
                    _ if overlap => Outcome::flagged(),
                    Some((v, s)) => Outcome::set(v, Region::Local(s)),
                    None => Outcome::none(),
                };
                (n, out)
            })
            .collect();
        Ok((outcomes, StageLog::new(i, self.record(i), charts[i - 1].scale)))
    }

    fn source_stage(&self, i: usize) -> Result<(Vec<(usize, Outcome)>, StageLog)> {
        let record = self.record(i);
        if i == 1 {
            return Err(Error::scaffold(i, "the order starts with a source"));
        }
        let last = i == self.order.len();
        let boundary = Boundary::new(&self.grid, &self.halo, i as f64 - 2.0 * THIRD);
        let base = record.local_morse(i as f64);
        let mut rho = record.radius / CHART_MARGIN;
        let mut halvings = 0;
        let (chart, reached) = loop {
            let chart = base.with_scale(rho);
            if let Some(reached) = self.source_scaffold(i, &chart, &boundary)? {
                break (chart, reached);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::scaffold(i, "the level sphere of the source meets the previous sublevel set"));
            }
            rho *= 0.5;
        };
        let level = i as f64 + THIRD;
        let top = level + self.delta;
        let lower = i as f64 - THIRD;
        let tube = |j: u8| if last { Region::Closing(i) } else { Region::Tube { j, stage: i } };
        let inward = |p: &ChartPoint| chart.try_eval(self.system, p).map_or(-1.0, |v| v - lower);
        let outcomes = self
            .open_nodes()
            .into_par_iter()
            .map(|n| {
                let y = self.grid.point(n);
                if let Some(v) = chart.try_eval(self.system, &y) {
                    if v >= lower {
                        return (n, Outcome::set(v, Region::Local(i)));
                    }
                }
                let out = match boundary.probe(self.system, &y, Direction::Forward, HIT_T_MAX) {
                    Probe::Failed => Outcome::flagged(),
                    Probe::Miss => Outcome::none(),
                    Probe::Hit(hit) if !reached[hit.located.line] => {
                        let v = i as f64 + hit.time - 2.0 * THIRD;
                        if v <= top {
                            Outcome::set(v, Region::Tube { j: 2, stage: i })
                        } else {
                            Outcome::none()
                        }
                    }
                    Probe::Hit(hit) => match self.system.hit_time(&y, inward, Direction::Backward, HIT_T_MAX) {
                        Ok(back) => {
                            let sigma = back.time;
                            let v = i as f64 - THIRD * (1.0 + sigma / (sigma + hit.time));
                            Outcome::set(v, tube(1))
                        }
                        Err(Error::NoCrossing { .. }) | Err(Error::LeftDomain { .. }) => Outcome::none(),
                        Err(_) => Outcome::flagged(),
                    },
                };
                (n, out)
            })
            .collect();
        let mut log = StageLog::new(i, record, rho);
        log.halvings = halvings;
        log.boundary_components = boundary.contours.len();
        log.reached_components = reached.iter().filter(|&&r| r).count();
        Ok((outcomes, log))
    }

    /// Boundary components reached by forward orbits from the level sphere
    /// `phi_p = i - 1/3`, or `None` when the cap meets `U_{i-1}`.
    fn source_scaffold(&self, i: usize, chart: &LocalMorseChart, boundary: &Boundary) -> Result<Option<Vec<bool>>> {
        let r = THIRD.sqrt();
        let sphere: Vec<[f64; 2]> = if chart.dim == 1 {
            vec![[r, 0.0], [-r, 0.0]]
        } else {
            (0..128)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / 128.0;
                    [r * a.cos(), r * a.sin()]
                })
                .collect()
        };
        // the cap, sampled on rings, must stay outside U_{i-1}
        for ring in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for x in &sphere {
                let y = chart.point(self.system, [x[0] * ring, x[1] * ring]);
                if boundary.g(&y) <= 0.0 {
                    return Ok(None);
                }
            }
        }
        let mut reached = vec![false; boundary.contours.len()];
        for x in &sphere {
            let y = chart.point(self.system, *x);
            match boundary.probe(self.system, &y, Direction::Forward, HIT_T_MAX) {
                Probe::Hit(hit) => reached[hit.located.line] = true,
                _ => {
                    return Err(Error::scaffold(
                        i,
                        format!("the forward orbit of {y:?} on the source's level sphere misses the previous boundary"),
                    ))
                }
            }
        }
        Ok(Some(reached))
    }

    fn commit(&mut self, i: usize, outcomes: &[(usize, Outcome)], log: &mut StageLog) -> Result<()> {
        let level = i as f64 + THIRD;
        let top = level + self.delta;
        let eps = 1e-12;
        let mut flagged = 0;
        for &(n, o) in outcomes {
            flagged += o.flagged as usize;
            let v = o.value;
            if v.is_finite() && v <= level + eps {
                if v < 1.0 - eps {
                    return Err(Error::scaffold(i, format!("value {v} below 1 at node {n}")));
                }
                self.values[n] = v;
                self.halo[n] = v;
                self.regions[n] = o.region;
                *log.regions.entry(o.region.tag()).or_default() += 1;
            } else if v.is_finite() && v <= top {
                self.halo[n] = v;
            } else {
                self.halo[n] = f64::NAN;
            }
        }
        log.classified = outcomes.len();
        log.flagged = flagged;
        if flagged as f64 > FLAG_FRACTION * outcomes.len().max(1) as f64 {
            return Err(Error::scaffold(
                i,
                format!("{flagged} of {} nodes could not be assigned to a tube", outcomes.len()),
            ));
        }
        // A_i inside U_i, the remaining fixed points outside
        for s in 1..=self.order.len() {
            let p = &self.record(s).location;
            let v = match self.grid.node_at(p) {
                Some(n) => Some(self.values[n]).filter(|v| v.is_finite()),
                None => self.grid.interpolate(&self.values, p),
            };
            let inside = v.is_some_and(|v| v <= level + eps);
            if s <= i && !inside {
                return Err(Error::scaffold(i, format!("fixed point {s} of the order is not inside U_{i}")));
            }
            if s > i && inside {
                return Err(Error::scaffold(i, format!("U_{i} already contains fixed point {s} of the order")));
            }
        }
        Ok(())
    }

    fn finish(self, k: usize) -> Result<EnergyField> {
        let fixed_points = (1..=k)
            .map(|s| {
                let r = self.record(s);
                let node = self.grid.node_at(&r.location);
                let value = match node {
                    Some(n) => Some(self.values[n]).filter(|v| v.is_finite()),
                    None => self.grid.interpolate(&self.values, &r.location),
                };
                FixedPointValue {
                    position: s,
                    id: r.id,
                    kind: r.kind,
                    index: r.index,
                    location: r.location,
                    node,
                    value,
                }
            })
            .collect();
        let field = EnergyField {
            grid: self.grid,
            values: self.values,
            regions: self.regions,
            k,
            fixed_points,
            field: self.system.field.describe(),
            spec_hash: String::new(),
            stages: self.logs,
        };
        if self.system.manifold.is_closed() {
            let missing = field.undefined();
            if missing as f64 > FLAG_FRACTION * field.grid.len() as f64 {
                return Err(Error::scaffold(
                    k,
                    format!("{missing} of {} nodes remain undefined after the last stage", field.grid.len()),
                ));
            }
        }
        Ok(field)
    }
}
