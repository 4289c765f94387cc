//! Numerical checks of a built energy function: decrease along orbits,
//! Morse structure at the fixed points, the Euler sum, the unstable-set
//! decomposition and agreement with the combinatorial Lyapunov layering.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::EnergyField;
use crate::fixed_points::FixedPointRecord;
use crate::flow::{ChartPoint, Direction, FlowSystem, ManifoldKind, ManifoldSpec};
use crate::order::OrderedSpectrum;
use crate::pipeline::Analysis;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub samples: usize,
    pub horizons: Vec<f64>,
    /// Allowed increase along an orbit is `1e-6 + monotone_c * h`.
    pub monotone_c: f64,
    /// Samples closer than `exclusion_cells * h` to a fixed point are skipped.
    pub exclusion_cells: f64,
    /// Quadratic fits use the nodes within `fit_cells * h` of a fixed point.
    pub fit_cells: f64,
    /// Fit residual limit relative to the value range `k - 1`.
    pub fit_tol: f64,
    /// Regular samples need a gradient above `gradient_fraction` times the median.
    pub gradient_fraction: f64,
    pub oracle_pairs: usize,
    /// Nodes per chart side visited by the decomposition check.
    pub decomposition_side: usize,
    pub decomposition_t_max: f64,
    /// Largest tolerated fraction of non-convergent nodes.
    pub decomposition_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            samples: 1000,
            horizons: vec![0.1, 0.5, 1.0],
            monotone_c: 1.0,
            exclusion_cells: 3.0,
            fit_cells: 5.0,
            fit_tol: 1e-3,
            gradient_fraction: 0.05,
            oracle_pairs: 10_000,
            decomposition_side: 64,
            decomposition_t_max: 100.0,
            decomposition_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub samples: usize,
    pub horizons: Vec<f64>,
    pub tolerance: f64,
    /// (sample, horizon) pairs where both values are defined.
    pub evaluated: usize,
    pub violations: usize,
    /// Largest `phi(f^t x) - phi(x)` seen.
    pub worst_increase: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadraticFit {
    pub position: usize,
    pub expected_index: usize,
    pub fitted_index: Option<usize>,
    pub nodes: usize,
    pub residual: f64,
    pub hessian_eigenvalues: Vec<f64>,
    /// Stored value at the fixed point's node, when it has one.
    pub node_value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularReport {
    pub samples: usize,
    pub median_gradient: f64,
    pub threshold: f64,
    pub below: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalReport {
    pub fit_radius: f64,
    pub residual_limit: f64,
    pub fits: Vec<QuadraticFit>,
    pub regular: RegularReport,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EulerReport {
    /// Fixed points per index.
    pub counts: Vec<usize>,
    pub sum: i64,
    pub expected: i64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub stride: usize,
    pub nodes: usize,
    pub t_max: f64,
    pub capture_radius: f64,
    pub backward_failures: usize,
    pub forward_failures: usize,
    /// Backward orbits that leave a planar disk through its rim.
    pub escaped: usize,
    /// Nodes whose backward orbit ends at each fixed point, by order position.
    pub backward_limits: Vec<usize>,
    /// Unstable branches ending at a fixed point that is not earlier in the order.
    pub late_branch_limits: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub pairs: usize,
    pub compared: usize,
    pub exempt: usize,
    pub contradictions: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseCheckReport {
    pub options: VerifyOptions,
    pub grid_spacing: f64,
    pub monotone: MonotoneReport,
    pub critical: CriticalReport,
    pub euler: EulerReport,
    pub decomposition: DecompositionReport,
    pub oracle: OracleReport,
    pub pass: bool,
}

/// Uniformly distributed point of the manifold (area measure on the sphere).
pub fn random_point<R: Rng>(manifold: &ManifoldSpec, rng: &mut R) -> ChartPoint {
    match manifold.kind {
        ManifoldKind::Circle => ChartPoint::on_line(rng.gen::<f64>()),
        ManifoldKind::Torus => ChartPoint::plane(rng.gen(), rng.gen()),
        ManifoldKind::Sphere => {
            let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let a = std::f64::consts::TAU * rng.gen::<f64>();
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (x, y) = (r * a.cos(), r * a.sin());
            if z <= 0.0 {
                ChartPoint::new(0, [x / (1.0 - z), y / (1.0 - z)])
            } else {
                ChartPoint::new(1, [x / (1.0 + z), y / (1.0 + z)])
            }
        }
        ManifoldKind::PlaneDisk { radius } => {
            let r = radius * rng.gen::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.gen::<f64>();
            ChartPoint::plane(r * a.cos(), r * a.sin())
        }
    }
}

fn near_fixed_point(system: &FlowSystem, records: &[FixedPointRecord], p: &ChartPoint, radius: f64) -> bool {
    records.iter().any(|r| system.manifold.distance(&r.location, p) < radius)
}

/// Seeded samples away from the fixed points.
fn regular_samples(system: &FlowSystem, records: &[FixedPointRecord], n: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<ChartPoint> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 100 * n {
        tries += 1;
        let p = random_point(&system.manifold, rng);
        if !near_fixed_point(system, records, &p, radius) {
            out.push(p);
        }
    }
    out
}

pub fn check_monotone(field: &EnergyField, system: &FlowSystem, records: &[FixedPointRecord], opts: &VerifyOptions) -> MonotoneReport {
    let h = field.grid.h();
    let tolerance = 1e-6 + opts.monotone_c * h;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples = regular_samples(system, records, opts.samples, opts.exclusion_cells * h, &mut rng);
    let diffs: Vec<f64> = samples
        .par_iter()
        .flat_map_iter(|x| {
            let phi0 = field.eval(x);
            opts.horizons.iter().filter_map(move |&t| {
                let y = system.flow(x, t).ok()?;
                Some(field.eval(&y)? - phi0?)
            })
        })
        .collect();
    let violations = diffs.iter().filter(|&&d| d > tolerance).count();
    MonotoneReport {
        samples: samples.len(),
        horizons: opts.horizons.clone(),
        tolerance,
        evaluated: diffs.len(),
        violations,
        worst_increase: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        pass: violations == 0 && !diffs.is_empty(),
    }
}

/// Least-squares quadratic through the nodes near `p`, in `p`'s chart.
fn fit_quadratic(field: &EnergyField, p: &ChartPoint, radius: f64) -> Option<(usize, f64, Vec<f64>)> {
    let m = &field.grid.manifold;
    let dim = m.dim();
    let mut rows: Vec<([f64; 2], f64)> = Vec::new();
    for n in 0..field.grid.len() {
        let v = field.values[n];
        if !v.is_finite() {
            continue;
        }
        let q = field.grid.point(n);
        if m.distance(p, &q) > radius {
            continue;
        }
        rows.push((m.delta(p, &q), v));
    }
    let cols = if dim == 1 { 3 } else { 6 };
    if rows.len() < cols + 2 {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), cols, |r, c| {
        let [x, y] = rows[r].0;
        match (dim, c) {
            (_, 0) => 1.0,
            (_, 1) => x,
            (1, 2) => x * x,
            (_, 2) => y,
            (_, 3) => x * x,
            (_, 4) => x * y,
            _ => y * y,
        }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let resid = &a * &coef - &b;
    let rms = (resid.norm_squared() / rows.len() as f64).sqrt();
    let eig = if dim == 1 {
        vec![2.0 * coef[2]]
    } else {
        let hess = Matrix2::new(2.0 * coef[3], coef[4], coef[4], 2.0 * coef[5]);
        let mut e: Vec<f64> = hess.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    };
    Some((rows.len(), rms, eig))
}

fn gradient(field: &EnergyField, p: &ChartPoint) -> Option<f64> {
    let m = &field.grid.manifold;
    let h = field.grid.h();
    let p = m.owning(p);
    let mut g2 = 0.0;
    for d in 0..m.dim() {
        let mut step = [0.0; 2];
        step[d] = h;
        let a = field.eval(&m.offset(&p, step))?;
        step[d] = -h;
        let b = field.eval(&m.offset(&p, step))?;
        g2 += ((a - b) / (2.0 * h)).powi(2);
    }
    Some(g2.sqrt())
}

pub fn check_critical_structure(
    field: &EnergyField,
    system: &FlowSystem,
    records: &[FixedPointRecord],
    opts: &VerifyOptions,
) -> CriticalReport {
    let h = field.grid.h();
    let radius = opts.fit_cells * h;
    let scale = (field.k as f64 - 1.0).max(1.0);
    let limit = opts.fit_tol * scale;
    let fits: Vec<QuadraticFit> = field
        .fixed_points
        .iter()
        .map(|fp| {
            let node_value = fp.node.map(|n| field.values[n]);
            let exact = node_value.is_none_or(|v| v == fp.position as f64);
            match fit_quadratic(field, &fp.location, radius) {
                Some((nodes, residual, eig)) => {
                    let big = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
                    let nondegenerate = big > 0.0 && eig.iter().all(|e| e.abs() > 1e-6 * big);
                    let fitted_index = nondegenerate.then(|| eig.iter().filter(|&&e| e < 0.0).count());
                    QuadraticFit {
                        position: fp.position,
                        expected_index: fp.index,
                        fitted_index,
                        nodes,
                        residual,
                        hessian_eigenvalues: eig,
                        node_value,
                        pass: fitted_index == Some(fp.index) && residual < limit && exact,
                    }
                }
                None => QuadraticFit {
                    position: fp.position,
                    expected_index: fp.index,
                    fitted_index: None,
                    nodes: 0,
                    residual: f64::NAN,
                    hessian_eigenvalues: Vec::new(),
                    node_value,
                    pass: false,
                },
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let samples = regular_samples(system, records, opts.samples, opts.exclusion_cells * h, &mut rng);
    let mut grads: Vec<f64> = samples.par_iter().filter_map(|p| gradient(field, p)).collect();
    let below;
    let median;
    if grads.is_empty() {
        median = 0.0;
        below = 0;
    } else {
        let mut sorted = grads.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median = sorted[sorted.len() / 2];
        below = grads.iter().filter(|&&g| g <= opts.gradient_fraction * median).count();
    }
    grads.clear();
    let regular = RegularReport {
        samples: samples.len(),
        median_gradient: median,
        threshold: opts.gradient_fraction * median,
        below,
        pass: below == 0 && median > 0.0,
    };
    let pass = fits.iter().all(|f| f.pass) && regular.pass;
    CriticalReport {
        fit_radius: radius,
        residual_limit: limit,
        fits,
        regular,
        pass,
    }
}

/// Alternating count of fixed points by index against the Euler
/// characteristic of the manifold.
pub fn check_euler(indices: &[usize], manifold: &ManifoldSpec) -> EulerReport {
    let mut counts = vec![0usize; manifold.dim() + 1];
    for &i in indices {
        if i < counts.len() {
            counts[i] += 1;
        }
    }
    let sum: i64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| if i % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum();
    let expected = manifold.euler_characteristic();
    EulerReport {
        counts,
        sum,
        expected,
        pass: sum == expected,
    }
}

enum Limit {
    Point(usize),
    Escaped,
    None,
}

fn orbit_limit(system: &FlowSystem, records: &[FixedPointRecord], start: &ChartPoint, direction: Direction, t_max: f64, capture: f64) -> Limit {
    let nearest = |p: &ChartPoint| records.iter().position(|r| system.manifold.distance(&r.location, p) < capture);
    if let Some(i) = nearest(start) {
        return Limit::Point(i);
    }
    let mut found = None;
    match system.walk(start, direction, t_max, |_, _, _, q| {
        found = nearest(q);
        Ok(found.is_some())
    }) {
        Ok(_) => found.map_or(Limit::None, Limit::Point),
        Err(crate::Error::LeftDomain { .. }) => Limit::Escaped,
        Err(_) => Limit::None,
    }
}

pub fn check_decomposition(
    field: &EnergyField,
    analysis: &Analysis,
    spectrum: &OrderedSpectrum,
    opts: &VerifyOptions,
) -> DecompositionReport {
    let system = &analysis.system;
    let records = &analysis.records;
    let lattice = &field.grid.lattice;
    let stride = lattice.nx.div_ceil(opts.decomposition_side.max(1)).max(1);
    let capture = 0.5 * records.iter().map(|r| r.radius).fold(f64::INFINITY, f64::min);
    let nodes: Vec<usize> = (0..field.grid.len())
        .filter(|&n| {
            let (_, ix, iy) = lattice.split(n);
            ix % stride == 0 && iy % stride == 0 && field.grid.active(n)
        })
        .filter(|&n| {
            // sphere nodes are visited from the chart that owns them
            let p = field.grid.point(n);
            field.grid.manifold.owning(&p).chart == p.chart
        })
        .collect();
    let limits: Vec<(Limit, Limit)> = nodes
        .par_iter()
        .map(|&n| {
            let p = field.grid.point(n);
            let t = opts.decomposition_t_max;
            (
                orbit_limit(system, records, &p, Direction::Backward, t, capture),
                orbit_limit(system, records, &p, Direction::Forward, t, capture),
            )
        })
        .collect();
    let mut backward_limits = vec![0usize; records.len()];
    let (mut back_fail, mut fwd_fail, mut escaped) = (0, 0, 0);
    for (b, f) in &limits {
        match b {
            Limit::Point(i) => backward_limits[spectrum.position[*i]] += 1,
            Limit::Escaped => escaped += 1,
            Limit::None => back_fail += 1,
        }
        if !matches!(f, Limit::Point(_)) {
            fwd_fail += 1;
        }
    }
    let late = spectrum.late_branch_limits(&analysis.traces).len();
    let allowed = opts.decomposition_tol * nodes.len() as f64;
    DecompositionReport {
        stride,
        nodes: nodes.len(),
        t_max: opts.decomposition_t_max,
        capture_radius: capture,
        backward_failures: back_fail,
        forward_failures: fwd_fail,
        escaped,
        backward_limits,
        late_branch_limits: late,
        pass: (back_fail as f64) <= allowed && (fwd_fail as f64) <= allowed && late == 0,
    }
}

/// Pairs `(x, f^1(x))` in different condensation classes must be ordered the
/// same way by the box layering and by the energy function.
pub fn cross_check_oracle(field: &EnergyField, analysis: &Analysis, opts: &VerifyOptions) -> OracleReport {
    let system = &analysis.system;
    let tol = 1e-6 + opts.monotone_c * field.grid.h();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let xs: Vec<ChartPoint> = (0..opts.oracle_pairs).map(|_| random_point(&system.manifold, &mut rng)).collect();
    // Some(None) = exempt, Some(Some(c)) = compared, None = not evaluable
    let verdicts: Vec<Option<Option<bool>>> = xs
        .par_iter()
        .map(|x| {
            let y = system.flow(x, 1.0).ok()?;
            let (bx, by) = (analysis.cover.locate(x)?, analysis.cover.locate(&y)?);
            let (lx, ly) = (analysis.chain.lyapunov[bx], analysis.chain.lyapunov[by]);
            if analysis.chain.class_of[bx] == analysis.chain.class_of[by] || lx == ly {
                return Some(None);
            }
            let (px, py) = (field.eval(x)?, field.eval(&y)?);
            let contradiction = (lx > ly && py - px > tol) || (lx < ly && px - py > tol);
            Some(Some(contradiction))
        })
        .collect();
    let compared = verdicts.iter().filter(|v| matches!(v, Some(Some(_)))).count();
    let exempt = verdicts.iter().filter(|v| matches!(v, Some(None))).count();
    let contradictions = verdicts.iter().filter(|v| matches!(v, Some(Some(true)))).count();
    OracleReport {
        pairs: xs.len(),
        compared,
        exempt,
        contradictions,
        pass: contradictions == 0,
    }
}

/// Every check, with the thresholds used.
pub fn verify(field: &EnergyField, analysis: &Analysis, spectrum: &OrderedSpectrum, opts: &VerifyOptions) -> MorseCheckReport {
    let system = &analysis.system;
    let records = &analysis.records;
    let monotone = check_monotone(field, system, records, opts);
    let critical = check_critical_structure(field, system, records, opts);
    let indices: Vec<usize> = records.iter().map(|r| r.index).collect();
    let euler = check_euler(&indices, &system.manifold);
    let decomposition = check_decomposition(field, analysis, spectrum, opts);
    let oracle = cross_check_oracle(field, analysis, opts);
    let pass = monotone.pass && critical.pass && euler.pass && decomposition.pass && oracle.pass;
    MorseCheckReport {
        options: opts.clone(),
        grid_spacing: field.grid.h(),
        monotone,
        critical,
        euler,
        decomposition,
        oracle,
        pass,
    }
}
