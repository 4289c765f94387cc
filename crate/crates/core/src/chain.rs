//! Outer approximation of the chain recurrent set on a box cover.
//!
//! Boxes are grid cells of each chart. An edge `b -> b'` is present when
//! the image under the time-`tau` map of some sample of `b`, inflated by
//! `eps`, meets `b'`; paths in the graph then over-approximate eps-chains
//! whose steps all have length `tau >= 1`.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{ChartPoint, FlowSystem, ManifoldKind, ManifoldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BoxId {
    pub chart: u8,
    pub index: [u32; 2],
}

#[derive(Debug, Clone)]
struct ChartCells {
    origin: [f64; 2],
    side: f64,
    n: usize,
    periodic: bool,
    /// Dense lookup from cell index to box number.
    slot: Vec<Option<u32>>,
}

#[derive(Debug, Clone)]
pub struct BoxCover {
    pub manifold: ManifoldSpec,
    pub resolution: usize,
    pub boxes: Vec<BoxId>,
    pub diameter: f64,
    charts: Vec<ChartCells>,
}

impl BoxCover {
    /// Cover with `resolution` cells per side in every chart.
    pub fn new(manifold: ManifoldSpec, resolution: usize) -> Self {
        assert!(resolution >= 2, "box cover needs at least 2 cells per side");
        let dim = manifold.dim();
        let (origin, extent, periodic, disk) = match manifold.kind {
            ManifoldKind::Circle | ManifoldKind::Torus => ([0.0, 0.0], 1.0, true, None),
            ManifoldKind::Sphere => ([-1.0, -1.0], 2.0, false, Some(1.0)),
            ManifoldKind::PlaneDisk { radius } => ([-radius, -radius], 2.0 * radius, false, Some(radius)),
        };
        let side = extent / resolution as f64;
        let ny = if dim == 1 { 1 } else { resolution };
        let mut boxes = Vec::new();
        let mut charts = Vec::new();
        for chart in 0..manifold.chart_count() as u8 {
            let mut slot = vec![None; resolution * ny];
            for j in 0..ny {
                for i in 0..resolution {
                    let keep = match disk {
                        None => true,
                        Some(r) => {
                            let lo = [origin[0] + i as f64 * side, origin[1] + j as f64 * side];
                            let cx = 0.0f64.clamp(lo[0], lo[0] + side);
                            let cy = 0.0f64.clamp(lo[1], lo[1] + side);
                            cx.hypot(cy) <= r
                        }
                    };
                    if keep {
                        slot[j * resolution + i] = Some(boxes.len() as u32);
                        boxes.push(BoxId {
                            chart,
                            index: [i as u32, j as u32],
                        });
                    }
                }
            }
            charts.push(ChartCells {
                origin,
                side,
                n: resolution,
                periodic,
                slot,
            });
        }
        let mut cover = BoxCover {
            manifold,
            resolution,
            boxes,
            diameter: 0.0,
            charts,
        };
        cover.diameter = (0..cover.boxes.len())
            .map(|b| {
                let c = cover.corners(b);
                let d1 = manifold.distance(&c[0], &c[3]);
                let d2 = manifold.distance(&c[1], &c[2]);
                d1.max(d2)
            })
            .fold(0.0, f64::max);
        cover
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Side length of a cell in chart coordinates.
    pub fn side(&self) -> f64 {
        self.charts[0].side
    }

    fn lower(&self, b: usize) -> [f64; 2] {
        let id = self.boxes[b];
        let cc = &self.charts[id.chart as usize];
        let y = if self.dim() == 1 { 0.0 } else { cc.origin[1] + id.index[1] as f64 * cc.side };
        [cc.origin[0] + id.index[0] as f64 * cc.side, y]
    }

    /// Corners in the order (lo,lo), (hi,lo), (lo,hi), (hi,hi); in one
    /// dimension the first two are the interval ends and the rest repeat them.
    pub fn corners(&self, b: usize) -> [ChartPoint; 4] {
        let id = self.boxes[b];
        let lo = self.lower(b);
        let s = self.side();
        let raw = |dx: f64, dy: f64| ChartPoint::new(id.chart, [lo[0] + dx, lo[1] + dy]);
        if self.dim() == 1 {
            [raw(0.0, 0.0), raw(s, 0.0), raw(0.0, 0.0), raw(s, 0.0)]
        } else {
            [raw(0.0, 0.0), raw(s, 0.0), raw(0.0, s), raw(s, s)]
        }
    }

    pub fn center(&self, b: usize) -> ChartPoint {
        let id = self.boxes[b];
        let lo = self.lower(b);
        let h = 0.5 * self.side();
        let y = if self.dim() == 1 { 0.0 } else { lo[1] + h };
        self.manifold.normalize(&ChartPoint::new(id.chart, [lo[0] + h, y]))
    }

    /// Lattice of `per_side^dim` sample points including the corners.
    pub fn samples(&self, b: usize, per_side: usize) -> Vec<ChartPoint> {
        let id = self.boxes[b];
        let lo = self.lower(b);
        let s = self.side();
        let step = s / (per_side - 1) as f64;
        let rows = if self.dim() == 1 { 1 } else { per_side };
        let mut out = Vec::with_capacity(per_side * rows);
        for j in 0..rows {
            for i in 0..per_side {
                let y = if self.dim() == 1 { 0.0 } else { lo[1] + j as f64 * step };
                out.push(ChartPoint::new(id.chart, [lo[0] + i as f64 * step, y]));
            }
        }
        if let ManifoldKind::PlaneDisk { .. } = self.manifold.kind {
            // boxes straddling the rim: keep lattice points inside the disk
            // and the box point nearest the centre
            out.retain(|p| self.manifold.in_domain(p));
            let near = ChartPoint::new(id.chart, [0.0f64.clamp(lo[0], lo[0] + s), 0.0f64.clamp(lo[1], lo[1] + s)]);
            if !out.contains(&near) {
                out.push(near);
            }
        }
        out
    }

    /// Box containing `p`, if any.
    pub fn locate(&self, p: &ChartPoint) -> Option<usize> {
        let q = self.manifold.owning(p);
        let cc = &self.charts[q.chart as usize];
        let cell = |v: f64, o: f64| -> Option<usize> {
            let f = ((v - o) / cc.side).floor();
            if cc.periodic {
                Some((f as i64).rem_euclid(cc.n as i64) as usize)
            } else if f < -1e-9 * cc.n as f64 || f > cc.n as f64 {
                None
            } else {
                Some((f.max(0.0) as usize).min(cc.n - 1))
            }
        };
        let i = cell(q.coords[0], cc.origin[0])?;
        let j = if self.dim() == 1 { 0 } else { cell(q.coords[1], cc.origin[1])? };
        cc.slot[j * cc.n + i].map(|b| b as usize)
    }

    /// Boxes whose closure comes within metric distance `eps` of `q`.
    /// Over-approximates slightly on the sphere.
    pub fn ball(&self, q: &ChartPoint, eps: f64, out: &mut Vec<usize>) {
        let dim = self.dim();
        for (chart, cc) in self.charts.iter().enumerate() {
            let qc = self.manifold.to_chart(q, chart as u8);
            if !(qc.coords[0].is_finite() && qc.coords[1].is_finite()) {
                continue;
            }
            // chart radius covering the metric ball
            let r = match self.manifold.kind {
                ManifoldKind::Sphere => {
                    let n2 = qc.coords[0].powi(2) + qc.coords[1].powi(2);
                    if n2 > 9.0 {
                        continue;
                    }
                    eps * (1.0 + n2).max(2.0)
                }
                _ => eps,
            };
            let span = (r / cc.side).ceil() as i64 + 1;
            let ci = ((qc.coords[0] - cc.origin[0]) / cc.side).floor() as i64;
            let cj = if dim == 1 { 0 } else { ((qc.coords[1] - cc.origin[1]) / cc.side).floor() as i64 };
            let jr = if dim == 1 { 0..=0 } else { (cj - span)..=(cj + span) };
            for j in jr {
                for i in (ci - span)..=(ci + span) {
                    let (ii, jj) = if cc.periodic {
                        (i.rem_euclid(cc.n as i64), j.rem_euclid(cc.n as i64))
                    } else {
                        if i < 0 || j < 0 || i >= cc.n as i64 || j >= cc.n as i64 {
                            continue;
                        }
                        (i, j)
                    };
                    let Some(b) = cc.slot[jj as usize * cc.n + ii as usize] else {
                        continue;
                    };
                    let b = b as usize;
                    // nearest point of the box to q in chart coordinates,
                    // using the unwrapped cell position (i, j)
                    let lo = [cc.origin[0] + i as f64 * cc.side, cc.origin[1] + j as f64 * cc.side];
                    let nx = qc.coords[0].clamp(lo[0], lo[0] + cc.side);
                    let ny = if dim == 1 { 0.0 } else { qc.coords[1].clamp(lo[1], lo[1] + cc.side) };
                    let near = ChartPoint::new(chart as u8, [nx, ny]);
                    if self.manifold.distance(&near, q) <= eps {
                        out.push(b);
                    }
                }
            }
        }
    }

    /// Whether two boxes share a face (same chart), or overlap across
    /// sphere charts.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ia, ib) = (self.boxes[a], self.boxes[b]);
        if ia.chart != ib.chart {
            return self.manifold.distance(&self.center(a), &self.center(b)) <= self.diameter;
        }
        let cc = &self.charts[ia.chart as usize];
        let diff = |u: u32, v: u32| -> u32 {
            let d = u.abs_diff(v);
            if cc.periodic {
                d.min(cc.n as u32 - d)
            } else {
                d
            }
        };
        let d0 = diff(ia.index[0], ib.index[0]);
        let d1 = diff(ia.index[1], ib.index[1]);
        d0 + d1 == 1
    }
}

/// Directed graph on boxes.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    pub tau: f64,
    pub eps: f64,
    pub edges: Vec<Vec<u32>>,
}

impl TransitionGraph {
    pub fn node_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges[a].binary_search(&(b as u32)).is_ok()
    }

    pub fn from_edges(n: usize, list: &[(usize, usize)]) -> Self {
        let mut edges = vec![Vec::new(); n];
        for &(a, b) in list {
            edges[a].push(b as u32);
        }
        for e in &mut edges {
            e.sort_unstable();
            e.dedup();
        }
        TransitionGraph { tau: 1.0, eps: 0.0, edges }
    }

    fn petgraph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::with_capacity(self.node_count(), self.edge_count());
        for _ in 0..self.node_count() {
            g.add_node(());
        }
        for (a, outs) in self.edges.iter().enumerate() {
            for &b in outs {
                g.add_edge(NodeIndex::new(a), NodeIndex::new(b as usize), ());
            }
        }
        g
    }
}

/// Default number of samples per box (a 3x3 lattice in two dimensions).
pub const DEFAULT_SAMPLES_PER_BOX: usize = 9;

pub fn build_transition_graph(
    system: &FlowSystem,
    cover: &BoxCover,
    tau: f64,
    eps: f64,
    samples_per_box: usize,
) -> Result<TransitionGraph> {
    if tau < 1.0 {
        return Err(Error::Spec(format!("transition time tau = {tau} must be >= 1")));
    }
    if eps < cover.diameter * (1.0 - 1e-12) {
        return Err(Error::Spec(format!(
            "inflation eps = {eps} is below the box diameter {}",
            cover.diameter
        )));
    }
    if samples_per_box < 4 {
        return Err(Error::Spec("samples_per_box must be at least 4".into()));
    }
    let per_side = match system.dim() {
        1 => samples_per_box,
        _ => ((samples_per_box as f64).sqrt().round() as usize).max(2),
    };
    let edges = (0..cover.len())
        .into_par_iter()
        .map(|b| {
            let mut targets = Vec::new();
            for s in cover.samples(b, per_side) {
                // samples that leave a disk contribute no edge
                match system.flow(&s, tau) {
                    Ok(img) => cover.ball(&img, eps, &mut targets),
                    Err(Error::LeftDomain { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            let mut t: Vec<u32> = targets.into_iter().map(|x| x as u32).collect();
            t.sort_unstable();
            t.dedup();
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionGraph { tau, eps, edges })
}

/// Strongly connected components (node lists) in reverse topological order.
pub fn strongly_connected(graph: &TransitionGraph) -> Vec<Vec<usize>> {
    tarjan_scc(&graph.petgraph())
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect()
}

/// Nodes lying on a directed cycle.
pub fn chain_recurrent_boxes(graph: &TransitionGraph) -> Vec<usize> {
    let mut out: Vec<usize> = strongly_connected(graph)
        .into_iter()
        .filter(|c| c.len() >= 2 || graph.has_edge(c[0], c[0]))
        .flatten()
        .collect();
    out.sort_unstable();
    out
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Group recurrent boxes into components: mutually reachable groups merged
/// by adjacency. Without a cover only reachability is used.
pub fn chain_components(graph: &TransitionGraph, cover: Option<&BoxCover>) -> Vec<Vec<usize>> {
    let sccs = strongly_connected(graph);
    let n = graph.node_count();
    let mut uf = UnionFind::new(n);
    let mut recurrent = vec![false; n];
    for c in &sccs {
        if c.len() >= 2 || graph.has_edge(c[0], c[0]) {
            for &v in c {
                recurrent[v] = true;
                uf.union(c[0], v);
            }
        }
    }
    if let Some(cover) = cover {
        let rec: Vec<usize> = (0..n).filter(|&v| recurrent[v]).collect();
        let mut probe = Vec::new();
        for &a in &rec {
            probe.clear();
            // neighbours within one cell
            cover.ball(&cover.center(a), cover.diameter, &mut probe);
            for &b in &probe {
                if b != a && recurrent[b] && cover.adjacent(a, b) {
                    uf.union(a, b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in (0..n).filter(|&v| recurrent[v]) {
        groups.entry(uf.find(v)).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Complete analysis of a transition graph.
#[derive(Debug, Clone, Serialize)]
pub struct ChainAnalysis {
    pub recurrent: Vec<usize>,
    pub components: Vec<Vec<usize>>,
    /// Component index per box (recurrent boxes only).
    pub component_of: Vec<Option<usize>>,
    /// Condensation class per box after contracting components.
    pub class_of: Vec<usize>,
    /// Combinatorial Lyapunov value per box.
    pub lyapunov: Vec<f64>,
    pub class_count: usize,
}

/// Layer each box by the longest path from its condensation class to a
/// terminal class. Components are contracted first, so values are constant
/// on them and drop by at least one along every edge between classes.
pub fn combinatorial_lyapunov(graph: &TransitionGraph, components: &[Vec<usize>]) -> ChainAnalysis {
    let n = graph.node_count();
    let mut component_of = vec![None; n];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            component_of[v] = Some(ci);
        }
    }
    // quotient node per box: components first, then remaining boxes
    let mut quotient = vec![0usize; n];
    let mut next = components.len();
    for v in 0..n {
        quotient[v] = match component_of[v] {
            Some(c) => c,
            None => {
                next += 1;
                next - 1
            }
        };
    }
    let mut q_edges: Vec<(usize, usize)> = Vec::new();
    for (a, outs) in graph.edges.iter().enumerate() {
        for &b in outs {
            let (qa, qb) = (quotient[a], quotient[b as usize]);
            if qa != qb {
                q_edges.push((qa, qb));
            }
        }
    }
    let qg = TransitionGraph::from_edges(next, &q_edges);
    let sccs = strongly_connected(&qg);
    let mut scc_of = vec![0usize; next];
    for (i, c) in sccs.iter().enumerate() {
        for &v in c {
            scc_of[v] = i;
        }
    }
    // sccs come sinks-first, so successors are layered before predecessors
    let mut layer = vec![0usize; sccs.len()];
    for (i, c) in sccs.iter().enumerate() {
        let mut best = 0usize;
        let mut any = false;
        for &v in c {
            for &w in &qg.edges[v] {
                let s = scc_of[w as usize];
                if s != i {
                    any = true;
                    best = best.max(layer[s]);
                }
            }
        }
        layer[i] = if any { best + 1 } else { 0 };
    }
    let class_of: Vec<usize> = (0..n).map(|v| scc_of[quotient[v]]).collect();
    let lyapunov = class_of.iter().map(|&c| layer[c] as f64).collect();
    let mut recurrent: Vec<usize> = components.iter().flatten().copied().collect();
    recurrent.sort_unstable();
    ChainAnalysis {
        recurrent,
        components: components.to_vec(),
        component_of,
        class_of,
        lyapunov,
        class_count: sccs.len(),
    }
}

/// Build the graph and run the full analysis.
pub fn analyze(system: &FlowSystem, resolution: usize) -> Result<(BoxCover, TransitionGraph, ChainAnalysis)> {
    let cover = BoxCover::new(system.manifold, resolution);
    let graph = build_transition_graph(system, &cover, 1.0, cover.diameter, DEFAULT_SAMPLES_PER_BOX)?;
    let comps = chain_components(&graph, Some(&cover));
    let analysis = combinatorial_lyapunov(&graph, &comps);
    Ok((cover, graph, analysis))
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentSummary {
    pub boxes: usize,
    pub representative: ChartPoint,
    pub layer: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub manifold: String,
    pub resolution: usize,
    pub tau: f64,
    pub eps: f64,
    pub box_diameter: f64,
    pub node_count: usize,
    pub edge_count: usize,
    pub recurrent_boxes: usize,
    pub condensation_classes: usize,
    pub components: Vec<ComponentSummary>,
}

impl ChainReport {
    pub fn new(cover: &BoxCover, graph: &TransitionGraph, analysis: &ChainAnalysis) -> Self {
        let components = analysis
            .components
            .iter()
            .map(|comp| {
                // representative: the member box closest to the mean of centres
                // taken in the first member's chart (unwrapped on periodic charts)
                let base = cover.center(comp[0]);
                let mut mean = [0.0, 0.0];
                for &b in comp {
                    let d = cover.manifold.delta(&base, &cover.center(b));
                    mean[0] += d[0] / comp.len() as f64;
                    mean[1] += d[1] / comp.len() as f64;
                }
                let target = cover.manifold.offset(&base, mean);
                let rep = comp
                    .iter()
                    .map(|&b| (cover.manifold.distance(&cover.center(b), &target), b))
                    .fold((f64::INFINITY, comp[0]), |a, b| if b.0 < a.0 { b } else { a })
                    .1;
                ComponentSummary {
                    boxes: comp.len(),
                    representative: cover.manifold.owning(&cover.center(rep)),
                    layer: analysis.lyapunov[comp[0]],
                }
            })
            .collect();
        ChainReport {
            manifold: cover.manifold.kind.name().to_string(),
            resolution: cover.resolution,
            tau: graph.tau,
            eps: graph.eps,
            box_diameter: cover.diameter,
            node_count: graph.node_count(),
            edge_count: graph.edge_count(),
            recurrent_boxes: analysis.recurrent.len(),
            condensation_classes: analysis.class_count,
            components,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{Catalog, VectorField};

    #[test]
    fn path_graph_has_no_recurrence() {
        let g = TransitionGraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(chain_recurrent_boxes(&g).is_empty());
    }

    #[test]
    fn two_cycle_plus_isolated_node() {
        let g = TransitionGraph::from_edges(3, &[(0, 1), (1, 0)]);
        assert_eq!(chain_recurrent_boxes(&g), vec![0, 1]);
        assert_eq!(chain_components(&g, None), vec![vec![0, 1]]);
    }

    #[test]
    fn disjoint_cycles_are_separate_components() {
        let g = TransitionGraph::from_edges(5, &[(0, 1), (1, 0), (3, 4), (4, 3), (1, 2)]);
        assert_eq!(chain_components(&g, None), vec![vec![0, 1], vec![3, 4]]);
    }

    #[test]
    fn self_loop_counts_as_cycle() {
        let g = TransitionGraph::from_edges(2, &[(0, 0), (0, 1)]);
        assert_eq!(chain_recurrent_boxes(&g), vec![0]);
    }

    #[test]
    fn condensation_chain_layers() {
        // C2 = {4,5} -> C1 = {2,3} -> C0 = {0,1}
        let g = TransitionGraph::from_edges(
            6,
            &[(0, 1), (1, 0), (2, 3), (3, 2), (4, 5), (5, 4), (4, 2), (3, 1)],
        );
        let comps = chain_components(&g, None);
        let a = combinatorial_lyapunov(&g, &comps);
        assert_eq!(a.lyapunov, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn single_component_is_constant_zero() {
        let g = TransitionGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
        let comps = chain_components(&g, None);
        let a = combinatorial_lyapunov(&g, &comps);
        assert_eq!(a.lyapunov, vec![0.0; 3]);
    }

    #[test]
    fn zero_field_loops_everywhere() {
        let m = ManifoldSpec::new(ManifoldKind::Torus);
        let sys = FlowSystem::new(m, VectorField::parse_single(&m, "0, 0").unwrap()).unwrap();
        let cover = BoxCover::new(m, 8);
        let g = build_transition_graph(&sys, &cover, 1.0, cover.diameter, 4).unwrap();
        for b in 0..cover.len() {
            assert!(g.has_edge(b, b));
        }
        assert_eq!(chain_recurrent_boxes(&g).len(), 64);
        // all boxes touch each other transitively: one component
        assert_eq!(chain_components(&g, Some(&cover)).len(), 1);
    }

    #[test]
    fn contraction_edges_move_inward() {
        // v = -(x, y): the image of a box lies e^{-1} closer to the origin
        let m = ManifoldSpec::new(ManifoldKind::PlaneDisk { radius: 1.0 });
        let sys = FlowSystem::new(m, VectorField::parse_single(&m, "-x, -y").unwrap()).unwrap();
        let cover = BoxCover::new(m, 8);
        let g = build_transition_graph(&sys, &cover, 1.0, cover.diameter, 9).unwrap();
        let extent = |b: usize| {
            let c = cover.corners(b);
            let far = c.iter().map(|p| p.norm()).fold(0.0, f64::max);
            let lo = [c[0].coords[0], c[0].coords[1]];
            let s = cover.side();
            let near = (0.0f64.clamp(lo[0], lo[0] + s)).hypot(0.0f64.clamp(lo[1], lo[1] + s));
            (near, far)
        };
        for a in 0..cover.len() {
            for &b in &g.edges[a] {
                let (near_b, _) = extent(b as usize);
                let (_, far_a) = extent(a);
                assert!(near_b <= (-1.0f64).exp() * far_a + g.eps + 1e-12);
            }
        }
        let rec = chain_recurrent_boxes(&g);
        // on a cycle near <= e^-1 (near + diam) + eps
        let k = (-1.0f64).exp();
        let bound = (k * cover.diameter + g.eps) / (1.0 - k);
        assert!(rec.iter().all(|&b| extent(b).0 <= bound + 1e-12));
        assert!(rec.len() < cover.len());
        assert!(!rec.is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        let sys = FlowSystem::new(
            Catalog::TorusHeightGradient.manifold(),
            VectorField::catalog(Catalog::TorusHeightGradient),
        )
        .unwrap();
        let cover = BoxCover::new(sys.manifold, 8);
        assert!(build_transition_graph(&sys, &cover, 0.5, cover.diameter, 9).is_err());
        assert!(build_transition_graph(&sys, &cover, 1.0, cover.diameter * 0.5, 9).is_err());
        assert!(build_transition_graph(&sys, &cover, 1.0, cover.diameter, 3).is_err());
    }

    #[test]
    fn locate_round_trips_centres() {
        for c in [Catalog::CircleTwoPoints, Catalog::SphereNorthSouth, Catalog::TorusHeightGradient] {
            let cover = BoxCover::new(c.manifold(), 12);
            for b in 0..cover.len() {
                let p = cover.center(b);
                let found = cover.locate(&p).expect("centre lies in some box");
                if cover.manifold.kind == ManifoldKind::Sphere {
                    // centres outside the owned disk map to the other chart
                    assert!(cover.manifold.distance(&cover.center(found), &p) <= cover.diameter);
                } else {
                    assert_eq!(found, b);
                }
            }
        }
    }
}
