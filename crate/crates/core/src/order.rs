//! The relation `p < q` iff the stable set of `p` meets the unstable set of
//! `q`, and its extension to a total order with sinks first and sources last.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::chain::{BoxCover, ChainAnalysis, TransitionGraph};
use crate::error::{Error, Result};
use crate::fixed_points::{location_key, FixedPointRecord, InvariantManifoldTrace, PointKind};
use crate::flow::FlowSystem;

/// Evidence for one ordered pair `(from, to)`, meaning `to < from`.
#[derive(Debug, Clone, Serialize)]
pub struct PairEvidence {
    pub from: usize,
    pub to: usize,
    pub geometric: bool,
    pub combinatorial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderDag {
    pub nodes: usize,
    /// Confirmed edges `q -> p` (p < q).
    pub edges: Vec<(usize, usize)>,
    /// Pairs where exactly one test fired.
    pub ambiguous: Vec<PairEvidence>,
}

impl OrderDag {
    pub fn from_edges(nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        OrderDag {
            nodes,
            edges,
            ambiguous: Vec::new(),
        }
    }
}

/// Reachability between condensation classes of the box graph.
fn class_reachability(graph: &TransitionGraph, analysis: &ChainAnalysis) -> Vec<Vec<u32>> {
    let classes = analysis.class_count;
    let mut out: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); classes];
    for (a, outs) in graph.edges.iter().enumerate() {
        for &b in outs {
            let (ca, cb) = (analysis.class_of[a], analysis.class_of[b as usize]);
            if ca != cb {
                out[ca].insert(cb as u32);
            }
        }
    }
    out.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn reaches(adj: &[Vec<u32>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(c) = queue.pop_front() {
        if c == to {
            return true;
        }
        for &n in &adj[c] {
            if !seen[n as usize] {
                seen[n as usize] = true;
                queue.push_back(n as usize);
            }
        }
    }
    false
}

/// Boxes within `radius` of any sampled point of `p`'s stable trace.
fn stable_neighbourhood(
    cover: &BoxCover,
    record: &FixedPointRecord,
    stable: &InvariantManifoldTrace,
    radius: f64,
) -> Vec<bool> {
    let mut marked = vec![false; cover.len()];
    let mut hits = Vec::new();
    let mut last: Option<crate::flow::ChartPoint> = None;
    for p in stable.points(&record.location) {
        if let Some(l) = last {
            if cover.manifold.distance(&l, p) < 0.25 * cover.diameter {
                continue;
            }
        }
        last = Some(*p);
        hits.clear();
        cover.ball(p, radius, &mut hits);
        for &b in &hits {
            marked[b] = true;
        }
    }
    marked
}

/// Double-confirmed relation: an edge `q -> p` needs an unstable branch of
/// `q` passing within two box diameters of `p`'s traced stable set, and a
/// path from `q`'s class to `p`'s class in the condensed box graph.
pub fn compute_relation(
    system: &FlowSystem,
    records: &[FixedPointRecord],
    traces: &[(InvariantManifoldTrace, InvariantManifoldTrace)],
    cover: &BoxCover,
    graph: &TransitionGraph,
    analysis: &ChainAnalysis,
) -> Result<OrderDag> {
    let eps_rel = 2.0 * cover.diameter;
    let reach = class_reachability(graph, analysis);
    let class: Vec<usize> = records
        .iter()
        .map(|r| {
            cover
                .locate(&r.location)
                .map(|b| analysis.class_of[b])
                .ok_or_else(|| Error::Ordering(format!("fixed point {} lies outside the box cover", r.id)))
        })
        .collect::<Result<_>>()?;
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            if class[i] == class[j] {
                return Err(Error::Ordering(format!(
                    "fixed points {i} and {j} share a condensation class; refine the box cover"
                )));
            }
        }
    }
    let neighbourhoods: Vec<Vec<bool>> = records
        .iter()
        .map(|r| stable_neighbourhood(cover, r, &traces[r.id].0, eps_rel))
        .collect();
    let mut edges = Vec::new();
    let mut ambiguous = Vec::new();
    for q in records {
        let unstable = &traces[q.id].1;
        for p in records {
            if p.id == q.id {
                continue;
            }
            let geometric = unstable.branches.iter().any(|b| {
                b.segment.samples.iter().any(|(_, y)| {
                    system.manifold.distance(y, &q.location) > eps_rel
                        && cover.locate(y).is_some_and(|bx| neighbourhoods[p.id][bx])
                })
            });
            let combinatorial = reaches(&reach, class[q.id], class[p.id]);
            match (geometric, combinatorial) {
                (true, true) => edges.push((q.id, p.id)),
                (false, false) => {}
                _ => ambiguous.push(PairEvidence {
                    from: q.id,
                    to: p.id,
                    geometric,
                    combinatorial,
                }),
            }
        }
    }
    Ok(OrderDag {
        nodes: records.len(),
        edges,
        ambiguous,
    })
}

/// Total order `p_1 < ... < p_k` (record ids) extending the DAG, with sinks
/// first, then saddles, then sources; ties broken by index and location.
pub fn linear_extension(records: &[FixedPointRecord], dag: &OrderDag) -> Result<Vec<usize>> {
    let n = records.len();
    // q must wait for every p with an edge q -> p
    let mut pending = vec![0usize; n];
    let mut waiting_on: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(q, p) in &dag.edges {
        pending[q] += 1;
        waiting_on[p].push(q);
    }
    let priority = |i: usize| {
        let r = &records[i];
        let (c, x, y) = location_key(&r.location);
        (r.kind, r.index, c, x, y)
    };
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    while !ready.is_empty() {
        let (pos, _) = ready
            .iter()
            .enumerate()
            .min_by(|a, b| priority(*a.1).partial_cmp(&priority(*b.1)).unwrap())
            .unwrap();
        let next = ready.swap_remove(pos);
        order.push(next);
        for &q in &waiting_on[next] {
            pending[q] -= 1;
            if pending[q] == 0 {
                ready.push(q);
            }
        }
    }
    if order.len() < n {
        return Err(Error::Ordering("the relation has a cycle".into()));
    }
    let kinds: Vec<PointKind> = order.iter().map(|&i| records[i].kind).collect();
    if kinds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Ordering(
            "no extension keeps sinks before saddles before sources".into(),
        ));
    }
    Ok(order)
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderedSpectrum {
    pub dag: OrderDag,
    /// Record ids in increasing order.
    pub order: Vec<usize>,
    /// Position of each record id in `order`.
    pub position: Vec<usize>,
}

impl OrderedSpectrum {
    pub fn new(records: &[FixedPointRecord], dag: OrderDag) -> Result<Self> {
        let order = linear_extension(records, &dag)?;
        let mut position = vec![0; order.len()];
        for (i, &id) in order.iter().enumerate() {
            position[id] = i;
        }
        Ok(OrderedSpectrum { dag, order, position })
    }

    /// Record ids `p_1..p_i` whose unstable sets make up `A_i` (1-based `i`).
    pub fn prefix(&self, i: usize) -> &[usize] {
        &self.order[..i]
    }

    /// Record ids `p_{i+1}..p_k` whose stable sets make up `R_i`.
    pub fn suffix(&self, i: usize) -> &[usize] {
        &self.order[i..]
    }

    /// Unstable branches whose limit is not earlier in the order, as
    /// `(owner, limit)` pairs.
    pub fn late_branch_limits(&self, traces: &[(InvariantManifoldTrace, InvariantManifoldTrace)]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (owner, (_, unstable)) in traces.iter().enumerate() {
            for b in &unstable.branches {
                if let Some(l) = b.limit {
                    if self.position[l] >= self.position[owner] {
                        out.push((owner, l));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderEntry {
    pub position: usize,
    pub id: usize,
    pub kind: PointKind,
    pub index: usize,
    pub location: crate::flow::ChartPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub edges: Vec<(usize, usize)>,
    pub ambiguous: Vec<PairEvidence>,
    pub order: Vec<OrderEntry>,
    pub late_branch_limits: Vec<(usize, usize)>,
}

impl OrderReport {
    pub fn new(
        records: &[FixedPointRecord],
        spectrum: &OrderedSpectrum,
        traces: &[(InvariantManifoldTrace, InvariantManifoldTrace)],
    ) -> Self {
        OrderReport {
            edges: spectrum.dag.edges.clone(),
            ambiguous: spectrum.dag.ambiguous.clone(),
            order: spectrum
                .order
                .iter()
                .enumerate()
                .map(|(i, &id)| OrderEntry {
                    position: i + 1,
                    id,
                    kind: records[id].kind,
                    index: records[id].index,
                    location: records[id].location,
                })
                .collect(),
            late_branch_limits: spectrum.late_branch_limits(traces),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_points::{ChartFrame, FrameKind};
    use crate::flow::ChartPoint;

    fn fake(id: usize, index: usize, x: f64) -> FixedPointRecord {
        let loc = ChartPoint::plane(x, 0.0);
        let eye = [[1.0, 0.0], [0.0, 1.0]];
        FixedPointRecord {
            id,
            location: loc,
            dim: 2,
            index,
            kind: PointKind::of(index, 2),
            linearization: eye,
            eigenvalues: vec![],
            frame: ChartFrame {
                origin: loc,
                dim: 2,
                to_frame: eye,
                axes: eye,
                kind: FrameKind::Eigen,
            },
            radius: 0.1,
        }
    }

    #[test]
    fn sinks_saddle_source() {
        // ids: 0 = source, 1 = saddle, 2 = sink at x=0.7, 3 = sink at x=0.2
        let recs = vec![fake(0, 2, 0.0), fake(1, 1, 0.5), fake(2, 0, 0.7), fake(3, 0, 0.2)];
        let dag = OrderDag::from_edges(4, vec![(0, 1), (1, 2), (1, 3)]);
        assert_eq!(linear_extension(&recs, &dag).unwrap(), vec![3, 2, 1, 0]);
    }

    #[test]
    fn empty_relation_sink_then_source() {
        let recs = vec![fake(0, 2, 0.0), fake(1, 0, 0.5)];
        let dag = OrderDag::from_edges(2, vec![]);
        assert_eq!(linear_extension(&recs, &dag).unwrap(), vec![1, 0]);
    }

    #[test]
    fn cycle_is_rejected() {
        let recs = vec![fake(0, 1, 0.0), fake(1, 1, 0.5)];
        let dag = OrderDag::from_edges(2, vec![(0, 1), (1, 0)]);
        assert!(matches!(linear_extension(&recs, &dag), Err(Error::Ordering(_))));
    }

    #[test]
    fn kind_violation_is_rejected() {
        // a sink forced above a saddle
        let recs = vec![fake(0, 0, 0.0), fake(1, 1, 0.5)];
        let dag = OrderDag::from_edges(2, vec![(0, 1)]);
        assert!(matches!(linear_extension(&recs, &dag), Err(Error::Ordering(_))));
    }
}
