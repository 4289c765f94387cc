use energyforge::chain::{self, TransitionGraph};
use energyforge::fixed_points::{ChartFrame, FixedPointRecord, FrameKind, PointKind};
use energyforge::grid::Grid;
use energyforge::order::{linear_extension, OrderDag};
use energyforge::*;
use proptest::prelude::*;

fn catalog_system(c: Catalog) -> FlowSystem {
    FlowSystem::new(c.manifold(), VectorField::catalog(c)).unwrap()
}

fn graph_strategy() -> impl Strategy<Value = TransitionGraph> {
    (1usize..24).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |edges| TransitionGraph::from_edges(n, &edges))
    })
}

fn reaches_itself(graph: &TransitionGraph, v: usize) -> bool {
    let mut seen = vec![false; graph.node_count()];
    let mut stack: Vec<usize> = graph.edges[v].iter().map(|&w| w as usize).collect();
    while let Some(u) = stack.pop() {
        if u == v {
            return true;
        }
        if !std::mem::replace(&mut seen[u], true) {
            stack.extend(graph.edges[u].iter().map(|&w| w as usize));
        }
    }
    false
}

fn fake_record(id: usize, kind: PointKind) -> FixedPointRecord {
    let index = match kind {
        PointKind::Sink => 0,
        PointKind::Saddle => 1,
        PointKind::Source => 2,
    };
    let location = ChartPoint::plane(id as f64, 0.0);
    let identity = [[1.0, 0.0], [0.0, 1.0]];
    FixedPointRecord {
        id,
        location,
        dim: 2,
        index,
        kind,
        linearization: identity,
        eigenvalues: vec![(1.0, 0.0), (-1.0, 0.0)],
        frame: ChartFrame {
            origin: location,
            dim: 2,
            to_frame: identity,
            axes: identity,
            kind: FrameKind::Eigen,
        },
        radius: 0.1,
    }
}

fn kind_strategy() -> impl Strategy<Value = PointKind> {
    prop_oneof![Just(PointKind::Sink), Just(PointKind::Saddle), Just(PointKind::Source)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scc_recurrence_matches_search(graph in graph_strategy()) {
        let mut scc = chain::chain_recurrent_boxes(&graph);
        scc.sort_unstable();
        let brute: Vec<usize> = (0..graph.node_count()).filter(|&v| reaches_itself(&graph, v)).collect();
        prop_assert_eq!(scc, brute);
    }

    #[test]
    fn lyapunov_layers_drop_along_edges(graph in graph_strategy()) {
        let comps = chain::chain_components(&graph, None);
        let a = chain::combinatorial_lyapunov(&graph, &comps);
        for (u, outs) in graph.edges.iter().enumerate() {
            for &w in outs {
                let w = w as usize;
                if a.class_of[u] == a.class_of[w] {
                    prop_assert_eq!(a.lyapunov[u], a.lyapunov[w]);
                } else {
                    prop_assert!(a.lyapunov[u] >= a.lyapunov[w] + 1.0);
                }
            }
        }
    }

    #[test]
    fn linear_extension_respects_relation_and_kinds(
        kinds in proptest::collection::vec(kind_strategy(), 1..10),
        picks in proptest::collection::vec((0usize..10, 0usize..10), 0..20),
    ) {
        let n = kinds.len();
        let records: Vec<FixedPointRecord> = kinds.iter().enumerate().map(|(i, &k)| fake_record(i, k)).collect();
        // edges q -> p only from a later kind (or the same kind with a larger id),
        // so the relation is acyclic and compatible with the kind order
        let edges: Vec<(usize, usize)> = picks
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|&(q, p)| (kinds[q], q) > (kinds[p], p))
            .collect();
        let order = linear_extension(&records, &OrderDag::from_edges(n, edges.clone())).unwrap();
        let mut position = vec![usize::MAX; n];
        for (i, &id) in order.iter().enumerate() {
            position[id] = i;
        }
        prop_assert!(position.iter().all(|&p| p < n));
        for (q, p) in edges {
            prop_assert!(position[p] < position[q]);
        }
        prop_assert!(order.windows(2).all(|w| kinds[w[0]] <= kinds[w[1]]));
    }

    #[test]
    fn torus_flow_group_law(x in 0.0f64..1.0, y in 0.0f64..1.0, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let sys = catalog_system(Catalog::TorusHeightGradient);
        let p = ChartPoint::plane(x, y);
        let two_steps = sys.flow(&sys.flow(&p, s).unwrap(), t).unwrap();
        let one_step = sys.flow(&p, s + t).unwrap();
        prop_assert!(sys.manifold.distance(&two_steps, &one_step) < 1e-7);
    }

    #[test]
    fn sphere_flow_group_law(a in 0.0f64..std::f64::consts::TAU, r in 0.05f64..1.0, s in -1.5f64..1.5, t in -1.5f64..1.5) {
        let sys = catalog_system(Catalog::SphereNorthSouth);
        let p = ChartPoint::new(0, [r * a.cos(), r * a.sin()]);
        let two_steps = sys.flow(&sys.flow(&p, s).unwrap(), t).unwrap();
        let one_step = sys.flow(&p, s + t).unwrap();
        prop_assert!(sys.manifold.distance(&two_steps, &one_step) < 1e-7);
    }

    #[test]
    fn sphere_chart_change_round_trips(a in 0.0f64..std::f64::consts::TAU, r in 0.2f64..5.0) {
        let m = ManifoldSpec::new(ManifoldKind::Sphere);
        let p = ChartPoint::new(0, [r * a.cos(), r * a.sin()]);
        let back = m.to_chart(&m.to_chart(&p, 1), 0);
        prop_assert!((back.coords[0] - p.coords[0]).abs() < 1e-12 * (1.0 + r));
        prop_assert!((back.coords[1] - p.coords[1]).abs() < 1e-12 * (1.0 + r));
    }

    #[test]
    fn interpolation_reproduces_node_values(values in proptest::collection::vec(-5.0f64..5.0, 16 * 16)) {
        let grid = Grid::new(ManifoldSpec::new(ManifoldKind::Torus), 16);
        prop_assume!(grid.len() == values.len());
        for n in 0..grid.len() {
            prop_assert_eq!(grid.interpolate(&values, &grid.point(n)), Some(values[n]));
        }
    }

    #[test]
    fn region_tags_round_trip(kind in 0u8..4, j in 1u8..5, stage in 1usize..40) {
        let r = match kind {
            0 => Region::Undefined,
            1 => Region::Local(stage),
            2 => Region::Tube { j, stage },
            _ => Region::Closing(stage),
        };
        prop_assert_eq!(Region::parse(&r.tag()), Some(r));
    }
}
