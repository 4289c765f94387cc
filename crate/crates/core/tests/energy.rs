use energyforge::energy::{level_sets, read_field, write_field, EnergyField, THIRD};
use energyforge::fixed_points::PointKind;
use energyforge::verify::{self, VerifyOptions};
use energyforge::*;

fn system(kind: ManifoldKind, src: &str) -> FlowSystem {
    let m = ManifoldSpec::new(kind);
    FlowSystem::new(m, VectorField::parse_single(&m, src).unwrap()).unwrap()
}

fn catalog_system(c: Catalog) -> FlowSystem {
    FlowSystem::new(c.manifold(), VectorField::catalog(c)).unwrap()
}

fn build_at(sys: &FlowSystem, resolution: usize) -> (Analysis, OrderedSpectrum, EnergyField) {
    let analysis = analyze(sys, AnalysisOptions::default()).unwrap();
    let spectrum = analysis.spectrum().unwrap();
    let field = build(&analysis, &spectrum, &BuildOptions { resolution, ..Default::default() }).unwrap();
    (analysis, spectrum, field)
}

/// Values committed at stage `s` lie in `[s - 2/3, s + 1/3]`; sink charts may
/// be committed at any sink stage, so only their upper bound is checked.
fn assert_stage_bands(field: &EnergyField) {
    for (n, r) in field.regions.iter().enumerate() {
        let v = field.values[n];
        let eps = 1e-9;
        match *r {
            Region::Tube { stage, .. } | Region::Closing(stage) => {
                let s = stage as f64;
                assert!(v >= s - 2.0 * THIRD - eps && v <= s + THIRD + eps, "{r} carries {v}");
            }
            Region::Local(s) => assert!(v <= field.k as f64 + eps && v >= s as f64 - THIRD - eps, "{r} carries {v}"),
            Region::Undefined => assert!(v.is_nan()),
        }
    }
}

#[test]
fn circle_with_four_fixed_points() {
    let sys = system(ManifoldKind::Circle, "-sin(4*pi*x)/(4*pi)");
    let (analysis, spectrum, field) = build_at(&sys, 256);
    assert_eq!(field.k, 4);
    assert_eq!(field.undefined(), 0);
    assert_eq!(field.range(), Some((1.0, 4.0)));
    for fp in &field.fixed_points {
        assert_eq!(fp.value, Some(fp.position as f64));
    }
    assert_stage_bands(&field);
    let report = verify::verify(&field, &analysis, &spectrum, &VerifyOptions::default());
    assert!(report.pass, "{}", serde_json::to_string_pretty(&report).unwrap());
    assert_eq!(report.euler.sum, 0);
}

#[test]
fn four_wells_on_a_disk() {
    let sys = system(ManifoldKind::PlaneDisk { radius: 1.6 }, "x - x^3, y - y^3");
    let (analysis, spectrum, field) = build_at(&sys, 256);
    assert_eq!(field.k, 9);
    let kinds: Vec<PointKind> = spectrum.order.iter().map(|&id| analysis.records[id].kind).collect();
    assert_eq!(&kinds[..4], &[PointKind::Sink; 4]);
    assert_eq!(&kinds[4..8], &[PointKind::Saddle; 4]);
    assert_eq!(kinds[8], PointKind::Source);
    for fp in &field.fixed_points {
        assert_eq!(fp.value, Some(fp.position as f64));
    }
    // nodes near the rim whose backward orbits leave the disk stay undefined
    assert!(field.undefined() < field.grid.len() / 100);
    assert_stage_bands(&field);

    let opts = VerifyOptions::default();
    let report = verify::verify(&field, &analysis, &spectrum, &opts);
    assert!(report.monotone.pass, "{:?}", report.monotone);
    assert!(report.oracle.pass, "{:?}", report.oracle);
    assert!(report.decomposition.pass, "{:?}", report.decomposition);
    assert!(report.decomposition.escaped > 0);
    assert_eq!(report.euler.sum, 1);
    for fit in &report.critical.fits {
        assert_eq!(fit.fitted_index, Some(fit.expected_index));
    }
    assert!(report.critical.regular.pass);
}

#[test]
fn sphere_increases_along_meridians() {
    let (_, _, field) = build_at(&catalog_system(Catalog::SphereNorthSouth), 128);
    assert_eq!(field.k, 2);
    let m = field.grid.manifold;
    for a in 0..8 {
        let angle = a as f64 * std::f64::consts::TAU / 8.0;
        let mut last = f64::NEG_INFINITY;
        // chart 0 radius 0.05..3 runs from near the south pole past the equator
        for j in 0..60 {
            let r = 0.05 + 2.95 * j as f64 / 59.0;
            let p = m.owning(&ChartPoint::new(0, [r * angle.cos(), r * angle.sin()]));
            let v = field.eval(&p).unwrap();
            assert!(v > 1.0 - 1e-12 && v < 2.0 + 1e-12);
            assert!(v >= last - 2.0 * field.grid.h(), "meridian {a} drops at r = {r}");
            last = last.max(v);
        }
    }
    let equator = field.eval(&ChartPoint::new(0, [1.0, 0.0])).unwrap();
    assert!(equator > 1.0 && equator < 2.0);
}

#[test]
fn field_files_round_trip() {
    let (_, _, field) = build_at(&catalog_system(Catalog::TorusHeightGradient), 64);
    let dir = tempfile::tempdir().unwrap();
    write_field(&field, dir.path()).unwrap();
    let back = read_field(dir.path()).unwrap();
    assert_eq!(back.k, field.k);
    assert_eq!(back.regions, field.regions);
    assert_eq!(back.values.len(), field.values.len());
    for (a, b) in back.values.iter().zip(&field.values) {
        assert!(a == b || (a.is_nan() && b.is_nan()));
    }
    assert_eq!(back.fixed_points.len(), 4);
}

#[test]
fn torus_level_sets_sit_between_fixed_values() {
    let (_, _, field) = build_at(&catalog_system(Catalog::TorusHeightGradient), 64);
    let levels: Vec<f64> = level_sets(&field).iter().map(|l| l.level).collect();
    let expected = [1.0 + THIRD, 2.0 - THIRD, 2.0 + THIRD, 3.0 - THIRD, 3.0 + THIRD, 4.0 - THIRD];
    assert_eq!(levels.len(), expected.len());
    for (a, b) in levels.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(level_sets(&field).iter().all(|l| !l.lines.is_empty()));
}

#[test]
fn interpolation_of_built_field() {
    let (_, _, field) = build_at(&catalog_system(Catalog::TorusHeightGradient), 64);
    let n = field.grid.lattice.index(0, 10, 20);
    assert_eq!(field.eval(&field.grid.point(n)), Some(field.values[n]));
    let corners = [(10, 20), (11, 20), (10, 21), (11, 21)].map(|(i, j)| field.values[field.grid.lattice.index(0, i, j)]);
    let mid = field.grid.lattice.coords(10, 20).map(|c| c + 0.5 * field.grid.h());
    let v = field.eval(&ChartPoint::plane(mid[0], mid[1])).unwrap();
    assert!((v - corners.iter().sum::<f64>() / 4.0).abs() < 1e-12);
}

#[test]
fn reversed_order_is_rejected() {
    let analysis = analyze(&catalog_system(Catalog::TorusHeightGradient), AnalysisOptions::default()).unwrap();
    let mut spectrum = analysis.spectrum().unwrap();
    spectrum.order.reverse();
    for (i, &id) in spectrum.order.iter().enumerate() {
        spectrum.position[id] = i;
    }
    let err = build(&analysis, &spectrum, &BuildOptions { resolution: 64, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::Scaffold { .. }), "{err}");
}

#[test]
fn untrapped_disk_is_not_built() {
    let analysis = analyze(&catalog_system(Catalog::PlanarSaddle), AnalysisOptions::default()).unwrap();
    let spectrum = analysis.spectrum().unwrap();
    let err = build(&analysis, &spectrum, &BuildOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Spec(_)));
}

#[test]
fn euler_sum_rejects_wrong_counts() {
    let sphere = ManifoldSpec::new(ManifoldKind::Sphere);
    assert!(verify::check_euler(&[0, 2], &sphere).pass);
    let r = verify::check_euler(&[0, 1, 2], &sphere);
    assert_eq!(r.sum, 1);
    assert!(!r.pass);
    assert!(verify::check_euler(&[0, 1, 1, 2], &ManifoldSpec::new(ManifoldKind::Torus)).pass);
}

#[test]
fn verify_is_deterministic() {
    let sys = catalog_system(Catalog::CircleTwoPoints);
    let (analysis, spectrum, field) = build_at(&sys, 128);
    let opts = VerifyOptions { seed: 11, ..Default::default() };
    let a = serde_json::to_string(&verify::verify(&field, &analysis, &spectrum, &opts)).unwrap();
    let b = serde_json::to_string(&verify::verify(&field, &analysis, &spectrum, &opts)).unwrap();
    assert_eq!(a, b);
}
