use std::fs;
use std::path::Path;

use energyforge::energy::{self, write_field, write_levels, LEVELS_FILE};
use energyforge::fixed_points::{PointKind, Stability};
use energyforge::verify::VerifyOptions;
use energyforge::{Analysis, AnalysisOptions, BuildOptions, Catalog, FlowSpecFile, FlowSystem, OrderedSpectrum};
use serde::Serialize;

use crate::plot::{self, Separatrix, SEPARATRIX_FILE};
use crate::{Failure, RunConfig};

pub const ANALYSIS_FILE: &str = "analysis.json";
pub const BOXES_FILE: &str = "boxes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const ORDER_FILE: &str = "order.json";
pub const REPORT_FILE: &str = "morse_check.json";
pub const PLOT_FILE: &str = "energy.svg";

fn load_spec(config: &RunConfig) -> Result<(FlowSpecFile, FlowSystem), Failure> {
    let src = config
        .spec
        .as_deref()
        .ok_or_else(|| Failure::usage("--spec is required (a file or catalog:NAME)"))?;
    let mut spec = match src.strip_prefix("catalog:") {
        Some(name) => FlowSpecFile::for_catalog(
            Catalog::from_name(name).ok_or_else(|| Failure::usage(format!("unknown catalog flow `{name}`")))?,
        ),
        None => {
            let path = Path::new(src);
            if !path.is_file() {
                return Err(Failure::usage(format!("spec file {} not found", path.display())));
            }
            FlowSpecFile::load(path)?
        }
    };
    if let Some(t) = config.tol_int {
        spec = spec.with_entry("integrator.tol", &format!("{t:e}"));
    }
    let system = spec.to_system()?;
    Ok((spec, system))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::usage(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct BoxRow {
    id: usize,
    chart: u8,
    ix: u32,
    iy: u32,
    recurrent: bool,
    component: Option<usize>,
    class: usize,
    layer: f64,
}

fn write_graph(analysis: &Analysis, out: &Path) -> Result<(), Failure> {
    let csv_err = |e: csv::Error| Failure::usage(e.to_string());
    let mut w = csv::Writer::from_path(out.join(BOXES_FILE)).map_err(csv_err)?;
    for (id, b) in analysis.cover.boxes.iter().enumerate() {
        w.serialize(BoxRow {
            id,
            chart: b.chart,
            ix: b.index[0],
            iy: b.index[1],
            recurrent: analysis.chain.component_of[id].is_some(),
            component: analysis.chain.component_of[id],
            class: analysis.chain.class_of[id],
            layer: analysis.chain.lyapunov[id],
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(EDGES_FILE)).map_err(csv_err)?;
    w.write_record(["from", "to"]).map_err(csv_err)?;
    for (a, outs) in analysis.graph.edges.iter().enumerate() {
        for b in outs {
            w.write_record([a.to_string(), b.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn analyze(config: &RunConfig) -> Result<(FlowSpecFile, Analysis), Failure> {
    let (spec, system) = load_spec(config)?;
    let opts = AnalysisOptions {
        hyperbolicity_tol: config.tol_hyp,
        ..Default::default()
    };
    let analysis = energyforge::analyze(&system, opts)?;
    fs::create_dir_all(&config.out)?;
    write_json(&config.out.join(ANALYSIS_FILE), &analysis.report())?;
    write_graph(&analysis, &config.out)?;
    println!(
        "analyze: {} boxes, {} chain components, {} fixed points",
        analysis.cover.len(),
        analysis.chain.components.len(),
        analysis.records.len()
    );
    Ok((spec, analysis))
}

pub fn order(config: &RunConfig) -> Result<(FlowSpecFile, Analysis, OrderedSpectrum), Failure> {
    let (spec, analysis) = analyze(config)?;
    let spectrum = analysis.spectrum()?;
    write_json(&config.out.join(ORDER_FILE), &analysis.order_report(&spectrum))?;
    let kinds: Vec<&str> = spectrum.order.iter().map(|&id| analysis.records[id].kind.name()).collect();
    println!("order: {}", kinds.join(" < "));
    Ok((spec, analysis, spectrum))
}

fn separatrices(analysis: &Analysis) -> Vec<Separatrix> {
    let mut out = Vec::new();
    for r in analysis.records.iter().filter(|r| r.kind == PointKind::Saddle && r.dim == 2) {
        let (stable, unstable) = &analysis.traces[r.id];
        for trace in [stable, unstable] {
            for b in &trace.branches {
                out.push(Separatrix {
                    owner: r.id,
                    stable: trace.stability == Stability::Stable,
                    limit: b.limit,
                    points: b.segment.samples.iter().map(|s| s.1).collect(),
                });
            }
        }
    }
    out
}

pub fn build(config: &RunConfig) -> Result<(), Failure> {
    let (spec, analysis, spectrum) = order(config)?;
    let opts = BuildOptions {
        resolution: config.resolution,
        ..Default::default()
    };
    let mut field = energyforge::build(&analysis, &spectrum, &opts)?;
    field.spec_hash = spec.hash();
    write_field(&field, &config.out)?;
    write_levels(&field, &config.out.join(LEVELS_FILE))?;
    write_json(&config.out.join(SEPARATRIX_FILE), &separatrices(&analysis))?;
    let (lo, hi) = field.range().unwrap_or((f64::NAN, f64::NAN));
    println!(
        "build: k = {}, grid {}, values in [{lo}, {hi}], {} undefined nodes",
        field.k,
        field.grid.resolution,
        field.undefined()
    );
    Ok(())
}

pub fn verify(config: &RunConfig) -> Result<(), Failure> {
    let field = energy::read_field(&config.out)?;
    let (spec, system) = load_spec(config)?;
    if !field.spec_hash.is_empty() && field.spec_hash != spec.hash() {
        return Err(Failure::usage(format!(
            "the field in {} was built from a different spec",
            config.out.display()
        )));
    }
    let opts = AnalysisOptions {
        hyperbolicity_tol: config.tol_hyp,
        ..Default::default()
    };
    let analysis = energyforge::analyze(&system, opts)?;
    let spectrum = analysis.spectrum()?;
    let vopts = VerifyOptions {
        seed: config.seed,
        ..Default::default()
    };
    let report = energyforge::verify(&field, &analysis, &spectrum, &vopts);
    write_json(&config.out.join(REPORT_FILE), &report)?;
    let mark = |p: bool| if p { "pass" } else { "FAIL" };
    println!("verify: monotone {} ({} violations / {} evaluations)", mark(report.monotone.pass), report.monotone.violations, report.monotone.evaluated);
    println!("verify: critical {}", mark(report.critical.pass));
    println!("verify: euler {} (sum {}, expected {})", mark(report.euler.pass), report.euler.sum, report.euler.expected);
    println!("verify: decomposition {}", mark(report.decomposition.pass));
    println!("verify: oracle {} ({} contradictions)", mark(report.oracle.pass), report.oracle.contradictions);
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("verification failed; see {}", config.out.join(REPORT_FILE).display()),
        })
    }
}

pub fn plot(config: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&config.out)?;
    let svg = plot::render_dir(&config.out);
    fs::write(config.out.join(PLOT_FILE), svg)?;
    println!("plot: {}", config.out.join(PLOT_FILE).display());
    Ok(())
}
