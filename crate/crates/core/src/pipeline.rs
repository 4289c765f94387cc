//! The analysis stages chained together: box graph, fixed points, traces
//! and the ordered spectrum.

use serde::Serialize;

use crate::chain::{self, BoxCover, ChainAnalysis, ChainReport, TransitionGraph};
use crate::error::{Error, Result};
use crate::fixed_points::{
    self, FixedPointRecord, FixedPointReport, InvariantManifoldTrace, DEFAULT_HYPERBOLICITY_TOL,
};
use crate::flow::FlowSystem;
use crate::order::{self, OrderReport, OrderedSpectrum};

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    /// Box cover cells per chart side.
    pub resolution: usize,
    pub hyperbolicity_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            resolution: 32,
            hyperbolicity_tol: DEFAULT_HYPERBOLICITY_TOL,
        }
    }
}

pub struct Analysis {
    pub system: FlowSystem,
    pub cover: BoxCover,
    pub graph: TransitionGraph,
    pub chain: ChainAnalysis,
    pub records: Vec<FixedPointRecord>,
    pub traces: Vec<(InvariantManifoldTrace, InvariantManifoldTrace)>,
}

impl Analysis {
    pub fn chain_report(&self) -> ChainReport {
        ChainReport::new(&self.cover, &self.graph, &self.chain)
    }

    pub fn fixed_point_reports(&self) -> Vec<FixedPointReport> {
        self.records
            .iter()
            .map(|r| FixedPointReport::new(r, &self.traces[r.id]))
            .collect()
    }

    pub fn spectrum(&self) -> Result<OrderedSpectrum> {
        let dag = order::compute_relation(&self.system, &self.records, &self.traces, &self.cover, &self.graph, &self.chain)?;
        OrderedSpectrum::new(&self.records, dag)
    }
}

/// Box graph, recurrence, fixed points and their invariant manifold traces.
pub fn analyze(system: &FlowSystem, opts: AnalysisOptions) -> Result<Analysis> {
    let (cover, graph, chain) = chain::analyze(system, opts.resolution)?;
    let records = fixed_points::find_fixed_points(system, &cover, opts.hyperbolicity_tol)?;
    if records.is_empty() {
        return Err(Error::Spec("the field has no zeros".into()));
    }
    let traces = fixed_points::trace_all(system, &records);
    Ok(Analysis {
        system: system.clone(),
        cover,
        graph,
        chain,
        records,
        traces,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub field: String,
    pub chain: ChainReport,
    pub fixed_points: Vec<FixedPointReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderSummary {
    pub field: String,
    pub order: OrderReport,
}

impl Analysis {
    pub fn report(&self) -> AnalysisReport {
        AnalysisReport {
            field: self.system.field.describe(),
            chain: self.chain_report(),
            fixed_points: self.fixed_point_reports(),
        }
    }

    pub fn order_report(&self, spectrum: &OrderedSpectrum) -> OrderSummary {
        OrderSummary {
            field: self.system.field.describe(),
            order: OrderReport::new(&self.records, spectrum, &self.traces),
        }
    }
}
