//! Plain-text persistence of an energy field: a node table, a metadata
//! file, the build log and the level curves.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnergyField, FixedPointValue, Region, StageLog, THIRD};
use crate::contour::{level_lines, Polyline};
use crate::error::{Error, Result};
use crate::flow::ManifoldSpec;
use crate::grid::Grid;

pub const GRID_FILE: &str = "energy_grid.csv";
pub const META_FILE: &str = "field_meta.json";
pub const LOG_FILE: &str = "build_log.json";
pub const LEVELS_FILE: &str = "levels.json";

#[derive(Debug, Serialize, Deserialize)]
struct FieldMeta {
    manifold: ManifoldSpec,
    resolution: usize,
    k: usize,
    field: String,
    spec_hash: String,
    fixed_points: Vec<FixedPointValue>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    chart: usize,
    ix: usize,
    iy: usize,
    x: f64,
    y: f64,
    phi: f64,
    region_tag: String,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

/// Write the node table, metadata and build log into `dir`.
pub fn write_field(field: &EnergyField, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(GRID_FILE)).map_err(csv_error)?;
    let lattice = &field.grid.lattice;
    for n in 0..field.grid.len() {
        let (chart, ix, iy) = lattice.split(n);
        let p = field.grid.point(n);
        w.serialize(Row {
            chart,
            ix,
            iy,
            x: p.coords[0],
            y: p.coords[1],
            phi: field.values[n],
            region_tag: field.regions[n].tag(),
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    let meta = FieldMeta {
        manifold: field.grid.manifold,
        resolution: field.grid.resolution,
        k: field.k,
        field: field.field.clone(),
        spec_hash: field.spec_hash.clone(),
        fixed_points: field.fixed_points.clone(),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta).map_err(json_error)? + "\n")?;
    fs::write(dir.join(LOG_FILE), serde_json::to_string_pretty(&field.stages).map_err(json_error)? + "\n")?;
    Ok(())
}

/// Read a field written by [`write_field`]. The build log is not read back.
pub fn read_field(dir: &Path) -> Result<EnergyField> {
    let meta_text = fs::read_to_string(dir.join(META_FILE))?;
    let meta: FieldMeta = serde_json::from_str(&meta_text).map_err(json_error)?;
    let grid = Grid::new(meta.manifold, meta.resolution);
    let mut values = vec![f64::NAN; grid.len()];
    let mut regions = vec![Region::Undefined; grid.len()];
    let mut seen = vec![false; grid.len()];
    let mut r = csv::Reader::from_path(dir.join(GRID_FILE)).map_err(csv_error)?;
    for row in r.deserialize() {
        let row: Row = row.map_err(csv_error)?;
        let l = &grid.lattice;
        if row.chart >= l.charts || row.ix >= l.nx || row.iy >= l.ny {
            return Err(Error::Format(format!(
                "node ({}, {}, {}) is outside the grid",
                row.chart, row.ix, row.iy
            )));
        }
        let n = l.index(row.chart, row.ix, row.iy);
        values[n] = row.phi;
        regions[n] = Region::parse(&row.region_tag)
            .ok_or_else(|| Error::Format(format!("unknown region tag `{}`", row.region_tag)))?;
        seen[n] = true;
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("node {n} is missing from the grid file")));
    }
    Ok(EnergyField {
        grid,
        values,
        regions,
        k: meta.k,
        fixed_points: meta.fixed_points,
        field: meta.field,
        spec_hash: meta.spec_hash,
        stages: Vec::<StageLog>::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSet {
    pub level: f64,
    pub lines: Vec<Polyline>,
}

/// Level curves at `j - 1/3` and `j + 1/3` for every fixed-point value `j`
/// that stays inside `[1, k]`.
pub fn level_sets(field: &EnergyField) -> Vec<LevelSet> {
    let mut levels = Vec::new();
    for j in 1..=field.k {
        for l in [j as f64 - THIRD, j as f64 + THIRD] {
            if (1.0..=field.k as f64).contains(&l) {
                levels.push(l);
            }
        }
    }
    levels
        .into_iter()
        .map(|level| LevelSet {
            level,
            lines: level_lines(&field.grid.lattice, &field.values, level),
        })
        .collect()
}

pub fn write_levels(field: &EnergyField, path: &Path) -> Result<Vec<LevelSet>> {
    let sets = level_sets(field);
    fs::write(path, serde_json::to_string_pretty(&sets).map_err(json_error)? + "\n")?;
    Ok(sets)
}
