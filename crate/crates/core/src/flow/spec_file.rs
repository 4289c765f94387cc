//! Flow spec files: one `key = value` pair per line, `#` starts a comment.
//!
//! ```text
//! manifold.kind = torus
//! field.catalog = torus_height_gradient
//! integrator.tol = 1e-9
//! ```
//!
//! Recognised keys: `manifold.kind`, `manifold.radius`, `field.catalog`,
//! `field.expressions` (single-chart manifolds), `field.expressions.<chart>`
//! (`south` / `north` on the sphere), `field.param.<name>`, `integrator.tol`,
//! `integrator.max_step`.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::expr::split_components;
use crate::flow::field::{Catalog, VectorField};
use crate::flow::integrate::{FlowSystem, DEFAULT_MAX_STEP, DEFAULT_TOL};
use crate::flow::manifold::{ManifoldKind, ManifoldSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpecFile {
    entries: BTreeMap<String, String>,
}

impl FlowSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Spec(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Spec(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(FlowSpecFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Spec(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Spec for a shipped catalog flow.
    pub fn for_catalog(c: Catalog) -> Self {
        let mut entries = BTreeMap::new();
        let m = c.manifold();
        entries.insert("manifold.kind".into(), m.kind.name().into());
        if let ManifoldKind::PlaneDisk { radius } = m.kind {
            entries.insert("manifold.radius".into(), format!("{radius}"));
        }
        entries.insert("field.catalog".into(), c.name().into());
        FlowSpecFile { entries }
    }

    /// Copy with `key` set to `value`, replacing any earlier entry.
    pub fn with_entry(mut self, key: &str, value: &str) -> Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Spec(format!("`{key}` is not a number: `{v}`")))
            })
            .transpose()
    }

    fn manifold(&self, catalog: Option<Catalog>) -> Result<ManifoldSpec> {
        let kind = match (self.get("manifold.kind"), catalog) {
            (None, Some(c)) => return Ok(c.manifold()),
            (None, None) => return Err(Error::Spec("missing `manifold.kind`".into())),
            (Some(k), _) => k,
        };
        let kind = match kind {
            "circle" => ManifoldKind::Circle,
            "torus" => ManifoldKind::Torus,
            "sphere" => ManifoldKind::Sphere,
            "plane-disk" => {
                let radius = self
                    .number("manifold.radius")?
                    .ok_or_else(|| Error::Spec("plane-disk needs `manifold.radius`".into()))?;
                if !(radius > 0.0) {
                    return Err(Error::Spec("`manifold.radius` must be positive".into()));
                }
                ManifoldKind::PlaneDisk { radius }
            }
            other => return Err(Error::Spec(format!("unknown manifold kind `{other}`"))),
        };
        let m = ManifoldSpec::new(kind);
        if let Some(c) = catalog {
            if c.manifold().kind.name() != m.kind.name() {
                return Err(Error::Spec(format!(
                    "catalog `{}` lives on a {}, not a {}",
                    c.name(),
                    c.manifold().kind.name(),
                    m.kind.name()
                )));
            }
        }
        Ok(m)
    }

    pub fn to_system(&self) -> Result<FlowSystem> {
        let catalog = match self.get("field.catalog") {
            Some(name) => Some(
                Catalog::from_name(name).ok_or_else(|| Error::Spec(format!("unknown catalog `{name}`")))?,
            ),
            None => None,
        };
        let manifold = self.manifold(catalog)?;
        let mut params = BTreeMap::new();
        for (k, v) in &self.entries {
            if let Some(name) = k.strip_prefix("field.param.") {
                let val = v
                    .parse::<f64>()
                    .map_err(|_| Error::Spec(format!("`{k}` is not a number: `{v}`")))?;
                params.insert(name.to_string(), val);
            }
        }
        let field = match catalog {
            Some(c) => {
                if self.entries.keys().any(|k| k.starts_with("field.expressions")) {
                    return Err(Error::Spec("give either `field.catalog` or `field.expressions`, not both".into()));
                }
                VectorField::catalog(c)
            }
            None => {
                let per_chart: Vec<Vec<String>> = if manifold.chart_count() == 1 {
                    let src = self
                        .get("field.expressions")
                        .ok_or_else(|| Error::Spec("missing `field.expressions` or `field.catalog`".into()))?;
                    vec![split_components(src)]
                } else {
                    manifold
                        .chart_names()
                        .iter()
                        .map(|name| {
                            let key = format!("field.expressions.{name}");
                            self.get(&key)
                                .map(split_components)
                                .ok_or_else(|| Error::Spec(format!("missing `{key}`")))
                        })
                        .collect::<Result<_>>()?
                };
                VectorField::parse(&manifold, &per_chart, &params)?
            }
        };
        let tol = self.number("integrator.tol")?.unwrap_or(DEFAULT_TOL);
        let max_step = self.number("integrator.max_step")?.unwrap_or(DEFAULT_MAX_STEP);
        if !(tol > 0.0) || !(max_step > 0.0) {
            return Err(Error::Spec("integrator tolerances must be positive".into()));
        }
        Ok(FlowSystem::new(manifold, field)?.with_tolerances(tol, max_step))
    }

    /// Canonical text form (sorted keys).
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
