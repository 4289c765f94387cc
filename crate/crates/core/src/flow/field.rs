use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI, TAU};

use crate::error::{Error, Result};
use crate::flow::expr::{self, Expr, Scope};
use crate::flow::manifold::{ChartPoint, ManifoldKind, ManifoldSpec};

/// Built-in flows shipped with the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Catalog {
    /// `x' = -sin(2 pi x) / (2 pi)` on the circle: sink at 0, source at 1/2.
    CircleTwoPoints,
    /// `u' = -u` in the south chart, `w' = w` in the north chart.
    SphereNorthSouth,
    /// `v = (sin 2 pi x, sin 2 pi y) / (2 pi)`, the negative gradient of
    /// `(cos 2 pi x + cos 2 pi y) / (4 pi^2)` on the flat torus.
    TorusHeightGradient,
    /// Linear model saddle `ln2 * (x, -y)` on a disk of radius 4.
    PlanarSaddle,
    /// Linear centre `(-y, x)` on the unit disk; fails hyperbolic screening.
    PlanarCenter,
}

impl Catalog {
    pub const ALL: [Catalog; 5] = [
        Catalog::CircleTwoPoints,
        Catalog::SphereNorthSouth,
        Catalog::TorusHeightGradient,
        Catalog::PlanarSaddle,
        Catalog::PlanarCenter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Catalog::CircleTwoPoints => "circle_two_points",
            Catalog::SphereNorthSouth => "sphere_north_south",
            Catalog::TorusHeightGradient => "torus_height_gradient",
            Catalog::PlanarSaddle => "planar_saddle",
            Catalog::PlanarCenter => "planar_center",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Catalog::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn manifold(self) -> ManifoldSpec {
        ManifoldSpec::new(match self {
            Catalog::CircleTwoPoints => ManifoldKind::Circle,
            Catalog::SphereNorthSouth => ManifoldKind::Sphere,
            Catalog::TorusHeightGradient => ManifoldKind::Torus,
            Catalog::PlanarSaddle => ManifoldKind::PlaneDisk { radius: 4.0 },
            Catalog::PlanarCenter => ManifoldKind::PlaneDisk { radius: 1.0 },
        })
    }

    fn eval(self, p: &ChartPoint) -> [f64; 2] {
        let [x, y] = p.coords;
        match self {
            Catalog::CircleTwoPoints => [-(TAU * x).sin() / TAU, 0.0],
            Catalog::SphereNorthSouth => {
                if p.chart == 0 {
                    [-x, -y]
                } else {
                    [x, y]
                }
            }
            Catalog::TorusHeightGradient => [(2.0 * PI * x).sin() / TAU, (2.0 * PI * y).sin() / TAU],
            Catalog::PlanarSaddle => [LN_2 * x, -LN_2 * y],
            Catalog::PlanarCenter => [-y, x],
        }
    }
}

/// A vector field given per chart, either parsed from expressions or
/// taken from the catalog. An optional time reversal flips every velocity.
#[derive(Debug, Clone)]
pub struct VectorField {
    source: FieldSource,
    pub params: BTreeMap<String, f64>,
    reversed: bool,
}

#[derive(Debug, Clone)]
enum FieldSource {
    Catalog(Catalog),
    /// `charts[c][i]` is component i in chart c, kept with its source text.
    Expressions(Vec<Vec<Expr>>, Vec<Vec<String>>),
}

impl VectorField {
    pub fn catalog(c: Catalog) -> Self {
        VectorField {
            source: FieldSource::Catalog(c),
            params: BTreeMap::new(),
            reversed: false,
        }
    }

    /// Parse one component list per chart.
    pub fn parse(
        manifold: &ManifoldSpec,
        per_chart: &[Vec<String>],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        if per_chart.len() != manifold.chart_count() {
            return Err(Error::Spec(format!(
                "{} needs expressions for {} chart(s), got {}",
                manifold.kind.name(),
                manifold.chart_count(),
                per_chart.len()
            )));
        }
        let scope = Scope::coords(manifold.coord_names()).with_params(params);
        let mut charts = Vec::new();
        for comps in per_chart {
            if comps.len() != manifold.dim() {
                return Err(Error::Spec(format!(
                    "expected {} component(s), got {}",
                    manifold.dim(),
                    comps.len()
                )));
            }
            charts.push(comps.iter().map(|s| expr::parse(s, &scope)).collect::<Result<Vec<_>>>()?);
        }
        Ok(VectorField {
            source: FieldSource::Expressions(charts, per_chart.to_vec()),
            params: params.clone(),
            reversed: false,
        })
    }

    /// Convenience for single-chart manifolds: `"x*0.6931, -y*0.6931"`.
    pub fn parse_single(manifold: &ManifoldSpec, src: &str) -> Result<Self> {
        Self::parse(manifold, &[expr::split_components(src)], &BTreeMap::new())
    }

    pub fn catalog_id(&self) -> Option<Catalog> {
        match self.source {
            FieldSource::Catalog(c) => Some(c),
            FieldSource::Expressions(..) => None,
        }
    }

    /// The same field with time reversed.
    pub fn reversed(&self) -> Self {
        let mut f = self.clone();
        f.reversed = !f.reversed;
        f
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn eval(&self, p: &ChartPoint) -> [f64; 2] {
        let v = match &self.source {
            FieldSource::Catalog(c) => c.eval(p),
            FieldSource::Expressions(charts, _) => {
                let comps = &charts[p.chart as usize];
                let mut v = [0.0; 2];
                for (i, e) in comps.iter().enumerate() {
                    v[i] = e.eval(&p.coords);
                }
                v
            }
        };
        if self.reversed {
            [-v[0], -v[1]]
        } else {
            v
        }
    }

    /// Human-readable description used in reports and hashes.
    pub fn describe(&self) -> String {
        let body = match &self.source {
            FieldSource::Catalog(c) => format!("catalog:{}", c.name()),
            FieldSource::Expressions(_, text) => text
                .iter()
                .map(|c| c.iter().map(|e| e.trim()).collect::<Vec<_>>().join(", "))
                .collect::<Vec<_>>()
                .join(" | "),
        };
        if self.reversed {
            format!("reversed({body})")
        } else {
            body
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_round_trip() {
        for c in Catalog::ALL {
            assert_eq!(Catalog::from_name(c.name()), Some(c));
        }
        assert_eq!(Catalog::from_name("nope"), None);
    }

    #[test]
    fn parsed_field_matches_catalog_saddle() {
        let m = Catalog::PlanarSaddle.manifold();
        let f = VectorField::parse_single(&m, "x*0.625, -y*0.625").unwrap();
        assert_eq!(f.eval(&ChartPoint::plane(1.0, 1.0)), [0.625, -0.625]);
        let g = VectorField::catalog(Catalog::PlanarSaddle);
        let v = g.eval(&ChartPoint::plane(1.0, 1.0));
        assert!((v[0] - LN_2).abs() < 1e-15 && (v[1] + LN_2).abs() < 1e-15);
    }

    #[test]
    fn reversal_negates() {
        let f = VectorField::catalog(Catalog::TorusHeightGradient);
        let p = ChartPoint::plane(0.1, 0.3);
        let (a, b) = (f.eval(&p), f.reversed().eval(&p));
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], -b[1]);
        assert!(!f.reversed().reversed().is_reversed());
    }

    #[test]
    fn wrong_component_count_is_rejected() {
        let m = Catalog::TorusHeightGradient.manifold();
        assert!(VectorField::parse_single(&m, "x").is_err());
        let s = Catalog::SphereNorthSouth.manifold();
        assert!(VectorField::parse_single(&s, "-x, -y").is_err());
    }
}
