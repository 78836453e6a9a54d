use crate::error::{Error, Result};
use crate::expr::{compile, slot_x, BoundExpr, CoordNames, FunctionTable, NVARS, SLOT_T, SLOT_U, SLOT_V};
use crate::geom::domain::{ChartDomain, Interval};
use crate::geom::metric::{euclidean, from_components, half_plane, minkowski, torus_lorentz, MetricField};
use crate::growth::{AsymptoticTag, BoundingFunction};
use crate::mechanics::{
    matrix_from_exprs, scalar_from_expr, vector_from_exprs, FinslerMetricField, ScalarFieldFn, TrajectoryProblem,
};
use crate::waves::{build_ppwave, PlaneWaveProfile, PpWaveSpec};

use super::config::{CheckConfig, ManifoldConfig, ScenarioConfig};

/// What gets integrated.
pub enum Dynamics {
    Trajectory(TrajectoryProblem),
    Finsler {
        metric: FinslerMetricField,
        potential: Option<ScalarFieldFn>,
    },
}

/// A scenario with every expression bound and every dimension checked.
pub struct BuiltScenario {
    pub dynamics: Dynamics,
    /// The (pseudo-)Riemannian metric, absent for Finsler structures.
    pub metric: Option<MetricField>,
    pub names: CoordNames,
    pub ppwave: Option<PpWaveSpec>,
    pub dim: usize,
    pub label: String,
    pub signature: usize,
    pub checks: Vec<PreparedCheck>,
}

/// A check with its expressions bound.
pub struct PreparedCheck {
    pub config: CheckConfig,
    pub field: Option<Vec<BoundExpr>>,
    pub alpha: Option<BoundingFunction>,
}

fn in_config<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    })
}

/// Which variable slots an expression may read.
#[derive(Clone, Copy)]
struct Scope {
    names: CoordNames,
    dim: usize,
    time: bool,
}

impl Scope {
    fn allows(&self, slot: usize) -> bool {
        if slot == SLOT_T {
            return self.time;
        }
        let transverse = match self.names {
            CoordNames::Generic => self.dim,
            CoordNames::Null => {
                if slot == SLOT_U || slot == SLOT_V {
                    return true;
                }
                self.dim - 2
            }
        };
        (1..=transverse).any(|k| slot_x(k) == slot)
    }

    fn compile(&self, src: &str, table: &FunctionTable, path: &str) -> Result<BoundExpr> {
        let e = in_config(path, compile(src, table))?;
        if let Some(slot) = (0..NVARS).find(|&s| e.uses_slot(s) && !self.allows(s)) {
            return Err(Error::config(
                path,
                format!("'{src}' uses variable slot {slot}, not available on this manifold"),
            ));
        }
        Ok(e)
    }

    fn compile_vec(&self, srcs: &[String], table: &FunctionTable, path: &str) -> Result<Vec<BoundExpr>> {
        if srcs.len() != self.dim {
            return Err(Error::config(path, format!("expected {} entries, got {}", self.dim, srcs.len())));
        }
        srcs.iter()
            .enumerate()
            .map(|(i, s)| self.compile(s, table, &format!("{path}/{i}")))
            .collect()
    }

    fn compile_matrix(&self, rows: &[Vec<String>], table: &FunctionTable, path: &str) -> Result<Vec<Vec<BoundExpr>>> {
        if rows.len() != self.dim {
            return Err(Error::config(path, format!("expected {} rows, got {}", self.dim, rows.len())));
        }
        rows.iter()
            .enumerate()
            .map(|(i, r)| self.compile_vec(r, table, &format!("{path}/{i}")))
            .collect()
    }
}

fn function_table(cfg: &ScenarioConfig) -> Result<FunctionTable> {
    let mut table = FunctionTable::new();
    for (name, def) in &cfg.functions {
        let params: Vec<&str> = def.params.iter().map(String::as_str).collect();
        in_config(&format!("/functions/{name}"), table.define(name, &params, &def.body))?;
    }
    Ok(table)
}

fn only_u(src: &str, table: &FunctionTable, path: &str) -> Result<BoundExpr> {
    let e = in_config(path, compile(src, table))?;
    if (0..NVARS).any(|s| s != SLOT_U && e.uses_slot(s)) {
        return Err(Error::config(path, format!("'{src}' may only depend on u")));
    }
    Ok(e)
}

struct Geometry {
    metric: Option<MetricField>,
    finsler: Option<FinslerMetricField>,
    ppwave: Option<PpWaveSpec>,
    names: CoordNames,
    dim: usize,
}

fn geometry(m: &ManifoldConfig, table: &FunctionTable) -> Result<Geometry> {
    let riemannian = |g: MetricField, ppwave: Option<PpWaveSpec>| Geometry {
        names: g.names(),
        dim: g.dim(),
        metric: Some(g),
        finsler: None,
        ppwave,
    };
    let p = "/manifold";
    Ok(match m {
        ManifoldConfig::Euclidean { dim } => riemannian(in_config(p, euclidean(*dim))?, None),
        ManifoldConfig::Minkowski { dim } => riemannian(in_config(p, minkowski(*dim))?, None),
        ManifoldConfig::TorusLorentz { tau } => {
            let scope = Scope {
                names: CoordNames::Generic,
                dim: 1,
                time: false,
            };
            let tau = scope.compile(tau, table, "/manifold/tau")?;
            riemannian(in_config(p, torus_lorentz(tau))?, None)
        }
        ManifoldConfig::HalfPlane => riemannian(in_config(p, half_plane())?, None),
        ManifoldConfig::PpWave { dim, h } => {
            if !(3..=8).contains(dim) {
                return Err(Error::config("/manifold/dim", format!("pp-waves need 3 to 8 dimensions, got {dim}")));
            }
            let scope = Scope {
                names: CoordNames::Null,
                dim: *dim,
                time: false,
            };
            scope.compile(h, table, "/manifold/h")?;
            let spec = in_config("/manifold/h", PpWaveSpec::from_expression(*dim, h, table))?;
            riemannian(in_config(p, build_ppwave(&spec))?, Some(spec))
        }
        ManifoldConfig::PlaneWave { profile } => {
            let rows = profile
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, s)| only_u(s, table, &format!("/manifold/profile/{i}/{j}")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = in_config("/manifold/profile", PpWaveSpec::plane_wave(PlaneWaveProfile::Matrix(rows)))?;
            riemannian(in_config(p, build_ppwave(&spec))?, Some(spec))
        }
        ManifoldConfig::PlaneWavePolarization { a, b, c } => {
            let profile = PlaneWaveProfile::Polarization {
                a: only_u(a, table, "/manifold/a")?,
                b: only_u(b, table, "/manifold/b")?,
                c: only_u(c, table, "/manifold/c")?,
            };
            let spec = in_config(p, PpWaveSpec::plane_wave(profile))?;
            riemannian(in_config(p, build_ppwave(&spec))?, Some(spec))
        }
        ManifoldConfig::Components {
            dim,
            signature,
            components,
            bounds,
            periods,
            null_coordinates,
        } => {
            if !(2..=8).contains(dim) {
                return Err(Error::config("/manifold/dim", format!("dimension must be 2 to 8, got {dim}")));
            }
            let names = if *null_coordinates {
                CoordNames::Null
            } else {
                CoordNames::Generic
            };
            let scope = Scope {
                names,
                dim: *dim,
                time: false,
            };
            let comps = scope.compile_matrix(components, table, "/manifold/components")?;
            let bounds = match bounds {
                Some(b) if b.len() != *dim => {
                    return Err(Error::config("/manifold/bounds", format!("expected {dim} entries")));
                }
                Some(b) => b.iter().map(|c| Interval { lo: c.lo, hi: c.hi }).collect(),
                None => vec![Interval::UNBOUNDED; *dim],
            };
            let periods = match periods {
                Some(q) if q.len() != *dim => {
                    return Err(Error::config("/manifold/periods", format!("expected {dim} entries")));
                }
                Some(q) => q.clone(),
                None => vec![None; *dim],
            };
            let domain = in_config(p, ChartDomain::new(bounds, periods))?;
            riemannian(
                in_config(p, from_components("components", domain, *signature, names, comps))?,
                None,
            )
        }
        ManifoldConfig::Finsler { dim, f_squared } => {
            let domain = in_config("/manifold/dim", ChartDomain::unbounded(*dim))?;
            let fm = in_config(
                "/manifold/f_squared",
                FinslerMetricField::from_expression("finsler", domain, f_squared, table),
            )?;
            Geometry {
                metric: None,
                finsler: Some(fm),
                ppwave: None,
                names: CoordNames::Generic,
                dim: *dim,
            }
        }
        ManifoldConfig::FinslerPerturbedQuartic {
            dim,
            epsilon,
            base_components,
        } => {
            if !(*epsilon >= 0.0) {
                return Err(Error::config("/manifold/epsilon", "must be nonnegative"));
            }
            let base = match base_components {
                None => in_config("/manifold/dim", euclidean(*dim))?,
                Some(rows) => {
                    let scope = Scope {
                        names: CoordNames::Generic,
                        dim: *dim,
                        time: false,
                    };
                    let comps = scope.compile_matrix(rows, table, "/manifold/base_components")?;
                    let domain = in_config("/manifold/dim", ChartDomain::unbounded(*dim))?;
                    in_config(
                        "/manifold/base_components",
                        from_components("base", domain, 0, CoordNames::Generic, comps),
                    )?
                }
            };
            let fm = FinslerMetricField::perturbed_quartic(base, *epsilon);
            Geometry {
                metric: None,
                finsler: Some(fm),
                ppwave: None,
                names: CoordNames::Generic,
                dim: *dim,
            }
        }
    })
}

fn prepare_check(c: &CheckConfig, i: usize, scope: Scope, table: &FunctionTable, geo: &Geometry) -> Result<PreparedCheck> {
    let path = format!("/checks/{i}");
    let mut prepared = PreparedCheck {
        config: c.clone(),
        field: None,
        alpha: None,
    };
    let field_scope = Scope { time: false, ..scope };
    let check_point = |p: &[f64], at: String| -> Result<()> {
        if p.len() != scope.dim {
            return Err(Error::config(at, format!("expected {} coordinates", scope.dim)));
        }
        Ok(())
    };
    let needs_metric = || -> Result<()> {
        if geo.metric.is_none() {
            return Err(Error::config(&path, format!("{} needs a metric manifold", c.name())));
        }
        Ok(())
    };
    match c {
        CheckConfig::Killing { field, .. } => {
            needs_metric()?;
            prepared.field = Some(field_scope.compile_vec(field, table, &format!("{path}/field"))?);
        }
        CheckConfig::CurvatureCondition { field, points } => {
            needs_metric()?;
            prepared.field = Some(field_scope.compile_vec(field, table, &format!("{path}/field"))?);
            for (k, p) in points.iter().flatten().enumerate() {
                check_point(p, format!("{path}/points/{k}"))?;
            }
        }
        CheckConfig::CurvatureDerivative { points, .. } => {
            needs_metric()?;
            for (k, p) in points.iter().enumerate() {
                check_point(p, format!("{path}/points/{k}"))?;
            }
        }
        CheckConfig::Vacuum | CheckConfig::CausalCharacter { .. } => needs_metric()?,
        CheckConfig::Reduction { .. } => {
            if geo.ppwave.is_none() {
                return Err(Error::config(&path, "reduction needs a pp-wave manifold"));
            }
        }
        CheckConfig::FinslerSpeed { .. } => {
            if geo.finsler.is_none() {
                return Err(Error::config(&path, "finsler-speed needs a Finsler manifold"));
            }
        }
        CheckConfig::Hypotheses { center, b, radius, .. } => {
            if let Some(c) = center {
                check_point(c, format!("{path}/center"))?;
            }
            if !(*b > 0.0) || !(*radius > 0.0) {
                return Err(Error::config(&path, "b and radius must be positive"));
            }
        }
        CheckConfig::Growth { alpha, tag, x_max, .. } => {
            let f = in_config(
                &format!("{path}/alpha"),
                BoundingFunction::from_expression(alpha, table, tag.unwrap_or(AsymptoticTag::Untagged), *x_max),
            )?;
            prepared.alpha = Some(f);
        }
        CheckConfig::BoundChain | CheckConfig::EnergyLedger { .. } => {}
    }
    Ok(prepared)
}

/// Binds every expression of a scenario; failures are configuration errors.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<BuiltScenario> {
    cfg.validate()?;
    let table = function_table(cfg)?;
    let geo = geometry(&cfg.manifold, &table)?;
    let scope = Scope {
        names: geo.names,
        dim: geo.dim,
        time: true,
    };
    let dynamics = match (&geo.metric, &geo.finsler) {
        (Some(g), _) => {
            let mut prob = match &cfg.problem {
                None => TrajectoryProblem::geodesic(g.clone()),
                Some(_) => in_config("/problem", TrajectoryProblem::new(g.clone()))?,
            };
            if let Some(pc) = &cfg.problem {
                if let Some(e) = &pc.endomorphism {
                    let m = scope.compile_matrix(e, &table, "/problem/endomorphism")?;
                    prob = prob.with_endomorphism(in_config("/problem/endomorphism", matrix_from_exprs(m, geo.names))?);
                }
                if let Some(r) = &pc.force {
                    prob = prob.with_force(vector_from_exprs(scope.compile_vec(r, &table, "/problem/force")?, geo.names));
                }
                match (&pc.potential, &pc.potential_dt) {
                    (Some(v), dv) => {
                        let v = scalar_from_expr(scope.compile(v, &table, "/problem/potential")?, geo.names);
                        let dv = dv
                            .as_ref()
                            .map(|s| scope.compile(s, &table, "/problem/potential_dt"))
                            .transpose()?
                            .map(|e| scalar_from_expr(e, geo.names));
                        prob = prob.with_potential(v, dv);
                    }
                    (None, Some(_)) => {
                        return Err(Error::config("/problem/potential_dt", "given without a potential"));
                    }
                    (None, None) => {}
                }
            }
            Dynamics::Trajectory(prob)
        }
        (None, Some(fm)) => {
            let mut potential = None;
            if let Some(pc) = &cfg.problem {
                if pc.endomorphism.is_some() || pc.force.is_some() || pc.potential_dt.is_some() {
                    return Err(Error::config("/problem", "Finsler scenarios accept only a potential"));
                }
                if let Some(v) = &pc.potential {
                    potential = Some(scalar_from_expr(scope.compile(v, &table, "/problem/potential")?, geo.names));
                }
            }
            Dynamics::Finsler {
                metric: fm.clone(),
                potential,
            }
        }
        (None, None) => unreachable!("every manifold kind yields a metric or a Finsler structure"),
    };
    let domain = match (&geo.metric, &geo.finsler) {
        (Some(g), _) => g.domain().clone(),
        (None, Some(f)) => f.domain().clone(),
        (None, None) => unreachable!(),
    };
    for (i, ic) in cfg.initial_conditions.iter().enumerate() {
        if ic.x.len() != geo.dim || ic.v.len() != geo.dim {
            return Err(Error::config(
                format!("/initial_conditions/{i}"),
                format!("x and v must have {} entries", geo.dim),
            ));
        }
        if !domain.contains(&ic.x) {
            return Err(Error::config(format!("/initial_conditions/{i}/x"), "outside the chart domain"));
        }
        if ic.v.iter().chain(&ic.x).any(|c| !c.is_finite()) || !ic.t0.is_finite() {
            return Err(Error::config(format!("/initial_conditions/{i}"), "non-finite entry"));
        }
    }
    let checks = cfg
        .checks
        .iter()
        .enumerate()
        .map(|(i, c)| prepare_check(c, i, scope, &table, &geo))
        .collect::<Result<Vec<_>>>()?;
    let (label, signature) = match (&geo.metric, &geo.finsler) {
        (Some(g), _) => (g.label().to_string(), g.signature()),
        (None, Some(f)) => (f.label().to_string(), 0),
        (None, None) => unreachable!(),
    };
    Ok(BuiltScenario {
        dynamics,
        metric: geo.metric,
        names: geo.names,
        ppwave: geo.ppwave,
        dim: geo.dim,
        label,
        signature,
        checks,
    })
}

/// Evaluates a compiled vector field at `p`.
pub fn eval_field(field: &[BoundExpr], names: CoordNames, p: &[f64]) -> Vec<f64> {
    let vars = names.vars(p, 0.0);
    field.iter().map(|e| e.eval(&vars).unwrap_or(f64::NAN)).collect()
}
