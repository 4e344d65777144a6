//! Standard sets for volume comparison (radial descriptions of star-shaped
//! sets in the future cone), their volumes by polar decomposition and the
//! comparison theorem checks.

mod oracle;
mod quadrature;
mod report;
mod theorems;
mod volume;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{self, EffectiveDim, RiemannMethod};
use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiTensorPath, RadialOptions, Route};
use crate::model::FinslerModel;
use crate::ode::OdeOptions;

pub use oracle::{coordinate_volume, OracleResolution};
pub use quadrature::{build_quadrature, gauss_legendre, integrate, DirectionNode, DirectionQuadrature, QuadratureResolution};
pub use report::{
    write_csv, BoundReport, BoundSource, CheckResult, ComparisonReport, CsvRow, Diagnostics, PairResult, Verdict,
    CSV_HEADER,
};
pub use theorems::{
    ball_bound_check, bg_infinity_check, bishop_gromov_check, gunther_check, hric_sweep, BallOptions, BgInfOptions,
    BgOptions, CheckContext, CheckOutput, GuntherOptions, Tolerances,
};
pub use volume::{radial_integral, radial_volume, sclv_volume, volume_times, RadialLimit, VolumeEstimate};

/// Direction patch: chart points `w = (1, center + s·u)` with `|s| ≤ radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patch {
    #[serde(default)]
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Cut function `b(v)` as a function of the radial chart fraction `s/S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Cut {
    Constant { b: f64 },
    /// `b = base + slope·(s/S)`.
    Profile { base: f64, slope: f64 },
}

impl Cut {
    pub fn value(&self, frac: f64) -> f64 {
        match *self {
            Cut::Constant { b } => b,
            Cut::Profile { base, slope } => base + slope * frac,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Cut::Constant { .. }) || matches!(self, Cut::Profile { slope, .. } if *slope == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SclvSpec {
    pub apex: Vec<f64>,
    pub patch: Patch,
    pub cut: Cut,
}

impl SclvSpec {
    /// Constant cut `b` over a patch centred on the rest direction.
    pub fn centered(n: usize, radius: f64, b: f64) -> Self {
        Self {
            apex: vec![0.0; n + 1],
            patch: Patch {
                center: vec![0.0; n],
                radius,
            },
            cut: Cut::Constant { b },
        }
    }

    pub fn validate(&self, model: &FinslerModel) -> Result<()> {
        let n = model.n();
        if self.apex.len() != n + 1 {
            return Err(Error::InvalidArgument(format!("apex must have {} coordinates", n + 1)));
        }
        model.check_chart(&self.apex)?;
        if self.patch.center.len() != n {
            return Err(Error::InvalidArgument(format!("patch center must have {n} components")));
        }
        if !(self.patch.radius > 0.0 && self.patch.radius.is_finite()) {
            return Err(Error::InvalidArgument("patch radius must be positive".into()));
        }
        let (lo, hi) = (self.cut.value(0.0), self.cut.value(1.0));
        if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument("cut function must be positive and bounded".into()));
        }
        Ok(())
    }

    /// Unit direction and cut value at chart parameters `params`.
    pub fn direction(&self, model: &FinslerModel, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.validate(model)?;
        if params.len() != model.n() {
            return Err(Error::InvalidArgument(format!("direction needs {} chart parameters", model.n())));
        }
        let (v, _, cut) = quadrature::direction_at(model, self, params)?;
        Ok((v, cut))
    }
}

/// Numerical settings shared by all direction pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyOptions {
    pub ode_tol: f64,
    /// Curvature-annotated samples per direction.
    pub check_points: usize,
    /// Gauss nodes per radial volume integral.
    pub time_nodes: usize,
    pub riemann: RiemannMethod,
    pub route: Route,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            ode_tol: 1e-10,
            check_points: 400,
            time_nodes: 16,
            riemann: RiemannMethod::Jet,
            route: Route::Variational,
        }
    }
}

impl StudyOptions {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions::with_tol(self.ode_tol)
    }
}

/// A direction node together with its radial pipeline output.
#[derive(Debug, Clone)]
pub struct DirectionRun {
    pub node: DirectionNode,
    pub path: JacobiTensorPath,
}

/// Run the radial pipeline on every node up to `horizon` (usually the cut
/// value). Directions run in parallel; the output order is the node order.
pub fn run_directions<F>(
    model: &FinslerModel,
    sclv: &SclvSpec,
    quad: &DirectionQuadrature,
    opts: &StudyOptions,
    horizon: RadialLimit,
    annotate: bool,
    extra_times: F,
) -> Result<Vec<DirectionRun>>
where
    F: Fn(&DirectionNode) -> Vec<f64> + Sync,
{
    let results: Vec<Result<DirectionRun>> = quad
        .nodes
        .par_iter()
        .map(|node| {
            let t_end = horizon.upper(node.cut);
            let radial = RadialOptions {
                ode: opts.ode(),
                route: opts.route,
                riemann: opts.riemann,
                check_times: if annotate {
                    jacobi::check_grid(t_end, opts.check_points)
                } else {
                    Vec::new()
                },
                volume_times: extra_times(node).into_iter().filter(|t| *t > 0.0 && *t <= t_end).collect(),
            };
            let path = jacobi::radial_run(model, &sclv.apex, &node.v, t_end, &radial)?;
            if let Some(cp) = path.conjugate {
                if cp.t < t_end * (1.0 - 1e-9) {
                    return Err(Error::ConjugateBeforeCut { t: cp.t, cut: node.cut });
                }
            }
            Ok(DirectionRun {
                node: node.clone(),
                path,
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Empirical curvature and weight bounds over all annotated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialBounds {
    /// `inf Ric_N` (only when an `N` was supplied).
    pub ric_n_inf: Option<f64>,
    /// `inf Ric_∞`.
    pub ric_inf_inf: f64,
    /// `sup K` over radial planes.
    pub flag_sup: f64,
    pub psi_sup: f64,
    /// `inf ψ′_η`.
    pub dpsi_inf: f64,
    pub samples: usize,
    pub directions: usize,
}

/// Scan the annotated samples of `runs` for the hypotheses of the comparison
/// theorems.
pub fn radial_bound_scan(model: &FinslerModel, runs: &[DirectionRun], big_n: Option<EffectiveDim>) -> RadialBounds {
    let n = model.n();
    let mut b = RadialBounds {
        ric_n_inf: big_n.map(|_| f64::INFINITY),
        ric_inf_inf: f64::INFINITY,
        flag_sup: f64::NEG_INFINITY,
        psi_sup: f64::NEG_INFINITY,
        dpsi_inf: f64::INFINITY,
        samples: 0,
        directions: runs.len(),
    };
    for run in runs {
        for s in &run.path.samples {
            b.samples += 1;
            if let (Some(dim), Some(cur)) = (big_n, b.ric_n_inf.as_mut()) {
                *cur = cur.min(curvature::ricci_n(s.ric, &s.weight, n, dim));
            }
            b.ric_inf_inf = b
                .ric_inf_inf
                .min(curvature::ricci_n(s.ric, &s.weight, n, EffectiveDim::INFINITY));
            b.flag_sup = b.flag_sup.max(s.sup_flag());
            b.psi_sup = b.psi_sup.max(s.weight.psi);
            b.dpsi_inf = b.dpsi_inf.min(s.weight.dpsi);
        }
        for vs in &run.path.volume {
            b.psi_sup = b.psi_sup.max(vs.psi);
        }
    }
    b
}
