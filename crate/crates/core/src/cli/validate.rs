//! `validate-model`: signature, orientation and homogeneity sweeps over
//! seeded random samples near the apex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::scenario::ValidateOptions;
use crate::comparison::Verdict;
use crate::connection;
use crate::curvature::{self, RiemannMethod};
use crate::error::{Error, Result};
use crate::model::{FinslerModel, SignatureStatus, TimeOrientation};

/// Largest relative error of each homogeneity identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Homogeneity {
    /// `L(λv) = λ² L(v)`
    pub lagrangian: f64,
    /// `ψ(λv) = ψ(v)`
    pub weight: f64,
    /// `g_{λv} = g_v`
    pub fundamental_tensor: f64,
    /// `G(λv) = λ² G(v)`
    pub spray: f64,
    /// `N(λv) = λ N(v)`
    pub nonlinear: f64,
    /// `Ric(λv) = λ² Ric(v)`
    pub ricci: f64,
}

impl Homogeneity {
    fn max(self, o: Homogeneity) -> Homogeneity {
        Homogeneity {
            lagrangian: self.lagrangian.max(o.lagrangian),
            weight: self.weight.max(o.weight),
            fundamental_tensor: self.fundamental_tensor.max(o.fundamental_tensor),
            spray: self.spray.max(o.spray),
            nonlinear: self.nonlinear.max(o.nonlinear),
            ricci: self.ricci.max(o.ricci),
        }
    }

    fn worst(&self) -> f64 {
        [
            self.lagrangian,
            self.weight,
            self.fundamental_tensor,
            self.spray,
            self.nonlinear,
            self.ricci,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelValidation {
    pub samples: usize,
    pub seed: u64,
    pub box_half_width: f64,
    pub max_speed: f64,
    /// Smallest `min|λ|/max|λ|` over the eigenvalues of `g_v`.
    pub min_signature_margin: f64,
    pub signature_failures: usize,
    /// Samples where `∂/∂x⁰` is not future timelike or `−v` is not past.
    pub orientation_failures: usize,
    /// `max |g_v(v, v) − L(v)| / max(1, |L(v)|)`.
    pub metric_identity: f64,
    pub homogeneity: Homogeneity,
    /// `max |g_v − g_{∂₀}|` at the same base point; zero for quadratic models.
    pub non_quadratic: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

struct Sample {
    x: Vec<f64>,
    v: Vec<f64>,
    lambda: f64,
}

struct Outcome {
    margin: f64,
    signature_ok: bool,
    orientation_ok: bool,
    metric: f64,
    homogeneity: Homogeneity,
    non_quadratic: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs())) / scale
}

fn draw(model: &FinslerModel, apex: &[f64], opts: &ValidateOptions, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let d = model.dim();
    for _ in 0..1000 {
        let x: Vec<f64> = apex
            .iter()
            .map(|c| c + rng.gen_range(-opts.box_half_width..=opts.box_half_width))
            .collect();
        let u: Vec<f64> = (1..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if u.iter().map(|c| c * c).sum::<f64>() > 1.0 || !model.in_chart(&x) {
            continue;
        }
        let scale = rng.gen_range(0.5..=2.0);
        let mut v = vec![scale];
        v.extend(u.iter().map(|c| scale * opts.max_speed * c));
        let lambda = rng.gen_range(0.5..=3.0);
        if model.is_future_timelike(&x, &v)? {
            return Ok(Sample { x, v, lambda });
        }
    }
    Err(Error::InvalidArgument(
        "validate: no future timelike samples found; shrink box_half_width or max_speed".into(),
    ))
}

fn check(model: &FinslerModel, s: &Sample) -> Result<Outcome> {
    let (x, v, lam) = (&s.x, &s.v, s.lambda);
    let w: Vec<f64> = v.iter().map(|c| c * lam).collect();
    let sig = model.signature_check(x, v)?;
    let e0 = model.orientation(x);
    let orientation_ok = model.is_future_timelike(x, &e0)?
        && model.classify(x, &v.iter().map(|c| -c).collect::<Vec<_>>())?.1 == TimeOrientation::NonFuture;
    let l = model.l(x, v)?;
    let g = model.fundamental_tensor(x, v)?;
    let gv = crate::linalg::bilinear(&g, v, v);
    let gw = model.fundamental_tensor(x, &w)?;
    let g_scale = g.amax().max(1.0);
    let spray_v = connection::spray(model, x, v)?;
    let spray_w = connection::spray(model, x, &w)?;
    let n_v = connection::nonlinear_connection(model, x, v)?;
    let n_w = connection::nonlinear_connection(model, x, &w)?;
    let ric_v = curvature::ricci(model, x, v, RiemannMethod::Jet)?;
    let ric_w = curvature::ricci(model, x, &w, RiemannMethod::Jet)?;
    let homogeneity = Homogeneity {
        lagrangian: rel(model.l(x, &w)?, lam * lam * l),
        weight: rel(model.psi(x, &w)?, model.psi(x, v)?),
        fundamental_tensor: (&gw - &g).amax() / g_scale,
        spray: rel_vec(&spray_w, &spray_v.iter().map(|c| c * lam * lam).collect::<Vec<_>>()),
        nonlinear: rel_vec(n_w.as_slice(), (&n_v * lam).as_slice()),
        ricci: rel(ric_w, lam * lam * ric_v),
    };
    Ok(Outcome {
        margin: sig.margin(),
        signature_ok: sig.status == SignatureStatus::Valid,
        orientation_ok,
        metric: rel(gv, l),
        homogeneity,
        non_quadratic: (&g - model.fundamental_tensor(x, &e0)?).amax(),
    })
}

/// Sweep `opts.samples` random future timelike vectors at base points in a
/// box around `apex`.
pub fn validate_model(model: &FinslerModel, apex: &[f64], opts: &ValidateOptions, seed: u64) -> Result<ModelValidation> {
    model.check_chart(apex)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..opts.samples)
        .map(|_| draw(model, apex, opts, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = samples
        .par_iter()
        .map(|s| check(model, s))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ModelValidation {
        samples: samples.len(),
        seed,
        box_half_width: opts.box_half_width,
        max_speed: opts.max_speed,
        min_signature_margin: f64::INFINITY,
        signature_failures: 0,
        orientation_failures: 0,
        metric_identity: 0.0,
        homogeneity: Homogeneity::default(),
        non_quadratic: 0.0,
        tolerance: opts.tolerance,
        verdict: Verdict::Pass,
    };
    for o in &outcomes {
        report.min_signature_margin = report.min_signature_margin.min(o.margin);
        report.signature_failures += usize::from(!o.signature_ok);
        report.orientation_failures += usize::from(!o.orientation_ok);
        report.metric_identity = report.metric_identity.max(o.metric);
        report.homogeneity = report.homogeneity.max(o.homogeneity);
        report.non_quadratic = report.non_quadratic.max(o.non_quadratic);
    }
    let ok = report.signature_failures == 0
        && report.orientation_failures == 0
        && report.metric_identity <= opts.tolerance
        && report.homogeneity.worst() <= opts.tolerance;
    report.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}
