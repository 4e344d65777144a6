//! The four volume comparison checks: Bishop–Gromov for finite `N`, Günther,
//! Bishop–Gromov for `N = ∞`, and the ball growth bound.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::quadrature::{build_quadrature, integrate, DirectionQuadrature, QuadratureResolution};
use super::report::{BoundReport, CheckResult, ComparisonReport, CsvRow, Diagnostics, PairResult, Verdict};
use super::volume::{radial_volume, volume_times, RadialLimit, VolumeEstimate};
use super::{radial_bound_scan, run_directions, DirectionNode, DirectionRun, SclvSpec, StudyOptions};
use crate::curvature::EffectiveDim;
use crate::error::{Error, Result};
use crate::jacobi::{self, RadialSample, RiccatiQuantities};
use crate::model::FinslerModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Allowed negative margin of an integrated inequality.
    pub margin: f64,
    /// Allowed positive value of a pointwise residual.
    pub residual: f64,
    /// Monotone-ratio slack `abs + rel·|value|`.
    pub ratio_abs: f64,
    pub ratio_rel: f64,
    /// Allowed shortfall of `min f` below 1.
    pub gunther_f: f64,
    /// Relative agreement of the polar and coordinate-space volumes.
    pub volume_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            margin: 1e-7,
            residual: 1e-6,
            ratio_abs: 1e-8,
            ratio_rel: 1e-6,
            gunther_f: 1e-6,
            volume_rel: 1e-4,
        }
    }
}

/// Everything a check needs besides its own options.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext<'a> {
    pub model: &'a FinslerModel,
    pub sclv: &'a SclvSpec,
    pub resolution: QuadratureResolution,
    pub study: StudyOptions,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgOptions {
    #[serde(rename = "N")]
    pub big_n: f64,
    pub pairs: Vec<(f64, f64)>,
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuntherOptions {
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BgInfOptions {
    pub pairs: Vec<(f64, f64)>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallOptions {
    pub eps: f64,
    pub radii: Vec<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
}

fn default_halvings() -> usize {
    20
}

/// A report and its per-sample diagnostic rows.
#[derive(Debug, Clone)]
pub struct CheckOutput {
    pub report: ComparisonReport,
    pub rows: Vec<CsvRow>,
}

struct Prepared {
    quad: DirectionQuadrature,
    runs: Vec<DirectionRun>,
    half_quad: DirectionQuadrature,
    half_runs: Vec<DirectionRun>,
    riccati: Vec<Vec<RiccatiQuantities>>,
}

impl Prepared {
    fn volume(&self, limit: RadialLimit, m: usize) -> Result<VolumeEstimate> {
        let full = radial_volume(&self.runs, limit, m)?;
        let half = radial_volume(&self.half_runs, limit, m)?;
        Ok(VolumeEstimate {
            value: full.value,
            error: full.error + (full.value - half.value).abs(),
        })
    }

    fn diagnostics(&self, ctx: &CheckContext) -> Diagnostics {
        Diagnostics::collect(
            &self.runs,
            ctx.study.check_points,
            ctx.study.time_nodes,
            ctx.study.ode_tol,
            self.quad.sigma(),
            (self.quad.sigma() - self.half_quad.sigma()).abs(),
        )
    }

    /// Annotated samples with `t < limit(direction)`, paired with their
    /// Riccati quantities.
    fn samples(&self, limit: impl Fn(&DirectionNode) -> f64) -> impl Iterator<Item = (&DirectionRun, &RadialSample, &RiccatiQuantities)> {
        self.runs.iter().zip(&self.riccati).flat_map(move |(run, rq)| {
            let lim = limit(&run.node);
            run.path
                .samples
                .iter()
                .zip(rq)
                .filter(move |(s, _)| s.t < lim)
                .map(move |(s, q)| (run, s, q))
        })
    }
}

fn prepare<F>(ctx: &CheckContext, limits: &[RadialLimit], extra: F) -> Result<Prepared>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let m = ctx.study.time_nodes;
    let times = |node: &DirectionNode| {
        let mut t = volume_times(node.cut, limits, m);
        t.extend(extra(node.cut));
        t
    };
    let quad = build_quadrature(ctx.model, ctx.sclv, ctx.resolution)?;
    let runs = run_directions(ctx.model, ctx.sclv, &quad, &ctx.study, RadialLimit::Full, true, &times)?;
    let half_quad = build_quadrature(ctx.model, ctx.sclv, ctx.resolution.halved())?;
    let half_runs = run_directions(ctx.model, ctx.sclv, &half_quad, &ctx.study, RadialLimit::Full, false, &times)?;
    let riccati = runs
        .iter()
        .map(|r| r.path.samples.iter().map(|s| s.riccati()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        quad,
        runs,
        half_quad,
        half_runs,
        riccati,
    })
}

fn validate_pairs(pairs: &[(f64, f64)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("at least one (r, R) pair is required".into()));
    }
    for &(r, big_r) in pairs {
        if !(r > 0.0 && r <= big_r && big_r <= 1.0) {
            return Err(Error::InvalidArgument(format!("pair ({r}, {big_r}) must satisfy 0 < r <= R <= 1")));
        }
    }
    Ok(())
}

fn pair_limits(pairs: &[(f64, f64)]) -> Vec<RadialLimit> {
    pairs
        .iter()
        .flat_map(|&(r, big_r)| [RadialLimit::Scaled(r), RadialLimit::Scaled(big_r)])
        .collect()
}

fn ratio_pairs<F: Fn(f64) -> f64>(
    prep: &Prepared,
    pairs: &[(f64, f64)],
    m: usize,
    t_x: f64,
    density: F,
    tol: f64,
) -> Result<Vec<PairResult>> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(r, big_r) in pairs {
        let vr = prep.volume(RadialLimit::Scaled(r), m)?;
        let vbig = prep.volume(RadialLimit::Scaled(big_r), m)?;
        let lhs = vr.value / vbig.value;
        let rhs = integrate(&density, 0.0, r * t_x, 16, 24) / integrate(&density, 0.0, big_r * t_x, 16, 24);
        let margin = lhs - rhs;
        out.push(PairResult {
            r,
            big_r: Some(big_r),
            lhs,
            rhs,
            margin,
            tolerance: tol,
            error_estimate: lhs * (vr.error / vr.value + vbig.error / vbig.value),
            pass: margin >= -tol,
        });
    }
    Ok(out)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

fn riccati_check(prep: &Prepared, limit: impl Fn(&DirectionNode) -> f64, tol: f64) -> CheckResult {
    CheckResult::at_most(
        "riccati_residual",
        max_of(prep.samples(limit).map(|(_, _, q)| q.riccati_residual)),
        tol,
    )
}

/// Largest increase of `numer/denom` and of the integral ratio, over all
/// directions, restricted to `t < limit`.
fn monotone_check<N, D>(prep: &Prepared, limit: impl Fn(&DirectionNode) -> f64, numer: N, denom: D, tol: &Tolerances) -> (f64, f64)
where
    N: Fn(&RadialSample) -> f64,
    D: Fn(f64) -> f64,
{
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for run in &prep.runs {
        let lim = limit(&run.node);
        let ss: Vec<&RadialSample> = run.path.samples.iter().filter(|s| s.t < lim).collect();
        if ss.len() < 2 {
            continue;
        }
        let ts: Vec<f64> = ss.iter().map(|s| s.t).collect();
        let nu: Vec<f64> = ss.iter().map(|s| numer(s)).collect();
        let de: Vec<f64> = ts.iter().map(|&t| denom(t)).collect();
        let v = jacobi::monotone_ratio_check(&ts, &nu, &de, tol.ratio_abs, tol.ratio_rel);
        worst.0 = worst.0.max(v.worst_pointwise);
        worst.1 = worst.1.max(v.worst_integral);
    }
    worst
}

fn f_weighted(s: &RadialSample) -> f64 {
    (-s.weight.psi).exp() * s.det
}

fn rows(
    prep: &Prepared,
    limit: impl Fn(&DirectionNode) -> f64,
    big_n: f64,
    c_hric: f64,
    c_conc: f64,
    f_col: impl Fn(&RadialSample) -> f64,
) -> Vec<CsvRow> {
    let mut out = Vec::new();
    for (run, rq) in prep.runs.iter().zip(&prep.riccati) {
        let lim = limit(&run.node);
        for (s, q) in run.path.samples.iter().zip(rq) {
            out.push(CsvRow {
                direction: run.node.id,
                params: run.node.params.clone(),
                t: s.t,
                det_a: s.det,
                lambda: q.lambda,
                lambda_psi: q.lambda - s.weight.dpsi,
                h: jacobi::weighted_density(s.det, s.weight.psi, big_n).unwrap_or(f64::NAN),
                f: f_col(s),
                riccati: q.riccati_residual,
                hric: jacobi::hric_residual(s, q, c_hric, big_n).unwrap_or(f64::NAN),
                concavity: jacobi::log_concavity(s, q, c_conc),
                flags: if s.t < lim { String::new() } else { "beyond_limit".into() },
            });
        }
    }
    out
}

fn report(
    theorem: &str,
    bounds: Vec<BoundReport>,
    parameters: serde_json::Value,
    pairs: Vec<PairResult>,
    checks: Vec<CheckResult>,
    diagnostics: Diagnostics,
    notes: Vec<String>,
) -> ComparisonReport {
    ComparisonReport {
        theorem: theorem.into(),
        bounds,
        parameters,
        pairs,
        checks,
        diagnostics,
        notes,
        verdict: Verdict::Pass,
    }
}

/// Hypothesis-violation sweep: `max N h″ + c h` and the smallest slack of
/// the bracket `−(λ′ − ψ″ + λ_ψ²/N + c)` over the samples with `t < limit`.
pub fn hric_sweep(
    runs: &[DirectionRun],
    big_n: f64,
    c: f64,
    limit: impl Fn(&DirectionNode) -> f64,
) -> Result<(f64, f64)> {
    let mut worst = f64::NEG_INFINITY;
    let mut slack = f64::INFINITY;
    for run in runs {
        let lim = limit(&run.node);
        for s in run.path.samples.iter().filter(|s| s.t < lim) {
            let q = s.riccati()?;
            worst = worst.max(jacobi::hric_residual(s, &q, c, big_n)?);
            slack = slack.min(-jacobi::hric_bracket(s, &q, c, big_n));
        }
    }
    Ok((worst, slack))
}

/// `ρ(U_x(r))/ρ(U_x(R)) ≥ ∫₀^{rT} s_{c/N}ᴺ / ∫₀^{RT} s_{c/N}ᴺ` under `Ric_N ≥ c`.
pub fn bishop_gromov_check(ctx: &CheckContext, opts: &BgOptions) -> Result<CheckOutput> {
    let n = ctx.model.n();
    let big_n = opts.big_n;
    if !(big_n > n as f64 && big_n.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Bishop-Gromov requires N in (n, inf); got N = {big_n} with n = {n}"
        )));
    }
    if !ctx.sclv.cut.is_constant() {
        return Err(Error::InvalidArgument("Bishop-Gromov requires a constant cut function".into()));
    }
    validate_pairs(&opts.pairs)?;
    let tol = ctx.tolerances;
    let m = ctx.study.time_nodes;
    let prep = prepare(ctx, &pair_limits(&opts.pairs), |_| Vec::new())?;
    let scan = radial_bound_scan(ctx.model, &prep.runs, Some(EffectiveDim::Finite(big_n)));
    let c_b = BoundReport::resolve("c", scan.ric_n_inf.expect("finite N"), opts.c, &scan);
    let c = c_b.value;
    let b = prep.quad.cut_min();
    let t_x = if c <= 0.0 { b } else { b.min(PI * (big_n / c).sqrt()) };
    let kappa = c / big_n;
    let density = |t: f64| jacobi::s_kappa(kappa, t).max(0.0).powf(big_n);
    let pairs = ratio_pairs(&prep, &opts.pairs, m, t_x, density, tol.margin)?;

    let limit = |node: &DirectionNode| node.cut.min(t_x);
    let (hric, slack) = hric_sweep(&prep.runs, big_n, c, limit)?;
    let c_bad = c + 10.0 * slack.max(0.0) + 1e-3;
    let bad_bracket = max_of(
        prep.samples(limit)
            .map(|(_, s, q)| jacobi::hric_bracket(s, q, c_bad, big_n)),
    );
    let (mono_p, mono_i) = monotone_check(&prep, limit, f_weighted, |t| density(t), &tol);
    let checks = vec![
        riccati_check(&prep, limit, tol.residual),
        CheckResult::at_most("hric_residual", hric, tol.residual),
        CheckResult::at_most("density_ratio_monotone", mono_p, 0.0),
        CheckResult::at_most("integral_ratio_monotone", mono_i, 0.0),
        CheckResult::detects("hric_negative_control", bad_bracket, 0.0),
    ];
    let rows = rows(&prep, limit, big_n, c, c, f_weighted);
    let mut notes = Vec::new();
    if t_x < b {
        notes.push(format!("radial range truncated to pi*sqrt(N/c) = {t_x}"));
    }
    let overstated = c_b.overstated(true);
    let rep = report(
        "bishop_gromov",
        vec![c_b],
        json!({ "N": big_n, "T": t_x, "kappa": kappa, "cut_min": b, "negative_control_c": c_bad }),
        pairs,
        checks,
        prep.diagnostics(ctx),
        notes,
    )
    .finish(overstated);
    Ok(CheckOutput { report: rep, rows })
}

/// `ρ(U_x) ≥ e^{−k} σ(Ũ₁) ∫₀^{b_x} s_{−c}ⁿ` under `K ≤ −c` on radial planes and `ψ ≤ k`.
pub fn gunther_check(ctx: &CheckContext, opts: &GuntherOptions) -> Result<CheckOutput> {
    if let Some(c) = opts.c {
        if c < 0.0 {
            return Err(Error::InvalidArgument(format!("the Gunther check requires c >= 0; got c = {c}")));
        }
    }
    let n = ctx.model.n();
    let tol = ctx.tolerances;
    let m = ctx.study.time_nodes;
    let prep = prepare(ctx, &[RadialLimit::Full], |_| Vec::new())?;
    let scan = radial_bound_scan(ctx.model, &prep.runs, None);
    let mut c_scan = -scan.flag_sup;
    if c_scan.abs() < 1e-9 {
        c_scan = 0.0;
    }
    let c_b = BoundReport::resolve("c", c_scan, opts.c, &scan);
    let k_b = BoundReport::resolve("k", scan.psi_sup, opts.k, &scan);
    let mut notes = Vec::new();
    let hypothesis_ok = c_b.value >= 0.0;
    let c = if hypothesis_ok {
        c_b.value
    } else {
        notes.push(format!(
            "scanned sup of the flag curvature is {}; no c >= 0 with K <= -c exists, c = 0 used",
            scan.flag_sup
        ));
        0.0
    };
    let k = k_b.value;
    let b = prep.quad.cut_min();
    let sigma = prep.quad.sigma();
    let vol = prep.volume(RadialLimit::Full, m)?;
    let rhs = (-k).exp() * sigma * integrate(|t| jacobi::s_kappa(-c, t).powi(n as i32), 0.0, b, 16, 24);
    let margin = vol.value - rhs;
    let pairs = vec![PairResult {
        r: 1.0,
        big_r: None,
        lhs: vol.value,
        rhs,
        margin,
        tolerance: tol.margin,
        error_estimate: vol.error,
        pass: margin >= -tol.margin,
    }];
    let all = |node: &DirectionNode| node.cut * (1.0 + 1e-12);
    let min_f = prep
        .samples(all)
        .map(|(_, s, _)| jacobi::gunther_f(s.det, c, s.t, n))
        .fold(f64::INFINITY, f64::min);
    let c_bad = c + 0.1 / (b * b);
    let min_f_bad = prep
        .samples(all)
        .map(|(_, s, _)| jacobi::gunther_f(s.det, c_bad, s.t, n))
        .fold(f64::INFINITY, f64::min);
    let checks = vec![
        riccati_check(&prep, all, tol.residual),
        CheckResult::at_most("gunther_f_shortfall", 1.0 - min_f, tol.gunther_f),
        CheckResult::detects("gunther_f_negative_control", 1.0 - min_f_bad, tol.gunther_f),
    ];
    let rows = rows(&prep, all, n as f64, 0.0, 0.0, |s| jacobi::gunther_f(s.det, c, s.t, n));
    let overstated = c_b.overstated(true) || k_b.overstated(false);
    let mut rep = report(
        "gunther",
        vec![c_b, k_b],
        json!({ "cut_min": b, "sigma": sigma, "min_f": min_f, "negative_control_c": c_bad }),
        pairs,
        checks,
        prep.diagnostics(ctx),
        notes,
    )
    .finish(overstated);
    if !hypothesis_ok && rep.verdict.is_ok() {
        rep.verdict = Verdict::Warning;
    }
    Ok(CheckOutput { report: rep, rows })
}

/// `ρ(U_x(r))/ρ(U_x(R)) ≥ ∫₀^{rT} e^{at}s_cⁿ / ∫₀^{RT} e^{at}s_cⁿ` under
/// `Ric_∞ ≥ nc` and `ψ′ ≥ −a`.
pub fn bg_infinity_check(ctx: &CheckContext, opts: &BgInfOptions) -> Result<CheckOutput> {
    if !ctx.sclv.cut.is_constant() {
        return Err(Error::InvalidArgument("the N = inf comparison requires a constant cut function".into()));
    }
    validate_pairs(&opts.pairs)?;
    let n = ctx.model.n();
    let tol = ctx.tolerances;
    let m = ctx.study.time_nodes;
    let prep = prepare(ctx, &pair_limits(&opts.pairs), |_| Vec::new())?;
    let scan = radial_bound_scan(ctx.model, &prep.runs, None);
    let c_b = BoundReport::resolve("c", scan.ric_inf_inf / n as f64, opts.c, &scan);
    let a_b = BoundReport::resolve("a", -scan.dpsi_inf, opts.a, &scan);
    let (c, a) = (c_b.value, a_b.value);
    let b = prep.quad.cut_min();
    let t_x = if c <= 0.0 { b } else { b.min(PI / (2.0 * c.sqrt())) };
    let density = |t: f64| (a * t).exp() * jacobi::s_kappa(c, t).powi(n as i32);
    let pairs = ratio_pairs(&prep, &opts.pairs, m, t_x, density, tol.margin)?;

    let limit = |node: &DirectionNode| node.cut.min(t_x);
    let excess = max_of(prep.samples(limit).map(|(_, s, q)| jacobi::lambda_psi_excess(s, q, c, a)));
    let eq_sc = max_of(prep.samples(limit).map(|(_, s, q)| jacobi::eq_sc_residual(s, q, c)));
    let a_bad = a - (10.0 * (-excess).max(0.0) + 1e-3);
    let excess_bad = max_of(prep.samples(limit).map(|(_, s, q)| jacobi::lambda_psi_excess(s, q, c, a_bad)));
    let (mono_p, mono_i) = monotone_check(&prep, limit, f_weighted, |t| density(t), &tol);
    let checks = vec![
        riccati_check(&prep, limit, tol.residual),
        CheckResult::at_most("lambda_psi_excess", excess, tol.residual),
        CheckResult::at_most("eq_sc_residual", eq_sc, tol.residual),
        CheckResult::at_most("density_ratio_monotone", mono_p, 0.0),
        CheckResult::at_most("integral_ratio_monotone", mono_i, 0.0),
        CheckResult::detects("lambda_psi_negative_control", excess_bad, tol.residual),
    ];
    let rows = rows(&prep, limit, n as f64, 0.0, n as f64 * c, f_weighted);
    let mut notes = Vec::new();
    if t_x < b {
        notes.push(format!("radial range truncated to pi/(2 sqrt(c)) = {t_x}"));
    }
    let overstated = c_b.overstated(true) || a_b.overstated(false);
    let rep = report(
        "bishop_gromov_infinity",
        vec![c_b, a_b],
        json!({ "T": t_x, "cut_min": b, "negative_control_a": a_bad }),
        pairs,
        checks,
        prep.diagnostics(ctx),
        notes,
    )
    .finish(overstated);
    Ok(CheckOutput { report: rep, rows })
}

fn lookup_f(run: &DirectionRun, t: f64) -> Option<f64> {
    run.path
        .volume
        .iter()
        .find(|s| (s.t - t).abs() <= 1e-12 * t.max(1.0))
        .map(|s| (-s.psi).exp() * s.det)
}

fn candidate_eps(eps: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|k| eps / 2f64.powi(k as i32)).collect()
}

/// `ρ(B(r)) ≤ ρ(B(4ε)) + σ(Ũ₁) ∫_{4ε}^r e^{C₀t − ct²/2} dt` under `Ric_∞ ≥ c`.
pub fn ball_bound_check(ctx: &CheckContext, opts: &BallOptions) -> Result<CheckOutput> {
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps = {} must be positive", opts.eps)));
    }
    if opts.radii.is_empty() {
        return Err(Error::InvalidArgument("at least one radius is required".into()));
    }
    let tol = ctx.tolerances;
    let m = ctx.study.time_nodes;
    let n = ctx.model.n();
    let cands = candidate_eps(opts.eps, opts.max_halvings);
    let limits: Vec<RadialLimit> = opts.radii.iter().map(|&r| RadialLimit::Capped(r)).collect();
    let prep = prepare(ctx, &limits, |_| cands.iter().flat_map(|&e| [e, 2.0 * e]).collect())?;
    let scan = radial_bound_scan(ctx.model, &prep.runs, None);
    let c_b = BoundReport::resolve("c", scan.ric_inf_inf, opts.c, &scan);
    let c = c_b.value;

    // largest admissible ε: log(f(2ε) e^{2cε²}) < 0 on every node
    let mut chosen = None;
    for (k, &e) in cands.iter().enumerate() {
        let ok = prep.runs.iter().all(|run| {
            2.0 * e <= run.node.cut
                && lookup_f(run, 2.0 * e).is_some_and(|f| f > 0.0 && f.ln() + 2.0 * c * e * e < 0.0)
        });
        if ok {
            chosen = Some((k, e));
            break;
        }
    }
    let (halvings, eps) = chosen.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no admissible eps found after {} halvings of {}",
            opts.max_halvings, opts.eps
        ))
    })?;
    if let Some(&r) = opts.radii.iter().find(|&&r| r <= 4.0 * eps) {
        return Err(Error::InvalidArgument(format!("radius {r} must exceed 4 eps = {}", 4.0 * eps)));
    }
    let mut c0 = f64::NEG_INFINITY;
    for run in &prep.runs {
        let f = lookup_f(run, eps).ok_or_else(|| Error::InvalidArgument("missing f(eps) sample".into()))?;
        c0 = c0.max(-(f.ln() + 0.5 * c * eps * eps) / eps);
    }

    // ρ(B(4ε)) from short volume-only runs
    let inner = RadialLimit::Capped(4.0 * eps);
    let inner_times = |node: &DirectionNode| volume_times(node.cut, &[inner], m);
    let inner_runs = run_directions(ctx.model, ctx.sclv, &prep.quad, &ctx.study, inner, false, inner_times)?;
    let inner_half = run_directions(ctx.model, ctx.sclv, &prep.half_quad, &ctx.study, inner, false, inner_times)?;
    let vi = radial_volume(&inner_runs, inner, m)?;
    let vi_half = radial_volume(&inner_half, inner, m)?;
    let rho_inner = vi.value;
    let rho_inner_err = vi.error + (vi.value - vi_half.value).abs();

    let sigma = prep.quad.sigma();
    let mut pairs = Vec::new();
    let mut display = f64::NEG_INFINITY;
    for &r in &opts.radii {
        let lhs = prep.volume(RadialLimit::Capped(r), m)?;
        let growth = integrate(|t| (c0 * t - 0.5 * c * t * t).exp(), 4.0 * eps, r, 32, 24);
        let rhs = rho_inner + sigma * growth;
        let margin = rhs - lhs.value;
        pairs.push(PairResult {
            r,
            big_r: None,
            lhs: lhs.value,
            rhs,
            margin,
            tolerance: tol.margin,
            error_estimate: lhs.error + rho_inner_err,
            pass: margin >= -tol.margin,
        });
        if c == 0.0 {
            display = display.max(lhs.value - (rho_inner + sigma * (c0 * r).exp() / c0));
        }
    }
    let all = |node: &DirectionNode| node.cut * (1.0 + 1e-12);
    let concavity = max_of(prep.samples(all).map(|(_, s, q)| jacobi::log_concavity(s, q, c)));
    let c_bad = c + 10.0 * (-concavity).max(0.0) + 1e-3;
    let concavity_bad = max_of(prep.samples(all).map(|(_, s, q)| jacobi::log_concavity(s, q, c_bad)));
    let mut checks = vec![
        riccati_check(&prep, all, tol.residual),
        CheckResult::at_most("log_concavity", concavity, tol.residual),
        CheckResult::detects("log_concavity_negative_control", concavity_bad, tol.residual),
    ];
    if c == 0.0 {
        checks.push(CheckResult::at_most("display_bound", display, tol.margin));
    }
    let mut notes = Vec::new();
    if halvings > 0 {
        notes.push(format!("eps halved {halvings} times to {eps}"));
    }
    if c0 <= 0.0 {
        notes.push(format!("C0 = {c0} is not positive"));
    }
    let rows = rows(&prep, all, n as f64, 0.0, c, f_weighted);
    let overstated = c_b.overstated(true);
    let rep = report(
        "ball_growth",
        vec![c_b],
        json!({
            "eps_requested": opts.eps,
            "eps": eps,
            "halvings": halvings,
            "C0": c0,
            "rho_inner": rho_inner,
            "rho_inner_error": rho_inner_err,
            "sigma": sigma,
            "negative_control_c": c_bad,
        }),
        pairs,
        checks,
        prep.diagnostics(ctx),
        notes,
    )
    .finish(overstated);
    Ok(CheckOutput { report: rep, rows })
}
