//! Subcommand pipelines. Each produces a JSON document, CSV files and a
//! short text summary; nothing here writes to disk.

use serde::Serialize;
use serde_json::{json, Value};

use super::scenario::{Probe, Scenario};
use super::validate::{validate_model, ModelValidation};
use super::Command;
use crate::comparison::{
    self, ball_bound_check, bg_infinity_check, bishop_gromov_check, build_quadrature, coordinate_volume,
    gunther_check, radial_volume, run_directions, volume_times, CheckContext, CheckOutput, OracleResolution,
    RadialLimit, Verdict,
};
use crate::curvature::{self, EffectiveDim};
use crate::error::{Error, Result};
use crate::geodesics;
use crate::jacobi::{self, RadialOptions};
use crate::model::FinslerModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub resolution_scale: f64,
}

/// Everything a subcommand produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub document: Value,
    /// `(file name, contents)`.
    pub csv: Vec<(String, String)>,
    pub summary: Vec<String>,
    pub verdict: Verdict,
}

fn csv_text(header: &[String], rows: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv output: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|x| format!("{x:e}"))).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn check_csv(out: &CheckOutput) -> Result<String> {
    let mut buf = Vec::new();
    comparison::write_csv(&mut buf, &out.rows)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn dim_label(d: &EffectiveDim) -> String {
    match d {
        EffectiveDim::Finite(v) => format!("ric_n[{v}]"),
        EffectiveDim::Infinite(_) => "ric_n[inf]".into(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct ProbeSummary {
    params: Vec<f64>,
    direction: Vec<f64>,
    t_end: f64,
    samples: usize,
    conjugate_point: Option<f64>,
    gram_drift: f64,
    lagrangian_drift: f64,
    ode_tol: f64,
}

struct ProbeRun {
    summary: ProbeSummary,
    path: jacobi::JacobiTensorPath,
}

fn probe_direction(model: &FinslerModel, sc: &Scenario) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let params = sc.probe.params.clone().unwrap_or_else(|| vec![0.0; model.n()]);
    let (v, cut) = sc.sclv.direction(model, &params)?;
    let t_end = sc.probe.t_end.unwrap_or(cut);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("probe t_end = {t_end} must be positive")));
    }
    Ok((params, v, t_end))
}

fn probe_times(p: &Probe, t_end: f64) -> Vec<f64> {
    (1..p.samples).map(|k| t_end * k as f64 / (p.samples - 1) as f64).collect()
}

fn probe_run(model: &FinslerModel, sc: &Scenario) -> Result<ProbeRun> {
    let (params, v, t_end) = probe_direction(model, sc)?;
    let st = &sc.numerics.study;
    let opts = RadialOptions {
        ode: st.ode(),
        route: st.route,
        riemann: st.riemann,
        check_times: probe_times(&sc.probe, t_end),
        volume_times: Vec::new(),
    };
    let path = jacobi::radial_run(model, &sc.sclv.apex, &v, t_end, &opts)?;
    Ok(ProbeRun {
        summary: ProbeSummary {
            params,
            direction: v,
            t_end,
            samples: path.samples.len(),
            conjugate_point: path.conjugate.map(|c| c.t),
            gram_drift: path.gram_drift,
            lagrangian_drift: path.l_drift,
            ode_tol: st.ode_tol,
        },
        path,
    })
}

fn curvature_probe(model: &FinslerModel, sc: &Scenario) -> Result<(Value, String)> {
    let run = probe_run(model, sc)?;
    let n = model.n();
    let mut header: Vec<String> = ["t", "ric", "flag_sup", "psi", "dpsi", "ddpsi"].map(String::from).to_vec();
    header.extend(sc.probe.dims.iter().map(dim_label));
    let rows: Vec<Vec<f64>> = run
        .path
        .samples
        .iter()
        .map(|s| {
            let mut r = vec![s.t, s.ric, s.sup_flag(), s.weight.psi, s.weight.dpsi, s.weight.ddpsi];
            r.extend(sc.probe.dims.iter().map(|d| curvature::ricci_n(s.ric, &s.weight, n, *d)));
            r
        })
        .collect();
    Ok((json!({ "probe": run.summary, "dims": sc.probe.dims }), csv_text(&header, &rows)?))
}

fn geodesic_probe(model: &FinslerModel, sc: &Scenario) -> Result<(Value, String)> {
    let (params, v, t_end) = probe_direction(model, sc)?;
    let opts = sc.numerics.study.ode();
    let ts = probe_times(&sc.probe, t_end);
    let seg = geodesics::integrate_geodesic_with_stops(model, &sc.sclv.apex, &v, t_end, &ts, &opts)?;
    let d = model.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("v{i}")));
    header.push("lagrangian".into());
    let l0 = model.l(&sc.sclv.apex, &v)?;
    let mut rows = vec![{
        let mut r = vec![0.0];
        r.extend(&sc.sclv.apex);
        r.extend(&v);
        r.push(l0);
        r
    }];
    let mut drift: f64 = 0.0;
    for (t, x, u) in seg.stops() {
        let l = model.l(&x, &u)?;
        drift = drift.max((l - l0).abs());
        let mut r = vec![t];
        r.extend(&x);
        r.extend(&u);
        r.push(l);
        rows.push(r);
    }
    let doc = json!({
        "probe": {
            "params": params,
            "direction": v,
            "t_end": t_end,
            "samples": rows.len(),
            "lagrangian_drift": drift,
            "ode_tol": opts.tol,
            "steps": seg.stats().accepted,
        }
    });
    Ok((doc, csv_text(&header, &rows)?))
}

fn jacobi_probe(model: &FinslerModel, sc: &Scenario) -> Result<(Value, String)> {
    let run = probe_run(model, sc)?;
    let n = model.n();
    let big_n = sc
        .probe
        .dims
        .iter()
        .find_map(|d| match d {
            EffectiveDim::Finite(v) if *v > n as f64 => Some(*v),
            _ => None,
        })
        .unwrap_or(n as f64 + 1.0);
    let header: Vec<String> = ["t", "det_a", "lambda", "lambda_psi", "h", "f", "riccati"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::with_capacity(run.path.samples.len());
    for s in &run.path.samples {
        let q = s.riccati()?;
        rows.push(vec![
            s.t,
            s.det,
            q.lambda,
            q.lambda - s.weight.dpsi,
            jacobi::weighted_density(s.det, s.weight.psi, big_n).unwrap_or(f64::NAN),
            jacobi::gunther_f(s.det, sc.probe.c, s.t, n),
            q.riccati_residual,
        ]);
    }
    let doc = json!({ "probe": run.summary, "N": big_n, "c": sc.probe.c, "route": sc.numerics.study.route });
    Ok((doc, csv_text(&header, &rows)?))
}

#[derive(Debug, Clone, Serialize)]
struct OracleReport {
    polar: f64,
    polar_error: f64,
    coordinate: f64,
    relative_difference: f64,
    tolerance: f64,
    resolution: OracleResolution,
    verdict: Verdict,
}

fn volume_oracle(ctx: &CheckContext, res: &OracleResolution) -> Result<OracleReport> {
    let m = ctx.study.time_nodes;
    let quad = build_quadrature(ctx.model, ctx.sclv, ctx.resolution)?;
    let runs = run_directions(ctx.model, ctx.sclv, &quad, &ctx.study, RadialLimit::Full, false, |node| {
        volume_times(node.cut, &[RadialLimit::Full], m)
    })?;
    let polar = radial_volume(&runs, RadialLimit::Full, m)?;
    let coordinate = coordinate_volume(ctx.model, ctx.sclv, RadialLimit::Full, res, &ctx.study.ode())?;
    let rel = (polar.value - coordinate).abs() / coordinate.abs();
    let tolerance = ctx.tolerances.volume_rel;
    Ok(OracleReport {
        polar: polar.value,
        polar_error: polar.error,
        coordinate,
        relative_difference: rel,
        tolerance,
        resolution: *res,
        verdict: if rel <= tolerance { Verdict::Pass } else { Verdict::Fail },
    })
}

fn summary_line(name: &str, out: &CheckOutput) -> String {
    let r = &out.report;
    let margin = r.pairs.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let mut s = format!("{name}: {} (min margin {margin:.6e}", r.verdict);
    if !failed.is_empty() {
        s.push_str(&format!(", failed: {}", failed.join(", ")));
    }
    s.push(')');
    s
}

fn validation_line(v: &ModelValidation) -> String {
    format!(
        "validate-model: {} ({} samples, min signature margin {:.3e}, worst identity error {:.3e})",
        v.verdict,
        v.samples,
        v.min_signature_margin,
        v.metric_identity.max(
            [
                v.homogeneity.lagrangian,
                v.homogeneity.weight,
                v.homogeneity.fundamental_tensor,
                v.homogeneity.spray,
                v.homogeneity.nonlinear,
                v.homogeneity.ricci
            ]
            .into_iter()
            .fold(0.0, f64::max)
        )
    )
}

fn missing(section: &str) -> Error {
    Error::InvalidArgument(format!("scenario has no [checks.{section}] section"))
}

/// Run `cmd` on a parsed scenario.
pub fn execute(cmd: Command, sc: &Scenario, settings: &Settings) -> Result<Outcome> {
    if !(settings.resolution_scale > 0.0 && settings.resolution_scale.is_finite()) {
        return Err(Error::InvalidArgument("resolution scale must be positive".into()));
    }
    let model = sc.model.build()?;
    sc.sclv.validate(&model)?;
    let resolution = sc.numerics.quadrature.scaled(settings.resolution_scale);
    let ctx = CheckContext {
        model: &model,
        sclv: &sc.sclv,
        resolution,
        study: sc.numerics.study,
        tolerances: sc.tolerances,
    };
    let name = cmd.name();
    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(name));
    doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    doc.insert("resolution_scale".into(), json!(settings.resolution_scale));
    doc.insert("scenario".into(), serde_json::to_value(sc).expect("scenario serializes"));
    let mut csv = Vec::new();
    let mut summary = Vec::new();
    let mut verdict = Verdict::Pass;

    let probe = match cmd {
        Command::Curvature => Some(curvature_probe(&model, sc)?),
        Command::Geodesic => Some(geodesic_probe(&model, sc)?),
        Command::Jacobi => Some(jacobi_probe(&model, sc)?),
        _ => None,
    };
    if let Some((value, text)) = probe {
        doc.insert("result".into(), value);
        summary.push(text.clone());
        csv.push((format!("{name}.csv"), text));
    }

    if matches!(cmd, Command::ValidateModel | Command::All) {
        let v = validate_model(&model, &sc.sclv.apex, &sc.validate, settings.seed)?;
        summary.push(validation_line(&v));
        verdict = verdict.and(v.verdict);
        doc.insert("validation".into(), serde_json::to_value(&v).expect("validation serializes"));
    }

    let mut reports = Vec::new();
    let mut run_check = |label: &str, out: CheckOutput| -> Result<()> {
        summary.push(summary_line(label, &out));
        verdict = verdict.and(out.report.verdict);
        csv.push((format!("{label}.csv"), check_csv(&out)?));
        reports.push(out.report);
        Ok(())
    };
    let all = cmd == Command::All;
    if cmd == Command::Bg || all && sc.checks.bg.is_some() {
        let o = sc.checks.bg.as_ref().ok_or_else(|| missing("bg"))?;
        run_check("bg", bishop_gromov_check(&ctx, o)?)?;
    }
    if cmd == Command::Gunther || all && sc.checks.gunther.is_some() {
        let o = sc.checks.gunther.as_ref().ok_or_else(|| missing("gunther"))?;
        run_check("gunther", gunther_check(&ctx, o)?)?;
    }
    if cmd == Command::BgInf || all && sc.checks.bg_inf.is_some() {
        let o = sc.checks.bg_inf.as_ref().ok_or_else(|| missing("bg_inf"))?;
        run_check("bg-inf", bg_infinity_check(&ctx, o)?)?;
    }
    if cmd == Command::Ball || all && sc.checks.ball.is_some() {
        let o = sc.checks.ball.as_ref().ok_or_else(|| missing("ball"))?;
        run_check("ball", ball_bound_check(&ctx, o)?)?;
    }
    if !reports.is_empty() {
        doc.insert("reports".into(), serde_json::to_value(&reports).expect("reports serialize"));
    }
    if all {
        if let Some(res) = &sc.numerics.oracle {
            let o = volume_oracle(&ctx, res)?;
            summary.push(format!(
                "volume-oracle: {} (relative difference {:.3e})",
                o.verdict, o.relative_difference
            ));
            verdict = verdict.and(o.verdict);
            doc.insert("volume_oracle".into(), serde_json::to_value(&o).expect("oracle serializes"));
        }
    }
    doc.insert("verdict".into(), serde_json::to_value(verdict).expect("verdict serializes"));
    Ok(Outcome {
        document: Value::Object(doc),
        csv,
        summary,
        verdict,
    })
}
