//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any fails. Oracles (symbolic polynomial derivatives, finite
//! differences of `exp`, closed-form flat-space volumes) live here, not in
//! the library.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lorentz_finsler::comparison::{
    ball_bound_check, bg_infinity_check, bishop_gromov_check, build_quadrature, coordinate_volume, gunther_check,
    hric_sweep, radial_bound_scan, radial_volume, run_directions, volume_times, BallOptions, BgInfOptions, BgOptions,
    CheckContext, GuntherOptions, OracleResolution, QuadratureResolution, RadialLimit, SclvSpec, StudyOptions,
    Tolerances,
};
use lorentz_finsler::connection;
use lorentz_finsler::curvature::{self, EffectiveDim, RiemannMethod};
use lorentz_finsler::geodesics;
use lorentz_finsler::jacobi::{self, RadialOptions, Route};
use lorentz_finsler::linalg;
use lorentz_finsler::model::{FinslerModel, ModelSpec, ScaleFactor, WeightSpec};
use lorentz_finsler::ode::OdeOptions;
use lorentz_finsler::{Jet, Scalar};

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

// ---------------------------------------------------------------- 1: jets

struct Poly {
    dim: usize,
    terms: Vec<(f64, Vec<u8>)>,
}

fn random_poly(rng: &mut ChaCha8Rng) -> Poly {
    let dim = rng.gen_range(1..=6);
    let count = rng.gen_range(1..=12);
    let terms = (0..count)
        .map(|_| {
            let deg = rng.gen_range(0..=4usize);
            let mut e = vec![0u8; dim];
            for _ in 0..deg {
                e[rng.gen_range(0..dim)] += 1;
            }
            (rng.gen_range(-2.0..2.0), e)
        })
        .collect();
    Poly { dim, terms }
}

impl Poly {
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut acc = x[0].constant_like(0.0);
        for (c, e) in &self.terms {
            let mut m = x[0].constant_like(*c);
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m = m * x[i].clone();
                }
            }
            acc = acc + m;
        }
        acc
    }

    /// `∂^α p(x)` and the sum of the absolute term contributions.
    fn partial(&self, alpha: &[u8], x: &[f64]) -> (f64, f64) {
        let (mut val, mut scale) = (0.0, 0.0);
        for (c, e) in &self.terms {
            if e.iter().zip(alpha).any(|(b, a)| b < a) {
                continue;
            }
            let mut t = *c;
            for i in 0..self.dim {
                let (b, a) = (e[i] as i32, alpha[i] as i32);
                for j in 0..a {
                    t *= (b - j) as f64;
                }
                t *= x[i].powi(b - a);
            }
            val += t;
            scale += t.abs();
        }
        (val, scale)
    }
}

fn multi_indices(dim: usize, max: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; dim]];
    for _ in 0..max {
        let mut next = Vec::new();
        for m in &out {
            for i in 0..dim {
                let mut k = m.clone();
                k[i] += 1;
                next.push(k);
            }
        }
        out.extend(next);
        out.sort();
        out.dedup();
    }
    out
}

fn composite<S: Scalar>(x: &[S]) -> S {
    let a = (x[0].clone() * x[1].clone()).sin() + x[2].clone();
    let b = (x[1].clone() * 0.5 - x[0].clone()).exp() * x[2].cos();
    a.exp() + b * x[0].clone() + (x[2].clone() * x[1].clone()).sin().square()
}

fn richardson<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    (4.0 * f(0.5 * h) - f(h)) / 3.0
}

fn criterion_jets() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_poly: f64 = 0.0;
    for _ in 0..100 {
        let p = random_poly(&mut rng);
        let x: Vec<f64> = (0..p.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jet = p.eval(&Jet::lift(&x, 4));
        for alpha in multi_indices(p.dim, 4) {
            let (exact, scale) = p.partial(&alpha, &x);
            let got = jet.partial(&alpha).map_err(|e| e.to_string())?;
            worst_poly = worst_poly.max((got - exact).abs() / scale.max(f64::MIN_POSITIVE).max(exact.abs()));
        }
    }
    // composites: first and second partials against central differences
    let mut worst_fd: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jet = composite(&Jet::lift(&x, 3));
        let f = |y: &[f64]| composite(y);
        let shifted = |i: usize, s: f64, y: &[f64]| {
            let mut z = y.to_vec();
            z[i] += s;
            z
        };
        for i in 0..3 {
            let fd = richardson(|h| (f(&shifted(i, h, &x)) - f(&shifted(i, -h, &x))) / (2.0 * h), 1e-3);
            let exact = jet.partial_vars(&[i]).unwrap();
            worst_fd = worst_fd.max((fd - exact).abs() / exact.abs().max(1.0));
            for j in 0..3 {
                let fd = richardson(
                    |h| {
                        let d = |s: f64| {
                            let y = shifted(j, s, &x);
                            (f(&shifted(i, h, &y)) - f(&shifted(i, -h, &y))) / (2.0 * h)
                        };
                        (d(h) - d(-h)) / (2.0 * h)
                    },
                    2e-3,
                );
                let exact = jet.partial_vars(&[i, j]).unwrap();
                worst_fd = worst_fd.max((fd - exact).abs() / exact.abs().max(1.0));
                // third partials: differences of jet second partials
                for k in 0..3 {
                    let second = |y: &[f64]| composite(&Jet::lift(y, 2)).partial_vars(&[i, j]).unwrap();
                    let fd = richardson(|h| (second(&shifted(k, h, &x)) - second(&shifted(k, -h, &x))) / (2.0 * h), 1e-3);
                    let exact = jet.partial_vars(&[i, j, k]).unwrap();
                    worst_fd = worst_fd.max((fd - exact).abs() / exact.abs().max(1.0));
                }
            }
        }
    }
    let el = start.elapsed();
    ensure(
        worst_poly < 1e-12 && worst_fd < 1e-6 && within(el, 5.0),
        format!("polynomial rel err {worst_poly:.2e} (< 1e-12), composite vs FD {worst_fd:.2e} (< 1e-6), {el:.1?} (< 5 s)"),
    )
}

// ---------------------------------------------------------------- 2: metric layer

fn library_models() -> Vec<(&'static str, FinslerModel)> {
    let w = WeightSpec {
        k: 0.1,
        alpha: 0.2,
        beta: 0.3,
        gamma: -0.2,
    };
    let specs = vec![
        ("minkowski n=2", ModelSpec::minkowski(2)),
        ("minkowski n=3 weighted", ModelSpec::minkowski(3).with_weight(w)),
        ("flrw exp", ModelSpec::flrw(2, ScaleFactor::Exp { h: 0.1 })),
        ("flrw cosh weighted", ModelSpec::flrw(2, ScaleFactor::Cosh { rate: 1.0 }).with_weight(w)),
        ("flrw affine", ModelSpec::flrw(3, ScaleFactor::Affine { a0: 1.0, a1: 0.05 })),
        ("quartic", ModelSpec::quartic(2, 0.05)),
        ("quartic n=3 warped weighted", ModelSpec::quartic(3, 0.05).with_scale(ScaleFactor::Exp { h: 0.1 }).with_weight(w)),
        ("static oscillator weighted", ModelSpec::static_oscillator(2, 0.5).with_weight(w)),
    ];
    specs.into_iter().map(|(name, s)| (name, s.build().expect("library model"))).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn rel_slice(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs())) / scale
}

fn random_future(model: &FinslerModel, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let d = model.dim();
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v0 = rng.gen_range(0.5..2.0);
        let mut v = vec![v0];
        v.extend((1..d).map(|_| v0 * rng.gen_range(-0.5..0.5)));
        if model.is_future_timelike(&x, &v).unwrap() {
            return (x, v);
        }
    }
}

fn criterion_metric() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: [f64; 7] = [0.0; 7];
    let names = ["g_v(v,v)=L", "L deg 2", "psi deg 0", "g deg 0", "G deg 2", "N deg 1", "Ric deg 2"];
    for (_, m) in library_models() {
        for _ in 0..1000 {
            let (x, v) = random_future(&m, &mut rng);
            let lam: f64 = rng.gen_range(0.3..3.0);
            let w: Vec<f64> = v.iter().map(|c| c * lam).collect();
            let g = m.fundamental_tensor(&x, &v).unwrap();
            let l = m.l(&x, &v).unwrap();
            let spray_v = connection::spray(&m, &x, &v).unwrap();
            let spray_w = connection::spray(&m, &x, &w).unwrap();
            let nv = connection::nonlinear_connection(&m, &x, &v).unwrap() * lam;
            let nw = connection::nonlinear_connection(&m, &x, &w).unwrap();
            let errs = [
                rel(linalg::bilinear(&g, &v, &v), l),
                rel(m.l(&x, &w).unwrap(), lam * lam * l),
                rel(m.psi(&x, &w).unwrap(), m.psi(&x, &v).unwrap()),
                rel_slice(m.fundamental_tensor(&x, &w).unwrap().as_slice(), g.as_slice()),
                rel_slice(&spray_w, &spray_v.iter().map(|c| c * lam * lam).collect::<Vec<_>>()),
                rel_slice(nw.as_slice(), nv.as_slice()),
                rel(
                    curvature::ricci(&m, &x, &w, RiemannMethod::Jet).unwrap(),
                    lam * lam * curvature::ricci(&m, &x, &v, RiemannMethod::Jet).unwrap(),
                ),
            ];
            for (a, e) in worst.iter_mut().zip(errs) {
                *a = a.max(e);
            }
        }
    }
    let el = start.elapsed();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(max <= 1e-9 && within(el, 30.0), format!("{detail}; 8 models x 1000 samples, {el:.1?} (< 30 s)"))
}

// ---------------------------------------------------------------- 3-5: Jacobi sweeps

fn sweep_models() -> Vec<(&'static str, FinslerModel)> {
    vec![
        ("minkowski", ModelSpec::minkowski(2).build().unwrap()),
        ("flrw(exp, H=0.1)", ModelSpec::flrw(2, ScaleFactor::Exp { h: 0.1 }).build().unwrap()),
        ("quartic(0.05)", ModelSpec::quartic(2, 0.05).build().unwrap()),
    ]
}

fn random_directions(model: &FinslerModel, sclv: &SclvSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let params = vec![rng.gen_range(0.0..sclv.patch.radius), rng.gen_range(0.0..2.0 * PI)];
            sclv.direction(model, &params).unwrap().0
        })
        .collect()
}

fn radial(model: &FinslerModel, v: &[f64], times: Vec<f64>, route: Route) -> jacobi::JacobiTensorPath {
    let opts = RadialOptions {
        ode: OdeOptions::with_tol(1e-11),
        route,
        riemann: RiemannMethod::Jet,
        check_times: times,
        volume_times: Vec::new(),
    };
    jacobi::radial_run(model, &vec![0.0; model.dim()], v, 1.0, &opts).unwrap()
}

fn criterion_routes() -> Verdict {
    let start = Instant::now();
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let times: Vec<f64> = (1..=50).map(|k| k as f64 / 50.0).collect();
    let mut worst: f64 = 0.0;
    for (_, m) in sweep_models() {
        for v in random_directions(&m, &sclv, 20, 3) {
            let a = radial(&m, &v, times.clone(), Route::Variational);
            let b = radial(&m, &v, times.clone(), Route::Curvature);
            for (p, q) in a.samples.iter().zip(&b.samples) {
                worst = worst.max((&p.a - &q.a).amax());
            }
        }
    }
    let el = start.elapsed();
    ensure(
        worst < 1e-5 && within(el, 120.0),
        format!("max |A_var - A_curv| = {worst:.2e} (< 1e-5) over 3 models x 20 directions, {el:.1?} (< 2 min)"),
    )
}

/// A `g_v`-orthonormal basis of `v^⊥` by Gram–Schmidt on the spatial axes.
fn normal_frame(g: &DMatrix<f64>, v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let gvv = linalg::bilinear(g, v, v);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 1..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let k = linalg::bilinear(g, &e, v) / gvv;
        let mut w: Vec<f64> = e.iter().zip(v).map(|(a, b)| a - k * b).collect();
        for u in &out {
            let p = linalg::bilinear(g, &w, u);
            for (wc, uc) in w.iter_mut().zip(u) {
                *wc -= p * uc;
            }
        }
        let norm = linalg::bilinear(g, &w, &w).sqrt();
        out.push(w.into_iter().map(|c| c / norm).collect());
    }
    out
}

/// `det(d exp_x)_{tv}` measured with `g` at the image, from central
/// differences of `exp` along an orthonormal basis of `v^⊥`.
fn dexp_det(m: &FinslerModel, x: &[f64], v: &[f64], t: f64) -> f64 {
    let opts = OdeOptions::with_tol(1e-13);
    let g0 = m.fundamental_tensor(x, v).unwrap();
    let frame = normal_frame(&g0, v);
    let d = v.len();
    let exp_at = |s: f64, e: &[f64]| {
        let w: Vec<f64> = v.iter().zip(e).map(|(a, b)| t * a + s * b).collect();
        geodesics::exp_map(m, x, &w, &opts).unwrap()
    };
    let seg = geodesics::integrate_geodesic(m, x, v, t, &opts).unwrap();
    let (p, vel) = seg.state(t);
    let mut cols = vec![vel.clone()];
    for e in &frame {
        let central = |h: f64| -> Vec<f64> {
            let (a, b) = (exp_at(h, e), exp_at(-h, e));
            a.iter().zip(&b).map(|(u, w)| (u - w) / (2.0 * h)).collect()
        };
        let (c1, c2) = (central(1e-3), central(5e-4));
        cols.push(c2.iter().zip(&c1).map(|(f, c)| (4.0 * f - c) / 3.0).collect());
    }
    let mat = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
    let g = m.fundamental_tensor(&p, &vel).unwrap();
    (-g.determinant()).sqrt() * mat.determinant().abs()
}

fn criterion_dexp() -> Verdict {
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let times = vec![0.25, 0.5, 0.75, 1.0];
    let mut worst: f64 = 0.0;
    for (_, m) in sweep_models() {
        for v in random_directions(&m, &sclv, 20, 3) {
            let path = radial(&m, &v, times.clone(), Route::Variational);
            for s in &path.samples {
                let oracle = dexp_det(&m, &vec![0.0; 3], &v, s.t);
                worst = worst.max((s.det / s.t.powi(2) - oracle).abs());
            }
        }
    }
    ensure(
        worst < 1e-5,
        format!("max |t^-n det A - det d exp| = {worst:.2e} (< 1e-5) at t in {{0.25, 0.5, 0.75, 1}}"),
    )
}

fn criterion_riccati() -> Verdict {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut samples = 0;
    for (_, m) in library_models() {
        let n = m.n();
        let sclv = SclvSpec::centered(n, 0.4, 1.0);
        let quad = build_quadrature(
            &m,
            &sclv,
            QuadratureResolution {
                radial: 2,
                polar: 2,
                azimuthal: 3,
            },
        )
        .unwrap();
        for route in [Route::Variational, Route::Curvature] {
            for node in &quad.nodes {
                let path = radial(&m, &node.v, jacobi::check_grid(1.0, 200), route);
                for s in &path.samples {
                    worst = worst.max(s.riccati().unwrap().riccati_residual);
                    samples += 1;
                }
            }
        }
    }
    let mut flat: f64 = 0.0;
    for n in 1..=3 {
        let m = ModelSpec::minkowski(n).build().unwrap();
        let sclv = SclvSpec::centered(n, 0.5, 1.0);
        let params = match n {
            1 => vec![0.3],
            2 => vec![0.3, 1.0],
            _ => vec![0.3, 1.0, 2.0],
        };
        let v = sclv.direction(&m, &params).unwrap().0;
        for s in &radial(&m, &v, jacobi::check_grid(1.0, 200), Route::Variational).samples {
            let q = s.riccati().unwrap();
            flat = flat.max((q.lambda * s.t / n as f64 - 1.0).abs()).max(q.riccati_residual.abs());
        }
    }
    ensure(
        worst <= 1e-6 && flat <= 1e-10,
        format!("max residual {worst:.2e} (<= 1e-6) over {samples} samples; Minkowski |tr C t/n - 1|, |residual| {flat:.2e} (<= 1e-10)"),
    )
}

// ---------------------------------------------------------------- 6: hric

fn criterion_hric() -> Verdict {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut controls_ok = true;
    let mut worst_control = f64::INFINITY;
    let study = StudyOptions {
        check_points: 150,
        ..Default::default()
    };
    let res = QuadratureResolution {
        radial: 3,
        polar: 2,
        azimuthal: 5,
    };
    for (_, m) in library_models() {
        let n = m.n() as f64;
        let sclv = SclvSpec::centered(m.n(), 0.4, 1.0);
        let quad = build_quadrature(&m, &sclv, res).unwrap();
        let runs = run_directions(&m, &sclv, &quad, &study, RadialLimit::Full, true, |_| Vec::new()).unwrap();
        let all = |node: &lorentz_finsler::comparison::DirectionNode| node.cut * (1.0 + 1e-12);
        for big_n in [n + 0.5, n + 2.0, 1e8, -1.0] {
            let c = radial_bound_scan(&m, &runs, Some(EffectiveDim::Finite(big_n))).ric_n_inf.unwrap();
            let (res_max, slack) = hric_sweep(&runs, big_n, c, all).unwrap();
            worst = worst.max(res_max);
            let (bad, _) = hric_sweep(&runs, big_n, c + 2.0 * slack + 1e-3, all).unwrap();
            controls_ok &= bad > 0.0;
            worst_control = worst_control.min(bad);
        }
    }
    ensure(
        worst <= 1e-6 && controls_ok,
        format!("max N h'' + c h = {worst:.2e} (<= 1e-6), N in {{n+0.5, n+2, 1e8, -1}} on 8 models; inflated c gives min residual {worst_control:.2e} (> 0)"),
    )
}

// ---------------------------------------------------------------- 7-10: theorems

fn flat_ctx<'a>(model: &'a FinslerModel, sclv: &'a SclvSpec) -> CheckContext<'a> {
    CheckContext {
        model,
        sclv,
        resolution: QuadratureResolution::default(),
        study: StudyOptions::default(),
        tolerances: Tolerances::default(),
    }
}

fn criterion_bg() -> Verdict {
    let start = Instant::now();
    let m = ModelSpec::minkowski(2).build().unwrap();
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let ctx = flat_ctx(&m, &sclv);
    let rs = [0.1, 0.2, 0.3, 0.4, 0.5];
    let big_rs = [0.6, 0.7, 0.8, 0.9, 1.0];
    let pairs: Vec<(f64, f64)> = rs.iter().flat_map(|&r| big_rs.iter().map(move |&b| (r, b))).collect();
    let out = bishop_gromov_check(
        &ctx,
        &BgOptions {
            big_n: 4.0,
            pairs,
            c: Some(0.0),
        },
    )
    .map_err(|e| e.to_string())?;
    let mut lhs_err: f64 = 0.0;
    let mut rhs_err: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for p in &out.report.pairs {
        let q = p.r / p.big_r.unwrap();
        lhs_err = lhs_err.max((p.lhs - q.powi(3)).abs());
        rhs_err = rhs_err.max((p.rhs - q.powi(5)).abs());
        min_margin = min_margin.min(p.margin);
    }
    let tight = bishop_gromov_check(
        &ctx,
        &BgOptions {
            big_n: 2.0 + 1e-3,
            pairs: vec![(0.5, 1.0)],
            c: Some(0.0),
        },
    )
    .map_err(|e| e.to_string())?;
    let tight_margin = tight.report.pairs[0].margin;
    let el = start.elapsed();
    ensure(
        lhs_err <= 1e-7
            && rhs_err <= 1e-7
            && min_margin > 0.0
            && out.report.verdict.is_ok()
            && tight_margin < 2e-3
            && within(el, 60.0),
        format!(
            "|LHS - (r/R)^3| {lhs_err:.1e}, |RHS - (r/R)^5| {rhs_err:.1e}, min margin {min_margin:.3e} on 5x5 grid, verdict {}; N = n + 1e-3 margin {tight_margin:.2e} (< 2e-3); {el:.1?} (< 1 min)",
            out.report.verdict
        ),
    )
}

fn criterion_gunther() -> Verdict {
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let opts = GuntherOptions {
        c: Some(0.0),
        k: Some(0.3),
    };
    let eq = ModelSpec::minkowski(2)
        .with_weight(WeightSpec {
            k: 0.3,
            ..Default::default()
        })
        .build()
        .unwrap();
    let out = gunther_check(&flat_ctx(&eq, &sclv), &opts).map_err(|e| e.to_string())?;
    let gap = (out.report.pairs[0].lhs - out.report.pairs[0].rhs).abs();
    let ineq = ModelSpec::minkowski(2)
        .with_weight(WeightSpec {
            k: 0.3,
            gamma: -0.5,
            ..Default::default()
        })
        .build()
        .unwrap();
    let out2 = gunther_check(&flat_ctx(&ineq, &sclv), &opts).map_err(|e| e.to_string())?;
    let margin = out2.report.pairs[0].margin;
    let mut per_dir: std::collections::BTreeMap<usize, f64> = Default::default();
    for r in out.rows.iter().chain(&out2.rows) {
        let e = per_dir.entry(r.direction).or_insert(f64::INFINITY);
        *e = e.min(r.f);
    }
    let min_f = per_dir.values().cloned().fold(f64::INFINITY, f64::min);
    ensure(
        gap < 1e-7 && margin > 0.0 && min_f >= 1.0 - 1e-6 && out.report.verdict.is_ok() && out2.report.verdict.is_ok(),
        format!("equality |LHS - RHS| {gap:.2e} (< 1e-7); psi <= k margin {margin:.3e} (> 0); per-direction min f {min_f:.9} (>= 1 - 1e-6)"),
    )
}

fn criterion_bg_inf() -> Verdict {
    let m = ModelSpec::minkowski(2)
        .with_weight(WeightSpec {
            alpha: 0.5,
            ..Default::default()
        })
        .build()
        .unwrap();
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let pairs: Vec<(f64, f64)> = [0.2, 0.4, 0.6]
        .iter()
        .flat_map(|&r| [0.7, 0.85, 1.0].map(move |b| (r, b)))
        .collect();
    let out = bg_infinity_check(
        &flat_ctx(&m, &sclv),
        &BgInfOptions {
            pairs,
            a: Some(0.0),
            c: Some(0.0),
        },
    )
    .map_err(|e| e.to_string())?;
    let min_margin = out.report.pairs.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    let excess = out
        .report
        .checks
        .iter()
        .find(|c| c.name == "lambda_psi_excess")
        .map(|c| c.value)
        .ok_or("no lambda_psi_excess check")?;
    ensure(
        min_margin >= -1e-7 && excess <= 1e-6 && out.report.verdict.is_ok(),
        format!("min margin {min_margin:.3e} (>= -1e-7) on 3x3 grid; max lambda_psi - lambda_c - a {excess:.2e} (<= 1e-6); verdict {}", out.report.verdict),
    )
}

fn criterion_ball() -> Verdict {
    let m = ModelSpec::minkowski(2).build().unwrap();
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let out = ball_bound_check(
        &flat_ctx(&m, &sclv),
        &BallOptions {
            eps: 0.05,
            radii: vec![0.3, 0.6, 0.9],
            c: Some(0.0),
            max_halvings: 20,
        },
    )
    .map_err(|e| e.to_string())?;
    let check = |name: &str| out.report.checks.iter().find(|c| c.name == name).cloned();
    let conc = check("log_concavity").ok_or("no concavity check")?;
    let display = check("display_bound").ok_or("no display bound check")?;
    let bound_ok = out.report.pairs.len() == 3 && out.report.pairs.iter().all(|p| p.pass);
    ensure(
        bound_ok && conc.value <= 1e-6 && display.pass && out.report.verdict.is_ok(),
        format!(
            "bound holds at r = 0.3, 0.6, 0.9: {bound_ok}; concavity residual {:.2e} (<= 1e-6); display bound excess {:.3e} (<= 0)",
            conc.value, display.value
        ),
    )
}

// ---------------------------------------------------------------- 11: volume oracle

fn criterion_volume_oracle() -> Verdict {
    let w = |k: f64, alpha: f64, gamma: f64| WeightSpec {
        k,
        alpha,
        gamma,
        ..Default::default()
    };
    let cases: Vec<(&str, ModelSpec, Vec<RadialLimit>)> = vec![
        ("bg", ModelSpec::minkowski(2), vec![RadialLimit::Full, RadialLimit::Scaled(0.5)]),
        ("gunther eq", ModelSpec::minkowski(2).with_weight(w(0.3, 0.0, 0.0)), vec![RadialLimit::Full]),
        ("gunther ineq", ModelSpec::minkowski(2).with_weight(w(0.3, 0.0, -0.5)), vec![RadialLimit::Full]),
        (
            "bg-inf",
            ModelSpec::minkowski(2).with_weight(w(0.0, 0.5, 0.0)),
            vec![RadialLimit::Full, RadialLimit::Scaled(0.4)],
        ),
        (
            "ball",
            ModelSpec::minkowski(2),
            vec![RadialLimit::Capped(0.2), RadialLimit::Capped(0.3), RadialLimit::Capped(0.9)],
        ),
    ];
    let sclv = SclvSpec::centered(2, 0.5, 1.0);
    let study = StudyOptions::default();
    let m_nodes = study.time_nodes;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, spec, limits) in cases {
        let m = spec.build().unwrap();
        let quad = build_quadrature(&m, &sclv, QuadratureResolution::default()).unwrap();
        let runs = run_directions(&m, &sclv, &quad, &study, RadialLimit::Full, false, |node| {
            volume_times(node.cut, &limits, m_nodes)
        })
        .map_err(|e| e.to_string())?;
        for limit in limits.iter().copied() {
            let polar = radial_volume(&runs, limit, m_nodes).map_err(|e| e.to_string())?.value;
            let coord = coordinate_volume(&m, &sclv, limit, &OracleResolution::default(), &OdeOptions::with_tol(1e-11))
                .map_err(|e| e.to_string())?;
            worst = worst.max((polar - coord).abs() / coord);
            count += 1;
        }
    }
    ensure(
        worst <= 1e-4,
        format!("max relative polar/coordinate difference {worst:.2e} (<= 1e-4) over {count} volumes"),
    )
}

// ---------------------------------------------------------------- 12: determinism

const DETERMINISM_SCENARIO: &str = r#"
[model]
name = "quartic_finsler"
n = 2
eps = 0.05
scale = { kind = "exp", h = 0.1 }
weight = { beta = 0.1, alpha = 0.05 }

[sclv]
apex = [0.0, 0.0, 0.0]
patch = { radius = 0.4 }
cut = { kind = "constant", b = 1.0 }

[checks.bg]
N = 4.0
pairs = [[0.5, 1.0]]

[checks.gunther]

[checks.bg_inf]
pairs = [[0.5, 1.0]]

[checks.ball]
eps = 0.05
radii = [0.3]

[numerics.study]
check_points = 60
time_nodes = 8

[numerics.quadrature]
radial = 3
polar = 2
azimuthal = 5

[validate]
samples = 100
"#;

fn criterion_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = dir.path().join("scenario.toml");
    std::fs::write(&scenario, DETERMINISM_SCENARIO).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, 3] {
        let out = dir.path().join(format!("out{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_lfvc"))
            .arg("all")
            .arg("--scenario")
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .arg("--threads")
            .arg(threads.to_string())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!(
                "lfvc all --threads {threads} exited with {}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    let bytes: usize = outputs[0].iter().map(|(_, b)| b.len()).sum();
    ensure(
        outputs[0] == outputs[1] && names.contains(&"all.json"),
        format!("--threads 1 vs 3: {} files ({bytes} bytes) byte-identical: {}", names.len(), outputs[0] == outputs[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("jet correctness", criterion_jets),
        ("metric layer identities", criterion_metric),
        ("two-route Jacobi agreement", criterion_routes),
        ("det A against finite-difference d exp", criterion_dexp),
        ("Riccati inequality", criterion_riccati),
        ("weighted density inequality", criterion_hric),
        ("Bishop-Gromov, flat space", criterion_bg),
        ("Gunther equality and inequality", criterion_gunther),
        ("Bishop-Gromov N = inf, weighted", criterion_bg_inf),
        ("ball growth bound", criterion_ball),
        ("polar vs coordinate volume", criterion_volume_oracle),
        ("determinism across thread counts", criterion_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} [{tag}] {name}: {detail} [{:.1?}]", k + 1, start.elapsed());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
