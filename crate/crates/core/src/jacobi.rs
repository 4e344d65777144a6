//! Parallel frames, Jacobi tensor paths and the pointwise quantities of the
//! Riccati comparison argument.
//!
//! A radial run integrates, along one unit timelike geodesic, the geodesic,
//! a parallel `g_η̇`-orthonormal frame `E₁…E_n` of the normal space, and the
//! Jacobi tensor `A(t)` expressed in that frame, with `A(0) = 0`, `A′(0) = I`.
//! Two routes produce `A`: the variational equations (curvature free) and the
//! frame-expressed Jacobi equation `A″ + R A = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connection::{self, Level};
use crate::curvature::{self, RiemannMethod, WeightJet};
use crate::error::{Error, Result};
use crate::geodesics::{self, ConjugatePoint};
use crate::linalg;
use crate::model::FinslerModel;
use crate::ode::{self, OdeOptions, OdeSolution, OdeStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    #[default]
    Variational,
    Curvature,
}

/// `s_κ(t)`: solution of `f″ + κf = 0`, `f(0) = 0`, `f′(0) = 1`.
pub fn s_kappa(kappa: f64, t: f64) -> f64 {
    let x = kappa * t * t;
    if x.abs() < 1e-8 {
        t * (1.0 - x / 6.0 + x * x / 120.0)
    } else if kappa > 0.0 {
        let r = kappa.sqrt();
        (r * t).sin() / r
    } else {
        let r = (-kappa).sqrt();
        (r * t).sinh() / r
    }
}

/// `s′_κ(t)`.
pub fn s_kappa_prime(kappa: f64, t: f64) -> f64 {
    let x = kappa * t * t;
    if x.abs() < 1e-8 {
        1.0 - x / 2.0 + x * x / 24.0
    } else if kappa > 0.0 {
        (kappa.sqrt() * t).cos()
    } else {
        ((-kappa).sqrt() * t).cosh()
    }
}

/// Initial `g_v`-orthonormal frame `[v/F(v), e₁, …, e_n]`.
pub fn initial_frame(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let g = model.fundamental_tensor(x, v)?;
    linalg::lorentz_gram_schmidt(&g, v)
}

/// Vectors parallel transported along a geodesic (`V̇ = −N(η̇) V`).
#[derive(Debug, Clone)]
pub struct TransportedFields {
    d: usize,
    k: usize,
    solution: OdeSolution,
}

impl TransportedFields {
    /// `(η, η̇, [V₁…V_k])` at `t`.
    pub fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        let y = self.solution.eval(t);
        self.unpack(&y)
    }

    fn unpack(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        let d = self.d;
        let fields = (0..self.k)
            .map(|i| y[2 * d + i * d..2 * d + (i + 1) * d].to_vec())
            .collect();
        (y[..d].to_vec(), y[d..2 * d].to_vec(), fields)
    }

    pub fn stops(&self) -> Vec<(f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        self.solution
            .stops()
            .iter()
            .map(|(t, y)| {
                let (x, v, f) = self.unpack(y);
                (*t, x, v, f)
            })
            .collect()
    }
}

/// Parallel transport of `fields` along the geodesic from `(x, v)`; the
/// transport uses `Γ(η̇)(η̇, V) = N(η̇) V`.
pub fn parallel_transport(
    model: &FinslerModel,
    x: &[f64],
    v: &[f64],
    fields: &[Vec<f64>],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
) -> Result<TransportedFields> {
    let d = model.dim();
    let k = fields.len();
    geodesics::check_cone(model, 0.0, x, v)
        .map_err(|_| Error::InvalidArgument("initial velocity is not future-directed causal".into()))?;
    let mut y0: Vec<f64> = x.iter().chain(v).copied().collect();
    for f in fields {
        y0.extend_from_slice(f);
    }
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (xs, vs) = (&y[..d], &y[d..2 * d]);
        model.check_chart(xs)?;
        let geo = connection::evaluate(model, xs, vs, Level::Connection)?;
        let n = geo.nonlinear();
        dy[..d].copy_from_slice(vs);
        for a in 0..d {
            dy[d + a] = -2.0 * geo.spray[a];
        }
        for i in 0..k {
            let base = 2 * d + i * d;
            for a in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += n[(a, c)] * y[base + c];
                }
                dy[base + a] = -acc;
            }
        }
        Ok(())
    };
    let solution = ode::integrate(rhs, 0.0, &y0, t_end, stops, opts, |t, y| {
        geodesics::check_cone(model, t, &y[..d], &y[d..2 * d])
    })?;
    Ok(TransportedFields { d, k, solution })
}

/// Data at one curvature-annotated sample of a radial run.
#[derive(Debug, Clone)]
pub struct RadialSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `A(t)` in the frame (`n×n`).
    pub a: DMatrix<f64>,
    /// `A′(t)` (covariant derivative) in the frame.
    pub a_prime: DMatrix<f64>,
    pub det: f64,
    /// `R_frame[i][j] = g_η̇(R_η̇(E_j), E_i)`.
    pub r_frame: DMatrix<f64>,
    pub ric: f64,
    pub weight: WeightJet,
    /// `max |g(E_i, E_j) − δ_ij|, |g(E_i, η̇)|`.
    pub gram_error: f64,
}

impl RadialSample {
    /// Largest flag curvature over planes containing `η̇` (top eigenvalue of
    /// the symmetric part of `R_frame`, which is `K(η̇, w)` for unit normal `w`).
    pub fn sup_flag(&self) -> f64 {
        *linalg::sym_eigenvalues(&self.r_frame).last().expect("n >= 1")
    }

    pub fn riccati(&self) -> Result<RiccatiQuantities> {
        riccati_quantities(self)
    }
}

/// `(t, det A, ψ)` at a quadrature node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeSample {
    pub t: f64,
    pub det: f64,
    pub psi: f64,
}

#[derive(Debug, Clone)]
pub struct RadialOptions {
    pub ode: OdeOptions,
    pub route: Route,
    pub riemann: RiemannMethod,
    /// Times with full curvature annotation, read from the dense output.
    pub check_times: Vec<f64>,
    /// Times where only `det A` and `ψ` are needed; the integrator lands on
    /// each of them exactly.
    pub volume_times: Vec<f64>,
}

/// Output of a radial run.
#[derive(Debug, Clone)]
pub struct JacobiTensorPath {
    pub route: Route,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_end: f64,
    pub samples: Vec<RadialSample>,
    pub volume: Vec<VolumeSample>,
    /// First rank deficiency of `A` seen on the sample grid.
    pub conjugate: Option<ConjugatePoint>,
    pub gram_drift: f64,
    pub l_drift: f64,
    pub stats: OdeStats,
    pub frame0: Vec<Vec<f64>>,
    solution: OdeSolution,
    n: usize,
}

struct Layout {
    d: usize,
    n: usize,
}

impl Layout {
    fn frame(&self, i: usize) -> usize {
        2 * self.d + i * self.d
    }
    // variational: J_j and J̇_j as full vectors
    fn jac(&self, j: usize) -> usize {
        2 * self.d + self.n * self.d + j * self.d
    }
    fn jac_dot(&self, j: usize) -> usize {
        2 * self.d + 2 * self.n * self.d + j * self.d
    }
    // curvature route: A and A′ as n×n column-major
    fn amat(&self) -> usize {
        2 * self.d + self.n * self.d
    }
    fn amat_dot(&self) -> usize {
        2 * self.d + self.n * self.d + self.n * self.n
    }
    fn len(&self, route: Route) -> usize {
        match route {
            Route::Variational => 2 * self.d + 3 * self.n * self.d,
            Route::Curvature => 2 * self.d + self.n * self.d + 2 * self.n * self.n,
        }
    }
}

fn frame_matrix(g: &DMatrix<f64>, frame: &[&[f64]], vecs: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(frame.len(), vecs.len(), |i, j| linalg::bilinear(g, vecs[j], frame[i]))
}

fn r_in_frame(sample: &curvature::CurvatureSample, frame: &[&[f64]]) -> DMatrix<f64> {
    let n = frame.len();
    let rf: Vec<Vec<f64>> = frame.iter().map(|e| sample.apply(e)).collect();
    DMatrix::from_fn(n, n, |i, j| sample.geometry.metric(&rf[j], frame[i]))
}

fn radial_rhs<'a>(
    model: &'a FinslerModel,
    route: Route,
    riemann: RiemannMethod,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let d = model.dim();
    let lay = Layout { d, n: d - 1 };
    move |_, y, dy| {
        let (xs, vs) = (&y[..d], &y[d..2 * d]);
        model.check_chart(xs)?;
        let (geo, curv) = match route {
            Route::Variational => (connection::evaluate(model, xs, vs, Level::Connection)?, None),
            Route::Curvature => {
                let c = curvature::curvature_sample(model, xs, vs, riemann)?;
                (c.geometry.clone(), Some(c))
            }
        };
        let nl = geo.nonlinear();
        dy[..d].copy_from_slice(vs);
        for a in 0..d {
            dy[d + a] = -2.0 * geo.spray[a];
        }
        for i in 0..lay.n {
            let b = lay.frame(i);
            for a in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += nl[(a, c)] * y[b + c];
                }
                dy[b + a] = -acc;
            }
        }
        match route {
            Route::Variational => {
                let gx = geo.dspray_dx();
                for j in 0..lay.n {
                    let (bj, bjd) = (lay.jac(j), lay.jac_dot(j));
                    for a in 0..d {
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += gx[(a, c)] * y[bj + c] + nl[(a, c)] * y[bjd + c];
                        }
                        dy[bj + a] = y[bjd + a];
                        dy[bjd + a] = -2.0 * acc;
                    }
                }
            }
            Route::Curvature => {
                let curv = curv.expect("curvature route");
                let frame: Vec<&[f64]> = (0..lay.n).map(|i| &y[lay.frame(i)..lay.frame(i) + d]).collect();
                let rf = r_in_frame(&curv, &frame);
                let n = lay.n;
                let am = DMatrix::from_column_slice(n, n, &y[lay.amat()..lay.amat() + n * n]);
                let rhs = -(rf * am);
                dy[lay.amat()..lay.amat() + n * n].copy_from_slice(&y[lay.amat_dot()..lay.amat_dot() + n * n]);
                dy[lay.amat_dot()..lay.amat_dot() + n * n].copy_from_slice(rhs.as_slice());
            }
        }
        Ok(())
    }
}

fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(|x, y| x.total_cmp(y));
    all.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * x.abs().max(1.0));
    all
}

/// Extract `A`, `A′` from a state vector; `geo` is the geometry at `(η, η̇)`.
fn extract(
    lay: &Layout,
    route: Route,
    y: &[f64],
    g: &DMatrix<f64>,
    nl: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let d = lay.d;
    let n = lay.n;
    let frame: Vec<&[f64]> = (0..n).map(|i| &y[lay.frame(i)..lay.frame(i) + d]).collect();
    match route {
        Route::Variational => {
            let js: Vec<&[f64]> = (0..n).map(|j| &y[lay.jac(j)..lay.jac(j) + d]).collect();
            let a = frame_matrix(g, &frame, &js);
            let ad = nl.map(|nl| {
                let cov: Vec<Vec<f64>> = (0..n)
                    .map(|j| {
                        let jv = DVector::from_column_slice(js[j]);
                        let jd = DVector::from_column_slice(&y[lay.jac_dot(j)..lay.jac_dot(j) + d]);
                        (jd + nl * jv).iter().copied().collect()
                    })
                    .collect();
                let refs: Vec<&[f64]> = cov.iter().map(|c| c.as_slice()).collect();
                frame_matrix(g, &frame, &refs)
            });
            (a, ad)
        }
        Route::Curvature => {
            let a = DMatrix::from_column_slice(n, n, &y[lay.amat()..lay.amat() + n * n]);
            let ad = DMatrix::from_column_slice(n, n, &y[lay.amat_dot()..lay.amat_dot() + n * n]);
            (a, Some(ad))
        }
    }
}

fn gram_error(g: &DMatrix<f64>, v: &[f64], frame: &[&[f64]]) -> f64 {
    let mut err: f64 = 0.0;
    for (i, ei) in frame.iter().enumerate() {
        err = err.max(linalg::bilinear(g, ei, v).abs());
        for (j, ej) in frame.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            err = err.max((linalg::bilinear(g, ei, ej) - want).abs());
        }
    }
    err
}

/// Integrate the radial pipeline along the unit timelike geodesic from `(x, v)`.
pub fn radial_run(
    model: &FinslerModel,
    x: &[f64],
    v: &[f64],
    t_end: f64,
    opts: &RadialOptions,
) -> Result<JacobiTensorPath> {
    let d = model.dim();
    let n = model.n();
    let lay = Layout { d, n };
    let frame0 = initial_frame(model, x, v)?;
    let mut y0 = vec![0.0; lay.len(opts.route)];
    y0[..d].copy_from_slice(x);
    y0[d..2 * d].copy_from_slice(v);
    for i in 0..n {
        y0[lay.frame(i)..lay.frame(i) + d].copy_from_slice(&frame0[i + 1]);
    }
    match opts.route {
        Route::Variational => {
            for j in 0..n {
                y0[lay.jac_dot(j)..lay.jac_dot(j) + d].copy_from_slice(&frame0[j + 1]);
            }
        }
        Route::Curvature => {
            for j in 0..n {
                y0[lay.amat_dot() + j * n + j] = 1.0;
            }
        }
    }
    let l0 = model.lagrangian(x, v)?;
    let mut l_drift: f64 = 0.0;
    let stops = merge_times(&opts.volume_times, &[]);
    if stops.iter().chain(&opts.check_times).any(|t| *t <= 0.0 || *t > t_end) {
        return Err(Error::InvalidArgument("sample times must lie in (0, t_end]".into()));
    }
    let solution = ode::integrate(
        radial_rhs(model, opts.route, opts.riemann),
        0.0,
        &y0,
        t_end,
        &stops,
        &opts.ode,
        |t, y| {
            let (xs, vs) = (&y[..d], &y[d..2 * d]);
            geodesics::check_cone(model, t, xs, vs)?;
            l_drift = l_drift.max((model.lagrangian(xs, vs)? - l0).abs());
            Ok(())
        },
    )?;

    let mut samples = Vec::with_capacity(opts.check_times.len());
    let mut gram_drift: f64 = 0.0;
    for &t in &opts.check_times {
        let y = solution.eval(t);
        let (xs, vs) = (&y[..d], &y[d..2 * d]);
        let frame: Vec<&[f64]> = (0..n).map(|i| &y[lay.frame(i)..lay.frame(i) + d]).collect();
        let curv = curvature::curvature_sample(model, xs, vs, opts.riemann)?;
        let g = &curv.geometry.g;
        let (a, ad) = extract(&lay, opts.route, &y, g, Some(curv.geometry.nonlinear()));
        let gerr = gram_error(g, vs, &frame);
        gram_drift = gram_drift.max(gerr);
        let weight = curvature::weight_jet(model, &curv.geometry)?;
        let det = a.determinant();
        samples.push(RadialSample {
            t,
            x: xs.to_vec(),
            v: vs.to_vec(),
            det,
            a_prime: ad.expect("derivative available"),
            a,
            r_frame: r_in_frame(&curv, &frame),
            ric: curv.ricci,
            weight,
            gram_error: gerr,
        });
    }
    let mut volume = Vec::with_capacity(stops.len());
    for (t, y) in solution.stops() {
        let (xs, vs) = (&y[..d], &y[d..2 * d]);
        let g = model.fundamental_tensor(xs, vs)?;
        let (a, _) = extract(&lay, opts.route, y, &g, None);
        let psi = if model.is_weighted() { model.weight(xs, vs)? } else { 0.0 };
        volume.push(VolumeSample {
            t: *t,
            det: a.determinant(),
            psi,
        });
    }

    // conjugate points on the annotated grid (dense refinement)
    let conjugate = if samples.is_empty() {
        None
    } else {
        let grid: Vec<f64> = samples.iter().map(|s| s.t).collect();
        {
            let a_of_t = |t: f64| {
                let y = solution.eval(t);
                let g = model
                    .fundamental_tensor(&y[..d], &y[d..2 * d])
                    .unwrap_or_else(|_| DMatrix::identity(d, d));
                extract(&lay, opts.route, &y, &g, None).0
            };
            geodesics::conjugate_scan(a_of_t, &grid, 1e-8, 1e-12)
        }
    };

    Ok(JacobiTensorPath {
        route: opts.route,
        x0: x.to_vec(),
        v0: v.to_vec(),
        t_end,
        samples,
        volume,
        conjugate,
        gram_drift,
        l_drift,
        stats: solution.stats,
        frame0,
        solution,
        n,
    })
}

impl JacobiTensorPath {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `A(t)` accurate to the integration tolerance: the state is
    /// re-integrated from the last accepted step before `t`.
    pub fn jacobi_at(&self, model: &FinslerModel, riemann: RiemannMethod, t: f64, opts: &OdeOptions) -> Result<DMatrix<f64>> {
        let d = model.dim();
        let lay = Layout { d, n: self.n };
        let (t0, y0) = self
            .solution
            .mesh()
            .take_while(|(tm, _)| *tm <= t)
            .last()
            .map(|(tm, y)| (tm, y.to_vec()))
            .expect("mesh starts at 0");
        let y = if t - t0 <= 0.0 {
            y0
        } else {
            ode::integrate(radial_rhs(model, self.route, riemann), t0, &y0, t, &[], opts, |_, _| Ok(()))?
                .final_state()
                .to_vec()
        };
        let g = model.fundamental_tensor(&y[..d], &y[d..2 * d])?;
        Ok(extract(&lay, self.route, &y, &g, None).0)
    }

    /// Conjugate point search with exact re-integration at every probe.
    pub fn conjugate_scan_exact(
        &self,
        model: &FinslerModel,
        riemann: RiemannMethod,
        grid: &[f64],
        opts: &OdeOptions,
    ) -> Option<ConjugatePoint> {
        let a_of_t = |t: f64| {
            self.jacobi_at(model, riemann, t, opts)
                .unwrap_or_else(|_| DMatrix::from_element(self.n, self.n, f64::NAN))
        };
        geodesics::conjugate_scan(a_of_t, grid, 1e-10, 1e-12)
    }
}

/// Riccati-type quantities at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiQuantities {
    /// `tr C = λ = (log det A)′`.
    pub lambda: f64,
    /// `λ′ = −tr(C²) − tr R_frame`.
    pub lambda_prime: f64,
    /// `λ′ + λ²/n + Ric` (should be `≤ 0`).
    pub riccati_residual: f64,
    /// `‖C − Cᵀ‖_F`.
    pub asymmetry: f64,
}

pub fn riccati_quantities(s: &RadialSample) -> Result<RiccatiQuantities> {
    let n = s.a.nrows();
    let inv = s
        .a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularJacobi { t: s.t, det: s.det })?;
    let c = &s.a_prime * inv;
    let tr = c.trace();
    let cs = (&c + c.transpose()) * 0.5;
    let ca = (&c - c.transpose()) * 0.5;
    let traceless = &cs - DMatrix::identity(n, n) * (tr / n as f64);
    let tr_r = s.r_frame.trace();
    let lambda_prime = -(&c * &c).trace() - tr_r;
    let residual = -traceless.norm_squared() + ca.norm_squared() + (s.ric - tr_r);
    Ok(RiccatiQuantities {
        lambda: tr,
        lambda_prime,
        riccati_residual: residual,
        asymmetry: (2.0 * ca).norm(),
    })
}

/// `h = e^{−ψ/N} (det A)^{1/N}`.
pub fn weighted_density(det: f64, psi: f64, big_n: f64) -> Result<f64> {
    if det <= 0.0 {
        return Err(Error::InvalidArgument(format!("det A = {det} is not positive")));
    }
    Ok((-psi / big_n).exp() * det.powf(1.0 / big_n))
}

/// `N h″ + c h` at a sample, using `h″/h = (λ′ − ψ″)/N + λ_ψ²/N²`.
pub fn hric_residual(s: &RadialSample, rq: &RiccatiQuantities, c: f64, big_n: f64) -> Result<f64> {
    let h = weighted_density(s.det, s.weight.psi, big_n)?;
    Ok(h * hric_bracket(s, rq, c, big_n))
}

/// `(N h″ + c h)/h = λ′ − ψ″ + λ_ψ²/N + c`.
pub fn hric_bracket(s: &RadialSample, rq: &RiccatiQuantities, c: f64, big_n: f64) -> f64 {
    let lpsi = rq.lambda - s.weight.dpsi;
    rq.lambda_prime - s.weight.ddpsi + lpsi * lpsi / big_n + c
}

/// `λ_c = n s′_c/s_c`.
pub fn lambda_c(n: usize, c: f64, t: f64) -> f64 {
    n as f64 * s_kappa_prime(c, t) / s_kappa(c, t)
}

/// `[s_c²(λ − λ_c)]′ − s_c² ψ″`, expanded with `λ_c′ = −λ_c²/n − nc`.
pub fn eq_sc_residual(s: &RadialSample, rq: &RiccatiQuantities, c: f64) -> f64 {
    let n = s.a.nrows();
    let sc = s_kappa(c, s.t);
    let scp = s_kappa_prime(c, s.t);
    let lc = lambda_c(n, c, s.t);
    let lcp = -lc * lc / n as f64 - n as f64 * c;
    2.0 * sc * scp * (rq.lambda - lc) + sc * sc * (rq.lambda_prime - lcp) - sc * sc * s.weight.ddpsi
}

/// `λ_ψ − λ_c − a`.
pub fn lambda_psi_excess(s: &RadialSample, rq: &RiccatiQuantities, c: f64, a: f64) -> f64 {
    rq.lambda - s.weight.dpsi - lambda_c(s.a.nrows(), c, s.t) - a
}

/// `det A / s_{−c}(t)ⁿ`.
pub fn gunther_f(det: f64, c: f64, t: f64, n: usize) -> f64 {
    det / s_kappa(-c, t).powi(n as i32)
}

/// `(log[f e^{ct²/2}])″ = −ψ″ + c + λ′` with `f = e^{−ψ} det A`.
pub fn log_concavity(s: &RadialSample, rq: &RiccatiQuantities, c: f64) -> f64 {
    -s.weight.ddpsi + c + rq.lambda_prime
}

/// Verdict of a monotone-ratio check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneVerdict {
    pub pointwise: bool,
    pub integral: bool,
    /// Largest increase of the pointwise ratio beyond slack (≤ 0 when passing).
    pub worst_pointwise: f64,
    pub worst_integral: f64,
}

/// Check that `numer/denom` and `∫₀ᵗ numer / ∫₀ᵗ denom` are non-increasing on
/// the sample grid `ts` (cumulative trapezoid from `t = 0`, where both
/// functions are taken to vanish). Slack: `abs + rel·|value|`.
pub fn monotone_ratio_check(ts: &[f64], numer: &[f64], denom: &[f64], abs: f64, rel: f64) -> MonotoneVerdict {
    let ratio: Vec<f64> = numer.iter().zip(denom).map(|(a, b)| a / b).collect();
    let mut worst_p = f64::NEG_INFINITY;
    for w in ratio.windows(2) {
        worst_p = worst_p.max(w[1] - w[0] - (abs + rel * w[0].abs()));
    }
    let mut cum_n = 0.0;
    let mut cum_d = 0.0;
    let mut prev_t = 0.0;
    let mut prev_n = 0.0;
    let mut prev_d = 0.0;
    let mut iratio = Vec::with_capacity(ts.len());
    for i in 0..ts.len() {
        let dt = ts[i] - prev_t;
        cum_n += 0.5 * dt * (numer[i] + prev_n);
        cum_d += 0.5 * dt * (denom[i] + prev_d);
        iratio.push(cum_n / cum_d);
        prev_t = ts[i];
        prev_n = numer[i];
        prev_d = denom[i];
    }
    let mut worst_i = f64::NEG_INFINITY;
    for w in iratio.windows(2) {
        worst_i = worst_i.max(w[1] - w[0] - (abs + rel * w[0].abs()));
    }
    MonotoneVerdict {
        pointwise: worst_p <= 0.0,
        integral: worst_i <= 0.0,
        worst_pointwise: worst_p,
        worst_integral: worst_i,
    }
}

/// Geometric spacing from `1e-3·T` to `0.1·T`, then uniform to `T`.
pub fn check_grid(t_end: f64, count: usize) -> Vec<f64> {
    let count = count.max(4);
    let geo = (count / 5).max(2);
    let uni = count - geo;
    let lo = 1e-3 * t_end;
    let hi = 0.1 * t_end;
    let mut out: Vec<f64> = (0..geo)
        .map(|i| lo * (hi / lo).powf(i as f64 / geo as f64))
        .collect();
    out.extend((1..=uni).map(|i| hi + (t_end - hi) * i as f64 / uni as f64));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn s_kappa_branches() {
        assert_eq!(s_kappa(0.0, 2.0), 2.0);
        assert!((s_kappa(1.0, std::f64::consts::FRAC_PI_2) - 1.0).abs() < 1e-15);
        assert!((s_kappa(-1.0, 1.0) - 1.1752011936438014).abs() < 1e-14);
        // series branch agrees with closed form across the switch
        let t = 1e-3;
        let k: f64 = 5e-3;
        let r = k.sqrt();
        assert!((s_kappa(k, t) - (r * t).sin() / r).abs() < 1e-18);
        assert!((s_kappa_prime(-k, t) - (r * t).cosh()).abs() < 1e-15);
    }

    #[test]
    fn grid_is_increasing() {
        let g = check_grid(2.0, 400);
        assert_eq!(g.len(), 400);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!((g[0] - 2e-3).abs() < 1e-15);
        assert_eq!(*g.last().unwrap(), 2.0);
    }

    #[test]
    fn monotone_ratio_examples() {
        let ts: Vec<f64> = (1..=50).map(|i| i as f64 * 0.02).collect();
        let f: Vec<f64> = ts.iter().map(|t| t * t).collect();
        let v = monotone_ratio_check(&ts, &f, &f, 1e-8, 1e-6);
        assert!(v.pointwise && v.integral);
        let h: Vec<f64> = ts.iter().map(|t: &f64| t.powf(0.5)).collect();
        assert!(monotone_ratio_check(&ts, &h, &ts, 1e-8, 1e-6).pointwise);
        assert!(!monotone_ratio_check(&ts, &ts, &h, 1e-8, 1e-6).pointwise);
    }

    #[test]
    fn minkowski_radial_run() {
        let m = ModelSpec::minkowski(2).build().unwrap();
        let v = [1.25, 0.75, 0.0];
        let opts = RadialOptions {
            ode: OdeOptions::default(),
            route: Route::Variational,
            riemann: RiemannMethod::Jet,
            check_times: vec![0.25, 0.5, 1.0],
            volume_times: vec![0.3],
        };
        let run = radial_run(&m, &[0.0; 3], &v, 1.0, &opts).unwrap();
        for s in &run.samples {
            assert!((&s.a - DMatrix::identity(2, 2) * s.t).abs().max() < 1e-12);
            assert!((&s.a_prime - DMatrix::identity(2, 2)).abs().max() < 1e-12);
            let rq = s.riccati().unwrap();
            assert!((rq.lambda - 2.0 / s.t).abs() < 1e-10);
            assert!(rq.riccati_residual.abs() < 1e-10);
        }
        assert!((run.volume[0].det - 0.09).abs() < 1e-13);
        assert!(run.conjugate.is_none());
        assert!(run.gram_drift < 1e-12);
    }

    fn unit(m: &FinslerModel, x: &[f64], w: &[f64]) -> Vec<f64> {
        let f = m.lorentz_norm(x, w).unwrap();
        w.iter().map(|c| c / f).collect()
    }

    fn both_routes(m: &FinslerModel, x: &[f64], v: &[f64], t_end: f64) -> (JacobiTensorPath, JacobiTensorPath) {
        let mut opts = RadialOptions {
            ode: OdeOptions::default(),
            route: Route::Variational,
            riemann: RiemannMethod::Jet,
            check_times: check_grid(t_end, 40),
            volume_times: vec![],
        };
        let a = radial_run(m, x, v, t_end, &opts).unwrap();
        opts.route = Route::Curvature;
        let b = radial_run(m, x, v, t_end, &opts).unwrap();
        (a, b)
    }

    #[test]
    fn routes_agree_on_flrw_and_quartic() {
        let flrw = ModelSpec::flrw(2, crate::model::ScaleFactor::Exp { h: 0.1 }).build().unwrap();
        let quartic = ModelSpec::quartic(2, 0.05)
            .with_scale(crate::model::ScaleFactor::Cosh { rate: 0.3 })
            .build()
            .unwrap();
        let x = [0.1, 0.2, -0.1];
        for m in [&flrw, &quartic] {
            let v = unit(m, &x, &[1.0, 0.4, -0.3]);
            let (a, b) = both_routes(m, &x, &v, 1.0);
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                assert!((&sa.a - &sb.a).abs().max() < 1e-8, "t={}", sa.t);
                assert!((&sa.a_prime - &sb.a_prime).abs().max() < 1e-7);
            }
            assert!(a.gram_drift < 1e-8 && b.gram_drift < 1e-8);
            assert!(a.l_drift < 1e-9);
        }
    }

    #[test]
    fn riccati_inequality_and_jacobi_formula() {
        let m = ModelSpec::flrw(2, crate::model::ScaleFactor::Exp { h: 0.3 }).build().unwrap();
        let x = [0.0; 3];
        let v = unit(&m, &x, &[1.0, 0.5, 0.2]);
        let opts = RadialOptions {
            ode: OdeOptions::default(),
            route: Route::Variational,
            riemann: RiemannMethod::Jet,
            check_times: check_grid(1.5, 400),
            volume_times: vec![],
        };
        let run = radial_run(&m, &x, &v, 1.5, &opts).unwrap();
        for w in run.samples.windows(3).filter(|w| w[0].t >= 0.5) {
            let rq = w[1].riccati().unwrap();
            assert!(rq.riccati_residual <= 1e-8);
            // (log det A)' by central difference on the grid
            let (t0, t1, t2) = (w[0].t, w[1].t, w[2].t);
            let (l0, l1, l2) = (w[0].det.ln(), w[1].det.ln(), w[2].det.ln());
            let fd = l0 * (t1 - t2) / ((t0 - t1) * (t0 - t2))
                + l1 * (2.0 * t1 - t0 - t2) / ((t1 - t0) * (t1 - t2))
                + l2 * (t1 - t0) / ((t2 - t0) * (t2 - t1));
            assert!((fd - rq.lambda).abs() < 1e-3 * rq.lambda.abs().max(1.0));
        }
    }

    #[test]
    fn oscillator_conjugate_point() {
        let k0 = 4.0;
        let m = ModelSpec::static_oscillator(2, k0).build().unwrap();
        let v = [1.0, 0.0, 0.0];
        let t_star = std::f64::consts::PI / k0.sqrt();
        let opts = RadialOptions {
            ode: OdeOptions::default(),
            route: Route::Variational,
            riemann: RiemannMethod::Jet,
            check_times: check_grid(2.0, 80),
            volume_times: vec![],
        };
        let run = radial_run(&m, &[0.0; 3], &v, 2.0, &opts).unwrap();
        let cp = run.conjugate.expect("conjugate point");
        assert!((cp.t - t_star).abs() < 1e-4, "{}", cp.t);
        let grid: Vec<f64> = run.samples.iter().map(|s| s.t).collect();
        let exact = run.conjugate_scan_exact(&m, RiemannMethod::Jet, &grid, &OdeOptions::default()).unwrap();
        assert!((exact.t - t_star).abs() < 1e-6, "{}", exact.t);
    }

    #[test]
    fn transported_frame_stays_orthonormal() {
        let m = ModelSpec::quartic(3, 0.05)
            .with_scale(crate::model::ScaleFactor::Exp { h: 0.2 })
            .build()
            .unwrap();
        let x = [0.0, 0.1, 0.0, -0.2];
        let v = unit(&m, &x, &[1.0, 0.3, 0.2, -0.4]);
        let frame = initial_frame(&m, &x, &v).unwrap();
        let tr = parallel_transport(&m, &x, &v, &frame[1..], 1.0, &[0.5, 1.0], &OdeOptions::default()).unwrap();
        for (_, xs, vs, fs) in tr.stops() {
            let g = m.fundamental_tensor(&xs, &vs).unwrap();
            let mut all = vec![vs.clone()];
            all.extend(fs);
            let gram = DMatrix::from_fn(4, 4, |i, j| linalg::bilinear(&g, &all[i], &all[j]));
            assert!((gram.determinant() + 1.0).abs() < 1e-8);
            let mut want = DMatrix::identity(4, 4);
            want[(0, 0)] = -1.0;
            assert!((gram - want).abs().max() < 1e-8);
        }
    }
}
