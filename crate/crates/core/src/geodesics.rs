//! Geodesic integration, the exponential map, the variational (tangent) flow
//! and conjugate point detection.

use nalgebra::DMatrix;

use crate::connection::{self, Level};
use crate::error::{Error, Result};
use crate::model::{FinslerModel, LIGHTLIKE_BAND};
use crate::ode::{self, OdeOptions, OdeSolution, OdeStats};

/// Abort unless `v` is future-directed causal (within the lightlike band).
pub(crate) fn check_cone(model: &FinslerModel, t: f64, x: &[f64], v: &[f64]) -> Result<()> {
    if !model.in_chart(x) {
        return Err(Error::OutsideChart { point: x.to_vec() });
    }
    let norm2: f64 = v.iter().map(|c| c * c).sum();
    let l = model.lagrangian(x, v)?;
    if v[0] <= 0.0 || l > LIGHTLIKE_BAND * norm2 {
        return Err(Error::ConeExit { t });
    }
    Ok(())
}

fn check_initial(model: &FinslerModel, x: &[f64], v: &[f64], t_end: f64) -> Result<()> {
    let d = model.dim();
    if x.len() != d || v.len() != d {
        return Err(Error::InvalidArgument(format!("expected vectors of length {d}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("span T = {t_end} must be positive")));
    }
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    check_cone(model, 0.0, x, v).map_err(|e| match e {
        Error::ConeExit { .. } => Error::InvalidArgument("initial velocity is not future-directed causal".into()),
        other => other,
    })
}

/// A solution of `η̈ + 2G(η̇) = 0` on `[0, T]` with dense output.
#[derive(Debug, Clone)]
pub struct GeodesicSegment {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_end: f64,
    /// `L(v₀)`.
    pub l0: f64,
    /// `max |L(η̇) − L(v₀)|` over accepted steps.
    pub drift: f64,
    solution: OdeSolution,
}

impl GeodesicSegment {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `(η(t), η̇(t))` by dense interpolation.
    pub fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let y = self.solution.eval(t);
        let d = self.dim();
        (y[..d].to_vec(), y[d..].to_vec())
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        self.state(t).0
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.state(t).1
    }

    /// States at the stop times requested when integrating.
    pub fn stops(&self) -> impl Iterator<Item = (f64, Vec<f64>, Vec<f64>)> + '_ {
        let d = self.dim();
        self.solution
            .stops()
            .iter()
            .map(move |(t, y)| (*t, y[..d].to_vec(), y[d..].to_vec()))
    }

    pub fn end_point(&self) -> Vec<f64> {
        self.solution.final_state()[..self.dim()].to_vec()
    }

    pub fn stats(&self) -> OdeStats {
        self.solution.stats
    }
}

fn geodesic_rhs<'a>(model: &'a FinslerModel) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let d = model.dim();
    move |_, y, dy| {
        let (x, v) = y.split_at(d);
        model.check_chart(x)?;
        let g = connection::evaluate(model, x, v, Level::Spray)?;
        dy[..d].copy_from_slice(v);
        for a in 0..d {
            dy[d + a] = -2.0 * g.spray[a];
        }
        Ok(())
    }
}

/// Integrate the geodesic with `η(0) = x`, `η̇(0) = v` over `[0, t_end]`,
/// landing exactly on each of `stops`.
pub fn integrate_geodesic_with_stops(
    model: &FinslerModel,
    x: &[f64],
    v: &[f64],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
) -> Result<GeodesicSegment> {
    check_initial(model, x, v, t_end)?;
    let d = model.dim();
    let l0 = model.lagrangian(x, v)?;
    let y0: Vec<f64> = x.iter().chain(v).copied().collect();
    let mut drift: f64 = 0.0;
    let solution = ode::integrate(geodesic_rhs(model), 0.0, &y0, t_end, stops, opts, |t, y| {
        let (xs, vs) = y.split_at(d);
        check_cone(model, t, xs, vs)?;
        drift = drift.max((model.lagrangian(xs, vs)? - l0).abs());
        Ok(())
    })?;
    Ok(GeodesicSegment {
        x0: x.to_vec(),
        v0: v.to_vec(),
        t_end,
        l0,
        drift,
        solution,
    })
}

pub fn integrate_geodesic(
    model: &FinslerModel,
    x: &[f64],
    v: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<GeodesicSegment> {
    integrate_geodesic_with_stops(model, x, v, t_end, &[], opts)
}

/// `exp_x(v) = η_v(1)`.
pub fn exp_map(model: &FinslerModel, x: &[f64], v: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    if v.iter().all(|c| *c == 0.0) {
        model.check_chart(x)?;
        return Ok(x.to_vec());
    }
    Ok(integrate_geodesic(model, x, v, 1.0, opts)?.end_point())
}

/// Solution of the variational equations along a geodesic.
///
/// Columns `J_β(t)` solve `J̈ + 2 ∂G/∂x J + 2 ∂G/∂v J̇ = 0` with `J(0) = 0`,
/// `J̇(0) = e_β`; they are the Jacobi fields spanning `t·(d exp_x)_{tv}`.
#[derive(Debug, Clone)]
pub struct TangentFlow {
    d: usize,
    solution: OdeSolution,
}

impl TangentFlow {
    fn unpack(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
        let d = self.d;
        let j = DMatrix::from_fn(d, d, |a, b| y[2 * d + b * 2 * d + a]);
        let jd = DMatrix::from_fn(d, d, |a, b| y[2 * d + b * 2 * d + d + a]);
        (y[..d].to_vec(), y[d..2 * d].to_vec(), j, jd)
    }

    /// `(η, η̇, J, J̇)` at `t` by dense interpolation; `J` has columns `J_β`.
    pub fn state(&self, t: f64) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
        self.unpack(&self.solution.eval(t))
    }

    pub fn jacobi_matrix(&self, t: f64) -> DMatrix<f64> {
        self.state(t).2
    }

    /// States at the requested stop times.
    pub fn stops(&self) -> Vec<(f64, DMatrix<f64>)> {
        self.solution
            .stops()
            .iter()
            .map(|(t, y)| (*t, self.unpack(y).2))
            .collect()
    }

    pub fn stats(&self) -> OdeStats {
        self.solution.stats
    }
}

/// Integrate the geodesic together with the full `(1+n)×(1+n)` variational flow.
pub fn tangent_flow(
    model: &FinslerModel,
    x: &[f64],
    v: &[f64],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
) -> Result<TangentFlow> {
    check_initial(model, x, v, t_end)?;
    let d = model.dim();
    let mut y0 = vec![0.0; 2 * d + 2 * d * d];
    y0[..d].copy_from_slice(x);
    y0[d..2 * d].copy_from_slice(v);
    for b in 0..d {
        y0[2 * d + b * 2 * d + d + b] = 1.0;
    }
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (xs, rest) = y.split_at(d);
        let vs = &rest[..d];
        model.check_chart(xs)?;
        let geo = connection::evaluate(model, xs, vs, Level::Connection)?;
        dy[..d].copy_from_slice(vs);
        for a in 0..d {
            dy[d + a] = -2.0 * geo.spray[a];
        }
        let gx = geo.dspray_dx();
        let gv = geo.nonlinear();
        for b in 0..d {
            let base = 2 * d + b * 2 * d;
            for a in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += gx[(a, c)] * y[base + c] + gv[(a, c)] * y[base + d + c];
                }
                dy[base + a] = y[base + d + a];
                dy[base + d + a] = -2.0 * acc;
            }
        }
        Ok(())
    };
    let solution = ode::integrate(rhs, 0.0, &y0, t_end, stops, opts, |t, y| {
        check_cone(model, t, &y[..d], &y[d..2 * d])
    })?;
    Ok(TangentFlow { d, solution })
}

/// Result of scanning a Jacobi matrix path for rank deficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePoint {
    pub t: f64,
    /// `σ_min(A(t))` relative to the largest `σ_max` seen on the scan grid.
    pub rank_ratio: f64,
}

fn sigma_min(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().min()
}

fn min_sym_eig(a: &DMatrix<f64>) -> f64 {
    crate::linalg::sym_eigenvalues(a)[0]
}

/// First `t` in the grid range where `A(t)` loses rank, refined to `t_tol`.
///
/// Detection uses sign changes of `det A` and of the smallest eigenvalue of
/// the symmetric part of `A` (which catches even-multiplicity zeros), plus
/// dips of `σ_min` below `rank_tol` relative to the running scale of `A`.
/// `a_of_t` must be accurate at arbitrary `t`.
pub fn conjugate_scan<F>(a_of_t: F, grid: &[f64], t_tol: f64, rank_tol: f64) -> Option<ConjugatePoint>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let mut scale: f64 = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut sig: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    let refine = |lo: f64, hi: f64, scale: f64| {
        let ts = golden_min(|s| sigma_min(&a_of_t(s)), lo, hi, t_tol);
        (ts, sigma_min(&a_of_t(ts)) / scale)
    };
    for &t in grid {
        let a = a_of_t(t);
        let det = a.determinant();
        let eig = min_sym_eig(&a);
        let sv = a.clone().singular_values();
        scale = scale.max(sv.max());
        if scale == 0.0 {
            continue;
        }
        let smin = sv.min();
        if smin / scale < rank_tol {
            return Some(ConjugatePoint { t, rank_ratio: smin / scale });
        }
        if let Some((tp, detp, eigp)) = prev {
            if detp > 0.0 && det <= 0.0 {
                let ts = bisect(|s| a_of_t(s).determinant(), tp, t, t_tol);
                return Some(ConjugatePoint {
                    t: ts,
                    rank_ratio: sigma_min(&a_of_t(ts)) / scale,
                });
            }
            if eigp > 0.0 && eig <= 0.0 {
                let (ts, r) = refine(tp, t, scale);
                return Some(ConjugatePoint { t: ts, rank_ratio: r });
            }
        }
        sig.push((t, smin / scale));
        let k = sig.len();
        if k >= 3 {
            let (t0, r0) = sig[k - 3];
            let (_, r1) = sig[k - 2];
            let (_, r2) = sig[k - 1];
            if r1 < r0 && r1 < r2 && r1 < 1e-3 {
                let (ts, r) = refine(t0, t, scale);
                if r < rank_tol.max(1e-7) {
                    return Some(ConjugatePoint { t: ts, rank_ratio: r });
                }
            }
        }
        prev = Some((t, det, eig));
    }
    None
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
