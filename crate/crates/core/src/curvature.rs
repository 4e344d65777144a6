//! Curvature operator, flag and Ricci curvature, the weight along geodesics
//! and weighted Ricci curvature.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connection::{self, Level, LocalGeometry};
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::model::FinslerModel;

/// How `∂N/∂x` and `∂N/∂v` enter the curvature operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiemannMethod {
    /// Exact second derivatives of the spray from order-5 jets.
    #[default]
    Jet,
    /// Central differences of the jet-exact `N`, Richardson-combined over
    /// steps `h` and `h/2`.
    FiniteDifference,
}

/// Relative step for the finite-difference route.
pub const FD_STEP: f64 = 1e-4;

/// Curvature data at one `(x, v)`.
#[derive(Debug, Clone)]
pub struct CurvatureSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `R^α_β(v)`.
    pub r: DMatrix<f64>,
    pub ricci: f64,
    pub geometry: LocalGeometry,
}

impl CurvatureSample {
    /// `R_v(w)`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        (&self.r * DVector::from_column_slice(w)).iter().copied().collect()
    }

    /// Flag curvature `K(v, w) = −g_v(R_v w, w) / (g_v(v,v) g_v(w,w) − g_v(v,w)²)`.
    pub fn flag(&self, w: &[f64]) -> Result<f64> {
        let v = &self.v;
        let gvv = self.geometry.metric(v, v);
        let gww = self.geometry.metric(w, w);
        let gvw = self.geometry.metric(v, w);
        let den = gvv * gww - gvw * gvw;
        let scale = gvv.abs() * gww.abs();
        if den.abs() <= 1e-12 * scale.max(1e-300) {
            return Err(Error::InvalidArgument("degenerate flag".into()));
        }
        Ok(-self.geometry.metric(&self.apply(w), w) / den)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, c| f64::max(m, c.abs()))
}

fn richardson<F>(f: F, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    let central = |s: f64| -> Result<DMatrix<f64>> { Ok((f(s)? - f(-s)?) / (2.0 * s)) };
    let d1 = central(h)?;
    let d2 = central(0.5 * h)?;
    Ok((d2 * 4.0 - d1) / 3.0)
}

/// Assemble `R^α_β = 2∂G^α/∂x^β − v^γ ∂N^α_β/∂x^γ + 2G^γ ∂N^α_β/∂v^γ − N^α_γ N^γ_β`.
fn assemble(geo: &LocalGeometry, dn_along_v: &DMatrix<f64>, dn_along_g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = geo.nonlinear();
    geo.dspray_dx() * 2.0 - dn_along_v + dn_along_g * 2.0 - n * n
}

/// Curvature operator at `(x, v)`.
pub fn curvature_sample(model: &FinslerModel, x: &[f64], v: &[f64], method: RiemannMethod) -> Result<CurvatureSample> {
    let d = model.dim();
    let (geo, dn_v, dn_g) = match method {
        RiemannMethod::Jet => {
            let geo = connection::evaluate(model, x, v, Level::SecondDerivatives)?;
            let dnx = geo.dn_dx.as_ref().expect("second derivatives");
            let dnv = geo.dn_dv.as_ref().expect("second derivatives");
            let mut a = DMatrix::zeros(d, d);
            let mut b = DMatrix::zeros(d, d);
            for c in 0..d {
                a += &dnx[c] * v[c];
                b += &dnv[c] * geo.spray[c];
            }
            (geo, a, b)
        }
        RiemannMethod::FiniteDifference => {
            let geo = connection::evaluate(model, x, v, Level::Connection)?;
            let nl = |xs: Vec<f64>, vs: Vec<f64>| -> Result<DMatrix<f64>> {
                Ok(connection::evaluate(model, &xs, &vs, Level::Connection)?
                    .nonlinear
                    .expect("connection level"))
            };
            let hx = FD_STEP * max_abs(x).max(1.0) / max_abs(v);
            let a = richardson(
                |s| nl(x.iter().zip(v).map(|(xi, vi)| xi + s * vi).collect(), v.to_vec()),
                hx,
            )?;
            let gmax = max_abs(&geo.spray);
            let b = if gmax == 0.0 {
                DMatrix::zeros(d, d)
            } else {
                let hv = FD_STEP * max_abs(v).max(1.0) / gmax;
                let g = geo.spray.clone();
                richardson(|s| nl(x.to_vec(), v.iter().zip(&g).map(|(vi, gi)| vi + s * gi).collect()), hv)?
            };
            (geo, a, b)
        }
    };
    let r = assemble(&geo, &dn_v, &dn_g);
    let ricci = r.trace();
    Ok(CurvatureSample {
        x: x.to_vec(),
        v: v.to_vec(),
        r,
        ricci,
        geometry: geo,
    })
}

pub fn riemann_matrix(model: &FinslerModel, x: &[f64], v: &[f64], method: RiemannMethod) -> Result<DMatrix<f64>> {
    if v.iter().all(|c| *c == 0.0) {
        return Ok(DMatrix::zeros(model.dim(), model.dim()));
    }
    Ok(curvature_sample(model, x, v, method)?.r)
}

/// Flag curvature `K(v, w)`; `v` must be timelike.
pub fn flag_curvature(model: &FinslerModel, x: &[f64], v: &[f64], w: &[f64], method: RiemannMethod) -> Result<f64> {
    if model.lagrangian(x, v)? >= 0.0 {
        return Err(Error::InvalidArgument("flagpole must be timelike".into()));
    }
    curvature_sample(model, x, v, method)?.flag(w)
}

/// `Ric(v) = tr R_v`; zero at `v = 0`.
pub fn ricci(model: &FinslerModel, x: &[f64], v: &[f64], method: RiemannMethod) -> Result<f64> {
    if v.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    Ok(curvature_sample(model, x, v, method)?.ricci)
}

/// `(ψ_η, ψ′_η, ψ″_η)` at a point of a geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WeightJet {
    pub psi: f64,
    pub dpsi: f64,
    pub ddpsi: f64,
}

/// Weight and its first two derivatives along the geodesic through `(x, v)`,
/// from the second-order Taylor expansion of the geodesic itself
/// (`η̈ = −2G`, `η⃛ = −2(∂G/∂x η̇ + N η̈)`).
pub fn weight_jet(model: &FinslerModel, geo: &LocalGeometry) -> Result<WeightJet> {
    if !model.is_weighted() {
        return Ok(WeightJet::default());
    }
    let d = model.dim();
    let x = &geo.x;
    let v = &geo.v;
    let acc: Vec<f64> = geo.spray.iter().map(|g| -2.0 * g).collect();
    let jerk = {
        let dv = DVector::from_column_slice(v);
        let da = DVector::from_column_slice(&acc);
        (geo.dspray_dx() * dv + geo.nonlinear() * da) * -2.0
    };
    let s = &Jet::lift(&[0.0], 2)[0];
    let s2 = s * s;
    let xs: Vec<Jet> = (0..d)
        .map(|a| s.clone() * v[a] + s2.clone() * (0.5 * acc[a]) + x[a])
        .collect();
    let vs: Vec<Jet> = (0..d)
        .map(|a| s.clone() * acc[a] + s2.clone() * (0.5 * jerk[a]) + v[a])
        .collect();
    let psi = model.weight(&xs, &vs)?;
    Ok(WeightJet {
        psi: psi.value(),
        dpsi: psi.coeffs()[1],
        ddpsi: 2.0 * psi.coeffs()[2],
    })
}

/// Weight samples along a geodesic segment at the given times.
pub fn weight_along(
    model: &FinslerModel,
    segment: &crate::geodesics::GeodesicSegment,
    ts: &[f64],
) -> Result<Vec<(f64, WeightJet)>> {
    ts.iter()
        .map(|&t| {
            let (x, v) = segment.state(t);
            let geo = connection::evaluate(model, &x, &v, Level::Connection)?;
            Ok((t, weight_jet(model, &geo)?))
        })
        .collect()
}

/// Effective dimension parameter of the weighted Ricci curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EffectiveDim {
    Finite(f64),
    Infinite(InfinityTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfinityTag {
    Inf,
}

impl EffectiveDim {
    pub const INFINITY: EffectiveDim = EffectiveDim::Infinite(InfinityTag::Inf);
}

/// Tolerance for `ψ′ = 0` in the `N = n` case.
pub const RIC_N_ZERO_TOL: f64 = 1e-12;

/// `Ric_N = Ric + ψ″ − ψ′²/(N − n)`, with the `N = ∞` and `N = n` cases.
pub fn ricci_n(ric: f64, w: &WeightJet, n: usize, dim_n: EffectiveDim) -> f64 {
    match dim_n {
        EffectiveDim::Infinite(_) => ric + w.ddpsi,
        EffectiveDim::Finite(big_n) if big_n == n as f64 => {
            if w.dpsi.abs() <= RIC_N_ZERO_TOL {
                ric + w.ddpsi
            } else {
                f64::NEG_INFINITY
            }
        }
        EffectiveDim::Finite(big_n) => ric + w.ddpsi - w.dpsi * w.dpsi / (big_n - n as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, ScaleFactor, WeightSpec};

    #[test]
    fn minkowski_is_flat() {
        let m = ModelSpec::minkowski(2).build().unwrap();
        for method in [RiemannMethod::Jet, RiemannMethod::FiniteDifference] {
            let s = curvature_sample(&m, &[0.0; 3], &[1.0, 0.3, 0.1], method).unwrap();
            assert!(s.r.abs().max() < 1e-14);
            assert_eq!(s.flag(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn de_sitter_curvature_operator() {
        // exp warp is de Sitter: R_v(w) = H²(L(v) w − g_v(w, v) v)
        let h = 0.3;
        let m = ModelSpec::flrw(2, ScaleFactor::Exp { h }).build().unwrap();
        let x = [0.4, 0.1, 0.2];
        let v = [1.2, 0.3, -0.2];
        for method in [RiemannMethod::Jet, RiemannMethod::FiniteDifference] {
            let s = curvature_sample(&m, &x, &v, method).unwrap();
            let l = s.geometry.l;
            for k in 0..3 {
                let mut w = [0.0; 3];
                w[k] = 1.0;
                let rw = s.apply(&w);
                let gwv = s.geometry.metric(&w, &v);
                for a in 0..3 {
                    let want = h * h * (l * w[a] - gwv * v[a]);
                    assert!((rw[a] - want).abs() < 1e-8, "{method:?} {k} {a}: {} vs {want}", rw[a]);
                }
            }
        }
    }

    #[test]
    fn weight_along_line() {
        let w = WeightSpec {
            alpha: 0.5,
            ..Default::default()
        };
        let m = ModelSpec::minkowski(2).with_weight(w).build().unwrap();
        let geo = connection::evaluate(&m, &[1.0, 0.0, 0.0], &[2.0, 0.5, 0.0], Level::Connection).unwrap();
        let wj = weight_jet(&m, &geo).unwrap();
        assert_eq!(wj.psi, 0.5);
        assert_eq!(wj.dpsi, 1.0);
        assert_eq!(wj.ddpsi, 0.0);
        let n = 2;
        assert_eq!(ricci_n(0.0, &wj, n, EffectiveDim::INFINITY), 0.0);
        assert!((ricci_n(0.0, &wj, n, EffectiveDim::Finite(4.0)) + 0.5).abs() < 1e-15);
        assert_eq!(ricci_n(0.0, &wj, n, EffectiveDim::Finite(2.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn effective_dim_parses_inf() {
        #[derive(Deserialize)]
        struct W {
            n: EffectiveDim,
        }
        let a: W = toml::from_str("n = \"inf\"").unwrap();
        assert_eq!(a.n, EffectiveDim::INFINITY);
        let b: W = toml::from_str("n = 4.5").unwrap();
        assert_eq!(b.n, EffectiveDim::Finite(4.5));
    }
}
