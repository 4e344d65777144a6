//! Coordinate-space volume of a radial set: a polar chart grid is mapped
//! forward by geodesics and the weighted Lorentz density
//! `e^{−ψ(η̇)}√(−det g_η̇)` is integrated against the coordinate Jacobian.
//! No Jacobi fields and no hyperboloid area form are involved.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{chart_point, gauss_legendre};
use super::{RadialLimit, SclvSpec};
use crate::error::{Error, Result};
use crate::geodesics;
use crate::model::FinslerModel;
use crate::ode::OdeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleResolution {
    pub radial: usize,
    pub polar: usize,
    pub azimuthal: usize,
    pub time: usize,
    /// Finite-difference step in the chart parameters (Richardson with `h/2`).
    pub fd_step: f64,
}

impl Default for OracleResolution {
    fn default() -> Self {
        Self {
            radial: 12,
            polar: 8,
            azimuthal: 16,
            time: 16,
            fd_step: 1e-3,
        }
    }
}

fn unit_direction(model: &FinslerModel, sclv: &SclvSpec, params: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (w, _, frac) = chart_point(&sclv.patch.center, sclv.patch.radius, params);
    let f = model.lorentz_norm(&sclv.apex, &w)?;
    Ok((w.iter().map(|c| c / f).collect(), sclv.cut.value(frac)))
}

fn positions(model: &FinslerModel, x: &[f64], v: &[f64], ts: &[f64], t_end: f64, opts: &OdeOptions) -> Result<Vec<Vec<f64>>> {
    let seg = geodesics::integrate_geodesic_with_stops(model, x, v, t_end, ts, opts)?;
    Ok(seg.stops().map(|(_, p, _)| p).collect())
}

/// Weighted volume of `{exp(t·v(p)) : t < limit(b(v(p)))}` over the patch.
pub fn coordinate_volume(
    model: &FinslerModel,
    sclv: &SclvSpec,
    limit: RadialLimit,
    res: &OracleResolution,
    opts: &OdeOptions,
) -> Result<f64> {
    sclv.validate(model)?;
    let n = model.n();
    let radius = sclv.patch.radius;
    let mut grid: Vec<(Vec<f64>, f64)> = Vec::new();
    match n {
        1 => {
            for (q, w) in gauss_legendre(res.radial, -radius, radius) {
                grid.push((vec![q], w));
            }
        }
        2 => {
            for (s, ws) in gauss_legendre(res.radial, 0.0, radius) {
                for (p, wp) in gauss_legendre(res.azimuthal, 0.0, 2.0 * PI) {
                    grid.push((vec![s, p], ws * wp));
                }
            }
        }
        _ => {
            for (s, ws) in gauss_legendre(res.radial, 0.0, radius) {
                for (a, wa) in gauss_legendre(res.polar, 0.0, PI) {
                    for (p, wp) in gauss_legendre(res.azimuthal, 0.0, 2.0 * PI) {
                        grid.push((vec![s, a, p], ws * wa * wp));
                    }
                }
            }
        }
    }
    let x = &sclv.apex;
    let h = res.fd_step;
    let parts: Vec<Result<f64>> = grid
        .par_iter()
        .map(|(params, wp)| {
            let (v, cut) = unit_direction(model, sclv, params)?;
            let upper = limit.upper(cut);
            let tnodes = gauss_legendre(res.time, 0.0, upper);
            let ts: Vec<f64> = tnodes.iter().map(|(t, _)| *t).collect();
            let seg = geodesics::integrate_geodesic_with_stops(model, x, &v, upper, &ts, opts)?;
            let base: Vec<(Vec<f64>, Vec<f64>)> = seg.stops().map(|(_, p, q)| (p, q)).collect();
            // d/dp_a of the forward map at every time node
            let mut dp: Vec<Vec<Vec<f64>>> = Vec::with_capacity(params.len());
            for a in 0..params.len() {
                let diff = |step: f64| -> Result<Vec<Vec<f64>>> {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus[a] += step;
                    minus[a] -= step;
                    let pp = positions(model, x, &unit_direction(model, sclv, &plus)?.0, &ts, upper, opts)?;
                    let pm = positions(model, x, &unit_direction(model, sclv, &minus)?.0, &ts, upper, opts)?;
                    Ok(pp
                        .iter()
                        .zip(&pm)
                        .map(|(p, m)| p.iter().zip(m).map(|(u, w)| (u - w) / (2.0 * step)).collect())
                        .collect())
                };
                let coarse = diff(h)?;
                let fine = diff(0.5 * h)?;
                dp.push(
                    fine.iter()
                        .zip(&coarse)
                        .map(|(f, c)| f.iter().zip(c).map(|(a, b)| (4.0 * a - b) / 3.0).collect())
                        .collect(),
                );
            }
            let mut sum = 0.0;
            for (k, &(_, wt)) in tnodes.iter().enumerate() {
                let (p, vel) = &base[k];
                let d = n + 1;
                let jac = DMatrix::from_fn(d, d, |i, j| if j == 0 { vel[i] } else { dp[j - 1][k][i] });
                let g = model.fundamental_tensor(p, vel)?;
                let gdet = -g.determinant();
                if gdet <= 0.0 {
                    return Err(Error::Degenerate(format!("fundamental tensor at {p:?} is not Lorentzian")));
                }
                let psi = if model.is_weighted() { model.weight(p, vel)? } else { 0.0 };
                sum += wt * (-psi).exp() * gdet.sqrt() * jac.determinant().abs();
            }
            Ok(wp * sum)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}
