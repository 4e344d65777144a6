//! Quadrature on the unit future hyperboloid `{F = 1}` and in time.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SclvSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::FinslerModel;

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let m = NonZeroUsize::new(m.max(1)).expect("positive");
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out: Vec<(f64, f64)> = GaussLegendre::new(m)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let rule = gauss_legendre(order, -1.0, 1.0);
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        for &(x, w) in &rule {
            sum += 0.5 * h * w * f(lo + 0.5 * h * (x + 1.0));
        }
    }
    sum
}

/// Node counts per chart parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureResolution {
    /// Gauss nodes in the radial chart parameter (`s`, or `q` when `n = 1`).
    pub radial: usize,
    /// Gauss nodes in the polar angle (`n = 3`).
    pub polar: usize,
    /// Uniform nodes in the azimuth (`n ≥ 2`).
    pub azimuthal: usize,
}

impl Default for QuadratureResolution {
    fn default() -> Self {
        Self {
            radial: 8,
            polar: 6,
            azimuthal: 10,
        }
    }
}

impl QuadratureResolution {
    pub fn scaled(&self, f: f64) -> Self {
        let s = |k: usize| ((k as f64 * f).round() as usize).max(1);
        Self {
            radial: s(self.radial),
            polar: s(self.polar),
            azimuthal: s(self.azimuthal).max(3),
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            radial: (self.radial / 2).max(1),
            polar: (self.polar / 2).max(1),
            azimuthal: (self.azimuthal / 2).max(3),
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            radial: self.radial * 2,
            polar: self.polar * 2,
            azimuthal: self.azimuthal * 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionNode {
    pub id: usize,
    /// Chart parameters: `[q]`, `[s, φ]` or `[s, θ, φ]`.
    pub params: Vec<f64>,
    /// Unit future timelike direction.
    pub v: Vec<f64>,
    /// `σ`-weight (area element times quadrature weight).
    pub weight: f64,
    /// Cut value `b(v)`.
    pub cut: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionQuadrature {
    pub nodes: Vec<DirectionNode>,
    pub resolution: QuadratureResolution,
    pub parametrization: &'static str,
}

impl DirectionQuadrature {
    /// `σ(Ũ₁)`.
    pub fn sigma(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// `b_x = inf b(v)` over the nodes.
    pub fn cut_min(&self) -> f64 {
        self.nodes.iter().map(|n| n.cut).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Chart point `w(params) = (1, ξ_c + s·u)`, its parameter derivatives, and
/// the normalized radial fraction `s/S`.
pub(crate) fn chart_point(center: &[f64], radius: f64, params: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let n = center.len();
    let d = n + 1;
    let mut w = vec![0.0; d];
    w[0] = 1.0;
    let mut dw = Vec::new();
    let frac;
    match n {
        1 => {
            let q = params[0];
            w[1] = center[0] + q;
            dw.push(vec![0.0, 1.0]);
            frac = q.abs() / radius;
        }
        2 => {
            let (s, phi) = (params[0], params[1]);
            let u = [phi.cos(), phi.sin()];
            let du = [-phi.sin(), phi.cos()];
            for i in 0..2 {
                w[i + 1] = center[i] + s * u[i];
            }
            dw.push(vec![0.0, u[0], u[1]]);
            dw.push(vec![0.0, s * du[0], s * du[1]]);
            frac = s / radius;
        }
        _ => {
            let (s, th, phi) = (params[0], params[1], params[2]);
            let u = [th.sin() * phi.cos(), th.sin() * phi.sin(), th.cos()];
            let u_th = [th.cos() * phi.cos(), th.cos() * phi.sin(), -th.sin()];
            let u_phi = [-th.sin() * phi.sin(), th.sin() * phi.cos(), 0.0];
            for i in 0..3 {
                w[i + 1] = center[i] + s * u[i];
            }
            dw.push(vec![0.0, u[0], u[1], u[2]]);
            dw.push(vec![0.0, s * u_th[0], s * u_th[1], s * u_th[2]]);
            dw.push(vec![0.0, s * u_phi[0], s * u_phi[1], s * u_phi[2]]);
            frac = s / radius;
        }
    }
    (w, dw, frac)
}

/// Unit direction for chart parameters, with the induced area element.
pub(crate) fn direction_at(model: &FinslerModel, sclv: &SclvSpec, params: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let x = &sclv.apex;
    let (w, dw, frac) = chart_point(&sclv.patch.center, sclv.patch.radius, params);
    if !model.is_future_timelike(x, &w)? {
        return Err(Error::InvalidArgument(format!(
            "direction patch leaves the future cone at chart point {w:?}"
        )));
    }
    let f = model.lorentz_norm(x, &w)?;
    let g = model.fundamental_tensor(x, &w)?;
    let v: Vec<f64> = w.iter().map(|c| c / f).collect();
    let dv: Vec<Vec<f64>> = dw
        .iter()
        .map(|delta| {
            let k = linalg::bilinear(&g, &w, delta) / (f * f);
            delta.iter().zip(&w).map(|(a, b)| (a + k * b) / f).collect()
        })
        .collect();
    let m = dv.len();
    let gram = DMatrix::from_fn(m, m, |a, b| linalg::bilinear(&g, &dv[a], &dv[b]));
    let det = gram.determinant();
    if !(det >= 0.0) {
        return Err(Error::Degenerate(format!("induced area form is not positive at {w:?}")));
    }
    Ok((v, det.sqrt(), sclv.cut.value(frac)))
}

/// Product quadrature on the direction patch with weights approximating `dσ`.
pub fn build_quadrature(
    model: &FinslerModel,
    sclv: &SclvSpec,
    res: QuadratureResolution,
) -> Result<DirectionQuadrature> {
    sclv.validate(model)?;
    let n = model.n();
    let radius = sclv.patch.radius;
    let mut grid: Vec<(Vec<f64>, f64)> = Vec::new();
    match n {
        1 => {
            for (q, wq) in gauss_legendre(res.radial, -radius, radius) {
                grid.push((vec![q], wq));
            }
        }
        2 => {
            let dphi = 2.0 * PI / res.azimuthal as f64;
            for (s, ws) in gauss_legendre(res.radial, 0.0, radius) {
                for k in 0..res.azimuthal {
                    grid.push((vec![s, dphi * k as f64], ws * dphi));
                }
            }
        }
        _ => {
            let dphi = 2.0 * PI / res.azimuthal as f64;
            let polar = gauss_legendre(res.polar, 0.0, PI);
            for (s, ws) in gauss_legendre(res.radial, 0.0, radius) {
                for &(th, wt) in &polar {
                    for k in 0..res.azimuthal {
                        grid.push((vec![s, th, dphi * k as f64], ws * wt * dphi));
                    }
                }
            }
        }
    }
    let mut nodes = Vec::with_capacity(grid.len());
    for (id, (params, qw)) in grid.into_iter().enumerate() {
        let (v, area, cut) = direction_at(model, sclv, &params)?;
        nodes.push(DirectionNode {
            id,
            params,
            v,
            weight: qw * area,
            cut,
        });
    }
    Ok(DirectionQuadrature {
        nodes,
        resolution: res,
        parametrization: match n {
            1 => "w = (1, c + q), q in [-S, S]",
            2 => "w = (1, c + s(cos p, sin p)), s in [0, S]",
            _ => "w = (1, c + s(sin a cos p, sin a sin p, cos a)), s in [0, S]",
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{Cut, Patch};
    use crate::model::ModelSpec;

    fn sclv(n: usize, radius: f64) -> SclvSpec {
        SclvSpec {
            apex: vec![0.0; n + 1],
            patch: Patch {
                center: vec![0.0; n],
                radius,
            },
            cut: Cut::Constant { b: 1.0 },
        }
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let v: f64 = gauss_legendre(3, 0.0, 2.0).iter().map(|(x, w)| w * x.powi(5)).sum();
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
        assert!((integrate(|t| t.exp(), 0.0, 1.0, 2, 8) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn hyperbolic_arc_length() {
        let m = ModelSpec::minkowski(1).build().unwrap();
        let q = build_quadrature(&m, &sclv(1, 0.6), QuadratureResolution { radial: 24, polar: 1, azimuthal: 3 }).unwrap();
        assert!((q.sigma() - 2.0 * 0.6f64.atanh()).abs() < 1e-8);
        for node in &q.nodes {
            assert!((m.lorentz_norm(&[0.0, 0.0], &node.v).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn hyperboloid_cap_area() {
        let m = ModelSpec::minkowski(2).build().unwrap();
        let res = QuadratureResolution { radial: 10, polar: 1, azimuthal: 6 };
        let a = build_quadrature(&m, &sclv(2, 0.5), res).unwrap().sigma();
        let b = build_quadrature(&m, &sclv(2, 0.5), res.doubled()).unwrap().sigma();
        let chi = 0.5f64.atanh();
        assert!((a - 2.0 * PI * (chi.cosh() - 1.0)).abs() < 1e-8);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn three_dimensional_cap_area() {
        // area of the hyperbolic ball of radius χ in H³: π(sinh 2χ − 2χ)
        let m = ModelSpec::minkowski(3).build().unwrap();
        let res = QuadratureResolution { radial: 10, polar: 8, azimuthal: 6 };
        let a = build_quadrature(&m, &sclv(3, 0.4), res).unwrap().sigma();
        let chi = 0.4f64.atanh();
        assert!((a - PI * ((2.0 * chi).sinh() - 2.0 * chi)).abs() < 1e-8);
    }

    #[test]
    fn patch_outside_cone_is_rejected() {
        let m = ModelSpec::minkowski(2).build().unwrap();
        assert!(build_quadrature(&m, &sclv(2, 1.2), QuadratureResolution::default()).is_err());
    }
}
