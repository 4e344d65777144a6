//! Formal Christoffel symbols, geodesic spray, nonlinear and Chern connections.
//!
//! Conventions: the spray is normalized so that geodesics solve
//! `η̈ + 2G(η̇) = 0`, i.e. `G^α = ½ Γ̃^α_{βγ} v^β v^γ`, and
//! `N^α_β = ∂G^α/∂v^β`, so that `N(v)·v = 2G(v)`.
//!
//! Everything is read off one jet expansion of `L` in the `2(1+n)` variables
//! `(x, v)`: order 3 yields `G`, order 4 adds `∂G/∂x` and `N`, order 5 adds
//! `∂N/∂x` and `∂N/∂v`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::linalg::{self, PIVOT_TOL};
use crate::model::FinslerModel;

/// Dense `d×d×d` array indexed `[α][β][γ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    d: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.d + b) * self.d + c]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, val: f64) {
        self.data[(a * self.d + b) * self.d + c] = val;
    }

    /// `Σ_{β,γ} T^α_{βγ} u^β w^γ`.
    pub fn contract(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|a| {
                let mut acc = 0.0;
                for b in 0..self.d {
                    for c in 0..self.d {
                        acc += self.get(a, b, c) * u[b] * w[c];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| f64::max(m, a.abs()))
    }
}

/// How many derivatives of the spray to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    /// `L`, `g`, `Γ̃`, `G`.
    Spray,
    /// Adds `∂G/∂x`, `N = ∂G/∂v` and `∂g/∂v`.
    Connection,
    /// Adds jet-exact `∂N/∂x`, `∂N/∂v`.
    SecondDerivatives,
}

impl Level {
    fn jet_order(self) -> usize {
        match self {
            Level::Spray => 3,
            Level::Connection => 4,
            Level::SecondDerivatives => 5,
        }
    }
}

/// Everything the connection layer knows at one `(x, v)`.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub level: Level,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub l: f64,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `∂g_{βγ}/∂x^μ` stored as `[μ][β][γ]`.
    pub dg_dx: Tensor3,
    /// `Γ̃^α_{βγ}`.
    pub gamma_tilde: Tensor3,
    /// `G^α`.
    pub spray: Vec<f64>,
    /// `∂G^α/∂x^β`.
    pub dspray_dx: Option<DMatrix<f64>>,
    /// `N^α_β = ∂G^α/∂v^β`.
    pub nonlinear: Option<DMatrix<f64>>,
    /// `∂g_{βγ}/∂v^μ` stored as `[μ][β][γ]`.
    pub dg_dv: Option<Tensor3>,
    /// `∂N^α_β/∂x^γ` stored as `[γ]` → matrix `[α][β]`.
    pub dn_dx: Option<Vec<DMatrix<f64>>>,
    /// `∂N^α_β/∂v^γ` stored as `[γ]` → matrix `[α][β]`.
    pub dn_dv: Option<Vec<DMatrix<f64>>>,
}

impl LocalGeometry {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn nonlinear(&self) -> &DMatrix<f64> {
        self.nonlinear.as_ref().expect("geometry evaluated below connection level")
    }

    pub fn dspray_dx(&self) -> &DMatrix<f64> {
        self.dspray_dx.as_ref().expect("geometry evaluated below connection level")
    }

    /// `g_v(u, w)`.
    pub fn metric(&self, u: &[f64], w: &[f64]) -> f64 {
        linalg::bilinear(&self.g, u, w)
    }

    /// Chern connection coefficients `Γ^α_{βγ}(v)`.
    pub fn chern(&self) -> Tensor3 {
        let d = self.dim();
        let n = self.nonlinear();
        let dgv = self.dg_dv.as_ref().expect("geometry evaluated below connection level");
        // lowered correction C_{δβγ} = Σ_μ (∂_μ g_{δγ} N^μ_β + ∂_μ g_{βδ} N^μ_γ − ∂_μ g_{βγ} N^μ_δ)
        let mut lowered = Tensor3::zeros(d);
        for dl in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut acc = 0.0;
                    for mu in 0..d {
                        acc += dgv.get(mu, dl, c) * n[(mu, b)] + dgv.get(mu, b, dl) * n[(mu, c)]
                            - dgv.get(mu, b, c) * n[(mu, dl)];
                    }
                    lowered.set(dl, b, c, acc);
                }
            }
        }
        let mut out = self.gamma_tilde.clone();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut corr = 0.0;
                    for dl in 0..d {
                        corr += self.g_inv[(a, dl)] * lowered.get(dl, b, c);
                    }
                    out.set(a, b, c, out.get(a, b, c) - 0.5 * corr);
                }
            }
        }
        out
    }
}

/// Jet expansions of `L` and the spray at one point.
pub(crate) struct SprayJets {
    pub l: Jet,
    /// `g_{αβ}` as order `K−2` jets.
    pub g: Vec<Vec<Jet>>,
    /// Lowered Christoffel symbols `[δ][β][γ]` as order `K−3` jets.
    pub gamma1: Vec<Vec<Vec<Jet>>>,
    /// `G^α` as order `K−3` jets.
    pub spray: Vec<Jet>,
}

pub(crate) fn spray_jets(model: &FinslerModel, x: &[f64], v: &[f64], order: usize) -> Result<SprayJets> {
    let d = model.dim();
    let point: Vec<f64> = x.iter().chain(v).copied().collect();
    let vars = Jet::lift(&point, order);
    let l = model.lagrangian(&vars[..d], &vars[d..])?;

    let dl_dv: Vec<Jet> = (0..d).map(|a| l.derivative(d + a)).collect();
    let mut g: Vec<Vec<Jet>> = vec![Vec::with_capacity(d); d];
    for a in 0..d {
        for b in 0..d {
            let entry = if b < a {
                g[b][a].clone()
            } else {
                dl_dv[a].derivative(d + b).scale(0.5)
            };
            g[a].push(entry);
        }
    }
    // ∂_μ g_{βγ}, order K−3
    let dg: Vec<Vec<Vec<Jet>>> = (0..d)
        .map(|mu| {
            (0..d)
                .map(|b| (0..d).map(|c| g[b][c].derivative(mu)).collect())
                .collect()
        })
        .collect();
    let low = order - 3;
    let mut gamma1 = vec![vec![Vec::with_capacity(d); d]; d];
    for dl in 0..d {
        for b in 0..d {
            for c in 0..d {
                let val = (dg[b][dl][c].clone() + &dg[c][b][dl] - &dg[dl][b][c]).scale(0.5);
                gamma1[dl][b].push(val);
            }
        }
    }
    let vt: Vec<Jet> = vars[d..].iter().map(|j| j.truncate(low)).collect();
    let rhs: Vec<Jet> = (0..d)
        .map(|dl| {
            let mut acc = vt[0].constant_like(0.0);
            for b in 0..d {
                let mut inner = vt[0].constant_like(0.0);
                for c in 0..d {
                    inner = inner + &gamma1[dl][b][c] * &vt[c];
                }
                acc = acc + inner * &vt[b];
            }
            acc.scale(0.5)
        })
        .collect();
    let g_low: Vec<Vec<Jet>> = g.iter().map(|r| r.iter().map(|e| e.truncate(low)).collect()).collect();
    let spray = sym_solve_single(&g_low, rhs)?;
    Ok(SprayJets { l, g, gamma1, spray })
}

fn sym_solve_single(a: &[Vec<Jet>], b: Vec<Jet>) -> Result<Vec<Jet>> {
    let mut sol = linalg::sym_solve(a, &[b], PIVOT_TOL)?;
    Ok(sol.pop().expect("one right-hand side"))
}

/// Evaluate the connection layer at `(x, v)`.
pub fn evaluate(model: &FinslerModel, x: &[f64], v: &[f64], level: Level) -> Result<LocalGeometry> {
    let d = model.dim();
    if x.len() != d || v.len() != d {
        return Err(Error::InvalidArgument(format!("expected vectors of length {d}")));
    }
    model.check_chart(x)?;
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let order = level.jet_order();
    let jets = spray_jets(model, x, v, order)?;

    let g = DMatrix::from_fn(d, d, |a, b| jets.g[a][b].value());
    let g_inv = linalg::sym_inverse(&g)?;
    let mut dg_dx = Tensor3::zeros(d);
    for mu in 0..d {
        for b in 0..d {
            for c in 0..d {
                dg_dx.set(mu, b, c, jets.g[b][c].d1(mu));
            }
        }
    }
    let mut gamma_tilde = Tensor3::zeros(d);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for dl in 0..d {
                    acc += g_inv[(a, dl)] * jets.gamma1[dl][b][c].value();
                }
                gamma_tilde.set(a, b, c, acc);
            }
        }
    }
    let spray: Vec<f64> = jets.spray.iter().map(|s| s.value()).collect();

    let mut geo = LocalGeometry {
        level,
        x: x.to_vec(),
        v: v.to_vec(),
        l: jets.l.value(),
        g,
        g_inv,
        dg_dx,
        gamma_tilde,
        spray,
        dspray_dx: None,
        nonlinear: None,
        dg_dv: None,
        dn_dx: None,
        dn_dv: None,
    };
    if level >= Level::Connection {
        geo.dspray_dx = Some(DMatrix::from_fn(d, d, |a, b| jets.spray[a].d1(b)));
        geo.nonlinear = Some(DMatrix::from_fn(d, d, |a, b| jets.spray[a].d1(d + b)));
        let mut dg_dv = Tensor3::zeros(d);
        for mu in 0..d {
            for b in 0..d {
                for c in 0..d {
                    dg_dv.set(mu, b, c, jets.g[b][c].d1(d + mu));
                }
            }
        }
        geo.dg_dv = Some(dg_dv);
    }
    if level >= Level::SecondDerivatives {
        let second = |wrt: usize| -> Vec<DMatrix<f64>> {
            (0..d)
                .map(|c| {
                    DMatrix::from_fn(d, d, |a, b| {
                        jets.spray[a]
                            .partial_vars(&[d + b, wrt + c])
                            .expect("order 2 available")
                    })
                })
                .collect()
        };
        geo.dn_dx = Some(second(0));
        geo.dn_dv = Some(second(d));
    }
    Ok(geo)
}

/// `Γ̃^α_{βγ}(v)`.
pub fn gamma_tilde(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Tensor3> {
    Ok(evaluate(model, x, v, Level::Spray)?.gamma_tilde)
}

/// Spray coefficients `G^α(v)`; zero at `v = 0`.
pub fn spray(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().all(|c| *c == 0.0) {
        return Ok(vec![0.0; model.dim()]);
    }
    Ok(evaluate(model, x, v, Level::Spray)?.spray)
}

/// Nonlinear connection `N^α_β(v)`; zero at `v = 0`.
pub fn nonlinear_connection(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    if v.iter().all(|c| *c == 0.0) {
        return Ok(DMatrix::zeros(model.dim(), model.dim()));
    }
    let geo = evaluate(model, x, v, Level::Connection)?;
    Ok(geo.nonlinear.expect("connection level"))
}

/// Chern connection coefficients `Γ^α_{βγ}(v)`.
pub fn chern_gamma(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Tensor3> {
    Ok(evaluate(model, x, v, Level::Connection)?.chern())
}

/// `D^w_u X` at `x`, given `X(x)` and its directional derivative
/// `Σ_β u^β ∂X/∂x^β` (or, along a curve with velocity `u`, `dX/dt`).
pub fn covariant_derivative(
    model: &FinslerModel,
    x: &[f64],
    u: &[f64],
    w: &[f64],
    field: &[f64],
    field_derivative: &[f64],
) -> Result<Vec<f64>> {
    if w.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let gamma = chern_gamma(model, x, w)?;
    let corr = gamma.contract(u, field);
    Ok(field_derivative.iter().zip(corr).map(|(a, b)| a + b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, ScaleFactor};

    #[test]
    fn minkowski_connection_vanishes() {
        let m = ModelSpec::minkowski(2).build().unwrap();
        let geo = evaluate(&m, &[0.1, 0.2, 0.3], &[1.2, 0.3, -0.1], Level::SecondDerivatives).unwrap();
        assert!(geo.gamma_tilde.max_abs() < 1e-15);
        assert!(geo.spray.iter().all(|g| g.abs() < 1e-15));
        assert!(geo.nonlinear().abs().max() < 1e-15);
        assert!(geo.chern().max_abs() < 1e-15);
    }

    #[test]
    fn flrw_christoffels_match_hand_formulas() {
        let h = 0.1;
        let m = ModelSpec::flrw(2, ScaleFactor::Exp { h }).build().unwrap();
        let x = [0.7, 0.1, -0.2];
        let v = [1.3, 0.4, -0.2];
        let geo = evaluate(&m, &x, &v, Level::Connection).unwrap();
        let e2 = (2.0 * h * x[0]).exp();
        for i in 1..3 {
            assert!((geo.gamma_tilde.get(0, i, i) - h * e2).abs() < 1e-13);
            assert!((geo.gamma_tilde.get(i, 0, i) - h).abs() < 1e-13);
            assert!((geo.gamma_tilde.get(i, i, 0) - h).abs() < 1e-13);
        }
        let sp2 = v[1] * v[1] + v[2] * v[2];
        assert!((geo.spray[0] - 0.5 * h * e2 * sp2).abs() < 1e-13);
        assert!((geo.spray[1] - h * v[0] * v[1]).abs() < 1e-13);
        // quadratic model: Chern = formal Christoffel
        assert!(geo.chern().max_abs_diff(&geo.gamma_tilde) < 1e-14);
    }

    #[test]
    fn euler_contraction_of_nonlinear_connection() {
        let m = ModelSpec::quartic(2, 0.05)
            .with_scale(ScaleFactor::Exp { h: 0.2 })
            .build()
            .unwrap();
        let x = [0.3, 0.0, 0.1];
        let v = [1.0, 0.3, 0.2];
        let geo = evaluate(&m, &x, &v, Level::Connection).unwrap();
        let nv = geo.nonlinear() * nalgebra::DVector::from_column_slice(&v);
        for a in 0..3 {
            assert!((nv[a] - 2.0 * geo.spray[a]).abs() < 1e-12);
        }
        // Γ^α_{βγ} v^β = N^α_γ
        let chern = geo.chern();
        for a in 0..3 {
            for c in 0..3 {
                let s: f64 = (0..3).map(|b| chern.get(a, b, c) * v[b]).sum();
                assert!((s - geo.nonlinear()[(a, c)]).abs() < 1e-12);
            }
        }
        assert!(chern.max_abs_diff(&geo.gamma_tilde) > 1e-6);
    }

    #[test]
    fn zero_vector_conventions() {
        let m = ModelSpec::minkowski(1).build().unwrap();
        assert_eq!(spray(&m, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(covariant_derivative(&m, &[0.0; 2], &[1.0, 0.0], &[0.0; 2], &[1.0, 0.0], &[0.0; 2]).is_err());
    }
}
