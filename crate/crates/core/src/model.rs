//! Lorentz–Finsler models and the pointwise metric layer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{Jet, Scalar};
use crate::linalg;

/// `|L(v)| <= LIGHTLIKE_BAND * |v|²` counts as lightlike.
pub const LIGHTLIKE_BAND: f64 = 1e-9;
/// Eigenvalues of `g_v` smaller than this (relative to the largest) are degenerate.
pub const SIGNATURE_TOL: f64 = 1e-10;
pub const DEFAULT_CHART_HALF_WIDTH: f64 = 10.0;

/// Warp factor `a(x⁰)` multiplying the spatial part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScaleFactor {
    /// `exp(h·x⁰)`
    Exp { h: f64 },
    /// `cosh(rate·x⁰)`
    Cosh {
        #[serde(default = "one")]
        rate: f64,
    },
    /// `a0 + a1·x⁰`
    Affine { a0: f64, a1: f64 },
    Const {
        #[serde(default = "one")]
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for ScaleFactor {
    fn default() -> Self {
        ScaleFactor::Const { value: 1.0 }
    }
}

impl ScaleFactor {
    pub fn eval<S: Scalar>(&self, t: &S) -> S {
        match *self {
            ScaleFactor::Exp { h } => (t.clone() * h).exp(),
            ScaleFactor::Cosh { rate } => (t.clone() * rate).cosh(),
            ScaleFactor::Affine { a0, a1 } => t.clone() * a1 + a0,
            ScaleFactor::Const { value } => t.constant_like(value),
        }
    }

    fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        let ok = match *self {
            ScaleFactor::Exp { h } => h.is_finite() && (h * lo).abs() < 700.0 && (h * hi).abs() < 700.0,
            ScaleFactor::Cosh { rate } => rate.is_finite() && (rate * lo).abs() < 700.0 && (rate * hi).abs() < 700.0,
            ScaleFactor::Affine { a0, a1 } => {
                a0.is_finite() && a1.is_finite() && a0 + a1 * lo > 0.0 && a0 + a1 * hi > 0.0
            }
            ScaleFactor::Const { value } => value.is_finite() && value > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "scale factor {self:?} is not positive and finite on x0 in [{lo}, {hi}]"
            )))
        }
    }
}

/// Weight `ψ = k + α·x⁰ + β·(v¹/v⁰) + γ·(v¹/v⁰)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl WeightSpec {
    pub fn is_zero(&self) -> bool {
        self.k == 0.0 && self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0
    }

    pub fn eval<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        let mut psi = x[0].constant_like(self.k);
        if self.alpha != 0.0 {
            psi = psi + x[0].clone() * self.alpha;
        }
        if self.beta != 0.0 || self.gamma != 0.0 {
            let q = v[1].try_div(&v[0])?;
            psi = psi + q.clone() * self.beta + q.square() * self.gamma;
        }
        Ok(psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Minkowski,
    Flrw,
    QuarticFinsler,
    StaticOscillator,
}

/// Declarative model description, as read from a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    pub n: usize,
    /// Warp factor for `flrw` (required) and `quartic_finsler` (optional).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleFactor>,
    /// Quartic coefficient for `quartic_finsler`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Lapse curvature for `static_oscillator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
}

impl ModelSpec {
    pub fn minkowski(n: usize) -> Self {
        Self {
            name: ModelName::Minkowski,
            n,
            scale: None,
            eps: None,
            k0: None,
            chart_half_width: None,
            weight: None,
        }
    }

    pub fn flrw(n: usize, scale: ScaleFactor) -> Self {
        Self {
            name: ModelName::Flrw,
            scale: Some(scale),
            ..Self::minkowski(n)
        }
    }

    pub fn quartic(n: usize, eps: f64) -> Self {
        Self {
            name: ModelName::QuarticFinsler,
            eps: Some(eps),
            ..Self::minkowski(n)
        }
    }

    pub fn static_oscillator(n: usize, k0: f64) -> Self {
        Self {
            name: ModelName::StaticOscillator,
            k0: Some(k0),
            ..Self::minkowski(n)
        }
    }

    pub fn with_weight(mut self, weight: WeightSpec) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn with_scale(mut self, scale: ScaleFactor) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn build(&self) -> Result<FinslerModel> {
        FinslerModel::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lagrangian {
    Minkowski,
    Warped(ScaleFactor),
    Quartic { eps: f64, scale: ScaleFactor },
    StaticOscillator { k0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalType {
    Timelike,
    Lightlike,
    Spacelike,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOrientation {
    Future,
    NonFuture,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureStatus {
    Valid,
    Degenerate,
    WrongSignature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureReport {
    pub status: SignatureStatus,
    pub eigenvalues: Vec<f64>,
}

impl SignatureReport {
    /// Smallest `|λ|` relative to the largest; the distance from degeneracy.
    pub fn margin(&self) -> f64 {
        let max = self.eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        let min = self.eigenvalues.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// A Lorentz–Finsler structure on a coordinate box, with time orientation
/// `∂/∂x⁰` and a weight function.
#[derive(Debug, Clone)]
pub struct FinslerModel {
    spec: ModelSpec,
    lagrangian: Lagrangian,
    weight: WeightSpec,
    chart: Vec<(f64, f64)>,
}

impl FinslerModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.n == 0 || spec.n > 3 {
            return Err(Error::InvalidModel(format!(
                "spatial dimension n = {} is outside 1..=3",
                spec.n
            )));
        }
        let half = spec.chart_half_width.unwrap_or(DEFAULT_CHART_HALF_WIDTH);
        if !(half.is_finite() && half > 0.0) {
            return Err(Error::InvalidModel(format!("chart half width {half} must be positive")));
        }
        let chart = vec![(-half, half); spec.n + 1];
        let unused = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::InvalidModel(format!("{field} is not a parameter of {:?}", spec.name)))
            } else {
                Ok(())
            }
        };
        let lagrangian = match spec.name {
            ModelName::Minkowski => {
                unused("scale", spec.scale.is_some())?;
                unused("eps", spec.eps.is_some())?;
                unused("k0", spec.k0.is_some())?;
                Lagrangian::Minkowski
            }
            ModelName::Flrw => {
                unused("eps", spec.eps.is_some())?;
                unused("k0", spec.k0.is_some())?;
                let scale = spec
                    .scale
                    .ok_or_else(|| Error::InvalidModel("flrw requires a scale factor".into()))?;
                scale.validate(-half, half)?;
                Lagrangian::Warped(scale)
            }
            ModelName::QuarticFinsler => {
                unused("k0", spec.k0.is_some())?;
                let eps = spec
                    .eps
                    .ok_or_else(|| Error::InvalidModel("quartic_finsler requires eps".into()))?;
                if !eps.is_finite() || eps.abs() > 10.0 {
                    return Err(Error::InvalidModel(format!("eps = {eps} outside [-10, 10]")));
                }
                let scale = spec.scale.unwrap_or_default();
                scale.validate(-half, half)?;
                Lagrangian::Quartic { eps, scale }
            }
            ModelName::StaticOscillator => {
                unused("scale", spec.scale.is_some())?;
                unused("eps", spec.eps.is_some())?;
                let k0 = spec
                    .k0
                    .ok_or_else(|| Error::InvalidModel("static_oscillator requires k0".into()))?;
                let worst = 1.0 + k0.min(0.0) * half * half * spec.n as f64;
                if !k0.is_finite() || worst <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "k0 = {k0} makes the lapse vanish inside the chart"
                    )));
                }
                Lagrangian::StaticOscillator { k0 }
            }
        };
        let weight = spec.weight.unwrap_or_default();
        if ![weight.k, weight.alpha, weight.beta, weight.gamma].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel("weight coefficients must be finite".into()));
        }
        let model = Self {
            spec,
            lagrangian,
            weight,
            chart,
        };
        model.verify_cone_certificate()?;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Spatial dimension `n`.
    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Manifold dimension `1 + n`.
    pub fn dim(&self) -> usize {
        self.spec.n + 1
    }

    pub fn chart(&self) -> &[(f64, f64)] {
        &self.chart
    }

    pub fn weight_spec(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn is_weighted(&self) -> bool {
        !self.weight.is_zero()
    }

    /// True when `L` is quadratic in `v` (a Lorentzian metric).
    pub fn is_quadratic(&self) -> bool {
        match self.lagrangian {
            Lagrangian::Quartic { eps, .. } => eps == 0.0,
            _ => true,
        }
    }

    pub fn in_chart(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.chart).all(|(c, (lo, hi))| c >= lo && c <= hi)
    }

    pub fn check_chart(&self, x: &[f64]) -> Result<()> {
        if self.in_chart(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart { point: x.to_vec() })
        }
    }

    /// The Lagrangian over any scalar type.
    pub fn lagrangian<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        let spatial_sq = |v: &[S]| {
            v[1..]
                .iter()
                .skip(1)
                .fold(v[1].square(), |acc, vi| acc + vi.square())
        };
        let l = match self.lagrangian {
            Lagrangian::Minkowski => spatial_sq(v) - v[0].square(),
            Lagrangian::Warped(scale) => {
                let a2 = scale.eval(&x[0]).square();
                a2 * spatial_sq(v) - v[0].square()
            }
            Lagrangian::Quartic { eps, scale } => {
                let a2 = scale.eval(&x[0]).square();
                let sp = a2.clone() * spatial_sq(v);
                let t2 = v[0].square();
                let mut l = sp.clone() - t2.clone();
                if eps != 0.0 {
                    let w1 = (a2 * v[1].square()).square();
                    l = l + w1.try_div(&(t2 + sp))? * eps;
                }
                l
            }
            Lagrangian::StaticOscillator { k0 } => {
                let r2 = x[1..].iter().skip(1).fold(x[1].square(), |acc, xi| acc + xi.square());
                spatial_sq(v) - (r2 * k0 + 1.0) * v[0].square()
            }
        };
        Ok(l)
    }

    pub fn weight<S: Scalar>(&self, x: &[S], v: &[S]) -> Result<S> {
        self.weight.eval(x, v)
    }

    fn check_args(&self, x: &[f64], v: &[f64]) -> Result<()> {
        if x.len() != self.dim() || v.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected vectors of length {}, got {} and {}",
                self.dim(),
                x.len(),
                v.len()
            )));
        }
        self.check_chart(x)
    }

    fn check_nonzero(v: &[f64]) -> Result<()> {
        if v.iter().all(|c| *c == 0.0) {
            Err(Error::ZeroVector)
        } else {
            Ok(())
        }
    }

    pub fn l(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_args(x, v)?;
        self.lagrangian(x, v)
    }

    pub fn psi(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_args(x, v)?;
        Self::check_nonzero(v)?;
        self.weight(x, v)
    }

    /// `g_v = ½ ∂²L/∂v∂v`.
    pub fn fundamental_tensor(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        self.check_args(x, v)?;
        Self::check_nonzero(v)?;
        let d = self.dim();
        let point: Vec<f64> = x.iter().chain(v).copied().collect();
        let seed: Vec<bool> = (0..2 * d).map(|i| i >= d).collect();
        let vars = Jet::lift_seeded(&point, &seed, 2);
        let l = self.lagrangian(&vars[..d], &vars[d..])?;
        let mut g = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                let val = 0.5 * l.partial_vars(&[a, b])?;
                g[(a, b)] = val;
                g[(b, a)] = val;
            }
        }
        Ok(g)
    }

    /// `∂L/∂v` by jets; used for Euler-identity checks.
    pub fn lagrangian_gradient_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_args(x, v)?;
        let d = self.dim();
        let point: Vec<f64> = x.iter().chain(v).copied().collect();
        let seed: Vec<bool> = (0..2 * d).map(|i| i >= d).collect();
        let vars = Jet::lift_seeded(&point, &seed, 1);
        let l = self.lagrangian(&vars[..d], &vars[d..])?;
        Ok((0..d).map(|a| l.d1(a)).collect())
    }

    /// `∂ψ/∂v` by jets.
    pub fn weight_gradient_v(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_args(x, v)?;
        Self::check_nonzero(v)?;
        let d = self.dim();
        let point: Vec<f64> = x.iter().chain(v).copied().collect();
        let seed: Vec<bool> = (0..2 * d).map(|i| i >= d).collect();
        let vars = Jet::lift_seeded(&point, &seed, 1);
        let psi = self.weight(&vars[..d], &vars[d..])?;
        Ok((0..d).map(|a| psi.d1(a)).collect())
    }

    pub fn signature_check(&self, x: &[f64], v: &[f64]) -> Result<SignatureReport> {
        let g = self.fundamental_tensor(x, v)?;
        let eigenvalues = linalg::sym_eigenvalues(&g);
        let scale = eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        let status = if eigenvalues.iter().any(|e| e.abs() <= SIGNATURE_TOL * scale.max(1e-300)) {
            SignatureStatus::Degenerate
        } else if eigenvalues.iter().filter(|e| **e < 0.0).count() == 1 {
            SignatureStatus::Valid
        } else {
            SignatureStatus::WrongSignature
        };
        Ok(SignatureReport { status, eigenvalues })
    }

    /// Time orientation `X_M = ∂/∂x⁰`.
    pub fn orientation(&self, _x: &[f64]) -> Vec<f64> {
        let mut e0 = vec![0.0; self.dim()];
        e0[0] = 1.0;
        e0
    }

    pub fn classify(&self, x: &[f64], v: &[f64]) -> Result<(CausalType, TimeOrientation)> {
        self.check_args(x, v)?;
        let norm2: f64 = v.iter().map(|c| c * c).sum();
        if norm2 == 0.0 {
            return Ok((CausalType::Zero, TimeOrientation::NotApplicable));
        }
        let l = self.lagrangian(x, v)?;
        let kind = if l.abs() <= LIGHTLIKE_BAND * norm2 {
            CausalType::Lightlike
        } else if l < 0.0 {
            CausalType::Timelike
        } else {
            CausalType::Spacelike
        };
        let orient = match kind {
            CausalType::Spacelike | CausalType::Zero => TimeOrientation::NotApplicable,
            _ if v[0] > 0.0 => TimeOrientation::Future,
            _ => TimeOrientation::NonFuture,
        };
        Ok((kind, orient))
    }

    pub fn is_future_timelike(&self, x: &[f64], v: &[f64]) -> Result<bool> {
        Ok(self.classify(x, v)? == (CausalType::Timelike, TimeOrientation::Future))
    }

    /// `F(v) = √(−L(v))` for causal `v`.
    pub fn lorentz_norm(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let (kind, _) = self.classify(x, v)?;
        match kind {
            CausalType::Spacelike => Err(Error::InvalidArgument("spacelike vector has no Lorentz norm".into())),
            CausalType::Lightlike | CausalType::Zero => Ok(0.0),
            CausalType::Timelike => Ok((-self.lagrangian(x, v)?).sqrt()),
        }
    }

    /// Checks that `X_M` is timelike and that the sign test `v⁰ > 0, L < 0`
    /// selects the component of the timelike cone containing `X_M`, by walking
    /// straight segments from `X_M` at a few chart points.
    fn verify_cone_certificate(&self) -> Result<()> {
        let d = self.dim();
        let mut points = vec![vec![0.0; d]];
        for corner in 0..(1usize << d) {
            points.push(
                (0..d)
                    .map(|i| {
                        let (lo, hi) = self.chart[i];
                        let t = if corner >> i & 1 == 1 { 0.9 } else { 0.1 };
                        lo + t * (hi - lo)
                    })
                    .collect(),
            );
        }
        for x in &points {
            let e0 = self.orientation(x);
            if self.lagrangian(x, &e0)? >= 0.0 {
                return Err(Error::InvalidModel(format!("orientation field is not timelike at {x:?}")));
            }
            for k in 0..8 {
                let ang = std::f64::consts::TAU * k as f64 / 8.0;
                let mut dir = vec![0.0; d];
                dir[1] = ang.cos();
                if d > 2 {
                    dir[2] = ang.sin();
                }
                // largest slope still inside the cone on a coarse grid, then walk the segment
                let mut last_inside = 0.0;
                for j in 1..=40 {
                    let s = j as f64 * 0.05;
                    let w: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { s * dir[i] }).collect();
                    if self.lagrangian(x, &w)? < 0.0 {
                        last_inside = s;
                    } else {
                        break;
                    }
                }
                for j in 0..=16 {
                    let s = last_inside * j as f64 / 16.0;
                    let w: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { s * dir[i] }).collect();
                    if self.lagrangian(x, &w)? >= 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "future cone at {x:?} is not connected to the orientation field"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
