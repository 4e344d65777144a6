//! Volumes of radial sets by the polar decomposition
//! `ρ(U) = ∫ ∫₀^{b(v)} e^{−ψ} det A dt dσ(v)`.

use serde::Serialize;

use super::quadrature::gauss_legendre;
use super::DirectionRun;
use crate::error::{Error, Result};

/// Per-direction radial upper limit as a function of the cut `b(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialLimit {
    /// `b(v)`: the whole set.
    Full,
    /// `r·b(v)`: the set scaled by `r`.
    Scaled(f64),
    /// `min(r, b(v))`: the part of the set with `F < r`.
    Capped(f64),
}

impl RadialLimit {
    pub fn upper(&self, cut: f64) -> f64 {
        match *self {
            RadialLimit::Full => cut,
            RadialLimit::Scaled(r) => r * cut,
            RadialLimit::Capped(r) => r.min(cut),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Difference to the run with half the time nodes.
    pub error: f64,
}

/// Time nodes needed along a direction with cut `cut` to integrate up to
/// every limit in `limits` with `m` and `m/2` Gauss nodes.
pub fn volume_times(cut: f64, limits: &[RadialLimit], m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for u in limits.iter().map(|l| l.upper(cut)) {
        for k in [m, (m / 2).max(1)] {
            out.extend(gauss_legendre(k, 0.0, u).into_iter().map(|(t, _)| t));
        }
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    out
}

fn lookup(run: &DirectionRun, t: f64) -> Result<f64> {
    let vol = &run.path.volume;
    let idx = vol.partition_point(|s| s.t < t * (1.0 - 1e-12));
    match vol.get(idx) {
        Some(s) if (s.t - t).abs() <= 1e-12 * t.max(1.0) => Ok((-s.psi).exp() * s.det),
        _ => Err(Error::InvalidArgument(format!(
            "direction {} has no volume sample at t = {t}",
            run.node.id
        ))),
    }
}

/// `∫₀^{upper} e^{−ψ} det A dt` along one direction with `m` Gauss nodes.
pub fn radial_integral(run: &DirectionRun, upper: f64, m: usize) -> Result<f64> {
    let mut sum = 0.0;
    for (t, w) in gauss_legendre(m, 0.0, upper) {
        sum += w * lookup(run, t)?;
    }
    Ok(sum)
}

/// Polar volume with per-direction upper limit `limit`.
pub fn radial_volume(runs: &[DirectionRun], limit: RadialLimit, m: usize) -> Result<VolumeEstimate> {
    let mut full = 0.0;
    let mut half = 0.0;
    for run in runs {
        let u = limit.upper(run.node.cut);
        if u > run.node.cut * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "radial limit {u} exceeds the cut {} of direction {}",
                run.node.cut, run.node.id
            )));
        }
        full += run.node.weight * radial_integral(run, u, m)?;
        half += run.node.weight * radial_integral(run, u, (m / 2).max(1))?;
    }
    Ok(VolumeEstimate {
        value: full,
        error: (full - half).abs(),
    })
}

/// `ρ(U_x(r))`: the set scaled by `r ∈ (0, 1]`.
pub fn sclv_volume(runs: &[DirectionRun], r: f64, m: usize) -> Result<VolumeEstimate> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale r = {r} must lie in (0, 1]")));
    }
    radial_volume(runs, RadialLimit::Scaled(r), m)
}
