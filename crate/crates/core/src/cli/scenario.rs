//! Scenario files (TOML).
//!
//! ```toml
//! [model]
//! name = "minkowski"
//! n = 2
//!
//! [sclv]
//! apex = [0.0, 0.0, 0.0]
//! patch = { radius = 0.5 }
//! cut = { kind = "constant", b = 1.0 }
//!
//! [checks.bg]
//! N = 4.0
//! pairs = [[0.5, 1.0]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comparison::{
    BallOptions, BgInfOptions, BgOptions, GuntherOptions, OracleResolution, QuadratureResolution, SclvSpec,
    StudyOptions, Tolerances,
};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    pub sclv: SclvSpec,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default)]
    pub validate: ValidateOptions,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg: Option<BgOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gunther: Option<GuntherOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_inf: Option<BgInfOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallOptions>,
}

impl Checks {
    pub fn is_empty(&self) -> bool {
        self.bg.is_none() && self.gunther.is_none() && self.bg_inf.is_none() && self.ball.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub study: StudyOptions,
    pub quadrature: QuadratureResolution,
    /// Resolution of the coordinate-space volume cross-check, when enabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleResolution>,
}

/// A single radial geodesic for the `curvature`, `geodesic` and `jacobi`
/// subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Probe {
    /// Chart parameters of the direction (default: the patch centre).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    /// Default: the cut value of the direction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub samples: usize,
    /// Effective dimensions for `Ric_N` and `h`; `N = ∞` is spelled `"inf"`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dims: Vec<crate::curvature::EffectiveDim>,
    /// Comparison constant for `f = det A / s_{−c}^n`.
    pub c: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            params: None,
            t_end: None,
            samples: 101,
            dims: Vec::new(),
            c: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateOptions {
    pub samples: usize,
    /// Half width of the box around the apex where base points are drawn.
    pub box_half_width: f64,
    /// Largest Euclidean speed `|v⃗|/v⁰` of sampled directions.
    pub max_speed: f64,
    /// Allowed relative error of the homogeneity and metric identities.
    pub tolerance: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            box_half_width: 1.0,
            max_speed: 0.9,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Output directory, relative to the scenario file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("scenario: {e}")))?;
        if s.sclv.patch.center.is_empty() {
            s.sclv.patch.center = vec![0.0; s.model.n];
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks that do not need a model evaluation.
    pub fn validate(&self) -> Result<()> {
        let st = &self.numerics.study;
        if !(st.ode_tol > 0.0 && st.ode_tol < 1e-2) {
            return Err(Error::InvalidArgument(format!("ode_tol = {} must lie in (0, 1e-2)", st.ode_tol)));
        }
        if st.check_points < 10 || st.time_nodes < 2 {
            return Err(Error::InvalidArgument("need check_points >= 10 and time_nodes >= 2".into()));
        }
        let q = &self.numerics.quadrature;
        if q.radial == 0 || q.polar == 0 || q.azimuthal < 3 {
            return Err(Error::InvalidArgument("quadrature needs radial, polar >= 1 and azimuthal >= 3".into()));
        }
        if self.probe.samples < 2 {
            return Err(Error::InvalidArgument("probe.samples must be at least 2".into()));
        }
        let v = &self.validate;
        if !(v.box_half_width > 0.0 && v.max_speed > 0.0 && v.max_speed < 1.0 && v.tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "validate needs box_half_width > 0, max_speed in (0, 1) and tolerance > 0".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
[model]
name = "quartic_finsler"
n = 2
eps = 0.05
scale = { kind = "exp", h = 0.1 }
weight = { k = 0.2, beta = 0.1 }

[sclv]
apex = [0.0, 0.0, 0.0]
patch = { center = [0.1, 0.0], radius = 0.4 }
cut = { kind = "profile", base = 1.0, slope = 0.2 }

[checks.bg]
N = 4.0
pairs = [[0.5, 1.0], [0.25, 0.75]]
c = -0.5

[checks.gunther]

[checks.bg_inf]
pairs = [[0.5, 1.0]]
a = 0.1

[checks.ball]
eps = 0.05
radii = [0.3, 0.6]

[numerics.study]
ode_tol = 1e-9
riemann = "finite_difference"

[numerics.quadrature]
radial = 4
polar = 3
azimuthal = 6

[probe]
params = [0.2, 1.0]
dims = [3.0, "inf"]

[output]
dir = "out"
"#;

    #[test]
    fn round_trip_is_lossless() {
        let s = Scenario::parse(FULL).unwrap();
        let back = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.checks.bg.as_ref().unwrap().big_n, 4.0);
        assert_eq!(s.probe.dims.len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = FULL.replace("eps = 0.05\n", "eps = 0.05\ncolour = 3\n");
        assert!(Scenario::parse(&bad).is_err());
        let bad = FULL.replace("[checks.gunther]", "[checks.gunther]\nkk = 1.0");
        assert!(Scenario::parse(&bad).is_err());
        let bad = FULL.replace("[probe]", "[probe]\nsteps = 3");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::parse(
            "[model]\nname = \"minkowski\"\nn = 1\n[sclv]\napex = [0.0, 0.0]\npatch = { radius = 0.3 }\ncut = { kind = \"constant\", b = 1.0 }\n",
        )
        .unwrap();
        assert!(s.checks.is_empty());
        assert_eq!(s.numerics.study, StudyOptions::default());
        assert_eq!(s.validate.samples, 1000);
    }
}
