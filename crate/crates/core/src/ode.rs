//! Dormand–Prince 5(4) with its fourth-order continuous extension.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Absolute and relative tolerance.
    pub tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct Step {
    t0: f64,
    t1: f64,
    y0: Vec<f64>,
    y1: Vec<f64>,
    /// Continuous-extension coefficients.
    r: [Vec<f64>; 4],
}

/// Solution with dense output over `[t0, t_end]`.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    t0: f64,
    y0: Vec<f64>,
    steps: Vec<Step>,
    stops: Vec<(f64, Vec<f64>)>,
    pub stats: OdeStats,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(self.t0, |s| s.t1)
    }

    pub fn final_state(&self) -> &[f64] {
        self.steps.last().map_or(&self.y0, |s| &s.y1)
    }

    /// States at the requested stop times, in order; exact step endpoints.
    pub fn stops(&self) -> &[(f64, Vec<f64>)] {
        &self.stops
    }

    /// Accepted step endpoints `(t, y)` including the initial point.
    pub fn mesh(&self) -> impl Iterator<Item = (f64, &[f64])> {
        std::iter::once((self.t0, self.y0.as_slice())).chain(self.steps.iter().map(|s| (s.t1, s.y1.as_slice())))
    }

    /// Dense output; `t` is clamped to the solution span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.steps.is_empty() {
            return self.y0.clone();
        }
        let idx = self.steps.partition_point(|s| s.t1 < t).min(self.steps.len() - 1);
        let s = &self.steps[idx];
        let th = ((t - s.t0) / (s.t1 - s.t0)).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r2, r3, r4, r5] = &s.r;
        (0..s.y0.len())
            .map(|i| s.y0[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`, landing exactly on every
/// time in `stops` (sorted, inside `(t0, t_end]`). `on_accept` sees each
/// accepted step endpoint and may abort the integration.
pub fn integrate<F, C>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    stops: &[f64],
    opts: &OdeOptions,
    mut on_accept: C,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    C: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(format!("empty span [{t0}, {t_end}]")));
    }
    if stops.windows(2).any(|w| w[1] < w[0]) || stops.iter().any(|s| *s <= t0 || *s > t_end) {
        return Err(Error::InvalidArgument("stops must be sorted inside (t0, t_end]".into()));
    }
    let n = y0.len();
    let tol = opts.tol;
    let mut stats = OdeStats::default();
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut t = t0;
    let mut y = y0.to_vec();
    f(t, &y, &mut k[0])?;
    stats.evaluations += 1;

    let scale = |a: &[f64], b: &[f64], i: usize| tol + tol * a[i].abs().max(b[i].abs());

    // starting step
    let span = t_end - t0;
    let mut h = {
        let sc: Vec<f64> = (0..n).map(|i| tol + tol * y[i].abs()).collect();
        let d0 = rms(&y.iter().zip(&sc).map(|(a, s)| a / s).collect::<Vec<_>>());
        let d1 = rms(&k[0].iter().zip(&sc).map(|(a, s)| a / s).collect::<Vec<_>>());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for i in 0..n {
            ytmp[i] = y[i] + h0 * k[0][i];
        }
        f(t + h0, &ytmp, &mut k[1])?;
        stats.evaluations += 1;
        let d2 = rms(&(0..n).map(|i| (k[1][i] - k[0][i]) / sc[i]).collect::<Vec<_>>()) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(opts.max_step).min(span)
    };

    let mut steps: Vec<Step> = Vec::new();
    let mut stop_vals = Vec::with_capacity(stops.len());
    let mut next_stop = 0;
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator {
                t,
                reason: format!("step limit {} reached", opts.max_steps),
            });
        }
        let target = if next_stop < stops.len() { stops[next_stop] } else { t_end };
        let mut hstep = h.min(opts.max_step);
        let mut lands = false;
        if t + hstep >= target || (target - t - hstep) < 1e-12 * target.abs().max(1.0) {
            hstep = target - t;
            lands = true;
        }
        if hstep <= 1e-14 * t.abs().max(1.0) && !lands {
            return Err(Error::Integrator {
                t,
                reason: "step size underflow".into(),
            });
        }

        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        for i in 0..n {
            ytmp[i] = y[i] + hstep * A21 * k1[i];
        }
        f(t + C2 * hstep, &ytmp, &mut rest[0])?;
        for i in 0..n {
            ytmp[i] = y[i] + hstep * (A31 * k1[i] + A32 * rest[0][i]);
        }
        f(t + C3 * hstep, &ytmp, &mut rest[1])?;
        for i in 0..n {
            ytmp[i] = y[i] + hstep * (A41 * k1[i] + A42 * rest[0][i] + A43 * rest[1][i]);
        }
        f(t + C4 * hstep, &ytmp, &mut rest[2])?;
        for i in 0..n {
            ytmp[i] = y[i] + hstep * (A51 * k1[i] + A52 * rest[0][i] + A53 * rest[1][i] + A54 * rest[2][i]);
        }
        f(t + C5 * hstep, &ytmp, &mut rest[3])?;
        for i in 0..n {
            ytmp[i] = y[i]
                + hstep * (A61 * k1[i] + A62 * rest[0][i] + A63 * rest[1][i] + A64 * rest[2][i] + A65 * rest[3][i]);
        }
        f(t + hstep, &ytmp, &mut rest[4])?;
        for i in 0..n {
            ynew[i] = y[i]
                + hstep * (A71 * k1[i] + A73 * rest[1][i] + A74 * rest[2][i] + A75 * rest[3][i] + A76 * rest[4][i]);
        }
        let t_new = if lands { target } else { t + hstep };
        f(t_new, &ynew, &mut rest[5])?;
        stats.evaluations += 6;

        for i in 0..n {
            let e = hstep
                * (E1 * k1[i] + E3 * rest[1][i] + E4 * rest[2][i] + E5 * rest[3][i] + E6 * rest[4][i]
                    + E7 * rest[5][i]);
            err[i] = e / scale(&y, &ynew, i);
        }
        let enorm = rms(&err);
        if !enorm.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h = hstep * 0.2;
            last_rejected = true;
            continue;
        }
        if enorm <= 1.0 {
            on_accept(t_new, &ynew)?;
            stats.accepted += 1;
            let mut r2 = vec![0.0; n];
            let mut r3 = vec![0.0; n];
            let mut r4 = vec![0.0; n];
            let mut r5 = vec![0.0; n];
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = hstep * k[0][i] - dy;
                r2[i] = dy;
                r3[i] = bspl;
                r4[i] = dy - hstep * k[6][i] - bspl;
                r5[i] = hstep
                    * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            }
            steps.push(Step {
                t0: t,
                t1: t_new,
                y0: y.clone(),
                y1: ynew.clone(),
                r: [r2, r3, r4, r5],
            });
            t = t_new;
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            if lands && next_stop < stops.len() {
                while next_stop < stops.len() && stops[next_stop] <= t {
                    stop_vals.push((stops[next_stop], y.clone()));
                    next_stop += 1;
                }
            }
            let mut fac = 0.9 * enorm.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
            h = hstep * fac;
            if lands {
                // a forced landing says nothing about the natural step
                h = h.max(hstep);
            }
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (0.9 * enorm.powf(-0.2)).clamp(0.2, 1.0);
            h = hstep * fac;
            last_rejected = true;
        }
    }

    Ok(OdeSolution {
        t0,
        y0: y0.to_vec(),
        steps,
        stops: stop_vals,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_check(_: f64, _: &[f64]) -> Result<()> {
        Ok(())
    }

    #[test]
    fn harmonic_oscillator() {
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[0.0, 1.0],
            10.0,
            &[1.0, 2.5],
            &OdeOptions::with_tol(1e-12),
            no_check,
        )
        .unwrap();
        let yf = sol.final_state();
        assert!((yf[0] - 10f64.sin()).abs() < 1e-10);
        assert_eq!(sol.stops().len(), 2);
        assert_eq!(sol.stops()[1].0, 2.5);
        assert!((sol.stops()[1].1[0] - 2.5f64.sin()).abs() < 1e-11);
        for t in [0.37, 3.3, 7.77, 9.99] {
            let mid = sol.eval(t);
            assert!((mid[0] - t.sin()).abs() < 1e-10, "{t}");
            assert!((mid[1] - t.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let run = |tol| {
            let sol = integrate(
                |t, y, dy| {
                    dy[0] = y[0] * t.cos();
                    Ok(())
                },
                0.0,
                &[1.0],
                5.0,
                &[],
                &OdeOptions::with_tol(tol),
                no_check,
            )
            .unwrap();
            (sol.final_state()[0] - 5f64.sin().exp()).abs()
        };
        assert!(run(1e-10) < run(1e-6));
        assert!(run(1e-10) < 1e-8);
    }

    #[test]
    fn callback_aborts() {
        let res = integrate(
            |_, _, dy| {
                dy[0] = 1.0;
                Ok(())
            },
            0.0,
            &[0.0],
            2.0,
            &[],
            &OdeOptions::default(),
            |t, y| if y[0] > 1.0 { Err(Error::ConeExit { t }) } else { Ok(()) },
        );
        assert!(matches!(res, Err(Error::ConeExit { .. })));
    }
}
