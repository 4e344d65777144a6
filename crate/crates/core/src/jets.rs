//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients of a scalar function of `dim`
//! variables up to total degree `order`. Coefficients are laid out in graded
//! lexicographic order, so the jet of order `k - 1` is a prefix of the jet of
//! order `k`. Every table needed for arithmetic lives in a shared
//! [`JetSpace`], built once per `(dim, order)` and cached.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

/// Default relative tolerance below which a divisor's constant term is treated as zero.
pub const DEFAULT_DIV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("singular division: constant term {value:e} is below tolerance {tol:e}")]
    SingularDivision { value: f64, tol: f64 },
    #[error("{func} is undefined at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("requested derivative of order {requested} exceeds jet order {order}")]
    OrderExceeded { requested: usize, order: usize },
    #[error("jet spaces differ: ({0}, {1}) vs ({2}, {3})")]
    SpaceMismatch(usize, usize, usize, usize),
}

/// Index tables for jets of a fixed dimension and order.
pub struct JetSpace {
    dim: usize,
    order: usize,
    exps: Vec<u8>,
    degree_start: Vec<usize>,
    lookup: HashMap<Vec<u8>, usize>,
    raise: Vec<u32>,
    mul_offsets: Vec<u32>,
    mul_pairs: Vec<(u32, u32)>,
    factorial: Vec<f64>,
}

const NONE: u32 = u32::MAX;

impl JetSpace {
    fn build(dim: usize, order: usize) -> Self {
        let mut exps: Vec<u8> = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        let mut current = vec![0u8; dim];
        for deg in 0..=order {
            degree_start.push(exps.len() / dim.max(1));
            push_compositions(deg, 0, dim, &mut current, &mut exps);
        }
        let len = if dim == 0 { 1 } else { exps.len() / dim };
        degree_start.push(len);

        let mut lookup = HashMap::with_capacity(len);
        for k in 0..len {
            lookup.insert(exps[k * dim..(k + 1) * dim].to_vec(), k);
        }

        let mut raise = vec![NONE; len * dim];
        let mut scratch = vec![0u8; dim];
        for k in 0..len {
            scratch.copy_from_slice(&exps[k * dim..(k + 1) * dim]);
            for d in 0..dim {
                scratch[d] += 1;
                if let Some(&idx) = lookup.get(&scratch) {
                    raise[k * dim + d] = idx as u32;
                }
                scratch[d] -= 1;
            }
        }

        // For each output multi-index k, every split k = i + j.
        let mut mul_offsets = Vec::with_capacity(len + 1);
        let mut mul_pairs = Vec::new();
        let mut part = vec![0u8; dim];
        for k in 0..len {
            mul_offsets.push(mul_pairs.len() as u32);
            let target = &exps[k * dim..(k + 1) * dim];
            part.iter_mut().for_each(|p| *p = 0);
            loop {
                let rest: Vec<u8> = target.iter().zip(&part).map(|(t, p)| t - p).collect();
                let i = lookup[&part];
                let j = lookup[&rest];
                mul_pairs.push((i as u32, j as u32));
                // odometer over 0..=target[d]
                let mut d = 0;
                while d < dim {
                    if part[d] < target[d] {
                        part[d] += 1;
                        break;
                    }
                    part[d] = 0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
        }
        mul_offsets.push(mul_pairs.len() as u32);

        let factorial = (0..len)
            .map(|k| {
                exps[k * dim..(k + 1) * dim]
                    .iter()
                    .map(|&e| (1..=e as u64).product::<u64>() as f64)
                    .product()
            })
            .collect();

        Self {
            dim,
            order,
            exps,
            degree_start,
            lookup,
            raise,
            mul_offsets,
            mul_pairs,
            factorial,
        }
    }

    /// Shared space for `(dim, order)`.
    pub fn get(dim: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(space) = cache.read().expect("jet cache poisoned").get(&(dim, order)) {
            return Arc::clone(space);
        }
        let built = Arc::new(JetSpace::build(dim, order));
        let mut guard = cache.write().expect("jet cache poisoned");
        Arc::clone(guard.entry((dim, order)).or_insert(built))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients, `binomial(dim + order, order)`.
    pub fn len(&self) -> usize {
        self.degree_start[self.order + 1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of coefficients of total degree at most `order`.
    pub fn len_upto(&self, order: usize) -> usize {
        self.degree_start[order.min(self.order) + 1]
    }

    pub fn multi_index(&self, k: usize) -> &[u8] {
        &self.exps[k * self.dim..(k + 1) * self.dim]
    }

    pub fn index_of(&self, multi: &[u8]) -> Option<usize> {
        if multi.len() != self.dim {
            return None;
        }
        self.lookup.get(multi).copied()
    }

    /// Constant jet in this space.
    pub fn constant(self: &Arc<Self>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; self.len()];
        coeffs[0] = value;
        Jet {
            space: Arc::clone(self),
            coeffs,
        }
    }

    /// Jet of the coordinate function `x_var` evaluated at `value`.
    pub fn variable(self: &Arc<Self>, var: usize, value: f64) -> Jet {
        let mut jet = self.constant(value);
        if self.order >= 1 {
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }
}

fn push_compositions(remaining: usize, pos: usize, dim: usize, current: &mut [u8], out: &mut Vec<u8>) {
    if dim == 0 {
        return;
    }
    if pos == dim - 1 {
        current[pos] = remaining as u8;
        out.extend_from_slice(current);
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e as u8;
        push_compositions(remaining - e, pos + 1, dim, current, out);
    }
    current[pos] = 0;
}

/// A truncated Taylor expansion.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.space.dim)
            .field("order", &self.space.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.space.dim == other.space.dim
            && self.space.order == other.space.order
            && self.coeffs == other.coeffs
    }
}

impl Jet {
    /// One jet per coordinate of `point`, all variables active.
    pub fn lift(point: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::get(point.len(), order);
        point
            .iter()
            .enumerate()
            .map(|(i, &p)| space.variable(i, p))
            .collect()
    }

    /// Lift with only the `seed`-marked coordinates active; the others become
    /// constants. The jet dimension is the number of active coordinates.
    pub fn lift_seeded(point: &[f64], seed: &[bool], order: usize) -> Vec<Jet> {
        assert_eq!(point.len(), seed.len(), "seed mask length mismatch");
        let dim = seed.iter().filter(|&&s| s).count();
        let space = JetSpace::get(dim, order);
        let mut slot = 0;
        point
            .iter()
            .zip(seed)
            .map(|(&p, &active)| {
                if active {
                    slot += 1;
                    space.variable(slot - 1, p)
                } else {
                    space.constant(p)
                }
            })
            .collect()
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Constant jet living in the same space as `self`.
    pub fn constant_like(&self, value: f64) -> Jet {
        self.space.constant(value)
    }

    /// Taylor coefficient for `multi`.
    pub fn coeff(&self, multi: &[u8]) -> Option<f64> {
        self.space.index_of(multi).map(|k| self.coeffs[k])
    }

    /// True partial derivative `∂^|idx| f / ∂x^idx`.
    pub fn partial(&self, idx: &[u8]) -> Result<f64, JetError> {
        let total: usize = idx.iter().map(|&e| e as usize).sum();
        if total > self.space.order {
            return Err(JetError::OrderExceeded {
                requested: total,
                order: self.space.order,
            });
        }
        let k = self
            .space
            .index_of(idx)
            .expect("multi-index of admissible degree must exist");
        Ok(self.coeffs[k] * self.space.factorial[k])
    }

    /// Partial derivative with respect to a list of variables (repetition allowed).
    pub fn partial_vars(&self, vars: &[usize]) -> Result<f64, JetError> {
        let mut idx = vec![0u8; self.space.dim];
        for &v in vars {
            idx[v] += 1;
        }
        self.partial(&idx)
    }

    /// First partial derivative with respect to `var`.
    pub fn d1(&self, var: usize) -> f64 {
        if self.space.order == 0 {
            return 0.0;
        }
        self.coeffs[1 + var]
    }

    /// Drop every coefficient above total degree `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.space.order {
            return self.clone();
        }
        let space = JetSpace::get(self.space.dim, order);
        let coeffs = self.coeffs[..space.len()].to_vec();
        Jet { space, coeffs }
    }

    /// Exact derivative of the truncated polynomial, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        let order = self.space.order;
        if order == 0 {
            return self.clone();
        }
        let lower = JetSpace::get(self.space.dim, order - 1);
        let dim = self.space.dim;
        let coeffs = (0..lower.len())
            .map(|k| {
                let up = self.space.raise[k * dim + var];
                let e = self.space.exps[k * dim + var] as f64 + 1.0;
                e * self.coeffs[up as usize]
            })
            .collect();
        Jet {
            space: lower,
            coeffs,
        }
    }

    fn check_space(&self, other: &Jet) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space)
                || (self.space.dim == other.space.dim && self.space.order == other.space.order),
            "{}",
            JetError::SpaceMismatch(
                self.space.dim,
                self.space.order,
                other.space.dim,
                other.space.order
            )
        );
    }

    fn mul_ref(&self, rhs: &Jet) -> Jet {
        self.check_space(rhs);
        let sp = &self.space;
        let a = &self.coeffs;
        let b = &rhs.coeffs;
        let mut out = vec![0.0; sp.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            let lo = sp.mul_offsets[k] as usize;
            let hi = sp.mul_offsets[k + 1] as usize;
            let mut acc = 0.0;
            for &(i, j) in &sp.mul_pairs[lo..hi] {
                acc += a[i as usize] * b[j as usize];
            }
            *slot = acc;
        }
        Jet {
            space: Arc::clone(sp),
            coeffs: out,
        }
    }

    /// `self / rhs` with the default singularity tolerance.
    pub fn try_div(&self, rhs: &Jet) -> Result<Jet, JetError> {
        self.try_div_tol(rhs, DEFAULT_DIV_TOL)
    }

    /// `self / rhs`; fails when `|rhs₀| <= tol · max(1, |rhs|∞)`.
    pub fn try_div_tol(&self, rhs: &Jet, tol: f64) -> Result<Jet, JetError> {
        self.check_space(rhs);
        let b = &rhs.coeffs;
        let scale = b.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        if b[0].abs() <= tol * scale {
            return Err(JetError::SingularDivision {
                value: b[0],
                tol: tol * scale,
            });
        }
        let sp = &self.space;
        let inv_b0 = 1.0 / b[0];
        let mut c = vec![0.0; sp.len()];
        for k in 0..sp.len() {
            let lo = sp.mul_offsets[k] as usize;
            let hi = sp.mul_offsets[k + 1] as usize;
            let mut acc = self.coeffs[k];
            for &(i, j) in &sp.mul_pairs[lo..hi] {
                if i != 0 {
                    acc -= b[i as usize] * c[j as usize];
                }
            }
            c[k] = acc * inv_b0;
        }
        Ok(Jet {
            space: Arc::clone(sp),
            coeffs: c,
        })
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        self.constant_like(1.0).try_div(self)
    }

    /// Compose with a univariate function given its Taylor coefficients
    /// `f(a₀ + h) = Σ series[m] hᵐ`.
    fn compose(&self, series: &[f64]) -> Jet {
        let order = self.space.order;
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = self.constant_like(series[order.min(series.len() - 1)]);
        for m in (0..order).rev() {
            acc = acc.mul_ref(&h);
            acc.coeffs[0] += series[m];
        }
        if order == 0 {
            acc.coeffs[0] = series[0];
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let series: Vec<f64> = (0..=self.order()).map(|m| e / fact(m)).collect();
        self.compose(&series)
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(JetError::Domain { func: "ln", value: a });
        }
        let mut series = vec![a.ln()];
        for m in 1..=self.order() {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign / (m as f64 * a.powi(m as i32)));
        }
        Ok(self.compose(&series))
    }

    /// `self^p` for a real exponent; requires a positive constant term unless
    /// `p` is a nonnegative integer.
    pub fn powf(&self, p: f64) -> Result<Jet, JetError> {
        let a = self.value();
        let integral = p.fract() == 0.0 && p >= 0.0;
        if a <= 0.0 && !integral {
            return Err(JetError::Domain { func: "powf", value: a });
        }
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut falling = 1.0;
        for m in 0..=self.order() {
            let term = if integral && (m as f64) > p {
                0.0
            } else {
                falling * a.powf(p - m as f64) / fact(m)
            };
            series.push(term);
            falling *= p - m as f64;
        }
        Ok(self.compose(&series))
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(JetError::Domain { func: "sqrt", value: a });
        }
        self.powf(0.5)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let series: Vec<f64> = (0..=self.order()).map(|m| cycle[m % 4] / fact(m)).collect();
        self.compose(&series)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let series: Vec<f64> = (0..=self.order()).map(|m| cycle[m % 4] / fact(m)).collect();
        self.compose(&series)
    }

    pub fn sinh(&self) -> Jet {
        let a = self.value();
        let cycle = [a.sinh(), a.cosh()];
        let series: Vec<f64> = (0..=self.order()).map(|m| cycle[m % 2] / fact(m)).collect();
        self.compose(&series)
    }

    pub fn cosh(&self) -> Jet {
        let a = self.value();
        let cycle = [a.cosh(), a.sinh()];
        let series: Vec<f64> = (0..=self.order()).map(|m| cycle[m % 2] / fact(m)).collect();
        self.compose(&series)
    }

    pub fn scale(mut self, c: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|x| *x *= c);
        self
    }
}

fn fact(m: usize) -> f64 {
    (1..=m as u64).product::<u64>() as f64
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.check_space(rhs);
                let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a $op b).collect();
                Jet { space: Arc::clone(&self.space), coeffs }
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(mut self, rhs: Jet) -> Jet {
                self.check_space(&rhs);
                self.coeffs.iter_mut().zip(&rhs.coeffs).for_each(|(a, b)| *a = *a $op b);
                self
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(mut self, rhs: &Jet) -> Jet {
                self.check_space(rhs);
                self.coeffs.iter_mut().zip(&rhs.coeffs).for_each(|(a, b)| *a = *a $op b);
                self
            }
        }
        impl $trait<f64> for Jet {
            type Output = Jet;
            fn $method(mut self, rhs: f64) -> Jet {
                self.coeffs[0] = self.coeffs[0] $op rhs;
                self
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_ref(rhs)
    }
}

impl Mul<Jet> for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.mul_ref(&rhs)
    }
}

impl Mul<&Jet> for Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_ref(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Numeric type the geometric formulas are written against: plain `f64` for
/// evaluation, [`Jet`] for derivatives.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
    fn constant_like(&self, c: f64) -> Self;
    fn try_div(&self, rhs: &Self) -> Result<Self, JetError>;
    fn try_sqrt(&self) -> Result<Self, JetError>;
    fn try_ln(&self) -> Result<Self, JetError>;
    fn try_powf(&self, p: f64) -> Result<Self, JetError>;
    fn exp(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn constant_like(&self, c: f64) -> Self {
        Jet::constant_like(self, c)
    }
    fn try_div(&self, rhs: &Self) -> Result<Self, JetError> {
        Jet::try_div(self, rhs)
    }
    fn try_sqrt(&self) -> Result<Self, JetError> {
        self.sqrt()
    }
    fn try_ln(&self) -> Result<Self, JetError> {
        self.ln()
    }
    fn try_powf(&self, p: f64) -> Result<Self, JetError> {
        self.powf(p)
    }
    fn exp(&self) -> Self {
        Jet::exp(self)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn sinh(&self) -> Self {
        Jet::sinh(self)
    }
    fn cosh(&self) -> Self {
        Jet::cosh(self)
    }
    fn square(&self) -> Self {
        self.mul_ref(self)
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn try_div(&self, rhs: &Self) -> Result<Self, JetError> {
        let tol = DEFAULT_DIV_TOL * rhs.abs().max(1.0);
        if rhs.abs() <= tol {
            return Err(JetError::SingularDivision { value: *rhs, tol });
        }
        Ok(self / rhs)
    }
    fn try_sqrt(&self) -> Result<Self, JetError> {
        if *self < 0.0 {
            return Err(JetError::Domain { func: "sqrt", value: *self });
        }
        Ok(f64::sqrt(*self))
    }
    fn try_ln(&self) -> Result<Self, JetError> {
        if *self <= 0.0 {
            return Err(JetError::Domain { func: "ln", value: *self });
        }
        Ok(f64::ln(*self))
    }
    fn try_powf(&self, p: f64) -> Result<Self, JetError> {
        if *self < 0.0 && p.fract() != 0.0 {
            return Err(JetError::Domain { func: "powf", value: *self });
        }
        Ok(f64::powf(*self, p))
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
}
