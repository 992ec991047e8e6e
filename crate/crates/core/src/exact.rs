//! Exact coalescence-time distributions via generating-function integrals.
//!
//! Sample `i` individuals without replacement from generation `n`. The chance
//! that they first share an ancestor at generation m (or never do) reduces to
//! one-dimensional integrals over [0, 1] whose integrands are built from the
//! n-fold iterates of the offspring generating function, the immigration
//! generating function, and their derivatives. One integral per immigrant
//! cohort covers coalescence at an immigrant; one more integral per threshold
//! m covers coalescence at a generation-m native.

use rayon::prelude::*;

use crate::dist::{eval_poly, poly_derivative, DistSpec, ModelSpec};
use crate::error::Error;
use crate::jet::{apply_poly, factorial, iterate_pgf, Jet};
use crate::quad::{self, QuadResult};

/// Differences smaller than this below zero are rounding debris and get
/// clamped; anything larger means the quadrature lied about its accuracy.
pub const CLAMP_FLOOR: f64 = -1e-10;

/// A distribution request: `i` individuals sampled from generation `n`.
#[derive(Debug, Clone)]
pub struct CoalescenceQuery {
    model: ModelSpec,
    n: u32,
    i: u32,
}

impl CoalescenceQuery {
    pub fn new(model: ModelSpec, n: u32, i: u32) -> Result<Self, Error> {
        if i < 2 {
            return Err(Error::DomainError(format!("sample size i = {i} must be at least 2")));
        }
        if n < i {
            return Err(Error::DomainError(format!(
                "generation n = {n} must be at least the sample size i = {i}"
            )));
        }
        if i > 20 {
            return Err(Error::DomainError(format!(
                "sample size i = {i} exceeds the supported maximum of 20"
            )));
        }
        Ok(Self { model, n, i })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn i(&self) -> u32 {
        self.i
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Absolute tolerance per integral.
    pub tol: f64,
    pub max_panels: u32,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_panels: 8192 }
    }
}

/// The full law of the coalescence time: `tail[m] = P(m <= time < infinity)`
/// for m in 0..n, `pmf[m] = P(time = m)`, and the defect `p_infinity` carried
/// by samples whose members descend from distinct immigrants.
#[derive(Debug, Clone)]
pub struct CoalescenceDistribution {
    pub n: u32,
    pub i: u32,
    pub pmf: Vec<f64>,
    pub tail: Vec<f64>,
    pub p_infinity: f64,
    /// Summed error estimates of every quadrature behind this distribution.
    pub quadrature_error: f64,
}

// ── integrands ──────────────────────────────────────────────────────────────

/// Product of strictly positive factors accumulated in log space; a single
/// zero factor short-circuits the whole product to zero. Factors here are
/// sums and products of nonnegative series coefficients, so negative inputs
/// cannot occur.
struct LogProduct {
    ln_sum: f64,
    zero: bool,
}

impl LogProduct {
    fn new() -> Self {
        Self { ln_sum: 0.0, zero: false }
    }

    fn mul(&mut self, factor: f64) {
        debug_assert!(factor >= 0.0, "negative integrand factor {factor}");
        if factor <= 0.0 {
            self.zero = true;
        } else {
            self.ln_sum += factor.ln();
        }
    }

    fn mul_pow(&mut self, factor: f64, exponent: u32) {
        if exponent == 0 {
            return;
        }
        debug_assert!(factor >= 0.0, "negative integrand factor {factor}");
        if factor <= 0.0 {
            self.zero = true;
        } else {
            self.ln_sum += exponent as f64 * factor.ln();
        }
    }

    fn value(&self) -> f64 {
        if self.zero {
            0.0
        } else {
            self.ln_sum.exp()
        }
    }
}

/// Values f_1(z), ..., f_n(z) of the iterated offspring generating function;
/// entry 0 is z itself.
fn iterate_values(f: &DistSpec, n: u32, z: f64) -> Vec<f64> {
    let mut vals = Vec::with_capacity(n as usize + 1);
    vals.push(z);
    for l in 0..n as usize {
        vals.push(eval_poly(f.poly(), vals[l]));
    }
    vals
}

fn check_z(z: f64) -> Result<(), Error> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::DomainError(format!("quadrature point {z} outside [0, 1]")));
    }
    Ok(())
}

/// Integrand of the term for coalescence at an immigrant whose subtree is
/// k generations old:
/// `(1-z)^(i-1) f_k^(i)(z) g'(f_k(z)) prod_{l != k} g(f_l(z))`.
/// The 1/(i-1)! prefactor in front of the integral is applied by the callers.
pub fn integrand_immigrant_term(
    model: &ModelSpec,
    n: u32,
    i: u32,
    k: u32,
    z: f64,
) -> Result<f64, Error> {
    if k == 0 || k > n {
        return Err(Error::DomainError(format!("immigrant term k = {k} outside 1..={n}")));
    }
    if i == 0 {
        return Err(Error::DomainError("sample size i must be at least 1".into()));
    }
    check_z(z)?;
    Ok(immigrant_integrand_raw(model, n, i, k, z))
}

fn immigrant_integrand_raw(model: &ModelSpec, n: u32, i: u32, k: u32, z: f64) -> f64 {
    let f = model.offspring();
    let g = model.immigration();
    let vals = iterate_values(f, n, z);

    let mut prod = LogProduct::new();
    prod.mul_pow(1.0 - z, i - 1);
    let fk_i = iterate_pgf(f, k, z, i).and_then(|u| u.derivative(i)).expect("jet within order");
    prod.mul(fk_i);
    prod.mul(eval_poly(&poly_derivative(g.poly(), 1), vals[k as usize]));
    for (l, &v) in vals.iter().enumerate().skip(1) {
        if l != k as usize {
            prod.mul(eval_poly(g.poly(), v));
        }
    }
    prod.value()
}

/// Integrand of the term for coalescence at a generation-m native:
/// `(1-z)^(i-1) f_(n-m)^(i)(z) phi_m'(f_(n-m)(z)) prod_{l=1}^{n-m} g(f_l(z))`
/// where phi_m is the generating function of the generation-m population
/// size. Identically zero for m = 0, where that population is empty.
/// The 1/(i-1)! prefactor is applied by the callers.
pub fn integrand_tail(model: &ModelSpec, n: u32, i: u32, m: u32, z: f64) -> Result<f64, Error> {
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    if i == 0 {
        return Err(Error::DomainError("sample size i must be at least 1".into()));
    }
    check_z(z)?;
    Ok(tail_integrand_raw(model, n, i, m, z))
}

fn tail_integrand_raw(model: &ModelSpec, n: u32, i: u32, m: u32, z: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let f = model.offspring();
    let g = model.immigration();
    let t = n - m;
    let vals = iterate_values(f, t, z);
    let y = vals[t as usize];

    // phi_m'(y) by first-order jet in y: phi_m(y) = prod_{r=1}^m g(f_r(y)).
    let mut fr = Jet::variable(y, 1);
    let mut acc = Jet::constant(1.0, y, 1);
    for _ in 0..m {
        fr = apply_poly(f.poly(), &fr);
        acc = acc.mul(&apply_poly(g.poly(), &fr)).expect("same base");
    }
    let phi_prime = acc.derivative(1).expect("order 1");

    let mut prod = LogProduct::new();
    prod.mul_pow(1.0 - z, i - 1);
    let ft_i = iterate_pgf(f, t, z, i).and_then(|u| u.derivative(i)).expect("jet within order");
    prod.mul(ft_i);
    prod.mul(phi_prime);
    for &v in vals.iter().skip(1) {
        prod.mul(eval_poly(g.poly(), v));
    }
    prod.value()
}

// ── integrals ───────────────────────────────────────────────────────────────

fn layer_breakpoints(model: &ModelSpec, n: u32) -> Vec<f64> {
    quad::breakpoints_toward_one(model.mu().powi(-(n as i32)))
}

fn immigrant_integral(q: &CoalescenceQuery, k: u32, opts: &ExactOptions) -> Result<QuadResult, Error> {
    let pts = layer_breakpoints(&q.model, q.n);
    let mut r = quad::integrate(
        |z| immigrant_integrand_raw(&q.model, q.n, q.i, k, z),
        &pts,
        opts.tol,
        opts.max_panels,
    )?;
    let gamma = factorial(q.i - 1);
    r.value /= gamma;
    r.error /= gamma;
    Ok(r)
}

fn tail_integral(q: &CoalescenceQuery, m: u32, opts: &ExactOptions) -> Result<QuadResult, Error> {
    let pts = layer_breakpoints(&q.model, q.n);
    let mut r = quad::integrate(
        |z| tail_integrand_raw(&q.model, q.n, q.i, m, z),
        &pts,
        opts.tol,
        opts.max_panels,
    )?;
    let gamma = factorial(q.i - 1);
    r.value /= gamma;
    r.error /= gamma;
    Ok(r)
}

fn clamp_probability(x: f64, what: &str) -> Result<f64, Error> {
    if x < CLAMP_FLOOR {
        return Err(Error::QuadratureFailure(format!(
            "{what} = {x:.3e} is negative beyond the {CLAMP_FLOOR:.0e} clamp floor"
        )));
    }
    if x < 0.0 {
        log::warn!("clamping {what} = {x:.3e} to 0");
        return Ok(0.0);
    }
    Ok(x.min(1.0))
}

/// Probability that the sample never coalesces, i.e. that its members trace
/// back to at least two distinct immigrants.
pub fn prob_infinity(q: &CoalescenceQuery, opts: &ExactOptions) -> Result<f64, Error> {
    let finite: f64 = (1..=q.n)
        .into_par_iter()
        .map(|k| immigrant_integral(q, k, opts).map(|r| r.value))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .sum();
    clamp_probability(1.0 - finite, "p_infinity")
}

/// Probability that the sample coalesces no earlier than generation m
/// (and does coalesce).
pub fn prob_tail(q: &CoalescenceQuery, m: u32, opts: &ExactOptions) -> Result<f64, Error> {
    if m >= q.n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {}", q.n)));
    }
    let native = if m == 0 { 0.0 } else { tail_integral(q, m, opts)?.value };
    let immigrant: f64 = (1..=q.n - m)
        .into_par_iter()
        .map(|k| immigrant_integral(q, k, opts).map(|r| r.value))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .sum();
    clamp_probability(native + immigrant, &format!("tail({m})"))
}

/// The whole distribution in one sweep. The immigrant integrals are shared
/// across thresholds, so this costs 2n - 1 quadratures, run in parallel and
/// combined in a fixed order.
pub fn full_distribution(
    q: &CoalescenceQuery,
    opts: &ExactOptions,
) -> Result<CoalescenceDistribution, Error> {
    let n = q.n as usize;
    let immigrant: Vec<QuadResult> = (1..=q.n)
        .into_par_iter()
        .map(|k| immigrant_integral(q, k, opts))
        .collect::<Result<_, _>>()?;
    let native: Vec<QuadResult> = (1..q.n)
        .into_par_iter()
        .map(|m| tail_integral(q, m, opts))
        .collect::<Result<_, _>>()?;

    let quadrature_error: f64 = immigrant.iter().chain(native.iter()).map(|r| r.error).sum();

    // tail[m] = native term for m plus every immigrant subtree young enough
    // to have arrived at generation >= m.
    let mut tail = vec![0.0; n];
    for m in 0..n {
        let native_term = if m == 0 { 0.0 } else { native[m - 1].value };
        let immigrant_sum: f64 = immigrant[..n - m].iter().map(|r| r.value).sum();
        tail[m] = clamp_probability(native_term + immigrant_sum, &format!("tail({m})"))?;
    }

    let p_infinity = clamp_probability(1.0 - tail[0], "p_infinity")?;

    let mut pmf = vec![0.0; n];
    for m in 0..n {
        let next = if m + 1 < n { tail[m + 1] } else { 0.0 };
        pmf[m] = clamp_probability(tail[m] - next, &format!("pmf({m})"))?;
    }

    Ok(CoalescenceDistribution {
        n: q.n,
        i: q.i,
        pmf,
        tail,
        p_infinity,
        quadrature_error,
    })
}

/// Expected ratio of falling-factorial counts across independent subtrees:
/// with Y_1..Y_n iid with generating function `phi`, Z independent with
/// generating function `h_poly`, and `partition` = (i_1..i_j),
/// E[ (Y_1)_{i_1} ... (Y_j)_{i_j} / (Y_1 + ... + Y_n + Z)_i ]
/// for i = sum i_l, computed as a single weighted integral of generating
/// functions. Terms whose numerator vanishes contribute zero even where the
/// denominator count falls below i.
pub fn falling_factorial_expectation(
    phi: &DistSpec,
    h_poly: &[f64],
    n: u32,
    partition: &[u32],
    opts: &ExactOptions,
) -> Result<f64, Error> {
    let j = partition.len() as u32;
    if j == 0 || j > n {
        return Err(Error::DomainError(format!(
            "partition length {j} must lie in 1..=n (n = {n})"
        )));
    }
    if partition.iter().any(|&p| p == 0) {
        return Err(Error::DomainError("partition entries must be positive".into()));
    }
    let i: u32 = partition.iter().sum();
    if i > 20 {
        return Err(Error::DomainError(format!("total order {i} exceeds the supported maximum of 20")));
    }
    if h_poly.is_empty() {
        return Err(Error::DomainError("h polynomial must have at least one coefficient".into()));
    }

    let derivs: Vec<Vec<f64>> = partition.iter().map(|&p| poly_derivative(phi.poly(), p)).collect();
    let degree = phi.max_support() as usize * n as usize + h_poly.len();
    let pts = quad::breakpoints_toward_one(1.0 / (degree as f64 + 2.0));
    let r = quad::integrate(
        |z| {
            let mut v = (1.0 - z).powi(i as i32 - 1) * eval_poly(phi.poly(), z).powi((n - j) as i32);
            for d in &derivs {
                v *= eval_poly(d, z);
            }
            v * eval_poly(h_poly, z)
        },
        &pts,
        opts.tol,
        opts.max_panels,
    )?;
    Ok(r.value / factorial(i - 1))
}
