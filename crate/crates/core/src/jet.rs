//! Truncated Taylor arithmetic. A jet carries the first `order` derivatives
//! of a scalar function at a fixed base point; pushing a jet through a
//! polynomial propagates all of them at once. Iterated generating functions
//! get their high-order derivatives this way instead of via the usual
//! combinatorial chain-rule explosion.

use crate::dist::DistSpec;
use crate::error::Error;

/// Taylor coefficients of some function h at `base`:
/// `coeffs[j] = h^(j)(base) / j!`. Arithmetic is exact up to truncation at
/// `order() = coeffs.len() - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    base: f64,
    coeffs: Vec<f64>,
}

impl Jet {
    /// The identity function at `base`: value `base`, first derivative 1,
    /// everything above zero.
    pub fn variable(base: f64, order: u32) -> Self {
        let mut coeffs = vec![0.0; order as usize + 1];
        coeffs[0] = base;
        if order >= 1 {
            coeffs[1] = 1.0;
        }
        Self { base, coeffs }
    }

    /// A constant function at `base`.
    pub fn constant(value: f64, base: f64, order: u32) -> Self {
        let mut coeffs = vec![0.0; order as usize + 1];
        coeffs[0] = value;
        Self { base, coeffs }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn order(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The function value, h(base).
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// h^(j)(base), recovered as coeffs[j] * j!.
    pub fn derivative(&self, j: u32) -> Result<f64, Error> {
        if j > self.order() {
            return Err(Error::OrderExceeded { requested: j, order: self.order() });
        }
        Ok(self.coeffs[j as usize] * factorial(j))
    }

    /// Coefficient-wise sum. Jets must share their base point exactly; if the
    /// orders differ the result is truncated to the shorter one.
    pub fn add(&self, other: &Jet) -> Result<Jet, Error> {
        if self.base != other.base {
            return Err(Error::BasePointMismatch(self.base, other.base));
        }
        let len = self.coeffs.len().min(other.coeffs.len());
        let coeffs = (0..len).map(|j| self.coeffs[j] + other.coeffs[j]).collect();
        Ok(Jet { base: self.base, coeffs })
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Jet) -> Result<Jet, Error> {
        if self.base != other.base {
            return Err(Error::BasePointMismatch(self.base, other.base));
        }
        let len = self.coeffs.len().min(other.coeffs.len());
        let mut coeffs = vec![0.0; len];
        for j in 0..len {
            let mut s = 0.0;
            for r in 0..=j {
                s += self.coeffs[r] * other.coeffs[j - r];
            }
            coeffs[j] = s;
        }
        Ok(Jet { base: self.base, coeffs })
    }

    fn add_scalar(mut self, c: f64) -> Jet {
        self.coeffs[0] += c;
        self
    }
}

pub(crate) fn factorial(j: u32) -> f64 {
    (1..=j as u64).map(|v| v as f64).product()
}

/// Evaluates a dense polynomial at a jet (Horner in jet arithmetic), i.e.
/// composes the polynomial with whatever function the jet represents.
pub fn apply_poly(coeffs: &[f64], u: &Jet) -> Jet {
    let mut acc = Jet::constant(*coeffs.last().unwrap_or(&0.0), u.base(), u.order());
    for &c in coeffs.iter().rev().skip(1) {
        // acc has u's order throughout, so the unwrap cannot fire.
        acc = acc.mul(u).unwrap().add_scalar(c);
    }
    acc
}

/// Jet of the n-fold iterate of the generating function of `f` at `z`:
/// value f_n(z) plus derivatives up to `order`. n = 0 is the identity.
pub fn iterate_pgf(f: &DistSpec, n: u32, z: f64, order: u32) -> Result<Jet, Error> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::DomainError(format!("iterate_pgf argument {z} outside [0, 1]")));
    }
    let mut u = Jet::variable(z, order);
    for _ in 0..n {
        u = apply_poly(f.poly(), &u);
    }
    Ok(u)
}

/// Composes two jets: `outer` expanded at `inner.value()`, `inner` expanded
/// at its own base. The result is the jet of the composed function at
/// `inner.base()`. Used to check that iterating a generating function n+m
/// times agrees with composing the n- and m-fold iterates.
pub fn compose(outer: &Jet, inner: &Jet) -> Result<Jet, Error> {
    if (outer.base() - inner.value()).abs() > 1e-9 * (1.0 + outer.base().abs()) {
        return Err(Error::BasePointMismatch(outer.base(), inner.value()));
    }
    // Shift the inner jet so its constant term vanishes, then Horner with the
    // outer coefficients; truncation keeps everything at inner's order.
    let mut shifted = inner.clone();
    shifted.coeffs[0] = 0.0;
    let mut acc = Jet::constant(*outer.coeffs.last().unwrap(), inner.base(), inner.order());
    for &c in outer.coeffs.iter().rev().skip(1) {
        acc = acc.mul(&shifted)?.add_scalar(c);
    }
    Ok(acc)
}
