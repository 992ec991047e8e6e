//! Offspring and immigration laws, stored as validated pmfs on the positive
//! integers together with their probability generating functions.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Probabilities this far from summing to 1 are renormalized; anything worse
/// is rejected as `BadPmf`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Entries below this are rejected outright: probabilities that small cannot
/// be distinguished from rounding noise by anything downstream.
pub const MIN_PROB: f64 = 1e-15;

/// A finitely supported distribution on {1, 2, ...}.
///
/// No mass at zero is a structural requirement, not a convenience: it is what
/// guarantees that every ancestral line survives forever, so the only escape
/// from coalescence is descending from distinct immigrants.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    pmf: Vec<(u32, f64)>,
    poly: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl DistSpec {
    /// Validates and normalizes a pmf given as (value, probability) pairs.
    /// Pairs may arrive in any order; duplicates are rejected.
    pub fn new(entries: &[(u32, f64)]) -> Result<Self, Error> {
        if entries.is_empty() {
            return Err(Error::BadPmf("empty pmf".into()));
        }
        let mut pmf = entries.to_vec();
        pmf.sort_by_key(|&(v, _)| v);
        let mut sum = 0.0;
        for w in pmf.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::BadPmf(format!("duplicate support value {}", w[0].0)));
            }
        }
        for &(v, p) in &pmf {
            if v == 0 {
                return Err(Error::MassAtZero);
            }
            if !p.is_finite() || p <= 0.0 || p > 1.0 + NORMALIZATION_TOL {
                return Err(Error::BadPmf(format!("probability {p} for value {v} is outside (0, 1]")));
            }
            if p < MIN_PROB {
                return Err(Error::BadPmf(format!(
                    "probability {p} for value {v} is below the {MIN_PROB} floor"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::BadPmf(format!("probabilities sum to {sum}, not 1")));
        }
        for (_, p) in &mut pmf {
            *p /= sum;
        }

        let max_support = pmf.last().unwrap().0;
        let mut poly = vec![0.0; max_support as usize + 1];
        let mut mean = 0.0;
        let mut second = 0.0;
        for &(v, p) in &pmf {
            poly[v as usize] = p;
            mean += v as f64 * p;
            second += (v as f64) * (v as f64) * p;
        }
        let variance = second - mean * mean;
        Ok(Self { pmf, poly, mean, variance })
    }

    /// Point mass at `value`.
    pub fn deterministic(value: u32) -> Result<Self, Error> {
        Self::new(&[(value, 1.0)])
    }

    pub fn pmf(&self) -> &[(u32, f64)] {
        &self.pmf
    }

    /// Dense generating-function coefficients; `poly()[k]` is P(value = k).
    pub fn poly(&self) -> &[f64] {
        &self.poly
    }

    pub fn max_support(&self) -> u32 {
        self.pmf.last().unwrap().0
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Second factorial moment E[N(N-1)], i.e. the generating function's
    /// second derivative at 1.
    pub fn factorial_moment2(&self) -> f64 {
        self.pmf.iter().map(|&(v, p)| v as f64 * (v as f64 - 1.0) * p).sum()
    }

    /// Evaluates the generating function at `z` in [0, 1].
    pub fn pgf_eval(&self, z: f64) -> Result<f64, Error> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::DomainError(format!("pgf argument {z} outside [0, 1]")));
        }
        Ok(eval_poly(&self.poly, z))
    }

    /// Generating-function derivative at `z`, computed from the coefficients.
    pub fn pgf_deriv(&self, z: f64) -> Result<f64, Error> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::DomainError(format!("pgf argument {z} outside [0, 1]")));
        }
        let mut acc = 0.0;
        for k in (1..self.poly.len()).rev() {
            acc = acc * z + self.poly[k] * k as f64;
        }
        Ok(acc)
    }
}

/// Horner evaluation; callers guarantee the domain.
pub(crate) fn eval_poly(coeffs: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Coefficients of the `order`-th derivative of a dense polynomial.
pub(crate) fn poly_derivative(coeffs: &[f64], order: u32) -> Vec<f64> {
    let mut cur = coeffs.to_vec();
    for _ in 0..order {
        if cur.len() <= 1 {
            return vec![0.0];
        }
        cur = cur
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * k as f64)
            .collect();
    }
    cur
}

/// A branching process with immigration: every individual in a generation
/// (immigrants included) reproduces according to `offspring`, and each
/// generation independently receives `immigration` newcomers who reproduce
/// alongside the natives.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    offspring: DistSpec,
    immigration: DistSpec,
}

impl ModelSpec {
    pub fn new(offspring: DistSpec, immigration: DistSpec) -> Result<Self, Error> {
        if offspring.mean() <= 1.0 {
            return Err(Error::NotSupercritical { mu: offspring.mean() });
        }
        Ok(Self { offspring, immigration })
    }

    pub fn offspring(&self) -> &DistSpec {
        &self.offspring
    }

    pub fn immigration(&self) -> &DistSpec {
        &self.immigration
    }

    /// Mean offspring count, > 1 by construction.
    pub fn mu(&self) -> f64 {
        self.offspring.mean()
    }

    /// Mean immigration count per generation.
    pub fn lambda(&self) -> f64 {
        self.immigration.mean()
    }

    /// Offspring variance.
    pub fn sigma2(&self) -> f64 {
        self.offspring.variance()
    }

    /// Parses the external model format:
    /// `{"offspring":{"pmf":[[k,p],...]},"immigration":{"pmf":[[k,p],...]}}`.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::BadPmf(format!("model JSON: {e}")))?;
        file.validate()
    }

    /// Canonical serialization of the validated model: fixed key order, sorted
    /// support, 17-significant-digit probabilities. Whitespace-equivalent or
    /// key-reordered input files canonicalize identically, which is what makes
    /// the manifest digest stable.
    pub fn canonical_json(&self) -> String {
        fn pmf_json(d: &DistSpec) -> String {
            let entries: Vec<String> = d
                .pmf()
                .iter()
                .map(|&(v, p)| format!("[{},{:.16e}]", v, p))
                .collect();
            format!("{{\"pmf\":[{}]}}", entries.join(","))
        }
        format!(
            "{{\"offspring\":{},\"immigration\":{}}}",
            pmf_json(&self.offspring),
            pmf_json(&self.immigration)
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub offspring: PmfFile,
    pub immigration: PmfFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmfFile {
    pub pmf: Vec<(u32, f64)>,
}

impl ModelFile {
    pub fn validate(&self) -> Result<ModelSpec, Error> {
        ModelSpec::new(DistSpec::new(&self.offspring.pmf)?, DistSpec::new(&self.immigration.pmf)?)
    }
}
