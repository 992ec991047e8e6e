//! Reference values computed without the integral engine.
//!
//! Three independent routes: exact falling-factorial ratios for models whose
//! trees are deterministic, a finite positive sum for the doubling model with
//! random immigration, and brute-force enumeration of every tree a small
//! model can produce. None of them touch quadrature or truncated Taylor
//! arithmetic, so agreement with the engine checks the whole pipeline.

use std::collections::{BTreeMap, HashMap};

use crate::dist::{DistSpec, ModelSpec};
use crate::error::Error;
use crate::sim::falling_factorial;

// ── deterministic trees: l offspring each, k immigrants per generation ─────

/// Model in which every individual has exactly `fanout` offspring and every
/// generation receives exactly `immigrants` immigrants.
pub fn lnary_model(fanout: u32, immigrants: u32) -> Result<ModelSpec, Error> {
    ModelSpec::new(DistSpec::deterministic(fanout)?, DistSpec::deterministic(immigrants)?)
}

fn lnary_check(fanout: u64, immigrants: u64, i: u32) -> Result<(), Error> {
    if fanout < 2 {
        return Err(Error::DomainError("fanout must be at least 2".into()));
    }
    if immigrants == 0 {
        return Err(Error::DomainError("need at least one immigrant per generation".into()));
    }
    if i < 2 {
        return Err(Error::DomainError(format!("sample size i = {i} must be at least 2")));
    }
    Ok(())
}

fn lnary_population(fanout: f64, immigrants: f64, n: u32) -> f64 {
    // k l (l^n - 1) / (l - 1): cohort j contributes k l^(n-j).
    immigrants * fanout * (fanout.powi(n as i32) - 1.0) / (fanout - 1.0)
}

/// P(the i sampled individuals never coalesce), exactly: the tree is the
/// same in every realization, so the probability is a ratio of falling
/// factorials of line counts.
pub fn lnary_p_infinity(fanout: u64, immigrants: u64, n: u32, i: u32) -> Result<f64, Error> {
    lnary_check(fanout, immigrants, i)?;
    Ok(1.0 - lnary_tail(fanout, immigrants, n, 0, i)?)
}

/// P(coalescence at generation m or later, and not never), exactly.
pub fn lnary_tail(fanout: u64, immigrants: u64, n: u32, m: u32, i: u32) -> Result<f64, Error> {
    lnary_check(fanout, immigrants, i)?;
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    let l = fanout as f64;
    let k = immigrants as f64;
    let total = lnary_population(l, k, n);
    if total < i as f64 {
        return Err(Error::DomainError(format!(
            "population {total} cannot supply a sample of {i}"
        )));
    }
    // Generation-m members all carry l^(n-m) descendants; the cohort that
    // arrived at generation n - t carries k lines of l^t descendants each.
    let members = lnary_population(l, k, m);
    let mut num = members * ff(l.powi((n - m) as i32), i);
    for t in 1..=(n - m) as i32 {
        num += k * ff(l.powi(t), i);
    }
    Ok(num / ff(total, i))
}

/// Large-n limit of `lnary_p_infinity` for pair samples (i = 2).
pub fn lnary_limit_p_infinity(fanout: u64, immigrants: u64) -> Result<f64, Error> {
    lnary_check(fanout, immigrants, 2)?;
    let l = fanout as f64;
    let k = immigrants as f64;
    Ok(((1.0 + l) * k - (l - 1.0)) / ((1.0 + l) * k))
}

/// Large-n limit of `lnary_tail` for pair samples (i = 2).
pub fn lnary_limit_tail(fanout: u64, immigrants: u64, m: u32) -> Result<f64, Error> {
    lnary_check(fanout, immigrants, 2)?;
    let l = fanout as f64;
    let k = immigrants as f64;
    Ok(l.powi(-2 * m as i32) * (l - 1.0) / k * ((l.powi(m as i32) - 1.0) / l + 1.0 / (1.0 + l)))
}

fn ff(x: f64, i: u32) -> f64 {
    if x < i as f64 {
        return 0.0;
    }
    let mut out = 1.0;
    for r in 0..i {
        out *= x - r as f64;
    }
    out
}

// ── doubling offspring, one or two immigrants with equal odds ──────────────

/// Offspring always 2, immigration 1 or 2 with probability one half each.
pub fn binary_random_model() -> ModelSpec {
    ModelSpec::new(
        DistSpec::deterministic(2).expect("valid"),
        DistSpec::new(&[(1, 0.5), (2, 0.5)]).expect("valid"),
    )
    .expect("supercritical")
}

/// P(coalescence at generation m or later, and not never) for the model
/// above, as a finite sum over immigration histories.
///
/// Conditioned on which cohorts doubled, every tree is deterministic, and
/// the quenched ratio expands into falling-factorial reciprocals indexed by
/// the doubling pattern: `j`, `h`, `k` below range over the binary digits
/// encoding which cohorts sent a second immigrant. Terms are all positive,
/// so the sum loses nothing to cancellation.
pub fn binary_random_tail(n: u32, m: u32, i: u32) -> Result<f64, Error> {
    if i < 2 {
        return Err(Error::DomainError(format!("sample size i = {i} must be at least 2")));
    }
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    if n > 26 {
        return Err(Error::ResourceLimit { cap: 1 << 26, generation: n });
    }
    let p2 = |e: i32| 2.0f64.powi(e);
    let ni = n as i32;
    let mut sum = Kahan::new();

    // Lines rooted at generation-m members, one block of indices per root
    // generation l.
    for l in 1..=m as i32 {
        let mi = m as i32;
        for j in 0..1u64 << (ni - mi) {
            for h in 0..1u64 << (l - 1) {
                for k in 0..1u64 << (mi - l) {
                    let a0 = p2(ni + 1) - 2.0
                        + 2.0 * j as f64
                        + h as f64 * p2(ni - mi + 1)
                        + k as f64 * p2(ni - mi + l + 1);
                    let lead = ff(p2(ni - mi), i);
                    sum.add(lead * p2(l + 1 - ni) / ff(a0 + p2(ni - mi + l), i));
                    sum.add(lead * p2(l - ni) / ff(a0, i));
                }
            }
        }
    }

    // Lines rooted at immigrants of age k.
    for k in 1..=(ni - m as i32) {
        for j in 0..1u64 << (k - 1) {
            for l in 0..1u64 << (ni - k) {
                let b0 = p2(ni + 1) - 2.0 + l as f64 * p2(k + 1) + 2.0 * j as f64;
                let lead = ff(p2(k), i);
                sum.add(lead * p2(1 - ni) / ff(b0 + p2(k), i));
                sum.add(lead * p2(-ni) / ff(b0, i));
            }
        }
    }
    Ok(sum.value())
}

/// P(never coalescing) for the doubling model with random immigration.
pub fn binary_random_p_infinity(n: u32, i: u32) -> Result<f64, Error> {
    Ok(1.0 - binary_random_tail(n, 0, i)?)
}

struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn new() -> Self {
        Self { sum: 0.0, carry: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

// ── exhaustive enumeration of small trees ──────────────────────────────────

/// P(coalescence at generation m or later, and not never) by enumerating
/// every realization of the process up to generation n and averaging the
/// quenched ratio. Exponential in everything; `budget` bounds the number of
/// enumeration steps. Realizations whose population cannot seat the sample
/// contribute zero.
pub fn enumerate_exact(
    model: &ModelSpec,
    n: u32,
    i: u32,
    m: u32,
    budget: u64,
) -> Result<f64, Error> {
    if i < 2 {
        return Err(Error::DomainError(format!("sample size i = {i} must be at least 2")));
    }
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    if budget == 0 {
        return Err(Error::DomainError("enumeration budget must be positive".into()));
    }
    let mut e = Enumerator {
        off: model.offspring().clone(),
        imm: model.immigration().clone(),
        n,
        i,
        m,
        budget,
        used: 0,
        acc: 0.0,
        cache: HashMap::new(),
    };
    if m == 0 {
        e.lines_phase(0, &[], 1.0)?;
    } else {
        e.pool_phase(0, 0, 1.0)?;
    }
    Ok(e.acc)
}

struct Enumerator {
    off: DistSpec,
    imm: DistSpec,
    n: u32,
    i: u32,
    m: u32,
    budget: u64,
    used: u64,
    acc: f64,
    cache: HashMap<u64, Vec<(u64, f64)>>,
}

impl Enumerator {
    fn charge(&mut self, generation: u32) -> Result<(), Error> {
        self.used += 1;
        if self.used > self.budget {
            return Err(Error::ResourceLimit { cap: self.budget, generation });
        }
        Ok(())
    }

    /// Distribution of the sum of `count` independent offspring draws, by
    /// repeated convolution.
    fn sum_distribution(&mut self, count: u64) -> Vec<(u64, f64)> {
        if let Some(v) = self.cache.get(&count) {
            return v.clone();
        }
        let out = if count == 0 {
            vec![(0, 1.0)]
        } else {
            let prev = self.sum_distribution(count - 1);
            let mut map: BTreeMap<u64, f64> = BTreeMap::new();
            for &(s, ps) in &prev {
                for &(v, pv) in self.off.pmf() {
                    *map.entry(s + v as u64).or_insert(0.0) += ps * pv;
                }
            }
            map.into_iter().collect()
        };
        self.cache.insert(count, out.clone());
        out
    }

    /// Generations before the tracked one evolve as a single pooled count.
    fn pool_phase(&mut self, j: u32, pool: u64, prob: f64) -> Result<(), Error> {
        let imm = self.imm.pmf().to_vec();
        for (v, pv) in imm {
            let joined = pool + v as u64;
            for (next, pk) in self.sum_distribution(joined) {
                self.charge(j)?;
                let p = prob * pv * pk;
                if j + 1 == self.m {
                    let lines = vec![1u64; next as usize];
                    self.lines_phase(j + 1, &lines, p)?;
                } else {
                    self.pool_phase(j + 1, next, p)?;
                }
            }
        }
        Ok(())
    }

    /// From the tracked generation on, every line keeps its own count.
    fn lines_phase(&mut self, j: u32, lines: &[u64], prob: f64) -> Result<(), Error> {
        if j == self.n {
            let total: u64 = lines.iter().sum();
            if total >= self.i as u64 {
                let num: f64 = lines.iter().map(|&c| falling_factorial(c, self.i)).sum();
                self.acc += prob * num / falling_factorial(total, self.i);
            }
            return Ok(());
        }
        let imm = self.imm.pmf().to_vec();
        for (v, pv) in imm {
            let mut extended = lines.to_vec();
            extended.extend(std::iter::repeat(1).take(v as usize));
            let mut next = Vec::with_capacity(extended.len());
            self.per_line(j, &extended, 0, &mut next, prob * pv)?;
        }
        Ok(())
    }

    fn per_line(
        &mut self,
        j: u32,
        current: &[u64],
        idx: usize,
        next: &mut Vec<u64>,
        prob: f64,
    ) -> Result<(), Error> {
        if idx == current.len() {
            let advanced = next.clone();
            return self.lines_phase(j + 1, &advanced, prob);
        }
        for (d, pk) in self.sum_distribution(current[idx]) {
            self.charge(j)?;
            next.push(d);
            self.per_line(j, current, idx + 1, next, prob * pk)?;
            next.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_tree_frozen_values() {
        assert!((lnary_p_infinity(2, 1, 2, 2).unwrap() - 8.0 / 15.0).abs() < 1e-12);
        assert!((lnary_tail(2, 1, 2, 0, 2).unwrap() - 7.0 / 15.0).abs() < 1e-12);
        assert!((lnary_tail(2, 1, 2, 1, 2).unwrap() - 0.2).abs() < 1e-12);
        // n = 12 pair sample: 67084290 / 201203730.
        let t = lnary_tail(2, 1, 12, 0, 2).unwrap();
        assert!((t - 67084290.0 / 201203730.0).abs() < 1e-12, "{t}");
        assert!(matches!(lnary_tail(2, 1, 3, 3, 2), Err(Error::DomainError(_))));
        assert!(matches!(lnary_p_infinity(1, 1, 2, 2), Err(Error::DomainError(_))));
    }

    /// The same probabilities written as alternating sums over the partial
    /// fractions of 1/(M)_i, the way the integral evaluates symbolically.
    fn lnary_tail_alternating(l: u64, k: u64, n: u32, m: u32, i: u32) -> f64 {
        let lf = l as f64;
        let kf = k as f64;
        let gamma: f64 = (1..i as u64).map(|r| r as f64).product();
        let binom = |s: u32| -> f64 {
            let mut b = 1.0;
            for r in 0..s {
                b *= (i - 1 - r) as f64 / (r + 1) as f64;
            }
            b
        };
        let mut sum = 0.0;
        for s in 0..i {
            let sign = if (i - 1 - s) % 2 == 0 { 1.0 } else { -1.0 };
            let denom = kf * lf * (1.0 - lf.powi(n as i32)) - s as f64 * (1.0 - lf);
            let mut inner =
                ff(lf.powi((n - m) as i32), i) * kf * lf * (1.0 - lf.powi(m as i32)) / (1.0 - lf);
            for t in 1..=(n - m) as i32 {
                inner += ff(lf.powi(t), i) * kf;
            }
            sum += sign * binom(s) * inner * (1.0 - lf) / (gamma * denom);
        }
        sum
    }

    #[test]
    fn alternating_sum_form_agrees_with_the_direct_ratio() {
        for (l, k) in [(2u64, 1u64), (2, 2), (3, 1), (3, 2)] {
            for n in 2..=7u32 {
                for i in 2..=3u32 {
                    for m in 0..n {
                        let direct = lnary_tail(l, k, n, m, i).unwrap();
                        let alt = lnary_tail_alternating(l, k, n, m, i);
                        assert!(
                            (direct - alt).abs() < 1e-9,
                            "l={l} k={k} n={n} m={m} i={i}: {direct} vs {alt}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn pair_sample_closed_display_agrees() {
        // P(coalescing at all) for i = 2 in one closed expression.
        for (l, k) in [(2u64, 1u64), (3, 2)] {
            for n in 2..=6u32 {
                let lf = l as f64;
                let kf = k as f64;
                let c = kf * lf * (1.0 - lf.powi(n as i32));
                let display = kf
                    * (1.0 - lf)
                    * (lf * lf * (1.0 - lf.powi(2 * n as i32))
                        - lf * (lf + 1.0) * (1.0 - lf.powi(n as i32)))
                    / ((1.0 + lf) * (c - (1.0 - lf)) * c);
                let direct = lnary_tail(l, k, n, 0, 2).unwrap();
                assert!((display - direct).abs() < 1e-12, "l={l} k={k} n={n}");
            }
        }
    }

    #[test]
    fn limit_values() {
        assert!((lnary_limit_tail(2, 1, 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((lnary_limit_tail(2, 1, 1).unwrap() - 5.0 / 24.0).abs() < 1e-15);
        assert!((lnary_limit_p_infinity(2, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((lnary_limit_tail(3, 2, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((lnary_limit_tail(3, 2, 1).unwrap() - 11.0 / 108.0).abs() < 1e-15);
        assert!((lnary_limit_p_infinity(3, 2).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn finite_tails_approach_their_limits() {
        for (l, k) in [(2u64, 1u64), (3, 2)] {
            let far = lnary_tail(l, k, 6, 0, 2).unwrap();
            let farther = lnary_tail(l, k, 12, 0, 2).unwrap();
            let limit = lnary_limit_tail(l, k, 0).unwrap();
            assert!((farther - limit).abs() < (far - limit).abs());
            assert!((farther - limit).abs() < 1e-3);
        }
    }

    #[test]
    fn doubling_random_immigration_frozen_value() {
        let t = binary_random_tail(2, 1, 2).unwrap();
        assert!((t - 472.0 / 3465.0).abs() < 1e-12, "{t}");
        assert!(matches!(binary_random_tail(2, 2, 2), Err(Error::DomainError(_))));
        assert!(matches!(binary_random_tail(30, 0, 2), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn enumeration_reproduces_deterministic_trees() {
        let m = lnary_model(2, 1).unwrap();
        let t0 = enumerate_exact(&m, 2, 2, 0, 1 << 20).unwrap();
        assert!((t0 - 7.0 / 15.0).abs() < 1e-12);
        let t1 = enumerate_exact(&m, 2, 2, 1, 1 << 20).unwrap();
        assert!((t1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn enumeration_agrees_with_the_positive_sum() {
        let model = binary_random_model();
        for n in 2..=3u32 {
            for i in 2..=n.min(3) {
                for m in 0..n {
                    let by_sum = binary_random_tail(n, m, i).unwrap();
                    let by_enum = enumerate_exact(&model, n, i, m, 1 << 22).unwrap();
                    assert!(
                        (by_sum - by_enum).abs() < 1e-10,
                        "n={n} i={i} m={m}: {by_sum} vs {by_enum}"
                    );
                }
            }
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let model = binary_random_model();
        assert!(matches!(
            enumerate_exact(&model, 6, 2, 0, 50),
            Err(Error::ResourceLimit { cap: 50, .. })
        ));
    }

    #[test]
    fn random_offspring_enumeration_matches_hand_value() {
        // Offspring 1 or 2 with equal odds, one immigrant per generation:
        // averaging over the 20 trees at n = 2 gives 83/240.
        let m = ModelSpec::new(
            DistSpec::new(&[(1, 0.5), (2, 0.5)]).unwrap(),
            DistSpec::deterministic(1).unwrap(),
        )
        .unwrap();
        let t = enumerate_exact(&m, 2, 2, 0, 1 << 20).unwrap();
        assert!((t - 83.0 / 240.0).abs() < 1e-12, "{t}");
    }
}
