//! Genealogy simulation.
//!
//! Two levels of resolution. `simulate` keeps one integer count per tracked
//! ancestral line and advances a whole line per draw, so populations can grow
//! geometrically without touching per-individual state. `simulate_full`
//! records every parent pointer and supports sampling individuals and walking
//! their lineages directly; it costs memory proportional to the total tree.
//!
//! Both share the generation loop: immigrants join the pool, then the pool
//! reproduces. Everyone alive at generation n is a descendant of exactly one
//! immigrant, and nobody has zero offspring, so lines never die out.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::dist::{DistSpec, ModelSpec};
use crate::error::Error;
use crate::mc::{self, McEstimate};

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Ceiling on the population of any single generation. Exceeding it
    /// aborts the replicate with a resource error rather than thrashing.
    /// Tracking from generation m also allocates one entry per generation-m
    /// member, so the cap bounds memory as well as time.
    pub population_cap: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { population_cap: 100_000_000 }
    }
}

/// Root of a tracked ancestral line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Founder {
    /// A member of the tracked generation, in birth order.
    Member { index: u64 },
    /// An immigrant who arrived at generation `arrival`, in cohort order.
    Immigrant { arrival: u32, index: u64 },
}

/// Descendant counts at generation `generation` for every line rooted at or
/// after generation `track_from`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenealogyState {
    pub track_from: u32,
    pub generation: u32,
    pub counts: Vec<(Founder, u64)>,
    /// Cohort sizes I_0 .. I_{n-1}.
    pub immigration_log: Vec<u64>,
}

impl GenealogyState {
    pub fn population(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }
}

/// One draw from a discrete distribution by inverse transform.
fn draw_once<R: Rng>(dist: &DistSpec, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(v, p) in dist.pmf() {
        acc += p;
        if u < acc {
            return v as u64;
        }
    }
    dist.pmf().last().expect("nonempty pmf").0 as u64
}

/// Sum of `count` independent offspring draws in O(support) time: split the
/// count across the support by conditional binomials, then weight. Exact in
/// distribution, and a single-atom support needs no randomness at all.
/// Saturates instead of overflowing; callers compare against the cap next.
fn offspring_sum<R: Rng>(dist: &DistSpec, count: u64, rng: &mut R) -> u64 {
    if count == 0 {
        return 0;
    }
    let pmf = dist.pmf();
    if pmf.len() == 1 {
        return count.saturating_mul(pmf[0].0 as u64);
    }
    let mut remaining = count;
    let mut rem_p = 1.0f64;
    let mut total = 0u64;
    for (idx, &(v, p)) in pmf.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let c = if idx + 1 == pmf.len() {
            remaining
        } else {
            let q = (p / rem_p).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        total = total.saturating_add((v as u64).saturating_mul(c));
        remaining -= c;
        rem_p -= p;
    }
    total
}

/// Run the process to generation `n`, tracking one line per generation-m
/// member and per immigrant arriving at generation m or later, where
/// m = `track_from`. Earlier generations evolve as a single pooled count.
pub fn simulate<R: Rng>(
    model: &ModelSpec,
    n: u32,
    track_from: u32,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<GenealogyState, Error> {
    if track_from > n {
        return Err(Error::DomainError(format!(
            "track_from = {track_from} exceeds the horizon n = {n}"
        )));
    }
    let cap = cfg.population_cap;
    let mut pool: u64 = 0;
    let mut counts: Vec<(Founder, u64)> = Vec::new();
    let mut tracked_total: u64 = 0;
    let mut immigration_log = Vec::with_capacity(n as usize);

    for j in 0..n {
        if j == track_from {
            for index in 0..pool {
                counts.push((Founder::Member { index }, 1));
            }
            tracked_total = pool;
            pool = 0;
        }
        let cohort = draw_once(model.immigration(), rng);
        immigration_log.push(cohort);
        if j < track_from {
            pool = pool.saturating_add(cohort);
        } else {
            for index in 0..cohort {
                counts.push((Founder::Immigrant { arrival: j, index }, 1));
            }
            tracked_total = tracked_total.saturating_add(cohort);
        }
        if pool.saturating_add(tracked_total) > cap {
            return Err(Error::ResourceLimit { cap, generation: j });
        }
        if j < track_from {
            pool = offspring_sum(model.offspring(), pool, rng);
        } else {
            tracked_total = 0;
            for entry in counts.iter_mut() {
                entry.1 = offspring_sum(model.offspring(), entry.1, rng);
                tracked_total = tracked_total.saturating_add(entry.1);
            }
        }
        if pool.saturating_add(tracked_total) > cap {
            return Err(Error::ResourceLimit { cap, generation: j + 1 });
        }
    }
    if track_from == n {
        for index in 0..pool {
            counts.push((Founder::Member { index }, 1));
        }
    }
    Ok(GenealogyState { track_from, generation: n, counts, immigration_log })
}

/// Falling factorial (c)_i = c (c-1) ... (c-i+1) as a float; zero when the
/// count is too small to choose i distinct individuals.
pub fn falling_factorial(c: u64, i: u32) -> f64 {
    if c < i as u64 {
        return 0.0;
    }
    let mut out = 1.0;
    for r in 0..i as u64 {
        out *= (c - r) as f64;
    }
    out
}

/// Conditional probability, given the simulated tree, that i individuals
/// sampled without replacement from generation n coalesce at generation
/// `m` or later: the chance all i land in one tracked line.
pub fn quenched_prob(state: &GenealogyState, i: u32, m: u32) -> Result<f64, Error> {
    if m != state.track_from {
        return Err(Error::DomainError(format!(
            "state tracks lines from generation {} but the threshold is {m}",
            state.track_from
        )));
    }
    if i < 2 {
        return Err(Error::DomainError(format!("sample size i = {i} must be at least 2")));
    }
    let population = state.population();
    if population < i as u64 {
        return Err(Error::SampleTooLarge { sample: i, population });
    }
    let numerator: f64 = state.counts.iter().map(|&(_, c)| falling_factorial(c, i)).sum();
    Ok(numerator / falling_factorial(population, i))
}

/// Average of the quenched probability over `replicates` independent trees;
/// an unbiased estimate of P(coalescence time in [m, n)).
pub fn annealed_estimate(
    model: &ModelSpec,
    n: u32,
    i: u32,
    m: u32,
    replicates: u64,
    seed: u64,
    cfg: &SimConfig,
) -> Result<McEstimate, Error> {
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    mc::run_replicates(seed, replicates, |rng| {
        let state = simulate(model, n, m, cfg, rng)?;
        quenched_prob(&state, i, m)
    })
}

// ── per-individual trees ────────────────────────────────────────────────────

/// A complete genealogy: every individual of every generation with a pointer
/// to its parent. Pool j consists of the generation-j members (indices
/// 0..parents[j].len()) followed by the cohort-j immigrants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullTree {
    pub n: u32,
    /// Cohort sizes I_0 .. I_{n-1}.
    pub cohort: Vec<u32>,
    /// parents[j][b] is the pool-(j-1) index of the parent of the b-th
    /// generation-j member; parents[0] is empty.
    pub parents: Vec<Vec<u32>>,
}

impl FullTree {
    /// Members born into generation j (immigrants not included).
    pub fn population(&self, j: u32) -> u32 {
        self.parents[j as usize].len() as u32
    }
}

/// Run the process to generation n with one offspring draw per individual.
pub fn simulate_full<R: Rng>(
    model: &ModelSpec,
    n: u32,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<FullTree, Error> {
    let cap = cfg.population_cap.min(u32::MAX as u64);
    let mut parents: Vec<Vec<u32>> = vec![Vec::new()];
    let mut cohort = Vec::with_capacity(n as usize);
    for j in 0..n {
        let members = parents[j as usize].len() as u64;
        let arrivals = draw_once(model.immigration(), rng);
        if members + arrivals > cap {
            return Err(Error::ResourceLimit { cap, generation: j });
        }
        cohort.push(arrivals as u32);
        let pool = members + arrivals;
        let mut children: Vec<u32> = Vec::new();
        for p in 0..pool {
            let litter = draw_once(model.offspring(), rng);
            if children.len() as u64 + litter > cap {
                return Err(Error::ResourceLimit { cap, generation: j + 1 });
            }
            for _ in 0..litter {
                children.push(p as u32);
            }
        }
        parents.push(children);
    }
    Ok(FullTree { n, cohort, parents })
}

/// Generation of the most recent common ancestor of the given generation-n
/// members, counting an immigrant ancestor at its arrival generation; `None`
/// when the members descend from distinct immigrants.
pub fn coalescence_of(tree: &FullTree, leaves: &[u32]) -> Result<Option<u32>, Error> {
    let n = tree.n as usize;
    if leaves.len() < 2 {
        return Err(Error::DomainError("need at least two leaves".into()));
    }
    let mut sorted = leaves.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DomainError("leaves must be distinct".into()));
    }
    let members_n = tree.parents[n].len() as u32;
    if sorted.last().copied().unwrap_or(0) >= members_n {
        return Err(Error::DomainError(format!(
            "leaf index out of range for generation {} with {members_n} members",
            tree.n
        )));
    }

    // Pool index of each leaf's ancestor at every level from its immigrant's
    // arrival up to n, oldest first.
    let mut arrivals = Vec::with_capacity(leaves.len());
    let mut chains: Vec<Vec<u32>> = Vec::with_capacity(leaves.len());
    for &leaf in leaves {
        let mut chain = Vec::new();
        let mut level = n;
        let mut p = leaf;
        loop {
            chain.push(p);
            let members = tree.parents[level].len() as u32;
            if p < members {
                p = tree.parents[level][p as usize];
                level -= 1;
            } else {
                break;
            }
        }
        chain.reverse();
        arrivals.push(level as u32);
        chains.push(chain);
    }

    let arrival = arrivals[0];
    if arrivals.iter().any(|&a| a != arrival) || chains.iter().any(|c| c[0] != chains[0][0]) {
        return Ok(None);
    }
    // Walk down from the shared immigrant while every lineage agrees;
    // distinct leaves guarantee divergence before level n.
    let mut x = arrival;
    loop {
        let d = (x + 1 - arrival) as usize;
        let next = chains[0][d];
        if chains.iter().any(|c| c[d] != next) {
            break;
        }
        x += 1;
        debug_assert!(x < tree.n);
    }
    Ok(Some(x))
}

/// Collapse a full tree to line counts rooted at generation `track_from`,
/// as `simulate` would have tracked them.
pub fn state_tracked_from(tree: &FullTree, track_from: u32) -> Result<GenealogyState, Error> {
    let n = tree.n;
    if track_from > n {
        return Err(Error::DomainError(format!(
            "track_from = {track_from} exceeds the horizon n = {n}"
        )));
    }
    let mut founders: Vec<Founder> = Vec::new();
    let members = tree.population(track_from) as u64;
    for index in 0..members {
        founders.push(Founder::Member { index });
    }
    // Founder label of every pool individual at the current level.
    let mut labels: Vec<u32> = (0..members as u32).collect();
    for j in track_from..n {
        for index in 0..tree.cohort[j as usize] as u64 {
            labels.push(founders.len() as u32);
            founders.push(Founder::Immigrant { arrival: j, index });
        }
        labels = tree.parents[j as usize + 1].iter().map(|&p| labels[p as usize]).collect();
    }
    let mut counts = vec![0u64; founders.len()];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    Ok(GenealogyState {
        track_from,
        generation: n,
        counts: founders.into_iter().zip(counts).collect(),
        immigration_log: tree.cohort.iter().map(|&c| c as u64).collect(),
    })
}

/// Draw i distinct generation-n members uniformly and report when they
/// coalesce.
pub fn sample_coalescence<R: Rng>(
    tree: &FullTree,
    i: u32,
    rng: &mut R,
) -> Result<Option<u32>, Error> {
    let members = tree.parents[tree.n as usize].len();
    if (members as u64) < i as u64 {
        return Err(Error::SampleTooLarge { sample: i, population: members as u64 });
    }
    let picked = rand::seq::index::sample(rng, members, i as usize);
    let leaves: Vec<u32> = picked.iter().map(|v| v as u32).collect();
    coalescence_of(tree, &leaves)
}

/// Fraction of fresh trees in which one uniformly sampled i-subset of
/// generation n coalesces at generation m or later. Estimates the same tail
/// probability as `annealed_estimate` along an independent route.
pub fn direct_sample_estimate(
    model: &ModelSpec,
    n: u32,
    i: u32,
    m: u32,
    replicates: u64,
    seed: u64,
    cfg: &SimConfig,
) -> Result<McEstimate, Error> {
    if m >= n {
        return Err(Error::DomainError(format!("threshold m = {m} must be below n = {n}")));
    }
    mc::run_replicates(seed, replicates, |rng| {
        let tree = simulate_full(model, n, cfg, rng)?;
        let time = sample_coalescence(&tree, i, rng)?;
        Ok(match time {
            Some(t) if t >= m => 1.0,
            _ => 0.0,
        })
    })
}

// ── martingale functionals ──────────────────────────────────────────────────

/// Scaled line statistics at generation n: with mu the offspring mean,
/// `first_line` is the first generation-0 immigrant's descendant count over
/// mu^n, `line_total` the whole population over mu^n, and
/// `line_square_total` the sum of squared line counts over mu^(2n).
#[derive(Debug, Clone, Copy)]
pub struct MartingaleSample {
    pub generation: u32,
    pub first_line: f64,
    pub line_total: f64,
    pub line_square_total: f64,
}

/// Simulate one immigrant flow to generation n and evaluate the scaled line
/// statistics.
pub fn martingale_sample<R: Rng>(
    model: &ModelSpec,
    n: u32,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<MartingaleSample, Error> {
    if n == 0 {
        return Err(Error::DomainError("martingale statistics need n >= 1".into()));
    }
    let state = simulate(model, n, 0, cfg, rng)?;
    let mu_n = model.mu().powi(n as i32);
    let mut first = 0.0;
    let mut total = 0.0;
    let mut squares = 0.0;
    for &(founder, c) in &state.counts {
        let cf = c as f64;
        total += cf;
        squares += cf * cf;
        if founder == (Founder::Immigrant { arrival: 0, index: 0 }) {
            first = cf;
        }
    }
    Ok(MartingaleSample {
        generation: n,
        first_line: first / mu_n,
        line_total: total / mu_n,
        line_square_total: squares / (mu_n * mu_n),
    })
}

/// E[line_total] at generation n: each cohort contributes its mean size
/// times the mean growth over its age, scaled back by mu^n.
pub fn expected_line_total(model: &ModelSpec, n: u32) -> f64 {
    let mu = model.mu();
    let lambda = model.lambda();
    let mut sum = 0.0;
    for k in 0..n {
        sum += lambda * mu.powi(-(k as i32));
    }
    sum
}

/// E[line_square_total] at generation n: a line of age d has second moment
/// sigma^2 mu^(d-1) (mu^d - 1)/(mu - 1) + mu^(2d), summed over one cohort
/// of mean size lambda per age and scaled by mu^(-2n).
pub fn expected_line_square_total(model: &ModelSpec, n: u32) -> f64 {
    let mu = model.mu();
    let lambda = model.lambda();
    let sigma2 = model.sigma2();
    let mut sum = 0.0;
    for d in 1..=n {
        let d = d as i32;
        let second = sigma2 * mu.powi(d - 1) * (mu.powi(d) - 1.0) / (mu - 1.0) + mu.powi(2 * d);
        sum += lambda * second;
    }
    sum * model.mu().powi(-2 * n as i32)
}

/// Monte Carlo estimate of the limiting tail probability
/// lim_n P(coalescence time in [m, n)): the population at generation m
/// seeds independent single-individual lines, a fresh immigrant flow
/// supplies the younger lines, and the replicate evaluates the ratio of
/// summed squared line limits to the squared total. `horizon` truncates the
/// almost-sure line limits.
pub fn limit_law_estimate(
    model: &ModelSpec,
    m: u32,
    horizon: u32,
    replicates: u64,
    seed: u64,
    cfg: &SimConfig,
) -> Result<McEstimate, Error> {
    if horizon == 0 {
        return Err(Error::DomainError("horizon must be at least 1".into()));
    }
    let cap = cfg.population_cap;
    let mut estimate = mc::run_replicates(seed, replicates, |rng| {
        let mu_h = model.mu().powi(horizon as i32);
        let mut pool: u64 = 0;
        for j in 0..m {
            pool = pool.saturating_add(draw_once(model.immigration(), rng));
            if pool > cap {
                return Err(Error::ResourceLimit { cap, generation: j });
            }
            pool = offspring_sum(model.offspring(), pool, rng);
            if pool > cap {
                return Err(Error::ResourceLimit { cap, generation: j + 1 });
            }
        }
        let mut w_sum = 0.0;
        let mut w_squares = 0.0;
        for _ in 0..pool {
            let mut line: u64 = 1;
            for h in 0..horizon {
                line = offspring_sum(model.offspring(), line, rng);
                if line > cap {
                    return Err(Error::ResourceLimit { cap, generation: h + 1 });
                }
            }
            let w = line as f64 / mu_h;
            w_sum += w;
            w_squares += w * w;
        }
        let flow = martingale_sample(model, horizon, cfg, rng)?;
        let numerator = w_squares + flow.line_square_total;
        let denominator = w_sum + flow.line_total;
        Ok(numerator / (denominator * denominator))
    })?;
    estimate.horizon_n = Some(horizon);
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::replicate_rng;

    fn model(off: &[(u32, f64)], imm: &[(u32, f64)]) -> ModelSpec {
        ModelSpec::new(DistSpec::new(off).unwrap(), DistSpec::new(imm).unwrap()).unwrap()
    }

    fn doubling_unit() -> ModelSpec {
        model(&[(2, 1.0)], &[(1, 1.0)])
    }

    /// The deterministic doubling tree at n = 2: pool 0 is one immigrant,
    /// generation 1 is her two children plus a new immigrant, generation 2
    /// has six members.
    fn doubling_tree_n2() -> FullTree {
        FullTree {
            n: 2,
            cohort: vec![1, 1],
            parents: vec![vec![], vec![0, 0], vec![0, 0, 1, 1, 2, 2]],
        }
    }

    #[test]
    fn deterministic_counts_by_founder() {
        let m = doubling_unit();
        let cfg = SimConfig::default();
        let mut rng = replicate_rng(0, 0);
        let s = simulate(&m, 2, 0, &cfg, &mut rng).unwrap();
        assert_eq!(
            s.counts,
            vec![
                (Founder::Immigrant { arrival: 0, index: 0 }, 4),
                (Founder::Immigrant { arrival: 1, index: 0 }, 2),
            ]
        );
        assert_eq!(s.population(), 6);
        assert_eq!(s.immigration_log, vec![1, 1]);

        let mut rng = replicate_rng(0, 0);
        let s = simulate(&m, 3, 1, &cfg, &mut rng).unwrap();
        assert_eq!(
            s.counts,
            vec![
                (Founder::Member { index: 0 }, 4),
                (Founder::Member { index: 1 }, 4),
                (Founder::Immigrant { arrival: 1, index: 0 }, 4),
                (Founder::Immigrant { arrival: 2, index: 0 }, 2),
            ]
        );
        assert_eq!(s.population(), 14);
    }

    #[test]
    fn quenched_probabilities_on_the_deterministic_tree() {
        let m = doubling_unit();
        let cfg = SimConfig::default();
        let mut rng = replicate_rng(0, 0);
        let s = simulate(&m, 2, 0, &cfg, &mut rng).unwrap();
        // (4*3 + 2*1) / (6*5)
        assert!((quenched_prob(&s, 2, 0).unwrap() - 7.0 / 15.0).abs() < 1e-15);

        let mut rng = replicate_rng(0, 0);
        let s = simulate(&m, 2, 1, &cfg, &mut rng).unwrap();
        assert!((quenched_prob(&s, 2, 1).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(quenched_prob(&s, 2, 0), Err(Error::DomainError(_))));
    }

    #[test]
    fn annealed_estimate_of_a_deterministic_model_has_zero_error() {
        let m = doubling_unit();
        let est = annealed_estimate(&m, 2, 2, 0, 50, 9, &SimConfig::default()).unwrap();
        assert!((est.estimate - 7.0 / 15.0).abs() < 1e-15);
        // Replicates are identical; only mean-subtraction rounding survives.
        assert!(est.std_error < 1e-15);
        assert_eq!(est.replicates, 50);
    }

    #[test]
    fn simulation_is_reproducible_and_seed_sensitive() {
        let m = model(&[(1, 0.5), (2, 0.5)], &[(1, 0.5), (2, 0.5)]);
        let cfg = SimConfig::default();
        let a = simulate(&m, 6, 2, &cfg, &mut replicate_rng(11, 3)).unwrap();
        let b = simulate(&m, 6, 2, &cfg, &mut replicate_rng(11, 3)).unwrap();
        let c = simulate(&m, 6, 2, &cfg, &mut replicate_rng(11, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);

        let ta = simulate_full(&m, 6, &cfg, &mut replicate_rng(11, 3)).unwrap();
        let tb = simulate_full(&m, 6, &cfg, &mut replicate_rng(11, 3)).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn first_generation_is_the_offspring_of_the_first_cohort() {
        let m = model(&[(1, 0.5), (2, 0.5)], &[(1, 0.5), (2, 0.5)]);
        for rep in 0..20 {
            let mut rng = replicate_rng(5, rep);
            let s = simulate(&m, 1, 0, &SimConfig::default(), &mut rng).unwrap();
            assert_eq!(s.counts.len() as u64, s.immigration_log[0]);
            assert!(s.population() >= s.counts.len() as u64);
        }
    }

    #[test]
    fn coalescence_times_on_a_handmade_tree() {
        let tree = doubling_tree_n2();
        // Siblings merge at their generation-1 parent.
        assert_eq!(coalescence_of(&tree, &[0, 1]).unwrap(), Some(1));
        // Cousins merge only at the founding immigrant.
        assert_eq!(coalescence_of(&tree, &[0, 2]).unwrap(), Some(0));
        assert_eq!(coalescence_of(&tree, &[0, 1, 2, 3]).unwrap(), Some(0));
        // Descendants of different immigrants never merge.
        assert_eq!(coalescence_of(&tree, &[0, 4]).unwrap(), None);
        assert_eq!(coalescence_of(&tree, &[3, 5]).unwrap(), None);
        assert!(matches!(coalescence_of(&tree, &[0, 0]), Err(Error::DomainError(_))));
        assert!(matches!(coalescence_of(&tree, &[0]), Err(Error::DomainError(_))));
        assert!(matches!(coalescence_of(&tree, &[0, 6]), Err(Error::DomainError(_))));
    }

    #[test]
    fn collapsing_a_full_tree_matches_line_tracking() {
        let tree = doubling_tree_n2();
        let s0 = state_tracked_from(&tree, 0).unwrap();
        assert_eq!(
            s0.counts,
            vec![
                (Founder::Immigrant { arrival: 0, index: 0 }, 4),
                (Founder::Immigrant { arrival: 1, index: 0 }, 2),
            ]
        );
        let s1 = state_tracked_from(&tree, 1).unwrap();
        assert_eq!(
            s1.counts,
            vec![
                (Founder::Member { index: 0 }, 2),
                (Founder::Member { index: 1 }, 2),
                (Founder::Immigrant { arrival: 1, index: 0 }, 2),
            ]
        );

        // On random trees the collapse must agree with the quenched ratio
        // being a probability over sampled leaves.
        let m = model(&[(1, 0.5), (2, 0.5)], &[(1, 0.5), (2, 0.5)]);
        for rep in 0..10 {
            let tree = simulate_full(&m, 5, &SimConfig::default(), &mut replicate_rng(2, rep)).unwrap();
            let mut last = f64::INFINITY;
            for m_thr in 0..=4 {
                let st = state_tracked_from(&tree, m_thr).unwrap();
                assert_eq!(st.population(), tree.population(5) as u64);
                let p = quenched_prob(&st, 2, m_thr).unwrap();
                assert!(p <= last + 1e-15, "tail must not grow with m");
                last = p;
            }
        }
    }

    #[test]
    fn sampled_coalescence_frequencies_match_the_quenched_ratio() {
        let tree = doubling_tree_n2();
        let s1 = state_tracked_from(&tree, 1).unwrap();
        let p1 = quenched_prob(&s1, 2, 1).unwrap();
        let mut rng = replicate_rng(3, 0);
        let reps = 40_000;
        let mut hits_finite = 0u32;
        let mut hits_late = 0u32;
        for _ in 0..reps {
            match sample_coalescence(&tree, 2, &mut rng).unwrap() {
                Some(t) => {
                    hits_finite += 1;
                    if t >= 1 {
                        hits_late += 1;
                    }
                }
                None => {}
            }
        }
        let f_finite = hits_finite as f64 / reps as f64;
        let f_late = hits_late as f64 / reps as f64;
        // 4 standard errors at p ~ 0.5 and 40k draws is 0.01.
        assert!((f_finite - 7.0 / 15.0).abs() < 0.01, "{f_finite}");
        assert!((f_late - p1).abs() < 0.01, "{f_late}");
    }

    #[test]
    fn sample_larger_than_population_is_rejected() {
        let s = GenealogyState {
            track_from: 0,
            generation: 1,
            counts: vec![(Founder::Immigrant { arrival: 0, index: 0 }, 1)],
            immigration_log: vec![1],
        };
        assert!(matches!(
            quenched_prob(&s, 2, 0),
            Err(Error::SampleTooLarge { sample: 2, population: 1 })
        ));
        let tree = FullTree { n: 1, cohort: vec![1], parents: vec![vec![], vec![0]] };
        let mut rng = replicate_rng(0, 0);
        assert!(matches!(
            sample_coalescence(&tree, 2, &mut rng),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn population_cap_aborts_explosive_growth() {
        let m = model(&[(3, 1.0)], &[(2, 1.0)]);
        let cfg = SimConfig { population_cap: 10 };
        let mut rng = replicate_rng(0, 0);
        assert!(matches!(
            simulate(&m, 6, 0, &cfg, &mut rng),
            Err(Error::ResourceLimit { cap: 10, .. })
        ));
        let mut rng = replicate_rng(0, 0);
        assert!(matches!(
            simulate_full(&m, 6, &cfg, &mut rng),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn offspring_sum_is_exact_for_single_atoms_and_never_shrinks() {
        let f = DistSpec::new(&[(3, 1.0)]).unwrap();
        let mut rng = replicate_rng(0, 0);
        assert_eq!(offspring_sum(&f, 7, &mut rng), 21);
        assert_eq!(offspring_sum(&f, 0, &mut rng), 0);

        let f = DistSpec::new(&[(1, 0.3), (2, 0.5), (4, 0.2)]).unwrap();
        for rep in 0..50 {
            let mut rng = replicate_rng(8, rep);
            let total = offspring_sum(&f, 100, &mut rng);
            assert!((100..=400).contains(&total), "{total}");
        }
    }

    #[test]
    fn deterministic_martingale_values() {
        let m = doubling_unit();
        let mut rng = replicate_rng(0, 0);
        let s = martingale_sample(&m, 10, &SimConfig::default(), &mut rng).unwrap();
        assert!((s.first_line - 1.0).abs() < 1e-12);
        let x = expected_line_total(&m, 10);
        assert!((s.line_total - x).abs() < 1e-12);
        assert!((x - (2.0 - 2.0f64.powi(-9))).abs() < 1e-12);
        let v = expected_line_square_total(&m, 10);
        assert!((s.line_square_total - v).abs() < 1e-12);
        assert!((v - 4.0 / 3.0 * (1.0 - 4.0f64.powi(-10))).abs() < 1e-12);
        assert!(s.line_square_total < s.line_total * s.line_total);
    }

    #[test]
    fn limit_ratio_of_the_deterministic_model() {
        // Every replicate of the doubling model is the same tree, so the
        // estimator is exact: V / X^2 -> (4/3) / 4 = 1/3 as the horizon grows.
        let m = doubling_unit();
        let est = limit_law_estimate(&m, 0, 20, 10, 1, &SimConfig::default()).unwrap();
        assert!(est.std_error < 1e-15);
        assert_eq!(est.horizon_n, Some(20));
        assert!((est.estimate - 1.0 / 3.0).abs() < 3e-6, "{}", est.estimate);
    }
}
