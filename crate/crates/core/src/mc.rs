//! Monte Carlo plumbing: replicate RNG streams, parallel replicate runs,
//! and numerically careful averaging.
//!
//! Every replicate gets its own counter-mode stream of the same seeded
//! ChaCha generator, so estimates are byte-identical for a given seed no
//! matter how many threads run the replicates or in what order they finish.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;

/// A Monte Carlo estimate with its standard error and enough metadata to
/// reproduce it exactly.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub seed: u64,
    /// Generation horizon used by limit-law estimators; absent elsewhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_n: Option<u32>,
}

/// Generator for one replicate: same key for every replicate, stream index
/// set to the replicate number.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Pairwise (cascade) summation; error grows like log(n) rather than n.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        len => {
            let (a, b) = xs.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Sample mean and its standard error sqrt(s^2 / r). A single replicate
/// reports zero error rather than dividing by zero.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let r = xs.len();
    assert!(r > 0, "no replicates");
    let mean = pairwise_sum(xs) / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (r as f64 - 1.0);
    (mean, (var / r as f64).sqrt())
}

/// Run `replicates` independent evaluations in parallel and average them.
/// Replicate order is fixed by the stream index, so the result does not
/// depend on the thread count.
pub fn run_replicates<F>(seed: u64, replicates: u64, f: F) -> Result<McEstimate, Error>
where
    F: Fn(&mut ChaCha12Rng) -> Result<f64, Error> + Sync,
{
    if replicates == 0 {
        return Err(Error::DomainError("replicate count must be positive".into()));
    }
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            f(&mut rng)
        })
        .collect::<Result<_, _>>()?;
    let (estimate, std_error) = mean_and_se(&values);
    Ok(McEstimate { estimate, std_error, replicates, seed, horizon_n: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (1..=101).map(|k| 1.0 / k as f64).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[3.5]), 3.5);
    }

    #[test]
    fn mean_and_se_known_values() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // s^2 = 5/3, se = sqrt(5/12).
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let (m, se) = mean_and_se(&[7.0]);
        assert_eq!(m, 7.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = replicate_rng(42, 0);
        let mut b = replicate_rng(42, 1);
        let mut a2 = replicate_rng(42, 0);
        let xa: f64 = a.random();
        let xb: f64 = b.random();
        let xa2: f64 = a2.random();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }

    #[test]
    fn estimate_is_thread_count_invariant() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                run_replicates(7, 400, |rng| Ok(rng.random::<f64>())).unwrap()
            })
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.estimate.to_bits(), four.estimate.to_bits());
        assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
    }

    #[test]
    fn zero_replicates_is_an_error() {
        assert!(matches!(
            run_replicates(1, 0, |_| Ok(0.0)),
            Err(Error::DomainError(_))
        ));
    }
}
