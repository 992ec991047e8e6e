//! Coalescence times in supercritical branching processes with immigration.
//!
//! A population starts empty, receives a random batch of immigrants every
//! generation, and every member leaves at least one offspring. Sample `i`
//! members of generation `n` and ask when their ancestral lines first merge:
//! at a shared ancestor in some generation m, at a shared founding immigrant
//! (counted at its arrival), or never, when the sample straddles several
//! immigrant families.
//!
//! The crate computes that law exactly, by adaptive quadrature over products
//! of iterated generating functions ([`exact`]), estimates it by simulating
//! genealogies at two levels of resolution ([`sim`]), and evaluates its
//! large-n limit through almost-sure line growth rates. Closed-form values
//! for special models ([`oracle`]) pin all routes down.

pub mod dist;
mod error;
pub mod exact;
pub mod jet;
pub mod mc;
pub mod oracle;
pub mod quad;
pub mod sim;

pub use dist::{DistSpec, ModelSpec};
pub use error::Error;
pub use exact::{
    full_distribution, prob_infinity, prob_tail, CoalescenceDistribution, CoalescenceQuery,
    ExactOptions,
};
pub use mc::McEstimate;
pub use sim::{
    annealed_estimate, direct_sample_estimate, limit_law_estimate, Founder, FullTree,
    GenealogyState, MartingaleSample, SimConfig,
};
