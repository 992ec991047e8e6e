use thiserror::Error;

/// Everything that can go wrong across the library.
///
/// Validation errors (`MassAtZero`, `NotSupercritical`, `BadPmf`,
/// `DomainError`, `SampleTooLarge`) mean the caller handed us something
/// outside the contract. `QuadratureFailure` means the integrator could not
/// certify its tolerance. `ResourceLimit` means a simulated population blew
/// through the configured cap; raise the cap rather than expecting silent
/// truncation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pmf puts mass at zero; lines must never die out, so all support values must be >= 1")]
    MassAtZero,

    #[error("offspring mean is {mu}, but the process must be supercritical (mean > 1)")]
    NotSupercritical { mu: f64 },

    #[error("invalid pmf: {0}")]
    BadPmf(String),

    #[error("out of domain: {0}")]
    DomainError(String),

    #[error("jets are anchored at different base points ({0} vs {1})")]
    BasePointMismatch(f64, f64),

    #[error("derivative order {requested} exceeds jet truncation order {order}")]
    OrderExceeded { requested: u32, order: u32 },

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("cannot draw {sample} distinct individuals from a population of {population}")]
    SampleTooLarge { sample: u32, population: u64 },

    #[error("population cap {cap} exceeded at generation {generation}")]
    ResourceLimit { cap: u64, generation: u32 },
}
