//! Site-specific transmitter placement.
//!
//! `txplace` computes SNR fields for candidate transmitter sites over a 2.5D
//! urban scene and chooses a deployment by greedy maximization of an
//! expected-utility functional of the aggregated signal quality. The modules
//! follow the pipeline:
//!
//! - [`scene`]: domain, buildings, receiver grid, candidate sites
//! - [`propagation`]: per-site SNR fields, field exchange files, field cache
//! - [`metrics`]: SINR, interference, Shannon rate and summary reports
//! - [`objective`]: utility families, priority density, `S(T)` and gains
//! - [`optimizer`]: the ε-greedy selection loop
//! - [`oracle`]: brute force, bound certification, baselines, property checks
//! - [`scenario`]: the TOML scenario format
//!
//! ```
//! use txplace::scenario::Scenario;
//! use txplace::optimizer::ia_spa;
//!
//! let text = r#"
//! [bounds]
//! min = [0.0, 0.0]
//! max = [100.0, 100.0]
//! [grid]
//! spacing = 10.0
//! receiver_height = 1.5
//! [materials]
//! concrete = 0.5
//! [candidates]
//! pitch = 25.0
//! mount_height = 20.0
//! [optimizer]
//! budget = 2
//! "#;
//! let scenario = Scenario::from_toml_str(text, ".")?;
//! let prepared = scenario.prepare(None)?;
//! let result = ia_spa(&prepared.problem, &prepared.config)?;
//! assert_eq!(result.selection.selected.len(), 2);
//! # Ok::<(), txplace::Error>(())
//! ```

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod propagation;
pub mod scenario;
pub mod scene;

pub use error::{Error, Result};

/// Version string embedded in every artifact header.
pub const VERSION: &str = concat!("txplace ", env!("CARGO_PKG_VERSION"));

/// Runs the Rust snippets of the guide in `book/` as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/placement.md")]
    mod placement {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
