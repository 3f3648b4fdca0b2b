//! Open zero-shot learning at desk scale.
//!
//! A variationally-conditioned WGAN generates visual features for seen and
//! unseen classes from their class embeddings, complementary sampling
//! invents embeddings for classes nobody described, and an Openmax head
//! rejects what it does not recognise. [`metrics`] scores the result with
//! per-class F1 over seen and unseen classes plus the F1 of the unknown
//! bin.
//!
//! ```
//! use ozsl::metrics::h_ozsl;
//!
//! let h = h_ozsl(0.6148, 0.3929);
//! assert_eq!(ozsl::metrics::format_percent(h), "47.94");
//! ```

pub mod autodiff;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod openset;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod sampling;
pub mod vacwgan;

pub use error::{Error, Result};
pub use linalg::Matrix;

/// The guide's chapters, compiled so their snippets stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/unknowns.md")]
    struct Unknowns;
    #[doc = include_str!("../../../book/src/openset.md")]
    struct Openset;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    struct Reproducibility;
}
