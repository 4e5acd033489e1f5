//! Book snippets are compiled here as doc-tests.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/panels.md")]
pub mod panels {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/engine.md")]
pub mod engine {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
