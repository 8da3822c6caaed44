//! Runnable listings from the guide in `book/`.
//!
//! mdbook cannot test listings that depend on workspace crates, so each
//! chapter is included here as module docs and checked by `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/signals.md")]
pub mod signals {}
#[doc = include_str!("../../../book/src/emitter.md")]
pub mod emitter {}
#[doc = include_str!("../../../book/src/receiver.md")]
pub mod receiver {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/schemes.md")]
pub mod schemes {}
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
