//! Motion-artifact filtering and dynamic-contrast imaging for dynamic
//! full-field OCT stacks.
//!
//! The pipeline is: [`svdfilter::filter_stack`] removes bulk-motion
//! components from a [`Stack`], then [`dynamic::dyn_std`] or
//! [`dynamic::dyn_cumsum`] turns the stack into a [`DynamicImage`], and
//! [`metrics`] scores the image against a cell mask. [`simulate`] produces
//! synthetic stacks with known ground truth.

pub mod dynamic;
pub mod error;
pub mod io;
pub mod metrics;
pub mod simulate;
pub mod stack;
pub mod svdfilter;

pub use dynamic::{dyn_cumsum, dyn_std, DynConfig, DynMethod};
pub use error::{Error, ParseErrorKind, Result};
pub use io::{FilterReport, MaskImage};
pub use metrics::{snr_gain, snr_per_cell, SnrReport};
pub use simulate::{simulate_stack, SceneSpec, SimConfig, SimGroundTruth};
pub use stack::{fold, unfold, DynamicImage, Stack, SvdFactors, UnfoldedMatrix};
pub use svdfilter::{filter_stack, FilterConfig};
