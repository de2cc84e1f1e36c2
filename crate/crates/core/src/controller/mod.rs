//! Inference-time controller: steering composition, ternary gate,
//! single-shot injection and the portable asset bundle.

mod bundle;
mod decide;
mod mode;

pub use bundle::{load_bundle, save_bundle, AssetBundle, Precision, BUNDLE_VERSION, UNIT_TOLERANCE};
pub use decide::{apply_injection, gate, OperatingPoint, SteerDecision};
pub use mode::Mode;

#[cfg(test)]
pub(crate) use bundle::tests::toy_bundle;
