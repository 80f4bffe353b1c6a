//! Static features of ground answer set programs in smodels numeric format.

pub mod features;
pub mod smodels;

pub use features::{compute_static_features, emit_features, features_header, StaticFeatureVector, FEATURE_NAMES};
pub use smodels::{parse_smodels, write_smodels, GroundProgram, ParseError, ParseErrorKind, Rule, RuleKind};
