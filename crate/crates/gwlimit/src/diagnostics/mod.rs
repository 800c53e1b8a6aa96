//! Checks of the moment hypotheses, the tightness bound, the contraction of
//! the smoothing map and the martingale limit statistics, plus a brute-force
//! oracle for the partition expansion.

mod contraction;
mod hmom;
mod kesten;
mod oracle;
mod tightness;

use std::io::Write;

use crate::error::Result;

pub use contraction::{iterate_smoothing_map, wasserstein_contraction_test, ContractionConfig, ContractionReport, MapIteration};
pub use hmom::{check_hmom, identity_direct, identity_from_factorial_moments, HMomCertificate, HMomFamily, IDENTITY_TERMS};
pub use kesten::{kesten_stigum_check, ConditionedMomentCheck, KestenStigumPoint, KestenStigumReport};
pub use oracle::{brute_force_s_product, random_tabular, MomentAssignment};
pub use tightness::{tightness_scan, TightnessConfig, TightnessReport, TripleResult};

/// Shared output surface of the diagnostic reports.
pub trait Report: serde::Serialize {
    fn passed(&self) -> bool;

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("reports serialize")
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()>;
}
