//! Peak detectors built as expression pipelines over spectrogram and signal
//! streams.

use std::sync::Arc;

use crate::schema::DataItemSchema;

pub mod mdt;
pub mod wpb;
pub mod wpm;

pub use mdt::{detect_mdt, detect_mdt_direct, mdt_expr, mdt_thev, MdtParams, MdtState};
pub use wpb::{detect_wpb, latest_peak, one_bl, wpb_expr, WpbParams};
pub use wpm::{
    conn_delta, detect_wpm, local_max, one_max, peak_times, repeat_select_coef, select_coef,
    union_times, wpm_expr, WpmParams,
};

/// One detected peak: sample index plus the corresponding time.
#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub time: f64,
}

/// Sorted detector output with its provenance.
#[derive(Debug, Clone)]
pub struct PeakAnnotation {
    pub detector: String,
    /// Parameterization the peaks were produced under.
    pub settings: String,
    pub peaks: Vec<Peak>,
}

impl PeakAnnotation {
    pub fn indices(&self) -> Vec<usize> {
        self.peaks.iter().map(|p| p.index).collect()
    }
}

/// Schema of derived scalar streams flowing between pipeline stages.
pub(crate) fn derived_reals() -> Arc<DataItemSchema> {
    DataItemSchema::single("value", crate::schema::FieldKind::Real)
}
