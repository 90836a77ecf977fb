//! Linear filter design and execution.
//!
//! IIR designs are Bessel-Thomson prototypes mapped with the pre-warped
//! bilinear transform; the complementary bandpass/bandstop pair and the
//! decimation filter are Kaiser-windowed linear-phase FIRs.

mod bessel;
mod fir;
mod iir;
mod response;

pub use bessel::{
    analog_poles, design_bessel_lowpass, design_codesigned_pair, design_front_end,
    design_highpass1, AnalogSection, MAX_ORDER,
};
pub use fir::{
    decimate, default_pair_taps, design_complementary_pair, kaiser_beta, kaiser_length,
    kaiser_window, windowed_lowpass, ComplementaryPair, Decimator, FirFilter,
    DECIMATION_ATTENUATION_DB, PAIR_ATTENUATION_DB,
};
pub use iir::{DesignMeta, FilterCascade, Sos};
pub use response::{
    measure_time_bandwidth, measure_time_bandwidth_fir, three_db_band, three_db_bandwidth,
    time_bandwidth_of_taps, GAUSSIAN_TIME_BANDWIDTH,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::signal::{Processor, SampleStream};

/// Causal filtering of a whole stream; state carries over between calls.
pub fn run_filter<P: Processor + ?Sized>(f: &mut P, s: &SampleStream) -> SampleStream {
    f.run(s)
}

/// Structured description of a design for run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterDescriptor {
    pub family: String,
    pub order: usize,
    pub corners: Vec<f64>,
    pub sections: Vec<[f64; 5]>,
    pub num_taps: usize,
    pub digest: String,
}

fn digest(values: impl Iterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl FilterCascade {
    pub fn describe(&self) -> FilterDescriptor {
        let sections: Vec<[f64; 5]> = self.sections().iter().map(Sos::as_array).collect();
        FilterDescriptor {
            family: self.meta().family.clone(),
            order: self.meta().order,
            corners: self.meta().corners.clone(),
            digest: digest(sections.iter().flatten().copied()),
            sections,
            num_taps: 0,
        }
    }
}

impl FirFilter {
    pub fn describe(&self, family: &str) -> FilterDescriptor {
        FilterDescriptor {
            family: family.into(),
            order: self.len().saturating_sub(1),
            corners: vec![],
            sections: vec![],
            num_taps: self.len(),
            digest: digest(self.taps().iter().copied()),
        }
    }
}
