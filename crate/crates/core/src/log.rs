//! Sampled cycler record shared by the simulator, the CSV reader and every
//! estimator.

use serde::{Deserialize, Serialize};

use crate::ecm::GROUPS_PER_PACK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Pack current, positive charging. Held over the interval ending at `t`.
    pub i_pack: f64,
    pub v: [f64; GROUPS_PER_PACK],
    pub step_index: usize,
}

/// Which current direction a recorded file calls positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    #[default]
    ChargePositive,
    DischargePositive,
}

impl SignConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            SignConvention::ChargePositive => "charge_positive",
            SignConvention::DischargePositive => "discharge_positive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "charge_positive" => Some(SignConvention::ChargePositive),
            "discharge_positive" => Some(SignConvention::DischargePositive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetadata {
    pub pack_id: String,
    pub sequence_name: String,
    pub nominal_capacity_ah: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesLog {
    pub metadata: LogMetadata,
    pub samples: Vec<Sample>,
}

impl TimeSeriesLog {
    pub fn new(metadata: LogMetadata) -> Self {
        Self {
            metadata,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Keeps every `factor`-th sample counted from the first one, the way a
    /// slower logger on the same channel would have recorded it.
    pub fn decimate(&self, factor: usize) -> TimeSeriesLog {
        assert!(factor >= 1, "decimation factor must be >= 1");
        TimeSeriesLog {
            metadata: self.metadata.clone(),
            samples: self.samples.iter().step_by(factor).copied().collect(),
        }
    }
}
