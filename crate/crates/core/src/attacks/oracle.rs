use sha2::{Digest, Sha256};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::schemes::{Message, WatermarkScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Only whether the probe message was corrupted.
    OneBit,
    /// Also the decoded message.
    FullMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub detected: bool,
    /// The decoded message differs from the probe, or detection failed.
    pub corrupted: bool,
    /// Decoded message, in full-message mode only.
    pub bits: Option<Message>,
    pub queries_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    /// SHA-256 over the clip samples and the probe bits.
    pub digest: String,
    pub response: OracleResponse,
}

/// The owner's detector behind a query counter.
#[derive(Debug, Clone)]
pub struct DetectorOracle {
    detector: WatermarkScheme,
    budget: usize,
    used: usize,
    mode: OracleMode,
    log: Vec<QueryRecord>,
}

impl DetectorOracle {
    pub fn new(detector: WatermarkScheme, budget: usize, mode: OracleMode) -> Self {
        Self {
            detector,
            budget,
            used: 0,
            mode,
            log: Vec::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.used
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn probe_bits(&self) -> usize {
        self.detector.payload_bits()
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    /// One detector call. Refused without side effects once the budget is spent.
    pub fn query(&mut self, clip: &AudioClip, probe: &Message) -> Result<OracleResponse> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted { budget: self.budget });
        }
        if probe.len() != self.detector.payload_bits() {
            return Err(Error::LengthMismatch {
                left: probe.len(),
                right: self.detector.payload_bits(),
            });
        }
        let det = self.detector.detect(clip)?;
        self.used += 1;
        let response = OracleResponse {
            detected: det.detected,
            corrupted: det.decoded.as_ref() != Some(probe),
            bits: match self.mode {
                OracleMode::OneBit => None,
                OracleMode::FullMessage => det.decoded,
            },
            queries_used: self.used,
        };
        let mut h = Sha256::new();
        h.update(clip.digest_bytes());
        h.update(probe.bits());
        self.log.push(QueryRecord {
            digest: hex::encode(h.finalize()),
            response: response.clone(),
        });
        Ok(response)
    }
}
