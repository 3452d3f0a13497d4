//! Line protocol for out-of-process oracles. Fields are tab-separated.
//!
//! Request: `id  wav_path  probe_hex`
//! Response: `id  detected  corrupted  bits_hex  queries_used` (`bits_hex`
//! empty in one-bit mode), or `id  ERR  reason` on refusal.

use std::io::{BufRead, Write};

use super::{DetectorOracle, OracleResponse};
use crate::audio::load_wav;
use crate::error::{Error, Result};
use crate::schemes::Message;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub id: String,
    pub wav_path: String,
    pub probe_hex: String,
}

impl Request {
    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        match f.as_slice() {
            [id, path, probe] if !id.is_empty() && !path.is_empty() => Ok(Self {
                id: id.to_string(),
                wav_path: path.to_string(),
                probe_hex: probe.to_string(),
            }),
            _ => Err(Error::Protocol(format!("malformed request {line:?}"))),
        }
    }

    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.id, self.wav_path, self.probe_hex)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Answer { id: String, response: OracleResponse },
    Refused { id: String, reason: String },
}

impl Reply {
    pub fn to_line(&self) -> String {
        match self {
            Reply::Answer { id, response } => format!(
                "{id}\t{}\t{}\t{}\t{}",
                response.detected as u8,
                response.corrupted as u8,
                response.bits.as_ref().map(Message::to_hex).unwrap_or_default(),
                response.queries_used
            ),
            Reply::Refused { id, reason } => format!("{id}\tERR\t{reason}"),
        }
    }

    /// `bits_len` is the message length needed to decode `bits_hex`.
    pub fn parse(line: &str, bits_len: usize) -> Result<Self> {
        let bad = || Error::Protocol(format!("malformed response {line:?}"));
        let f: Vec<&str> = line.split('\t').collect();
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad()),
        };
        match f.as_slice() {
            [id, "ERR", reason] => Ok(Reply::Refused {
                id: id.to_string(),
                reason: reason.to_string(),
            }),
            [id, detected, corrupted, bits, used] => Ok(Reply::Answer {
                id: id.to_string(),
                response: OracleResponse {
                    detected: flag(detected)?,
                    corrupted: flag(corrupted)?,
                    bits: if bits.is_empty() {
                        None
                    } else {
                        Some(Message::from_hex(bits, bits_len)?)
                    },
                    queries_used: used.parse().map_err(|_| bad())?,
                },
            }),
            _ => Err(bad()),
        }
    }
}

/// Answer one request line.
pub fn handle(oracle: &mut DetectorOracle, line: &str) -> Reply {
    let id = line.split('\t').next().unwrap_or("").to_string();
    let answer = Request::parse(line).and_then(|req| {
        let probe = Message::from_hex(&req.probe_hex, oracle.probe_bits())?;
        let clip = load_wav(&req.wav_path)?;
        oracle.query(&clip, &probe)
    });
    match answer {
        Ok(response) => Reply::Answer { id, response },
        Err(e) => Reply::Refused {
            id,
            reason: e.to_string().replace(['\t', '\n'], " "),
        },
    }
}

/// Serve requests until end of input; blank lines are skipped.
pub fn serve<R: BufRead, W: Write>(oracle: &mut DetectorOracle, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        writeln!(output, "{}", handle(oracle, line).to_line())?;
        output.flush()?;
    }
    Ok(())
}
