//! Versioned binary snapshot of a training run.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"DPSSGDCK"
//! u32    format version
//! u64    length of the JSON header, then the header itself
//! u64    parameter count, then that many f64
//! ```
//!
//! The header carries everything except the parameters: model spec,
//! pre-pruned ids, accountant parts, normalization statistics, step and seed.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Model, ModelSpec};
use crate::data::Normalization;
use crate::error::{DpError, Result};
use crate::mask::IndexMask;
use crate::privacy::AccountantState;

const MAGIC: &[u8; 8] = b"DPSSGDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Accountant contents needed to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountantParts {
    pub q: f64,
    pub sigma: f64,
    pub orders: Vec<f64>,
    pub steps: u64,
}

impl AccountantParts {
    pub fn of(state: &AccountantState) -> Self {
        Self {
            q: state.q(),
            sigma: state.sigma(),
            orders: state.orders().to_vec(),
            steps: state.steps(),
        }
    }

    pub fn restore(&self) -> Result<AccountantState> {
        AccountantState::from_parts(self.q, self.sigma, self.orders.clone(), self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    pre_pruned: Vec<usize>,
    accountant: Option<AccountantParts>,
    eps_pp: f64,
    delta: f64,
    normalization: Option<Normalization>,
    step: u64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Vec<f64>,
    pub pre_pruned: Vec<usize>,
    /// `None` for noiseless runs, which have no finite privacy guarantee.
    pub accountant: Option<AccountantParts>,
    pub eps_pp: f64,
    pub delta: f64,
    pub normalization: Option<Normalization>,
    pub step: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::with_params(self.spec.clone(), self.params.clone())
    }

    pub fn pre_pruned_mask(&self, model: &Model) -> Result<IndexMask> {
        IndexMask::new(model.layout(), self.pre_pruned.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            spec: self.spec.clone(),
            pre_pruned: self.pre_pruned.clone(),
            accountant: self.accountant.clone(),
            eps_pp: self.eps_pp,
            delta: self.delta,
            normalization: self.normalization.clone(),
            step: self.step,
            seed: self.seed,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(28 + json.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).unwrap();
        out.write_u64::<LittleEndian>(json.len() as u64).unwrap();
        out.extend_from_slice(&json);
        out.write_u64::<LittleEndian>(self.params.len() as u64)
            .unwrap();
        for &p in &self.params {
            out.write_f64::<LittleEndian>(p).unwrap();
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |offset: u64, message: String| DpError::Format {
            path: path.to_path_buf(),
            offset,
            message,
        };
        let mut cur = Cursor::new(bytes);
        let truncated = |cur: &Cursor<&[u8]>| format(cur.position(), "truncated checkpoint".into());

        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| truncated(&cur))?;
        if &magic != MAGIC {
            return Err(format(0, "not a checkpoint file".into()));
        }
        let version = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| truncated(&cur))?;
        if version != CHECKPOINT_VERSION {
            return Err(format(
                8,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let len = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| truncated(&cur))?;
        let start = cur.position();
        let end = start
            .checked_add(len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| {
                format(
                    start,
                    format!("header of {len} bytes runs past end of file"),
                )
            })?;
        let header: Header = serde_json::from_slice(&bytes[start as usize..end as usize])
            .map_err(|e| format(start, format!("bad header: {e}")))?;
        cur.set_position(end);
        let n = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| truncated(&cur))?;
        let available = (bytes.len() as u64 - cur.position()) / 8;
        if n != available || !(bytes.len() as u64 - cur.position()).is_multiple_of(8) {
            return Err(format(
                cur.position(),
                format!(
                    "expected {n} parameters, found {} bytes",
                    bytes.len() as u64 - cur.position()
                ),
            ));
        }
        let mut params = vec![0.0; n as usize];
        cur.read_f64_into::<LittleEndian>(&mut params)
            .map_err(|_| truncated(&cur))?;
        Ok(Self {
            spec: header.spec,
            params,
            pre_pruned: header.pre_pruned,
            accountant: header.accountant,
            eps_pp: header.eps_pp,
            delta: header.delta,
            normalization: header.normalization,
            step: header.step,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| DpError::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| DpError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DpError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::LayerSpec;

    fn sample() -> Checkpoint {
        Checkpoint {
            spec: ModelSpec {
                input_shape: vec![3],
                layers: vec![LayerSpec::FullyConnected {
                    out_features: 2,
                    in_features: 3,
                    bias: true,
                }],
            },
            params: vec![0.5, -1.0, 1e-300, f64::MIN_POSITIVE, 3.0, -0.0, 7.0, 8.0],
            pre_pruned: vec![2, 5],
            accountant: Some(AccountantParts {
                q: 0.01,
                sigma: 1.1,
                orders: vec![2.0, 4.5],
                steps: 40,
            }),
            eps_pp: 0.3,
            delta: 1e-5,
            normalization: Some(Normalization {
                mean: vec![0.1],
                std: vec![0.3],
            }),
            step: 40,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params[5].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn accountant_restores() {
        let ck = sample();
        let acc = ck.accountant.as_ref().unwrap().restore().unwrap();
        assert_eq!(acc.steps(), 40);
        assert_eq!(AccountantParts::of(&acc), *ck.accountant.as_ref().unwrap());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 12, 30, bytes.len() - 3] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut], Path::new("x")),
                Err(DpError::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad, Path::new("x")),
            Err(DpError::Format { offset: 0, .. })
        ));
    }
}
