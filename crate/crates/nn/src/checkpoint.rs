//! Versioned JSON checkpoints of a [`ParamStore`].
//!
//! The file is a single JSON object:
//!
//! ```text
//! {"format":"attnhar-checkpoint","version":1,"header":{...},
//!  "params":[{"name":..,"kind":..,"shape":[..],"values":[..]}, ...]}
//! ```
//!
//! Floats are written with shortest round-trip formatting, so
//! save → load → save reproduces the bytes exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::param::{ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const FORMAT: &str = "attnhar-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Free-form architecture description supplied by the model owner.
    pub header: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_store(header: serde_json::Value, store: &ParamStore) -> Self {
        let params = store
            .entries()
            .iter()
            .map(|e| ParamRecord {
                name: e.name.clone(),
                kind: e.kind,
                shape: e.param.value.shape().to_vec(),
                values: e.param.value.data().to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            header,
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.format != FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                ck.version
            )));
        }
        for r in &ck.params {
            if r.shape.iter().product::<usize>() != r.values.len() {
                return Err(NnError::Checkpoint(format!(
                    "{}: shape {:?} does not match {} values",
                    r.name,
                    r.shape,
                    r.values.len()
                )));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Overwrites every entry of `store` with the stored values. The
    /// checkpoint must contain exactly the store's entries with identical
    /// kinds and shapes.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for r in &self.params {
            let id = store
                .find(&r.name)
                .ok_or_else(|| NnError::Checkpoint(format!("unexpected array {}", r.name)))?;
            let entry = store.entry(id);
            if entry.kind != r.kind || entry.param.value.shape() != r.shape.as_slice() {
                return Err(NnError::Checkpoint(format!(
                    "{}: expected {:?} {:?}, found {:?} {:?}",
                    r.name,
                    entry.kind,
                    entry.param.value.shape(),
                    r.kind,
                    r.shape
                )));
            }
            store.param_mut(id).value = Tensor::new(r.shape.clone(), r.values.clone())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "w",
            ParamKind::Weight,
            Tensor::new(vec![2, 2], vec![0.1, -1.0 / 3.0, 1e-310, 7.25]).unwrap(),
        );
        s.add("b", ParamKind::Bias, Tensor::from_vec(vec![std::f64::consts::PI]));
        s
    }

    #[test]
    fn byte_stable_round_trip() {
        let ck = Checkpoint::from_store(serde_json::json!({"arch": "t"}), &store());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let mut fresh = store();
        fresh.param_mut(fresh.find("w").unwrap()).value.fill(0.0);
        back.apply_to(&mut fresh).unwrap();
        assert_eq!(fresh, store());
    }

    #[test]
    fn rejects_shape_change() {
        let ck = Checkpoint::from_store(serde_json::Value::Null, &store());
        let mut other = ParamStore::new();
        other.add("w", ParamKind::Weight, Tensor::zeros(&[4]));
        other.add("b", ParamKind::Bias, Tensor::zeros(&[1]));
        assert!(matches!(ck.apply_to(&mut other), Err(NnError::Checkpoint(_))));
    }

    #[test]
    fn rejects_wrong_version() {
        let mut ck = Checkpoint::from_store(serde_json::Value::Null, &store());
        ck.version = 99;
        let bytes = serde_json::to_vec(&ck).unwrap();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
