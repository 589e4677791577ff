//! Parameter checkpoints: one JSON document mapping parameter name to
//! shape plus flat values. JSON floats use shortest round-trip formatting,
//! so load is value-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

pub const ENGINE_TAG: &str = "graphite-numerics/1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    engine: String,
    params: Vec<ParamRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn checkpoint_to_string(store: &ParamStore) -> Result<String> {
    let mut params = Vec::with_capacity(store.len());
    for (_, p) in store.iter() {
        if !p.value().all_finite() {
            return Err(Error::NonFinite { op: "checkpoint" });
        }
        params.push(ParamRecord {
            name: p.name().to_string(),
            shape: p.value().shape().to_vec(),
            data: p.value().data().to_vec(),
        });
    }
    let doc = CheckpointDoc {
        engine: ENGINE_TAG.to_string(),
        params,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Contract(e.to_string()))
}

pub fn checkpoint_from_str(text: &str, origin: &str) -> Result<ParamStore> {
    let doc: CheckpointDoc = serde_json::from_str(text)
        .map_err(|e| Error::schema(origin, format!("line {}", e.line()), e.to_string()))?;
    if doc.engine != ENGINE_TAG {
        return Err(Error::schema(
            origin,
            "engine",
            format!("expected {ENGINE_TAG}, found {}", doc.engine),
        ));
    }
    let mut store = ParamStore::new();
    for record in doc.params {
        let tensor = Tensor::from_shape(record.shape, record.data).map_err(|e| {
            Error::schema(origin, format!("param {}", record.name), e.to_string())
        })?;
        store.register(record.name, tensor)?;
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let text = checkpoint_to_string(store)?;
    crate::data::io::atomic_write(path, text.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    checkpoint_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_value_exact() {
        let mut store = ParamStore::new();
        store
            .register("w", Tensor::vector(vec![0.1, -1.0 / 3.0, 2.5e-17, 1e300]))
            .unwrap();
        store
            .register("b", Tensor::matrix(1, 2, vec![f64::MIN_POSITIVE, -0.0]).unwrap())
            .unwrap();
        let text = checkpoint_to_string(&store).unwrap();
        let loaded = checkpoint_from_str(&text, "test").unwrap();
        for (id, p) in store.iter() {
            let lid = loaded.lookup(p.name()).unwrap();
            assert_eq!(loaded.value(lid).shape(), store.value(id).shape());
            for (a, b) in loaded.value(lid).data().iter().zip(store.value(id).data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "param {}", p.name());
            }
        }
    }

    #[test]
    fn engine_tag_is_checked() {
        let text = r#"{"engine":"other/9","params":[]}"#;
        assert!(checkpoint_from_str(text, "test").is_err());
    }
}
