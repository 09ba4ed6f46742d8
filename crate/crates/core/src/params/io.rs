//! Versioned, self-describing model file (JSON).

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabularies;
use crate::error::{Error, Result};

use super::{ModelParams, StructureConfig};

pub const FORMAT_NAME: &str = "frame-induction-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub structure: StructureConfig,
    pub vocab: Vocabularies,
    pub params: ModelParams,
    /// Free-form training-run metadata (echoed configuration, schedule).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ModelFile {
    pub fn new(params: ModelParams, vocab: Vocabularies, metadata: serde_json::Value) -> Self {
        ModelFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            structure: params.structure(),
            vocab,
            params,
            metadata,
        }
    }
}

pub fn serialize(file: &ModelFile) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(file).expect("model files serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

pub fn deserialize(bytes: &[u8]) -> Result<ModelFile> {
    let header: Header = serde_json::from_slice(bytes)
        .map_err(|e| Error::CorruptPayload(format!("not a model document: {e}")))?;
    if header.format.as_deref() != Some(FORMAT_NAME) {
        return Err(Error::CorruptPayload(format!(
            "unexpected format tag {:?}",
            header.format
        )));
    }
    match header.version {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::CorruptPayload("missing version".into())),
    }
    let file: ModelFile =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    file.params
        .validate(1e-6)
        .map_err(|e| Error::CorruptPayload(e.to_string()))?;
    if file.params.structure() != file.structure {
        return Err(Error::CorruptPayload(
            "declared structure does not match the tables".into(),
        ));
    }
    if file.params.vocab_sizes() != file.vocab.sizes() {
        return Err(Error::CorruptPayload(
            "vocabulary sizes do not match the tables".into(),
        ));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::params::{init_model, Smoothing};

    fn sample() -> ModelFile {
        let vocab = Vocabularies {
            event_heads: Vocabulary::from_tokens(["bomb", "kill"]),
            arg_heads: Vocabulary::from_tokens(["guerrilla"]),
            caseframes: Vocabulary::from_tokens(["bomb>nsubj", "kill>dobj"]),
        };
        let config = StructureConfig::initial(2, 1, 2);
        let params = init_model(&config, vocab.sizes(), 3, 0.2, 0.5, Smoothing::default()).unwrap();
        ModelFile::new(params, vocab, serde_json::json!({"seed": 3}))
    }

    #[test]
    fn round_trip_is_exact() {
        let file = sample();
        let back = deserialize(&serialize(&file)).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = serialize(&sample());
        let err = deserialize(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::CorruptPayload(_)));
    }

    #[test]
    fn other_version_is_rejected() {
        let mut value: serde_json::Value = serde_json::from_slice(&serialize(&sample())).unwrap();
        value["version"] = serde_json::json!(99);
        let err = deserialize(&serde_json::to_vec(&value).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Version { found: 99, .. }));
    }

    #[test]
    fn unnormalized_table_is_corrupt() {
        let mut value: serde_json::Value = serde_json::from_slice(&serialize(&sample())).unwrap();
        value["params"]["frame_init"][0] = serde_json::json!(0.9);
        value["params"]["frame_init"][1] = serde_json::json!(0.9);
        let err = deserialize(&serde_json::to_vec(&value).unwrap()).unwrap_err();
        assert!(matches!(err, Error::CorruptPayload(_)));
    }
}
