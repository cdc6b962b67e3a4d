//! Versioned artifact files.
//!
//! Every artifact this crate writes (traces, route profiles, models, reports)
//! is a JSON text file whose first two fields are `format` and `version`.
//! Loading rejects unknown formats and versions instead of guessing.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    payload: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Serializes `payload` under the given format tag. The header fields come
/// first, so the file literally begins with its version information.
pub fn to_string<T: Serialize>(format: &str, payload: &T) -> Result<String> {
    let env = Envelope {
        format,
        version: VERSION,
        payload,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn save<T: Serialize>(path: impl AsRef<Path>, format: &str, payload: &T) -> Result<()> {
    let text = to_string(format, payload)?;
    fs::write(path, text)?;
    Ok(())
}

/// Parses an artifact, checking the format tag and version before decoding
/// the payload.
pub fn from_str<T: DeserializeOwned>(text: &str, format: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != format {
        return Err(Error::invalid(format!(
            "expected a `{format}` artifact, found `{}`",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(Error::Version {
            kind: format.to_string(),
            found: header.version,
            expected: VERSION,
        });
    }
    Ok(serde_json::from_str(text)?)
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, format: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_str(&text, format)
}
