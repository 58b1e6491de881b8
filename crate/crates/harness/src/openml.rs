//! Downloads datasets from the OpenML HTTP API as CSV.
//!
//! The description endpoint gives the file id and default target; the CSV
//! endpoint gives the data. Files are written to a temporary path and
//! renamed, with a `.sha256` sidecar for idempotent re-fetching.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const BASE_URL_ENV: &str = "DIVBO_OPENML_URL";
pub const DEFAULT_BASE_URL: &str = "https://www.openml.org";

/// Largest accepted CSV body.
const MAX_BODY: u64 = 512 * 1024 * 1024;

pub fn base_url() -> String {
    std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: u64,
    pub name: String,
    pub file_id: u64,
    pub default_target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Downloaded(DatasetInfo),
    /// The file already matched its stored checksum.
    Cached,
}

#[derive(Deserialize)]
struct Envelope {
    data_set_description: Description,
}

#[derive(Deserialize)]
struct Description {
    name: String,
    file_id: serde_json::Value,
    default_target_attribute: Option<String>,
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn get(url: &str, id: u64) -> Result<ureq::Response> {
    match ureq::get(url).call() {
        Ok(r) => Ok(r),
        // OpenML answers unknown ids with 404 or 412.
        Err(ureq::Error::Status(404 | 412, _)) => Err(HarnessError::UnknownDataset(id)),
        Err(ureq::Error::Status(code, _)) => Err(HarnessError::Network(format!("{url}: HTTP {code}"))),
        Err(e) => Err(HarnessError::Network(format!("{url}: {e}"))),
    }
}

/// Resolves the dataset description.
pub fn describe(base: &str, id: u64) -> Result<DatasetInfo> {
    let url = format!("{}/api/v1/json/data/{id}", base.trim_end_matches('/'));
    let body = get(&url, id)?
        .into_string()
        .map_err(|e| HarnessError::Network(format!("{url}: {e}")))?;
    let env: Envelope =
        serde_json::from_str(&body).map_err(|e| HarnessError::MalformedPayload(format!("description: {e}")))?;
    let d = env.data_set_description;
    let file_id = match &d.file_id {
        serde_json::Value::String(s) => s.parse().ok(),
        serde_json::Value::Number(n) => n.as_u64(),
        _ => None,
    }
    .ok_or_else(|| HarnessError::MalformedPayload(format!("file_id {}", d.file_id)))?;
    Ok(DatasetInfo {
        id,
        name: d.name,
        file_id,
        default_target: d.default_target_attribute,
    })
}

/// Checks that `bytes` is a CSV with a header, at least one row, and a
/// consistent width.
fn check_csv(bytes: &[u8]) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(bytes);
    let width = reader
        .headers()
        .map_err(|e| HarnessError::MalformedPayload(format!("csv header: {e}")))?
        .len();
    let mut rows = 0;
    for r in reader.records() {
        r.map_err(|e| HarnessError::MalformedPayload(format!("csv row: {e}")))?;
        rows += 1;
    }
    if width == 0 || rows == 0 {
        return Err(HarnessError::MalformedPayload("csv has no header or no rows".into()));
    }
    Ok(())
}

/// True when `path` exists and matches its stored checksum.
pub fn is_cached(path: &Path) -> bool {
    let (Ok(data), Ok(sum)) = (fs::read(path), fs::read_to_string(sidecar(path, ".sha256"))) else {
        return false;
    };
    sha256_hex(&data) == sum.trim()
}

/// Downloads dataset `id` to `out` using the base URL from the environment.
pub fn fetch_openml(id: u64, out: impl AsRef<Path>) -> Result<FetchOutcome> {
    fetch_from(&base_url(), id, out)
}

pub fn fetch_from(base: &str, id: u64, out: impl AsRef<Path>) -> Result<FetchOutcome> {
    let out = out.as_ref();
    if is_cached(out) {
        return Ok(FetchOutcome::Cached);
    }
    let info = describe(base, id)?;
    let url = format!("{}/data/get_csv/{}", base.trim_end_matches('/'), info.file_id);
    let mut body = Vec::new();
    get(&url, id)?
        .into_reader()
        .take(MAX_BODY)
        .read_to_end(&mut body)
        .map_err(|e| HarnessError::Network(format!("{url}: {e}")))?;
    check_csv(&body)?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = sidecar(out, ".part");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&body)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, out)?;
    fs::write(sidecar(out, ".sha256"), sha256_hex(&body))?;
    fs::write(sidecar(out, ".meta.json"), serde_json::to_vec_pretty(&info)?)?;
    Ok(FetchOutcome::Downloaded(info))
}
