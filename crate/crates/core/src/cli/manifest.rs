use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of one command run. Holds nothing time-dependent, so reruns with
/// the same inputs produce byte-identical files; wall-clock goes to a
/// separate timing sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    pub label: String,
    pub dataset: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// Role -> sha256 of the input file.
    pub inputs: BTreeMap<String, String>,
    /// Role -> sha256 of each artifact written.
    pub outputs: BTreeMap<String, String>,
    pub results: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

pub const TRAIN_MANIFEST: &str = "train_manifest.json";
pub const EVAL_MANIFEST: &str = "eval_manifest.json";

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::config(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// `timing.json` style sidecar: `{"wall_clock_secs": ...}`.
pub fn write_timing(path: &Path, secs: f64) -> Result<()> {
    let text = format!("{{\"wall_clock_secs\": {secs}}}\n");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// All files named `name` under `roots`, sorted.
pub fn find_files(roots: &[PathBuf], name: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack: Vec<PathBuf> = roots.to_vec();
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for entry in fs::read_dir(&p).map_err(|e| Error::io(&p, e))? {
                stack.push(entry.map_err(|e| Error::io(&p, e))?.path());
            }
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// `data/syn1_test.csv` -> `syn1`
pub fn dataset_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    stem.strip_suffix("_train")
        .or_else(|| stem.strip_suffix("_test"))
        .unwrap_or(stem)
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest {
            command: "eval".into(),
            status: "ok".into(),
            seed: 3,
            ..RunManifest::default()
        };
        m.results.insert("auc".into(), 0.7012345678901234);
        let p = dir.path().join(EVAL_MANIFEST);
        m.write(&p).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
        assert!(!m.to_json().unwrap().contains("failure"));
    }

    #[test]
    fn names() {
        assert_eq!(dataset_name(Path::new("d/syn2_test.csv")), "syn2");
        assert_eq!(dataset_name(Path::new("mine.csv")), "mine");
    }
}
