//! Run directories and their manifests.
//!
//! Every command ends by writing `manifest.json`: the argv it was launched
//! with, the effective config text, the environment description, and an
//! FNV-1a checksum inventory of every artifact. The manifest is written
//! last, so its presence marks a run that finished.

use cae_core::env::EnvSpec;
use cae_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// FNV-1a, 64-bit. Stable, dependency-free content fingerprint; not
/// cryptographic, just enough to notice a changed or truncated artifact.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: u64,
    pub fnv1a64: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub code_version: String,
    pub env: EnvSpec,
    /// FNV-1a of the environment description's JSON form.
    pub env_spec_hash: String,
    /// The effective `key = value` config after command-line overrides;
    /// parsing and re-serializing this text reproduces it byte for byte.
    pub config: String,
    pub config_hash: String,
    pub outputs: Vec<OutputRecord>,
}

/// An output directory plus the list of files registered into it. Files are
/// recorded through [`RunDir::file`] so nothing escapes the manifest.
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `<parent>/<utc-stamp>-<seed>`, suffixing `.2`, `.3`, ... if a
    /// run in the same second already claimed the name.
    pub fn create(parent: &Path, seed: u64) -> Result<RunDir> {
        std::fs::create_dir_all(parent)?;
        let stamp = utc_stamp();
        let mut name = format!("{stamp}-{seed}");
        let mut k = 1;
        loop {
            let path = parent.join(&name);
            match std::fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(RunDir {
                        path,
                        files: Vec::new(),
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    k += 1;
                    name = format!("{stamp}-{seed}.{k}");
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Registers `name` as an artifact and returns its full path.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.path.join(name)
    }

    /// Verifies every registered artifact exists and is non-empty, then
    /// writes `manifest.json` (always the last file to appear).
    pub fn finish(
        self,
        command: &str,
        argv: &[String],
        seed: u64,
        spec: &EnvSpec,
        config_text: &str,
    ) -> Result<()> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.path.join(name);
            let data = std::fs::read(&path).map_err(|e| {
                Error::contract(format!("declared artifact `{name}` is unreadable: {e}"))
            })?;
            if data.is_empty() {
                return Err(Error::contract(format!("declared artifact `{name}` is empty")));
            }
            outputs.push(OutputRecord {
                file: name.clone(),
                bytes: data.len() as u64,
                fnv1a64: format!("{:016x}", fnv1a64(&data)),
            });
        }
        let spec_json = serde_json::to_string(spec)?;
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            env: spec.clone(),
            env_spec_hash: format!("{:016x}", fnv1a64(spec_json.as_bytes())),
            config: config_text.to_string(),
            config_hash: format!("{:016x}", fnv1a64(config_text.as_bytes())),
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.path.join("manifest.json"), text)?;
        Ok(())
    }
}

/// `yyyymmdd-hhmmss` in UTC, from the system clock only.
fn utc_stamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (y, m, d) = civil_from_days((secs / 86_400) as i64);
    let rem = secs % 86_400;
    format!(
        "{y:04}{m:02}{d:02}-{:02}{:02}{:02}",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

/// Days since 1970-01-01 to a (year, month, day) civil date (proleptic
/// Gregorian; the standard era-decomposition algorithm).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_vectors() {
        // Published FNV-1a 64 reference values.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn civil_dates() {
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(civil_from_days(19_723), (2024, 1, 1));
        // Leap day.
        assert_eq!(civil_from_days(19_782), (2024, 2, 29));
        assert_eq!(civil_from_days(-1), (1969, 12, 31));
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = std::env::temp_dir().join(format!("cae-manifest-test-{}", std::process::id()));
        let a = RunDir::create(&tmp, 7).unwrap();
        let b = RunDir::create(&tmp, 7).unwrap();
        assert_ne!(a.path, b.path);
        std::fs::remove_dir_all(&tmp).unwrap();
    }
}
