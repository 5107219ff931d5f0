//! Output directory handling and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects the files written by one command so the manifest can list them.
pub struct OutDir {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> geoshape::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(name, &text)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write_with(name, |w| {
            w.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    /// Writes `manifest.json` listing the configuration, every input file with
    /// its SHA-256, and every output written so far.
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, inputs: &[&Path]) -> Result<(), CliError> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p)?;
                Ok(InputRecord {
                    path: p.display().to_string(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs,
            outputs: self.outputs.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        self.write_text(MANIFEST_FILE, &text)
    }
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config: &'a C,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}
