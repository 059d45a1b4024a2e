//! Output directory handling. Every file is written to a temporary file in
//! the target directory and renamed into place, and every file carries the
//! configuration hash and seed: as `#` comment lines in CSV, a `provenance`
//! object in JSON, and an XML comment in SVG. PHX1 has no room for
//! metadata, so each command also writes `<command>.manifest.json` with the
//! provenance and a SHA-256 digest of every file it produced.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use tpxspec::event_io::write_hits;
use tpxspec::{HitFormat, PixelHit};

use crate::config::Resolved;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config_file: Option<String>,
    pub overrides: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, resolved: &Resolved) -> Self {
        Self {
            tool: "tpxspec",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: resolved.hash.clone(),
            seed: resolved.config.seed,
            config_file: resolved.file.as_ref().map(|p| p.display().to_string()),
            overrides: resolved.overrides.clone(),
        }
    }

    fn comment_lines(&self, prefix: &str) -> String {
        format!(
            "{prefix}tpxspec {} {}\n{prefix}config_hash={}\n{prefix}seed={}\n",
            self.version, self.command, self.config_hash, self.seed
        )
    }
}

pub struct OutputDir {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(dir: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Streams `fill` into a temporary file, then renames it to `name`.
    fn atomic<F>(&mut self, name: &str, fill: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<&mut NamedTempFile>) -> CliResult<()>,
    {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        {
            let mut w = BufWriter::new(&mut tmp);
            fill(&mut w)?;
            w.flush().map_err(|e| CliError::io(&target, e))?;
        }
        tmp.as_file()
            .sync_all()
            .map_err(|e| CliError::io(&target, e))?;
        tmp.persist(&target)
            .map_err(|e| CliError::io(&target, e.error))?;
        let digest = {
            let bytes = fs::read(&target).map_err(|e| CliError::io(&target, e))?;
            hex::encode(Sha256::digest(&bytes))
        };
        self.written.push((name.to_string(), digest));
        Ok(target)
    }

    pub fn write_text(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let target = self.path(name);
        self.atomic(name, |w| {
            w.write_all(body.as_bytes())
                .map_err(|e| CliError::io(&target, e))
        })
    }

    pub fn write_csv(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let text = format!("{}{body}", self.provenance.comment_lines("# "));
        self.write_text(name, &text)
    }

    /// Serializes `value` with a `provenance` member added at the top level.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut v = serde_json::to_value(value).expect("output serializes");
        let prov = serde_json::to_value(&self.provenance).expect("provenance serializes");
        match &mut v {
            Value::Object(map) => {
                map.insert("provenance".into(), prov);
            }
            other => v = json!({ "provenance": prov, "data": other.take() }),
        }
        let mut text = serde_json::to_string_pretty(&v).expect("JSON value serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_svg(&mut self, name: &str, svg: &str) -> CliResult<PathBuf> {
        let c = &self.provenance;
        let text = format!(
            "<!-- tpxspec {} {} config_hash={} seed={} -->\n{svg}",
            c.version, c.command, c.config_hash, c.seed
        );
        self.write_text(name, &text)
    }

    pub fn write_hits(
        &mut self,
        name: &str,
        format: HitFormat,
        hits: &[PixelHit],
    ) -> CliResult<PathBuf> {
        let target = self.path(name);
        let header = self.provenance.comment_lines("# ");
        self.atomic(name, |w| {
            if format == HitFormat::Csv {
                w.write_all(header.as_bytes())
                    .map_err(|e| CliError::io(&target, e))?;
            }
            write_hits(w, format, hits).map_err(|e| CliError::at(&target, e))?;
            Ok(())
        })
    }

    /// Writes the manifest and returns the list of files produced.
    pub fn finish(mut self) -> CliResult<Vec<String>> {
        let files: Vec<Value> = self
            .written
            .iter()
            .map(|(name, sha)| json!({ "file": name, "sha256": sha }))
            .collect();
        let name = format!("{}.manifest.json", self.provenance.command);
        self.write_json(&name, &json!({ "files": files }))?;
        Ok(self.written.into_iter().map(|(n, _)| n).collect())
    }
}
