use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use garch_tail::{Innovation, ModelFile};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Serialize)]
pub struct ModelMeta {
    pub name: Option<String>,
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Includes the derived location and scale.
    pub innovation: Innovation,
}

impl ModelMeta {
    pub fn new(file: &ModelFile, innovation: Innovation) -> Self {
        Self {
            name: file.name.clone(),
            alpha0: file.model.alpha0,
            alpha: file.model.alpha.clone(),
            beta: file.model.beta.clone(),
            innovation,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub model: Option<ModelMeta>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

/// Where results go. JSON goes to stdout unless an output directory is set.
pub struct Sink {
    pub dir: Option<PathBuf>,
    pub format: Format,
    pub meta: Meta,
}

impl Sink {
    fn json_on(&self) -> bool {
        self.dir.is_none() || self.format != Format::Csv
    }

    fn csv_on(&self) -> bool {
        self.dir.is_some() && self.format != Format::Json
    }

    pub fn json<T: Serialize>(&self, result: &T) -> Result<(), CliError> {
        if !self.json_on() {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(&Envelope {
            meta: &self.meta,
            result,
        })
        .map_err(|e| CliError::Usage(format!("cannot serialize output: {e}")))?;
        text.push('\n');
        match &self.dir {
            Some(dir) => write_file(
                &dir.join(format!("{}.json", self.meta.command)),
                text.as_bytes(),
            ),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io {
                    path: "stdout".into(),
                    source: e,
                }),
        }
    }

    /// Writes `name` with a header naming units. Skipped unless CSV output is on.
    pub fn csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        if !self.csv_on() {
            return Ok(());
        }
        let path = self.dir.as_ref().expect("csv needs a directory").join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Shortest round-trip form; non-finite values as `NaN`/`inf`.
pub fn num(x: f64) -> String {
    format!("{x}")
}
