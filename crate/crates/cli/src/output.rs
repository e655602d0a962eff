//! Number formatting, CSV writing and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

/// Decimal text with 9 significant digits, independent of locale.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("float round trip");
    format!("{rounded}")
}

/// An empty field for missing values, otherwise [`num`].
pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes CSV records to any sink.
pub fn write_csv<W: Write>(sink: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Flat `key=value` record of a run: inputs, their hash, timing and outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<(String, String)>,
    pub wall_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.push((key.into(), value.to_string()));
    }

    fn input_text(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.inputs {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    /// Git-style hash of the inputs: SHA-256 over `blob <len>\0<text>`.
    pub fn input_hash(&self) -> String {
        let text = self.input_text();
        let mut bytes = format!("blob {}\0", text.len()).into_bytes();
        bytes.extend_from_slice(text.as_bytes());
        sha256_hex(&bytes)
    }

    pub fn render(&self) -> Result<String, CliError> {
        let mut s = self.input_text();
        s.push_str(&format!("input_hash={}\n", self.input_hash()));
        s.push_str(&format!("wall_seconds={:.3}\n", self.wall_seconds));
        for (i, p) in self.outputs.iter().enumerate() {
            let digest = sha256_hex(&fs::read(p)?);
            s.push_str(&format!("output.{i}={}\n", p.display()));
            s.push_str(&format!("output.{i}.sha256={digest}\n"));
        }
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.txt");
        fs::write(&path, self.render()?)?;
        Ok(path)
    }
}
