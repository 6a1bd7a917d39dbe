//! Artifact collection and all-or-nothing writeout.
//!
//! Commands build every output in memory and flush at the end; if any write
//! fails, files already written in this run are removed so a failed run
//! leaves no partial outputs.

use std::path::{Path, PathBuf};

use dilperc::{Error, Result};

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((PathBuf::from(name), bytes));
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.add(name, text.into_bytes());
    }

    pub fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Serialization(format!("{name}: {e}")))?;
        text.push('\n');
        self.add_text(name, text);
        Ok(())
    }

    /// Write everything, removing this run's files on error. Relative names
    /// land under `out_dir`; absolute names are honored as given.
    pub fn flush(self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| Error::Parameter(format!("out dir {}: {e}", out_dir.display())))?;
        let mut written: Vec<PathBuf> = Vec::new();
        for (name, bytes) in &self.files {
            let path = if name.is_absolute() {
                name.clone()
            } else {
                out_dir.join(name)
            };
            match std::fs::write(&path, bytes) {
                Ok(()) => written.push(path),
                Err(e) => {
                    for w in &written {
                        let _ = std::fs::remove_file(w);
                    }
                    return Err(Error::Parameter(format!("writing {}: {e}", path.display())));
                }
            }
        }
        Ok(written)
    }
}

/// CSV with a header row; all numbers in shortest round-trip form.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut text = String::new();
        text.push_str(header);
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
