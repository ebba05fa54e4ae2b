use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::Failure;

/// Where a command writes, and what it records about itself.
pub struct Run {
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Every effective parameter of the command.
    pub config: Value,
}

impl Run {
    pub fn new(
        command: &'static str,
        seed: u64,
        workers: usize,
        out_dir: &Path,
        config: Value,
    ) -> Result<Self, Failure> {
        if !out_dir.is_dir() {
            return Err(Failure::Io(format!(
                "output directory {} does not exist",
                out_dir.display()
            )));
        }
        Ok(Run {
            command,
            seed,
            workers,
            out_dir: out_dir.to_path_buf(),
            config,
        })
    }

    pub fn provenance(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "workers": self.workers,
            "config": self.config,
        })
    }

    /// One comment line with the command, seed, workers and parameters.
    pub fn header(&self) -> String {
        let mut line = format!(
            "# langevin-wall {} v{}; seed={}; workers={}",
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.workers
        );
        if let Value::Object(m) = &self.config {
            for (k, v) in m
                .iter()
                .filter(|(k, v)| k.as_str() != "seed" && !v.is_null())
            {
                match v {
                    Value::String(s) => line.push_str(&format!("; {k}={s}")),
                    other => line.push_str(&format!("; {k}={other}")),
                }
            }
        }
        line.push('\n');
        line
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes `{provenance, ...report}` to `name` and returns it.
    pub fn write_json(&self, name: &str, report: Value) -> Result<Value, Failure> {
        let mut doc = Map::new();
        doc.insert("provenance".into(), self.provenance());
        match report {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("report".into(), other);
            }
        }
        let doc = Value::Object(doc);
        let text = serde_json::to_string_pretty(&doc).expect("json value serialises");
        self.write(name, &(text + "\n"))?;
        Ok(doc)
    }

    /// Writes the provenance header followed by `body`.
    pub fn write_csv(&self, name: &str, body: &str) -> Result<(), Failure> {
        self.write(name, &(self.header() + body))
    }

    pub fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_is_io() {
        let r = Run::new("x", 1, 1, Path::new("/nonexistent/out"), json!({}));
        assert!(matches!(r, Err(Failure::Io(_))));
    }

    #[test]
    fn header_lists_config() {
        let dir = tempfile::tempdir().unwrap();
        let r = Run::new(
            "tail",
            5,
            2,
            dir.path(),
            json!({"alpha": 2.0, "format": "csv"}),
        )
        .unwrap();
        let h = r.header();
        assert!(h.starts_with("# langevin-wall tail v"));
        assert!(h.contains("seed=5; workers=2; alpha=2.0; format=csv"));
    }
}
