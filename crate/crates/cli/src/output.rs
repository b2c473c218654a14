//! Artifact writing. Data files are deterministic; the wall-clock timestamp
//! goes only into `run_info.json`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use uavrisk::{Error, Result};

pub struct OutDir {
    dir: PathBuf,
    hash: String,
    seed: u64,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path, hash: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.into(),
            hash: hash.into(),
            seed,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e })?;
        self.written.push(name.into());
        Ok(())
    }

    /// CSV with a leading `# config_hash=… master_seed=…` comment line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash={} master_seed={}\n{body}", self.hash, self.seed);
        self.write(name, &text)
    }

    /// JSON object with `config_hash` and `master_seed` fields added.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(|e| Error::Internal(e.to_string()))?;
        let obj = serde_json::json!({
            "config_hash": self.hash,
            "master_seed": self.seed,
        });
        match v.as_object_mut() {
            Some(m) => {
                for (k, x) in obj.as_object().unwrap() {
                    m.insert(k.clone(), x.clone());
                }
            }
            None => v = serde_json::json!({ "data": v, "config_hash": self.hash, "master_seed": self.seed }),
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Internal(e.to_string()))? + "\n";
        self.write(name, &text)
    }

    /// Sidecar with the timestamp and the list of data files.
    pub fn finish(mut self, command: &str) -> Result<Vec<String>> {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let files = self.written.clone();
        let info = serde_json::json!({
            "command": command,
            "unix_time_s": secs,
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
        });
        self.write("run_info.json", &serde_json::to_string_pretty(&info).unwrap())?;
        Ok(self.written)
    }
}
