//! Run directory layout:
//!
//! ```text
//! <run>/config.toml        resolved configuration; valid input for --config
//! <run>/metrics.tsv        step, split, metric, value
//! <run>/best.ckpt          checkpoint with the best validation top-1
//! <run>/last.ckpt          checkpoint after the final step
//! <run>/predictions.tsv    validation predictions of the best checkpoint
//! <run>/zeroshot.tsv       predictions written by `zeroshot`
//! <run>/fewshot-k<k>.tsv   predictions written by `fewshot`
//! <run>/ablation-<axis>.tsv
//! <run>/.lock              present while a command writes to the run
//! ```

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use promptvid::{Error, Result};

pub const CONFIG: &str = "config.toml";
pub const METRICS: &str = "metrics.tsv";
pub const BEST: &str = "best.ckpt";
pub const LAST: &str = "last.ckpt";
pub const PREDICTIONS: &str = "predictions.tsv";
pub const ZEROSHOT: &str = "zeroshot.tsv";
const LOCK: &str = ".lock";

/// Exclusive handle on a run directory; the lock file is removed on drop.
pub struct RunDir {
    root: PathBuf,
    _lock: File,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let lock_path = root.join(LOCK);
        let lock = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::InvalidArgument(format!(
                    "run directory {} is locked by another command (remove {} if stale)",
                    root.display(),
                    lock_path.display()
                )),
                _ => Error::io(&lock_path, e),
            })?;
        Ok(Self {
            root: root.to_path_buf(),
            _lock: lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_writer_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let first = RunDir::open(dir.path()).unwrap();
        assert!(RunDir::open(dir.path()).is_err());
        drop(first);
        assert!(RunDir::open(dir.path()).is_ok());
    }
}
