//! Output staging: files are written into a hidden temporary directory
//! inside the destination and renamed into place once all of them are
//! complete. On any failure nothing new is left behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::TempDir;

pub struct Staging {
    dest: PathBuf,
    tmp: TempDir,
    names: Vec<String>,
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self> {
        fs::create_dir_all(dest).with_context(|| format!("creating {}", dest.display()))?;
        let tmp = tempfile::Builder::new()
            .prefix(".aqmlab-staging-")
            .tempdir_in(dest)
            .with_context(|| format!("creating staging directory in {}", dest.display()))?;
        Ok(Self {
            dest: dest.to_path_buf(),
            tmp,
            names: Vec::new(),
        })
    }

    /// Writes one file through `fill`, buffered.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.tmp.path().join(name);
        let mut w =
            BufWriter::new(File::create(&path).with_context(|| format!("creating {name}"))?);
        fill(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush().with_context(|| format!("writing {name}"))?;
        self.names.push(name.to_string());
        Ok(())
    }

    /// Moves every staged file into the destination. If a rename fails, the
    /// files already moved are removed again.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        for name in &self.names {
            let target = self.dest.join(name);
            if let Err(e) = fs::rename(self.tmp.path().join(name), &target) {
                for p in &moved {
                    let _ = fs::remove_file(p);
                }
                return Err(e)
                    .with_context(|| format!("moving {name} into {}", self.dest.display()));
            }
            moved.push(target);
        }
        Ok(moved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_until_commit() {
        let dir = tempfile::tempdir().unwrap();
        let mut st = Staging::new(dir.path()).unwrap();
        st.write("a.csv", |w| Ok(writeln!(w, "x")?)).unwrap();
        assert!(!dir.path().join("a.csv").exists());
        st.commit().unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut st = Staging::new(dir.path()).unwrap();
            st.write("a.csv", |w| Ok(writeln!(w, "x")?)).unwrap();
            let _ = st.write("b.csv", |_| anyhow::bail!("boom"));
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
