use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use tempfile::TempDir;

/// Output files are written into a hidden directory next to their
/// destination and only renamed into place by [`Staging::commit`], so a
/// failed command leaves nothing behind.
pub struct Staging {
    dir: TempDir,
    entries: Vec<PathBuf>,
}

impl Staging {
    pub fn new(out: &Path) -> io::Result<Staging> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new().prefix(".nppx-staging-").tempdir_in(parent)?;
        Ok(Staging {
            dir,
            entries: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Path for a staged entry, recorded for [`commit`](Self::commit).
    pub fn entry(&mut self, name: &str) -> PathBuf {
        self.entries.push(PathBuf::from(name));
        self.dir.path().join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<()> {
        let path = self.entry(name);
        fs::write(path, contents)
    }

    /// Moves every entry into `out`. Directory entries must not exist yet at
    /// the destination; files are replaced.
    pub fn commit(self, out: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        for name in &self.entries {
            let src = self.dir.path().join(name);
            let dst = out.join(name);
            if src.is_dir() && dst.exists() {
                return Err(io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    format!("{} already exists", dst.display()),
                ));
            }
        }
        let mut moved = Vec::new();
        for name in &self.entries {
            let dst = out.join(name);
            fs::rename(self.dir.path().join(name), &dst)?;
            moved.push(dst);
        }
        Ok(moved)
    }
}
