use std::io::Write;
use std::path::{Path, PathBuf};

use crate::Failure;

/// Output files staged in memory and written together once a command has
/// finished, each through a temporary file renamed into place.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn commit(self) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure::Config(format!("writing {}: {e}", self.dir.display()));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        for (name, contents) in &self.files {
            let mut tmp = temp_builder().tempfile_in(&self.dir).map_err(io)?;
            tmp.write_all(contents.as_bytes()).map_err(io)?;
            tmp.flush().map_err(io)?;
            tmp.persist(self.dir.join(name)).map_err(|e| io(e.error))?;
        }
        Ok(())
    }
}

#[cfg(unix)]
fn temp_builder() -> tempfile::Builder<'static, 'static> {
    use std::os::unix::fs::PermissionsExt;
    let mut b = tempfile::Builder::new();
    b.permissions(std::fs::Permissions::from_mode(0o644));
    b
}

#[cfg(not(unix))]
fn temp_builder() -> tempfile::Builder<'static, 'static> {
    tempfile::Builder::new()
}
