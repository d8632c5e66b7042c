use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const LOCK_FILE: &str = "saga.lock";

/// Exclusive claim on a data directory, released on drop. The file holds
/// the owner's pid; a lock whose owner is gone is taken over.
#[derive(Debug)]
pub struct DataDirLock {
    path: PathBuf,
}

fn owner_alive(pid: u32) -> bool {
    if pid == std::process::id() {
        return true;
    }
    let proc = Path::new("/proc");
    if !proc.is_dir() {
        return true;
    }
    proc.join(pid.to_string()).exists()
}

impl DataDirLock {
    pub fn acquire(data_dir: &Path) -> Result<Self, CliError> {
        let err = |e: std::io::Error| CliError::stage("lock", e);
        std::fs::create_dir_all(data_dir).map_err(err)?;
        let path = data_dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id()).map_err(err)?;
                    f.sync_all().map_err(err)?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let owner = std::fs::read_to_string(&path).unwrap_or_default();
                    match owner.trim().parse::<u32>() {
                        Ok(pid) if owner_alive(pid) => {
                            return Err(CliError::stage("lock", format!("{} is held by pid {pid}", path.display())))
                        }
                        _ => {
                            log::warn!("removing stale lock {}", path.display());
                            std::fs::remove_file(&path).map_err(err)?;
                        }
                    }
                }
                Err(e) => return Err(err(e)),
            }
        }
        Err(CliError::stage("lock", format!("could not take {}", path.display())))
    }
}

impl Drop for DataDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
