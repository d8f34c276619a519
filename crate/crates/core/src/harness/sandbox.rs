//! Per-trial working directories.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

/// Directory names never copied into a sandbox.
const SKIPPED_DIRS: [&str; 4] = ["__pycache__", ".pytest_cache", ".acceptgen", ".git"];

/// `<work_dir>/sandboxes/<scenario>__<style>/trial-NNNN`
pub fn trial_dir(work_dir: &Path, scenario: &str, style: &str, trial: u32) -> PathBuf {
    work_dir
        .join("sandboxes")
        .join(format!("{scenario}__{style}"))
        .join(format!("trial-{trial:04}"))
}

/// Copy `fixture_root` into `dest`, which must not exist yet.
pub fn copy_fixture(fixture_root: &Path, dest: &Path) -> io::Result<()> {
    fs::create_dir_all(dest)?;
    let walker = WalkDir::new(fixture_root)
        .min_depth(1)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            !(e.file_type().is_dir()
                && SKIPPED_DIRS.contains(&e.file_name().to_string_lossy().as_ref()))
        });
    for entry in walker {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(fixture_root)
            .expect("walk stays under root");
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target)?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Start from an empty directory at `dir`.
pub fn fresh_dir(dir: &Path) -> io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)
}
