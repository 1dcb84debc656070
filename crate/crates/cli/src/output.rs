use std::fs;
use std::io::{IsTerminal, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::failure::Failure;

pub const MANIFEST: &str = "manifest.json";

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}", dir.display()), e))
}

/// Temp file in the target directory, then rename over the destination.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let ctx = || format!("cannot write {}", path.display());
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Failure::io(ctx(), e))?;
    tmp.write_all(contents).map_err(|e| Failure::io(ctx(), e))?;
    tmp.as_file().sync_all().map_err(|e| Failure::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| Failure::io(ctx(), e.error))?;
    Ok(())
}

pub fn write_manifest(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    write_atomic(&dir.join(MANIFEST), fibottention::export::to_json(cfg).as_bytes())
}

/// Prints `body` and, with `--out`, stores it as `dir/name` next to the manifest.
pub fn emit(cfg: &RunConfig, name: &str, body: &str) -> Result<(), Failure> {
    print!("{body}");
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        write_atomic(&dir.join(name), body.as_bytes())?;
        write_manifest(dir, cfg)?;
    }
    Ok(())
}

pub fn color_enabled() -> bool {
    std::env::var_os("FIBO_NO_COLOR").is_none() && std::io::stderr().is_terminal()
}

pub fn paint(text: &str, code: &str) -> String {
    if color_enabled() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}
