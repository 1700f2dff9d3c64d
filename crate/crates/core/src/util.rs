//! Small filesystem helpers.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Writes a file atomically: the content goes to a temporary file in the
/// destination directory which is renamed over the target only after `f`
/// succeeds, so failures never leave a partial file behind.
pub fn atomic_write(path: &Path, f: impl FnOnce(&mut BufWriter<&mut std::fs::File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut writer = BufWriter::new(tmp.as_file_mut());
        f(&mut writer)?;
        writer.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
