//! On-disk cache helpers shared by the MFCC and feature caches.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable naming the cache root when no directory is configured.
pub const CACHE_ENV: &str = "AED_CACHE_DIR";

/// Write via a sibling temporary file and rename, so concurrent readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Unwritable {
            path: parent.into(),
            source,
        })?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|source| Error::Unwritable {
        path: tmp.clone(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| Error::Unwritable {
        path: path.into(),
        source,
    })
}

/// Replace characters that are unsafe in file names.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}
