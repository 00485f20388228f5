//! CSV output, written atomically when a path is given.

use std::io::Write;
use std::path::Path;

use urmc::{Error, Result};

pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).map_err(io_error)?;
        Ok(Table { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(io_error)
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| Error::Input(format!("cannot finish CSV output: {e}")))
    }

    /// Writes to `path` through a temporary file in the same directory, or to stdout.
    pub fn emit(self, path: Option<&Path>) -> Result<()> {
        let bytes = self.into_bytes()?;
        match path {
            Some(p) => write_atomic(p, &bytes),
            None => std::io::stdout().write_all(&bytes).map_err(|e| Error::Input(format!("cannot write to stdout: {e}"))),
        }
    }
}

fn io_error(e: csv::Error) -> Error {
    Error::Input(format!("cannot format CSV output: {e}"))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let fail = |e: &dyn std::fmt::Display| Error::Input(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}
