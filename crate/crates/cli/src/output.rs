use std::fs;
use std::io::BufWriter;
use std::path::Path;

use mhj_core::io::Table;

use crate::config::{CliError, CliResult};

/// Output directory of one run.
#[derive(Clone, Copy)]
pub struct Output<'a> {
    pub dir: &'a Path,
}

impl Output<'_> {
    pub fn prepare(&self) -> CliResult<()> {
        fs::create_dir_all(self.dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.dir.display())))
    }

    pub fn table(&self, name: &str, t: &Table) -> CliResult<()> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        t.write_to(BufWriter::new(f)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn script(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
