//! Output files: every file starts with `#` comment lines that identify the
//! tool, scenario and seed, followed by the body.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Formats a float with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Comma-joined header like `x_1,x_2`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        let cols: Vec<&str> = columns.iter().map(AsRef::as_ref).collect();
        Self {
            body: cols.join(",") + "\n",
        }
    }

    pub fn from_body(body: String) -> Self {
        Self { body }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        let cols: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
        self.body.push_str(&cols.join(","));
        self.body.push('\n');
    }

    pub fn body(&self) -> &str {
        &self.body
    }
}

/// Writes files into one directory with a shared comment header.
pub struct OutputDir {
    dir: PathBuf,
    header: String,
    plots: bool,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(
        dir: &Path,
        scenario_name: &str,
        scenario_hash: &str,
        seed: u64,
        command_line: &str,
        plots: bool,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut header = String::new();
        let _ = writeln!(header, "# tool: {TOOL_VERSION}");
        let _ = writeln!(header, "# scenario: {scenario_name} ({scenario_hash})");
        let _ = writeln!(header, "# seed: {seed}");
        let _ = writeln!(header, "# command: {command_line}");
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
            plots,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, format!("{}{content}", self.header))
            .map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes a CSV and, with plots enabled, a gnuplot script next to it.
    pub fn csv(&mut self, name: &str, csv: &Csv, plot: Option<&str>) -> Result<(), CliError> {
        self.write(name, csv.body())?;
        if let (true, Some(commands)) = (self.plots, plot) {
            let stem = name.trim_end_matches(".csv");
            let script = format!(
                "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\nset output '{stem}.png'\n{}\n",
                commands.replace("$FILE", &format!("'{name}'"))
            );
            self.write(&format!("{stem}.gp"), &script)?;
        }
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write(name, body)
    }

    /// JSON cannot carry comments, so it is written bare.
    pub fn json(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Strips the comment header from an output file.
pub fn body_of(content: &str) -> String {
    content
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
