//! Command-line surface of the governance fabric.
//!
//! Exit codes: 0 success, 1 governance rejection, 2 usage or configuration
//! error. `--format records` prints one JSON object per line.

mod args;
mod commands;
mod workspace;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use serde::Serialize;
use serde_json::Value;

pub use args::{Cli, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// What a command produced: human lines, machine records and an exit code.
#[derive(Debug, Default)]
pub struct Output {
    pub lines: Vec<String>,
    pub records: Vec<Value>,
    pub code: i32,
}

impl Output {
    pub fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    pub fn record(&mut self, kind: &str, body: impl Serialize) {
        let mut v = serde_json::to_value(body).expect("record serializes");
        match v.as_object_mut() {
            Some(obj) => {
                obj.insert("record".into(), Value::from(kind));
            }
            None => v = serde_json::json!({ "record": kind, "value": v }),
        }
        self.records.push(v);
    }

    pub fn reject(&mut self) {
        self.code = EXIT_REJECTED;
    }

    fn render(&self, format: Format) -> String {
        let mut s = String::new();
        match format {
            Format::Text => {
                for l in &self.lines {
                    s.push_str(l);
                    s.push('\n');
                }
            }
            Format::Records => {
                for r in &self.records {
                    s.push_str(&serde_json::to_string(r).expect("record serializes"));
                    s.push('\n');
                }
            }
        }
        s
    }
}

/// Parses `argv` and runs one command, writing to the given streams.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.render(cli.format).as_bytes());
            out.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_USAGE
        }
    }
}
