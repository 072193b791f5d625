use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::args::Cli;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    invocation: &'a Cli,
    outputs: &'a [String],
}

/// Writes `run-manifest.json`: the parsed invocation plus the files written.
pub fn write(cli: &Cli, dir: &Path, outputs: &[String]) -> std::io::Result<()> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        invocation: cli,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("run-manifest.json"), text)
}
