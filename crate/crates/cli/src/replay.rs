//! `replay`: render a transcript and optionally re-check it.

use std::path::Path;

use anyhow::{Context, Result};

use malade_core::transcript::{read_jsonl, render_dialog, verify, Violation};

#[derive(Debug)]
pub struct ReplayOutcome {
    pub rendered: String,
    pub violations: Vec<Violation>,
}

pub fn cmd_replay(path: &Path, check: bool) -> Result<ReplayOutcome> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let records =
        read_jsonl(std::io::BufReader::new(file)).with_context(|| format!("cannot parse {}", path.display()))?;
    Ok(ReplayOutcome {
        rendered: render_dialog(&records),
        violations: if check { verify(&records) } else { Vec::new() },
    })
}
