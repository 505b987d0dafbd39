//! Full pipeline for a shipped preset: optimize, check the spectrum and
//! write CSV, SVG and JSON files.
//!
//! ```text
//! cargo run --release --example run_preset -- paper_n5 /tmp/n5
//! ```

use std::path::PathBuf;

use hornopt::cli::{self, ProblemConfig};

fn main() -> hornopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "paper_n2".into());
    let mut cfg = ProblemConfig::preset(&name)?;
    if let Some(dir) = args.next() {
        cfg.output_dir = PathBuf::from(dir);
    }
    let summary = cli::run(&cfg)?;
    println!("{}", summary.line);
    println!("wrote {}", summary.artifacts.report_json.display());
    Ok(())
}
