use std::fmt::Write;

use anyhow::{bail, Context, Result};

use super::setup;
use crate::output::Format;
use crate::ReportArgs;

fn csv_as_markdown(text: &str) -> Result<String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut md = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    for rec in r.records() {
        writeln!(md, "| {} |", rec?.iter().collect::<Vec<_>>().join(" | ")).unwrap();
    }
    Ok(md)
}

pub fn run(args: ReportArgs) -> Result<()> {
    let mut ctx = setup(&args.common, &[Format::Csv])?;
    let sections = [
        ("Probe success rates", "sr_table.csv"),
        ("Layer statistics", "layer_stats.csv"),
        ("Signal-to-noise", "snr_summary.csv"),
    ];
    let mut doc = String::from("# filterlens report\n");
    let mut found = 0;
    for (title, file) in sections {
        let path = ctx.outputs.path(file);
        if let Ok(text) = std::fs::read_to_string(&path) {
            found += 1;
            write!(doc, "\n## {title}\n\n{}", csv_as_markdown(&text).with_context(|| format!("reading {}", path.display()))?).unwrap();
        }
    }
    if found == 0 {
        bail!(
            "no tables found in {} (run probe and analyze first)",
            ctx.outputs.dir.display()
        );
    }
    print!("{doc}");
    ctx.outputs.write_text("report.md", &doc)?;
    ctx.outputs.verify()
}
