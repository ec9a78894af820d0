use anyhow::Result;
use filterlens::snr::{idealized_snr, SnrParams};

use super::setup;
use crate::output::{num, Format};
use crate::SnrArgs;

pub fn run(args: SnrArgs) -> Result<()> {
    let mut ctx = setup(&args.common, &[Format::Json])?;
    let cfg = &ctx.cfg;
    let params = SnrParams::new(
        cfg.pick_or(args.filters, "filters", 512)?,
        cfg.pick_or(args.cluster_size, "cluster-size", 3)?,
        cfg.pick_or(args.labels, "labels", 10)?,
        cfg.pick_or(args.nu, "nu", 0.0)?,
    );
    let report = idealized_snr(&params)?;
    println!(
        "signal {}  noise {}  correction {}  ratio {}",
        num(report.signal),
        num(report.noise_per_other_label),
        num(report.negative_correction),
        if report.unbounded { "unbounded".to_string() } else { num(report.ratio) }
    );
    #[derive(serde::Serialize)]
    struct Out<'a> {
        params: &'a SnrParams,
        report: &'a filterlens::snr::SnrReport,
    }
    if ctx.outputs.wants(Format::Json) {
        ctx.outputs.write_json("snr_idealized.json", &Out { params: &params, report: &report })?;
    }
    ctx.outputs.verify()
}
