use anyhow::{bail, ensure, Context, Result};
use filterlens::probe::{
    summarize, train_probe_with_eval, validate_schedule, write_history_csv, ProbeHyperparams,
    ScheduleSegment,
};
use filterlens::store::{read_activations, read_weights, write_weights};
use rayon::prelude::*;
use serde::Serialize;

use super::setup;
use crate::output::{activation_path, discover_layers, num, require_file, weights_name, Csv, Format};
use crate::ProbeArgs;

pub fn parse_schedule(s: &str) -> Result<Vec<ScheduleSegment>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("none") || s.is_empty() {
        return Ok(Vec::new());
    }
    let segs = s
        .split(',')
        .map(|seg| {
            let parts: Vec<&str> = seg.trim().split(':').collect();
            let (q, every, until) = match parts.as_slice() {
                [q, e] => (q, e, None),
                [q, e, u] => (q, e, Some(u.parse::<usize>()?)),
                _ => bail!("schedule segment {seg:?} is not q:every[:until]"),
            };
            Ok(ScheduleSegment::new(q.parse()?, every.parse()?, until))
        })
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("parsing schedule {s:?}"))?;
    validate_schedule(&segs)?;
    Ok(segs)
}

#[derive(Serialize)]
struct SrRow {
    layer: u32,
    n_filters: usize,
    spatial_per_filter: usize,
    n_features: usize,
    seeds: Vec<u64>,
    train_sr: Vec<f64>,
    test_sr_mean: f64,
    test_sr_std: f64,
    test_sr: Vec<f64>,
}

pub fn run(args: ProbeArgs) -> Result<()> {
    let mut ctx = setup(&args.common, &[Format::Csv, Format::Json])?;
    let cfg = &ctx.cfg;
    let data = cfg
        .pick(args.data.clone(), "data")?
        .unwrap_or_else(|| ctx.outputs.dir.clone());
    let mut layers = cfg.pick_list(args.layer.clone(), "layer")?;
    if layers.is_empty() {
        layers = discover_layers(&data)?;
    }
    let mut seeds = cfg.pick_list(args.seed.clone(), "seed")?;
    if seeds.is_empty() {
        seeds.push(0);
    }
    let defaults = ProbeHyperparams::default();
    let schedule = match cfg.pick(args.schedule.clone(), "schedule")? {
        Some(s) => parse_schedule(&s)?,
        None => defaults.schedule.clone(),
    };
    let base = ProbeHyperparams {
        learning_rate: cfg.pick_or(args.lr, "lr", defaults.learning_rate)?,
        momentum: cfg.pick_or(args.momentum, "momentum", defaults.momentum)?,
        l2: cfg.pick_or(args.l2, "l2", defaults.l2)?,
        batch_size: cfg.pick_or(args.batch_size, "batch-size", defaults.batch_size)?,
        epochs: cfg.pick_or(args.epochs, "epochs", defaults.epochs)?,
        schedule,
        seed: 0,
    };
    base.validate()?;

    let mut rows = Vec::new();
    for &layer in &layers {
        let train_path = activation_path(&data, layer, "train");
        let test_path = activation_path(&data, layer, "test");
        require_file(&train_path)?;
        require_file(&test_path)?;
        let train = read_activations(&train_path)?;
        let test = read_activations(&test_path)?;

        let runs = seeds
            .par_iter()
            .map(|&seed| {
                let hp = ProbeHyperparams { seed, ..base.clone() };
                train_probe_with_eval(&train, Some(&test), &hp)
                    .with_context(|| format!("layer {layer}, seed {seed}"))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut train_sr = Vec::new();
        let mut test_sr = Vec::new();
        for (&seed, run) in seeds.iter().zip(&runs) {
            let wpath = ctx.outputs.path(&weights_name(layer, seed));
            write_weights(&run.weights, &wpath)?;
            let back = read_weights(&wpath)?;
            let stored: Vec<f64> = run.weights.as_slice().iter().map(|&w| w as f32 as f64).collect();
            ensure!(
                back.n_labels() == run.weights.n_labels() && back.as_slice() == stored.as_slice(),
                "re-reading {} failed",
                wpath.display()
            );
            ctx.outputs.record(wpath);
            let mut hist = Vec::new();
            write_history_csv(&run.history, &mut hist)?;
            ctx.outputs.write_text(
                &format!("layer{layer}_seed{seed}_history.csv"),
                &String::from_utf8(hist)?,
            )?;
            let last = run.history.last();
            train_sr.push(last.map_or(0.0, |h| h.train_sr));
            test_sr.push(last.and_then(|h| h.test_sr).unwrap_or(0.0));
        }
        let summary = summarize(&test_sr)?;
        println!(
            "layer {layer}: test SR {} +- {} over {} seed(s)",
            num(summary.mean),
            num(summary.std),
            seeds.len()
        );
        rows.push(SrRow {
            layer,
            n_filters: train.n_filters(),
            spatial_per_filter: train.spatial_per_filter(),
            n_features: train.n_features(),
            seeds: seeds.clone(),
            train_sr,
            test_sr_mean: summary.mean,
            test_sr_std: summary.std,
            test_sr,
        });
    }

    if ctx.outputs.wants(Format::Csv) {
        let mut csv = Csv::new(&[
            "layer", "n_filters", "spatial_per_filter", "n_features", "n_seeds",
            "train_sr_mean", "test_sr_mean", "test_sr_std",
        ]);
        for r in &rows {
            csv.row([
                r.layer.to_string(),
                r.n_filters.to_string(),
                r.spatial_per_filter.to_string(),
                r.n_features.to_string(),
                r.seeds.len().to_string(),
                num(r.train_sr.iter().sum::<f64>() / r.train_sr.len() as f64),
                num(r.test_sr_mean),
                num(r.test_sr_std),
            ]);
        }
        ctx.outputs.write_text("sr_table.csv", &csv.finish())?;
    }
    if ctx.outputs.wants(Format::Json) {
        ctx.outputs.write_json("sr_table.json", &rows)?;
    }
    ctx.outputs.verify()
}
