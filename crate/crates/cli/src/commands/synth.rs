use anyhow::{ensure, Result};
use filterlens::store::{read_activations, write_activations};
use filterlens::synthetic::{equalized_clusters, generate_synthetic, SyntheticSpec};
use filterlens::Split;
use serde::Serialize;

use super::setup;
use crate::output::{activation_path, Format};
use crate::SynthArgs;

#[derive(Serialize)]
struct Planted<'a> {
    layer: u32,
    n_labels: usize,
    n_filters: usize,
    spatial_per_filter: usize,
    cluster_size: usize,
    seed: u64,
    clusters: &'a [Vec<usize>],
}

pub fn run(args: SynthArgs) -> Result<()> {
    let mut ctx = setup(&args.common, &[Format::Json])?;
    let cfg = &ctx.cfg;
    let layers = {
        let l = cfg.pick_list(args.layer.clone(), "layer")?;
        if l.is_empty() { vec![1] } else { l }
    };
    let seed = cfg.pick_or(args.seed, "seed", 0u64)?;
    let n_labels = cfg.pick_or(args.labels, "labels", 10usize)?;
    let n_filters = cfg.pick_or(args.filters, "filters", 64usize)?;
    let spatial = cfg.pick_or(args.spatial, "spatial", 1usize)?;
    let cluster_size = cfg.pick_or(args.cluster_size, "cluster-size", 3usize)?;
    let per_label = cfg.pick_or(args.samples_per_label, "samples-per-label", 100usize)?;
    let test_per_label = cfg.pick_or(args.test_samples_per_label, "test-samples-per-label", per_label)?;
    let amplitude = cfg.pick_or(args.amplitude, "amplitude", 1.0f32)?;
    let noise_rate = cfg.pick_or(args.noise_rate, "noise-rate", 0.0f64)?;

    for &layer in &layers {
        let base = seed.wrapping_mul(1_000_003).wrapping_add(layer as u64 * 7919);
        let planted = equalized_clusters(n_labels, n_filters, cluster_size, base)?;
        for (split, offset, spl) in [(Split::Train, 1, per_label), (Split::Test, 2, test_per_label)] {
            let spec = SyntheticSpec {
                n_labels,
                n_filters,
                spatial_per_filter: spatial,
                planted_clusters: planted.clone(),
                response_amplitude: amplitude,
                off_cluster_noise_rate: noise_rate,
                samples_per_label: spl,
                seed: base.wrapping_add(offset),
                layer_index: layer,
                split,
                equalized: true,
            };
            let set = generate_synthetic(&spec)?;
            let path = activation_path(&ctx.outputs.dir, layer, split.as_str());
            write_activations(&set, &path)?;
            ensure!(read_activations(&path)? == set, "re-reading {} failed", path.display());
            ctx.outputs.record(path);
        }
        ctx.outputs.write_json(
            &format!("layer{layer}_planted.json"),
            &Planted {
                layer,
                n_labels,
                n_filters,
                spatial_per_filter: spatial,
                cluster_size,
                seed,
                clusters: &planted,
            },
        )?;
        println!(
            "layer {layer}: {n_filters} filters x {spatial} slots, {n_labels} labels -> {}",
            ctx.outputs.dir.display()
        );
    }
    ctx.outputs.verify()
}
