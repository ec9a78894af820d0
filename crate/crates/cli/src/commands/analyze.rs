use anyhow::{ensure, Context, Result};
use filterlens::pipeline::{analyze_filters, summarize_layer, FilterReport, LayerSummary};
use filterlens::stats::theta_range;
use filterlens::store::{read_activations, read_weights};

use super::setup;
use crate::output::{activation_path, discover_layers, num, opt_num, require_file, weights_name, Csv, Format, Outputs};
use crate::svg;
use crate::AnalyzeArgs;

pub const DEFAULT_THETA: f64 = 0.3;
pub const DEFAULT_SWEEP: &str = "0.3:0.6:0.05";

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing --theta-sweep {s:?}"))?;
    ensure!(parts.len() == 3, "--theta-sweep expects lo:hi:step, got {s:?}");
    let thetas = theta_range(parts[0], parts[1], parts[2])?;
    ensure!(
        thetas.iter().all(|&t| t > 0.0 && t < 1.0),
        "sweep thresholds must lie in (0, 1)"
    );
    Ok(thetas)
}

fn join_clusters(clusters: &[Vec<usize>]) -> String {
    clusters
        .iter()
        .map(|c| c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("|")
}

pub fn run(args: AnalyzeArgs, sweep_only: bool) -> Result<()> {
    let mut ctx = setup(&args.common, &[Format::Csv, Format::Json])?;
    let cfg = &ctx.cfg;
    let data = cfg
        .pick(args.data.clone(), "data")?
        .unwrap_or_else(|| ctx.outputs.dir.clone());
    let weights_dir = cfg
        .pick(args.weights.clone(), "weights")?
        .unwrap_or_else(|| ctx.outputs.dir.clone());
    let mut layers = cfg.pick_list(args.layer.clone(), "layer")?;
    if layers.is_empty() {
        layers = discover_layers(&data)?;
    }
    let mut seeds: Vec<u64> = cfg.pick_list(args.seed.clone(), "seed")?;
    if seeds.is_empty() {
        seeds.push(0);
    }
    let theta = cfg.pick_or(args.theta, "theta", DEFAULT_THETA)?;
    ensure!(theta > 0.0 && theta < 1.0, "--theta must lie in (0, 1), got {theta}");
    let sweep = parse_sweep(&cfg.pick_or(args.theta_sweep.clone(), "theta-sweep", DEFAULT_SWEEP.to_string())?)?;
    let split = cfg.pick_or(args.split.clone(), "split", "test".to_string())?;

    let mut summaries = Vec::new();
    for &layer in &layers {
        let set_path = activation_path(&data, layer, &split);
        require_file(&set_path)?;
        let set = read_activations(&set_path)?;
        let mut reports: Vec<FilterReport> = Vec::new();
        for (i, &seed) in seeds.iter().enumerate() {
            let wpath = weights_dir.join(weights_name(layer, seed));
            require_file(&wpath)?;
            let w = read_weights(&wpath)?;
            let mut r = analyze_filters(&w, &set, theta)
                .with_context(|| format!("{} against {}", wpath.display(), set_path.display()))?;
            r.iter_mut().for_each(|f| f.sample = i);
            reports.extend(r);
        }
        let summary = summarize_layer(layer, set.n_labels(), &reports, theta, &sweep)?;
        if sweep_only {
            write_sweep(&mut ctx.outputs, &summary)?;
        } else {
            write_layer(&mut ctx.outputs, &summary, &reports)?;
        }
        println!(
            "layer {layer}: {} filters, av noise {}, clusters/filter {}, av size {}",
            summary.stats.n_filters,
            num(summary.stats.av_noise),
            num(summary.stats.av_clusters_per_filter),
            num(summary.stats.av_cluster_size)
        );
        summaries.push((summary, set.n_labels()));
    }
    if !sweep_only {
        write_tables(&mut ctx.outputs, &summaries)?;
    }
    ctx.outputs.verify()
}

fn write_sweep(out: &mut Outputs, s: &LayerSummary) -> Result<()> {
    let m = s.layer_index;
    if out.wants(Format::Csv) {
        let mut csv = Csv::new(&["theta", "above_threshold", "av_noise", "av_clusters_per_filter", "av_cluster_size"]);
        for p in &s.sweep {
            csv.row([
                num(p.theta),
                p.above_threshold.to_string(),
                num(p.stats.av_noise),
                num(p.stats.av_clusters_per_filter),
                num(p.stats.av_cluster_size),
            ]);
        }
        out.write_text(&format!("layer{m}_sweep.csv"), &csv.finish())?;
    }
    if out.wants(Format::Json) {
        out.write_json(&format!("layer{m}_sweep.json"), &s.sweep)?;
    }
    if out.wants(Format::Svg) {
        let xs: Vec<f64> = s.sweep.iter().map(|p| p.theta).collect();
        let chart = svg::line_chart(
            &format!("Layer {m}: threshold sweep"),
            &xs,
            &[
                ("av noise", s.sweep.iter().map(|p| p.stats.av_noise).collect()),
                ("clusters/filter", s.sweep.iter().map(|p| p.stats.av_clusters_per_filter).collect()),
                ("av size", s.sweep.iter().map(|p| p.stats.av_cluster_size).collect()),
            ],
        );
        out.write_svg(&format!("layer{m}_sweep.svg"), chart);
    }
    Ok(())
}

fn write_layer(out: &mut Outputs, s: &LayerSummary, reports: &[FilterReport]) -> Result<()> {
    let m = s.layer_index;
    write_sweep(out, s)?;
    if out.wants(Format::Json) {
        out.write_json(&format!("layer{m}_filters.json"), &reports)?;
        out.write_json(&format!("layer{m}_summary.json"), s)?;
        out.write_json(&format!("layer{m}_snr.json"), &s.snr)?;
    }
    if out.wants(Format::Csv) {
        let mut csv = Csv::new(&[
            "sample", "filter", "normalized", "n_clusters", "noise", "clusters",
            "n_clusters_reverse", "noise_reverse", "clusters_reverse", "permutation",
        ]);
        for r in reports {
            csv.row([
                r.sample.to_string(),
                r.filter_id.to_string(),
                r.normalized.to_string(),
                r.clusters.n_clusters().to_string(),
                r.clusters.noise_count.to_string(),
                join_clusters(&r.clusters.clusters),
                r.clusters_reverse.n_clusters().to_string(),
                r.clusters_reverse.noise_count.to_string(),
                join_clusters(&r.clusters_reverse.clusters),
                join_clusters(std::slice::from_ref(&r.permutation.permutation)),
            ]);
        }
        out.write_text(&format!("layer{m}_filters.csv"), &csv.finish())?;

        let mut occ = Csv::new(&["label", "count", "expected"]);
        for (l, c) in s.occurrences.counts.iter().enumerate() {
            occ.row([l.to_string(), c.to_string(), num(s.occurrences.expected)]);
        }
        out.write_text(&format!("layer{m}_occurrences.csv"), &occ.finish())?;

        let h = &s.histograms;
        let mut hist = Csv::new(&["bin_lo", "bin_hi", "cluster_rows", "non_cluster_rows"]);
        for b in 0..h.bins.n_bins {
            let lo = h.bins.lo + h.bins.width() * b as f64;
            hist.row([
                num(lo),
                num(lo + h.bins.width()),
                h.cluster_rows.counts[b].to_string(),
                h.non_cluster_rows.counts[b].to_string(),
            ]);
        }
        out.write_text(&format!("layer{m}_histograms.csv"), &hist.finish())?;
    }
    if out.wants(Format::Svg) {
        let labels: Vec<String> = (0..s.occurrences.counts.len()).map(|l| l.to_string()).collect();
        let counts: Vec<f64> = s.occurrences.counts.iter().map(|&c| c as f64).collect();
        out.write_svg(
            &format!("layer{m}_occurrences.svg"),
            svg::bar_chart(&format!("Layer {m}: label appearances in clusters"), &labels, &counts, Some(s.occurrences.expected)),
        );
        let h = &s.histograms;
        let centers: Vec<String> = (0..h.bins.n_bins)
            .map(|b| num(h.bins.lo + h.bins.width() * (b as f64 + 0.5)))
            .collect();
        for (name, hist) in [("cluster_rows", &h.cluster_rows), ("non_cluster_rows", &h.non_cluster_rows)] {
            let vals: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
            out.write_svg(
                &format!("layer{m}_hist_{name}.svg"),
                (hist.n > 0)
                    .then(|| {
                        svg::bar_chart(
                            &format!("Layer {m}: sub-threshold fields, {} (mean {})", name.replace('_', " "), opt_num(hist.mean)),
                            &centers,
                            &vals,
                            None,
                        )
                    })
                    .flatten(),
            );
        }
    }
    Ok(())
}

fn write_tables(out: &mut Outputs, summaries: &[(LayerSummary, usize)]) -> Result<()> {
    let max_l = summaries.iter().map(|s| s.1).max().unwrap_or(0);
    if out.wants(Format::Csv) {
        let mut header: Vec<String> = [
            "layer", "n_filters", "n_unnormalized", "av_noise", "av_clusters_per_filter", "av_cluster_size",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=max_l).map(|s| format!("frac_size_{s}")));
        header.extend(
            ["av_noise_reverse", "av_clusters_per_filter_reverse", "av_cluster_size_reverse"]
                .iter()
                .map(|s| s.to_string()),
        );
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = Csv::new(&refs);
        for (s, _) in summaries {
            let st = &s.stats;
            let mut row = vec![
                s.layer_index.to_string(),
                st.n_filters.to_string(),
                s.n_unnormalized.to_string(),
                num(st.av_noise),
                num(st.av_clusters_per_filter),
                num(st.av_cluster_size),
            ];
            row.extend((1..=max_l).map(|k| num(st.size_fractions.get(&k).copied().unwrap_or(0.0))));
            row.extend([
                num(s.stats_reverse.av_noise),
                num(s.stats_reverse.av_clusters_per_filter),
                num(s.stats_reverse.av_cluster_size),
            ]);
            csv.row(row);
        }
        out.write_text("layer_stats.csv", &csv.finish())?;

        let mut snr = Csv::new(&["layer", "nu", "mean_signal", "mean_ratio", "min_ratio", "n_unbounded"]);
        for (s, _) in summaries {
            snr.row([
                s.layer_index.to_string(),
                num(s.snr.nu),
                num(s.snr.mean_signal),
                opt_num(s.snr.mean_ratio),
                opt_num(s.snr.min_ratio),
                s.snr.n_unbounded.to_string(),
            ]);
        }
        out.write_text("snr_summary.csv", &snr.finish())?;
    }
    if out.wants(Format::Json) {
        let stats: Vec<_> = summaries.iter().map(|(s, _)| &s.stats).collect();
        out.write_json("layer_stats.json", &stats)?;
    }
    Ok(())
}
