use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use filterlens::round_sig6;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Tracks every file a command writes so the exit status can reflect
/// whether all of them landed.
pub struct Outputs {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: PathBuf, formats: Vec<Format>) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir,
            formats,
            written: Vec::new(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        self.record(p.clone());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut v = serde_json::to_value(value)?;
        round_json(&mut v);
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Plots never fail the command; problems are reported on stderr.
    pub fn write_svg(&mut self, name: &str, svg: Option<String>) {
        let Some(svg) = svg else {
            eprintln!("warning: nothing to plot for {name}");
            return;
        };
        let p = self.path(name);
        if let Err(e) = fs::write(&p, svg) {
            eprintln!("warning: could not write {}: {e}", p.display());
        }
    }

    pub fn verify(&self) -> Result<()> {
        for p in &self.written {
            match fs::metadata(p) {
                Ok(m) if m.len() > 0 => {}
                _ => bail!("output {} missing or empty", p.display()),
            }
        }
        Ok(())
    }
}

pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig6(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Six significant digits, as used in every table.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        round_sig6(x).to_string()
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv { w }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.w
            .write_record(cells.into_iter().collect::<Vec<_>>())
            .expect("in-memory write");
    }

    pub fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

pub fn activation_path(data: &Path, layer: u32, split: &str) -> PathBuf {
    data.join(format!("layer{layer}_{split}.fla"))
}

pub fn weights_name(layer: u32, seed: u64) -> String {
    format!("layer{layer}_seed{seed}.flw")
}

/// Layers that have a `layer{m}_train.fla` file in `dir`, ascending.
pub fn discover_layers(dir: &Path) -> Result<Vec<u32>> {
    let mut layers = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(m) = name
            .strip_prefix("layer")
            .and_then(|r| r.strip_suffix("_train.fla"))
            .and_then(|m| m.parse().ok())
        {
            layers.push(m);
        }
    }
    layers.sort_unstable();
    if layers.is_empty() {
        bail!("no layer*_train.fla files in {}", dir.display());
    }
    Ok(layers)
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("missing input file: {}", path.display());
    }
    Ok(())
}
