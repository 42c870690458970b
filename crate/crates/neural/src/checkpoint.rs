//! Checkpoints: `<stem>.bin` holds every parameter as little-endian f64 in
//! parameter order; `<stem>.txt` is a key=value manifest followed by one
//! `param <name> <dims...>` line per tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};
use crate::{NeuralError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub architecture: String,
    pub seed: u64,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("txt"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NeuralError + '_ {
    move |source| NeuralError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save<T: Scalar>(stem: impl AsRef<Path>, store: &ParamStore<T>, meta: &CheckpointMeta) -> Result<()> {
    let (bin, txt) = paths(stem.as_ref());
    let blob: Vec<u8> = store.flatten().iter().flat_map(|v| v.f64().to_le_bytes()).collect();
    fs::write(&bin, blob).map_err(io_err(&bin))?;
    let mut text = format!(
        "architecture={}\nseed={}\nepoch={}\n",
        meta.architecture, meta.seed, meta.epoch
    );
    for (k, v) in &meta.metrics {
        text.push_str(&format!("metric.{k}={v}\n"));
    }
    for (name, t) in store.names().iter().zip(store.tensors()) {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        text.push_str(&format!("param {name} {}\n", dims.join(" ")));
    }
    fs::write(&txt, text).map_err(io_err(&txt))
}

pub fn load<T: Scalar>(stem: impl AsRef<Path>) -> Result<(ParamStore<T>, CheckpointMeta)> {
    let (bin, txt) = paths(stem.as_ref());
    let text = fs::read_to_string(&txt).map_err(io_err(&txt))?;
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    if bytes.len() % 8 != 0 {
        return Err(NeuralError::Parse(format!("{} is not a whole number of f64 values", bin.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut meta = CheckpointMeta::default();
    let mut store = ParamStore::new();
    let mut offset = 0;
    let bad = |line: &str| NeuralError::Parse(format!("manifest line {line:?}"));
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or_else(|| bad(line))?;
            let dims: Vec<usize> = parts.map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(line))?;
            let n: usize = dims.iter().product();
            let chunk = values.get(offset..offset + n).ok_or_else(|| bad(line))?;
            store.add(name, Tensor::from_f64(&dims, chunk)?);
            offset += n;
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
        match k {
            "architecture" => meta.architecture = v.to_string(),
            "seed" => meta.seed = v.parse().map_err(|_| bad(line))?,
            "epoch" => meta.epoch = v.parse().map_err(|_| bad(line))?,
            _ => {
                let key = k.strip_prefix("metric.").ok_or_else(|| bad(line))?;
                meta.metrics.insert(key.to_string(), v.parse().map_err(|_| bad(line))?);
            }
        }
    }
    if offset != values.len() {
        return Err(NeuralError::Parse(format!(
            "manifest describes {offset} values, blob holds {}",
            values.len()
        )));
    }
    Ok((store, meta))
}
