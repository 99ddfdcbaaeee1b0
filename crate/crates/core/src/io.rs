//! Binary persistence and dataset ingestion.
//!
//! Two little-endian container formats, both checksummed with 64-bit
//! FNV-1a over everything before the trailing checksum word:
//!
//! * checkpoints (`SSSM`): format version, a config echo string, an RNG
//!   state word, and a named-tensor table (name, dtype, shape, payload);
//! * surrogate-network datasets (`SDN1`): version, count/length, generation
//!   metadata (tau, threshold, input mean/std, seed), then f32 inputs and
//!   targets back to back.
//!
//! Round trips are bitwise; any version mismatch, truncation, or checksum
//! failure is a hard data error. MNIST arrives as (optionally gzipped) IDX
//! files and becomes length-784 sequences scaled to [0, 1].

use crate::config::TaskConfig;
use crate::error::{Error, Result};
use crate::lif::NeuronParams;
use crate::network::{SpikingSsmNetwork, TaskDataset};
use crate::rng::Rng;
use crate::sdn::SdnModel;
use crate::sdn_train::{DatasetMeta, SdnDataset};
use flate2::read::GzDecoder;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

const CKPT_MAGIC: &[u8; 4] = b"SSSM";
const CKPT_VERSION: u32 = 1;
const DATA_MAGIC: &[u8; 4] = b"SDN1";
const DATA_VERSION: u32 = 1;

// ---- byte-level helpers -------------------------------------------------

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Cursor<'a> {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::data(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::data("invalid UTF-8 in file string"))
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn f32s_to_bytes(v: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * 4);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn bytes_to_f32s(b: &[u8]) -> Result<Vec<f32>> {
    if b.len() % 4 != 0 {
        return Err(Error::data("f32 payload length not a multiple of 4"));
    }
    Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Verify the trailing checksum and return the body before it.
fn checked_body<'a>(raw: &'a [u8], what: &str) -> Result<&'a [u8]> {
    if raw.len() < 8 {
        return Err(Error::data(format!("{what}: file too short for a checksum")));
    }
    let (body, tail) = raw.split_at(raw.len() - 8);
    let want = u64::from_le_bytes(tail.try_into().unwrap());
    let got = fnv1a(body);
    if want != got {
        return Err(Error::data(format!(
            "{what}: checksum mismatch (stored {want:#018x}, computed {got:#018x})"
        )));
    }
    Ok(body)
}

fn finish_and_write(mut bytes: Vec<u8>, path: &Path) -> Result<()> {
    let sum = fnv1a(&bytes);
    push_u64(&mut bytes, sum);
    fs::write(path, bytes).map_err(|e| Error::data(format!("write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::data(format!("read {}: {e}", path.display())))
}

// ---- checkpoints ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::U8 => 2,
        }
    }

    fn from_code(c: u8) -> Result<Dtype> {
        match c {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::U8),
            other => Err(Error::data(format!("unknown tensor dtype code {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// Little-endian payload.
    pub data: Vec<u8>,
}

impl Tensor {
    pub fn from_f32(name: &str, shape: Vec<usize>, values: &[f32]) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor { name: name.into(), dtype: Dtype::F32, shape, data: f32s_to_bytes(values) }
    }

    pub fn as_f32(&self) -> Result<Vec<f32>> {
        if self.dtype != Dtype::F32 {
            return Err(Error::data(format!("tensor '{}' is not f32", self.name)));
        }
        bytes_to_f32s(&self.data)
    }

    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub rng_state: u64,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(config: String, rng_state: u64) -> Checkpoint {
        Checkpoint { config, rng_state, tensors: Vec::new() }
    }

    pub fn push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::data(format!("checkpoint has no tensor named '{name}'")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        push_u32(&mut out, CKPT_VERSION);
        push_string(&mut out, &self.config);
        push_u64(&mut out, self.rng_state);
        push_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            push_string(&mut out, &t.name);
            out.push(t.dtype.code());
            push_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                push_u32(&mut out, d as u32);
            }
            let expect = t.elements() * t.dtype.width();
            if expect != t.data.len() {
                return Err(Error::invalid(format!(
                    "tensor '{}': payload {} bytes does not match shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
            out.extend_from_slice(&t.data);
        }
        finish_and_write(out, path)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let raw = read_file(path)?;
        let body = checked_body(&raw, "checkpoint")?;
        let mut c = Cursor::new(body);
        if c.take(4)? != CKPT_MAGIC {
            return Err(Error::data("not a checkpoint file (bad magic)"));
        }
        let version = c.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::data(format!(
                "checkpoint format version {version} unsupported (this build reads version {CKPT_VERSION})"
            )));
        }
        let config = c.string()?;
        let rng_state = c.u64()?;
        let count = c.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = c.string()?;
            let dtype = Dtype::from_code(c.take(1)?[0])?;
            let ndim = c.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(c.u32()? as usize);
            }
            let bytes = shape.iter().product::<usize>() * dtype.width();
            let data = c.take(bytes)?.to_vec();
            tensors.push(Tensor { name, dtype, shape, data });
        }
        if c.pos != body.len() {
            return Err(Error::data("checkpoint has trailing bytes after the tensor table"));
        }
        Ok(Checkpoint { config, rng_state, tensors })
    }
}

// ---- model-specific checkpoint glue --------------------------------------

pub fn save_sdn(model: &SdnModel, config: &str, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new(config.to_string(), 0);
    ck.push(Tensor::from_f32("sdn.params", vec![model.params.len()], &model.params));
    ck.push(Tensor::from_f32("sdn.running_mean1", vec![8], &model.running_mean1));
    ck.push(Tensor::from_f32("sdn.running_var1", vec![8], &model.running_var1));
    ck.push(Tensor::from_f32("sdn.running_mean2", vec![8], &model.running_mean2));
    ck.push(Tensor::from_f32("sdn.running_var2", vec![8], &model.running_var2));
    ck.push(Tensor::from_f32("sdn.hyper", vec![2], &[model.momentum, model.eps]));
    ck.save(path)
}

pub fn load_sdn(path: &Path) -> Result<(SdnModel, String)> {
    let ck = Checkpoint::load(path)?;
    let params = ck.tensor("sdn.params")?.as_f32()?;
    let mut model = SdnModel::from_params(params)?;
    let fill = |dst: &mut [f32; 8], src: Vec<f32>, what: &str| -> Result<()> {
        if src.len() != 8 {
            return Err(Error::data(format!("{what}: expected 8 values, got {}", src.len())));
        }
        dst.copy_from_slice(&src);
        Ok(())
    };
    fill(&mut model.running_mean1, ck.tensor("sdn.running_mean1")?.as_f32()?, "running_mean1")?;
    fill(&mut model.running_var1, ck.tensor("sdn.running_var1")?.as_f32()?, "running_var1")?;
    fill(&mut model.running_mean2, ck.tensor("sdn.running_mean2")?.as_f32()?, "running_mean2")?;
    fill(&mut model.running_var2, ck.tensor("sdn.running_var2")?.as_f32()?, "running_var2")?;
    let hyper = ck.tensor("sdn.hyper")?.as_f32()?;
    if hyper.len() != 2 {
        return Err(Error::data("sdn.hyper must hold [momentum, eps]"));
    }
    model.momentum = hyper[0];
    model.eps = hyper[1];
    Ok((model, ck.config))
}

/// Persist a task network: its two parameter arenas, per-block norm running
/// statistics, and the full config echo needed to rebuild the architecture.
pub fn save_network(net: &SpikingSsmNetwork, cfg: &TaskConfig, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new(cfg.echo(), 0);
    ck.push(Tensor::from_f32("net.gen", vec![net.gen.len()], &net.gen));
    ck.push(Tensor::from_f32("net.aux", vec![net.aux.len()], &net.aux));
    for (i, (mean, var)) in net.bn_running().iter().enumerate() {
        ck.push(Tensor::from_f32(&format!("net.bn_mean.{i}"), vec![mean.len()], mean));
        ck.push(Tensor::from_f32(&format!("net.bn_var.{i}"), vec![var.len()], var));
    }
    ck.save(path)
}

pub fn load_network(path: &Path) -> Result<(SpikingSsmNetwork, TaskConfig)> {
    let ck = Checkpoint::load(path)?;
    let cfg = TaskConfig::parse(&ck.config)
        .map_err(|e| Error::data(format!("checkpoint config echo does not parse: {e}")))?;
    let mut net = SpikingSsmNetwork::init(&cfg.net_config(), cfg.seed)?;
    let gen = ck.tensor("net.gen")?.as_f32()?;
    let aux = ck.tensor("net.aux")?.as_f32()?;
    if gen.len() != net.gen.len() || aux.len() != net.aux.len() {
        return Err(Error::data("checkpoint arena sizes do not match the config echo"));
    }
    net.gen = gen;
    net.aux = aux;
    for i in 0..cfg.depth {
        let mean = ck.tensor(&format!("net.bn_mean.{i}"))?.as_f32()?;
        let var = ck.tensor(&format!("net.bn_var.{i}"))?.as_f32()?;
        net.set_bn_running(i, &mean, &var)?;
    }
    Ok((net, cfg))
}

// ---- SDN dataset files ----------------------------------------------------

pub fn save_sdn_dataset(ds: &SdnDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let m = &ds.meta;
    let mut out = Vec::with_capacity(16 + ds.inputs.len() * 8);
    out.extend_from_slice(DATA_MAGIC);
    push_u32(&mut out, DATA_VERSION);
    push_u64(&mut out, m.count as u64);
    push_u64(&mut out, m.length as u64);
    push_f64(&mut out, m.tau);
    push_f64(&mut out, m.v_th);
    push_f64(&mut out, m.mean);
    push_f64(&mut out, m.std);
    push_u64(&mut out, m.seed);
    out.extend_from_slice(&f32s_to_bytes(&ds.inputs));
    out.extend_from_slice(&f32s_to_bytes(&ds.targets));
    finish_and_write(out, path)
}

pub fn load_sdn_dataset(path: &Path) -> Result<SdnDataset> {
    let raw = read_file(path)?;
    let body = checked_body(&raw, "dataset")?;
    let mut c = Cursor::new(body);
    if c.take(4)? != DATA_MAGIC {
        return Err(Error::data("not a surrogate-training dataset (bad magic)"));
    }
    let version = c.u32()?;
    if version != DATA_VERSION {
        return Err(Error::data(format!(
            "dataset format version {version} unsupported (this build reads version {DATA_VERSION})"
        )));
    }
    let count = c.u64()? as usize;
    let length = c.u64()? as usize;
    let meta = DatasetMeta {
        tau: c.f64()?,
        v_th: c.f64()?,
        mean: c.f64()?,
        std: c.f64()?,
        seed: c.u64()?,
        count,
        length,
    };
    let n = count
        .checked_mul(length)
        .ok_or_else(|| Error::data("dataset dimensions overflow"))?;
    let inputs = bytes_to_f32s(c.take(n * 4)?)?;
    let targets = bytes_to_f32s(c.take(n * 4)?)?;
    if c.pos != body.len() {
        return Err(Error::data("dataset has trailing bytes after the payload"));
    }
    let ds = SdnDataset { inputs, targets, meta };
    ds.validate()?;
    Ok(ds)
}

// ---- MNIST ingestion -------------------------------------------------------

/// Data directory: `SPIKING_SSM_DATA` env var when set, else `data/mnist`.
pub fn mnist_dir() -> PathBuf {
    match std::env::var_os("SPIKING_SSM_DATA") {
        Some(v) => PathBuf::from(v),
        None => PathBuf::from("data/mnist"),
    }
}

/// Read a file, transparently gunzipping when it starts with the gzip magic.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = read_file(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::data(format!("gunzip {}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn idx_header(buf: &[u8], want_magic: u32, path: &Path) -> Result<(Vec<usize>, usize)> {
    let ndim = (want_magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if buf.len() < header {
        return Err(Error::data(format!("{}: truncated IDX header", path.display())));
    }
    let magic = u32::from_be_bytes(buf[..4].try_into().unwrap());
    if magic != want_magic {
        return Err(Error::data(format!(
            "{}: bad IDX magic {magic:#010x} (expected {want_magic:#010x})",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        dims.push(u32::from_be_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize);
    }
    Ok((dims, header))
}

/// Load one IDX image/label pair into length-784 sequences in [0, 1].
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<TaskDataset> {
    let ibuf = read_maybe_gz(images)?;
    let (idims, ioff) = idx_header(&ibuf, 0x0000_0803, images)?;
    let (count, rows, cols) = (idims[0], idims[1], idims[2]);
    let pixels = count * rows * cols;
    if ibuf.len() != ioff + pixels {
        return Err(Error::data(format!(
            "{}: expected {} pixel bytes, found {}",
            images.display(),
            pixels,
            ibuf.len() - ioff
        )));
    }
    let lbuf = read_maybe_gz(labels)?;
    let (ldims, loff) = idx_header(&lbuf, 0x0000_0801, labels)?;
    if ldims[0] != count {
        return Err(Error::data(format!(
            "image count {count} does not match label count {}",
            ldims[0]
        )));
    }
    if lbuf.len() != loff + count {
        return Err(Error::data(format!("{}: truncated label payload", labels.display())));
    }
    let length = rows * cols;
    let inputs: Vec<f32> = ibuf[ioff..].iter().map(|&b| b as f32 / 255.0).collect();
    let labels_v = lbuf[loff..].to_vec();
    if let Some(&bad) = labels_v.iter().find(|&&v| v > 9) {
        return Err(Error::data(format!("label {bad} outside the ten digit classes")));
    }
    let ds = TaskDataset { inputs, labels: labels_v, count, length, classes: 10 };
    ds.validate()?;
    Ok(ds)
}

/// Load the train or test split from a directory with the standard
/// (optionally gzipped) filenames.
pub fn load_mnist(dir: &Path, train: bool) -> Result<TaskDataset> {
    let (img, lbl) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    let pick = |stem: &str| -> Result<PathBuf> {
        let plain = dir.join(stem);
        if plain.exists() {
            return Ok(plain);
        }
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        Err(Error::data(format!(
            "missing {stem}[.gz] under {} (set SPIKING_SSM_DATA to the dataset directory)",
            dir.display()
        )))
    };
    load_mnist_idx(&pick(img)?, &pick(lbl)?)
}

/// Apply a fixed pixel permutation drawn from `seed` to every sequence.
/// The same seed always yields the same ordering.
pub fn permute_pixels(ds: &mut TaskDataset, seed: u64) {
    let mut perm: Vec<usize> = (0..ds.length).collect();
    Rng::new(seed).shuffle(&mut perm);
    let mut tmp = vec![0.0f32; ds.length];
    for i in 0..ds.count {
        let row = &mut ds.inputs[i * ds.length..(i + 1) * ds.length];
        for (dst, &src) in tmp.iter_mut().zip(perm.iter()) {
            *dst = row[src];
        }
        row.copy_from_slice(&tmp);
    }
}

/// First `count` samples as a view-copy (protocol subsets).
pub fn subset(ds: &TaskDataset, count: usize) -> Result<TaskDataset> {
    if count == 0 || count > ds.count {
        return Err(Error::invalid(format!(
            "subset of {count} from a dataset of {}",
            ds.count
        )));
    }
    Ok(TaskDataset {
        inputs: ds.inputs[..count * ds.length].to_vec(),
        labels: ds.labels[..count].to_vec(),
        count,
        length: ds.length,
        classes: ds.classes,
    })
}

/// Oracle sanity metadata for SDN datasets (used by the CLI when emitting
/// dataset files so the generation parameters are auditable).
pub fn dataset_params(meta: &DatasetMeta) -> NeuronParams {
    NeuronParams {
        tau: meta.tau,
        v_th: meta.v_th,
        ..NeuronParams::default()
    }
}
