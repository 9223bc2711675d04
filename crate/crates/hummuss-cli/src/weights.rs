//! Binary weights container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "HMSS"
//! version u16      currently 1
//! config  u32 length, then that many bytes of "key=value\n" lines
//! count   u32      number of tensors
//! tensor  u16 name length, name bytes (utf-8),
//!         u8 dtype (0 = f32 le, 1 = f64 le),
//!         u8 rank, rank x u32 dims,
//!         raw element data
//! ```
//!
//! Tensors are stored under canonical dotted names
//! (`blocks.3.stream1.temporal.w_f1`); loading a model rejects unknown names,
//! missing names, and dimension mismatches, each with its own error.

use std::collections::HashMap;

use hummuss_core::layer::DssmLayer;
use hummuss_core::linalg::Matrix;
use hummuss_core::model::{HummussConfig, HummussModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"HMSS";
pub const FORMAT_VERSION: u16 = 1;

/// Everything that can be wrong with a weights file, each tagged so callers
/// and logs can tell the failure classes apart.
#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("[bad-magic] not a weights file: magic bytes are not \"HMSS\"")]
    BadMagic,
    #[error("[unsupported-version] file format version {0}, this build reads {FORMAT_VERSION}")]
    UnsupportedVersion(u16),
    #[error("[truncated] {0}")]
    Truncated(String),
    #[error("[bad-config] {0}")]
    BadConfig(String),
    #[error("[unknown-tensor] file contains unexpected tensor \"{0}\"")]
    UnknownTensor(String),
    #[error("[duplicate-tensor] tensor \"{0}\" appears more than once")]
    DuplicateTensor(String),
    #[error("[missing-tensor] model needs tensor \"{0}\" which the file lacks")]
    MissingTensor(String),
    #[error("[dim-mismatch] tensor \"{name}\": file has {got:?}, config implies {want:?}")]
    DimMismatch {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("[io] {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, WeightsError>;

/// Element encoding of one stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(WeightsError::BadConfig(format!(
                "unknown dtype code {other}"
            ))),
        }
    }

    fn elem_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// One named tensor; values are held as f64 regardless of stored dtype
/// (f32 widens exactly, and narrows back exactly on re-save).
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn f64(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        let t = NamedTensor {
            name: name.into(),
            dtype: Dtype::F64,
            dims,
            data,
        };
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.data.len());
        t
    }
}

/// A decoded weights file: format version, model configuration, and the
/// tensor table in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub version: u16,
    pub config: HummussConfig,
    pub tensors: Vec<NamedTensor>,
}

// ---------------------------------------------------------------------------
// Encoding

fn encode_config(c: &HummussConfig) -> String {
    // Display of f64 is shortest-roundtrip, so parse(fmt(x)) == x exactly.
    format!(
        "n_blocks={}\nd_in={}\nd_model={}\nd_rep={}\nstate_dim={}\nk_spatial={}\nk_temporal={}\nn_expand={}\ncausal={}\nnominal_fps={}\n",
        c.n_blocks,
        c.d_in,
        c.d_model,
        c.d_rep,
        c.state_dim,
        c.k_spatial,
        c.k_temporal,
        c.n_expand,
        c.causal,
        c.nominal_fps
    )
}

fn decode_config(text: &str) -> Result<HummussConfig> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let (k, v) = line.split_once('=').ok_or_else(|| {
            WeightsError::BadConfig(format!("config line {}: missing '='", i + 1))
        })?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(WeightsError::BadConfig(format!("repeated config key {k}")));
        }
    }
    fn get<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
        map.get(key)
            .ok_or_else(|| WeightsError::BadConfig(format!("missing config key {key}")))?
            .parse()
            .map_err(|_| WeightsError::BadConfig(format!("config key {key}: unparseable value")))
    }
    let config = HummussConfig {
        n_blocks: get(&map, "n_blocks")?,
        d_in: get(&map, "d_in")?,
        d_model: get(&map, "d_model")?,
        d_rep: get(&map, "d_rep")?,
        state_dim: get(&map, "state_dim")?,
        k_spatial: get(&map, "k_spatial")?,
        k_temporal: get(&map, "k_temporal")?,
        n_expand: get(&map, "n_expand")?,
        causal: get(&map, "causal")?,
        nominal_fps: get(&map, "nominal_fps")?,
    };
    if map.len() != 10 {
        let known = [
            "n_blocks", "d_in", "d_model", "d_rep", "state_dim", "k_spatial", "k_temporal",
            "n_expand", "causal", "nominal_fps",
        ];
        let extra = map.keys().find(|k| !known.contains(&k.as_str()));
        return Err(WeightsError::BadConfig(format!(
            "unknown config key {}",
            extra.map(String::as_str).unwrap_or("?")
        )));
    }
    config
        .validate()
        .map_err(|e| WeightsError::BadConfig(e.to_string()))?;
    Ok(config)
}

/// Serialize a decoded file back to bytes. Dtype, dims, and tensor order are
/// preserved, so read -> write is byte-identical.
pub fn write_bytes(file: &WeightsFile) -> Vec<u8> {
    let config = encode_config(&file.config);
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&file.version.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(file.tensors.len() as u32).to_le_bytes());
    for t in &file.tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dtype.code());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match t.dtype {
            Dtype::F32 => {
                for &v in &t.data {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::F64 => {
                for &v in &t.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(WeightsError::Truncated(format!(
                "file ends inside {what} (wanted {n} bytes at offset {})",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decode a weights file from bytes.
pub fn read_bytes(bytes: &[u8]) -> Result<WeightsFile> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic").map_err(|_| WeightsError::BadMagic)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let config_len = c.u32("config length")? as usize;
    let config_text = std::str::from_utf8(c.take(config_len, "config block")?)
        .map_err(|_| WeightsError::BadConfig("config block is not utf-8".into()))?;
    let config = decode_config(config_text)?;

    let count = c.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "tensor name")?)
            .map_err(|_| WeightsError::BadConfig("tensor name is not utf-8".into()))?
            .to_string();
        let dtype = Dtype::from_code(c.take(1, "dtype")?[0])?;
        let rank = c.take(1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u32("dims")? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = c.take(n * dtype.elem_bytes(), &format!("data of \"{name}\""))?;
        let data = match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        };
        tensors.push(NamedTensor {
            name,
            dtype,
            dims,
            data,
        });
    }
    if c.pos != bytes.len() {
        return Err(WeightsError::Truncated(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - c.pos
        )));
    }
    Ok(WeightsFile {
        version,
        config,
        tensors,
    })
}

// ---------------------------------------------------------------------------
// Model <-> tensor table

fn mat_tensor(name: String, m: &Matrix) -> NamedTensor {
    NamedTensor::f64(name, vec![m.rows, m.cols], m.data.clone())
}

fn vec_tensor(name: String, v: &[f64]) -> NamedTensor {
    NamedTensor::f64(name, vec![v.len()], v.to_vec())
}

/// The six tensors of one DSSM bank: complex pieces split into re/im planes
/// of shape `[channels, pairs]`, plus the per-channel step and feedthrough.
fn bank_tensors(prefix: &str, layer: &DssmLayer, out: &mut Vec<NamedTensor>) {
    let (ch, pairs) = (layer.channels(), layer.pairs());
    let mut lam_re = Vec::with_capacity(ch * pairs);
    let mut lam_im = Vec::with_capacity(ch * pairs);
    let mut c_re = Vec::with_capacity(ch * pairs);
    let mut c_im = Vec::with_capacity(ch * pairs);
    let mut delta_log = Vec::with_capacity(ch);
    let mut d = Vec::with_capacity(ch);
    for p in &layer.params {
        lam_re.extend_from_slice(&p.lambda_re);
        lam_im.extend_from_slice(&p.lambda_im);
        c_re.extend(p.c.iter().map(|z| z.re));
        c_im.extend(p.c.iter().map(|z| z.im));
        delta_log.push(p.delta_log);
        d.push(p.d);
    }
    let plane = vec![ch, pairs];
    out.push(NamedTensor::f64(format!("{prefix}.lambda_re"), plane.clone(), lam_re));
    out.push(NamedTensor::f64(format!("{prefix}.lambda_im"), plane.clone(), lam_im));
    out.push(NamedTensor::f64(format!("{prefix}.c_re"), plane.clone(), c_re));
    out.push(NamedTensor::f64(format!("{prefix}.c_im"), plane, c_im));
    out.push(NamedTensor::f64(format!("{prefix}.delta_log"), vec![ch], delta_log));
    out.push(NamedTensor::f64(format!("{prefix}.d"), vec![ch], d));
}

fn block_tensors(
    prefix: &str,
    b: &hummuss_core::block::BlockWeights,
    out: &mut Vec<NamedTensor>,
) {
    out.push(vec_tensor(format!("{prefix}.ln_gamma"), &b.gamma));
    out.push(vec_tensor(format!("{prefix}.ln_beta"), &b.beta));
    out.push(mat_tensor(format!("{prefix}.w_id"), &b.w_id));
    out.push(mat_tensor(format!("{prefix}.w_f1"), &b.w_f1));
    out.push(mat_tensor(format!("{prefix}.w_f2"), &b.w_f2));
    if let (Some(w_b1), Some(w_b2), Some(w_cb)) = (&b.w_b1, &b.w_b2, &b.w_cb) {
        out.push(mat_tensor(format!("{prefix}.w_b1"), w_b1));
        out.push(mat_tensor(format!("{prefix}.w_b2"), w_b2));
        out.push(mat_tensor(format!("{prefix}.w_cb"), w_cb));
    }
    out.push(mat_tensor(format!("{prefix}.w_out"), &b.w_out));
    bank_tensors(&format!("{prefix}.fwd"), &b.fwd, out);
    if let Some(bwd) = &b.bwd {
        bank_tensors(&format!("{prefix}.bwd"), bwd, out);
    }
}

/// Canonical tensor table of a model, in the order the file stores them.
pub fn model_to_tensors(model: &HummussModel) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    out.push(mat_tensor("lift.weight".into(), &model.lift_w));
    out.push(vec_tensor("lift.bias".into(), &model.lift_b));
    for (i, layer) in model.layers.iter().enumerate() {
        block_tensors(&format!("blocks.{i}.stream1.spatial"), &layer.spatial1, &mut out);
        block_tensors(&format!("blocks.{i}.stream1.temporal"), &layer.temporal1, &mut out);
        block_tensors(&format!("blocks.{i}.stream2.temporal"), &layer.temporal2, &mut out);
        block_tensors(&format!("blocks.{i}.stream2.spatial"), &layer.spatial2, &mut out);
        out.push(mat_tensor(format!("blocks.{i}.fuse.weight"), &layer.w_fuse));
    }
    out.push(mat_tensor("head.weight".into(), &model.head_w));
    out.push(vec_tensor("head.bias".into(), &model.head_b));
    out.push(mat_tensor("readout.weight".into(), &model.readout_w));
    out.push(vec_tensor("readout.bias".into(), &model.readout_b));
    out
}

/// Wrap a model into a decoded file ready for [`write_bytes`].
pub fn file_from_model(model: &HummussModel) -> WeightsFile {
    WeightsFile {
        version: FORMAT_VERSION,
        config: model.config.clone(),
        tensors: model_to_tensors(model),
    }
}

struct TensorMap {
    map: HashMap<String, NamedTensor>,
}

impl TensorMap {
    fn new(tensors: Vec<NamedTensor>) -> Result<Self> {
        let mut map = HashMap::with_capacity(tensors.len());
        for t in tensors {
            let name = t.name.clone();
            if map.insert(name.clone(), t).is_some() {
                return Err(WeightsError::DuplicateTensor(name));
            }
        }
        Ok(TensorMap { map })
    }

    fn take(&mut self, name: &str, want: &[usize]) -> Result<Vec<f64>> {
        let t = self
            .map
            .remove(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.to_string()))?;
        if t.dims != want {
            return Err(WeightsError::DimMismatch {
                name: name.to_string(),
                got: t.dims,
                want: want.to_vec(),
            });
        }
        Ok(t.data)
    }

    fn take_mat(&mut self, name: &str, slot: &mut Matrix) -> Result<()> {
        slot.data = self.take(name, &[slot.rows, slot.cols])?;
        Ok(())
    }

    fn take_vec(&mut self, name: &str, slot: &mut Vec<f64>) -> Result<()> {
        *slot = self.take(name, &[slot.len()])?;
        Ok(())
    }

    fn take_bank(&mut self, prefix: &str, layer: &mut DssmLayer) -> Result<()> {
        let (ch, pairs) = (layer.channels(), layer.pairs());
        let plane = [ch, pairs];
        let lam_re = self.take(&format!("{prefix}.lambda_re"), &plane)?;
        let lam_im = self.take(&format!("{prefix}.lambda_im"), &plane)?;
        let c_re = self.take(&format!("{prefix}.c_re"), &plane)?;
        let c_im = self.take(&format!("{prefix}.c_im"), &plane)?;
        let delta_log = self.take(&format!("{prefix}.delta_log"), &[ch])?;
        let d = self.take(&format!("{prefix}.d"), &[ch])?;
        for (h, p) in layer.params.iter_mut().enumerate() {
            let row = h * pairs..(h + 1) * pairs;
            p.lambda_re.copy_from_slice(&lam_re[row.clone()]);
            p.lambda_im.copy_from_slice(&lam_im[row.clone()]);
            for (j, z) in p.c.iter_mut().enumerate() {
                z.re = c_re[h * pairs + j];
                z.im = c_im[h * pairs + j];
            }
            p.delta_log = delta_log[h];
            p.d = d[h];
        }
        Ok(())
    }

    fn take_block(
        &mut self,
        prefix: &str,
        b: &mut hummuss_core::block::BlockWeights,
    ) -> Result<()> {
        self.take_vec(&format!("{prefix}.ln_gamma"), &mut b.gamma)?;
        self.take_vec(&format!("{prefix}.ln_beta"), &mut b.beta)?;
        self.take_mat(&format!("{prefix}.w_id"), &mut b.w_id)?;
        self.take_mat(&format!("{prefix}.w_f1"), &mut b.w_f1)?;
        self.take_mat(&format!("{prefix}.w_f2"), &mut b.w_f2)?;
        if b.w_b1.is_some() {
            self.take_mat(&format!("{prefix}.w_b1"), b.w_b1.as_mut().unwrap())?;
            self.take_mat(&format!("{prefix}.w_b2"), b.w_b2.as_mut().unwrap())?;
            self.take_mat(&format!("{prefix}.w_cb"), b.w_cb.as_mut().unwrap())?;
        }
        self.take_mat(&format!("{prefix}.w_out"), &mut b.w_out)?;
        self.take_bank(&format!("{prefix}.fwd"), &mut b.fwd)?;
        if let Some(bwd) = b.bwd.as_mut() {
            self.take_bank(&format!("{prefix}.bwd"), bwd)?;
        }
        Ok(())
    }
}

/// Build a model from a decoded file, checking the tensor table against the
/// configuration: no unknown, duplicate, or missing names, no shape drift.
pub fn model_from_file(file: &WeightsFile) -> Result<HummussModel> {
    // A freshly initialized model provides the expected shapes; every slot
    // is then overwritten from the file (missing ones error out).
    let mut model = HummussModel::init(file.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| WeightsError::BadConfig(e.to_string()))?;
    let mut map = TensorMap::new(file.tensors.clone())?;

    map.take_mat("lift.weight", &mut model.lift_w)?;
    map.take_vec("lift.bias", &mut model.lift_b)?;
    for i in 0..model.layers.len() {
        let layer = &mut model.layers[i];
        map.take_block(&format!("blocks.{i}.stream1.spatial"), &mut layer.spatial1)?;
        map.take_block(&format!("blocks.{i}.stream1.temporal"), &mut layer.temporal1)?;
        map.take_block(&format!("blocks.{i}.stream2.temporal"), &mut layer.temporal2)?;
        map.take_block(&format!("blocks.{i}.stream2.spatial"), &mut layer.spatial2)?;
        map.take_mat(&format!("blocks.{i}.fuse.weight"), &mut layer.w_fuse)?;
    }
    map.take_mat("head.weight", &mut model.head_w)?;
    map.take_vec("head.bias", &mut model.head_b)?;
    map.take_mat("readout.weight", &mut model.readout_w)?;
    map.take_vec("readout.bias", &mut model.readout_b)?;

    if let Some(name) = map.map.keys().min() {
        return Err(WeightsError::UnknownTensor(name.clone()));
    }
    Ok(model)
}

/// Read a model (and the decoded file) from disk.
pub fn load_model(path: &std::path::Path) -> Result<HummussModel> {
    let bytes = std::fs::read(path)?;
    model_from_file(&read_bytes(&bytes)?)
}

/// Write a model to disk in the canonical f64 encoding.
pub fn save_model(path: &std::path::Path, model: &HummussModel) -> Result<()> {
    std::fs::write(path, write_bytes(&file_from_model(model)))?;
    Ok(())
}
