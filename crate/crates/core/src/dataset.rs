//! Supervised jump pairs built from trajectories, the 80/10/10 split, and the
//! little-endian binary container used for datasets and trajectories.
//!
//! # File layout
//!
//! ```text
//! magic      4 bytes   "LBNO" (dataset) or "LBNT" (trajectory)
//! version    u32       1
//! model      u8        0 = D2Q9, 1 = D3Q19
//! dims       u8        number of spatial axes d
//! extents    u32 x d
//! q          u16
//! dtype      u8        0 = f64, 1 = f32
//! jump       u32       dataset: jump in steps; trajectory: snapshot stride
//! count      u64       number of records
//! times      u64 x count   dataset: t_in per sample; trajectory: snapshot step
//! records    count x { payload..., crc32 u32 }
//!            dataset records hold input then target; trajectory records hold
//!            one snapshot. Each payload is q x cells values, channel-major,
//!            row-major cells. The CRC-32 covers the record's payload bytes.
//! meta_len   u32
//! meta       meta_len bytes of UTF-8 JSON (provenance, split tag)
//! meta_crc   u32       CRC-32 of the JSON bytes
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::lattice::LatticeModel;
use crate::solver::Trajectory;

pub const DATASET_MAGIC: [u8; 4] = *b"LBNO";
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"LBNT";
pub const FORMAT_VERSION: u32 = 1;

/// Where the data came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 (hex) of the canonical JSON of the generating configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub note: String,
}

/// Hex SHA-256 of a serializable value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Dtype::F64),
            1 => Ok(Dtype::F32),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

/// One input/target pair separated by `jump` solver steps.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSample {
    pub input: DistributionField,
    pub target: DistributionField,
    pub t_in: u64,
    pub jump: u64,
}

impl KineticSample {
    pub fn t_out(&self) -> u64 {
        self.t_in + self.jump
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticDataset {
    pub model: LatticeModel,
    pub extents: Vec<usize>,
    pub jump: u64,
    pub samples: Vec<KineticSample>,
    pub provenance: Provenance,
    pub split: Option<SplitTag>,
}

impl KineticDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, idx: &[usize], tag: SplitTag) -> KineticDataset {
        KineticDataset {
            model: self.model,
            extents: self.extents.clone(),
            jump: self.jump,
            samples: idx.iter().map(|&k| self.samples[k].clone()).collect(),
            provenance: self.provenance.clone(),
            split: Some(tag),
        }
    }

    /// Checks the homogeneity invariants.
    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if s.jump != self.jump {
                return Err(Error::Format(format!("sample {k} has jump {} != {}", s.jump, self.jump)));
            }
            for f in [&s.input, &s.target] {
                if f.model() != self.model || f.extents() != self.extents.as_slice() {
                    return Err(Error::shape(format!("sample {k} does not match dataset layout")));
                }
            }
        }
        Ok(())
    }
}

/// Sliding-window pairs `(snapshot[k], snapshot[k + jump/stride])`.
pub fn generate(traj: &Trajectory, jump: u64) -> Result<KineticDataset> {
    generate_many(std::slice::from_ref(traj), jump)
}

/// Pairs from several trajectories with identical layout and stride.
pub fn generate_many(trajs: &[Trajectory], jump: u64) -> Result<KineticDataset> {
    let first = trajs
        .iter()
        .find_map(|t| t.snapshots.first())
        .ok_or_else(|| Error::config("no snapshots to build a dataset from"))?;
    let (model, extents) = (first.model(), first.extents().to_vec());
    let mut samples = Vec::new();
    for traj in trajs {
        if traj.stride == 0 {
            return Err(Error::config("trajectory stride is zero"));
        }
        if jump % traj.stride != 0 {
            return Err(Error::config(format!(
                "jump {jump} is not a multiple of the trajectory stride {}",
                traj.stride
            )));
        }
        if traj.snapshots.iter().any(|s| s.model() != model || s.extents() != extents.as_slice()) {
            return Err(Error::shape("trajectories disagree on lattice model or grid"));
        }
        let k = (jump / traj.stride) as usize;
        let n = traj.snapshots.len().saturating_sub(k);
        let part: Vec<KineticSample> = (0..n)
            .into_par_iter()
            .map(|i| KineticSample {
                input: traj.snapshots[i].clone(),
                target: traj.snapshots[i + k].clone(),
                t_in: traj.times[i],
                jump,
            })
            .collect();
        samples.extend(part);
    }
    Ok(KineticDataset {
        model,
        extents,
        jump,
        samples,
        provenance: trajs[0].provenance.clone(),
        split: None,
    })
}

/// Split sizes: validation and test take `round(fraction * n)`, train keeps
/// the remainder.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions must be in [0,1] and sum to 1: {fractions:?}")));
    }
    let val = (b * n as f64).round() as usize;
    let test = ((c * n as f64).round() as usize).min(n - val.min(n));
    let val = val.min(n);
    Ok((n - val - test, val, test))
}

/// Deterministic shuffled split into (train, val, test).
pub fn split(
    ds: &KineticDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(KineticDataset, KineticDataset, KineticDataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (n_train, n_val, _) = split_sizes(ds.len(), fractions)?;
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, rest) = idx.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((
        ds.subset(train, SplitTag::Train),
        ds.subset(val, SplitTag::Val),
        ds.subset(test, SplitTag::Test),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    provenance: Provenance,
    split: Option<SplitTag>,
}

struct Header {
    model: LatticeModel,
    extents: Vec<usize>,
    dtype: Dtype,
    jump: u64,
    times: Vec<u64>,
}

fn push_payload(buf: &mut Vec<u8>, f: &DistributionField, dtype: Dtype) {
    match dtype {
        Dtype::F64 => f.data().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => f
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
}

fn encode_container(magic: [u8; 4], h: &Header, records: &[Vec<&DistributionField>], meta: &Meta) -> Result<Vec<u8>> {
    let q = h.model.q();
    let mut buf = Vec::new();
    buf.extend_from_slice(&magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(h.model.tag());
    buf.push(h.extents.len() as u8);
    for e in &h.extents {
        let e = u32::try_from(*e).map_err(|_| Error::Format("extent exceeds u32".into()))?;
        buf.extend_from_slice(&e.to_le_bytes());
    }
    buf.extend_from_slice(&(q as u16).to_le_bytes());
    buf.push(h.dtype.tag());
    let jump = u32::try_from(h.jump).map_err(|_| Error::Format("jump exceeds u32".into()))?;
    buf.extend_from_slice(&jump.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for t in &h.times {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for rec in records {
        let start = buf.len();
        for f in rec {
            push_payload(&mut buf, f, h.dtype);
        }
        let crc = crc32fast::hash(&buf[start..]);
        buf.extend_from_slice(&crc.to_le_bytes());
    }
    let meta = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    let crc = crc32fast::hash(&meta);
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} available",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode_payload(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    }
}

fn decode_container(
    expected_magic: [u8; 4],
    bytes: &[u8],
    fields_per_record: usize,
) -> Result<(Header, Vec<Vec<DistributionField>>, Meta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != expected_magic {
        return Err(Error::Magic {
            expected: expected_magic,
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let model = LatticeModel::from_tag(r.u8("model tag")?).map_err(|e| Error::Format(e.to_string()))?;
    let dims = r.u8("dims")? as usize;
    if dims != model.dim() {
        return Err(Error::Format(format!("{model} stored with {dims} axes")));
    }
    let mut extents = Vec::with_capacity(dims);
    for _ in 0..dims {
        extents.push(r.u32("extent")? as usize);
    }
    let q = r.u16("q")? as usize;
    if q != model.q() {
        return Err(Error::Format(format!("{model} stored with Q = {q}")));
    }
    let dtype = Dtype::from_tag(r.u8("dtype")?)?;
    let jump = r.u32("jump")? as u64;
    let count = r.u64("count")?;
    let cells: usize = extents.iter().product();
    let payload = q
        .checked_mul(cells)
        .and_then(|v| v.checked_mul(dtype.size()))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let record_len = payload * fields_per_record + 4;
    let remaining = (bytes.len() - r.pos) as u128;
    if (count as u128) * (8 + record_len as u128) > remaining {
        return Err(Error::Truncated(format!(
            "{count} records of {record_len} bytes do not fit in {remaining} remaining bytes"
        )));
    }
    let count = count as usize;
    let mut times = Vec::with_capacity(count);
    for _ in 0..count {
        times.push(r.u64("times")?);
    }
    let mut records = Vec::with_capacity(count);
    for k in 0..count {
        let body = r.take(payload * fields_per_record, "record payload")?;
        let stored = r.u32("record checksum")?;
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum {
                what: format!("record {k}"),
                stored,
                computed,
            });
        }
        let fields = body
            .chunks_exact(payload)
            .map(|chunk| DistributionField::from_data(model, &extents, decode_payload(chunk, dtype)))
            .collect::<Result<Vec<_>>>()?;
        records.push(fields);
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let stored = r.u32("metadata checksum")?;
    let computed = crc32fast::hash(meta_bytes);
    if stored != computed {
        return Err(Error::Checksum {
            what: "metadata".into(),
            stored,
            computed,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Format(format!("metadata: {e}")))?;
    Ok((
        Header {
            model,
            extents,
            dtype,
            jump,
            times,
        },
        records,
        meta,
    ))
}

pub fn encode(ds: &KineticDataset, dtype: Dtype) -> Result<Vec<u8>> {
    ds.validate()?;
    let header = Header {
        model: ds.model,
        extents: ds.extents.clone(),
        dtype,
        jump: ds.jump,
        times: ds.samples.iter().map(|s| s.t_in).collect(),
    };
    let records: Vec<Vec<&DistributionField>> = ds.samples.iter().map(|s| vec![&s.input, &s.target]).collect();
    encode_container(
        DATASET_MAGIC,
        &header,
        &records,
        &Meta {
            provenance: ds.provenance.clone(),
            split: ds.split,
        },
    )
}

pub fn decode(bytes: &[u8]) -> Result<KineticDataset> {
    let (h, records, meta) = decode_container(DATASET_MAGIC, bytes, 2)?;
    let samples = records
        .into_iter()
        .zip(h.times)
        .map(|(mut rec, t_in)| {
            let target = rec.pop().unwrap();
            let input = rec.pop().unwrap();
            KineticSample {
                input,
                target,
                t_in,
                jump: h.jump,
            }
        })
        .collect();
    let _ = h.dtype;
    Ok(KineticDataset {
        model: h.model,
        extents: h.extents,
        jump: h.jump,
        samples,
        provenance: meta.provenance,
        split: meta.split,
    })
}

pub fn save(ds: &KineticDataset, path: &Path) -> Result<()> {
    save_with_dtype(ds, path, Dtype::F64)
}

pub fn save_with_dtype(ds: &KineticDataset, path: &Path, dtype: Dtype) -> Result<()> {
    fs::write(path, encode(ds, dtype)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<KineticDataset> {
    decode(&fs::read(path)?)
}

/// Trajectory encoding; an empty trajectory needs the layout explicitly.
pub fn encode_trajectory(
    traj: &Trajectory,
    model: LatticeModel,
    extents: &[usize],
    dtype: Dtype,
) -> Result<Vec<u8>> {
    if traj.snapshots.iter().any(|s| s.model() != model || s.extents() != extents) {
        return Err(Error::shape("snapshot layout differs from the declared layout"));
    }
    let header = Header {
        model,
        extents: extents.to_vec(),
        dtype,
        jump: traj.stride,
        times: traj.times.clone(),
    };
    let records: Vec<Vec<&DistributionField>> = traj.snapshots.iter().map(|s| vec![s]).collect();
    encode_container(
        TRAJECTORY_MAGIC,
        &header,
        &records,
        &Meta {
            provenance: traj.provenance.clone(),
            split: None,
        },
    )
}

/// Decodes a trajectory and returns it with its lattice model and extents.
pub fn decode_trajectory(bytes: &[u8]) -> Result<(Trajectory, LatticeModel, Vec<usize>)> {
    let (h, records, meta) = decode_container(TRAJECTORY_MAGIC, bytes, 1)?;
    let traj = Trajectory {
        snapshots: records.into_iter().map(|mut r| r.pop().unwrap()).collect(),
        times: h.times,
        stride: h.jump,
        provenance: meta.provenance,
    };
    Ok((traj, h.model, h.extents))
}

pub fn save_trajectory(
    traj: &Trajectory,
    model: LatticeModel,
    extents: &[usize],
    path: &Path,
) -> Result<()> {
    fs::write(path, encode_trajectory(traj, model, extents, Dtype::F64)?)?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, LatticeModel, Vec<usize>)> {
    decode_trajectory(&fs::read(path)?)
}
