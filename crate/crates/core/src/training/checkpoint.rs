//! Single-file binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes   "AEGANCKP"
//! version      u32       1
//! config_hash  u64       TrainingConfig::hash of the embedded config
//! step         u64       completed steps
//! seed         u64       run seed; the prior stream is derived from (seed, step)
//! config       str       TOML text of the TrainingConfig
//! sample       u8 kind (0 point, 1 image) + u64 dims (dim | height, width, channels)
//! range        f64 lo, f64 hi
//! networks     u32 count, then per network:
//!     role     u8 (0 generator, 1 encoder, 2 sample disc., 3 latent disc.)
//!     seed     u64 initialization seed
//!     tensors  u32 count, then per tensor: str name, u32 ndim, u64 dims.., f64 data..
//!     optimizer u8 kind, f64 lr, f64 beta1, f64 beta2, f64 momentum, u64 t,
//!              then two slot lists (first, second), each u32 count of
//!              (u64 len, f64 data..)
//! checksum     u64       first 8 bytes of SHA-256 over everything above
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{AeganError, Result};
use crate::models::{ImageShape, NetworkRole, ParameterSet, SampleShape, Tensor, ValueRange};
use crate::par::Exec;
use crate::training::{Networks, Optimizer, OptimizerKind, TrainState, TrainingConfig};

pub const MAGIC: &[u8; 8] = b"AEGANCKP";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
    fn slots(&mut self, slots: &[Vec<f64>]) {
        self.u32(slots.len() as u32);
        for s in slots {
            self.u64(s.len() as u64);
            self.f64s(s);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AeganError::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| AeganError::Checkpoint("length overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| AeganError::Checkpoint("invalid UTF-8".into()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| AeganError::Checkpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn slots(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.u32()?;
        (0..n).map(|_| self.usize().and_then(|len| self.f64s(len))).collect()
    }
}

fn role_code(role: NetworkRole) -> u8 {
    NetworkRole::ALL.iter().position(|&r| r == role).expect("known role") as u8
}

fn optimizer_code(kind: OptimizerKind) -> u8 {
    match kind {
        OptimizerKind::Sgd => 0,
        OptimizerKind::Momentum => 1,
        OptimizerKind::AdaptiveMoment => 2,
    }
}

/// Serialize a training state.
pub fn to_bytes(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u64(state.config.hash());
    w.u64(state.step);
    w.u64(state.config.seed);
    w.str(&toml::to_string(&state.config).expect("config serializes"));
    match state.sample_shape {
        SampleShape::Point { dim } => {
            w.u8(0);
            w.u64(dim as u64);
        }
        SampleShape::Image(image) => {
            w.u8(1);
            w.u64(image.height as u64);
            w.u64(image.width as u64);
            w.u64(image.channels as u64);
        }
    }
    w.f64(state.value_range.lo);
    w.f64(state.value_range.hi);
    let nets: Vec<_> = state.networks.iter().filter(|(role, _)| state.mode().uses(*role)).collect();
    w.u32(nets.len() as u32);
    for (role, params) in nets {
        w.u8(role_code(role));
        w.u64(params.seed());
        w.u32(params.tensors().len() as u32);
        for t in params.tensors() {
            w.str(&t.name);
            w.u32(t.shape.len() as u32);
            for &d in &t.shape {
                w.u64(d as u64);
            }
            w.f64s(&t.data);
        }
        let opt = state.optimizers.get(role).expect("optimizer per network");
        w.u8(optimizer_code(opt.kind));
        w.f64(opt.learning_rate);
        w.f64(opt.beta1);
        w.f64(opt.beta2);
        w.f64(opt.momentum);
        w.u64(opt.t);
        w.slots(&opt.first);
        w.slots(&opt.second);
    }
    let checksum = Sha256::digest(&w.0);
    w.0.extend_from_slice(&checksum[..8]);
    w.0
}

/// Deserialize and validate a training state.
pub fn from_bytes(bytes: &[u8]) -> Result<TrainState> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(AeganError::Checkpoint("not an AEGAN checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if Sha256::digest(body)[..8] != *tail {
        return Err(AeganError::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION {
        return Err(AeganError::Checkpoint(format!("unsupported version {version}")));
    }
    let hash = r.u64()?;
    let step = r.u64()?;
    let _seed = r.u64()?;
    let config: TrainingConfig =
        toml::from_str(&r.str()?).map_err(|e| AeganError::Checkpoint(format!("embedded config: {e}")))?;
    if config.hash() != hash {
        return Err(AeganError::Checkpoint("config hash does not match the embedded config".into()));
    }
    let sample_shape = match r.u8()? {
        0 => SampleShape::Point { dim: r.usize()? },
        1 => SampleShape::Image(ImageShape {
            height: r.usize()?,
            width: r.usize()?,
            channels: r.usize()?,
        }),
        k => return Err(AeganError::Checkpoint(format!("unknown sample kind {k}"))),
    };
    let value_range = ValueRange { lo: r.f64()?, hi: r.f64()? };
    let mut state = TrainState::new(&config, sample_shape, value_range)?;
    state.step = step;
    let count = r.u32()?;
    let expected = state.networks.iter().count();
    if count as usize != expected {
        return Err(AeganError::Checkpoint(format!("expected {expected} networks, found {count}")));
    }
    for _ in 0..count {
        let code = r.u8()? as usize;
        let role = *NetworkRole::ALL
            .get(code)
            .ok_or_else(|| AeganError::Checkpoint(format!("unknown network role {code}")))?;
        let seed = r.u64()?;
        let n_tensors = r.u32()?;
        let mut tensors = Vec::with_capacity(n_tensors as usize);
        for _ in 0..n_tensors {
            let name = r.str()?;
            let ndim = r.u32()?;
            let shape = (0..ndim).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let data = r.f64s(shape.iter().product())?;
            tensors.push(Tensor { name, shape, data });
        }
        let slot = state
            .networks
            .get_mut(role)
            .ok_or_else(|| AeganError::Checkpoint(format!("{} is not part of this mode", role.name())))?;
        *slot = ParameterSet::from_tensors(slot.spec(), seed, tensors)?;
        let kind = match r.u8()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Momentum,
            2 => OptimizerKind::AdaptiveMoment,
            k => return Err(AeganError::Checkpoint(format!("unknown optimizer {k}"))),
        };
        let opt = Optimizer {
            kind,
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            momentum: r.f64()?,
            t: r.u64()?,
            first: r.slots()?,
            second: r.slots()?,
        };
        *state.optimizers.get_mut(role).expect("optimizer per network") = opt;
    }
    if r.pos != body.len() {
        return Err(AeganError::Checkpoint("trailing bytes".into()));
    }
    state.exec = Exec::default();
    Ok(state)
}

pub fn save(state: &TrainState, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(state)).map_err(|e| AeganError::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| AeganError::io(path, e))?;
    from_bytes(&bytes)
}

impl TrainState {
    pub fn save(&self, path: &Path) -> Result<()> {
        save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load(path)
    }
}

/// Look up a network, failing with a usage error when the mode lacks it.
pub fn require(networks: &Networks, role: NetworkRole) -> Result<&ParameterSet> {
    networks
        .get(role)
        .ok_or_else(|| {
            AeganError::Usage(format!(
                "mode lacks {}: {} checkpoints have no {} network",
                role.name(),
                networks.mode().name(),
                role.name()
            ))
        })
}
