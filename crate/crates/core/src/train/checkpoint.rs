//! Training checkpoint container.
//!
//! Little-endian layout: `"AGCK"`, `u32` version, the model config as TOML
//! and the run metadata as JSON (each a `u32`-length-prefixed string), then
//! named parameter tensors, running statistics and Adam moments as `AGT1`
//! records, an optional best-validation snapshot, and finally an FNV-1a
//! checksum (`u64`) of every preceding byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, BestState, EpochRecord, OptimizerState, Result, ScheduleState, Snapshot, TrainConfig, TrainError, Trainer};
use crate::model::{build_network, ModelConfig};
use crate::tensor::{read_tensor, write_tensor, RunningStats, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    train: TrainConfig,
    schedule: ScheduleState,
    optimizer_step: u64,
    optimizer_lr: f64,
    optimizer_config: AdamConfig,
    history: Vec<EpochRecord>,
    best: Option<(usize, f64)>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, values: &[f64]) -> Result<()> {
        let t = Tensor::from_vec(&[values.len()], values.to_vec())?;
        write_tensor(&mut self.0, &t)?;
        Ok(())
    }
    fn snapshot(&mut self, s: &Snapshot) -> Result<()> {
        self.u32(s.params.len());
        for (name, v) in &s.params {
            self.str(name);
            self.tensor(v)?;
        }
        self.u32(s.stats.len());
        for (name, st) in &s.stats {
            self.str(name);
            self.0.push(st.initialized as u8);
            self.tensor(&st.mean)?;
            self.tensor(&st.var)?;
        }
        Ok(())
    }
}

struct Reader<'a>(&'a [u8]);

fn corrupt(what: &str) -> TrainError {
    TrainError::Corrupt(what.to_string())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(corrupt("unexpected end of data"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn tensor(&mut self) -> Result<Vec<f64>> {
        read_tensor(&mut self.0).map(|t| t.to_vec()).map_err(|e| TrainError::Corrupt(e.to_string()))
    }
    fn snapshot(&mut self) -> Result<Snapshot> {
        let n = self.u32()?;
        let mut params = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            params.push((self.str()?, self.tensor()?));
        }
        let n = self.u32()?;
        let mut stats = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = self.str()?;
            let initialized = self.u8()? != 0;
            let mean = self.tensor()?;
            let var = self.tensor()?;
            stats.push((name, RunningStats { mean, var, initialized }));
        }
        Ok(Snapshot { params, stats })
    }
}

fn encode(t: &Trainer) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    w.str(&t.net.config.to_toml());
    let meta = Meta {
        train: t.config.clone(),
        schedule: t.schedule,
        optimizer_step: t.optimizer.step,
        optimizer_lr: t.optimizer.lr,
        optimizer_config: t.optimizer.config,
        history: t.history.clone(),
        best: t.best.as_ref().map(|b| (b.epoch, b.dice)),
    };
    w.str(&serde_json::to_string(&meta).map_err(|e| corrupt(&e.to_string()))?);
    w.snapshot(&Snapshot::of(&t.net))?;
    w.u32(t.optimizer.moments.len());
    for m in &t.optimizer.moments {
        w.str(&m.name);
        w.tensor(&m.m)?;
        w.tensor(&m.v)?;
    }
    match &t.best {
        Some(b) => {
            w.0.push(1);
            w.snapshot(&b.snapshot)?;
        }
        None => w.0.push(0),
    }
    let sum = fnv1a(&w.0);
    w.0.extend_from_slice(&sum.to_le_bytes());
    Ok(w.0)
}

pub fn save_checkpoint(t: &Trainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| TrainError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    }
    std::fs::write(path, bytes).map_err(|e| TrainError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Restores a trainer whose next epoch is bitwise identical to the one the
/// saved run would have performed.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io { path: path.display().to_string(), message: e.to_string() })?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Trainer> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(TrainError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(corrupt("file too short"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::UnsupportedVersion(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let mut r = Reader(&body[8..]);
    let model = ModelConfig::from_toml(&r.str()?).map_err(|e| corrupt(&format!("model config: {e}")))?;
    let meta: Meta = serde_json::from_str(&r.str()?).map_err(|e| corrupt(&format!("metadata: {e}")))?;
    let current = r.snapshot()?;
    let n = r.u32()?;
    let mut moments = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let name = r.str()?;
        let m = r.tensor()?;
        let v = r.tensor()?;
        moments.push(super::Moments { name, m, v });
    }
    let best_snapshot = match r.u8()? {
        0 => None,
        1 => Some(r.snapshot()?),
        _ => return Err(corrupt("bad best-snapshot flag")),
    };
    if !r.0.is_empty() {
        return Err(corrupt("trailing data"));
    }

    let net = build_network(&model, meta.train.seed)?;
    current.restore(&net)?;
    let optimizer = OptimizerState { config: meta.optimizer_config, step: meta.optimizer_step, lr: meta.optimizer_lr, moments };
    let params = net.named_parameters();
    if params.len() != optimizer.moments.len()
        || params.iter().zip(&optimizer.moments).any(|((n, p), m)| *n != m.name || p.numel() != m.m.len() || p.numel() != m.v.len())
    {
        return Err(TrainError::StateMismatch("optimizer moments do not match parameters".into()));
    }
    let best = match (meta.best, best_snapshot) {
        (Some((epoch, dice)), Some(snapshot)) => Some(BestState { epoch, dice, snapshot }),
        (None, None) => None,
        _ => return Err(corrupt("best-state metadata and snapshot disagree")),
    };
    Ok(Trainer { net, optimizer, schedule: meta.schedule, config: meta.train, history: meta.history, best })
}
