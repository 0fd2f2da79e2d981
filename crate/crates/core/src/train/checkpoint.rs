//! Versioned binary checkpoints (`.ggan`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "GGAN" | version u32 | scalar tag u8
//! config: u32 length + JSON
//! epoch u64 | generator_updates u64 | critic_updates u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! generator params | discriminator params       (named tensor blocks)
//! generator adam   | discriminator adam         (t u64 + m, v tensor blocks)
//! ```
//!
//! A tensor block is `count u32` followed by, per tensor, `name (u32 length +
//! UTF-8) | rank u32 | dims u64... | values`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator};
use crate::nn::{AdamState, ParamSet, Tensor};
use crate::scalar::Scalar;
use crate::train::config::TrainConfig;
use crate::train::trainer::{head_for, Trainer};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume a run or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T> {
    pub config: TrainConfig,
    pub epoch: usize,
    pub generator_updates: u64,
    pub critic_updates: u64,
    pub generator: ParamSet<T>,
    pub discriminator: ParamSet<T>,
    pub gen_opt: AdamState<T>,
    pub disc_opt: AdamState<T>,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }
    pub fn tensor<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        self.bytes(name.as_bytes());
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            v.write_le(&mut self.buf);
        }
    }
}

pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        ByteReader { data, pos: 0 }
    }
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.data.len() - self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    pub fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16")))
    }
    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    pub fn tensor<T: Scalar>(&mut self) -> Result<(String, Tensor<T>)> {
        let name = String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("tensor {name} has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(T::BYTES).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks(T::BYTES).map(T::read_le).collect();
        Ok((name, Tensor::from_vec(&shape, data)))
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn write_params<T: Scalar>(w: &mut ByteWriter, params: &ParamSet<T>) {
    w.u32(params.tensors.len() as u32);
    for p in &params.tensors {
        w.tensor(&p.name, &p.value);
    }
}

/// Reads tensors into `template`, checking names and shapes.
pub(crate) fn read_params_into<T: Scalar>(r: &mut ByteReader<'_>, template: &mut ParamSet<T>, what: &str) -> Result<()> {
    let count = r.u32()? as usize;
    if count != template.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{what}: {count} tensors stored, architecture has {}",
            template.tensors.len()
        )));
    }
    for p in &mut template.tensors {
        let (name, t) = r.tensor::<T>()?;
        if name != p.name || t.shape() != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "{what}: stored {name} {:?} does not match {} {:?}",
                t.shape(),
                p.name,
                p.value.shape()
            )));
        }
        p.grad = Tensor::zeros(t.shape());
        p.value = t;
    }
    Ok(())
}

fn write_adam<T: Scalar>(w: &mut ByteWriter, st: &AdamState<T>) {
    w.u64(st.t);
    w.u32(st.m.len() as u32);
    for (i, (m, v)) in st.m.iter().zip(&st.v).enumerate() {
        w.tensor(&format!("m{i}"), m);
        w.tensor(&format!("v{i}"), v);
    }
}

fn read_adam<T: Scalar>(r: &mut ByteReader<'_>, st: &mut AdamState<T>, what: &str) -> Result<()> {
    st.t = r.u64()?;
    let count = r.u32()? as usize;
    if count != st.m.len() {
        return Err(Error::Checkpoint(format!("{what}: optimizer tracks {count} tensors, expected {}", st.m.len())));
    }
    for i in 0..count {
        let (_, m) = r.tensor::<T>()?;
        let (_, v) = r.tensor::<T>()?;
        if m.shape() != st.m[i].shape() || v.shape() != st.v[i].shape() {
            return Err(Error::Checkpoint(format!("{what}: moment {i} shape mismatch")));
        }
        st.m[i] = m;
        st.v[i] = v;
    }
    Ok(())
}

impl<T: Scalar> ModelCheckpoint<T> {
    pub fn from_trainer(trainer: &Trainer<T>) -> Self {
        ModelCheckpoint {
            config: trainer.config.clone(),
            epoch: trainer.epoch,
            generator_updates: trainer.generator_updates,
            critic_updates: trainer.critic_updates,
            generator: trainer.generator.net.params.clone(),
            discriminator: trainer.discriminator.net.params.clone(),
            gen_opt: trainer.gen_opt.clone(),
            disc_opt: trainer.disc_opt.clone(),
            rng_seed: trainer.rng.get_seed(),
            rng_stream: trainer.rng.get_stream(),
            rng_word_pos: trainer.rng.get_word_pos(),
        }
    }

    /// Rebuilds a trainer that continues exactly where the run stopped.
    pub fn into_trainer(self) -> Result<Trainer<T>> {
        let model = self.config.model();
        let mut init_rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::new(model, &mut init_rng)?;
        let mut discriminator = Discriminator::new(model, head_for(self.config.loss_mode), &mut init_rng)?;
        generator.net.params = self.generator;
        discriminator.net.params = self.discriminator;
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        Ok(Trainer::from_parts(
            self.config,
            generator,
            discriminator,
            self.gen_opt,
            self.disc_opt,
            rng,
            self.epoch,
            self.generator_updates,
            self.critic_updates,
        ))
    }

    pub fn generator(&self) -> Result<Generator<T>> {
        let mut generator = Generator::new(self.config.model(), &mut ChaCha8Rng::seed_from_u64(0))?;
        generator.net.params = self.generator.clone();
        Ok(generator)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.buf.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.buf.push(T::TAG);
        w.bytes(&serde_json::to_vec(&self.config).expect("config serializes"));
        w.u64(self.epoch as u64);
        w.u64(self.generator_updates);
        w.u64(self.critic_updates);
        w.buf.extend_from_slice(&self.rng_seed);
        w.u64(self.rng_stream);
        w.u128(self.rng_word_pos);
        write_params(&mut w, &self.generator);
        write_params(&mut w, &self.discriminator);
        write_adam(&mut w, &self.gen_opt);
        write_adam(&mut w, &self.disc_opt);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4).map_err(|_| Error::Checkpoint("bad magic number".into()))? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic number".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let tag = r.u8()?;
        if tag != T::TAG {
            return Err(Error::Checkpoint(format!(
                "stored with {tag}-byte scalars, loading as {}-byte",
                T::TAG
            )));
        }
        let config: TrainConfig = serde_json::from_slice(r.bytes()?)?;
        config.validate()?;
        let epoch = r.u64()? as usize;
        let generator_updates = r.u64()?;
        let critic_updates = r.u64()?;
        let rng_seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let rng_stream = r.u64()?;
        let rng_word_pos = r.u128()?;

        let model = config.model();
        let mut init = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::<T>::new(model, &mut init)?.net.params;
        let mut discriminator = Discriminator::<T>::new(model, head_for(config.loss_mode), &mut init)?.net.params;
        read_params_into(&mut r, &mut generator, "generator")?;
        read_params_into(&mut r, &mut discriminator, "discriminator")?;
        let mut gen_opt = AdamState::new(config.adam(), &generator);
        let mut disc_opt = AdamState::new(config.adam(), &discriminator);
        read_adam(&mut r, &mut gen_opt, "generator optimizer")?;
        read_adam(&mut r, &mut disc_opt, "discriminator optimizer")?;
        r.finish()?;
        Ok(ModelCheckpoint {
            config,
            epoch,
            generator_updates,
            critic_updates,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            rng_seed,
            rng_stream,
            rng_word_pos,
        })
    }

    /// Writes atomically via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Stable identifier of checkpoint contents (FNV-1a, hex).
pub fn content_id(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
