//! Round execution engines: in-process worker threads and a TCP transport
//! with the same observable behavior.
//!
//! A round is one synchronized exchange: broadcast the iterate, gather
//! per-shard gradient sums, broadcast the normalized mean gradient, gather
//! epoch results, average. Both engines reduce worker results in worker-id
//! order and draw worker samples from identical seeded streams, so a
//! training run produces bitwise-identical iterates regardless of engine
//! (and of how many threads the in-process engine is allowed).
//!
//! Wire format (all little-endian):
//!
//! ```text
//! message   = tag:u8  round:u32  count:u64  payload:f64*count
//! handshake = magic:u32  worker_id:u32  shard_fingerprint:u64
//! ```

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::objective::{grad_sum, Model};
use crate::partition::Partition;
use crate::rngutil::child_seed;
use crate::solver::{
    draw_epoch_samples, predicted_touches, train_with_engine, worker_epoch, SolverConfig,
    SolverError, TrainOutput,
};

/// Handshake prefix identifying this protocol.
pub const HANDSHAKE_MAGIC: u32 = 0x7053_4350;

const HEADER_LEN: usize = 1 + 4 + 8;
const MAX_PAYLOAD: u64 = 1 << 28;
const IO_TIMEOUT: Duration = Duration::from_secs(60);

/// Message kinds exchanged between master and workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    /// Master -> workers: the current iterate.
    BroadcastW = 0x01,
    /// Worker -> master: unnormalized loss-gradient sum over the shard.
    GradSum = 0x02,
    /// Master -> workers: normalized full-data mean gradient.
    FullGrad = 0x03,
    /// Worker -> master: iterate after one local epoch.
    LocalResult = 0x04,
    /// Master -> workers: training is over.
    Shutdown = 0x05,
}

impl Tag {
    fn from_byte(b: u8) -> Option<Tag> {
        match b {
            0x01 => Some(Tag::BroadcastW),
            0x02 => Some(Tag::GradSum),
            0x03 => Some(Tag::FullGrad),
            0x04 => Some(Tag::LocalResult),
            0x05 => Some(Tag::Shutdown),
            _ => None,
        }
    }
}

/// One protocol message.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub tag: Tag,
    pub round: u32,
    pub payload: Vec<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("message truncated: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("payload length mismatch: header declares {declared} values, buffer holds {got}")]
    LengthMismatch { declared: u64, got: usize },
    #[error("declared payload of {0} values exceeds the message size limit")]
    Oversized(u64),
}

/// Serializes a message into its wire form.
pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * msg.payload.len());
    buf.push(msg.tag as u8);
    buf.extend_from_slice(&msg.round.to_le_bytes());
    buf.extend_from_slice(&(msg.payload.len() as u64).to_le_bytes());
    for v in &msg.payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decodes a message occupying the whole buffer.
pub fn decode_message(buf: &[u8]) -> Result<Message, CodecError> {
    if buf.len() < HEADER_LEN {
        return Err(CodecError::Truncated { need: HEADER_LEN, got: buf.len() });
    }
    let tag = Tag::from_byte(buf[0]).ok_or(CodecError::UnknownTag(buf[0]))?;
    let round = u32::from_le_bytes(buf[1..5].try_into().unwrap());
    let declared = u64::from_le_bytes(buf[5..13].try_into().unwrap());
    if declared > MAX_PAYLOAD {
        return Err(CodecError::Oversized(declared));
    }
    let body = &buf[HEADER_LEN..];
    if body.len() != declared as usize * 8 {
        return Err(CodecError::LengthMismatch { declared, got: body.len() / 8 });
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Message { tag, round, payload })
}

fn write_message(stream: &mut TcpStream, msg: &Message) -> Result<(), EngineError> {
    stream.write_all(&encode_message(msg))?;
    Ok(())
}

fn read_message(stream: &mut TcpStream) -> Result<Message, EngineError> {
    let mut header = [0u8; HEADER_LEN];
    stream.read_exact(&mut header)?;
    let tag = Tag::from_byte(header[0]).ok_or(CodecError::UnknownTag(header[0]))?;
    let round = u32::from_le_bytes(header[1..5].try_into().unwrap());
    let declared = u64::from_le_bytes(header[5..13].try_into().unwrap());
    if declared > MAX_PAYLOAD {
        return Err(CodecError::Oversized(declared).into());
    }
    let mut body = vec![0u8; declared as usize * 8];
    stream.read_exact(&mut body)?;
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Message { tag, round, payload })
}

/// FNV-1a over a shard's indices; lets the master verify that a connecting
/// worker holds the shard it expects.
pub fn shard_fingerprint(shard: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in shard {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Encodes a worker's 16-byte hello.
pub fn encode_handshake(worker_id: u32, fingerprint: u64) -> [u8; 16] {
    let mut buf = [0u8; 16];
    buf[0..4].copy_from_slice(&HANDSHAKE_MAGIC.to_le_bytes());
    buf[4..8].copy_from_slice(&worker_id.to_le_bytes());
    buf[8..16].copy_from_slice(&fingerprint.to_le_bytes());
    buf
}

/// Decodes a worker hello, checking the magic.
pub fn decode_handshake(buf: &[u8; 16]) -> Result<(u32, u64), EngineError> {
    let magic = u32::from_le_bytes(buf[0..4].try_into().unwrap());
    if magic != HANDSHAKE_MAGIC {
        return Err(EngineError::Handshake(format!(
            "bad magic 0x{magic:08x} (expected 0x{HANDSHAKE_MAGIC:08x})"
        )));
    }
    let worker_id = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let fingerprint = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    Ok((worker_id, fingerprint))
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("worker {worker} sent {got:?} when {want:?} was expected")]
    UnexpectedMessage { worker: usize, want: Tag, got: Tag },
    #[error("worker {worker} replied for round {got} during round {want}")]
    RoundMismatch { worker: usize, want: u32, got: u32 },
    #[error("worker {worker} sent {got} values when {want} were expected")]
    PayloadSize { worker: usize, want: usize, got: usize },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("engine configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
}

/// What one round produced, as seen by the training loop.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub next_w: Vec<f64>,
    pub comm_bytes: u64,
    pub coord_touches: u64,
}

/// Anything that can execute synchronized worker rounds.
pub trait RoundEngine {
    fn workers(&self) -> usize;
    fn run_round(&mut self, w: &[f64], round: u32) -> Result<RoundOutput, EngineError>;
    /// Tells workers training is over. Idempotent.
    fn finish(&mut self) -> Result<(), EngineError>;
}

fn check_shards(part: &Partition) -> Result<(), EngineError> {
    for k in 0..part.workers() {
        if part.shard(k).is_empty() {
            return Err(EngineError::Config(format!(
                "worker {k} received no instances; use fewer workers"
            )));
        }
    }
    Ok(())
}

/// Per-round payload accounting shared by all engines: two broadcasts and
/// two gathers of `d` floats for each of `p` workers.
fn round_payload_bytes(workers: usize, dim: usize) -> u64 {
    4 * workers as u64 * dim as u64 * 8
}

fn ensure_finite(v: &[f64], what: impl Fn() -> String) -> Result<(), EngineError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::Numeric(what()))
    }
}

/// Runs batches of indexed jobs on scoped threads, at most `cap` at a time,
/// and returns results in index order.
fn parallel_indexed<T, F>(count: usize, cap: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let cap = cap.max(1);
    let mut out: Vec<Option<T>> = Vec::with_capacity(count);
    out.resize_with(count, || None);
    let mut start = 0;
    while start < count {
        let end = (start + cap).min(count);
        let slots = &mut out[start..end];
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for k in start..end {
                let f = &f;
                handles.push(scope.spawn(move || (k, f(k))));
            }
            for h in handles {
                let (k, v) = h.join().expect("worker thread panicked");
                slots[k - start] = Some(v);
            }
        });
        start = end;
    }
    out.into_iter().map(|o| o.expect("all jobs ran")).collect()
}

/// Executes rounds with one thread per worker inside this process.
pub struct InProcessEngine<'a> {
    model: Model,
    data: &'a Dataset,
    part: &'a Partition,
    eta: f64,
    inner_m: usize,
    lazy: bool,
    rngs: Vec<ChaCha8Rng>,
    thread_cap: usize,
}

impl<'a> InProcessEngine<'a> {
    /// Builds an engine for the partition's workers. Worker parallelism is
    /// capped by the `PSCOPE_THREADS` environment variable (results never
    /// depend on the cap).
    pub fn new(
        model: &Model,
        data: &'a Dataset,
        part: &'a Partition,
        config: &SolverConfig,
    ) -> Result<Self, EngineError> {
        if config.workers != part.workers() {
            return Err(EngineError::Config(format!(
                "configured for {} workers but the partition has {}",
                config.workers,
                part.workers()
            )));
        }
        check_shards(part)?;
        let rngs = (0..part.workers())
            .map(|k| ChaCha8Rng::seed_from_u64(child_seed(config.seed, k as u64)))
            .collect();
        let thread_cap = std::env::var("PSCOPE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&v| v >= 1)
            .unwrap_or(part.workers());
        Ok(Self {
            model: *model,
            data,
            part,
            eta: config.eta,
            inner_m: config.inner_m,
            lazy: config.lazy,
            rngs,
            thread_cap,
        })
    }

    /// Overrides the worker-thread cap (mainly for tests).
    pub fn set_thread_cap(&mut self, cap: usize) {
        self.thread_cap = cap.max(1);
    }
}

impl RoundEngine for InProcessEngine<'_> {
    fn workers(&self) -> usize {
        self.part.workers()
    }

    fn run_round(&mut self, w: &[f64], round: u32) -> Result<RoundOutput, EngineError> {
        let p = self.part.workers();
        let d = self.data.dim();
        let model = self.model;

        // Phase 1: per-shard gradient sums, reduced in worker order.
        let sums = parallel_indexed(p, self.thread_cap, |k| {
            grad_sum(model.loss, self.data, self.part.shard(k).iter().copied(), w)
        });
        let total = self.part.total_assigned() as f64;
        let mut z = vec![0.0; d];
        for sum in &sums {
            for (zj, sj) in z.iter_mut().zip(sum) {
                *zj += sj;
            }
        }
        for zj in &mut z {
            *zj /= total;
        }
        ensure_finite(&z, || format!("mean gradient at round {round}"))?;

        // Phase 2: draw every worker's samples from its own stream (cheap
        // and sequential, so streams never depend on scheduling), then run
        // the epochs in parallel.
        let samples: Vec<Vec<usize>> = (0..p)
            .map(|k| draw_epoch_samples(&mut self.rngs[k], self.inner_m, self.part.shard(k).len()))
            .collect();
        let results = parallel_indexed(p, self.thread_cap, |k| {
            worker_epoch(
                &model,
                self.data,
                self.part.shard(k),
                w,
                &z,
                self.eta,
                self.lazy,
                &samples[k],
            )
        });

        let mut next_w = vec![0.0; d];
        let mut touches = 0u64;
        for (k, (u, t)) in results.iter().enumerate() {
            ensure_finite(u, || format!("worker {k} epoch result at round {round}"))?;
            for (nj, uj) in next_w.iter_mut().zip(u) {
                *nj += uj;
            }
            touches += t;
        }
        for nj in &mut next_w {
            *nj /= p as f64;
        }
        Ok(RoundOutput { next_w, comm_bytes: round_payload_bytes(p, d), coord_touches: touches })
    }

    fn finish(&mut self) -> Result<(), EngineError> {
        Ok(())
    }
}

/// Master side of the TCP transport: accepts one connection per worker and
/// drives the same four-phase round as the in-process engine.
pub struct TcpMasterEngine<'a> {
    data: &'a Dataset,
    part: &'a Partition,
    inner_m: usize,
    lazy: bool,
    streams: Vec<TcpStream>,
    sim_rngs: Vec<ChaCha8Rng>,
    finished: bool,
}

impl<'a> TcpMasterEngine<'a> {
    /// Waits for every worker to connect and identify itself. Rejects
    /// duplicate or out-of-range worker ids and shard fingerprints that do
    /// not match the partition. The master never evaluates the model; it
    /// only needs the partition to validate shards and mirror sampling.
    pub fn accept(
        listener: &TcpListener,
        data: &'a Dataset,
        part: &'a Partition,
        config: &SolverConfig,
    ) -> Result<Self, EngineError> {
        if config.workers != part.workers() {
            return Err(EngineError::Config(format!(
                "configured for {} workers but the partition has {}",
                config.workers,
                part.workers()
            )));
        }
        check_shards(part)?;
        let p = part.workers();
        let mut slots: Vec<Option<TcpStream>> = Vec::with_capacity(p);
        slots.resize_with(p, || None);
        for _ in 0..p {
            let (mut stream, peer) = listener.accept()?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(IO_TIMEOUT))?;
            stream.set_write_timeout(Some(IO_TIMEOUT))?;
            let mut hello = [0u8; 16];
            stream.read_exact(&mut hello)?;
            let (worker_id, fingerprint) = decode_handshake(&hello)?;
            let worker_id = worker_id as usize;
            if worker_id >= p {
                return Err(EngineError::Handshake(format!(
                    "worker id {worker_id} out of range for {p} workers (from {peer})"
                )));
            }
            if slots[worker_id].is_some() {
                return Err(EngineError::Handshake(format!(
                    "duplicate connection for worker {worker_id} (from {peer})"
                )));
            }
            let expected = shard_fingerprint(part.shard(worker_id));
            if fingerprint != expected {
                return Err(EngineError::Handshake(format!(
                    "worker {worker_id} shard fingerprint {fingerprint:#018x} does not match \
                     the partition ({expected:#018x}); seed or partition flags differ"
                )));
            }
            slots[worker_id] = Some(stream);
        }
        let streams = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
        let sim_rngs = (0..p)
            .map(|k| ChaCha8Rng::seed_from_u64(child_seed(config.seed, k as u64)))
            .collect();
        Ok(Self {
            data,
            part,
            inner_m: config.inner_m,
            lazy: config.lazy,
            streams,
            sim_rngs,
            finished: false,
        })
    }

    fn read_expected(
        &mut self,
        worker: usize,
        want: Tag,
        round: u32,
        want_len: usize,
    ) -> Result<Vec<f64>, EngineError> {
        let msg = read_message(&mut self.streams[worker])?;
        if msg.tag != want {
            return Err(EngineError::UnexpectedMessage { worker, want, got: msg.tag });
        }
        if msg.round != round {
            return Err(EngineError::RoundMismatch { worker, want: round, got: msg.round });
        }
        if msg.payload.len() != want_len {
            return Err(EngineError::PayloadSize {
                worker,
                want: want_len,
                got: msg.payload.len(),
            });
        }
        Ok(msg.payload)
    }
}

impl RoundEngine for TcpMasterEngine<'_> {
    fn workers(&self) -> usize {
        self.part.workers()
    }

    fn run_round(&mut self, w: &[f64], round: u32) -> Result<RoundOutput, EngineError> {
        let p = self.part.workers();
        let d = self.data.dim();

        let broadcast = Message { tag: Tag::BroadcastW, round, payload: w.to_vec() };
        for stream in &mut self.streams {
            write_message(stream, &broadcast)?;
        }
        let mut z = vec![0.0; d];
        for k in 0..p {
            let sum = self.read_expected(k, Tag::GradSum, round, d)?;
            for (zj, sj) in z.iter_mut().zip(&sum) {
                *zj += sj;
            }
        }
        let total = self.part.total_assigned() as f64;
        for zj in &mut z {
            *zj /= total;
        }
        ensure_finite(&z, || format!("mean gradient at round {round}"))?;

        let full = Message { tag: Tag::FullGrad, round, payload: z };
        for stream in &mut self.streams {
            write_message(stream, &full)?;
        }

        // Reproduce each worker's sampling to account for its touches: the
        // wire carries only iterates, and the streams are shared by
        // construction.
        let mut touches = 0u64;
        for k in 0..p {
            let shard = self.part.shard(k);
            let samples = draw_epoch_samples(&mut self.sim_rngs[k], self.inner_m, shard.len());
            touches += predicted_touches(self.data, shard, self.lazy, &samples);
        }

        let mut next_w = vec![0.0; d];
        for k in 0..p {
            let u = self.read_expected(k, Tag::LocalResult, round, d)?;
            ensure_finite(&u, || format!("worker {k} epoch result at round {round}"))?;
            for (nj, uj) in next_w.iter_mut().zip(&u) {
                *nj += uj;
            }
        }
        for nj in &mut next_w {
            *nj /= p as f64;
        }
        Ok(RoundOutput { next_w, comm_bytes: round_payload_bytes(p, d), coord_touches: touches })
    }

    fn finish(&mut self) -> Result<(), EngineError> {
        if self.finished {
            return Ok(());
        }
        let bye = Message { tag: Tag::Shutdown, round: 0, payload: Vec::new() };
        for stream in &mut self.streams {
            write_message(stream, &bye)?;
        }
        self.finished = true;
        Ok(())
    }
}

impl Drop for TcpMasterEngine<'_> {
    fn drop(&mut self) {
        if !self.finished {
            // Best effort: let workers exit instead of timing out.
            let bye = Message { tag: Tag::Shutdown, round: 0, payload: Vec::new() };
            for stream in &mut self.streams {
                let _ = stream.write_all(&encode_message(&bye));
            }
        }
    }
}

/// Runs one worker over TCP: connect, identify, then serve rounds until the
/// master says shutdown. The worker must hold the same dataset and
/// partition flags as the master; the handshake fingerprint catches drift.
#[allow(clippy::too_many_arguments)]
pub fn run_tcp_worker(
    addr: &str,
    worker_id: usize,
    model: &Model,
    data: &Dataset,
    part: &Partition,
    config: &SolverConfig,
) -> Result<(), EngineError> {
    if worker_id >= part.workers() {
        return Err(EngineError::Config(format!(
            "worker id {worker_id} out of range for {} workers",
            part.workers()
        )));
    }
    let shard = part.shard(worker_id);
    if shard.is_empty() {
        return Err(EngineError::Config(format!(
            "worker {worker_id} received no instances; use fewer workers"
        )));
    }
    let d = data.dim();
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    stream.write_all(&encode_handshake(worker_id as u32, shard_fingerprint(shard)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, worker_id as u64));
    let mut anchor: Option<Vec<f64>> = None;
    loop {
        let msg = read_message(&mut stream)?;
        match msg.tag {
            Tag::BroadcastW => {
                if msg.payload.len() != d {
                    return Err(EngineError::Protocol(format!(
                        "iterate of length {} does not match dimension {d}",
                        msg.payload.len()
                    )));
                }
                let sum = grad_sum(model.loss, data, shard.iter().copied(), &msg.payload);
                write_message(
                    &mut stream,
                    &Message { tag: Tag::GradSum, round: msg.round, payload: sum },
                )?;
                anchor = Some(msg.payload);
            }
            Tag::FullGrad => {
                let w = anchor.as_ref().ok_or_else(|| {
                    EngineError::Protocol("gradient arrived before any iterate".into())
                })?;
                if msg.payload.len() != d {
                    return Err(EngineError::Protocol(format!(
                        "gradient of length {} does not match dimension {d}",
                        msg.payload.len()
                    )));
                }
                let samples = draw_epoch_samples(&mut rng, config.inner_m, shard.len());
                let (u, _touches) = worker_epoch(
                    model,
                    data,
                    shard,
                    w,
                    &msg.payload,
                    config.eta,
                    config.lazy,
                    &samples,
                );
                write_message(
                    &mut stream,
                    &Message { tag: Tag::LocalResult, round: msg.round, payload: u },
                )?;
            }
            Tag::Shutdown => return Ok(()),
            other => {
                return Err(EngineError::Protocol(format!(
                    "unexpected {other:?} from the master"
                )))
            }
        }
    }
}

/// Full training over TCP on a loopback listener: workers run on spawned
/// threads, the master on the calling thread. Produces the same output as
/// [`crate::solver::pscope_train`], transported over real sockets.
pub fn train_tcp_loopback(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    config: &SolverConfig,
    w0: &[f64],
    reference: Option<f64>,
) -> Result<TrainOutput, SolverError> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).map_err(EngineError::from)?;
    let addr = listener.local_addr().map_err(EngineError::from)?.to_string();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..part.workers())
            .map(|k| {
                let addr = addr.clone();
                scope.spawn(move || run_tcp_worker(&addr, k, model, data, part, config))
            })
            .collect();
        let out = TcpMasterEngine::accept(&listener, data, part, config)
            .map_err(SolverError::from)
            .and_then(|mut engine| {
                train_with_engine(&mut engine, model, data, config, w0, reference)
            });
        for h in handles {
            let worker = h.join().expect("worker thread panicked");
            if out.is_ok() {
                worker?;
            }
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_libsvm;
    use crate::objective::Loss;
    use crate::partition::PartitionKind;
    use crate::solver::pscope_train;
    use proptest::prelude::*;

    #[test]
    fn shutdown_is_thirteen_bytes() {
        let msg = Message { tag: Tag::Shutdown, round: 7, payload: Vec::new() };
        let bytes = encode_message(&msg);
        assert_eq!(bytes.len(), 13);
        assert_eq!(decode_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn broadcast_of_one_float_is_twentyone_bytes() {
        let msg = Message { tag: Tag::BroadcastW, round: 0, payload: vec![1.0] };
        let bytes = encode_message(&msg);
        assert_eq!(bytes.len(), 21);
        assert_eq!(bytes[0], 0x01);
        // 1.0 in little-endian IEEE 754.
        assert_eq!(&bytes[13..], &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
    }

    #[test]
    fn decoder_rejects_malformed_frames() {
        assert_eq!(
            decode_message(&[0x01, 0, 0]),
            Err(CodecError::Truncated { need: 13, got: 3 })
        );
        let mut bad_tag = encode_message(&Message {
            tag: Tag::GradSum,
            round: 1,
            payload: vec![2.0],
        });
        bad_tag[0] = 0x77;
        assert_eq!(decode_message(&bad_tag), Err(CodecError::UnknownTag(0x77)));

        let mut short = encode_message(&Message {
            tag: Tag::FullGrad,
            round: 1,
            payload: vec![2.0, 3.0],
        });
        short.truncate(short.len() - 8);
        assert!(matches!(
            decode_message(&short),
            Err(CodecError::LengthMismatch { declared: 2, got: 1 })
        ));

        let mut huge = encode_message(&Message { tag: Tag::Shutdown, round: 0, payload: vec![] });
        huge[5..13].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_message(&huge), Err(CodecError::Oversized(_))));
    }

    #[test]
    fn handshake_round_trips_and_checks_magic() {
        let buf = encode_handshake(3, 0xdead_beef_cafe_f00d);
        assert_eq!(decode_handshake(&buf).unwrap(), (3, 0xdead_beef_cafe_f00d));
        let mut bad = buf;
        bad[0] ^= 0xff;
        assert!(matches!(decode_handshake(&bad), Err(EngineError::Handshake(_))));
    }

    #[test]
    fn fingerprints_separate_shards() {
        assert_eq!(shard_fingerprint(&[0, 1, 2]), shard_fingerprint(&[0, 1, 2]));
        assert_ne!(shard_fingerprint(&[0, 1, 2]), shard_fingerprint(&[0, 2, 1]));
        assert_ne!(shard_fingerprint(&[]), shard_fingerprint(&[0]));
    }

    fn fixture() -> (Dataset, Model) {
        let text = "1 1:0.8 3:0.2\n-1 2:0.5\n1 1:-0.3 2:0.9\n-1 3:-0.7\n\
                    1 2:0.4\n-1 1:0.6 3:0.3\n1 3:-0.2\n-1 2:-0.8\n";
        let ds = parse_libsvm(text, 0).unwrap();
        let model = Model::new(Loss::Logistic, 0.05, 0.01).unwrap();
        (ds, model)
    }

    #[test]
    fn tcp_loopback_matches_in_process_bit_for_bit() {
        let (ds, model) = fixture();
        for (p, lazy) in [(2usize, false), (4usize, true)] {
            let part = Partition::make(&ds, PartitionKind::Uniform, p, 3).unwrap();
            let config = SolverConfig {
                eta: 0.2,
                inner_m: 10,
                outer_t: 4,
                workers: p,
                seed: 42,
                lazy,
                record_objective: true,
            };
            let local = pscope_train(&model, &ds, &part, &config, &[0.0; 3], None).unwrap();
            let tcp =
                train_tcp_loopback(&model, &ds, &part, &config, &[0.0; 3], None).unwrap();
            assert_eq!(local.weights, tcp.weights, "p={p} lazy={lazy}");
            for (a, b) in local.trace.rows.iter().zip(&tcp.trace.rows) {
                assert_eq!(a.objective, b.objective);
                assert_eq!(a.comm_bytes, b.comm_bytes);
                assert_eq!(a.coord_touches, b.coord_touches);
            }
        }
    }

    #[test]
    fn thread_cap_never_changes_results() {
        let (ds, model) = fixture();
        let part = Partition::make(&ds, PartitionKind::Uniform, 4, 1).unwrap();
        let config = SolverConfig {
            eta: 0.2,
            inner_m: 8,
            outer_t: 3,
            workers: 4,
            seed: 9,
            lazy: false,
            record_objective: false,
        };
        let mut runs = Vec::new();
        for cap in [1, 2, 4] {
            let mut engine = InProcessEngine::new(&model, &ds, &part, &config).unwrap();
            engine.set_thread_cap(cap);
            let out =
                train_with_engine(&mut engine, &model, &ds, &config, &[0.0; 3], None).unwrap();
            runs.push(out.weights);
        }
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[1], runs[2]);
    }

    #[test]
    fn master_rejects_wrong_fingerprint_and_bad_ids() {
        let (ds, _model) = fixture();
        let part = Partition::make(&ds, PartitionKind::Uniform, 2, 0).unwrap();
        let config = SolverConfig {
            eta: 0.1,
            inner_m: 2,
            outer_t: 1,
            workers: 2,
            seed: 0,
            lazy: false,
            record_objective: false,
        };
        for hello in [
            encode_handshake(0, 12345),               // wrong fingerprint
            encode_handshake(9, 0),                   // id out of range
            *b"nonsense-nonsens",                     // wrong magic
        ] {
            let listener = TcpListener::bind(("127.0.0.1", 0)).unwrap();
            let addr = listener.local_addr().unwrap();
            let t = std::thread::spawn(move || {
                let mut s = TcpStream::connect(addr).unwrap();
                let _ = s.write_all(&hello);
                // Hold the socket open until the master reacts.
                let mut buf = [0u8; 1];
                let _ = s.read(&mut buf);
            });
            let err = TcpMasterEngine::accept(&listener, &ds, &part, &config)
                .err()
                .expect("handshake must be rejected");
            assert!(matches!(err, EngineError::Handshake(_)), "{err}");
            t.join().unwrap();
        }
    }

    #[test]
    fn empty_shards_are_rejected_up_front() {
        let ds = parse_libsvm("1 1:1\n-1 1:2\n", 0).unwrap();
        let part = Partition::make(&ds, PartitionKind::Uniform, 4, 0).unwrap();
        let config = SolverConfig {
            eta: 0.1,
            inner_m: 1,
            outer_t: 1,
            workers: 4,
            seed: 0,
            lazy: false,
            record_objective: false,
        };
        let model = Model::new(Loss::Squared, 0.0, 0.0).unwrap();
        assert!(matches!(
            InProcessEngine::new(&model, &ds, &part, &config),
            Err(EngineError::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn codec_round_trip(
            tag_idx in 0usize..5,
            round in 0u32..1000,
            payload in prop::collection::vec(
                prop::num::f64::ANY.prop_filter("finite", |v| v.is_finite()),
                0..32,
            ),
        ) {
            let tag = [Tag::BroadcastW, Tag::GradSum, Tag::FullGrad, Tag::LocalResult, Tag::Shutdown][tag_idx];
            let msg = Message { tag, round, payload };
            let back = decode_message(&encode_message(&msg)).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
