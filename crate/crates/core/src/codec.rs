//! Per-chunk transform: optional byte shuffle followed by Gzip (RFC 1952) or
//! an LZ4 frame, plus a worker pool that compresses chunks in parallel and
//! hands the results to a single consumer.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use crossbeam_channel::{Receiver, Sender};

use crate::error::{Error, Result};
use crate::model::ChunkKey;

/// Container codec code for uncompressed chunks.
pub const CODEC_NONE: u32 = 0;
/// Container codec code for Gzip chunks.
pub const CODEC_GZIP: u32 = 1;
/// Container codec code for LZ4 frame chunks.
pub const CODEC_LZ4: u32 = 2;
/// OR-ed onto the codec code when the chunk was shuffled before encoding.
pub const SHUFFLE_FLAG: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    None,
    /// Gzip at level 1 through 9.
    Gzip(u32),
    Lz4,
}

/// Codec choice plus shuffle flag. Shuffling with [`Algorithm::None`] is
/// allowed; it only reorders the stored bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CompressionSpec {
    pub algorithm: Algorithm,
    pub shuffle: bool,
}

impl CompressionSpec {
    pub const NONE: Self = Self::new(Algorithm::None, false);
    pub const LZ4: Self = Self::new(Algorithm::Lz4, false);
    pub const SHUFFLE_LZ4: Self = Self::new(Algorithm::Lz4, true);

    pub const fn new(algorithm: Algorithm, shuffle: bool) -> Self {
        Self { algorithm, shuffle }
    }

    pub fn gzip(level: u32) -> Result<Self> {
        let spec = Self::new(Algorithm::Gzip(level), false);
        spec.validate()?;
        Ok(spec)
    }

    pub const fn with_shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle = shuffle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.algorithm {
            Algorithm::Gzip(level) if !(1..=9).contains(&level) => Err(
                Error::InvalidCompression(format!("gzip level {level} is outside 1..=9")),
            ),
            _ => Ok(()),
        }
    }

    pub fn codec_code(&self) -> u32 {
        let base = match self.algorithm {
            Algorithm::None => CODEC_NONE,
            Algorithm::Gzip(_) => CODEC_GZIP,
            Algorithm::Lz4 => CODEC_LZ4,
        };
        if self.shuffle {
            base | SHUFFLE_FLAG
        } else {
            base
        }
    }

    /// Decoding parameters for a stored codec code. The gzip level is not
    /// recorded in the code and is irrelevant for decoding.
    pub fn from_codec_code(code: u32) -> Result<Self> {
        let shuffle = code & SHUFFLE_FLAG != 0;
        let algorithm = match code & !SHUFFLE_FLAG {
            CODEC_NONE => Algorithm::None,
            CODEC_GZIP => Algorithm::Gzip(6),
            CODEC_LZ4 => Algorithm::Lz4,
            other => {
                return Err(Error::InvalidCompression(format!("unknown codec code {other}")))
            }
        };
        Ok(Self { algorithm, shuffle })
    }
}

impl Default for CompressionSpec {
    /// Gzip level 2 without shuffle.
    fn default() -> Self {
        Self::new(Algorithm::Gzip(2), false)
    }
}

impl fmt::Display for CompressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shuffle {
            f.write_str("shuffle+")?;
        }
        match self.algorithm {
            Algorithm::None => f.write_str("none"),
            Algorithm::Gzip(level) => write!(f, "gzip:{level}"),
            Algorithm::Lz4 => f.write_str("lz4"),
        }
    }
}

impl FromStr for CompressionSpec {
    type Err = Error;

    /// Accepts `none`, `gzip:N`, `lz4`, each optionally prefixed by
    /// `shuffle+`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (shuffle, rest) = match lower.strip_prefix("shuffle+") {
            Some(rest) => (true, rest),
            None => (false, lower.as_str()),
        };
        let algorithm = match rest {
            "none" => Algorithm::None,
            "lz4" => Algorithm::Lz4,
            "gzip" => Algorithm::Gzip(2),
            _ => {
                let level = rest
                    .strip_prefix("gzip:")
                    .or_else(|| rest.strip_prefix("gzip"))
                    .and_then(|l| l.parse().ok())
                    .ok_or_else(|| Error::InvalidCompression(format!("unknown method \"{s}\"")))?;
                Algorithm::Gzip(level)
            }
        };
        let spec = Self { algorithm, shuffle };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_shuffle_len(len: usize, element_size: usize) -> Result<()> {
    if element_size == 0 || !len.is_multiple_of(element_size) {
        return Err(Error::ShuffleLength { len, element_size });
    }
    Ok(())
}

/// Byte-plane transposition: output byte `b * n + i` is input byte
/// `i * element_size + b`, where `n` is the element count.
pub fn shuffle(bytes: &[u8], element_size: usize) -> Result<Vec<u8>> {
    check_shuffle_len(bytes.len(), element_size)?;
    if element_size == 1 {
        return Ok(bytes.to_vec());
    }
    let n = bytes.len() / element_size;
    let mut out = vec![0u8; bytes.len()];
    for (b, plane) in out.chunks_exact_mut(n.max(1)).enumerate().take(element_size) {
        for (i, dst) in plane.iter_mut().enumerate() {
            *dst = bytes[i * element_size + b];
        }
    }
    Ok(out)
}

/// Inverse of [`shuffle`].
pub fn unshuffle(bytes: &[u8], element_size: usize) -> Result<Vec<u8>> {
    check_shuffle_len(bytes.len(), element_size)?;
    if element_size == 1 {
        return Ok(bytes.to_vec());
    }
    let n = bytes.len() / element_size;
    let mut out = vec![0u8; bytes.len()];
    for (b, plane) in bytes.chunks_exact(n.max(1)).enumerate().take(element_size) {
        for (i, &src) in plane.iter().enumerate() {
            out[i * element_size + b] = src;
        }
    }
    Ok(out)
}

/// Encode one chunk. `element_size` selects the shuffle width.
pub fn compress_chunk(raw: &[u8], spec: &CompressionSpec, element_size: usize) -> Result<Vec<u8>> {
    spec.validate()?;
    let shuffled;
    let input = if spec.shuffle {
        shuffled = shuffle(raw, element_size)?;
        &shuffled[..]
    } else {
        raw
    };
    match spec.algorithm {
        Algorithm::None => Ok(input.to_vec()),
        Algorithm::Gzip(level) => {
            let mut encoder = flate2::write::GzEncoder::new(
                Vec::with_capacity(input.len() / 2),
                flate2::Compression::new(level),
            );
            encoder.write_all(input)?;
            Ok(encoder.finish()?)
        }
        Algorithm::Lz4 => {
            let mut encoder =
                lz4_flex::frame::FrameEncoder::new(Vec::with_capacity(input.len() / 2));
            encoder.write_all(input)?;
            encoder
                .finish()
                .map_err(|e| Error::Io(std::io::Error::other(e)))
        }
    }
}

pub fn checksum(payload: &[u8]) -> u32 {
    crc32c::crc32c(payload)
}

/// Verify `expected_checksum`, decode, and check the decoded length.
pub fn decompress_chunk(
    payload: &[u8],
    spec: &CompressionSpec,
    element_size: usize,
    raw_length: usize,
    expected_checksum: u32,
) -> Result<Vec<u8>> {
    let computed = checksum(payload);
    if computed != expected_checksum {
        return Err(Error::ChecksumMismatch {
            stored: expected_checksum,
            computed,
        });
    }
    let decoded = match spec.algorithm {
        Algorithm::None => payload.to_vec(),
        Algorithm::Gzip(_) => {
            read_bounded(flate2::read::GzDecoder::new(payload), raw_length, "gzip")?
        }
        Algorithm::Lz4 => read_bounded(
            lz4_flex::frame::FrameDecoder::new(payload),
            raw_length,
            "lz4",
        )?,
    };
    if decoded.len() != raw_length {
        return Err(Error::CorruptStream(format!(
            "decoded {} bytes, expected {raw_length}",
            decoded.len()
        )));
    }
    if spec.shuffle {
        unshuffle(&decoded, element_size)
    } else {
        Ok(decoded)
    }
}

fn read_bounded(reader: impl Read, limit: usize, what: &str) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(limit);
    reader
        .take(limit as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| Error::CorruptStream(format!("{what}: {e}")))?;
    Ok(out)
}

/// A complete, uncompressed chunk waiting for the codec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawChunk {
    pub key: ChunkKey,
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedChunk {
    pub key: ChunkKey,
    pub payload: Vec<u8>,
    pub raw_length: usize,
    /// CRC32C of `payload`.
    pub checksum: u32,
    pub codec_code: u32,
}

impl CompressedChunk {
    pub fn encode(raw: RawChunk, spec: &CompressionSpec, element_size: usize) -> Result<Self> {
        let payload = compress_chunk(&raw.data, spec, element_size)?;
        Ok(Self {
            key: raw.key,
            checksum: checksum(&payload),
            raw_length: raw.data.len(),
            payload,
            codec_code: spec.codec_code(),
        })
    }

    pub fn decode(&self, element_size: usize) -> Result<Vec<u8>> {
        let spec = CompressionSpec::from_codec_code(self.codec_code)?;
        decompress_chunk(&self.payload, &spec, element_size, self.raw_length, self.checksum)
    }
}

/// Receives compressed chunks from the pipeline, one at a time, on a single
/// thread.
pub trait ChunkSink: Send + 'static {
    fn accept(&mut self, chunk: CompressedChunk) -> Result<()>;
}

impl ChunkSink for Vec<CompressedChunk> {
    fn accept(&mut self, chunk: CompressedChunk) -> Result<()> {
        self.push(chunk);
        Ok(())
    }
}

#[derive(Default)]
struct Shared {
    in_flight: Mutex<usize>,
    released: Condvar,
    failed: AtomicBool,
    error: Mutex<Option<Error>>,
}

impl Shared {
    fn fail(&self, err: Error) {
        let mut slot = self.error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        self.failed.store(true, Ordering::Release);
    }

    fn release(&self) {
        *self.in_flight.lock().unwrap() -= 1;
        self.released.notify_one();
    }
}

/// Fixed pool of compression workers feeding one [`ChunkSink`].
///
/// Submission blocks while `2 * threads` chunks are in flight (submitted but
/// not yet accepted by the sink). With one worker, chunks reach the sink in
/// submission order; otherwise completion order is unspecified.
pub struct CompressionPipeline<S: ChunkSink> {
    submit: Option<Sender<RawChunk>>,
    workers: Vec<JoinHandle<()>>,
    consumer: Option<JoinHandle<S>>,
    shared: Arc<Shared>,
    limit: usize,
}

impl<S: ChunkSink> CompressionPipeline<S> {
    pub fn new(threads: usize, spec: CompressionSpec, element_size: usize, sink: S) -> Result<Self> {
        spec.validate()?;
        let threads = threads.max(1);
        let limit = 2 * threads;
        let (submit_tx, submit_rx) = crossbeam_channel::bounded::<RawChunk>(limit);
        let (done_tx, done_rx) = crossbeam_channel::bounded::<Result<CompressedChunk>>(limit);
        let shared = Arc::new(Shared::default());

        let workers = (0..threads)
            .map(|i| {
                let rx = submit_rx.clone();
                let tx = done_tx.clone();
                thread::Builder::new()
                    .name(format!("bwmr-codec-{i}"))
                    .spawn(move || compress_worker(rx, tx, spec, element_size))
                    .map_err(Error::Io)
            })
            .collect::<Result<Vec<_>>>()?;
        drop(done_tx);

        let consumer_shared = Arc::clone(&shared);
        let consumer = thread::Builder::new()
            .name("bwmr-sink".into())
            .spawn(move || consume(done_rx, sink, &consumer_shared))?;

        Ok(Self {
            submit: Some(submit_tx),
            workers,
            consumer: Some(consumer),
            shared,
            limit,
        })
    }

    /// Queue a chunk for compression.
    pub fn submit(&self, chunk: RawChunk) -> Result<()> {
        let tx = self.submit.as_ref().ok_or(Error::PipelineClosed)?;
        self.take_failure()?;
        {
            let mut in_flight = self.shared.in_flight.lock().unwrap();
            while *in_flight >= self.limit && !self.shared.failed.load(Ordering::Acquire) {
                in_flight = self.shared.released.wait(in_flight).unwrap();
            }
            *in_flight += 1;
        }
        self.take_failure()?;
        tx.send(chunk).map_err(|_| Error::PipelineClosed)
    }

    fn take_failure(&self) -> Result<()> {
        if self.shared.failed.load(Ordering::Acquire) {
            return Err(self
                .shared
                .error
                .lock()
                .unwrap()
                .take()
                .unwrap_or(Error::PipelineClosed));
        }
        Ok(())
    }

    /// Wait until every submitted chunk reached the sink and return it.
    /// Further calls to `submit` or `drain` fail with
    /// [`Error::PipelineClosed`].
    pub fn drain(&mut self) -> Result<S> {
        let tx = self.submit.take().ok_or(Error::PipelineClosed)?;
        drop(tx);
        for worker in self.workers.drain(..) {
            worker
                .join()
                .map_err(|_| Error::Internal("codec worker panicked".into()))?;
        }
        let sink = self
            .consumer
            .take()
            .ok_or(Error::PipelineClosed)?
            .join()
            .map_err(|_| Error::Internal("chunk sink panicked".into()))?;
        match self.shared.error.lock().unwrap().take() {
            Some(err) => Err(err),
            None if self.shared.failed.load(Ordering::Acquire) => Err(Error::PipelineClosed),
            None => Ok(sink),
        }
    }
}

impl<S: ChunkSink> Drop for CompressionPipeline<S> {
    fn drop(&mut self) {
        if self.submit.take().is_some() {
            for worker in self.workers.drain(..) {
                let _ = worker.join();
            }
            if let Some(consumer) = self.consumer.take() {
                let _ = consumer.join();
            }
        }
    }
}

fn compress_worker(
    rx: Receiver<RawChunk>,
    tx: Sender<Result<CompressedChunk>>,
    spec: CompressionSpec,
    element_size: usize,
) {
    for raw in rx {
        if tx.send(CompressedChunk::encode(raw, &spec, element_size)).is_err() {
            break;
        }
    }
}

fn consume<S: ChunkSink>(rx: Receiver<Result<CompressedChunk>>, mut sink: S, shared: &Shared) -> S {
    for result in rx {
        if !shared.failed.load(Ordering::Acquire) {
            if let Err(err) = result.and_then(|chunk| sink.accept(chunk)) {
                shared.fail(err);
            }
        }
        shared.release();
    }
    sink
}
