//! Streaming front end: accepts input blocks in any order, scatters them into
//! level-0 chunks and pushes every chunk downstream the moment its last
//! in-image voxel arrives.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::codec::{ChunkSink, CompressedChunk, CompressionPipeline, CompressionSpec, RawChunk};
use crate::container::{
    BackendFactory, BackendWriter, ChannelColorInfo, Metadata, Parameters, ReferenceBackend, TimePointInfo,
};
use crate::error::{Error, Result};
use crate::memory::MemoryAccount;
use crate::model::{BlockIndex5D, ChunkKey, Element, ImageExtent, ImageLayout};
use crate::pyramid::{plan_levels, reducer_for, ChunkReducer, PyramidPlan};

/// When chunks leave the writer. There is only one policy: a chunk is
/// compressed and written as soon as it is full.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlushPolicy {
    #[default]
    DispatchWhenFull,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriterOptions {
    /// Compression workers; at least one.
    pub thread_count: usize,
    pub compression: CompressionSpec,
    /// Store chunks one plane deep, for images whose XY planes barely fit in
    /// memory. Hurts read performance.
    pub force_block_z1: bool,
    pub flush_policy: FlushPolicy,
}

impl Default for WriterOptions {
    fn default() -> Self {
        Self {
            thread_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            compression: CompressionSpec::default(),
            force_block_z1: false,
            flush_policy: FlushPolicy::DispatchWhenFull,
        }
    }
}

/// Receives the fraction of input voxels received so far, in `[0, 1]`.
pub type ProgressCallback = Box<dyn FnMut(f64) + Send>;

/// A level-0 chunk that has received some but not all of its voxels.
struct ChunkState {
    buffer: Vec<u8>,
    filled: usize,
    target: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelSummary {
    pub chunks: usize,
    pub raw_bytes: u64,
    pub stored_bytes: u64,
}

/// Outcome of a completed write.
#[derive(Clone, Debug, PartialEq)]
pub struct WriteSummary {
    pub path: PathBuf,
    pub levels: Vec<LevelSummary>,
    /// Bytes of in-image voxel data streamed in.
    pub input_bytes: u64,
    pub file_bytes: u64,
    pub peak_memory_bytes: u64,
}

impl WriteSummary {
    pub fn raw_bytes(&self) -> u64 {
        self.levels.iter().map(|l| l.raw_bytes).sum()
    }

    pub fn stored_bytes(&self) -> u64 {
        self.levels.iter().map(|l| l.stored_bytes).sum()
    }

    /// Uncompressed chunk bytes over stored chunk bytes, all levels.
    pub fn compression_ratio(&self) -> f64 {
        self.raw_bytes() as f64 / self.stored_bytes().max(1) as f64
    }
}

impl fmt::Display for WriteSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const MB: f64 = 1024.0 * 1024.0;
        writeln!(f, "wrote {}", self.path.display())?;
        for (k, level) in self.levels.iter().enumerate() {
            writeln!(
                f,
                "  level {k}: {} chunks, {:.2} MB raw, {:.2} MB stored",
                level.chunks,
                level.raw_bytes as f64 / MB,
                level.stored_bytes as f64 / MB
            )?;
        }
        writeln!(f, "  input: {:.2} MB", self.input_bytes as f64 / MB)?;
        writeln!(f, "  file: {:.2} MB", self.file_bytes as f64 / MB)?;
        writeln!(f, "  compression ratio: {:.3}", self.compression_ratio())?;
        write!(f, "  peak chunk memory: {:.2} MB", self.peak_memory_bytes as f64 / MB)
    }
}

struct CountingSink {
    backend: Box<dyn BackendWriter>,
    levels: Vec<LevelSummary>,
}

impl ChunkSink for CountingSink {
    fn accept(&mut self, chunk: CompressedChunk) -> Result<()> {
        let level = &mut self.levels[chunk.key.level];
        level.chunks += 1;
        level.raw_bytes += chunk.raw_length as u64;
        level.stored_bytes += chunk.payload.len() as u64;
        self.backend.write_chunk(chunk)
    }
}

/// Streaming multi-resolution writer.
///
/// Blocks are copied with [`copy_block`](Self::copy_block) in any order,
/// each index exactly once, by a single caller. Compression and writing
/// happen on background workers; [`finish`](Self::finish) waits for them.
pub struct ImageWriter {
    layout: ImageLayout,
    plan: PyramidPlan,
    path: PathBuf,
    chunks: HashMap<ChunkKey, ChunkState>,
    reducer: Box<dyn ChunkReducer>,
    pipeline: CompressionPipeline<CountingSink>,
    memory: MemoryAccount,
    received: Vec<bool>,
    received_blocks: u64,
    received_voxels: u64,
    progress: Option<ProgressCallback>,
    finished: bool,
}

impl ImageWriter {
    /// Create a writer for the reference container at `path`.
    pub fn create(
        layout: ImageLayout,
        extent: ImageExtent,
        options: WriterOptions,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        Self::create_with(layout, extent, options, path, &ReferenceBackend, None)
    }

    pub fn create_with(
        mut layout: ImageLayout,
        extent: ImageExtent,
        options: WriterOptions,
        path: impl AsRef<Path>,
        backend: &dyn BackendFactory,
        progress: Option<ProgressCallback>,
    ) -> Result<Self> {
        if options.thread_count == 0 {
            return Err(Error::InvalidLayout("thread count must be at least 1".into()));
        }
        options.compression.validate()?;
        if options.force_block_z1 {
            layout.internal_block_size[2] = 1;
        }
        layout.validate()?;
        extent.validate()?;
        let path = path.as_ref().to_path_buf();
        let plan = plan_levels(layout.image_size.xyz(), layout.internal_block_size);
        let sink = CountingSink {
            backend: backend.open(&path, &layout, &plan, &extent)?,
            levels: vec![LevelSummary::default(); plan.level_count()],
        };
        let pipeline = CompressionPipeline::new(
            options.thread_count,
            options.compression,
            layout.element_size(),
            sink,
        )?;
        let block_total = layout.input_block_grid().volume();
        let received = vec![false; usize::try_from(block_total).map_err(|_| Error::InvalidLayout("too many input blocks".into()))?];
        Ok(Self {
            reducer: reducer_for(plan.clone(), layout.data_type),
            layout,
            plan,
            path,
            chunks: HashMap::new(),
            pipeline,
            memory: MemoryAccount::default(),
            received,
            received_blocks: 0,
            received_voxels: 0,
            progress,
            finished: false,
        })
    }

    pub fn layout(&self) -> &ImageLayout {
        &self.layout
    }

    pub fn plan(&self) -> &PyramidPlan {
        &self.plan
    }

    /// High-water mark of live chunk buffers over all levels.
    pub fn peak_memory_bytes(&self) -> u64 {
        self.memory.peak_bytes()
    }

    /// Bytes currently held by partially filled chunks.
    pub fn current_memory_bytes(&self) -> u64 {
        self.memory.current_bytes()
    }

    /// Fraction of input voxels received so far.
    pub fn progress(&self) -> f64 {
        self.received_voxels as f64 / self.layout.image_size.volume() as f64
    }

    fn block_slot(&self, index: &BlockIndex5D) -> Result<usize> {
        let grid = self.layout.input_block_grid().as_array();
        if index.0.iter().zip(grid).any(|(&i, g)| i >= g) {
            return Err(Error::BlockIndexOutOfRange { index: *index, grid });
        }
        let mut slot = 0;
        for d in (0..5).rev() {
            slot = slot * grid[d] + index.0[d];
        }
        Ok(slot)
    }

    /// Copy one typed input block; see [`copy_block`](Self::copy_block).
    pub fn copy_block_typed<T: Element>(&mut self, data: &[T], index: BlockIndex5D) -> Result<()> {
        if T::DATA_TYPE != self.layout.data_type {
            return Err(Error::InvalidLayout(format!(
                "block of {} for an image of {}",
                T::DATA_TYPE,
                self.layout.data_type
            )));
        }
        self.copy_block(&crate::model::to_le_bytes(data), index)
    }

    /// Copy one input block of little-endian voxels laid out in the input
    /// dimension sequence. Border blocks must be padded to the full block
    /// size; padding is discarded.
    pub fn copy_block(&mut self, data: &[u8], index: BlockIndex5D) -> Result<()> {
        if self.finished {
            return Err(Error::WriterFinished);
        }
        let slot = self.block_slot(&index)?;
        let expected = self.layout.input_block_bytes();
        if data.len() != expected {
            return Err(Error::BlockLength {
                expected,
                actual: data.len(),
            });
        }
        if self.received[slot] {
            return Err(Error::DuplicateBlock(index));
        }
        self.received[slot] = true;
        self.received_blocks += 1;

        let size = self.layout.image_size.as_array();
        let block = self.layout.input_block_size;
        let bs = block.as_array();
        let origin: [usize; 5] = std::array::from_fn(|d| index.0[d] * bs[d]);
        let extent: [usize; 5] = std::array::from_fn(|d| bs[d].min(size[d] - origin[d]));
        let strides = self.layout.input_sequence.strides(&block);
        let es = self.layout.element_size();
        let cb = self.layout.internal_block_size;
        let chunk_bytes = self.layout.internal_block_bytes();

        for t_off in 0..extent[4] {
            for c_off in 0..extent[3] {
                let base = t_off * strides[4] + c_off * strides[3];
                let (t, c) = (origin[4] + t_off, origin[3] + c_off);
                let span = |d: usize| origin[d] / cb[d]..(origin[d] + extent[d] - 1) / cb[d] + 1;
                for cz in span(2) {
                    for cy in span(1) {
                        for cx in span(0) {
                            let key = ChunkKey::new(0, t, c, [cx, cy, cz]);
                            let chunk_region = self.plan.chunk_region(0, [cx, cy, cz]);
                            let r: [std::ops::Range<usize>; 3] = std::array::from_fn(|d| {
                                chunk_region[d].start.max(origin[d])..chunk_region[d].end.min(origin[d] + extent[d])
                            });
                            let memory = &mut self.memory;
                            let plan = &self.plan;
                            let state = self.chunks.entry(key).or_insert_with(|| {
                                memory.alloc(chunk_bytes);
                                ChunkState {
                                    buffer: vec![0u8; chunk_bytes],
                                    filled: 0,
                                    target: plan.chunk_voxels(0, [cx, cy, cz]),
                                }
                            });
                            let row = r[0].len();
                            for z in r[2].clone() {
                                for y in r[1].clone() {
                                    let src0 = base
                                        + (r[0].start - origin[0]) * strides[0]
                                        + (y - origin[1]) * strides[1]
                                        + (z - origin[2]) * strides[2];
                                    let dst0 = (r[0].start - chunk_region[0].start)
                                        + cb[0] * ((y - chunk_region[1].start) + cb[1] * (z - chunk_region[2].start));
                                    if strides[0] == 1 {
                                        state.buffer[dst0 * es..(dst0 + row) * es]
                                            .copy_from_slice(&data[src0 * es..(src0 + row) * es]);
                                    } else {
                                        for i in 0..row {
                                            let s = (src0 + i * strides[0]) * es;
                                            let d = (dst0 + i) * es;
                                            state.buffer[d..d + es].copy_from_slice(&data[s..s + es]);
                                        }
                                    }
                                }
                            }
                            state.filled += row * r[1].len() * r[2].len();
                            debug_assert!(state.filled <= state.target);
                            if state.filled == state.target {
                                let state = self.chunks.remove(&key).unwrap();
                                self.dispatch(RawChunk {
                                    key,
                                    data: state.buffer,
                                })?;
                            }
                        }
                    }
                }
            }
        }

        self.received_voxels += extent.iter().map(|&e| e as u64).product::<u64>();
        let fraction = self.progress();
        if let Some(progress) = self.progress.as_mut() {
            progress(fraction);
        }
        Ok(())
    }

    /// Reduce a complete chunk into the next level, then hand it to the
    /// compression pipeline. Completed coarser chunks cascade the same way.
    fn dispatch(&mut self, chunk: RawChunk) -> Result<()> {
        let mut work = vec![chunk];
        while let Some(chunk) = work.pop() {
            if chunk.key.level + 1 < self.plan.level_count() {
                work.extend(self.reducer.reduce(chunk.key, &chunk.data, &mut self.memory)?);
            }
            self.memory.free(chunk.data.len());
            self.pipeline.submit(chunk)?;
        }
        Ok(())
    }

    /// Write metadata and complete the file. Empty `time_points` or
    /// `channel_colors` are replaced by defaults; otherwise their lengths
    /// must match the timepoint and channel counts.
    pub fn finish(
        &mut self,
        extent: ImageExtent,
        parameters: Parameters,
        time_points: Vec<TimePointInfo>,
        channel_colors: Vec<ChannelColorInfo>,
    ) -> Result<WriteSummary> {
        if self.finished {
            return Err(Error::WriterFinished);
        }
        let total = self.received.len() as u64;
        if self.received_blocks != total {
            return Err(Error::MissingBlocks {
                missing: total - self.received_blocks,
                total,
            });
        }
        if !self.chunks.is_empty() || self.reducer.pending_chunks() != 0 {
            return Err(Error::Internal(format!(
                "{} level-0 and {} coarser chunks left incomplete",
                self.chunks.len(),
                self.reducer.pending_chunks()
            )));
        }
        let [_, _, _, c, t] = self.layout.image_size.as_array();
        let metadata = Metadata {
            extent,
            time_points: if time_points.is_empty() {
                vec![TimePointInfo::default(); t]
            } else {
                time_points
            },
            channel_colors: if channel_colors.is_empty() {
                vec![ChannelColorInfo::default_for(self.layout.data_type); c]
            } else {
                channel_colors
            },
            parameters,
        };
        metadata.validate(&self.layout.image_size)?;

        self.finished = true;
        let mut sink = self.pipeline.drain()?;
        sink.backend.write_metadata(&metadata)?;
        sink.backend.finalize()?;
        Ok(WriteSummary {
            path: self.path.clone(),
            levels: sink.levels,
            input_bytes: self.layout.image_bytes(),
            file_bytes: sink.backend.bytes_written(),
            peak_memory_bytes: self.memory.peak_bytes(),
        })
    }
}
