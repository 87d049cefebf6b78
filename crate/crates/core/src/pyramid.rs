//! Resolution levels and the streaming window-mean reduction that builds
//! level `k + 1` chunks out of completed level `k` chunks.
//!
//! Level rule: starting from the image, halve (rounding up) every axis whose
//! size exceeds the internal block size along that axis, until no axis
//! qualifies. Each target voxel is the mean of its source window (two voxels
//! along a halved axis, one otherwise), clipped at the source level boundary.
//! Integer means round half away from zero.

use std::collections::HashMap;
use std::ops::{AddAssign, Range};

use crate::codec::RawChunk;
use crate::error::{Error, Result};
use crate::memory::MemoryAccount;
use crate::model::{ChunkKey, DataType, Element};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelInfo {
    pub size: [usize; 3],
    /// Axes halved to produce this level from the previous one.
    pub halved: [bool; 3],
    pub chunk_grid: [usize; 3],
}

impl LevelInfo {
    pub fn voxel_count(&self) -> u64 {
        self.size.iter().map(|&s| s as u64).product()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunk_grid.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidPlan {
    block: [usize; 3],
    levels: Vec<LevelInfo>,
}

fn grid(size: [usize; 3], block: [usize; 3]) -> [usize; 3] {
    std::array::from_fn(|d| size[d].div_ceil(block[d]))
}

/// Plan the resolution levels for an image of `image_xyz` voxels stored in
/// chunks of `internal_block`.
pub fn plan_levels(image_xyz: [usize; 3], internal_block: [usize; 3]) -> PyramidPlan {
    let mut levels = vec![LevelInfo {
        size: image_xyz,
        halved: [false; 3],
        chunk_grid: grid(image_xyz, internal_block),
    }];
    loop {
        let last = levels.last().unwrap().size;
        let halved: [bool; 3] = std::array::from_fn(|d| last[d] > internal_block[d]);
        if !halved.contains(&true) {
            break;
        }
        let size = std::array::from_fn(|d| if halved[d] { last[d].div_ceil(2) } else { last[d] });
        levels.push(LevelInfo {
            size,
            halved,
            chunk_grid: grid(size, internal_block),
        });
    }
    PyramidPlan {
        block: internal_block,
        levels,
    }
}

impl PyramidPlan {
    /// Rebuild a plan from stored level sizes, checking that each level is a
    /// valid reduction of its predecessor.
    pub fn from_level_sizes(sizes: &[[usize; 3]], internal_block: [usize; 3]) -> Result<Self> {
        let first = *sizes
            .first()
            .ok_or_else(|| Error::Malformed("pyramid has no levels".into()))?;
        if first.contains(&0) || internal_block.contains(&0) {
            return Err(Error::Malformed("zero-sized level or block".into()));
        }
        let mut levels = vec![LevelInfo {
            size: first,
            halved: [false; 3],
            chunk_grid: grid(first, internal_block),
        }];
        for pair in sizes.windows(2) {
            let (prev, size) = (pair[0], pair[1]);
            let mut halved = [false; 3];
            for d in 0..3 {
                if size[d] == prev[d] {
                    continue;
                }
                if size[d] != prev[d].div_ceil(2) {
                    return Err(Error::Malformed(format!(
                        "level size {size:?} is not a reduction of {prev:?}"
                    )));
                }
                halved[d] = true;
            }
            if !halved.contains(&true) {
                return Err(Error::Malformed(format!("level {size:?} repeats its predecessor")));
            }
            levels.push(LevelInfo {
                size,
                halved,
                chunk_grid: grid(size, internal_block),
            });
        }
        Ok(Self {
            block: internal_block,
            levels,
        })
    }

    pub fn levels(&self) -> &[LevelInfo] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &LevelInfo {
        &self.levels[k]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn block_size(&self) -> [usize; 3] {
        self.block
    }

    pub fn block_voxels(&self) -> usize {
        self.block.iter().product()
    }

    pub fn level_voxel_count(&self, k: usize) -> u64 {
        self.levels[k].voxel_count()
    }

    /// Voxel ranges at level `k` covered by a chunk, clipped to the level.
    pub fn chunk_region(&self, k: usize, chunk: [usize; 3]) -> [Range<usize>; 3] {
        let size = self.levels[k].size;
        std::array::from_fn(|d| {
            let start = chunk[d] * self.block[d];
            start..(start + self.block[d]).min(size[d])
        })
    }

    /// In-level voxels of a chunk.
    pub fn chunk_voxels(&self, k: usize, chunk: [usize; 3]) -> usize {
        self.chunk_region(k, chunk).iter().map(|r| r.len()).product()
    }

    pub fn contains_chunk(&self, k: usize, chunk: [usize; 3]) -> bool {
        k < self.levels.len() && (0..3).all(|d| chunk[d] < self.levels[k].chunk_grid[d])
    }
}

/// Voxel types the reduction can average.
pub trait Reducible: Element {
    /// Widened accumulator type.
    type Sum: Copy + Default + AddAssign + Send + Sync + 'static;

    fn widen(self) -> Self::Sum;
    fn mean(sum: Self::Sum, count: u32) -> Self;
}

macro_rules! impl_reducible_int {
    ($($t:ty),*) => {$(
        impl Reducible for $t {
            type Sum = u64;

            #[inline]
            fn widen(self) -> u64 {
                self as u64
            }

            #[inline]
            fn mean(sum: u64, count: u32) -> Self {
                let n = count as u64;
                ((2 * sum + n) / (2 * n)) as $t
            }
        }
    )*};
}

impl_reducible_int!(u8, u16, u32);

impl Reducible for f32 {
    type Sum = f64;

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }

    #[inline]
    fn mean(sum: f64, count: u32) -> Self {
        (sum / count as f64) as f32
    }
}

/// Window range along one axis of the source level for target coordinate
/// `p`.
#[inline]
fn window(p: usize, halved: bool, source_size: usize) -> Range<usize> {
    if halved {
        2 * p..(2 * p + 2).min(source_size)
    } else {
        p..p + 1
    }
}

fn intersect(a: &Range<usize>, b: &Range<usize>) -> Range<usize> {
    a.start.max(b.start)..a.end.min(b.end).max(a.start.max(b.start))
}

/// Partial window sums for target voxels whose window straddles several
/// source chunks. Only needed when a halved axis has an odd block size.
struct ReductionAccumulator<S> {
    sums: Vec<S>,
    counts: Vec<u8>,
}

impl<S: Copy + Default> ReductionAccumulator<S> {
    fn new(voxels: usize) -> Self {
        Self {
            sums: vec![S::default(); voxels],
            counts: vec![0; voxels],
        }
    }

    fn bytes(&self) -> usize {
        self.sums.len() * std::mem::size_of::<S>() + self.counts.len()
    }
}

struct TargetState<T: Reducible> {
    buffer: Vec<u8>,
    filled: usize,
    target: usize,
    accumulator: Option<ReductionAccumulator<T::Sum>>,
}

/// Consumes completed chunks of one level and emits completed chunks of the
/// next.
pub trait ChunkReducer: Send {
    /// Fold a complete level-`k` chunk into its level-`k + 1` targets and
    /// return the targets that became complete. Newly allocated target
    /// buffers are charged to `memory`; returned buffers stay charged until the
    /// caller frees them.
    fn reduce(&mut self, key: ChunkKey, data: &[u8], memory: &mut MemoryAccount) -> Result<Vec<RawChunk>>;

    /// Target chunks currently under construction.
    fn pending_chunks(&self) -> usize;
}

pub fn reducer_for(plan: PyramidPlan, data_type: DataType) -> Box<dyn ChunkReducer> {
    match data_type {
        DataType::U8 => Box::new(PyramidReducer::<u8>::new(plan)),
        DataType::U16 => Box::new(PyramidReducer::<u16>::new(plan)),
        DataType::U32 => Box::new(PyramidReducer::<u32>::new(plan)),
        DataType::F32 => Box::new(PyramidReducer::<f32>::new(plan)),
    }
}

/// Streaming reducer for all levels of a plan.
///
/// Output is independent of the order in which source chunks arrive. For
/// `f32` data with straddling windows, partial sums are added in arrival
/// order, which is exact unless the values span more than ~29 binary orders
/// of magnitude.
pub struct PyramidReducer<T: Reducible> {
    plan: PyramidPlan,
    pending: HashMap<ChunkKey, TargetState<T>>,
}

impl<T: Reducible> PyramidReducer<T> {
    pub fn new(plan: PyramidPlan) -> Self {
        Self {
            plan,
            pending: HashMap::new(),
        }
    }

    pub fn plan(&self) -> &PyramidPlan {
        &self.plan
    }
}

impl<T: Reducible> ChunkReducer for PyramidReducer<T> {
    fn reduce(&mut self, key: ChunkKey, data: &[u8], memory: &mut MemoryAccount) -> Result<Vec<RawChunk>> {
        let plan = &self.plan;
        let next = key.level + 1;
        if next >= plan.level_count() {
            return Err(Error::Internal(format!("{key} has no coarser level")));
        }
        let es = T::DATA_TYPE.bytes_per_element();
        let block = plan.block;
        if data.len() != plan.block_voxels() * es {
            return Err(Error::Internal(format!("{key}: source buffer has wrong size")));
        }
        let source_size = plan.levels[key.level].size;
        let halved = plan.levels[next].halved;
        let source = plan.chunk_region(key.level, key.xyz());
        let touched: [Range<usize>; 3] = std::array::from_fn(|d| {
            if halved[d] {
                source[d].start / 2..source[d].end.div_ceil(2)
            } else {
                source[d].clone()
            }
        });
        let chunk_span = |d: usize| touched[d].start / block[d]..(touched[d].end - 1) / block[d] + 1;

        let mut completed = Vec::new();
        for tz in chunk_span(2) {
            for ty in chunk_span(1) {
                for tx in chunk_span(0) {
                    let tkey = ChunkKey::new(next, key.t, key.c, [tx, ty, tz]);
                    let state = self.pending.entry(tkey).or_insert_with(|| {
                        let bytes = plan.block_voxels() * es;
                        memory.alloc(bytes);
                        TargetState {
                            buffer: vec![0u8; bytes],
                            filled: 0,
                            target: plan.chunk_voxels(next, tkey.xyz()),
                            accumulator: None,
                        }
                    });
                    let target = plan.chunk_region(next, tkey.xyz());
                    let ranges: [Range<usize>; 3] =
                        std::array::from_fn(|d| intersect(&touched[d], &target[d]));
                    let origin = [target[0].start, target[1].start, target[2].start];
                    state.filled += fold_source::<T>(
                        data,
                        &source,
                        source_size,
                        halved,
                        block,
                        &ranges,
                        origin,
                        state,
                        memory,
                    );
                    if state.filled == state.target {
                        let state = self.pending.remove(&tkey).unwrap();
                        if let Some(acc) = &state.accumulator {
                            memory.free(acc.bytes());
                        }
                        completed.push(RawChunk {
                            key: tkey,
                            data: state.buffer,
                        });
                    }
                }
            }
        }
        Ok(completed)
    }

    fn pending_chunks(&self) -> usize {
        self.pending.len()
    }
}

/// Fold one source chunk into the `ranges` part of one target chunk.
/// Returns the number of target voxels finalized.
#[allow(clippy::too_many_arguments)]
fn fold_source<T: Reducible>(
    data: &[u8],
    source: &[Range<usize>; 3],
    source_size: [usize; 3],
    halved: [bool; 3],
    block: [usize; 3],
    ranges: &[Range<usize>; 3],
    origin: [usize; 3],
    state: &mut TargetState<T>,
    memory: &mut MemoryAccount,
) -> usize {
    let es = T::DATA_TYPE.bytes_per_element();
    let read = |x: usize, y: usize, z: usize| -> T::Sum {
        let local = (x - source[0].start) + block[0] * ((y - source[1].start) + block[1] * (z - source[2].start));
        T::read_le(&data[local * es..]).widen()
    };
    let mut finalized = 0;
    for z in ranges[2].clone() {
        let wz = window(z, halved[2], source_size[2]);
        let cz = intersect(&wz, &source[2]);
        for y in ranges[1].clone() {
            let wy = window(y, halved[1], source_size[1]);
            let cy = intersect(&wy, &source[1]);
            for x in ranges[0].clone() {
                let wx = window(x, halved[0], source_size[0]);
                let cx = intersect(&wx, &source[0]);
                let full = (wx.len() * wy.len() * wz.len()) as u32;
                let local = (cx.len() * cy.len() * cz.len()) as u32;
                let mut sum = T::Sum::default();
                for sz in cz.clone() {
                    for sy in cy.clone() {
                        for sx in cx.clone() {
                            sum += read(sx, sy, sz);
                        }
                    }
                }
                let out = (x - origin[0]) + block[0] * ((y - origin[1]) + block[1] * (z - origin[2]));
                let value = if local == full {
                    T::mean(sum, full)
                } else {
                    let acc = state.accumulator.get_or_insert_with(|| {
                        let acc = ReductionAccumulator::new(block.iter().product());
                        memory.alloc(acc.bytes());
                        acc
                    });
                    acc.sums[out] += sum;
                    acc.counts[out] += local as u8;
                    if u32::from(acc.counts[out]) < full {
                        continue;
                    }
                    T::mean(acc.sums[out], full)
                };
                value.write_le(&mut state.buffer[out * es..]);
                finalized += 1;
            }
        }
    }
    finalized
}

/// Whole-volume window-mean reduction of one level, used by verification
/// tooling. `source` is X-fastest.
pub fn downsample_volume<T: Reducible>(source: &[T], size: [usize; 3], halved: [bool; 3]) -> (Vec<T>, [usize; 3]) {
    let out_size: [usize; 3] = std::array::from_fn(|d| if halved[d] { size[d].div_ceil(2) } else { size[d] });
    let mut out = Vec::with_capacity(out_size.iter().product());
    for z in 0..out_size[2] {
        for y in 0..out_size[1] {
            for x in 0..out_size[0] {
                let (wx, wy, wz) = (
                    window(x, halved[0], size[0]),
                    window(y, halved[1], size[1]),
                    window(z, halved[2], size[2]),
                );
                let n = (wx.len() * wy.len() * wz.len()) as u32;
                let mut sum = T::Sum::default();
                for sz in wz.clone() {
                    for sy in wy.clone() {
                        for sx in wx.clone() {
                            sum += source[sx + size[0] * (sy + size[1] * sz)].widen();
                        }
                    }
                }
                out.push(T::mean(sum, n));
            }
        }
    }
    (out, out_size)
}
