//! Helpers shared by the integration targets. The pyramid oracle here is
//! written from the level rule and window-mean definition alone and does not
//! call into the library's reduction code.
#![allow(dead_code)]

use std::path::Path;

use bwmr::container::Parameters;
use bwmr::ingest::{ImageWriter, WriteSummary, WriterOptions};
use bwmr::model::{from_le_bytes, BlockIndex5D, DataType, ImageExtent, ImageLayout};
use bwmr::reader::ImageHandle;
use bwmr::synthetic::SyntheticImage;
use rand::seq::SliceRandom;
use rand::Rng;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ramp_u16.bwmr");

/// Every block index of the layout's input grid, in a random order.
pub fn shuffled_blocks(layout: &ImageLayout, rng: &mut impl Rng) -> Vec<BlockIndex5D> {
    let g = layout.input_block_grid().as_array();
    let mut all = Vec::new();
    for t in 0..g[4] {
        for c in 0..g[3] {
            for z in 0..g[2] {
                for y in 0..g[1] {
                    for x in 0..g[0] {
                        all.push(BlockIndex5D::new(x, y, z, c, t));
                    }
                }
            }
        }
    }
    all.shuffle(rng);
    all
}

/// Stream `image` block by block in `order` and finish with default metadata.
pub fn write_image(
    path: &Path,
    image: &SyntheticImage,
    layout: &ImageLayout,
    options: WriterOptions,
    order: &[BlockIndex5D],
) -> WriteSummary {
    let extent = ImageExtent::unit(&layout.image_size);
    let mut writer = ImageWriter::create(layout.clone(), extent, options, path).expect("create writer");
    for &index in order {
        writer.copy_block(&image.block(layout, index), index).expect("copy block");
    }
    writer.finish(extent, Parameters::new(), Vec::new(), Vec::new()).expect("finish")
}

/// Decode an X-fastest byte volume to f64 values.
pub fn decode_f64(bytes: &[u8], data_type: DataType) -> Vec<f64> {
    match data_type {
        DataType::U8 => bytes.iter().map(|&v| v as f64).collect(),
        DataType::U16 => from_le_bytes::<u16>(bytes).into_iter().map(f64::from).collect(),
        DataType::U32 => from_le_bytes::<u32>(bytes).into_iter().map(f64::from).collect(),
        DataType::F32 => from_le_bytes::<f32>(bytes).into_iter().map(f64::from).collect(),
    }
}

/// One level of a file, as f64 values.
pub fn read_level_f64(handle: &ImageHandle, level: usize, c: usize, t: usize) -> Vec<f64> {
    match handle.data_type() {
        DataType::U8 => handle.read_level::<u8>(level, c, t).unwrap().into_iter().map(f64::from).collect(),
        DataType::U16 => handle.read_level::<u16>(level, c, t).unwrap().into_iter().map(f64::from).collect(),
        DataType::U32 => handle.read_level::<u32>(level, c, t).unwrap().into_iter().map(f64::from).collect(),
        DataType::F32 => handle.read_level::<f32>(level, c, t).unwrap().into_iter().map(f64::from).collect(),
    }
}

/// Level sizes by repeated ceiling-halving of every axis larger than the
/// block, until no axis is.
pub fn oracle_sizes(size: [usize; 3], block: [usize; 3]) -> Vec<[usize; 3]> {
    let mut sizes = vec![size];
    loop {
        let last = *sizes.last().unwrap();
        if (0..3).all(|d| last[d] <= block[d]) {
            return sizes;
        }
        sizes.push(std::array::from_fn(|d| if last[d] > block[d] { last[d].div_ceil(2) } else { last[d] }));
    }
}

/// Brute-force pyramid: each voxel of level k is the mean of the existing
/// voxels of its 2-per-halved-axis window in level k-1, rounded half up
/// for integer types and narrowed to f32 for floats.
pub fn oracle_levels(level0: Vec<f64>, size: [usize; 3], block: [usize; 3], data_type: DataType) -> Vec<Vec<f64>> {
    let sizes = oracle_sizes(size, block);
    let mut levels = vec![level0];
    for k in 1..sizes.len() {
        let (src, s) = (&levels[k - 1], sizes[k - 1]);
        let d = sizes[k];
        let mut out = Vec::with_capacity(d[0] * d[1] * d[2]);
        for z in 0..d[2] {
            for y in 0..d[1] {
                for x in 0..d[0] {
                    let window = |i: usize, axis: usize| {
                        if d[axis] == s[axis] { i..i + 1 } else { 2 * i..(2 * i + 2).min(s[axis]) }
                    };
                    let (mut sum, mut n) = (0.0f64, 0u32);
                    for sz in window(z, 2) {
                        for sy in window(y, 1) {
                            for sx in window(x, 0) {
                                sum += src[sx + s[0] * (sy + s[1] * sz)];
                                n += 1;
                            }
                        }
                    }
                    let mean = sum / n as f64;
                    out.push(match data_type {
                        DataType::F32 => mean as f32 as f64,
                        _ => (mean + 0.5).floor(),
                    });
                }
            }
        }
        levels.push(out);
    }
    levels
}
