//! Deterministic synthetic images. Every voxel value is a pure function of
//! its coordinates and the seed, so blocks can be generated in any order and
//! regenerated for verification.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{BlockIndex5D, DataType, ImageLayout, Size5D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// Linear ramp along every axis.
    Ramp,
    /// Smooth bright blob over a dim background, plus uniform noise whose
    /// amplitude grows with the signal up to 64 (16-bit scale).
    SmoothNoise,
    Zeros,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp" => Ok(Generator::Ramp),
            "smooth-noise" => Ok(Generator::SmoothNoise),
            "zeros" => Ok(Generator::Zeros),
            other => Err(Error::InvalidLayout(format!("unknown generator \"{other}\""))),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Ramp => "ramp",
            Generator::SmoothNoise => "smooth-noise",
            Generator::Zeros => "zeros",
        })
    }
}

const BLOB_RADIUS: f64 = 0.25;
const NOISE_FLOOR: u64 = 8;

/// SplitMix64 finalizer, used as a stateless coordinate hash.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticImage {
    pub generator: Generator,
    pub seed: u64,
    pub size: Size5D,
}

impl SyntheticImage {
    pub fn new(generator: Generator, seed: u64, size: Size5D) -> Self {
        Self { generator, seed, size }
    }

    /// Voxel value on a 16-bit scale.
    pub fn value(&self, p: [usize; 5]) -> u16 {
        let [x, y, z, c, t] = p;
        match self.generator {
            Generator::Zeros => 0,
            Generator::Ramp => ((x + 3 * y + 7 * z + 1000 * c + 250 * t) % 65536) as u16,
            Generator::SmoothNoise => {
                let [sx, sy, sz, sc, _] = self.size.as_array();
                // dim background with one broad bright blob, brighter with depth
                let cx = 0.5 + 0.1 * c as f64;
                let fx = x as f64 / sx as f64 - cx;
                let fy = y as f64 / sy as f64 - 0.5;
                let fz = z as f64 / sz as f64;
                let r2 = (fx * fx + fy * fy) / (BLOB_RADIUS * BLOB_RADIUS);
                let signal = 6000.0 * (1.0 - r2).max(0.0) * (1.0 + fz);
                let base = 100.0 + 20.0 * c as f64 + 10.0 * t as f64 + signal;
                // shot-noise-like amplitude: 64 at peak signal, floored in the background
                let amplitude = ((64.0 * (signal / 12000.0).sqrt()) as u64).max(NOISE_FLOOR);
                let linear = x + sx * (y + sy * (z + sz * (c + sc * t)));
                let key = mix(self.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ linear as u64);
                (base as u64 + key % amplitude) as u16
            }
        }
    }

    fn encode(&self, value: u16, data_type: DataType, out: &mut [u8]) {
        match data_type {
            DataType::U8 => out[0] = (value >> 8) as u8,
            DataType::U16 => out[..2].copy_from_slice(&value.to_le_bytes()),
            DataType::U32 => out[..4].copy_from_slice(&(value as u32 * 3).to_le_bytes()),
            DataType::F32 => out[..4].copy_from_slice(&(value as f32 * 0.25).to_le_bytes()),
        }
    }

    /// One input block for `layout`, in its dimension sequence. Voxels past the
    /// image border are filled with `0xA5` bytes.
    pub fn block(&self, layout: &ImageLayout, index: BlockIndex5D) -> Vec<u8> {
        let es = layout.element_size();
        let block = layout.input_block_size;
        let bs = block.as_array();
        let size = self.size.as_array();
        let strides = layout.input_sequence.strides(&block);
        let mut out = vec![0xA5u8; layout.input_block_bytes()];
        let origin: [usize; 5] = std::array::from_fn(|d| index.0[d] * bs[d]);
        let extent: [usize; 5] = std::array::from_fn(|d| bs[d].min(size[d].saturating_sub(origin[d])));
        for t in 0..extent[4] {
            for c in 0..extent[3] {
                for z in 0..extent[2] {
                    for y in 0..extent[1] {
                        for x in 0..extent[0] {
                            let local = [x, y, z, c, t];
                            let off: usize = (0..5).map(|d| local[d] * strides[d]).sum();
                            let p = std::array::from_fn(|d| origin[d] + local[d]);
                            self.encode(self.value(p), layout.data_type, &mut out[off * es..]);
                        }
                    }
                }
            }
        }
        out
    }

    /// One channel/timepoint as an X-fastest little-endian volume.
    pub fn volume(&self, data_type: DataType, c: usize, t: usize) -> Vec<u8> {
        let [sx, sy, sz, _, _] = self.size.as_array();
        let es = data_type.bytes_per_element();
        let mut out = vec![0u8; sx * sy * sz * es];
        let mut i = 0;
        for z in 0..sz {
            for y in 0..sy {
                for x in 0..sx {
                    self.encode(self.value([x, y, z, c, t]), data_type, &mut out[i..]);
                    i += es;
                }
            }
        }
        out
    }
}

/// Iterate every block index of `grid`, with the order given by `order` (first
/// entry fastest), for streaming in a chosen sequence.
pub fn block_order(grid: Size5D, order: crate::model::DimensionSequence5D) -> Vec<BlockIndex5D> {
    let g = grid.as_array();
    let dims = order.order();
    let total = grid.volume() as usize;
    let mut out = Vec::with_capacity(total);
    let mut idx = [0usize; 5];
    for _ in 0..total {
        out.push(BlockIndex5D(idx));
        for d in dims {
            let a = d.axis();
            idx[a] += 1;
            if idx[a] < g[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DimensionSequence5D;

    #[test]
    fn block_order_xyczt() {
        let grid = Size5D::new(2, 1, 2, 2, 1).unwrap();
        let order = block_order(grid, "XYCZT".parse().unwrap());
        let got: Vec<[usize; 5]> = order.iter().map(|b| b.0).collect();
        assert_eq!(
            got,
            vec![
                [0, 0, 0, 0, 0],
                [1, 0, 0, 0, 0],
                [0, 0, 0, 1, 0],
                [1, 0, 0, 1, 0],
                [0, 0, 1, 0, 0],
                [1, 0, 1, 0, 0],
                [0, 0, 1, 1, 0],
                [1, 0, 1, 1, 0],
            ]
        );
    }

    #[test]
    fn values_are_seeded_and_deterministic() {
        let size = Size5D::new(16, 16, 4, 1, 1).unwrap();
        let a = SyntheticImage::new(Generator::SmoothNoise, 1, size);
        let b = SyntheticImage::new(Generator::SmoothNoise, 2, size);
        assert_eq!(a.volume(DataType::U16, 0, 0), a.volume(DataType::U16, 0, 0));
        assert_ne!(a.volume(DataType::U16, 0, 0), b.volume(DataType::U16, 0, 0));
        assert!(SyntheticImage::new(Generator::Zeros, 0, size)
            .volume(DataType::U16, 0, 0)
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn block_matches_volume() {
        let size = Size5D::new(5, 3, 2, 1, 1).unwrap();
        let img = SyntheticImage::new(Generator::Ramp, 0, size);
        let layout = ImageLayout::new(size, DataType::U16, Size5D::new(4, 3, 1, 1, 1).unwrap(), "YXZCT".parse::<DimensionSequence5D>().unwrap());
        let block = img.block(&layout, BlockIndex5D::new(1, 0, 1, 0, 0));
        // YXZCT: y fastest; x=4 is the only in-image column
        let v = |i: usize| u16::from_le_bytes([block[2 * i], block[2 * i + 1]]);
        for y in 0..3 {
            assert_eq!(v(y), img.value([4, y, 1, 0, 0]));
        }
        assert_eq!(block[6..], vec![0xA5; 24 - 6][..]);
    }
}
