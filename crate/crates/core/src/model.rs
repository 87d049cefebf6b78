//! Shared vocabulary: axes, 5D sizes and indices, dimension sequences, data
//! types, physical extents and the image layout, plus the index arithmetic
//! everything else builds on.
//!
//! All 5D quantities are stored in canonical `X, Y, Z, C, T` order regardless
//! of the memory order described by a [`DimensionSequence5D`].

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the five image axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    X,
    Y,
    Z,
    C,
    T,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::X,
        Dimension::Y,
        Dimension::Z,
        Dimension::C,
        Dimension::T,
    ];

    /// Position of this axis in canonical `XYZCT` order.
    pub const fn axis(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(Dimension::X),
            'Y' => Some(Dimension::Y),
            'Z' => Some(Dimension::Z),
            'C' => Some(Dimension::C),
            'T' => Some(Dimension::T),
            _ => None,
        }
    }

    pub const fn as_char(self) -> char {
        match self {
            Dimension::X => 'X',
            Dimension::Y => 'Y',
            Dimension::Z => 'Z',
            Dimension::C => 'C',
            Dimension::T => 'T',
        }
    }
}

/// Per-axis extent in voxels (X/Y/Z), channels (C) and timepoints (T).
/// Every component is at least one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Size5D([usize; 5]);

impl Size5D {
    pub fn new(x: usize, y: usize, z: usize, c: usize, t: usize) -> Result<Self> {
        Self::from_array([x, y, z, c, t])
    }

    pub fn from_array(dims: [usize; 5]) -> Result<Self> {
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidLayout(format!(
                "size along {} must be at least 1",
                Dimension::ALL[axis].as_char()
            )));
        }
        Ok(Self(dims))
    }

    pub const fn as_array(&self) -> [usize; 5] {
        self.0
    }

    pub fn get(&self, dim: Dimension) -> usize {
        self.0[dim.axis()]
    }

    pub fn xyz(&self) -> [usize; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    /// Product over all five axes.
    pub fn volume(&self) -> u64 {
        self.0.iter().map(|&d| d as u64).product()
    }
}

impl Index<Dimension> for Size5D {
    type Output = usize;

    fn index(&self, dim: Dimension) -> &usize {
        &self.0[dim.axis()]
    }
}

impl fmt::Display for Size5D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z, c, t] = self.0;
        write!(f, "{x}x{y}x{z}x{c}x{t}")
    }
}

/// Memory order of a block: the first entry varies fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DimensionSequence5D([Dimension; 5]);

impl DimensionSequence5D {
    pub const XYZCT: Self = Self([
        Dimension::X,
        Dimension::Y,
        Dimension::Z,
        Dimension::C,
        Dimension::T,
    ]);

    pub fn new(order: [Dimension; 5]) -> Result<Self> {
        let mut seen = [false; 5];
        for d in order {
            if std::mem::replace(&mut seen[d.axis()], true) {
                return Err(Error::InvalidLayout(format!(
                    "dimension sequence repeats {}",
                    d.as_char()
                )));
            }
        }
        Ok(Self(order))
    }

    pub const fn order(&self) -> [Dimension; 5] {
        self.0
    }

    /// Element strides per canonical axis for a block of `block_size`
    /// stored in this order.
    pub fn strides(&self, block_size: &Size5D) -> [usize; 5] {
        let mut strides = [0usize; 5];
        let mut step = 1usize;
        for d in self.0 {
            strides[d.axis()] = step;
            step *= block_size.get(d);
        }
        strides
    }
}

impl Default for DimensionSequence5D {
    fn default() -> Self {
        Self::XYZCT
    }
}

impl FromStr for DimensionSequence5D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims: Vec<Dimension> = s
            .chars()
            .map(|c| {
                Dimension::from_char(c).ok_or_else(|| {
                    Error::InvalidLayout(format!("unknown dimension '{c}' in \"{s}\""))
                })
            })
            .collect::<Result<_>>()?;
        let order: [Dimension; 5] = dims.try_into().map_err(|_| {
            Error::InvalidLayout(format!("dimension sequence \"{s}\" must have 5 entries"))
        })?;
        Self::new(order)
    }
}

impl fmt::Display for DimensionSequence5D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|d| write!(f, "{}", d.as_char()))
    }
}

/// Index of one block along each axis, canonical order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIndex5D(pub [usize; 5]);

impl BlockIndex5D {
    pub const fn new(x: usize, y: usize, z: usize, c: usize, t: usize) -> Self {
        Self([x, y, z, c, t])
    }

    pub fn get(&self, dim: Dimension) -> usize {
        self.0[dim.axis()]
    }
}

impl fmt::Display for BlockIndex5D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z, c, t] = self.0;
        write!(f, "(x={x}, y={y}, z={z}, c={c}, t={t})")
    }
}

/// Voxel data type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DataType {
    U8,
    U16,
    U32,
    F32,
}

impl DataType {
    pub const fn bytes_per_element(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::U32 | DataType::F32 => 4,
        }
    }

    /// Code stored in the container header.
    pub const fn code(self) -> u32 {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::U32 => 3,
            DataType::F32 => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DataType::U8),
            2 => Some(DataType::U16),
            3 => Some(DataType::U32),
            4 => Some(DataType::F32),
            _ => None,
        }
    }

    /// Largest representable value, used as the default display maximum.
    pub fn max_value(self) -> f64 {
        match self {
            DataType::U8 => u8::MAX as f64,
            DataType::U16 => u16::MAX as f64,
            DataType::U32 => u32::MAX as f64,
            DataType::F32 => 1.0,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::U8 => "u8",
            DataType::U16 => "u16",
            DataType::U32 => "u32",
            DataType::F32 => "f32",
        })
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u8" => Ok(DataType::U8),
            "u16" => Ok(DataType::U16),
            "u32" => Ok(DataType::U32),
            "f32" => Ok(DataType::F32),
            other => Err(Error::InvalidLayout(format!("unknown data type \"{other}\""))),
        }
    }
}

/// A voxel type with a fixed little-endian byte representation.
pub trait Element: Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static {
    const DATA_TYPE: DataType;

    fn read_le(bytes: &[u8]) -> Self;
    fn write_le(self, out: &mut [u8]);
}

macro_rules! impl_element {
    ($t:ty, $dt:expr) => {
        impl Element for $t {
            const DATA_TYPE: DataType = $dt;

            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes[..std::mem::size_of::<$t>()].try_into().unwrap())
            }

            #[inline]
            fn write_le(self, out: &mut [u8]) {
                out[..std::mem::size_of::<$t>()].copy_from_slice(&self.to_le_bytes());
            }
        }
    };
}

impl_element!(u8, DataType::U8);
impl_element!(u16, DataType::U16);
impl_element!(u32, DataType::U32);
impl_element!(f32, DataType::F32);

/// Encode a typed slice as little-endian bytes.
pub fn to_le_bytes<T: Element>(values: &[T]) -> Vec<u8> {
    let size = T::DATA_TYPE.bytes_per_element();
    let mut out = vec![0u8; values.len() * size];
    for (v, chunk) in values.iter().zip(out.chunks_exact_mut(size)) {
        v.write_le(chunk);
    }
    out
}

/// Decode little-endian bytes into typed values. Trailing partial elements
/// are ignored.
pub fn from_le_bytes<T: Element>(bytes: &[u8]) -> Vec<T> {
    bytes
        .chunks_exact(T::DATA_TYPE.bytes_per_element())
        .map(T::read_le)
        .collect()
}

/// Physical bounding box of the image: from the start of the first voxel
/// to the end of the last one, conventionally in micrometers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageExtent {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ImageExtent {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let extent = Self { min, max };
        extent.validate()?;
        Ok(extent)
    }

    pub fn validate(&self) -> Result<()> {
        // NaN fails the comparison as well.
        if (0..3).all(|d| self.max[d] > self.min[d]) {
            Ok(())
        } else {
            Err(Error::InvalidExtent)
        }
    }

    /// One unit per voxel, starting at the origin.
    pub fn unit(image_size: &Size5D) -> Self {
        let [x, y, z] = image_size.xyz();
        Self {
            min: [0.0; 3],
            max: [x as f64, y as f64, z as f64],
        }
    }
}

/// Physical size of one voxel along X, Y and Z.
pub fn voxel_size(extent: &ImageExtent, image_size: &Size5D) -> [f64; 3] {
    let size = image_size.xyz();
    std::array::from_fn(|d| (extent.max[d] - extent.min[d]) / size[d] as f64)
}

/// Number of blocks needed along each axis to cover the image.
pub fn block_count(image_size: &Size5D, block_size: &Size5D) -> Size5D {
    let (s, b) = (image_size.as_array(), block_size.as_array());
    Size5D(std::array::from_fn(|d| s[d].div_ceil(b[d])))
}

/// Element offset of `position` inside one block laid out in `sequence`
/// order.
pub fn linear_offset(
    position: [usize; 5],
    block_size: &Size5D,
    sequence: &DimensionSequence5D,
) -> Result<usize> {
    let size = block_size.as_array();
    if position.iter().zip(size).any(|(&p, s)| p >= s) {
        return Err(Error::PositionOutOfRange { position, size });
    }
    let strides = sequence.strides(block_size);
    Ok(position.iter().zip(strides).map(|(&p, s)| p * s).sum())
}

/// Inverse of [`linear_offset`].
pub fn delinearize(
    offset: usize,
    block_size: &Size5D,
    sequence: &DimensionSequence5D,
) -> Result<[usize; 5]> {
    let size = block_size.as_array();
    let total: usize = size.iter().product();
    if offset >= total {
        return Err(Error::PositionOutOfRange {
            position: [offset, 0, 0, 0, 0],
            size,
        });
    }
    let mut position = [0usize; 5];
    let mut rest = offset;
    for d in sequence.order() {
        let extent = block_size.get(d);
        position[d.axis()] = rest % extent;
        rest /= extent;
    }
    Ok(position)
}

/// Default internal chunk geometry; exactly 1 MiB for 16-bit data.
pub const DEFAULT_INTERNAL_BLOCK: [usize; 3] = [256, 256, 8];

/// Immutable description of an image and the block geometry used to stream
/// and store it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageLayout {
    pub image_size: Size5D,
    pub data_type: DataType,
    pub input_block_size: Size5D,
    pub input_sequence: DimensionSequence5D,
    pub internal_block_size: [usize; 3],
}

impl ImageLayout {
    pub fn new(
        image_size: Size5D,
        data_type: DataType,
        input_block_size: Size5D,
        input_sequence: DimensionSequence5D,
    ) -> Self {
        Self {
            image_size,
            data_type,
            input_block_size,
            input_sequence,
            internal_block_size: DEFAULT_INTERNAL_BLOCK,
        }
    }

    pub fn with_internal_block(mut self, internal_block_size: [usize; 3]) -> Self {
        self.internal_block_size = internal_block_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.internal_block_size.contains(&0) {
            return Err(Error::InvalidLayout(
                "internal block size must be at least 1 on every axis".into(),
            ));
        }
        if self.internal_block_bytes() > u32::MAX as usize {
            return Err(Error::InvalidLayout(
                "internal block must be smaller than 4 GiB".into(),
            ));
        }
        Size5D::from_array(self.image_size.as_array())?;
        Size5D::from_array(self.input_block_size.as_array())?;
        Ok(())
    }

    pub fn element_size(&self) -> usize {
        self.data_type.bytes_per_element()
    }

    pub fn internal_block_voxels(&self) -> usize {
        self.internal_block_size.iter().product()
    }

    pub fn internal_block_bytes(&self) -> usize {
        self.internal_block_voxels() * self.element_size()
    }

    pub fn input_block_bytes(&self) -> usize {
        self.input_block_size.volume() as usize * self.element_size()
    }

    pub fn input_block_grid(&self) -> Size5D {
        block_count(&self.image_size, &self.input_block_size)
    }

    pub fn image_bytes(&self) -> u64 {
        self.image_size.volume() * self.element_size() as u64
    }
}

/// Address of one internal chunk: pyramid level, timepoint, channel and the
/// chunk grid position in Z, Y and X. The derived ordering is the index order
/// of the container (lexicographic in `level, t, c, z, y, x`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkKey {
    pub level: usize,
    pub t: usize,
    pub c: usize,
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl ChunkKey {
    pub const fn new(level: usize, t: usize, c: usize, [x, y, z]: [usize; 3]) -> Self {
        Self { level, t, c, z, y, x }
    }

    pub const fn xyz(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }
}

impl fmt::Display for ChunkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "level {} (t={}, c={}, z={}, y={}, x={})",
            self.level, self.t, self.c, self.z, self.y, self.x
        )
    }
}
