//! The backend seam plus the reference `.bwmr` container.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! [Header][chunk payloads...][Index][Metadata][FooterTail]
//!
//! Header      "BWMRIMG1", version u32, data type u32, image size 5 x u64,
//!             internal block 3 x u64, level count u32, level sizes n x 3 x u64,
//!             extent 6 x f64 (min xyz, max xyz)
//! Index       per level, chunks ordered by (t, c, z, y, x); 32-byte records:
//!             offset u64, compressed length u64, raw length u32,
//!             checksum u32, codec code u32, reserved u32
//! Metadata    section count u32, sections (name, param count u32, params),
//!             then one color record per channel (RGBA + range, 6 x f32) and
//!             one timestamp per timepoint; strings are u32-length-prefixed UTF-8
//! FooterTail  index offset u64, metadata offset u64, "BWMREND1"
//! ```

use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::codec::{ChunkSink, CompressedChunk};
use crate::error::{Error, Result};
use crate::model::{ChunkKey, DataType, ImageExtent, ImageLayout, Size5D};
use crate::pyramid::PyramidPlan;

pub const HEADER_MAGIC: &[u8; 8] = b"BWMRIMG1";
pub const FOOTER_MAGIC: &[u8; 8] = b"BWMREND1";
pub const FORMAT_VERSION: u32 = 1;
pub const CHUNK_RECORD_SIZE: usize = 32;
pub const FOOTER_SIZE: usize = 24;
pub const FILE_EXTENSION: &str = "bwmr";

/// Index entry for one stored chunk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChunkRecord {
    pub offset: u64,
    pub compressed_length: u64,
    pub raw_length: u32,
    pub checksum: u32,
    pub codec_code: u32,
}

impl ChunkRecord {
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.offset.to_le_bytes());
        out.extend_from_slice(&self.compressed_length.to_le_bytes());
        out.extend_from_slice(&self.raw_length.to_le_bytes());
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out.extend_from_slice(&self.codec_code.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
    }

    pub fn decode(bytes: &[u8; CHUNK_RECORD_SIZE]) -> Self {
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        Self {
            offset: u64_at(0),
            compressed_length: u64_at(8),
            raw_length: u32_at(16),
            checksum: u32_at(20),
            codec_code: u32_at(24),
        }
    }
}

/// Free-form metadata: named sections of named text parameters, in
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Parameters {
    sections: IndexMap<String, IndexMap<String, String>>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Set a parameter, replacing an existing value in place.
    pub fn set(&mut self, section: impl Into<String>, name: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.sections
            .entry(section.into())
            .or_default()
            .insert(name.into(), value.into());
        self
    }

    pub fn get(&self, section: &str, name: &str) -> Option<&str> {
        self.sections.get(section)?.get(name).map(String::as_str)
    }

    pub fn sections(&self) -> impl Iterator<Item = (&str, &IndexMap<String, String>)> {
        self.sections.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (section, params) in &self.sections {
            if section.is_empty() {
                return Err(Error::InvalidMetadata("empty section name".into()));
            }
            if params.keys().any(String::is_empty) {
                return Err(Error::InvalidMetadata(format!(
                    "empty parameter name in section \"{section}\""
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelColorInfo {
    /// RGBA, each in `[0, 1]`.
    pub color: [f32; 4],
    /// Display range.
    pub range: [f32; 2],
}

impl ChannelColorInfo {
    pub fn default_for(data_type: DataType) -> Self {
        Self {
            color: [1.0; 4],
            range: [0.0, data_type.max_value() as f32],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TimePointInfo {
    pub timestamp: String,
}

impl TimePointInfo {
    pub fn new(timestamp: impl Into<String>) -> Self {
        Self {
            timestamp: timestamp.into(),
        }
    }
}

/// Everything written by `finish` besides voxel data.
#[derive(Clone, Debug, PartialEq)]
pub struct Metadata {
    pub extent: ImageExtent,
    pub parameters: Parameters,
    pub time_points: Vec<TimePointInfo>,
    pub channel_colors: Vec<ChannelColorInfo>,
}

impl Metadata {
    pub(crate) fn validate(&self, image_size: &Size5D) -> Result<()> {
        self.extent.validate()?;
        self.parameters.validate()?;
        let [_, _, _, c, t] = image_size.as_array();
        if self.channel_colors.len() != c {
            return Err(Error::InvalidMetadata(format!(
                "{} color records for {c} channels",
                self.channel_colors.len()
            )));
        }
        if self.time_points.len() != t {
            return Err(Error::InvalidMetadata(format!(
                "{} timepoint records for {t} timepoints",
                self.time_points.len()
            )));
        }
        if self.channel_colors.iter().any(|c| c.color.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::InvalidMetadata("color components must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Serialized metadata block. Channel and timepoint counts are implied by
    /// the header.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_u32(&mut out, self.parameters.sections.len() as u32);
        for (section, params) in &self.parameters.sections {
            put_str(&mut out, section);
            put_u32(&mut out, params.len() as u32);
            for (name, value) in params {
                put_str(&mut out, name);
                put_str(&mut out, value);
            }
        }
        for info in &self.channel_colors {
            for v in info.color.iter().chain(&info.range) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for tp in &self.time_points {
            put_str(&mut out, &tp.timestamp);
        }
        out
    }

    pub fn decode(bytes: &[u8], extent: ImageExtent, image_size: &Size5D) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let mut parameters = Parameters::new();
        for _ in 0..r.u32()? {
            let section = r.string()?;
            let count = r.u32()?;
            let entry = parameters.sections.entry(section.clone()).or_default();
            for _ in 0..count {
                let name = r.string()?;
                let value = r.string()?;
                if entry.insert(name.clone(), value).is_some() {
                    return Err(Error::Malformed(format!("duplicate parameter {section}/{name}")));
                }
            }
        }
        let [_, _, _, c, t] = image_size.as_array();
        let mut channel_colors = Vec::with_capacity(c);
        for _ in 0..c {
            let mut v = [0f32; 6];
            for slot in &mut v {
                *slot = r.f32()?;
            }
            channel_colors.push(ChannelColorInfo {
                color: [v[0], v[1], v[2], v[3]],
                range: [v[4], v[5]],
            });
        }
        let time_points = (0..t)
            .map(|_| r.string().map(TimePointInfo::new))
            .collect::<Result<_>>()?;
        if !r.is_empty() {
            return Err(Error::Malformed("trailing bytes after metadata".into()));
        }
        Ok(Self {
            extent,
            parameters,
            time_points,
            channel_colors,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Bounds-checked little-endian cursor.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Malformed("size exceeds address space".into()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Malformed("string is not UTF-8".into()))
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// The fixed part at the start of every file.
#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub data_type: DataType,
    pub image_size: Size5D,
    pub internal_block: [usize; 3],
    pub level_sizes: Vec<[usize; 3]>,
    pub extent: ImageExtent,
}

impl ContainerHeader {
    pub fn new(layout: &ImageLayout, plan: &PyramidPlan, extent: ImageExtent) -> Self {
        Self {
            data_type: layout.data_type,
            image_size: layout.image_size,
            internal_block: plan.block_size(),
            level_sizes: plan.levels().iter().map(|l| l.size).collect(),
            extent,
        }
    }

    pub fn encoded_len(&self) -> usize {
        8 + 4 + 4 + 5 * 8 + 3 * 8 + 4 + self.level_sizes.len() * 24 + 6 * 8
    }

    fn extent_offset(&self) -> usize {
        self.encoded_len() - 6 * 8
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(HEADER_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.data_type.code());
        for d in self.image_size.as_array() {
            put_u64(&mut out, d as u64);
        }
        for d in self.internal_block {
            put_u64(&mut out, d as u64);
        }
        put_u32(&mut out, self.level_sizes.len() as u32);
        for size in &self.level_sizes {
            for d in size {
                put_u64(&mut out, *d as u64);
            }
        }
        out.extend_from_slice(&encode_extent(&self.extent));
        out
    }

    /// Parse a header from the start of `bytes`; returns the header and its
    /// encoded length.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 8 || &bytes[..8] != HEADER_MAGIC {
            return Err(Error::BadMagic);
        }
        let mut r = ByteReader::new(&bytes[8..]);
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let code = r.u32()?;
        let data_type = DataType::from_code(code)
            .ok_or_else(|| Error::Malformed(format!("unknown data type code {code}")))?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.usize()?;
        }
        let image_size = Size5D::from_array(dims).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut internal_block = [0usize; 3];
        for d in &mut internal_block {
            *d = r.usize()?;
        }
        let level_count = r.u32()? as usize;
        if level_count == 0 || level_count > 64 {
            return Err(Error::Malformed(format!("implausible level count {level_count}")));
        }
        let mut level_sizes = Vec::with_capacity(level_count);
        for _ in 0..level_count {
            let mut size = [0usize; 3];
            for d in &mut size {
                *d = r.usize()?;
            }
            level_sizes.push(size);
        }
        let mut v = [0f64; 6];
        for slot in &mut v {
            *slot = r.f64()?;
        }
        let extent = ImageExtent {
            min: [v[0], v[1], v[2]],
            max: [v[3], v[4], v[5]],
        };
        let header = Self {
            data_type,
            image_size,
            internal_block,
            level_sizes,
            extent,
        };
        let len = 8 + r.position();
        debug_assert_eq!(len, header.encoded_len());
        Ok((header, len))
    }

    pub fn plan(&self) -> Result<PyramidPlan> {
        if self.level_sizes[0] != self.image_size.xyz() {
            return Err(Error::Malformed("level 0 does not match the image size".into()));
        }
        PyramidPlan::from_level_sizes(&self.level_sizes, self.internal_block)
    }
}

fn encode_extent(extent: &ImageExtent) -> Vec<u8> {
    extent
        .min
        .iter()
        .chain(&extent.max)
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

/// Position of each chunk in the index of a file with this plan and C/T
/// counts.
#[derive(Clone, Debug)]
pub struct ChunkGrid {
    channels: usize,
    timepoints: usize,
    grids: Vec<[usize; 3]>,
    level_base: Vec<usize>,
    total: usize,
}

impl ChunkGrid {
    pub fn new(plan: &PyramidPlan, channels: usize, timepoints: usize) -> Self {
        let grids: Vec<[usize; 3]> = plan.levels().iter().map(|l| l.chunk_grid).collect();
        let mut level_base = Vec::with_capacity(grids.len());
        let mut total = 0;
        for g in &grids {
            level_base.push(total);
            total += channels * timepoints * g.iter().product::<usize>();
        }
        Self {
            channels,
            timepoints,
            grids,
            level_base,
            total,
        }
    }

    /// Total chunks over all levels, channels and timepoints.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn slot(&self, key: &ChunkKey) -> Option<usize> {
        let g = self.grids.get(key.level)?;
        if key.t >= self.timepoints || key.c >= self.channels || key.x >= g[0] || key.y >= g[1] || key.z >= g[2] {
            return None;
        }
        let within = (((key.t * self.channels + key.c) * g[2] + key.z) * g[1] + key.y) * g[0] + key.x;
        Some(self.level_base[key.level] + within)
    }

    pub fn key(&self, slot: usize) -> Option<ChunkKey> {
        if slot >= self.total {
            return None;
        }
        let level = self.level_base.partition_point(|&b| b <= slot) - 1;
        let g = self.grids[level];
        let mut rest = slot - self.level_base[level];
        let x = rest % g[0];
        rest /= g[0];
        let y = rest % g[1];
        rest /= g[1];
        let z = rest % g[2];
        rest /= g[2];
        let c = rest % self.channels;
        let t = rest / self.channels;
        Some(ChunkKey::new(level, t, c, [x, y, z]))
    }
}

/// Persists compressed chunks, metadata and the index of one file.
///
/// `write_chunk` accepts chunks in any order; implementations decide where
/// payloads live. `finalize` is called exactly once, after
/// `write_metadata`.
pub trait BackendWriter: Send {
    fn write_chunk(&mut self, chunk: CompressedChunk) -> Result<()>;
    fn write_metadata(&mut self, metadata: &Metadata) -> Result<()>;
    fn finalize(&mut self) -> Result<()>;

    /// Bytes the backend has written so far.
    fn bytes_written(&self) -> u64;
}

/// Creates a [`BackendWriter`] for a new file.
pub trait BackendFactory: Send + Sync {
    fn open(
        &self,
        path: &Path,
        layout: &ImageLayout,
        plan: &PyramidPlan,
        extent: &ImageExtent,
    ) -> Result<Box<dyn BackendWriter>>;
}

impl ChunkSink for Box<dyn BackendWriter> {
    fn accept(&mut self, chunk: CompressedChunk) -> Result<()> {
        self.write_chunk(chunk)
    }
}

/// Factory for the reference `.bwmr` container.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceBackend;

impl BackendFactory for ReferenceBackend {
    fn open(
        &self,
        path: &Path,
        layout: &ImageLayout,
        plan: &PyramidPlan,
        extent: &ImageExtent,
    ) -> Result<Box<dyn BackendWriter>> {
        Ok(Box::new(open_reference(path, layout, plan, extent)?))
    }
}

/// Writer for the reference container. Payloads are appended in arrival
/// order; the index records where each chunk landed.
pub struct ReferenceWriter {
    file: BufWriter<File>,
    header: ContainerHeader,
    grid: ChunkGrid,
    records: Vec<Option<ChunkRecord>>,
    position: u64,
    metadata: Option<Vec<u8>>,
    finalized: bool,
}

/// Create `path` and write the header.
pub fn open_reference(
    path: &Path,
    layout: &ImageLayout,
    plan: &PyramidPlan,
    extent: &ImageExtent,
) -> Result<ReferenceWriter> {
    layout.validate()?;
    extent.validate()?;
    let header = ContainerHeader::new(layout, plan, *extent);
    let mut file = BufWriter::with_capacity(1 << 20, File::create(path)?);
    let bytes = header.encode();
    file.write_all(&bytes)?;
    let [_, _, _, c, t] = layout.image_size.as_array();
    let grid = ChunkGrid::new(plan, c, t);
    Ok(ReferenceWriter {
        file,
        records: vec![None; grid.len()],
        grid,
        header,
        position: bytes.len() as u64,
        metadata: None,
        finalized: false,
    })
}

impl ReferenceWriter {
    pub fn header(&self) -> &ContainerHeader {
        &self.header
    }

    fn check_open(&self) -> Result<()> {
        if self.finalized {
            Err(Error::WriterFinished)
        } else {
            Ok(())
        }
    }
}

impl BackendWriter for ReferenceWriter {
    fn write_chunk(&mut self, chunk: CompressedChunk) -> Result<()> {
        self.check_open()?;
        let slot = self.grid.slot(&chunk.key).ok_or_else(|| Error::InvalidChunk {
            chunk: chunk.key.to_string(),
        })?;
        if self.records[slot].is_some() {
            return Err(Error::DuplicateChunk {
                chunk: chunk.key.to_string(),
            });
        }
        let raw_length = u32::try_from(chunk.raw_length)
            .map_err(|_| Error::Internal("chunk larger than 4 GiB".into()))?;
        self.file.write_all(&chunk.payload)?;
        self.records[slot] = Some(ChunkRecord {
            offset: self.position,
            compressed_length: chunk.payload.len() as u64,
            raw_length,
            checksum: chunk.checksum,
            codec_code: chunk.codec_code,
        });
        self.position += chunk.payload.len() as u64;
        Ok(())
    }

    /// Serializes the metadata and rewrites the header extent with the one
    /// supplied here.
    fn write_metadata(&mut self, metadata: &Metadata) -> Result<()> {
        self.check_open()?;
        metadata.validate(&self.header.image_size)?;
        if metadata.extent != self.header.extent {
            self.header.extent = metadata.extent;
            self.file
                .seek(SeekFrom::Start(self.header.extent_offset() as u64))?;
            self.file.write_all(&encode_extent(&metadata.extent))?;
            self.file.seek(SeekFrom::Start(self.position))?;
        }
        self.metadata = Some(metadata.encode());
        Ok(())
    }

    fn finalize(&mut self) -> Result<()> {
        self.check_open()?;
        let missing: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.is_none().then_some(i))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingChunks {
                count: missing.len(),
                first: missing
                    .iter()
                    .take(8)
                    .filter_map(|&s| self.grid.key(s))
                    .map(|k| k.to_string())
                    .collect(),
            });
        }
        let metadata = self
            .metadata
            .take()
            .ok_or_else(|| Error::InvalidMetadata("metadata must be written before finalize".into()))?;

        let index_offset = self.position;
        let mut index = Vec::with_capacity(self.records.len() * CHUNK_RECORD_SIZE);
        for record in self.records.iter().flatten() {
            record.encode(&mut index);
        }
        self.file.write_all(&index)?;
        let metadata_offset = index_offset + index.len() as u64;
        self.file.write_all(&metadata)?;
        let mut tail = Vec::with_capacity(FOOTER_SIZE);
        put_u64(&mut tail, index_offset);
        put_u64(&mut tail, metadata_offset);
        tail.extend_from_slice(FOOTER_MAGIC);
        self.file.write_all(&tail)?;
        self.file.flush()?;
        self.position = metadata_offset + (metadata.len() + FOOTER_SIZE) as u64;
        self.finalized = true;
        Ok(())
    }

    fn bytes_written(&self) -> u64 {
        self.position
    }
}

/// Read the whole of a small file region.
pub(crate) fn read_exact_at(file: &File, offset: u64, len: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    #[cfg(unix)]
    {
        use std::os::unix::fs::FileExt;
        file.read_exact_at(&mut buf, offset).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated,
            _ => Error::Io(e),
        })?;
    }
    #[cfg(not(unix))]
    {
        use std::io::Read;
        let mut f = file.try_clone()?;
        f.seek(SeekFrom::Start(offset))?;
        f.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated,
            _ => Error::Io(e),
        })?;
    }
    Ok(buf)
}
