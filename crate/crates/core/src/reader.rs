//! Reader for finalized `.bwmr` files: chunk access, region queries and
//! integrity checks.
//!
//! An [`ImageHandle`] is immutable once opened. Chunk reads use positioned
//! I/O, so one handle can serve many threads. Nothing is cached.

use std::fs::File;
use std::ops::Range;
use std::path::Path;

use crate::codec::{decompress_chunk, CompressionSpec};
use crate::container::{
    read_exact_at, ChunkGrid, ChunkRecord, ContainerHeader, Metadata, CHUNK_RECORD_SIZE, FOOTER_MAGIC, FOOTER_SIZE,
};
use crate::error::{Error, Result};
use crate::model::{from_le_bytes, ChunkKey, DataType, Element, ImageExtent, Size5D};
use crate::pyramid::PyramidPlan;

/// Largest header a valid file can have (64 levels).
const MAX_HEADER_LEN: usize = 8 + 4 + 4 + 40 + 24 + 4 + 64 * 24 + 48;

pub struct ImageHandle {
    file: File,
    header: ContainerHeader,
    plan: PyramidPlan,
    grid: ChunkGrid,
    records: Vec<ChunkRecord>,
    metadata: Metadata,
    file_len: u64,
}

impl ImageHandle {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        if file_len < 8 {
            return Err(Error::BadMagic);
        }
        let prefix = read_exact_at(&file, 0, (file_len as usize).min(MAX_HEADER_LEN))?;
        let (header, header_len) = ContainerHeader::decode(&prefix)?;
        let plan = header.plan()?;

        if file_len < (header_len + FOOTER_SIZE) as u64 {
            return Err(Error::Truncated);
        }
        let tail = read_exact_at(&file, file_len - FOOTER_SIZE as u64, FOOTER_SIZE)?;
        if &tail[16..] != FOOTER_MAGIC {
            return Err(Error::Truncated);
        }
        let index_offset = u64::from_le_bytes(tail[..8].try_into().unwrap());
        let metadata_offset = u64::from_le_bytes(tail[8..16].try_into().unwrap());
        let metadata_end = file_len - FOOTER_SIZE as u64;
        if index_offset < header_len as u64 || metadata_offset < index_offset || metadata_offset > metadata_end {
            return Err(Error::Malformed("footer offsets out of order".into()));
        }

        let [_, _, _, c, t] = header.image_size.as_array();
        let grid = ChunkGrid::new(&plan, c, t);
        let index_len = (metadata_offset - index_offset) as usize;
        if index_len != grid.len() * CHUNK_RECORD_SIZE {
            return Err(Error::Malformed(format!(
                "index holds {index_len} bytes, expected {} records",
                grid.len()
            )));
        }
        let index = read_exact_at(&file, index_offset, index_len)?;
        let records: Vec<ChunkRecord> = index
            .chunks_exact(CHUNK_RECORD_SIZE)
            .map(|r| ChunkRecord::decode(r.try_into().unwrap()))
            .collect();
        let raw_length = plan.block_voxels() * header.data_type.bytes_per_element();
        validate_records(&records, header_len as u64, index_offset, raw_length)?;

        let meta_bytes = read_exact_at(&file, metadata_offset, (metadata_end - metadata_offset) as usize)?;
        let metadata = Metadata::decode(&meta_bytes, header.extent, &header.image_size)?;

        Ok(Self {
            file,
            header,
            plan,
            grid,
            records,
            metadata,
            file_len,
        })
    }

    pub fn header(&self) -> &ContainerHeader {
        &self.header
    }

    pub fn plan(&self) -> &PyramidPlan {
        &self.plan
    }

    pub fn data_type(&self) -> DataType {
        self.header.data_type
    }

    pub fn image_size(&self) -> Size5D {
        self.header.image_size
    }

    pub fn extent(&self) -> ImageExtent {
        self.header.extent
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn chunk_count(&self) -> usize {
        self.records.len()
    }

    /// All chunks with their index records, in index order.
    pub fn chunks(&self) -> impl Iterator<Item = (ChunkKey, &ChunkRecord)> + '_ {
        self.records
            .iter()
            .enumerate()
            .map(|(slot, rec)| (self.grid.key(slot).unwrap(), rec))
    }

    pub fn record(&self, key: &ChunkKey) -> Result<&ChunkRecord> {
        self.grid
            .slot(key)
            .map(|s| &self.records[s])
            .ok_or_else(|| Error::InvalidChunk { chunk: key.to_string() })
    }

    /// Decompressed chunk bytes, always the full internal block size.
    /// Voxels outside the level are zero.
    pub fn read_chunk(&self, key: &ChunkKey) -> Result<Vec<u8>> {
        let record = self.record(key)?;
        let payload = read_exact_at(&self.file, record.offset, record.compressed_length as usize)?;
        let spec = CompressionSpec::from_codec_code(record.codec_code)?;
        decompress_chunk(
            &payload,
            &spec,
            self.header.data_type.bytes_per_element(),
            record.raw_length as usize,
            record.checksum,
        )
    }

    pub fn read_chunk_typed<T: Element>(&self, key: &ChunkKey) -> Result<Vec<T>> {
        self.check_type::<T>()?;
        Ok(from_le_bytes(&self.read_chunk(key)?))
    }

    fn check_type<T: Element>(&self) -> Result<()> {
        if T::DATA_TYPE != self.header.data_type {
            return Err(Error::InvalidLayout(format!(
                "requested {} from a {} image",
                T::DATA_TYPE,
                self.header.data_type
            )));
        }
        Ok(())
    }

    /// Chunks of `(level, c, t)` whose voxels intersect the half-open box
    /// `[min, max)`, in index order.
    pub fn query_region(
        &self,
        level: usize,
        min: [usize; 3],
        max: [usize; 3],
        c: usize,
        t: usize,
    ) -> Result<Vec<ChunkKey>> {
        if level >= self.plan.level_count() {
            return Err(Error::InvalidRegion(format!("level {level} does not exist")));
        }
        let [_, _, _, channels, timepoints] = self.header.image_size.as_array();
        if c >= channels || t >= timepoints {
            return Err(Error::InvalidRegion(format!("channel {c} / timepoint {t} out of range")));
        }
        let size = self.plan.level(level).size;
        if (0..3).any(|d| min[d] >= max[d] || max[d] > size[d]) {
            return Err(Error::InvalidRegion(format!(
                "[{min:?}, {max:?}) is empty or exceeds level size {size:?}"
            )));
        }
        let block = self.plan.block_size();
        let span = |d: usize| -> Range<usize> { min[d] / block[d]..(max[d] - 1) / block[d] + 1 };
        let mut keys = Vec::new();
        for z in span(2) {
            for y in span(1) {
                for x in span(0) {
                    keys.push(ChunkKey::new(level, t, c, [x, y, z]));
                }
            }
        }
        Ok(keys)
    }

    /// A whole level of one channel and timepoint as an X-fastest volume.
    pub fn read_level<T: Element>(&self, level: usize, c: usize, t: usize) -> Result<Vec<T>> {
        self.check_type::<T>()?;
        let size = self
            .plan
            .levels()
            .get(level)
            .ok_or_else(|| Error::InvalidRegion(format!("level {level} does not exist")))?
            .size;
        let block = self.plan.block_size();
        let mut out = vec![T::default(); size.iter().product()];
        for key in self.query_region(level, [0; 3], size, c, t)? {
            let chunk: Vec<T> = self.read_chunk_typed(&key)?;
            let region = self.plan.chunk_region(level, key.xyz());
            for z in region[2].clone() {
                for y in region[1].clone() {
                    let src = block[0] * ((y - region[1].start) + block[1] * (z - region[2].start));
                    let dst = region[0].start + size[0] * (y + size[1] * z);
                    let n = region[0].len();
                    out[dst..dst + n].copy_from_slice(&chunk[src..src + n]);
                }
            }
        }
        Ok(out)
    }

    /// Read and verify every chunk; returns the first failure.
    pub fn verify_chunks(&self) -> Result<()> {
        for (key, _) in self.chunks() {
            self.read_chunk(&key)?;
        }
        Ok(())
    }
}

fn validate_records(records: &[ChunkRecord], data_start: u64, data_end: u64, raw_length: usize) -> Result<()> {
    let mut spans: Vec<(u64, u64)> = Vec::with_capacity(records.len());
    for rec in records {
        CompressionSpec::from_codec_code(rec.codec_code)?;
        let end = rec
            .offset
            .checked_add(rec.compressed_length)
            .ok_or_else(|| Error::Malformed("chunk extent overflows".into()))?;
        if rec.offset < data_start || end > data_end {
            return Err(Error::Malformed(format!(
                "chunk at {}..{end} lies outside the payload region",
                rec.offset
            )));
        }
        if rec.raw_length as usize != raw_length {
            return Err(Error::Malformed(format!(
                "chunk raw length {} differs from block size {raw_length}",
                rec.raw_length
            )));
        }
        spans.push((rec.offset, end));
    }
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::Malformed("chunk payloads overlap".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::codec::CompressionSpec;
    use crate::container::Parameters;
    use crate::ingest::{ImageWriter, WriterOptions};
    use crate::model::{BlockIndex5D, DimensionSequence5D, ImageLayout};

    /// 10x7x5, 2 channels, ramp values, chunks of 4x4x2.
    fn write_small(dir: &tempfile::TempDir, spec: CompressionSpec) -> std::path::PathBuf {
        let path = dir.path().join("small.bwmr");
        let size = Size5D::new(10, 7, 5, 2, 1).unwrap();
        let layout = ImageLayout::new(size, DataType::U16, Size5D::new(10, 7, 1, 1, 1).unwrap(), DimensionSequence5D::XYZCT)
            .with_internal_block([4, 4, 2]);
        let options = WriterOptions {
            thread_count: 2,
            compression: spec,
            ..WriterOptions::default()
        };
        let mut w = ImageWriter::create(layout, ImageExtent::unit(&size), options, &path).unwrap();
        for c in 0..2 {
            for z in 0..5 {
                let block: Vec<u16> = (0..70).map(|i| (i + 100 * z + 1000 * c) as u16).collect();
                w.copy_block_typed(&block, BlockIndex5D::new(0, 0, z, c, 0)).unwrap();
            }
        }
        let mut params = Parameters::new();
        params.set("Image", "ImageSizeInMB", "2400");
        w.finish(ImageExtent::new([0.0; 3], [10.0; 3]).unwrap(), params, vec![], vec![]).unwrap();
        path
    }

    #[test]
    fn opens_finished_file_and_reassembles() {
        let dir = tempfile::tempdir().unwrap();
        let h = ImageHandle::open(write_small(&dir, CompressionSpec::SHUFFLE_LZ4)).unwrap();
        assert_eq!(h.metadata().parameters.get("Image", "ImageSizeInMB"), Some("2400"));
        assert_eq!(h.extent().max, [10.0; 3]);
        let vol: Vec<u16> = h.read_level(0, 1, 0).unwrap();
        for z in 0..5 {
            for i in 0..70 {
                assert_eq!(vol[i + 70 * z], (i + 100 * z + 1000) as u16);
            }
        }
        h.verify_chunks().unwrap();
    }

    #[test]
    fn border_chunk_padding_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let h = ImageHandle::open(write_small(&dir, CompressionSpec::default())).unwrap();
        // chunk x=2 covers x 8..10 of 4, y=1 covers y 4..7 of 4, z=2 covers z 4..5 of 2
        let chunk: Vec<u16> = h.read_chunk_typed(&ChunkKey::new(0, 0, 0, [2, 1, 2])).unwrap();
        for z in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    let v = chunk[x + 4 * (y + 4 * z)];
                    if x >= 2 || y >= 3 || z >= 1 {
                        assert_eq!(v, 0, "padding at {x},{y},{z}");
                    } else {
                        assert_ne!(v, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_empty_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_small(&dir, CompressionSpec::LZ4);
        let bytes = std::fs::read(&path).unwrap();

        let empty = dir.path().join("empty.bwmr");
        std::fs::write(&empty, b"").unwrap();
        assert!(matches!(ImageHandle::open(&empty), Err(Error::BadMagic)));

        let cut = dir.path().join("cut.bwmr");
        std::fs::write(&cut, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(ImageHandle::open(&cut), Err(Error::Truncated)));

        std::fs::write(&cut, &bytes[..100]).unwrap();
        assert!(matches!(ImageHandle::open(&cut), Err(Error::Truncated)));

        let mut wrong = bytes.clone();
        wrong[8] = 2;
        std::fs::write(&cut, &wrong).unwrap();
        assert!(matches!(ImageHandle::open(&cut), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn flipped_payload_byte_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_small(&dir, CompressionSpec::default());
        let h = ImageHandle::open(&path).unwrap();
        let (key, rec) = h.chunks().nth(3).unwrap();
        let offset = rec.offset as usize + 5;
        drop(h);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[offset] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        let h = ImageHandle::open(&path).unwrap();
        assert!(matches!(h.read_chunk(&key), Err(Error::ChecksumMismatch { .. })));
        assert!(h.verify_chunks().is_err());
    }

    #[test]
    fn query_region_examples() {
        let dir = tempfile::tempdir().unwrap();
        let h = ImageHandle::open(write_small(&dir, CompressionSpec::NONE)).unwrap();
        let all = h.query_region(0, [0; 3], [10, 7, 5], 0, 0).unwrap();
        assert_eq!(all.len(), 3 * 2 * 3);
        assert_eq!(h.query_region(0, [1, 1, 0], [3, 3, 2], 1, 0).unwrap(), vec![ChunkKey::new(0, 0, 1, [0, 0, 0])]);
        assert!(h.query_region(0, [0; 3], [11, 7, 5], 0, 0).is_err());
        assert!(h.query_region(0, [2, 0, 0], [2, 7, 5], 0, 0).is_err());
        assert!(h.query_region(9, [0; 3], [1; 3], 0, 0).is_err());
        assert!(h.query_region(0, [0; 3], [1; 3], 2, 0).is_err());
    }
}
