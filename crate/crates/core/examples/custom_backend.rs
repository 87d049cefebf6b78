//! Plug a different storage backend into the writer. This one keeps the
//! compressed chunks in memory and reports what it received.
//!
//! cargo run --release --example custom_backend

use std::path::Path;
use std::sync::{Arc, Mutex};

use bwmr::codec::CompressedChunk;
use bwmr::container::{BackendFactory, BackendWriter, Metadata, Parameters};
use bwmr::error::Result;
use bwmr::ingest::{ImageWriter, WriterOptions};
use bwmr::model::{BlockIndex5D, ChunkKey, DataType, ImageExtent, ImageLayout, Size5D};
use bwmr::pyramid::PyramidPlan;

#[derive(Default)]
struct Store {
    chunks: Vec<(ChunkKey, usize)>,
    metadata: Option<Metadata>,
    finalized: bool,
}

struct MemoryBackend(Arc<Mutex<Store>>);

struct MemoryWriter {
    store: Arc<Mutex<Store>>,
    bytes: u64,
}

impl BackendFactory for MemoryBackend {
    fn open(&self, _: &Path, _: &ImageLayout, _: &PyramidPlan, _: &ImageExtent) -> Result<Box<dyn BackendWriter>> {
        Ok(Box::new(MemoryWriter { store: self.0.clone(), bytes: 0 }))
    }
}

impl BackendWriter for MemoryWriter {
    fn write_chunk(&mut self, chunk: CompressedChunk) -> Result<()> {
        self.bytes += chunk.payload.len() as u64;
        self.store.lock().unwrap().chunks.push((chunk.key, chunk.payload.len()));
        Ok(())
    }

    fn write_metadata(&mut self, metadata: &Metadata) -> Result<()> {
        self.store.lock().unwrap().metadata = Some(metadata.clone());
        Ok(())
    }

    fn finalize(&mut self) -> Result<()> {
        self.store.lock().unwrap().finalized = true;
        Ok(())
    }

    fn bytes_written(&self) -> u64 {
        self.bytes
    }
}

fn main() -> Result<()> {
    let store = Arc::new(Mutex::new(Store::default()));
    let size = Size5D::new(300, 200, 20, 2, 1)?;
    let layout = ImageLayout::new(size, DataType::U8, Size5D::new(100, 100, 20, 1, 1)?, "XYZCT".parse()?)
        .with_internal_block([64, 64, 8]);
    let block_len = layout.input_block_bytes();
    let grid = layout.input_block_grid().as_array();
    let extent = ImageExtent::unit(&size);
    let mut writer = ImageWriter::create_with(
        layout,
        extent,
        WriterOptions::default(),
        "unused",
        &MemoryBackend(store.clone()),
        None,
    )?;
    for c in 0..grid[3] {
        for y in 0..grid[1] {
            for x in 0..grid[0] {
                let block = vec![(10 * x + y + 100 * c) as u8; block_len];
                writer.copy_block(&block, BlockIndex5D::new(x, y, 0, c, 0))?;
            }
        }
    }
    let mut parameters = Parameters::new();
    parameters.set("Backend", "Kind", "memory");
    writer.finish(extent, parameters, Vec::new(), Vec::new())?;

    let store = store.lock().unwrap();
    let mut per_level = std::collections::BTreeMap::new();
    for (key, len) in &store.chunks {
        let e = per_level.entry(key.level).or_insert((0, 0));
        e.0 += 1;
        e.1 += len;
    }
    for (level, (count, bytes)) in per_level {
        println!("level {level}: {count} chunks, {bytes} bytes");
    }
    let meta = store.metadata.as_ref().expect("metadata written");
    println!("metadata: Backend.Kind = {:?}, finalized = {}", meta.parameters.get("Backend", "Kind"), store.finalized);
    Ok(())
}
