//! Find and decode the chunks covering a region of interest at a chosen
//! resolution.
//!
//! cargo run --release --example region_query

use bwmr::cli::{stream_to_file, VoxelSource};
use bwmr::ingest::WriterOptions;
use bwmr::model::{DataType, ImageExtent, ImageLayout, Size5D};
use bwmr::reader::ImageHandle;
use bwmr::synthetic::{Generator, SyntheticImage};

fn main() -> bwmr::error::Result<()> {
    let path = std::env::temp_dir().join("region_query.bwmr");
    let size = Size5D::new(700, 500, 60, 1, 1)?;
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(700, 500, 1, 1, 1)?, "XYZCT".parse()?)
        .with_internal_block([64, 64, 16]);
    let mut source = VoxelSource::Synthetic(SyntheticImage::new(Generator::Ramp, 0, size));
    stream_to_file(&mut source, layout, ImageExtent::unit(&size), WriterOptions::default(), &path)?;

    let handle = ImageHandle::open(&path)?;
    for level in 0..handle.plan().level_count() {
        let info = handle.plan().level(level);
        // the central quarter of the level
        let min = info.size.map(|s| s / 4);
        let max = info.size.map(|s| (3 * s / 4).max(s / 4 + 1));
        let keys = handle.query_region(level, min, max, 0, 0)?;
        let bytes: usize = keys.iter().map(|k| handle.read_chunk(k).map(|d| d.len())).sum::<Result<_, _>>()?;
        println!(
            "level {level} size {:?}: region {min:?}..{max:?} touches {} of {} chunks ({bytes} bytes decoded)",
            info.size,
            keys.len(),
            info.chunk_count()
        );
    }
    std::fs::remove_file(path)?;
    Ok(())
}
