//! Regenerate the small container committed under tests/fixtures. The file
//! format must stay readable, so only rerun this on a deliberate format
//! change.
//!
//! cargo run --example write_fixture

use bwmr::cli::{stream_to_file, VoxelSource};
use bwmr::codec::CompressionSpec;
use bwmr::ingest::WriterOptions;
use bwmr::model::{DataType, ImageExtent, ImageLayout, Size5D};
use bwmr::synthetic::{Generator, SyntheticImage};

fn main() -> bwmr::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ramp_u16.bwmr");
    let size = Size5D::new(20, 12, 6, 2, 1)?;
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(20, 12, 1, 1, 1)?, "XYZCT".parse()?)
        .with_internal_block([8, 8, 4]);
    let options = WriterOptions {
        thread_count: 1,
        compression: CompressionSpec::gzip(2)?.with_shuffle(true),
        ..WriterOptions::default()
    };
    let extent = ImageExtent::new([0.0; 3], [2.0, 1.2, 0.6])?;
    let mut source = VoxelSource::Synthetic(SyntheticImage::new(Generator::Ramp, 0, size));
    let summary = stream_to_file(&mut source, layout, extent, options, path.as_ref())?;
    println!("{summary}");
    Ok(())
}
