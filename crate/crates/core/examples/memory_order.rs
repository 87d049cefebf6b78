//! Peak chunk memory depends on the order blocks arrive in. Channel-major
//! orders keep every channel's chunks partly filled at once.
//!
//! cargo run --release --example memory_order

use bwmr::cli::{stream_to_file, VoxelSource};
use bwmr::codec::CompressionSpec;
use bwmr::ingest::WriterOptions;
use bwmr::model::{DataType, ImageExtent, ImageLayout, Size5D};
use bwmr::synthetic::{Generator, SyntheticImage};

fn main() -> bwmr::error::Result<()> {
    let dir = std::env::temp_dir();
    let path = dir.join("memory_order.bwmr");
    let block = Size5D::new(128, 128, 1, 1, 1)?;
    println!("{:<8} {:>4} {:>10}", "order", "T", "peak MB");
    for (order, t) in [("XYZCT", 1), ("XYCZT", 1), ("XYZCT", 4), ("XYCZT", 4)] {
        let size = Size5D::new(512, 512, 64, 3, t)?;
        let layout = ImageLayout::new(size, DataType::U16, block, order.parse()?);
        let options = WriterOptions { compression: CompressionSpec::LZ4, ..WriterOptions::default() };
        let mut source = VoxelSource::Synthetic(SyntheticImage::new(Generator::Ramp, 0, size));
        let summary = stream_to_file(&mut source, layout, ImageExtent::unit(&size), options, &path)?;
        println!("{order:<8} {t:>4} {:>10.2}", summary.peak_memory_bytes as f64 / (1024.0 * 1024.0));
    }
    std::fs::remove_file(path)?;
    Ok(())
}
