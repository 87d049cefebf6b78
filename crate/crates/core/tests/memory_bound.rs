mod common;

use bwmr::codec::CompressionSpec;
use bwmr::ingest::WriterOptions;
use bwmr::model::{DataType, ImageLayout, Size5D};
use bwmr::pyramid::plan_levels;
use bwmr::synthetic::{block_order, Generator, SyntheticImage};
use common::write_image;
use proptest::prelude::*;

/// One XY slab of chunks per level, plus one input block.
fn closed_form_bound(layout: &ImageLayout) -> u64 {
    let block = layout.internal_block_size;
    let plan = plan_levels(layout.image_size.xyz(), block);
    let chunk_bytes = (block.iter().product::<usize>() * layout.element_size()) as u64;
    let slabs: u64 = plan
        .levels()
        .iter()
        .map(|l| (l.size[0].div_ceil(block[0]) * l.size[1].div_ceil(block[1])) as u64 * chunk_bytes)
        .sum();
    slabs + layout.input_block_bytes() as u64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn xyzct_plane_streaming_stays_under_bound(
        sx in 1usize..90, sy in 1usize..90, sz in 1usize..40,
        c in 1usize..3, t in 1usize..3,
        bx in 1usize..90, by in 1usize..90,
        cb in prop::sample::select(vec![[8usize, 8, 4], [16, 16, 2], [32, 16, 8], [4, 4, 4]]),
        u8_type in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let size = Size5D::new(sx, sy, sz, c, t).unwrap();
        let data_type = if u8_type { DataType::U8 } else { DataType::U16 };
        let block = Size5D::new(bx.min(sx), by.min(sy), 1, 1, 1).unwrap();
        let layout = ImageLayout::new(size, data_type, block, "XYZCT".parse().unwrap()).with_internal_block(cb);
        let image = SyntheticImage::new(Generator::Ramp, 0, size);
        let order = block_order(layout.input_block_grid(), layout.input_sequence);
        let opts = WriterOptions { thread_count: 1, compression: CompressionSpec::LZ4, ..WriterOptions::default() };
        let summary = write_image(&dir.path().join("m.bwmr"), &image, &layout, opts, &order);
        prop_assert!(summary.peak_memory_bytes > 0);
        prop_assert!(summary.peak_memory_bytes <= closed_form_bound(&layout),
            "peak {} > bound {}", summary.peak_memory_bytes, closed_form_bound(&layout));
    }
}

#[test]
fn channel_interleaving_costs_memory() {
    let dir = tempfile::tempdir().unwrap();
    let size = Size5D::new(128, 128, 32, 3, 1).unwrap();
    let image = SyntheticImage::new(Generator::Zeros, 0, size);
    let peak = |order: &str| {
        let layout = ImageLayout::new(size, DataType::U16, Size5D::new(64, 64, 1, 1, 1).unwrap(), order.parse().unwrap())
            .with_internal_block([64, 64, 8]);
        let blocks = block_order(layout.input_block_grid(), layout.input_sequence);
        let opts = WriterOptions { thread_count: 1, compression: CompressionSpec::LZ4, ..WriterOptions::default() };
        write_image(&dir.path().join("o.bwmr"), &image, &layout, opts, &blocks).peak_memory_bytes
    };
    let (xyzct, xyczt) = (peak("XYZCT"), peak("XYCZT"));
    assert!(xyczt as f64 >= 2.5 * xyzct as f64, "{xyczt} vs {xyzct}");
}
