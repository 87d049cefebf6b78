mod common;

use bwmr::codec::CompressionSpec;
use bwmr::ingest::WriterOptions;
use bwmr::model::{ChunkKey, DataType, ImageLayout, Size5D};
use bwmr::reader::ImageHandle;
use bwmr::synthetic::{Generator, SyntheticImage};
use common::{decode_f64, oracle_levels, read_level_f64, shuffled_blocks, write_image};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn options(compression: CompressionSpec, threads: usize) -> WriterOptions {
    WriterOptions { thread_count: threads, compression, ..WriterOptions::default() }
}

#[test]
fn every_data_type_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let size = Size5D::new(37, 29, 11, 2, 2).unwrap();
    for data_type in [DataType::U8, DataType::U16, DataType::U32, DataType::F32] {
        let layout = ImageLayout::new(size, data_type, Size5D::new(10, 7, 3, 1, 1).unwrap(), "YXZTC".parse().unwrap())
            .with_internal_block([8, 8, 4]);
        let image = SyntheticImage::new(Generator::SmoothNoise, 9, size);
        let path = dir.path().join(format!("{data_type}.bwmr"));
        let order = shuffled_blocks(&layout, &mut rng);
        write_image(&path, &image, &layout, options(CompressionSpec::SHUFFLE_LZ4, 3), &order);

        let handle = ImageHandle::open(&path).unwrap();
        assert_eq!(handle.data_type(), data_type);
        for t in 0..2 {
            for c in 0..2 {
                let source = decode_f64(&image.volume(data_type, c, t), data_type);
                let expected = oracle_levels(source, [37, 29, 11], [8, 8, 4], data_type);
                assert_eq!(handle.plan().level_count(), expected.len());
                for (k, level) in expected.iter().enumerate() {
                    assert_eq!(&read_level_f64(&handle, k, c, t), level, "{data_type} level {k} c{c} t{t}");
                }
            }
        }
    }
}

#[test]
fn block_order_never_changes_content() {
    let dir = tempfile::tempdir().unwrap();
    let size = Size5D::new(45, 33, 13, 2, 1).unwrap();
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(9, 11, 2, 1, 1).unwrap(), "XYZCT".parse().unwrap())
        .with_internal_block([16, 16, 4]);
    let image = SyntheticImage::new(Generator::SmoothNoise, 4, size);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut reference: Option<Vec<(ChunkKey, Vec<u8>)>> = None;
    let mut peaks = Vec::new();
    for run in 0..4 {
        let path = dir.path().join(format!("run{run}.bwmr"));
        let order = shuffled_blocks(&layout, &mut rng);
        let summary = write_image(&path, &image, &layout, options(CompressionSpec::default(), 2), &order);
        peaks.push(summary.peak_memory_bytes);
        let handle = ImageHandle::open(&path).unwrap();
        let chunks: Vec<_> = handle.chunks().map(|(k, _)| (k, handle.read_chunk(&k).unwrap())).collect();
        match &reference {
            None => reference = Some(chunks),
            Some(r) => assert!(r == &chunks, "run {run} differs"),
        }
    }
    assert!(peaks.iter().all(|&p| p > 0));
}

#[test]
fn force_z1_stores_single_planes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z1.bwmr");
    let size = Size5D::new(40, 30, 9, 1, 1).unwrap();
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(40, 30, 1, 1, 1).unwrap(), "XYZCT".parse().unwrap())
        .with_internal_block([16, 16, 4]);
    let image = SyntheticImage::new(Generator::Ramp, 0, size);
    let order = shuffled_blocks(&layout, &mut ChaCha8Rng::seed_from_u64(5));
    let opts = WriterOptions { force_block_z1: true, ..options(CompressionSpec::LZ4, 2) };
    write_image(&path, &image, &layout, opts, &order);
    let handle = ImageHandle::open(&path).unwrap();
    assert_eq!(handle.plan().block_size(), [16, 16, 1]);
    let source = decode_f64(&image.volume(DataType::U16, 0, 0), DataType::U16);
    let expected = oracle_levels(source, [40, 30, 9], [16, 16, 1], DataType::U16);
    for (k, level) in expected.iter().enumerate() {
        assert_eq!(&read_level_f64(&handle, k, 0, 0), level, "level {k}");
    }
}

#[test]
fn every_codec_round_trips_level0() {
    let dir = tempfile::tempdir().unwrap();
    let size = Size5D::new(50, 40, 10, 1, 2).unwrap();
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(50, 40, 1, 1, 1).unwrap(), "XYZCT".parse().unwrap())
        .with_internal_block([32, 32, 4]);
    let image = SyntheticImage::new(Generator::SmoothNoise, 1, size);
    let order = shuffled_blocks(&layout, &mut ChaCha8Rng::seed_from_u64(8));
    for spec in ["none", "gzip:1", "gzip:9", "lz4", "shuffle+none", "shuffle+gzip:2", "shuffle+lz4"] {
        let path = dir.path().join("codec.bwmr");
        write_image(&path, &image, &layout, options(spec.parse().unwrap(), 2), &order);
        let handle = ImageHandle::open(&path).unwrap();
        handle.verify_chunks().unwrap();
        for t in 0..2 {
            let got: Vec<u16> = handle.read_level(0, 0, t).unwrap();
            assert_eq!(bwmr::model::to_le_bytes(&got), image.volume(DataType::U16, 0, t), "{spec}");
        }
    }
}
