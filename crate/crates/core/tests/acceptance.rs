//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so each line reads as a report.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use bwmr::cli::{cmd_bench, BenchArgs};
use bwmr::codec::CompressionSpec;
use bwmr::container::{FOOTER_MAGIC, HEADER_MAGIC};
use bwmr::error::Error;
use bwmr::ingest::WriterOptions;
use bwmr::model::{to_le_bytes, ChunkKey, DataType, DimensionSequence5D, ImageLayout, Size5D};
use bwmr::reader::ImageHandle;
use bwmr::synthetic::{block_order, Generator, SyntheticImage};
use common::{decode_f64, oracle_levels, read_level_f64, shuffled_blocks, write_image, FIXTURE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn options(compression: CompressionSpec) -> WriterOptions {
    WriterOptions { compression, ..WriterOptions::default() }
}

fn roundtrip_identity() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let size = Size5D::new(128, 128, 32, 2, 2).unwrap();
    let layout = ImageLayout::new(size, DataType::U16, Size5D::new(128, 128, 1, 1, 1).unwrap(), DimensionSequence5D::XYZCT);
    let image = SyntheticImage::new(Generator::SmoothNoise, 1, size);
    let order = block_order(layout.input_block_grid(), layout.input_sequence);
    let mut count = 0;
    for base in ["none", "gzip:1", "gzip:2", "gzip:9", "lz4"] {
        for shuffle in [false, true] {
            let spec = base.parse::<CompressionSpec>().unwrap().with_shuffle(shuffle);
            let path = dir.path().join("rt.bwmr");
            write_image(&path, &image, &layout, options(spec), &order);
            let handle = ImageHandle::open(&path).map_err(|e| format!("{spec}: {e}"))?;
            for t in 0..2 {
                for c in 0..2 {
                    let got: Vec<u16> = handle.read_level(0, c, t).map_err(|e| format!("{spec}: {e}"))?;
                    ensure(to_le_bytes(&got) == image.volume(DataType::U16, c, t), || {
                        format!("{spec}: level 0 of c{c} t{t} differs")
                    })?;
                }
            }
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}, limit 30 s"))?;
    Ok(format!("{count} codec configurations byte-exact in {elapsed:.1?}"))
}

fn pyramid_oracle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let types = [DataType::U8, DataType::U16, DataType::U32, DataType::F32];
    let mut voxels = 0usize;
    for i in 0..10 {
        let xyz: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=40));
        let (c, t) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let size = Size5D::new(xyz[0], xyz[1], xyz[2], c, t).unwrap();
        let data_type = types[rng.gen_range(0..types.len())];
        let internal: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=12));
        let input = Size5D::new(rng.gen_range(1..=xyz[0]), rng.gen_range(1..=xyz[1]), rng.gen_range(1..=xyz[2]), 1, 1).unwrap();
        let sequences = ["XYZCT", "XYCZT", "ZYXCT", "CTXYZ", "YXZTC"];
        let sequence: DimensionSequence5D = sequences[rng.gen_range(0..sequences.len())].parse().unwrap();
        let layout = ImageLayout::new(size, data_type, input, sequence).with_internal_block(internal);
        let image = SyntheticImage::new(Generator::SmoothNoise, i, size);
        let order = shuffled_blocks(&layout, &mut rng);
        let path = dir.path().join(format!("img{i}.bwmr"));
        write_image(&path, &image, &layout, options(CompressionSpec::SHUFFLE_LZ4), &order);
        let handle = ImageHandle::open(&path).map_err(|e| format!("image {i}: {e}"))?;
        for tt in 0..t {
            for cc in 0..c {
                let source = decode_f64(&image.volume(data_type, cc, tt), data_type);
                let expected = oracle_levels(source, xyz, internal, data_type);
                ensure(handle.plan().level_count() == expected.len(), || {
                    format!("image {i} {size}: {} levels, oracle {}", handle.plan().level_count(), expected.len())
                })?;
                for (k, level) in expected.iter().enumerate() {
                    let got = read_level_f64(&handle, k, cc, tt);
                    if let Some(j) = (0..level.len()).find(|&j| got[j] != level[j]) {
                        return Err(format!(
                            "image {i} {size} {data_type} block {internal:?}: level {k} voxel {j} is {}, oracle {}",
                            got[j], level[j]
                        ));
                    }
                    voxels += level.len();
                }
            }
        }
    }
    Ok(format!("10 random images, {voxels} voxels across all levels, zero mismatches"))
}

fn memory_order() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let peak = |order: &str, t: usize| {
        let size = Size5D::new(512, 512, 64, 3, t).unwrap();
        let layout = ImageLayout::new(size, DataType::U16, Size5D::new(128, 128, 1, 1, 1).unwrap(), order.parse().unwrap());
        let image = SyntheticImage::new(Generator::Zeros, 0, size);
        let blocks = block_order(layout.input_block_grid(), layout.input_sequence);
        write_image(&dir.path().join("mem.bwmr"), &image, &layout, options(CompressionSpec::LZ4), &blocks).peak_memory_bytes
    };
    let (xyzct, xyczt, xyzct_t4) = (peak("XYZCT", 1), peak("XYCZT", 1), peak("XYZCT", 4));
    let ratio = xyczt as f64 / xyzct as f64;
    let drift = (xyzct_t4 as f64 - xyzct as f64).abs() / xyzct as f64;
    let mb = |b: u64| b as f64 / (1024.0 * 1024.0);
    ensure(ratio >= 1.8, || format!("XYCZT/XYZCT = {ratio:.2} < 1.8"))?;
    ensure(drift <= 0.05, || format!("T=4 peak differs from T=1 by {:.1}%", drift * 100.0))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:.1?}, limit 60 s"))?;
    Ok(format!(
        "XYZCT {:.1} MB, XYCZT {:.1} MB (ratio {ratio:.2}), XYZCT T=4 {:.1} MB, {elapsed:.1?}",
        mb(xyzct),
        mb(xyczt),
        mb(xyzct_t4)
    ))
}

fn compression_ordering() -> Outcome {
    let names = ["shuffle+gzip:2", "gzip:2", "shuffle+lz4", "lz4"];
    let args = BenchArgs {
        seed: 1,
        methods: names.iter().map(|m| m.parse().unwrap()).collect(),
        threads: vec![1],
        ..BenchArgs::default()
    };
    let report = cmd_bench(&args).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = names.iter().map(|n| report.row(n.parse().unwrap(), 1).unwrap().ratio).collect();
    let line = names.iter().zip(&ratios).map(|(n, r)| format!("{n} {r:.3}")).collect::<Vec<_>>().join(" > ");
    let ordered = ratios.windows(2).all(|w| w[0] > w[1]) && ratios[3] > 1.0;
    ensure(ordered, || format!("ordering violated: {line}"))?;
    Ok(format!("{line} > 1.0"))
}

fn throughput() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = if cores >= 4 { vec![1, 4] } else { vec![cores] };
    let gzip2 = CompressionSpec::default();
    let args = BenchArgs {
        methods: vec![gzip2, CompressionSpec::SHUFFLE_LZ4],
        threads: threads.clone(),
        repeat: 3,
        ..BenchArgs::default()
    };
    let report = cmd_bench(&args).map_err(|e| e.to_string())?;
    let speed = |spec: CompressionSpec, t: usize| report.row(spec, t).unwrap().mb_per_s;
    let mut notes = Vec::new();
    for &t in &threads {
        let (lz4, gz) = (speed(CompressionSpec::SHUFFLE_LZ4, t), speed(gzip2, t));
        ensure(lz4 >= gz, || format!("{t} threads: shuffle+lz4 {lz4:.0} MB/s < gzip2 {gz:.0} MB/s"))?;
        notes.push(format!("{t} threads: shuffle+lz4 {lz4:.0} MB/s >= gzip2 {gz:.0} MB/s"));
    }
    if cores >= 4 {
        let (one, four) = (speed(gzip2, 1), speed(gzip2, 4));
        ensure(four >= 2.0 * one, || format!("gzip2 4 threads {four:.0} MB/s < 2 x {one:.0} MB/s"))?;
        notes.push(format!("gzip2 scaling {:.2}x from 1 to 4 threads", four / one));
    } else {
        notes.push(format!("4-thread scaling SKIPPED: {cores} core(s) available, needs 4"));
    }
    Ok(notes.join("; "))
}

fn format_conformance() -> Outcome {
    let bytes = std::fs::read(FIXTURE).map_err(|e| format!("fixture: {e}"))?;
    ensure(bytes.len() >= 16 && &bytes[..8] == HEADER_MAGIC, || "header magic missing".into())?;
    ensure(&bytes[bytes.len() - 8..] == FOOTER_MAGIC, || "footer magic missing".into())?;
    let handle = ImageHandle::open(FIXTURE).map_err(|e| e.to_string())?;
    handle.verify_chunks().map_err(|e| e.to_string())?;
    let size = handle.image_size();
    ensure(size.as_array() == [20, 12, 6, 2, 1], || format!("fixture size {size}"))?;
    let image = SyntheticImage::new(Generator::Ramp, 0, size);
    for c in 0..2 {
        let source = decode_f64(&image.volume(DataType::U16, c, 0), DataType::U16);
        let expected = oracle_levels(source, size.xyz(), handle.plan().block_size(), DataType::U16);
        for (k, level) in expected.iter().enumerate() {
            ensure(&read_level_f64(&handle, k, c, 0) == level, || format!("fixture level {k} channel {c} differs"))?;
        }
    }
    Ok(format!("{} bytes, both magics present, {} chunks decode to the expected pyramid", bytes.len(), handle.chunk_count()))
}

fn corruption_detection() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let original = std::fs::read(FIXTURE).map_err(|e| format!("fixture: {e}"))?;
    let handle = ImageHandle::open(FIXTURE).map_err(|e| e.to_string())?;
    let chunks: Vec<(ChunkKey, u64, u64)> =
        handle.chunks().map(|(k, r)| (k, r.offset, r.compressed_length)).filter(|c| c.2 > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let path = dir.path().join("flip.bwmr");
    for i in 0..100 {
        let (key, offset, len) = chunks[rng.gen_range(0..chunks.len())];
        let at = (offset + rng.gen_range(0..len)) as usize;
        let mut bytes = original.clone();
        bytes[at] ^= rng.gen_range(1..=255u8);
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let flipped = ImageHandle::open(&path).map_err(|e| format!("flip {i}: open failed: {e}"))?;
        match flipped.read_chunk(&key) {
            Err(Error::ChecksumMismatch { .. }) => {}
            Err(e) => return Err(format!("flip {i} at byte {at}: {e}")),
            Ok(_) => return Err(format!("flip {i} at byte {at}: chunk {key} decoded silently")),
        }
    }
    Ok("100 single-byte payload flips, all reported as checksum mismatch".into())
}

fn region_queries() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("regions.bwmr");
    let size = Size5D::new(70, 50, 30, 2, 2).unwrap();
    let layout = ImageLayout::new(size, DataType::U8, Size5D::new(70, 50, 1, 1, 1).unwrap(), DimensionSequence5D::XYZCT)
        .with_internal_block([16, 12, 5]);
    let image = SyntheticImage::new(Generator::Zeros, 0, size);
    let order = block_order(layout.input_block_grid(), layout.input_sequence);
    write_image(&path, &image, &layout, options(CompressionSpec::LZ4), &order);
    let handle = ImageHandle::open(&path).map_err(|e| e.to_string())?;
    let plan = handle.plan();
    let block = plan.block_size();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut touched = 0;
    for i in 0..200 {
        let level = rng.gen_range(0..plan.level_count());
        let s = plan.level(level).size;
        let (mut min, mut max) = ([0; 3], [0; 3]);
        for d in 0..3 {
            let (a, b) = (rng.gen_range(0..s[d]), rng.gen_range(0..s[d]));
            min[d] = a.min(b);
            max[d] = a.max(b) + 1;
        }
        let (c, t) = (rng.gen_range(0..2), rng.gen_range(0..2));
        let got: BTreeSet<ChunkKey> = handle.query_region(level, min, max, c, t).map_err(|e| e.to_string())?.into_iter().collect();
        let mut expected = BTreeSet::new();
        for z in min[2]..max[2] {
            for y in min[1]..max[1] {
                for x in min[0]..max[0] {
                    expected.insert(ChunkKey::new(level, t, c, [x / block[0], y / block[1], z / block[2]]));
                }
            }
        }
        ensure(got == expected, || format!("region {i} level {level} {min:?}..{max:?}: {} chunks, scan {}", got.len(), expected.len()))?;
        touched += got.len();
    }
    Ok(format!("200 regions across {} levels, {touched} chunk hits, all equal to the voxel scan", plan.level_count()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("round-trip identity", roundtrip_identity),
        ("pyramid oracle", pyramid_oracle),
        ("memory order", memory_order),
        ("compression ordering", compression_ordering),
        ("throughput", throughput),
        ("format conformance", format_conformance),
        ("corruption detection", corruption_detection),
        ("region queries", region_queries),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
