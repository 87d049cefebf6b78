//! Stream an image plane by plane, the way an acquisition loop would, then
//! read one pyramid level back.
//!
//! cargo run --release --example stream_slices -- [out.bwmr]

use bwmr::container::{ChannelColorInfo, Parameters, TimePointInfo};
use bwmr::ingest::{ImageWriter, WriterOptions};
use bwmr::model::{BlockIndex5D, DataType, ImageExtent, ImageLayout, Size5D};
use bwmr::reader::ImageHandle;

fn main() -> bwmr::error::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "slices.bwmr".into());
    let (sx, sy, sz, sc) = (1024, 1024, 32, 3);
    let size = Size5D::new(sx, sy, sz, sc, 1)?;
    let plane = Size5D::new(sx, sy, 1, 1, 1)?;
    let layout = ImageLayout::new(size, DataType::U16, plane, "XYZCT".parse()?);
    let extent = ImageExtent::new([0.0; 3], [10.0, 10.0, 10.0])?;

    let mut writer = ImageWriter::create_with(
        layout,
        extent,
        WriterOptions::default(),
        &path,
        &bwmr::container::ReferenceBackend,
        Some(Box::new({
            let mut next = 0.25;
            move |p| {
                while p >= next {
                    eprintln!("progress {:.0}%", next * 100.0);
                    next += 0.25;
                }
            }
        })),
    )?;

    let mut slice = vec![0u16; sx * sy];
    for c in 0..sc {
        for z in 0..sz {
            for (i, v) in slice.iter_mut().enumerate() {
                let (x, y) = (i % sx, i / sx);
                *v = (x + y + 40 * z + 1000 * c) as u16;
            }
            writer.copy_block_typed(&slice, BlockIndex5D::new(0, 0, z, c, 0))?;
        }
    }

    let mut parameters = Parameters::new();
    parameters.set("Image", "ImageSizeInMB", "192").set("Image", "Info", "streamed slices");
    let colors = vec![
        ChannelColorInfo { color: [1.0, 0.0, 0.0, 1.0], range: [0.0, 4000.0] },
        ChannelColorInfo { color: [0.0, 1.0, 0.0, 1.0], range: [0.0, 4000.0] },
        ChannelColorInfo { color: [0.0, 0.0, 1.0, 1.0], range: [0.0, 4000.0] },
    ];
    let times = vec![TimePointInfo::new("2026-01-01 12:00:00.000")];
    let summary = writer.finish(extent, parameters, times, colors)?;
    println!("{summary}");

    let handle = ImageHandle::open(&path)?;
    let last = handle.plan().level_count() - 1;
    let coarse: Vec<u16> = handle.read_level(last, 2, 0)?;
    println!(
        "level {last} of channel 2: size {:?}, first voxel {}",
        handle.plan().level(last).size,
        coarse[0]
    );
    Ok(())
}
