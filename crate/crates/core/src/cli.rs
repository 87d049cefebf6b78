//! Command-line front end: `convert`, `bench`, `inspect` and `verify`.
//!
//! [`run`] parses arguments and writes to caller-supplied streams, so the
//! whole tool can be driven from tests without spawning a process.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::codec::{Algorithm, CompressionSpec};
use crate::container::Parameters;
use crate::error::{Error, Result};
use crate::ingest::{ImageWriter, WriteSummary, WriterOptions};
use crate::model::{
    voxel_size, BlockIndex5D, DataType, DimensionSequence5D, ImageExtent, ImageLayout, Size5D, DEFAULT_INTERNAL_BLOCK,
};
use crate::pyramid::{downsample_volume, Reducible};
use crate::reader::ImageHandle;
use crate::synthetic::{block_order, Generator, SyntheticImage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

/// Images with at most this many voxels per channel and timepoint get every
/// pyramid level checked by `verify`.
pub const ORACLE_VOXEL_LIMIT: usize = 1 << 24;

const MB: f64 = 1024.0 * 1024.0;

#[derive(Parser, Debug)]
#[command(name = "bwmr", version, about = "Write, benchmark and check multi-resolution image containers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stream an input volume into a container file.
    Convert {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        write: WriteArgs,
        /// Output container path.
        output: PathBuf,
    },
    /// Time conversions of a synthetic volume across methods and thread counts.
    Bench(BenchArgs),
    /// Describe a container file.
    Inspect {
        path: PathBuf,
    },
    /// Check a container against the input it was converted from.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        path: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Image size as X,Y,Z,C,T.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<Size5D>,
    /// Input block size as X,Y,Z,C,T.
    #[arg(long, value_parser = parse_size, default_value = "128,128,1,1,1")]
    pub block: Size5D,
    /// Block streaming order, also the voxel order inside each block.
    #[arg(long, default_value = "XYZCT")]
    pub order: DimensionSequence5D,
    #[arg(long, default_value = "u16")]
    pub dtype: DataType,
    /// Synthetic generator: ramp, smooth-noise or zeros.
    #[arg(long, conflicts_with = "raw")]
    pub synthetic: Option<Generator>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Headerless little-endian voxel file in X-fastest order.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Physical extent as minX,minY,minZ,maxX,maxY,maxZ (default: one unit per voxel).
    #[arg(long, value_parser = parse_extent)]
    pub extent: Option<ImageExtent>,
}

#[derive(Args, Debug, Clone)]
pub struct WriteArgs {
    /// none, gzip:N or lz4, optionally prefixed with shuffle+.
    #[arg(long, default_value = "gzip:2")]
    pub compress: CompressionSpec,
    /// Byte-shuffle chunks before compression.
    #[arg(long)]
    pub shuffle: bool,
    /// Compression worker threads (default: available cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Store chunks one plane deep.
    #[arg(long)]
    pub force_z1: bool,
    /// Stored chunk size as X,Y,Z.
    #[arg(long, value_parser = parse_xyz)]
    pub internal_block: Option<[usize; 3]>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_size, default_value = "512,512,64,3,1")]
    pub size: Size5D,
    #[arg(long, value_parser = parse_size, default_value = "128,128,1,1,1")]
    pub block: Size5D,
    #[arg(long, default_value = "XYZCT")]
    pub order: DimensionSequence5D,
    #[arg(long, default_value = "smooth-noise")]
    pub synthetic: Generator,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated compression methods.
    #[arg(long, value_delimiter = ',', default_value = "none,gzip:2,lz4,shuffle+lz4,shuffle+gzip:2")]
    pub methods: Vec<CompressionSpec>,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub threads: Vec<usize>,
    /// Runs per configuration; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long)]
    pub force_z1: bool,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Directory for scratch files (default: system temp dir).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

impl Default for BenchArgs {
    /// The command-line defaults.
    fn default() -> Self {
        #[derive(Parser)]
        struct Wrapper {
            #[command(flatten)]
            args: BenchArgs,
        }
        Wrapper::parse_from(["bench"]).args
    }
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let values: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("\"{v}\": {e}")))
        .collect::<std::result::Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<usize>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn parse_size(s: &str) -> std::result::Result<Size5D, String> {
    Size5D::from_array(parse_list::<5>(s)?).map_err(|e| e.to_string())
}

fn parse_xyz(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_list::<3>(s)
}

fn parse_extent(s: &str) -> std::result::Result<ImageExtent, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("\"{v}\": {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 6 {
        return Err(format!("expected 6 comma-separated values, got {}", v.len()));
    }
    ImageExtent::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).map_err(|e| e.to_string())
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(Error),
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_IO,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Failed(e) => write!(f, "error: {e}"),
            CliError::Mismatch(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidLayout(_)
            | Error::InvalidExtent
            | Error::InvalidCompression(_)
            | Error::InvalidMetadata(_) => CliError::Usage(e.to_string()),
            other => CliError::Failed(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failed(Error::Io(e))
    }
}

/// Parse `args` (including the program name) and run the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    match command {
        Command::Convert { input, write, output } => {
            let summary = cmd_convert(&input, &write, &output)?;
            writeln!(out, "{summary}")?;
        }
        Command::Bench(args) => {
            let report = cmd_bench(&args)?;
            write!(out, "{report}")?;
            if let Some(path) = &args.csv {
                report.write_csv(File::create(path)?)?;
            }
        }
        Command::Inspect { path } => write!(out, "{}", cmd_inspect(&path)?)?,
        Command::Verify { input, path } => writeln!(out, "{}", cmd_verify(&input, &path)?)?,
    }
    Ok(())
}

/// Where voxels come from.
pub enum VoxelSource {
    Synthetic(SyntheticImage),
    Raw { file: File, size: Size5D, data_type: DataType },
}

impl VoxelSource {
    pub fn from_args(input: &InputArgs) -> std::result::Result<Self, CliError> {
        let size = input.size.ok_or_else(|| CliError::Usage("--size is required".into()))?;
        match (&input.synthetic, &input.raw) {
            (Some(generator), None) => Ok(VoxelSource::Synthetic(SyntheticImage::new(*generator, input.seed, size))),
            (None, Some(path)) => {
                let file = File::open(path)?;
                let expected = size.volume() * input.dtype.bytes_per_element() as u64;
                let actual = file.metadata()?.len();
                if actual != expected {
                    return Err(CliError::Failed(Error::InvalidLayout(format!(
                        "{} holds {actual} bytes, size {size} of {} needs {expected}",
                        path.display(),
                        input.dtype
                    ))));
                }
                Ok(VoxelSource::Raw { file, size, data_type: input.dtype })
            }
            _ => Err(CliError::Usage("give exactly one of --synthetic or --raw".into())),
        }
    }

    /// One input block laid out in `layout.input_sequence`; padding is zero
    /// for raw input.
    pub fn block(&mut self, layout: &ImageLayout, index: BlockIndex5D) -> Result<Vec<u8>> {
        match self {
            VoxelSource::Synthetic(img) => Ok(img.block(layout, index)),
            VoxelSource::Raw { file, size, .. } => {
                let es = layout.element_size();
                let bs = layout.input_block_size.as_array();
                let size = size.as_array();
                let strides = layout.input_sequence.strides(&layout.input_block_size);
                let mut out = vec![0u8; layout.input_block_bytes()];
                let origin: [usize; 5] = std::array::from_fn(|d| index.0[d] * bs[d]);
                let extent: [usize; 5] = std::array::from_fn(|d| bs[d].min(size[d] - origin[d]));
                let mut row = vec![0u8; extent[0] * es];
                for t in 0..extent[4] {
                    for c in 0..extent[3] {
                        for z in 0..extent[2] {
                            for y in 0..extent[1] {
                                let p = [origin[0], origin[1] + y, origin[2] + z, origin[3] + c, origin[4] + t];
                                let voxel = p[0] + size[0] * (p[1] + size[1] * (p[2] + size[2] * (p[3] + size[3] * p[4])));
                                file.seek(SeekFrom::Start((voxel * es) as u64))?;
                                file.read_exact(&mut row)?;
                                let base = y * strides[1] + z * strides[2] + c * strides[3] + t * strides[4];
                                for x in 0..extent[0] {
                                    let off = (base + x * strides[0]) * es;
                                    out[off..off + es].copy_from_slice(&row[x * es..(x + 1) * es]);
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// One channel and timepoint as an X-fastest volume.
    pub fn volume(&mut self, data_type: DataType, c: usize, t: usize) -> Result<Vec<u8>> {
        match self {
            VoxelSource::Synthetic(img) => Ok(img.volume(data_type, c, t)),
            VoxelSource::Raw { file, size, .. } => {
                let [sx, sy, sz, sc, _] = size.as_array();
                let bytes = sx * sy * sz * data_type.bytes_per_element();
                file.seek(SeekFrom::Start(((t * sc + c) * bytes) as u64))?;
                let mut out = vec![0u8; bytes];
                file.read_exact(&mut out)?;
                Ok(out)
            }
        }
    }

    fn describe(&self, parameters: &mut Parameters) {
        match self {
            VoxelSource::Synthetic(img) => {
                parameters
                    .set("Source", "Generator", img.generator.to_string())
                    .set("Source", "Seed", img.seed.to_string());
            }
            VoxelSource::Raw { .. } => {
                parameters.set("Source", "Generator", "raw");
            }
        }
    }
}

/// Stream every block of `source` into a new container at `path`, in the
/// layout's sequence order.
pub fn stream_to_file(
    source: &mut VoxelSource,
    layout: ImageLayout,
    extent: ImageExtent,
    options: WriterOptions,
    path: &Path,
) -> Result<WriteSummary> {
    let mut parameters = Parameters::new();
    source.describe(&mut parameters);
    parameters
        .set("Image", "ImageSizeInMB", format!("{}", layout.image_bytes() / (1024 * 1024)))
        .set("Image", "Compression", options.compression.to_string());
    let grid = layout.input_block_grid();
    let order = layout.input_sequence;
    let mut writer = ImageWriter::create(layout.clone(), extent, options, path)?;
    for index in block_order(grid, order) {
        let block = source.block(&layout, index)?;
        writer.copy_block(&block, index)?;
    }
    writer.finish(extent, parameters, Vec::new(), Vec::new())
}

fn layout_from(input: &InputArgs, size: Size5D, internal: Option<[usize; 3]>) -> ImageLayout {
    ImageLayout::new(size, input.dtype, input.block, input.order)
        .with_internal_block(internal.unwrap_or(DEFAULT_INTERNAL_BLOCK))
}

pub fn cmd_convert(input: &InputArgs, write: &WriteArgs, output: &Path) -> std::result::Result<WriteSummary, CliError> {
    let mut source = VoxelSource::from_args(input)?;
    let size = input.size.expect("checked by from_args");
    let layout = layout_from(input, size, write.internal_block);
    let extent = input.extent.unwrap_or_else(|| ImageExtent::unit(&size));
    let mut compression = write.compress;
    compression.shuffle |= write.shuffle;
    let mut options = WriterOptions {
        compression,
        force_block_z1: write.force_z1,
        ..WriterOptions::default()
    };
    if let Some(threads) = write.threads {
        options.thread_count = threads;
    }
    Ok(stream_to_file(&mut source, layout, extent, options, output)?)
}

/// One timed conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    /// Compression algorithm without the shuffle flag.
    pub method: String,
    pub shuffle: bool,
    pub threads: usize,
    pub input_mb: f64,
    pub seconds: f64,
    pub mb_per_s: f64,
    pub file_mb: f64,
    /// Input bytes over file bytes.
    pub ratio: f64,
    pub peak_mb: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "method,shuffle,threads,input_mb,seconds,mb_per_s,file_mb,ratio,peak_mb";

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.shuffle.to_string(),
                r.threads.to_string(),
                format!("{:.3}", r.input_mb),
                format!("{:.4}", r.seconds),
                format!("{:.2}", r.mb_per_s),
                format!("{:.3}", r.file_mb),
                format!("{:.4}", r.ratio),
                format!("{:.3}", r.peak_mb),
            ])?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv output is utf-8")
    }

    /// The row for `spec` at `threads`, if benchmarked.
    pub fn row(&self, spec: CompressionSpec, threads: usize) -> Option<&BenchRow> {
        let method = CompressionSpec { shuffle: false, ..spec }.to_string();
        self.rows
            .iter()
            .find(|r| r.method == method && r.shuffle == spec.shuffle && r.threads == threads)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>7} {:>7} {:>9} {:>8} {:>9} {:>9} {:>7} {:>8}",
            "method", "shuffle", "threads", "input MB", "seconds", "MB/s", "file MB", "ratio", "peak MB"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<8} {:>7} {:>7} {:>9.1} {:>8.3} {:>9.1} {:>9.2} {:>7.3} {:>8.2}",
                r.method, r.shuffle, r.threads, r.input_mb, r.seconds, r.mb_per_s, r.file_mb, r.ratio, r.peak_mb
            )?;
        }
        Ok(())
    }
}

/// Time one synthetic conversion per (method, thread count), keeping the
/// fastest of `repeat` runs. Wall-clock covers the whole write including
/// finalization.
pub fn cmd_bench(args: &BenchArgs) -> std::result::Result<BenchReport, CliError> {
    if args.threads.contains(&0) {
        return Err(CliError::Usage("thread counts must be at least 1".into()));
    }
    let dir = args.dir.clone().unwrap_or_else(std::env::temp_dir);
    let path = dir.join(format!("bwmr-bench-{}.bwmr", std::process::id()));
    let layout = ImageLayout::new(args.size, DataType::U16, args.block, args.order);
    let extent = ImageExtent::unit(&args.size);
    let image = SyntheticImage::new(args.synthetic, args.seed, args.size);
    let mut report = BenchReport::default();
    let result = (|| {
        for &compression in &args.methods {
            for &threads in &args.threads {
                let options = WriterOptions {
                    thread_count: threads,
                    compression,
                    force_block_z1: args.force_z1,
                    ..WriterOptions::default()
                };
                let mut best: Option<(f64, WriteSummary)> = None;
                for _ in 0..args.repeat.max(1) {
                    let mut source = VoxelSource::Synthetic(image);
                    let start = Instant::now();
                    let summary = stream_to_file(&mut source, layout.clone(), extent, options.clone(), &path)?;
                    let seconds = start.elapsed().as_secs_f64();
                    if best.as_ref().is_none_or(|(s, _)| seconds < *s) {
                        best = Some((seconds, summary));
                    }
                }
                let (seconds, summary) = best.expect("at least one run");
                let input_mb = summary.input_bytes as f64 / MB;
                let file_mb = summary.file_bytes as f64 / MB;
                report.rows.push(BenchRow {
                    method: CompressionSpec { shuffle: false, ..compression }.to_string(),
                    shuffle: compression.shuffle,
                    threads,
                    input_mb,
                    seconds,
                    mb_per_s: input_mb / seconds.max(1e-9),
                    file_mb,
                    ratio: input_mb / file_mb,
                    peak_mb: summary.peak_memory_bytes as f64 / MB,
                });
            }
        }
        Ok::<_, Error>(())
    })();
    let _ = std::fs::remove_file(&path);
    result?;
    Ok(report)
}

pub fn cmd_inspect(path: &Path) -> std::result::Result<String, CliError> {
    let handle = ImageHandle::open(path)?;
    let header = handle.header();
    let size = handle.image_size();
    let extent = handle.extent();
    let plan = handle.plan();
    let v = voxel_size(&extent, &size);
    let mut s = String::new();
    let w = &mut s;
    use std::fmt::Write as _;
    let _ = writeln!(w, "file: {} ({} bytes)", path.display(), handle.file_len());
    let _ = writeln!(w, "data type: {}", header.data_type);
    let _ = writeln!(w, "image size: {size}");
    let _ = writeln!(w, "chunk size: {:?}", plan.block_size());
    let _ = writeln!(w, "extent: {:?} - {:?}", extent.min, extent.max);
    let _ = writeln!(w, "voxel size: ({}, {}, {})", v[0], v[1], v[2]);
    if let Some((_, record)) = handle.chunks().next() {
        // the stored code names the algorithm but not the gzip level
        let codec = match CompressionSpec::from_codec_code(record.codec_code) {
            Ok(spec) => {
                let name = match spec.algorithm {
                    Algorithm::None => "none",
                    Algorithm::Gzip(_) => "gzip",
                    Algorithm::Lz4 => "lz4",
                };
                if spec.shuffle { format!("shuffle+{name}") } else { name.to_string() }
            }
            Err(_) => format!("unknown ({})", record.codec_code),
        };
        let _ = writeln!(w, "compression: {codec}");
    }
    let _ = writeln!(w, "levels: {}", plan.level_count());
    let mut stored = vec![0u64; plan.level_count()];
    let mut counts = vec![0usize; plan.level_count()];
    for (key, record) in handle.chunks() {
        stored[key.level] += record.compressed_length;
        counts[key.level] += 1;
    }
    let raw_chunk = plan.block_voxels() * header.data_type.bytes_per_element();
    for (k, level) in plan.levels().iter().enumerate() {
        let ratio = (counts[k] * raw_chunk) as f64 / stored[k].max(1) as f64;
        let _ = writeln!(
            w,
            "  level {k}: size {:?}, {} chunks, {} bytes stored, ratio {ratio:.3}",
            level.size, counts[k], stored[k]
        );
    }
    let meta = handle.metadata();
    for (section, params) in meta.parameters.sections() {
        let _ = writeln!(w, "[{section}]");
        for (name, value) in params {
            let _ = writeln!(w, "  {name} = {value}");
        }
    }
    for (c, info) in meta.channel_colors.iter().enumerate() {
        let _ = writeln!(w, "channel {c}: color {:?}, range {:?}", info.color, info.range);
    }
    for (t, tp) in meta.time_points.iter().enumerate() {
        if !tp.timestamp.is_empty() {
            let _ = writeln!(w, "timepoint {t}: {}", tp.timestamp);
        }
    }
    Ok(s)
}

/// Compare a container with its regenerated input. Level 0 is always
/// checked; the remaining levels when the image is at most
/// [`ORACLE_VOXEL_LIMIT`] voxels per channel and timepoint.
pub fn cmd_verify(input: &InputArgs, path: &Path) -> std::result::Result<String, CliError> {
    let mut source = VoxelSource::from_args(input)?;
    let handle = ImageHandle::open(path)?;
    let size = input.size.expect("checked by from_args");
    if handle.image_size() != size || handle.data_type() != input.dtype {
        return Err(CliError::Mismatch(format!(
            "file holds {} {}, expected {} {}",
            handle.image_size(),
            handle.data_type(),
            size,
            input.dtype
        )));
    }
    let levels = match input.dtype {
        DataType::U8 => verify_typed::<u8>(&handle, &mut source)?,
        DataType::U16 => verify_typed::<u16>(&handle, &mut source)?,
        DataType::U32 => verify_typed::<u32>(&handle, &mut source)?,
        DataType::F32 => verify_typed::<f32>(&handle, &mut source)?,
    };
    Ok(format!("ok: {levels} of {} levels match", handle.plan().level_count()))
}

fn verify_typed<T: Reducible>(handle: &ImageHandle, source: &mut VoxelSource) -> std::result::Result<usize, CliError> {
    let [_, _, _, channels, timepoints] = handle.image_size().as_array();
    let plan = handle.plan();
    let size0 = plan.level(0).size;
    let deep = size0.iter().product::<usize>() <= ORACLE_VOXEL_LIMIT;
    let depth = if deep { plan.level_count() } else { 1 };
    for t in 0..timepoints {
        for c in 0..channels {
            let mut expected: Vec<T> = crate::model::from_le_bytes(&source.volume(T::DATA_TYPE, c, t)?);
            let mut size = size0;
            for k in 0..depth {
                if k > 0 {
                    let (next, next_size) = downsample_volume(&expected, size, plan.level(k).halved);
                    expected = next;
                    size = next_size;
                }
                let actual: Vec<T> = handle.read_level(k, c, t).map_err(|e| match e {
                    Error::ChecksumMismatch { .. } | Error::CorruptStream(_) => {
                        CliError::Mismatch(format!("level {k} channel {c} timepoint {t}: {e}"))
                    }
                    other => CliError::Failed(other),
                })?;
                if let Some(i) = (0..expected.len()).find(|&i| actual[i] != expected[i]) {
                    let (x, y, z) = (i % size[0], (i / size[0]) % size[1], i / (size[0] * size[1]));
                    return Err(CliError::Mismatch(format!(
                        "level {k} voxel ({x}, {y}, {z}) channel {c} timepoint {t}: expected {:?}, found {:?}",
                        expected[i], actual[i]
                    )));
                }
            }
        }
    }
    Ok(depth)
}
