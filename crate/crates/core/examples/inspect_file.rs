//! Print a description of a container file, or of the committed test
//! fixture when no path is given.
//!
//! cargo run --release --example inspect_file -- [file.bwmr]

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ramp_u16.bwmr").into());
    match bwmr::cli::cmd_inspect(path.as_ref()) {
        Ok(report) => print!("{report}"),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
