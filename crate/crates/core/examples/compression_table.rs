//! Compression ratio of each codec on noisy 16-bit data, with and without
//! byte shuffling.
//!
//! cargo run --release --example compression_table

use bwmr::cli::{cmd_bench, BenchArgs};

fn main() {
    let args = BenchArgs {
        seed: 1,
        methods: ["gzip:2", "shuffle+gzip:2", "lz4", "shuffle+lz4"]
            .into_iter()
            .map(|m| m.parse().unwrap())
            .collect(),
        ..BenchArgs::default()
    };
    match cmd_bench(&args) {
        Ok(report) => {
            for row in &report.rows {
                let name = if row.shuffle { format!("shuffle+{}", row.method) } else { row.method.clone() };
                println!("{name:<16} ratio {:.3}", row.ratio);
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
