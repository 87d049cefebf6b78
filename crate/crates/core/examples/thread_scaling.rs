//! Writer throughput as a function of compression worker count.
//!
//! cargo run --release --example thread_scaling -- [max_threads]

use bwmr::cli::{cmd_bench, BenchArgs};

fn main() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let max = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(cores.max(4));
    let args = BenchArgs {
        methods: ["none", "gzip:2", "lz4", "shuffle+lz4"].into_iter().map(|m| m.parse().unwrap()).collect(),
        threads: (0..).map(|i| 1 << i).take_while(|&t| t <= max).collect(),
        repeat: 2,
        ..BenchArgs::default()
    };
    eprintln!("available cores: {cores}");
    match cmd_bench(&args) {
        Ok(report) => print!("{report}"),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
