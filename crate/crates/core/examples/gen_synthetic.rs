//! Regenerates the bundled synthetic corpus.
//!
//! ```text
//! cargo run --example gen_synthetic -- crates/core/data/synthetic50 50 2024
//! ```

use std::path::PathBuf;

use hacknet::synthetic::SyntheticData;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/data/synthetic50".into()));
    let n: usize = args.next().map_or(50, |s| s.parse().expect("author count"));
    let seed: u64 = args.next().map_or(2024, |s| s.parse().expect("seed"));
    SyntheticData::generate(seed, n).write_to(&dir).expect("write corpus");
    println!("wrote {n}-author corpus to {}", dir.display());
}
