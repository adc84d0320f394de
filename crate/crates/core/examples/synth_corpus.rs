//! Renders a small synthetic corpus and reports the group split and the
//! brow arch of each face.
//!
//! cargo run --example synth_corpus -- [out_dir] [count] [size]

use fat_core::io::{self, Corpus};
use fat_core::synth::{corpus_params, Group};

fn main() -> fat_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "target/synth_corpus".into());
    let count = args.next().and_then(|v| v.parse().ok()).unwrap_or(8);
    let size = args.next().and_then(|v| v.parse().ok()).unwrap_or(64);
    let seed = 7;

    let manifest = io::make_corpus(&out, count, size, seed)?;
    let corpus = Corpus::open(&out)?;
    let makeup = corpus.entries.iter().filter(|e| e.group == Group::Makeup).count();
    println!("manifest: {}", manifest.display());
    println!("faces: {count} ({makeup} makeup, {} plain)", count - makeup);
    for (i, e) in corpus.entries.iter().enumerate() {
        let (_, p) = corpus_params(i, size, seed);
        println!(
            "{} {:<6} kappa={:+.3} lip=({:.2},{:.2},{:.2})",
            e.id, e.group, p.brow_curvature, p.lip[0], p.lip[1], p.lip[2]
        );
    }
    Ok(())
}
