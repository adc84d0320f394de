//! Times the batched multi-head attention block against one static
//! attention pass per facial part.
//!
//! cargo run --release --example bench_attention -- [size] [heads] [iters]

fn main() -> fat_core::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let size = args.next().flatten().unwrap_or(64);
    let heads = args.next().flatten().unwrap_or(2);
    let iters = args.next().flatten().unwrap_or(100);
    let report = fat_core::bench::run(size, heads, iters, 0)?;
    print!("{}", report.to_text());
    println!(
        "speedup {:.2}x over {iters} iterations",
        report.sequential_ms / report.fat_ms
    );
    Ok(())
}
