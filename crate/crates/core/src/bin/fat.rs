fn main() {
    // FAT_THREADS caps the worker pool; results do not depend on it.
    if let Some(n) = std::env::var("FAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    std::process::exit(fat_core::cli::run(std::env::args_os()));
}
