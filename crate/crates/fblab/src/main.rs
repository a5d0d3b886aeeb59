use clap::Parser;

fn main() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("FBLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = fblab::cli::Cli::parse();
    std::process::exit(fblab::cli::execute(cli));
}
