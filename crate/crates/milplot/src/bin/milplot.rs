use clap::Parser;
use milplot::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();

    let threads = if cli.deterministic {
        Some(1)
    } else {
        cli.threads.or_else(|| {
            std::env::var("MILPLOT_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
    };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            std::process::exit(2);
        }
        // Ignore failure: the global pool may already exist under test runners.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
