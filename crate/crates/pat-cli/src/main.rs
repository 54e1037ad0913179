use clap::Parser;
use pat_cli::cli::{dispatch, Cli};

fn main() {
    if let Ok(n) = std::env::var("PAT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool starts once");
            }
            _ => {
                eprintln!("error: PAT_THREADS must be a positive integer");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
