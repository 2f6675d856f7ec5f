use std::io;

fn main() {
    if let Ok(v) = std::env::var("APW_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: APW_THREADS must be a positive integer, got {v:?}");
                std::process::exit(apw_cli::EXIT_USAGE);
            }
        }
    }
    let code = apw_cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
