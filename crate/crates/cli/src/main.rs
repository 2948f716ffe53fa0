use clap::Parser;
use hetindex_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("HETINDEX_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let res = run(&cli);
    for line in &res.stdout {
        println!("{line}");
    }
    for line in &res.stderr {
        eprintln!("{line}");
    }
    std::process::exit(res.code);
}
