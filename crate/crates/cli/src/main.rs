use clap::Parser;

fn main() {
    let cfg = cdegree_cli::RunConfig::parse();
    std::process::exit(cdegree_cli::run(&cfg));
}
