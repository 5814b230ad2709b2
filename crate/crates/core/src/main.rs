use clap::Parser;

fn main() {
    let cli = dicke_forge::cli::Cli::parse();
    std::process::exit(dicke_forge::cli::run(cli));
}
