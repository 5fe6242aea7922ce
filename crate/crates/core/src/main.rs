fn main() {
    std::process::exit(latent_ogm::cli::main_with_args(std::env::args_os()));
}
