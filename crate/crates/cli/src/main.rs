fn main() {
    std::process::exit(i32::from(spectralens::run(std::env::args_os())));
}
