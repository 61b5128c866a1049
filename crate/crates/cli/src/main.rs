fn main() {
    std::process::exit(canecov::run(std::env::args_os()));
}
