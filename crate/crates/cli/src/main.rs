use std::io;

fn main() {
    let code = lift_watchdog_cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
