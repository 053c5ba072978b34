use std::io::Read;

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    // Stdin is consumed only when some document argument asks for it.
    let stdin_text = if argv.iter().any(|a| a == "-") {
        let mut buf = String::new();
        match std::io::stdin().read_to_string(&mut buf) {
            Ok(_) => Some(buf),
            Err(e) => {
                eprintln!("failed to read stdin: {e}");
                std::process::exit(dyadic_core::cli::EXIT_MALFORMED);
            }
        }
    } else {
        None
    };
    let (code, stdout, stderr) = dyadic_core::cli::run(&argv, stdin_text.as_deref());
    print!("{stdout}");
    eprint!("{stderr}");
    std::process::exit(code);
}
