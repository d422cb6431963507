use std::io::Write;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let env_seed = std::env::var(cgl_cli::SEED_VAR).ok();
    let outcome = cgl_cli::run(&argv, env_seed.as_deref());
    let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
    std::process::exit(outcome.code);
}
