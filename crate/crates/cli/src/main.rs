use clap::Parser;
use nppx_cli::{run, Cli, Status};

fn main() {
    let cli = Cli::parse();
    let command = cli.command.name();
    let status = match run(cli.command) {
        Ok(result) => Status {
            status: "ok",
            command,
            exit_code: 0,
            error: None,
            result: Some(result),
        },
        Err(e) => {
            eprintln!("error: {e}");
            Status {
                status: "error",
                command,
                exit_code: e.exit_code(),
                error: Some(e.to_string()),
                result: None,
            }
        }
    };
    println!("{}", serde_json::to_string(&status).expect("status serializes"));
    std::process::exit(status.exit_code);
}
