use clap::Parser;
use mcg_nash::cli::{error_json, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MCG_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(value) => println!("{}", serde_json::to_string_pretty(&value).expect("json")),
        Err(err) => {
            log::error!("{err}");
            println!("{}", serde_json::to_string_pretty(&error_json(&err)).expect("json"));
            std::process::exit(err.exit_code());
        }
    }
}
