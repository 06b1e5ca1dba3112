use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use safekeeper_core::clock::SystemClock;
use safekeeper_server::{App, Config, Tap};

#[derive(Parser)]
#[command(name = "server", about = "Password service host backed by a simulated enclave")]
struct Args {
    #[arg(long)]
    config: PathBuf,
}

#[tokio::main]
async fn main() {
    let args = Args::parse();
    if let Err(e) = run(args).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let config = Config::load(&args.config)?;
    let listen = config.listen.clone();
    let interval = Duration::from_secs(config.reset_interval_seconds);
    let app = Arc::new(App::build(config, Arc::new(SystemClock), Tap::off())?);
    eprintln!(
        "enclave {} ({}), listening on {listen}",
        app.enclave().measurement().to_hex(),
        if app.fresh_key() { "new key" } else { "restored" },
    );

    let ticker = {
        let app = app.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(interval);
            loop {
                every.tick().await;
                let app = app.clone();
                let _ = tokio::task::spawn_blocking(move || app.tick()).await;
            }
        })
    };

    let listener = tokio::net::TcpListener::bind(&listen).await?;
    axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    ticker.abort();
    app.shutdown()?;
    eprintln!("sealed state written");
    Ok(())
}
