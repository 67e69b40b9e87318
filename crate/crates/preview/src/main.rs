use std::net::SocketAddr;
use std::time::Duration;

use clap::Parser;
use spectra_preview::{serve, ServiceConfig};

#[derive(Parser)]
#[command(name = "spectra-preview", version, about = "Preview service for manual control-point matching")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,

    /// Default preview downsampling factor.
    #[arg(long, default_value_t = 4)]
    stride: usize,

    /// Minutes of inactivity before a session is dropped.
    #[arg(long, default_value_t = 30)]
    expiry_minutes: u64,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let config = ServiceConfig {
        preview_stride: args.stride.max(1),
        idle_expiry: Duration::from_secs(args.expiry_minutes * 60),
        ..ServiceConfig::default()
    };
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    serve(listener, config).await
}
