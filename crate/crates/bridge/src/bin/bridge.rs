use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use bendaid_bridge::{build, router, AppState, BridgeConfig, DeviceSpec, RealtimeLoop};
use clap::Parser;

/// Serves the knob (simulated or serial) to the web UI over HTTP and WebSocket.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// `sim` or `serial:<path>`.
    #[arg(long, default_value = "sim")]
    device: DeviceSpec,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Send every Nth telemetry sample to UI clients.
    #[arg(long, default_value_t = 10)]
    downsample: u32,
    /// Also save finished recordings here.
    #[arg(long)]
    record_dir: Option<PathBuf>,
    /// Connect to the device at startup instead of waiting for `POST /api/connect`.
    #[arg(long)]
    connect: bool,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let config = BridgeConfig {
        addr: SocketAddr::new(args.host, args.port),
        device: args.device,
        telemetry_downsample: args.downsample,
        record_dir: args.record_dir,
        ..BridgeConfig::default()
    };
    let (owner, handle) = build(&config)?;
    let rt = RealtimeLoop::spawn(owner, config.tick_rate_hz);
    if args.connect {
        handle.connect(None).await?;
    }
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    eprintln!("bridge listening on http://{} (device {})", listener.local_addr()?, config.device);
    axum::serve(listener, router(AppState::new(handle)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    rt.stop();
    Ok(())
}
