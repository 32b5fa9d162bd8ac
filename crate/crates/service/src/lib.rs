//! HTTP service for the learnware dock: a JSON API over a [`Market`] plus one
//! background validator that checks submissions in arrival order.
//!
//! Handlers never run the checker; they store the package, return its id and
//! wake the worker.

pub mod api;
pub mod client;
pub mod wire;
mod worker;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use lwdock_core::market::Market;
use tokio::net::TcpListener;
use tokio::sync::{watch, Notify};

pub use api::{router, AppState, ADMIN_HEADER};
pub use client::{Client, ClientError, ListFilter};
pub use wire::{
    ErrorBody, Health, LearnwareDetail, SearchParams, SearchRequest, SpecSummary, Submitted,
};

#[derive(Debug, Clone)]
pub struct Config {
    /// Market root directory (index and packages).
    pub db: PathBuf,
    pub addr: String,
    /// Admin routes answer 401 when unset.
    pub admin_token: Option<String>,
    /// Idle polling period of the worker.
    pub poll_interval: Duration,
}

impl Config {
    pub fn new(db: impl Into<PathBuf>, addr: impl Into<String>) -> Self {
        Self {
            db: db.into(),
            addr: addr.into(),
            admin_token: None,
            poll_interval: Duration::from_millis(500),
        }
    }

    /// `LWDOCK_DB`, `LWDOCK_ADDR` and `LWDOCK_ADMIN_TOKEN`, with
    /// `./lwdock-data` and `127.0.0.1:8080` as fallbacks.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mut c = Self::new(
            var("LWDOCK_DB").unwrap_or_else(|| "lwdock-data".into()),
            var("LWDOCK_ADDR").unwrap_or_else(|| "127.0.0.1:8080".into()),
        );
        c.admin_token = var("LWDOCK_ADMIN_TOKEN");
        c
    }
}

/// Serves until `shutdown` resolves, then stops the worker.
pub async fn serve_with_shutdown(
    config: Config,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let market = {
        let db = config.db.clone();
        tokio::task::spawn_blocking(move || Market::open(db))
            .await
            .map_err(std::io::Error::other)?
            .map_err(std::io::Error::other)?
    };
    let market = Arc::new(market);
    let wake = Arc::new(Notify::new());
    let (stop_tx, stop_rx) = watch::channel(false);
    let worker = tokio::spawn(worker::run(
        market.clone(),
        wake.clone(),
        config.poll_interval,
        stop_rx,
    ));
    let state = AppState {
        market,
        admin_token: config.admin_token.map(Arc::from),
        wake,
    };
    tracing::info!(addr = %listener.local_addr()?, db = %config.db.display(), "serving");
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    let _ = stop_tx.send(true);
    let _ = worker.await;
    result
}

/// Binds `config.addr` and serves until Ctrl-C.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = TcpListener::bind(&config.addr).await?;
    serve_with_shutdown(config, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// A server on its own runtime thread; stops on drop.
pub struct RunningServer {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    /// Binds `config.addr` (port 0 picks a free port) and starts serving in
    /// the background.
    pub fn start(config: Config) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = rt.block_on(TcpListener::bind(&config.addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(serve_with_shutdown(config, listener, async {
                let _ = rx.await;
            }))
        });
        Ok(Self {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn client(&self) -> Client {
        Client::new(self.url())
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| std::io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
