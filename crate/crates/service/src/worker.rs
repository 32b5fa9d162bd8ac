//! The validator: drains the waiting queue one learnware at a time.

use std::sync::Arc;
use std::time::Duration;

use lwdock_core::market::Market;
use tokio::sync::{watch, Notify};

const MAX_BACKOFF: Duration = Duration::from_secs(5);

/// Runs until `shutdown` turns true. The queue lives in the index, so a
/// restarted worker picks up whatever was left `WAITING`.
pub async fn run(
    market: Arc<Market>,
    wake: Arc<Notify>,
    poll: Duration,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut backoff = Duration::from_millis(100);
    while !*shutdown.borrow() {
        let m = market.clone();
        match tokio::task::spawn_blocking(move || m.verify_next()).await {
            Ok(Ok(Some((id, Some(report))))) => {
                backoff = Duration::from_millis(100);
                tracing::info!(%id, pass = report.pass, failures = ?report.codes(), "checked");
            }
            Ok(Ok(Some((id, None)))) => {
                tracing::info!(%id, "changed during its check; verdict dropped")
            }
            Ok(Ok(None)) => {
                tokio::select! {
                    _ = wake.notified() => {}
                    _ = tokio::time::sleep(poll) => {}
                    _ = shutdown.changed() => {}
                }
            }
            Ok(Err(e)) => {
                tracing::warn!("validation step failed: {e}; retrying in {backoff:?}");
                tokio::select! {
                    _ = tokio::time::sleep(backoff) => {}
                    _ = shutdown.changed() => {}
                }
                backoff = (backoff * 2).min(MAX_BACKOFF);
            }
            Err(e) => {
                tracing::error!("validation step panicked: {e}");
                tokio::time::sleep(backoff).await;
                backoff = (backoff * 2).min(MAX_BACKOFF);
            }
        }
    }
}
