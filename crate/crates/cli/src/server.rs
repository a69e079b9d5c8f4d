//! HTTP face of the task queue: `GET /tasks/next` and `POST /tasks/{id}/response`.

use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use askcap::teacher::{RespondError, RespondOutcome, TaskQueue, TaskResponse};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

pub fn router(queue: Arc<TaskQueue>) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/response", post(respond))
        .route("/ledger", get(ledger))
        .with_state(queue)
}

async fn next_task(State(q): State<Arc<TaskQueue>>) -> Response {
    match q.next() {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn respond(
    State(q): State<Arc<TaskQueue>>,
    Path(id): Path<u64>,
    Json(body): Json<TaskResponse>,
) -> Response {
    let (code, body) = match q.respond(id, body) {
        Ok(RespondOutcome::Accepted) => (StatusCode::OK, json!({ "status": "accepted" })),
        Ok(RespondOutcome::Duplicate) => (StatusCode::OK, json!({ "status": "duplicate" })),
        Err(e @ RespondError::UnknownTask(_)) => {
            (StatusCode::NOT_FOUND, json!({ "error": e.to_string() }))
        }
        Err(e @ RespondError::Stale(_)) => {
            (StatusCode::CONFLICT, json!({ "error": e.to_string() }))
        }
        Err(e @ RespondError::Invalid(_)) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": e.to_string() }),
        ),
    };
    (code, Json(body)).into_response()
}

async fn ledger(State(q): State<Arc<TaskQueue>>) -> Json<serde_json::Value> {
    Json(json!({ "total": q.ledger_total(), "pending": q.pending() }))
}

/// A server running on its own thread until [`ServerHandle::stop`].
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_now()
    }

    fn shutdown_now(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_now();
    }
}

/// Binds `addr` right away, so a taken port fails here, then serves on a
/// background thread.
pub fn spawn(addr: SocketAddr, queue: Arc<TaskQueue>) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_io()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(queue))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
