//! Models that run as child processes speaking line-delimited JSON on stdio.
//!
//! ```text
//! → {"op":"describe"}            ← {"input_dim":4,"output_dim":2}
//! → {"op":"predict","X":[[...]]} ← {"y":[[...]]}
//! ```
//!
//! One request is in flight at a time; responses come back in request order.
//! Conforming models are stateless, so a crashed or timed-out process is
//! simply relaunched on the next call.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request<'a> {
    Describe,
    Predict {
        #[serde(rename = "X")]
        x: &'a [Vec<f64>],
    },
}

#[derive(Deserialize)]
struct DescribeResponse {
    input_dim: usize,
    output_dim: usize,
}

#[derive(Deserialize)]
struct PredictResponse {
    y: Vec<Vec<f64>>,
}

struct LiveProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl LiveProcess {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalModel {
    command: Vec<String>,
    working_dir: PathBuf,
    input_dim: usize,
    output_dim: usize,
    timeout: Duration,
    process: Mutex<Option<LiveProcess>>,
}

impl std::fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalModel")
            .field("command", &self.command)
            .field("working_dir", &self.working_dir)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl ExternalModel {
    /// Declares a model; nothing is launched until the first request.
    pub fn new(
        command: Vec<String>,
        working_dir: impl Into<PathBuf>,
        input_dim: usize,
        output_dim: usize,
    ) -> Self {
        Self {
            command,
            working_dir: working_dir.into(),
            input_dim,
            output_dim,
            timeout: DEFAULT_TIMEOUT,
            process: Mutex::new(None),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn working_dir(&self) -> &Path {
        &self.working_dir
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Runs the handshake and returns the dimensions the process reports.
    /// The process stays alive for later predictions.
    pub fn describe(&self) -> Result<(usize, usize)> {
        let line = self.round_trip(&Request::Describe)?;
        let resp: DescribeResponse = serde_json::from_str(&line)
            .map_err(|e| Error::ModelRuntime(format!("malformed describe response: {e}")))?;
        Ok((resp.input_dim, resp.output_dim))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        if !all_finite(x.iter()) {
            return Err(Error::InvalidData("non-finite model input".into()));
        }
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let line = self.round_trip(&Request::Predict { x: &rows })?;
        let resp: PredictResponse = serde_json::from_str(&line)
            .map_err(|e| Error::ModelRuntime(format!("malformed predict response: {e}")))?;
        if resp.y.len() != x.nrows() || resp.y.iter().any(|r| r.len() != self.output_dim) {
            return Err(Error::dim(format!(
                "model returned {} rows for {} inputs (expected width {})",
                resp.y.len(),
                x.nrows(),
                self.output_dim
            )));
        }
        let out = Array2::from_shape_fn((x.nrows(), self.output_dim), |(i, j)| resp.y[i][j]);
        if !all_finite(out.iter()) {
            return Err(Error::ModelOutput("non-finite predictions".into()));
        }
        Ok(out)
    }

    /// Stops the child process, if any. The next request relaunches it.
    pub fn shutdown(&self) {
        if let Some(p) = self.lock().take() {
            p.kill();
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Option<LiveProcess>> {
        self.process.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn launch(&self) -> Result<LiveProcess> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| Error::ModelRuntime("empty model command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(&self.working_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::ModelRuntime(format!("failed to launch {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(LiveProcess {
            child,
            stdin,
            lines,
        })
    }

    fn round_trip(&self, request: &Request<'_>) -> Result<String> {
        let mut guard = self.lock();
        if guard.is_none() {
            *guard = Some(self.launch()?);
        }
        let result = Self::exchange(guard.as_mut().expect("launched"), request, self.timeout);
        if result.is_err() {
            if let Some(p) = guard.take() {
                p.kill();
            }
        }
        result
    }

    fn exchange(
        process: &mut LiveProcess,
        request: &Request<'_>,
        timeout: Duration,
    ) -> Result<String> {
        let mut payload = serde_json::to_string(request).expect("request serializes");
        payload.push('\n');
        process
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| process.stdin.flush())
            .map_err(|e| {
                Error::ModelRuntime(format!("model process is not accepting input: {e}"))
            })?;
        match process.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::ModelRuntime(format!("reading model output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::ModelRuntime(format!(
                "model did not answer within {timeout:?}"
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::ModelRuntime("model process exited".into()))
            }
        }
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        self.shutdown();
    }
}
