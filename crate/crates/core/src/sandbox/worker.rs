//! Out-of-process tool workers.
//!
//! Frames are a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. The harness writes one [`WorkerRequest`] per call and expects
//! exactly one [`WorkerResponse`] with the same id. A worker that misses the
//! call deadline is killed; the next call respawns it.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::args::Args;
use crate::paths::normalize_relative;
use crate::sandbox::{ErrorCategory, ToolContext, ToolExecutor, ToolFailure, ToolOutput};

/// Frames larger than this are treated as a protocol desync.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

const STDERR_TAIL_BYTES: usize = 8 * 1024;

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame. `Ok(None)` means the stream ended cleanly between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame header")),
            n => filled += n,
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub id: String,
    pub tool: String,
    pub args: Args,
    /// Absolute workspace root; the worker must not write outside it.
    pub workspace: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerErrorBody {
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub id: String,
    pub status: WorkerStatus,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WorkerErrorBody>,
}

#[derive(Debug)]
pub enum WorkerCallError {
    Timeout,
    /// Bad frame, unparseable body, or mismatched id.
    Desync(String),
    /// Worker exited; carries the tail of its stderr.
    Exited(String),
}

/// A running worker process.
pub struct WorkerProcess {
    child: Child,
    stdin: ChildStdin,
    frames: Receiver<io::Result<Vec<u8>>>,
    stderr_tail: Arc<Mutex<Vec<u8>>>,
}

impl WorkerProcess {
    pub fn spawn(command: &[String], cwd: &Path) -> io::Result<Self> {
        let (program, rest) = command
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty worker command"))?;
        let mut child = Command::new(program)
            .args(rest)
            .current_dir(cwd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin piped");
        let mut stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");

        let (tx, frames) = mpsc::channel();
        thread::spawn(move || loop {
            match read_frame(&mut stdout) {
                Ok(Some(body)) => {
                    if tx.send(Ok(body)).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        });

        let stderr_tail = Arc::new(Mutex::new(Vec::new()));
        let tail = Arc::clone(&stderr_tail);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = tail.lock().unwrap_or_else(|p| p.into_inner());
                tail.extend_from_slice(&buf[..n]);
                if tail.len() > STDERR_TAIL_BYTES {
                    let cut = tail.len() - STDERR_TAIL_BYTES;
                    tail.drain(..cut);
                }
            }
        });

        Ok(WorkerProcess { child, stdin, frames, stderr_tail })
    }

    pub fn call(&mut self, request: &WorkerRequest, timeout: Duration) -> Result<WorkerResponse, WorkerCallError> {
        let body = serde_json::to_vec(request).map_err(|e| WorkerCallError::Desync(e.to_string()))?;
        if write_frame(&mut self.stdin, &body).is_err() {
            return Err(self.exited());
        }
        match self.frames.recv_timeout(timeout) {
            Ok(Ok(frame)) => {
                let response: WorkerResponse = serde_json::from_slice(&frame)
                    .map_err(|e| WorkerCallError::Desync(format!("unparseable response: {e}")))?;
                if response.id != request.id {
                    return Err(WorkerCallError::Desync(format!(
                        "response id `{}` does not match request id `{}`",
                        response.id, request.id
                    )));
                }
                Ok(response)
            }
            Ok(Err(e)) => Err(WorkerCallError::Desync(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(WorkerCallError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(self.exited()),
        }
    }

    fn exited(&mut self) -> WorkerCallError {
        // Give the stderr reader a moment to drain after exit.
        let _ = self.child.wait();
        thread::sleep(Duration::from_millis(20));
        let tail = self.stderr_tail.lock().unwrap_or_else(|p| p.into_inner());
        WorkerCallError::Exited(String::from_utf8_lossy(&tail).into_owned())
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for WorkerProcess {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Worker processes owned by one workspace, keyed by command line.
#[derive(Default)]
pub struct WorkerSessions {
    procs: Mutex<HashMap<String, WorkerProcess>>,
}

impl WorkerSessions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.procs.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shutdown(&self) {
        self.procs.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }
}

/// Proxies a registered tool to an external worker process.
#[derive(Debug, Clone)]
pub struct WorkerExecutor {
    command: Vec<String>,
}

impl WorkerExecutor {
    pub fn new(command: Vec<String>) -> Self {
        WorkerExecutor { command }
    }
}

impl ToolExecutor for WorkerExecutor {
    fn execute(&self, ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
        let key = self.command.join("\u{1f}");
        let mut procs = ctx.workers().procs.lock().unwrap_or_else(|p| p.into_inner());
        if !procs.contains_key(&key) {
            let proc = WorkerProcess::spawn(&self.command, ctx.root())
                .map_err(|e| ToolFailure::internal(format!("failed to start worker `{}`: {e}", self.command.join(" "))))?;
            procs.insert(key.clone(), proc);
        }
        let worker = procs.get_mut(&key).expect("inserted above");
        let request = WorkerRequest {
            id: format!("{}-{}", ctx.step(), ctx.tool()),
            tool: ctx.tool().to_owned(),
            args: args.clone(),
            workspace: ctx.root().to_string_lossy().into_owned(),
        };
        let remaining = Duration::from_secs_f64(ctx.remaining().max(0.0));
        match worker.call(&request, remaining) {
            Ok(response) => match response.status {
                WorkerStatus::Ok => {
                    for out in &response.outputs {
                        let confined = normalize_relative(out)
                            .map(|rel| ctx.root().join(rel).exists())
                            .unwrap_or(false);
                        if !confined {
                            return Err(ToolFailure::internal(format!(
                                "worker reported output `{out}` that does not exist inside the workspace"
                            )));
                        }
                    }
                    let summary = if response.outputs.is_empty() {
                        "ok".to_owned()
                    } else {
                        format!("wrote {}", response.outputs.join(", "))
                    };
                    Ok(ToolOutput::new(summary))
                }
                WorkerStatus::Error => {
                    let body = response.error.unwrap_or(WorkerErrorBody {
                        category: ErrorCategory::Internal,
                        message: "worker reported an error without details".into(),
                    });
                    Err(ToolFailure::new(body.message, Some(body.category)))
                }
            },
            Err(WorkerCallError::Timeout) => {
                if let Some(mut w) = procs.remove(&key) {
                    w.kill();
                }
                Err(ToolFailure::timeout(ctx.call_timeout()))
            }
            Err(WorkerCallError::Desync(msg)) => {
                if let Some(mut w) = procs.remove(&key) {
                    w.kill();
                }
                Err(ToolFailure::new(format!("worker protocol desync: {msg}"), Some(ErrorCategory::Internal)))
            }
            Err(WorkerCallError::Exited(stderr)) => {
                procs.remove(&key);
                let raw = if stderr.trim().is_empty() {
                    "worker exited without a response".to_owned()
                } else {
                    stderr
                };
                Err(ToolFailure::new(raw, None))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_big_endian_length_prefix() {
        let mut buf = Vec::new();
        write_frame(&mut buf, br#"{"id":"1"}"#).unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 10]);
        assert_eq!(&buf[4..], br#"{"id":"1"}"#);
        let mut cursor = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cursor).unwrap().unwrap(), br#"{"id":"1"}"#);
        assert!(read_frame(&mut cursor).unwrap().is_none());
    }

    #[test]
    fn truncated_and_oversized_frames_fail() {
        let mut cursor = io::Cursor::new(vec![0u8, 0, 0, 9, b'x']);
        assert!(read_frame(&mut cursor).is_err());
        let mut cursor = io::Cursor::new(vec![0u8, 0]);
        assert!(read_frame(&mut cursor).is_err());
        let mut cursor = io::Cursor::new(vec![0xffu8, 0xff, 0xff, 0xff]);
        assert!(read_frame(&mut cursor).is_err());
    }

    #[test]
    fn response_shape() {
        let r: WorkerResponse = serde_json::from_str(
            r#"{"id":"7","status":"error","error":{"category":"crs_mismatch","message":"unknown CRS EPSG:9999"}}"#,
        )
        .unwrap();
        assert_eq!(r.status, WorkerStatus::Error);
        assert_eq!(r.error.unwrap().category, ErrorCategory::CrsMismatch);
    }
}
