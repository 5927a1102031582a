//! Minimal framed worker used to exercise the out-of-process tool path.
//!
//! Tools: `touch` (writes `args.path`), `sleep` (`args.seconds`), `fail`,
//! `crash`, `escape` (reports an output outside the workspace), `echo`,
//! and `garble` (answers with a bad frame).

use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use geoharness::args::ArgValue;
use geoharness::sandbox::worker::{read_frame, write_frame, WorkerErrorBody, WorkerRequest, WorkerResponse, WorkerStatus};
use geoharness::sandbox::ErrorCategory;

fn ok(id: &str, outputs: Vec<String>) -> WorkerResponse {
    WorkerResponse { id: id.to_owned(), status: WorkerStatus::Ok, outputs, error: None }
}

fn err(id: &str, category: ErrorCategory, message: String) -> WorkerResponse {
    WorkerResponse { id: id.to_owned(), status: WorkerStatus::Error, outputs: Vec::new(), error: Some(WorkerErrorBody { category, message }) }
}

fn handle(req: &WorkerRequest) -> io::Result<Option<WorkerResponse>> {
    let text = |k: &str| match req.args.get(k) {
        Some(ArgValue::Str(s)) => Some(s.clone()),
        _ => None,
    };
    Ok(Some(match req.tool.as_str() {
        "touch" => {
            let Some(path) = text("path") else {
                return Ok(Some(err(&req.id, ErrorCategory::BadParameter, "ValueError: missing `path`".into())));
            };
            std::fs::write(Path::new(&req.workspace).join(&path), b"touched\n")?;
            ok(&req.id, vec![path])
        }
        "sleep" => {
            let secs = match req.args.get("seconds") {
                Some(ArgValue::Int(n)) => *n as f64,
                Some(ArgValue::Real(x)) => *x,
                _ => 0.0,
            };
            std::thread::sleep(Duration::from_secs_f64(secs));
            ok(&req.id, Vec::new())
        }
        "fail" => err(&req.id, ErrorCategory::BadParameter, "ValueError: stub failure requested".into()),
        "crash" => {
            eprintln!("Traceback (most recent call last):\nRuntimeError: stub worker crashed");
            std::process::exit(3);
        }
        "escape" => ok(&req.id, vec!["../outside.txt".into()]),
        "echo" => ok(&req.id, Vec::new()),
        "garble" => {
            let mut out = io::stdout().lock();
            out.write_all(&[0, 0, 0, 5])?;
            out.write_all(b"nope!")?;
            out.flush()?;
            return Ok(None);
        }
        other => err(&req.id, ErrorCategory::BadParameter, format!("KeyError: unknown tool '{other}'")),
    }))
}

fn main() -> io::Result<()> {
    let mut stdin = io::stdin().lock();
    while let Some(body) = read_frame(&mut stdin)? {
        let req: WorkerRequest = match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("bad request: {e}");
                std::process::exit(2);
            }
        };
        if let Some(resp) = handle(&req)? {
            let bytes = serde_json::to_vec(&resp).expect("response serializes");
            write_frame(&mut io::stdout().lock(), &bytes)?;
        }
    }
    Ok(())
}
