//! Subprocess execution with a hard deadline, shared by the external-check
//! relation and the subprocess adapter.

use std::io::{self, Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

/// Outcome of a finished (or killed) subprocess.
#[derive(Debug)]
pub(crate) struct Completed {
    /// Exit code; `None` when the process was killed by a signal.
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

/// Runs `argv` with optional stdin data, killing the process when the
/// deadline passes. Pipes are drained on reader threads so a chatty child
/// can never deadlock against the poll loop.
pub(crate) fn run_with_timeout(
    argv: &[String],
    stdin_data: Option<&str>,
    timeout: Duration,
) -> io::Result<Completed> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(if stdin_data.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;

    if let Some(data) = stdin_data {
        if let Some(mut stdin) = child.stdin.take() {
            let data = data.to_string();
            thread::spawn(move || {
                let _ = stdin.write_all(data.as_bytes());
            });
        }
    }
    let out_reader = drain(child.stdout.take());
    let err_reader = drain(child.stderr.take());

    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(5));
    };

    Ok(Completed {
        code: status.and_then(|s| s.code()),
        stdout: out_reader.join().unwrap_or_default(),
        stderr: err_reader.join().unwrap_or_default(),
        timed_out: status.is_none(),
    })
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = String::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_string(&mut buf);
        }
        buf
    })
}

/// Splits a command template on whitespace, substituting `placeholder`
/// with `value` inside each argument.
pub(crate) fn split_command(template: &str, placeholder: &str, value: &str) -> Vec<String> {
    template
        .split_whitespace()
        .map(|arg| arg.replace(placeholder, value))
        .collect()
}
