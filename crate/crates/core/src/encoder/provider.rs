use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::EncoderError;

/// Source of query vectors other than the built-in query encoder.
pub trait EmbeddingProvider {
    fn embed(&mut self, text: &str) -> Result<Vec<f64>, EncoderError>;
}

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    vector: Vec<f64>,
}

/// A long-running child process speaking one JSON object per line:
/// `{"text": ...}` in, `{"vector": [...]}` out.
pub struct ProcessProvider {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ProcessProvider {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, EncoderError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| EncoderError::Provider(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessProvider { child, stdin, stdout })
    }
}

impl EmbeddingProvider for ProcessProvider {
    fn embed(&mut self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| EncoderError::Provider("provider input closed".into()))?;
        let mut line = serde_json::to_string(&Request { text })?;
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| EncoderError::Provider(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = self.stdout.read_line(&mut reply).map_err(|e| EncoderError::Provider(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(EncoderError::Provider("provider closed its output".into()));
        }
        let r: Response = serde_json::from_str(reply.trim())
            .map_err(|e| EncoderError::Provider(format!("malformed response: {e}")))?;
        Ok(r.vector)
    }
}

impl Drop for ProcessProvider {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
