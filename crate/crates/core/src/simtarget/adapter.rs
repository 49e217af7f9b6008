//! Line-delimited adapter protocol for external harnesses.
//!
//! Request: 4-byte little-endian length followed by the raw input.
//! Reply: one line of JSON,
//! `{"edges":[...],"exec_cost_us":N,"stack_bytes":N,"cmp_matched":N}`.
//!
//! Addresses: `tcp://host:port`, `unix:/path/to/socket`, or `exec:<command>`
//! which spawns the harness and talks over its stdin/stdout.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::Deserialize;

use super::{ExecutionRecord, Executor, MAP_SIZE};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdapterConfig {
    pub timeout: Duration,
    /// Total comparison bytes the harness declares; replies above it are
    /// rejected.
    pub cmp_total: Option<u64>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
            cmp_total: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    edges: Vec<u32>,
    exec_cost_us: u64,
    stack_bytes: u64,
    cmp_matched: u64,
}

pub struct AdapterConnection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    cfg: AdapterConfig,
}

impl AdapterConnection {
    /// Wraps an already-connected byte stream pair. A background thread
    /// reads reply lines so that timeouts work for any reader.
    pub fn from_streams<R, W>(reader: R, writer: W, cfg: AdapterConfig) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            child: None,
            cfg,
        }
    }

    pub fn open(addr: &str, cfg: AdapterConfig) -> Result<Self> {
        if let Some(hostport) = addr.strip_prefix("tcp://") {
            let stream = TcpStream::connect(hostport)
                .map_err(|e| Error::Execution(format!("connect {addr}: {e}")))?;
            // One small request per execution; batching would stall each round trip.
            stream
                .set_nodelay(true)
                .map_err(|e| Error::Execution(e.to_string()))?;
            let reader = stream
                .try_clone()
                .map_err(|e| Error::Execution(e.to_string()))?;
            return Ok(Self::from_streams(reader, stream, cfg));
        }
        #[cfg(unix)]
        if let Some(path) = addr.strip_prefix("unix:") {
            let stream = std::os::unix::net::UnixStream::connect(path)
                .map_err(|e| Error::Execution(format!("connect {addr}: {e}")))?;
            let reader = stream
                .try_clone()
                .map_err(|e| Error::Execution(e.to_string()))?;
            return Ok(Self::from_streams(reader, stream, cfg));
        }
        if let Some(cmdline) = addr.strip_prefix("exec:") {
            return Self::spawn(cmdline, cfg);
        }
        Err(Error::Config(format!(
            "unsupported adapter address `{addr}` (expected tcp://, unix: or exec:)"
        )))
    }

    pub fn spawn(cmdline: &str, cfg: AdapterConfig) -> Result<Self> {
        let mut parts = cmdline.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty adapter command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Execution(format!("spawn `{cmdline}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Self::from_streams(stdout, stdin, cfg);
        conn.child = Some(child);
        Ok(conn)
    }

    pub fn execute(&mut self, input: &[u8]) -> Result<ExecutionRecord> {
        // Drop replies that arrived after an earlier timeout.
        while self.lines.try_recv().is_ok() {}

        let len = u32::try_from(input.len())
            .map_err(|_| Error::Protocol("input longer than u32::MAX".into()))?;
        self.writer
            .write_all(&len.to_le_bytes())
            .and_then(|_| self.writer.write_all(input))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Execution(format!("write to harness: {e}")))?;

        let line = match self.lines.recv_timeout(self.cfg.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Execution(format!("read from harness: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Execution(format!(
                    "harness did not reply within {:?}",
                    self.cfg.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Execution("harness closed the connection".into()))
            }
        };
        self.parse_reply(&line)
    }

    fn parse_reply(&self, line: &str) -> Result<ExecutionRecord> {
        let reply: Reply = serde_json::from_str(line.trim())
            .map_err(|e| Error::Protocol(format!("malformed reply `{line}`: {e}")))?;
        if reply.exec_cost_us == 0 {
            return Err(Error::Protocol("exec_cost_us must be positive".into()));
        }
        if let Some(e) = reply.edges.iter().find(|e| **e >= MAP_SIZE) {
            return Err(Error::Protocol(format!(
                "edge id {e} exceeds map size {MAP_SIZE}"
            )));
        }
        if let Some(total) = self.cfg.cmp_total {
            if reply.cmp_matched > total {
                return Err(Error::Protocol(format!(
                    "cmp_matched {} exceeds declared total {total}",
                    reply.cmp_matched
                )));
            }
        }
        Ok(ExecutionRecord {
            edges: reply.edges,
            exec_cost_us: reply.exec_cost_us,
            stack_bytes: reply.stack_bytes,
            cmp_matched: reply.cmp_matched,
        })
    }
}

impl Executor for AdapterConnection {
    fn execute(&mut self, input: &[u8]) -> Result<ExecutionRecord> {
        AdapterConnection::execute(self, input)
    }
}

impl Drop for AdapterConnection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Runs one input through an adapter connection.
pub fn adapter_execute(conn: &mut AdapterConnection, input: &[u8]) -> Result<ExecutionRecord> {
    conn.execute(input)
}

/// Reads one length-prefixed request from a harness-side stream.
/// Returns `None` on clean end of stream.
pub fn read_request(reader: &mut impl Read) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match reader.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    reader.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// Formats a record as one reply line (newline included).
pub fn reply_line(record: &ExecutionRecord) -> String {
    format!(
        "{}\n",
        serde_json::json!({
            "edges": record.edges,
            "exec_cost_us": record.exec_cost_us,
            "stack_bytes": record.stack_bytes,
            "cmp_matched": record.cmp_matched,
        })
    )
}
