//! Carriers for the summation phase.
//!
//! A transport delivers each client's CONTRIBUTION frame to a
//! [`Coordinator`], closes collection once every client has either sent or
//! disconnected, and returns the coordinator's reply to the clients still
//! connected. The socket transport is plain TCP on loopback without TLS.

use std::collections::BTreeMap;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use super::coordinator::{Coordinator, CoordinatorOutcome};
use super::wire::{read_frame, write_frame};
use crate::error::{Error, Result};
use crate::securesum::ParticipantId;

/// One client's side of the exchange. `frame: None` models a client that
/// crashes before submitting.
#[derive(Debug, Clone)]
pub struct Submission {
    pub participant: ParticipantId,
    pub frame: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Exchange {
    pub outcome: CoordinatorOutcome,
    /// Reply frame as received by each client that stayed connected.
    pub replies: BTreeMap<ParticipantId, Vec<u8>>,
}

pub trait Transport: Send + Sync {
    fn name(&self) -> &'static str;

    fn exchange(&self, coordinator: Coordinator, submissions: Vec<Submission>) -> Result<Exchange>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    Memory,
    Socket,
}

impl TransportKind {
    pub fn build(self) -> Box<dyn Transport> {
        match self {
            TransportKind::Memory => Box::new(MemoryTransport),
            TransportKind::Socket => Box::new(SocketTransport::default()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransportKind::Memory => "memory",
            TransportKind::Socket => "socket",
        }
    }
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "memory" => Ok(TransportKind::Memory),
            "socket" => Ok(TransportKind::Socket),
            other => Err(format!("unknown transport `{other}` (expected memory or socket)")),
        }
    }
}

/// Passes frames by value inside the process.
#[derive(Debug, Clone, Copy, Default)]
pub struct MemoryTransport;

impl Transport for MemoryTransport {
    fn name(&self) -> &'static str {
        "memory"
    }

    fn exchange(&self, mut coordinator: Coordinator, submissions: Vec<Submission>) -> Result<Exchange> {
        let mut connected = Vec::new();
        for sub in submissions {
            if let Some(frame) = sub.frame {
                coordinator.receive(&frame)?;
                connected.push(sub.participant);
            }
        }
        let outcome = coordinator.close();
        let reply = outcome.reply.encode();
        let replies = connected.into_iter().map(|id| (id, reply.clone())).collect();
        Ok(Exchange { outcome, replies })
    }
}

/// One loopback TCP connection per client, with the coordinator on its own
/// thread.
#[derive(Debug, Clone, Copy)]
pub struct SocketTransport {
    pub io_timeout: Duration,
}

impl Default for SocketTransport {
    fn default() -> Self {
        Self {
            io_timeout: Duration::from_secs(30),
        }
    }
}

fn net_err(what: &str, e: std::io::Error) -> Error {
    Error::Transport(format!("{what}: {e}"))
}

impl Transport for SocketTransport {
    fn name(&self) -> &'static str {
        "socket"
    }

    fn exchange(&self, mut coordinator: Coordinator, submissions: Vec<Submission>) -> Result<Exchange> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| net_err("bind", e))?;
        let addr = listener.local_addr().map_err(|e| net_err("local_addr", e))?;
        let expected = submissions.len();
        let timeout = self.io_timeout;

        thread::scope(|scope| {
            let server = scope.spawn(move || -> Result<CoordinatorOutcome> {
                let mut open = Vec::new();
                for _ in 0..expected {
                    let (mut stream, _) = listener.accept().map_err(|e| net_err("accept", e))?;
                    stream
                        .set_read_timeout(Some(timeout))
                        .map_err(|e| net_err("set_read_timeout", e))?;
                    // A client that closes without a frame is a dropout.
                    if let Some(frame) = read_frame(&mut stream)? {
                        coordinator.receive(&frame)?;
                        open.push(stream);
                    }
                }
                let outcome = coordinator.close();
                let reply = outcome.reply.encode();
                for stream in &mut open {
                    write_frame(stream, &reply)?;
                    let _ = stream.shutdown(Shutdown::Write);
                }
                Ok(outcome)
            });

            let clients: Vec<_> = submissions
                .into_iter()
                .map(|sub| {
                    scope.spawn(move || -> Result<Option<(ParticipantId, Vec<u8>)>> {
                        let mut stream = TcpStream::connect(addr).map_err(|e| net_err("connect", e))?;
                        let Some(frame) = sub.frame else {
                            let _ = stream.shutdown(Shutdown::Both);
                            return Ok(None);
                        };
                        stream
                            .set_read_timeout(Some(timeout))
                            .map_err(|e| net_err("set_read_timeout", e))?;
                        write_frame(&mut stream, &frame)?;
                        Ok(read_frame(&mut stream)?.map(|reply| (sub.participant, reply)))
                    })
                })
                .collect();

            let outcome = server
                .join()
                .map_err(|_| Error::Transport("coordinator thread panicked".into()))??;
            let mut replies = BTreeMap::new();
            for client in clients {
                let res = client
                    .join()
                    .map_err(|_| Error::Transport("client thread panicked".into()))??;
                if let Some((id, reply)) = res {
                    replies.insert(id, reply);
                }
            }
            Ok(Exchange { outcome, replies })
        })
    }
}
