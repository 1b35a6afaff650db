// SPDX-License-Identifier: Apache-2.0

//! Wire protocol between starters/clients and the verifier.
//!
//! A frame is a big-endian u32 byte count followed by a UTF-8 JSON object
//! whose `"type"` field selects the message. Frames are capped at 1 MiB.
//! The server greets every connection with `HELLO` carrying a fresh session
//! nonce; quotes submitted on that connection must embed it.

use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::{Nonce, Quote};
use crate::codes::ErrorCode;
use crate::enclave::{Configuration, InstancePage};
use crate::hashcore::Digest;
use crate::sigstruct::SigStruct;
use crate::verifier::{SingletonIssue, Token, Verifier, VerifierError};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_LEN: usize = 1 << 20;
const SESSION_IDLE_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    #[serde(rename = "HELLO")]
    Hello {
        protocol_version: u32,
        nonce_hex: String,
        verifier_identity_hex: String,
    },
    #[serde(rename = "REQUEST_SINGLETON")]
    RequestSingleton {
        policy: String,
        common_sigstruct_b64: String,
    },
    #[serde(rename = "SINGLETON_ISSUE")]
    SingletonIssue {
        token_hex: String,
        instance_page_measured_b64: String,
        sigstruct_b64: String,
        verifier_identity_hex: String,
    },
    #[serde(rename = "ATTEST")]
    Attest {
        quote_b64: String,
        token_hex: String,
        channel_pub_b64: String,
    },
    #[serde(rename = "ATTEST_NAIVE")]
    AttestNaive {
        quote_b64: String,
        channel_pub_b64: String,
    },
    #[serde(rename = "CONFIG")]
    Config { entries: BTreeMap<String, String> },
    #[serde(rename = "ERROR")]
    Error { code: ErrorCode, detail: String },
}

impl Message {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Message::Error {
            code,
            detail: detail.into(),
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::RequestSingleton { .. } => "REQUEST_SINGLETON",
            Message::SingletonIssue { .. } => "SINGLETON_ISSUE",
            Message::Attest { .. } => "ATTEST",
            Message::AttestNaive { .. } => "ATTEST_NAIVE",
            Message::Config { .. } => "CONFIG",
            Message::Error { .. } => "ERROR",
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("frame of {0} bytes exceeds the 1 MiB limit")]
    Oversized(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        ErrorCode::Protocol
    }
}

/// Length-prefixed frame for `msg`.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let payload = serde_json::to_vec(msg).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if payload.len() > MAX_FRAME_LEN {
        return Err(ProtocolError::Oversized(payload.len()));
    }
    let mut frame = Vec::with_capacity(4 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Decodes exactly one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message, ProtocolError> {
    if frame.len() < 4 {
        return Err(ProtocolError::Malformed("short frame".into()));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::Oversized(len));
    }
    if frame.len() - 4 != len {
        return Err(ProtocolError::Malformed(format!(
            "length prefix {len} but {} payload bytes",
            frame.len() - 4
        )));
    }
    decode_payload(&frame[4..])
}

fn decode_payload(payload: &[u8]) -> Result<Message, ProtocolError> {
    serde_json::from_slice(payload).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// Reads one message. `Ok(None)` on a clean end of stream between frames.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Malformed("truncated length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::Oversized(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Malformed("truncated payload".into()),
        _ => e.into(),
    })?;
    decode_payload(&payload).map(Some)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

fn decode_hex32(s: &str, what: &str) -> Result<[u8; 32], String> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).map_err(|e| format!("{what}: {e}"))?;
    Ok(out)
}

fn decode_b64(s: &str, what: &str) -> Result<Vec<u8>, String> {
    B64.decode(s).map_err(|e| format!("{what}: {e}"))
}

// ---------------------------------------------------------------------------
// Server

struct Session<'a> {
    verifier: &'a Verifier,
    nonce: Nonce,
}

enum Reply {
    Send(Message),
    SendAndClose(Message),
    Drop,
}

impl Session<'_> {
    fn failure(err: VerifierError) -> Reply {
        match err.code() {
            Some(code) => Reply::Send(Message::error(code, err.to_string())),
            None => {
                warn!("dropping session: {err}");
                Reply::Drop
            }
        }
    }

    fn handle(&self, msg: Message) -> Reply {
        match msg {
            Message::RequestSingleton {
                policy,
                common_sigstruct_b64,
            } => {
                let presented = match SigStruct::from_base64(&common_sigstruct_b64) {
                    Ok(ss) => ss,
                    Err(e) => return Reply::Send(Message::error(ErrorCode::SigstructInvalid, e.to_string())),
                };
                match self.verifier.issue_singleton(&policy, &presented) {
                    Ok(issue) => Reply::Send(issue_message(&issue)),
                    Err(e) => Self::failure(e),
                }
            }
            Message::Attest {
                quote_b64,
                token_hex,
                channel_pub_b64,
            } => {
                let quote = match Quote::from_base64(&quote_b64) {
                    Ok(q) => q,
                    Err(e) => return Reply::Send(Message::error(ErrorCode::QuoteInvalid, e.to_string())),
                };
                let parsed = decode_hex32(&token_hex, "token")
                    .and_then(|t| decode_b64(&channel_pub_b64, "channel_pub").map(|c| (t, c)));
                let (token, channel_pub) = match parsed {
                    Ok(v) => v,
                    Err(e) => return Reply::SendAndClose(Message::error(ErrorCode::Protocol, e)),
                };
                match self.verifier.attest_singleton(&quote, &token, &channel_pub, &self.nonce) {
                    Ok(cfg) => Reply::Send(Message::Config { entries: cfg.entries }),
                    Err(e) => Self::failure(e),
                }
            }
            Message::AttestNaive {
                quote_b64,
                channel_pub_b64,
            } => {
                let quote = match Quote::from_base64(&quote_b64) {
                    Ok(q) => q,
                    Err(e) => return Reply::Send(Message::error(ErrorCode::QuoteInvalid, e.to_string())),
                };
                let channel_pub = match decode_b64(&channel_pub_b64, "channel_pub") {
                    Ok(c) => c,
                    Err(e) => return Reply::SendAndClose(Message::error(ErrorCode::Protocol, e)),
                };
                match self.verifier.attest_naive(&quote, &channel_pub, &self.nonce) {
                    Ok(cfg) => Reply::Send(Message::Config { entries: cfg.entries }),
                    Err(e) => Self::failure(e),
                }
            }
            other => Reply::SendAndClose(Message::error(
                ErrorCode::Protocol,
                format!("{} is not a request", other.type_name()),
            )),
        }
    }
}

fn issue_message(issue: &SingletonIssue) -> Message {
    Message::SingletonIssue {
        token_hex: hex::encode(issue.token),
        instance_page_measured_b64: B64.encode(issue.instance_page.measured_bytes()),
        sigstruct_b64: issue.sigstruct.to_base64(),
        verifier_identity_hex: issue.instance_page.verifier_identity.to_hex(),
    }
}

fn run_session(stream: TcpStream, verifier: &Verifier) -> Result<(), ProtocolError> {
    stream.set_read_timeout(Some(SESSION_IDLE_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);

    let session = Session {
        verifier,
        nonce: verifier.fresh_nonce(),
    };
    write_message(
        &mut writer,
        &Message::Hello {
            protocol_version: PROTOCOL_VERSION,
            nonce_hex: hex::encode(session.nonce),
            verifier_identity_hex: verifier.identity().to_hex(),
        },
    )?;

    loop {
        let msg = match read_message(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(()),
            Err(ProtocolError::Io(e)) => return Err(e.into()),
            Err(e) => {
                let _ = write_message(&mut writer, &Message::error(e.code(), e.to_string()));
                return Err(e);
            }
        };
        match session.handle(msg) {
            Reply::Send(m) => write_message(&mut writer, &m)?,
            Reply::SendAndClose(m) => {
                write_message(&mut writer, &m)?;
                return Ok(());
            }
            Reply::Drop => return Ok(()),
        }
    }
}

/// TCP front end for a [`Verifier`]. One thread per connection.
pub struct Server {
    listener: TcpListener,
    verifier: Arc<Verifier>,
    stop: Arc<AtomicBool>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, verifier: Arc<Verifier>) -> io::Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            verifier,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn verifier(&self) -> &Arc<Verifier> {
        &self.verifier
    }

    /// Accepts connections until stopped through a [`ServerHandle`].
    pub fn run(self) {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let verifier = Arc::clone(&self.verifier);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = run_session(stream, &verifier) {
                    debug!("session {peer:?} ended: {e}");
                }
            });
        }
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let thread = thread::Builder::new()
            .name("verifier-accept".into())
            .spawn(move || self.run())?;
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

/// Binds `addr` and serves forever.
pub fn serve<A: ToSocketAddrs>(addr: A, verifier: Arc<Verifier>) -> io::Result<()> {
    let server = Server::bind(addr, verifier)?;
    log::info!("verifier listening on {}", server.local_addr()?);
    server.run();
    Ok(())
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        if let Some(t) = self.thread.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Unblock accept().
            let _ = TcpStream::connect(self.addr);
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

// ---------------------------------------------------------------------------
// Client

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("verifier returned {code}: {detail}")]
    Verifier { code: ErrorCode, detail: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("connection closed by verifier")]
    Closed,
    #[error("invalid verifier response: {0}")]
    BadResponse(String),
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Verifier { code, .. } => Some(*code),
            _ => None,
        }
    }
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        ClientError::Protocol(e.into())
    }
}

/// Parsed `SINGLETON_ISSUE`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IssuedMaterial {
    pub token: Token,
    pub instance_page: InstancePage,
    pub sigstruct: SigStruct,
    pub verifier_identity: Digest,
}

pub struct VerifierClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    nonce: Nonce,
    verifier_identity: Digest,
}

impl VerifierClient {
    /// Connects and consumes the `HELLO`.
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let writer = BufWriter::new(stream);
        match read_message(&mut reader)? {
            Some(Message::Hello {
                protocol_version,
                nonce_hex,
                verifier_identity_hex,
            }) => {
                if protocol_version != PROTOCOL_VERSION {
                    return Err(ClientError::BadResponse(format!("protocol version {protocol_version}")));
                }
                let nonce = decode_hex32(&nonce_hex, "nonce").map_err(ClientError::BadResponse)?;
                let identity = decode_hex32(&verifier_identity_hex, "identity").map_err(ClientError::BadResponse)?;
                Ok(VerifierClient {
                    reader,
                    writer,
                    nonce,
                    verifier_identity: Digest(identity),
                })
            }
            Some(Message::Error { code, detail }) => Err(ClientError::Verifier { code, detail }),
            Some(other) => Err(ProtocolError::Unexpected(other.type_name()).into()),
            None => Err(ClientError::Closed),
        }
    }

    pub fn nonce(&self) -> &Nonce {
        &self.nonce
    }

    pub fn verifier_identity(&self) -> Digest {
        self.verifier_identity
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), ClientError> {
        Ok(write_message(&mut self.writer, msg)?)
    }

    pub fn receive(&mut self) -> Result<Message, ClientError> {
        match read_message(&mut self.reader)? {
            Some(Message::Error { code, detail }) => Err(ClientError::Verifier { code, detail }),
            Some(m) => Ok(m),
            None => Err(ClientError::Closed),
        }
    }

    pub fn call(&mut self, msg: &Message) -> Result<Message, ClientError> {
        self.send(msg)?;
        self.receive()
    }

    pub fn request_singleton(&mut self, policy: &str, common: &SigStruct) -> Result<IssuedMaterial, ClientError> {
        let reply = self.call(&Message::RequestSingleton {
            policy: policy.to_owned(),
            common_sigstruct_b64: common.to_base64(),
        })?;
        let Message::SingletonIssue {
            token_hex,
            instance_page_measured_b64,
            sigstruct_b64,
            verifier_identity_hex,
        } = reply
        else {
            return Err(ProtocolError::Unexpected(reply.type_name()).into());
        };
        let bad = ClientError::BadResponse;
        let token = decode_hex32(&token_hex, "token").map_err(bad)?;
        let identity = Digest(decode_hex32(&verifier_identity_hex, "identity").map_err(bad)?);
        let page_bytes = decode_b64(&instance_page_measured_b64, "instance page").map_err(bad)?;
        let instance_page = InstancePage::parse(&page_bytes).map_err(|e| bad(e.to_string()))?;
        if instance_page.token != token || instance_page.verifier_identity != identity {
            return Err(bad("instance page disagrees with token/identity".into()));
        }
        let sigstruct = SigStruct::from_base64(&sigstruct_b64).map_err(|e| bad(e.to_string()))?;
        Ok(IssuedMaterial {
            token,
            instance_page,
            sigstruct,
            verifier_identity: identity,
        })
    }

    pub fn attest(&mut self, quote: &Quote, token: &Token, channel_pub: &[u8]) -> Result<Configuration, ClientError> {
        let reply = self.call(&Message::Attest {
            quote_b64: quote.to_base64(),
            token_hex: hex::encode(token),
            channel_pub_b64: B64.encode(channel_pub),
        })?;
        config_of(reply)
    }

    pub fn attest_naive(&mut self, quote: &Quote, channel_pub: &[u8]) -> Result<Configuration, ClientError> {
        let reply = self.call(&Message::AttestNaive {
            quote_b64: quote.to_base64(),
            channel_pub_b64: B64.encode(channel_pub),
        })?;
        config_of(reply)
    }

    pub fn close(self) {
        let _ = self.writer.get_ref().shutdown(Shutdown::Both);
    }
}

fn config_of(reply: Message) -> Result<Configuration, ClientError> {
    match reply {
        Message::Config { entries } => Ok(Configuration { entries }),
        other => Err(ProtocolError::Unexpected(other.type_name()).into()),
    }
}
