//! Envelopes over a loopback TCP connection, one JSON frame per line.
//! Matrices and floats travel as little-endian bytes so delivery is
//! bit-exact.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use vtgan_core::nn::Tensor2;
use vtgan_core::protocol::{Envelope, InProcess, Message, Party, Path, Phase, ProtocolError, Transport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `f64`s, little-endian, base64.
    pub data: String,
}

/// The non-matrix fields of a message.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contributor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Path>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond_loss_bits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub round: u64,
    pub phase: Phase,
    pub sender: Party,
    pub receiver: Party,
    pub kind: String,
    pub payload: Option<Payload>,
    pub meta: Meta,
}

fn encode_tensor(t: &Tensor2) -> Payload {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    Payload {
        rows: t.rows(),
        cols: t.cols(),
        data: STANDARD.encode(bytes),
    }
}

fn decode_tensor(p: &Payload) -> Result<Tensor2, ProtocolError> {
    let bytes = STANDARD
        .decode(&p.data)
        .map_err(|e| ProtocolError::Transport(format!("payload: {e}")))?;
    if bytes.len() != p.rows * p.cols * 8 {
        return Err(ProtocolError::Transport(format!(
            "payload of {} bytes for a {}x{} matrix",
            bytes.len(),
            p.rows,
            p.cols
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Tensor2::from_vec(p.rows, p.cols, data)?)
}

impl Frame {
    pub fn from_envelope(env: &Envelope) -> Self {
        let mut meta = Meta::default();
        match &env.message {
            Message::CvRequest { contributor, batch } => {
                meta.contributor = Some(*contributor);
                meta.batch = Some(*batch);
            }
            Message::CvAnnounce { contributor, idx, .. } => {
                meta.contributor = Some(*contributor);
                meta.idx = idx.clone();
            }
            Message::BottomDiscLogits { path, .. } | Message::GradDown { path, .. } => meta.path = Some(*path),
            Message::GradUp { cond_loss, .. } => meta.cond_loss_bits = Some(cond_loss.to_bits()),
            Message::ShuffleBarrier { round, shuffle } => {
                meta.round = Some(*round);
                meta.shuffle = Some(*shuffle);
            }
            Message::SynthRequest { n } => meta.n = Some(*n),
            Message::SplitGenLogits { .. } | Message::SynthRows { .. } => {}
        }
        Self {
            round: env.round,
            phase: env.phase,
            sender: env.sender,
            receiver: env.receiver,
            kind: env.message.kind().into(),
            payload: env.message.payload().map(encode_tensor),
            meta,
        }
    }

    pub fn into_envelope(self) -> Result<Envelope, ProtocolError> {
        let kind = self.kind.clone();
        let missing = |field: &str| ProtocolError::Transport(format!("{kind} frame without {field}"));
        let tensor = || match &self.payload {
            Some(p) => decode_tensor(p),
            None => Err(missing("payload")),
        };
        let m = &self.meta;
        let message = match self.kind.as_str() {
            "cv_request" => Message::CvRequest {
                contributor: m.contributor.ok_or_else(|| missing("contributor"))?,
                batch: m.batch.ok_or_else(|| missing("batch"))?,
            },
            "cv_announce" => Message::CvAnnounce {
                cv: tensor()?,
                contributor: m.contributor.ok_or_else(|| missing("contributor"))?,
                idx: m.idx.clone(),
            },
            "split_gen_logits" => Message::SplitGenLogits { piece: tensor()? },
            "bottom_disc_logits" => Message::BottomDiscLogits {
                path: m.path.ok_or_else(|| missing("path"))?,
                logits: tensor()?,
            },
            "grad_down" => Message::GradDown {
                path: m.path.ok_or_else(|| missing("path"))?,
                grad: tensor()?,
            },
            "grad_up" => Message::GradUp {
                grad: tensor()?,
                cond_loss: f64::from_bits(m.cond_loss_bits.ok_or_else(|| missing("cond_loss_bits"))?),
            },
            "shuffle_barrier" => Message::ShuffleBarrier {
                round: m.round.ok_or_else(|| missing("round"))?,
                shuffle: m.shuffle.ok_or_else(|| missing("shuffle"))?,
            },
            "synth_request" => Message::SynthRequest {
                n: m.n.ok_or_else(|| missing("n"))?,
            },
            "synth_rows" => Message::SynthRows { rows: tensor()? },
            other => return Err(ProtocolError::Transport(format!("unknown frame kind {other:?}"))),
        };
        Ok(Envelope {
            round: self.round,
            phase: self.phase,
            sender: self.sender,
            receiver: self.receiver,
            message,
        })
    }
}

/// Sends every envelope through a real socket pair on 127.0.0.1; a reader
/// thread decodes frames in arrival order.
pub struct TcpLoopback {
    writer: BufWriter<TcpStream>,
    inbox: mpsc::Receiver<Result<Envelope, ProtocolError>>,
    in_flight: usize,
    reader: Option<thread::JoinHandle<()>>,
}

fn transport_err(e: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::Transport(e.to_string())
}

fn read_frames(stream: TcpStream, tx: mpsc::Sender<Result<Envelope, ProtocolError>>) {
    let mut r = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match r.read_until(b'\n', &mut buf) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let res = serde_json::from_slice::<Frame>(&buf)
            .map_err(transport_err)
            .and_then(Frame::into_envelope);
        if tx.send(res).is_err() {
            return;
        }
    }
}

impl TcpLoopback {
    pub fn connect() -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(transport_err)?;
        let addr = listener.local_addr().map_err(transport_err)?;
        let out = TcpStream::connect(addr).map_err(transport_err)?;
        out.set_nodelay(true).map_err(transport_err)?;
        let (incoming, _) = listener.accept().map_err(transport_err)?;
        let (tx, rx) = mpsc::channel();
        let reader = thread::spawn(move || read_frames(incoming, tx));
        log::debug!("tcp loopback on {addr}");
        Ok(Self {
            writer: BufWriter::new(out),
            inbox: rx,
            in_flight: 0,
            reader: Some(reader),
        })
    }
}

impl Transport for TcpLoopback {
    fn send(&mut self, env: Envelope) -> Result<(), ProtocolError> {
        // serde_json escapes newlines inside strings, so a frame is one line.
        let mut body = serde_json::to_vec(&Frame::from_envelope(&env)).map_err(transport_err)?;
        body.push(b'\n');
        self.writer.write_all(&body).map_err(transport_err)?;
        self.in_flight += 1;
        Ok(())
    }

    fn next(&mut self) -> Result<Option<Envelope>, ProtocolError> {
        if self.in_flight == 0 {
            return Ok(None);
        }
        self.writer.flush().map_err(transport_err)?;
        let env = self
            .inbox
            .recv()
            .map_err(|_| ProtocolError::Transport("reader thread stopped".into()))??;
        self.in_flight -= 1;
        Ok(Some(env))
    }
}

impl Drop for TcpLoopback {
    fn drop(&mut self) {
        let _ = self.writer.flush();
        let _ = self.writer.get_ref().shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

/// The transport named in the config.
pub enum AnyTransport {
    InProcess(InProcess),
    Tcp(TcpLoopback),
}

impl AnyTransport {
    pub fn new(kind: crate::config::TransportKind) -> Result<Self, ProtocolError> {
        Ok(match kind {
            crate::config::TransportKind::InProcess => AnyTransport::InProcess(InProcess::new()),
            crate::config::TransportKind::Tcp => AnyTransport::Tcp(TcpLoopback::connect()?),
        })
    }
}

impl Transport for AnyTransport {
    fn send(&mut self, env: Envelope) -> Result<(), ProtocolError> {
        match self {
            AnyTransport::InProcess(t) => t.send(env),
            AnyTransport::Tcp(t) => t.send(env),
        }
    }

    fn next(&mut self) -> Result<Option<Envelope>, ProtocolError> {
        match self {
            AnyTransport::InProcess(t) => t.next(),
            AnyTransport::Tcp(t) => t.next(),
        }
    }
}
