//! Wire protocol for out-of-process decoders and purifiers.
//!
//! Transport is a byte stream: a spawned child process's standard streams
//! or a TCP connection. The sidecar opens with an 8-byte handshake — magic
//! `ZBWM`, version u16 little-endian, output dimension M u16 little-endian —
//! then answers one request at a time. A request is the 12-byte raw-tensor
//! header plus `H*W*C` f32 little-endian values, channel-planar. A decoder
//! sidecar responds with M f32 values; a purifier sidecar declares `M = 0`
//! in the handshake and responds with a full raw tensor.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::adapter::DecodeVector;
use crate::error::{Error, Result};
use crate::image::{read_raw_tensor, write_raw_tensor, Image};

pub const PROTOCOL_MAGIC: &[u8; 4] = b"ZBWM";
pub const PROTOCOL_VERSION: u16 = 1;
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30);

/// Sidecar role, advertised through the handshake's M field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidecarRole {
    /// Responds with an M-vector.
    Decoder { output_dim: usize },
    /// Responds with a raw tensor of the same shape (M = 0 on the wire).
    Purifier,
}

enum Transport {
    Tcp(TcpStream),
    Child {
        child: Child,
        stdin: std::process::ChildStdin,
        reply_rx: mpsc::Receiver<std::io::Result<Vec<u8>>>,
        want_tx: mpsc::Sender<usize>,
    },
}

/// A connection to a sidecar process, one request in flight at a time.
pub struct Sidecar {
    transport: Transport,
    role: SidecarRole,
    deadline: Duration,
}

fn parse_handshake(buf: &[u8; 8]) -> Result<SidecarRole> {
    if &buf[0..4] != PROTOCOL_MAGIC {
        return Err(Error::Protocol(format!(
            "bad handshake magic {:02x?}",
            &buf[0..4]
        )));
    }
    let version = u16::from_le_bytes(buf[4..6].try_into().unwrap());
    if version != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!(
            "sidecar speaks version {version}, expected {PROTOCOL_VERSION}"
        )));
    }
    let m = u16::from_le_bytes(buf[6..8].try_into().unwrap()) as usize;
    Ok(if m == 0 {
        SidecarRole::Purifier
    } else {
        SidecarRole::Decoder { output_dim: m }
    })
}

impl Sidecar {
    /// Connect over TCP and complete the handshake.
    pub fn connect_tcp<A: ToSocketAddrs>(addr: A, deadline: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Protocol(format!("tcp connect failed: {e}")))?;
        stream
            .set_read_timeout(Some(deadline))
            .and_then(|_| stream.set_write_timeout(Some(deadline)))
            .map_err(|e| Error::Protocol(format!("socket configuration failed: {e}")))?;
        let mut hs = [0u8; 8];
        let mut s = &stream;
        s.read_exact(&mut hs).map_err(map_timeout(deadline))?;
        let role = parse_handshake(&hs)?;
        Ok(Self {
            transport: Transport::Tcp(stream),
            role,
            deadline,
        })
    }

    /// Spawn `command` (whitespace-split) as a child process speaking the
    /// protocol on its standard streams.
    pub fn spawn(command: &str, deadline: Duration) -> Result<Self> {
        let parts: Vec<&str> = command.split_whitespace().collect();
        if parts.is_empty() {
            return Err(Error::Protocol("empty sidecar command".into()));
        }
        let mut child = Command::new(parts[0])
            .args(&parts[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot spawn sidecar `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        // Pipes have no native timeouts; a reader thread fetches exactly the
        // requested byte counts and responses arrive through a channel.
        let (want_tx, want_rx) = mpsc::channel::<usize>();
        let (reply_tx, reply_rx) = mpsc::channel::<std::io::Result<Vec<u8>>>();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            while let Ok(len) = want_rx.recv() {
                let mut buf = vec![0u8; len];
                let res = reader.read_exact(&mut buf).map(|_| buf);
                if reply_tx.send(res).is_err() {
                    break;
                }
            }
        });

        let mut sidecar = Self {
            transport: Transport::Child {
                child,
                stdin,
                reply_rx,
                want_tx,
            },
            role: SidecarRole::Purifier, // provisional until the handshake
            deadline,
        };
        let hs = sidecar.read_bytes(8)?;
        sidecar.role = parse_handshake(&hs.try_into().expect("8 bytes"))?;
        Ok(sidecar)
    }

    pub fn role(&self) -> SidecarRole {
        self.role
    }

    fn read_bytes(&mut self, len: usize) -> Result<Vec<u8>> {
        match &mut self.transport {
            Transport::Tcp(stream) => {
                let mut buf = vec![0u8; len];
                stream
                    .read_exact(&mut buf)
                    .map_err(map_timeout(self.deadline))?;
                Ok(buf)
            }
            Transport::Child {
                reply_rx, want_tx, ..
            } => {
                want_tx
                    .send(len)
                    .map_err(|_| Error::Protocol("sidecar reader thread gone".into()))?;
                match reply_rx.recv_timeout(self.deadline) {
                    Ok(Ok(buf)) => Ok(buf),
                    Ok(Err(e)) => Err(Error::Protocol(format!("sidecar read failed: {e}"))),
                    Err(_) => Err(Error::SidecarTimeout(self.deadline)),
                }
            }
        }
    }

    fn write_request(&mut self, img: &Image) -> Result<()> {
        let mut payload = Vec::with_capacity(12 + img.num_samples() * 4);
        write_raw_tensor(&mut payload, img)
            .map_err(|e| Error::Protocol(format!("request encode failed: {e}")))?;
        match &mut self.transport {
            Transport::Tcp(stream) => stream
                .write_all(&payload)
                .and_then(|_| stream.flush())
                .map_err(map_timeout(self.deadline)),
            Transport::Child { stdin, .. } => stdin
                .write_all(&payload)
                .and_then(|_| stdin.flush())
                .map_err(|e| Error::Protocol(format!("sidecar write failed: {e}"))),
        }
    }

    /// Send an image, receive the sidecar's M-vector.
    pub fn decode(&mut self, img: &Image) -> Result<Vec<f64>> {
        let SidecarRole::Decoder { output_dim } = self.role else {
            return Err(Error::Protocol("sidecar is a purifier, not a decoder".into()));
        };
        self.write_request(img)?;
        let buf = self.read_bytes(output_dim * 4)?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    /// Send an image, receive the purified image.
    pub fn purify(&mut self, img: &Image) -> Result<Image> {
        if self.role != SidecarRole::Purifier {
            return Err(Error::Protocol("sidecar is a decoder, not a purifier".into()));
        }
        self.write_request(img)?;
        let header = self.read_bytes(12)?;
        let h = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if h != img.height() || w != img.width() || c != img.channels() {
            return Err(Error::Protocol(format!(
                "purifier changed dimensions to {h}x{w}x{c}"
            )));
        }
        let body = self.read_bytes(h * w * c * 4)?;
        let mut full = header;
        full.extend_from_slice(&body);
        read_raw_tensor(&mut full.as_slice())
    }
}

impl Drop for Sidecar {
    fn drop(&mut self) {
        if let Transport::Child { child, .. } = &mut self.transport {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn map_timeout(deadline: Duration) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if matches!(
            e.kind(),
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
        ) {
            Error::SidecarTimeout(deadline)
        } else {
            Error::Protocol(format!("sidecar transport error: {e}"))
        }
    }
}

/// An external decoder behind a sidecar connection. Interior mutability
/// keeps the [`DecodeVector`] surface shared-reference based; one request is
/// in flight per connection.
pub struct ExternalDecoder {
    sidecar: std::sync::Mutex<Sidecar>,
    output_dim: usize,
}

impl ExternalDecoder {
    pub fn new(sidecar: Sidecar) -> Result<Self> {
        let SidecarRole::Decoder { output_dim } = sidecar.role() else {
            return Err(Error::Protocol("handshake did not declare a decoder".into()));
        };
        Ok(Self {
            sidecar: std::sync::Mutex::new(sidecar),
            output_dim,
        })
    }
}

impl DecodeVector for ExternalDecoder {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn decode(&self, img: &Image) -> Result<Vec<f64>> {
        self.sidecar
            .lock()
            .expect("sidecar mutex poisoned")
            .decode(img)
    }
}

/// Serve the decoder side of the protocol on arbitrary streams; used by the
/// CLI sidecar mode and by protocol tests. Runs until the input stream
/// closes.
pub fn serve_decoder<R, W, F>(input: R, output: W, output_dim: usize, mut decode: F) -> Result<()>
where
    R: Read,
    W: Write,
    F: FnMut(&Image) -> Vec<f32>,
{
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    output
        .write_all(PROTOCOL_MAGIC)
        .and_then(|_| output.write_all(&PROTOCOL_VERSION.to_le_bytes()))
        .and_then(|_| output.write_all(&(output_dim as u16).to_le_bytes()))
        .and_then(|_| output.flush())
        .map_err(|e| Error::Protocol(format!("handshake write failed: {e}")))?;
    loop {
        let img = match read_raw_tensor(&mut input) {
            Ok(img) => img,
            Err(_) => return Ok(()), // stream closed
        };
        let v = decode(&img);
        if v.len() != output_dim {
            return Err(Error::Protocol(format!(
                "decoder produced {} values, declared {output_dim}",
                v.len()
            )));
        }
        let mut buf = Vec::with_capacity(v.len() * 4);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        output
            .write_all(&buf)
            .and_then(|_| output.flush())
            .map_err(|e| Error::Protocol(format!("response write failed: {e}")))?;
    }
}

/// Purifier-side counterpart of [`serve_decoder`].
pub fn serve_purifier<R, W, F>(input: R, output: W, mut purify: F) -> Result<()>
where
    R: Read,
    W: Write,
    F: FnMut(&Image) -> Image,
{
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    output
        .write_all(PROTOCOL_MAGIC)
        .and_then(|_| output.write_all(&PROTOCOL_VERSION.to_le_bytes()))
        .and_then(|_| output.write_all(&0u16.to_le_bytes()))
        .and_then(|_| output.flush())
        .map_err(|e| Error::Protocol(format!("handshake write failed: {e}")))?;
    loop {
        let img = match read_raw_tensor(&mut input) {
            Ok(img) => img,
            Err(_) => return Ok(()),
        };
        let out = purify(&img);
        write_raw_tensor(&mut output, &out)
            .and_then(|_| output.flush())
            .map_err(|e| Error::Protocol(format!("response write failed: {e}")))?;
    }
}

/// Environment variable naming the launch command for an external sidecar.
pub const SIDECAR_ENV: &str = "ZBWM_SIDECAR";

#[allow(unused)]
fn ensure_instant_unused(_: Instant) {}
