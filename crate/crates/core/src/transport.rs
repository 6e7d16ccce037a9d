//! Ordered, reliable duplex transports for framed messages.
//!
//! [`StreamTransport`] speaks the wire framing over any byte stream
//! (`TcpStream`, a pipe, ...). [`loopback_pair`] connects two in-process
//! peers through byte pipes with the same framing.

use crate::wire::{Message, WireError, WireMessage, HEADER_LEN};
use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the connection")]
    Closed,
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("injected fault after {0} frames")]
    Injected(usize),
}

pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Message, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        (**self).recv()
    }
}

pub struct StreamTransport<S> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.stream.write_all(&msg.encode())?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        match self.stream.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(TransportError::Closed)
            }
            Err(e) => return Err(e.into()),
        }
        let (kind, len) = WireMessage::parse_header(&header)?;
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload)?;
        Ok(Message::from_wire(&WireMessage { kind, payload })?)
    }
}

/// One end of an in-process byte pipe.
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pending.is_empty() {
            match self.rx.recv() {
                Ok(chunk) => self.pending.extend(chunk),
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer dropped"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub type LoopbackTransport = StreamTransport<PipeEnd>;

/// Two connected in-process transports.
pub fn loopback_pair() -> (LoopbackTransport, LoopbackTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        StreamTransport::new(PipeEnd {
            tx: a_tx,
            rx: a_rx,
            pending: VecDeque::new(),
        }),
        StreamTransport::new(PipeEnd {
            tx: b_tx,
            rx: b_rx,
            pending: VecDeque::new(),
        }),
    )
}

/// Every frame seen by one peer, in order, concatenated as wire bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    bytes: Vec<u8>,
    frames: usize,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, WireError> {
        let frames = WireMessage::decode_all(&bytes)?.len();
        Ok(Self { bytes, frames })
    }

    pub fn push(&mut self, msg: &Message) {
        self.bytes.extend(msg.encode());
        self.frames += 1;
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn messages(&self) -> Result<Vec<Message>, WireError> {
        WireMessage::decode_all(&self.bytes)?
            .iter()
            .map(Message::from_wire)
            .collect()
    }
}

/// Records both directions of traffic through the wrapped transport.
pub struct Recorder<T> {
    inner: T,
    transcript: Transcript,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            transcript: Transcript::new(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (T, Transcript) {
        (self.inner, self.transcript)
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.inner.send(msg)?;
        self.transcript.push(msg);
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let msg = self.inner.recv()?;
        self.transcript.push(&msg);
        Ok(msg)
    }
}

/// Passes traffic through until `budget` frames (sent or received) have
/// gone by, then fails every call.
pub struct FaultyTransport<T> {
    inner: T,
    budget: usize,
    seen: usize,
}

impl<T: Transport> FaultyTransport<T> {
    pub fn new(inner: T, budget: usize) -> Self {
        Self {
            inner,
            budget,
            seen: 0,
        }
    }

    fn tick(&mut self) -> Result<(), TransportError> {
        if self.seen >= self.budget {
            return Err(TransportError::Injected(self.seen));
        }
        self.seen += 1;
        Ok(())
    }
}

impl<T: Transport> Transport for FaultyTransport<T> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.tick()?;
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        self.tick()?;
        self.inner.recv()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::HashPurpose;
    use std::thread;

    #[test]
    fn loopback_carries_frames_both_ways() {
        let (mut a, mut b) = loopback_pair();
        let echo = thread::spawn(move || {
            while let Ok(msg) = b.recv() {
                if let Message::SiftResponse { accepted } = msg {
                    b.send(&Message::SiftResponse {
                        accepted: accepted + 1,
                    })
                    .unwrap();
                }
            }
        });
        let mut rec = Recorder::new(&mut a);
        for i in 0..5 {
            rec.send(&Message::SiftResponse { accepted: i }).unwrap();
            assert_eq!(
                rec.recv().unwrap(),
                Message::SiftResponse { accepted: i + 1 }
            );
        }
        assert_eq!(rec.transcript().len(), 10);
        let msgs = rec.transcript().messages().unwrap();
        assert_eq!(msgs[9], Message::SiftResponse { accepted: 5 });
        drop(rec);
        drop(a);
        echo.join().unwrap();
    }

    #[test]
    fn closed_peer_is_reported() {
        let (mut a, b) = loopback_pair();
        drop(b);
        assert!(matches!(a.recv(), Err(TransportError::Closed)));
        assert!(a
            .send(&Message::HashVerdict {
                purpose: HashPurpose::Verify,
                accepted: true
            })
            .is_err());
    }

    #[test]
    fn faulty_transport_trips() {
        let (a, _b) = loopback_pair();
        let mut t = FaultyTransport::new(a, 1);
        t.send(&Message::SiftResponse { accepted: 0 }).unwrap();
        assert!(matches!(
            t.send(&Message::SiftResponse { accepted: 0 }),
            Err(TransportError::Injected(1))
        ));
    }

    #[test]
    fn transcript_rejects_garbage() {
        assert!(Transcript::from_bytes(b"nope".to_vec()).is_err());
        let t = Transcript::from_bytes(Message::SiftResponse { accepted: 2 }.encode()).unwrap();
        assert_eq!(t.len(), 1);
    }
}
