//! Client for an external perceptual-loss service.
//!
//! Every message travels in a frame `[u32 LE length][payload]`. Requests are
//! `u8 kind, u32 width, u32 height, f32 target[3wh], f32 render[3wh]`, with
//! kind 0 (handshake, zero-sized buffers), 1 (structural) or 2 (semantic).
//! A loss response is `u8 status` followed by `f32 loss, f32 grad[3wh]` on
//! success or `u32 len, utf8 message` on error. A handshake response is
//! `u8 status, u32 version, u8 count` and `count` model ids as
//! `u16 len, utf8`. All integers and floats are little-endian.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Mutex;
use std::time::Duration;

use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};
use crate::loss::{gray_to_rgb, LossTarget, PerceptualBackend};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ADDR: &str = "127.0.0.1:7301";
pub const MODEL_IDS: [&str; 2] = ["lpips-vgg16", "clip-rn101"];
/// Upper bound on accepted frame payloads (1 GiB).
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Handshake = 0,
    Structural = 1,
    Semantic = 2,
}

impl TryFrom<u8> for MessageKind {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Self::Handshake),
            1 => Ok(Self::Structural),
            2 => Ok(Self::Semantic),
            _ => Err(Error::Protocol(format!("unknown message kind {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRequest {
    pub kind: MessageKind,
    pub width: u32,
    pub height: u32,
    pub target: Vec<f32>,
    pub render: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LossResponse {
    Ok { loss: f32, grad: Vec<f32> },
    Error(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandshakeResponse {
    pub version: u32,
    pub model_ids: Vec<String>,
}

/// Bounds-checked little-endian reader over a payload.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Protocol(format!("truncated payload at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Protocol("buffer too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "{} trailing bytes in payload",
                self.buf.len() - self.pos
            )))
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn plane_len(width: u32, height: u32) -> Result<usize> {
    (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .filter(|&n| n.saturating_mul(8) <= MAX_FRAME)
        .ok_or_else(|| Error::Protocol(format!("image {width}x{height} exceeds frame limit")))
}

impl LossRequest {
    pub fn handshake() -> Self {
        Self {
            kind: MessageKind::Handshake,
            width: 0,
            height: 0,
            target: Vec::new(),
            render: Vec::new(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let n = plane_len(self.width, self.height)?;
        if self.target.len() != n || self.render.len() != n {
            return Err(Error::Protocol(format!(
                "buffers must hold {n} values, got {} and {}",
                self.target.len(),
                self.render.len()
            )));
        }
        let mut out = Vec::with_capacity(9 + 8 * n);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        put_f32s(&mut out, &self.target);
        put_f32s(&mut out, &self.render);
        Ok(out)
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(payload);
        let kind = MessageKind::try_from(c.u8()?)?;
        let width = c.u32()?;
        let height = c.u32()?;
        let n = plane_len(width, height)?;
        let target = c.f32s(n)?;
        let render = c.f32s(n)?;
        c.finish()?;
        Ok(Self {
            kind,
            width,
            height,
            target,
            render,
        })
    }
}

impl LossResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Self::Ok { loss, grad } => {
                out.push(0);
                out.extend_from_slice(&loss.to_le_bytes());
                put_f32s(&mut out, grad);
            }
            Self::Error(msg) => {
                out.push(1);
                out.extend_from_slice(&(msg.len() as u32).to_le_bytes());
                out.extend_from_slice(msg.as_bytes());
            }
        }
        out
    }

    /// Decodes a response to a request over `plane_len` gradient values.
    pub fn decode(payload: &[u8], plane_len: usize) -> Result<Self> {
        let mut c = Cursor::new(payload);
        let resp = match c.u8()? {
            0 => {
                let loss = f32::from_le_bytes(c.take(4)?.try_into().unwrap());
                let grad = c.f32s(plane_len)?;
                Self::Ok { loss, grad }
            }
            1 => {
                let n = c.u32()? as usize;
                let msg = String::from_utf8_lossy(c.take(n)?).into_owned();
                Self::Error(msg)
            }
            s => return Err(Error::Protocol(format!("unknown response status {s}"))),
        };
        c.finish()?;
        Ok(resp)
    }
}

impl HandshakeResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0u8];
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.model_ids.len() as u8);
        for id in &self.model_ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(payload);
        let status = c.u8()?;
        if status != 0 {
            return Err(Error::Protocol(format!("handshake rejected with status {status}")));
        }
        let version = c.u32()?;
        let count = c.u8()?;
        let mut model_ids = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = c.u16()? as usize;
            let id =
                std::str::from_utf8(c.take(n)?).map_err(|e| Error::Protocol(format!("model id is not utf-8: {e}")))?;
            model_ids.push(id.to_owned());
        }
        c.finish()?;
        Ok(Self { version, model_ids })
    }
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds limit",
            payload.len()
        )));
    }
    let io = |e| Error::Protocol(format!("write failed: {e}"));
    w.write_all(&(payload.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(payload).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let io = |e| Error::Protocol(format!("read failed: {e}"));
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io)?;
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {n} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(io)?;
    Ok(buf)
}

/// Perceptual backend served over TCP. The connection carries one request
/// at a time.
pub struct SidecarBackend {
    stream: Mutex<TcpStream>,
    pub handshake: HandshakeResponse,
}

impl SidecarBackend {
    pub fn connect(addr: &str) -> Result<Self> {
        let mut stream = TcpStream::connect(addr)
            .map_err(|e| Error::Protocol(format!("cannot connect to loss service at {addr}: {e}")))?;
        stream
            .set_read_timeout(Some(Duration::from_secs(300)))
            .and_then(|_| stream.set_nodelay(true))
            .map_err(|e| Error::Protocol(e.to_string()))?;
        write_frame(&mut stream, &LossRequest::handshake().encode()?)?;
        let handshake = HandshakeResponse::decode(&read_frame(&mut stream)?)?;
        if handshake.version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "loss service speaks protocol {}, expected {PROTOCOL_VERSION}",
                handshake.version
            )));
        }
        log::info!("loss service at {addr}: models {:?}", handshake.model_ids);
        Ok(Self {
            stream: Mutex::new(stream),
            handshake,
        })
    }

    fn request(&self, kind: MessageKind, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        target.gray.check_dims(render)?;
        let req = LossRequest {
            kind,
            width: render.width as u32,
            height: render.height as u32,
            target: target.rgb_or_gray(),
            render: gray_to_rgb(render),
        };
        let payload = req.encode()?;
        let n = req.target.len();
        let reply = {
            let mut s = self
                .stream
                .lock()
                .map_err(|_| Error::Protocol("connection lock poisoned".into()))?;
            write_frame(&mut *s, &payload)?;
            read_frame(&mut *s)?
        };
        match LossResponse::decode(&reply, n)? {
            LossResponse::Ok { loss, grad } => {
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Protocol("loss service returned non-finite values".into()));
                }
                // the render is gray replicated into three channels
                let data = grad
                    .chunks_exact(3)
                    .map(|c| c[0] as f64 + c[1] as f64 + c[2] as f64)
                    .collect();
                Ok((loss as f64, ImageBuffer::from_vec(render.width, render.height, data)?))
            }
            LossResponse::Error(msg) => Err(Error::Protocol(format!("loss service error: {msg}"))),
        }
    }
}

impl PerceptualBackend for SidecarBackend {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn max_concurrency(&self) -> usize {
        1
    }

    fn structural(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        self.request(MessageKind::Structural, target, render)
    }

    fn semantic(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        self.request(MessageKind::Semantic, target, render)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let req = LossRequest {
            kind: MessageKind::Semantic,
            width: 2,
            height: 1,
            target: vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125],
            render: vec![1.0; 6],
        };
        let bytes = req.encode().unwrap();
        assert_eq!(bytes.len(), 9 + 48);
        assert_eq!(LossRequest::decode(&bytes).unwrap(), req);
        assert!(LossRequest::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn handshake_round_trip() {
        let h = HandshakeResponse {
            version: PROTOCOL_VERSION,
            model_ids: MODEL_IDS.iter().map(|s| s.to_string()).collect(),
        };
        assert_eq!(HandshakeResponse::decode(&h.encode()).unwrap(), h);
    }

    #[test]
    fn error_response_round_trip() {
        let r = LossResponse::Error("model failed".into());
        assert_eq!(LossResponse::decode(&r.encode(), 12).unwrap(), r);
    }

    #[test]
    fn frames_reject_oversized_lengths() {
        let mut bytes = (u32::MAX).to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0; 8]);
        assert!(read_frame(&mut bytes.as_slice()).is_err());
    }
}
