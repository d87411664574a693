//! Length-prefixed JSON framing: a 4-byte big-endian length followed by
//! that many bytes of UTF-8 JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::report::Report;

/// Frames larger than this are rejected on read.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireMessage {
    Report { sent_at: f64, report: Report },
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> Result<()> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Wire(e.to_string()))?;
    let len = u32::try_from(body.len()).map_err(|_| Error::Wire("frame too large".into()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<WireMessage>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::Wire(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| Error::Wire(format!("truncated frame: {e}")))?;
    serde_json::from_slice(&body).map(Some).map_err(|e| Error::Wire(e.to_string()))
}

pub fn read_all<R: Read>(r: &mut R) -> Result<Vec<WireMessage>> {
    let mut out = Vec::new();
    while let Some(m) = read_frame(r)? {
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, Position3, RobotId};

    fn msg(id: u64) -> WireMessage {
        WireMessage::Report {
            sent_at: 1.5,
            report: Report {
                id,
                robot: RobotId(1),
                candidate: 9,
                created_at: 1.0,
                label: Label::Custom("valve".into()),
                position: Position3::new(1.0, -2.0, 0.25),
                covariance: [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.2]],
                observations: Vec::new(),
                images: Vec::new(),
                priority: 0.42,
                payload_bytes: 2000,
            },
        }
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &msg(1)).unwrap();
        write_frame(&mut buf, &msg(2)).unwrap();
        let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
        assert_eq!(buf[4], b'{');
        assert!(len < buf.len());
        assert_eq!(read_all(&mut buf.as_slice()).unwrap(), vec![msg(1), msg(2)]);
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &msg(1)).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_all(&mut buf.as_slice()), Err(Error::Wire(_))));
    }
}
