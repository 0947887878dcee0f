//! Messages between federates and the RTI, and their framing: a 4-byte
//! big-endian length followed by a UTF-8 JSON object.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::time::{Tag, TimeValue};
use crate::value::Value;

/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    Hello { federate: usize, fed_count: usize },
    /// Next event tag of the sender.
    Net { tag: Tag },
    /// Tag-advance grant: the receiver may process tags up to and including
    /// `tag`.
    Tag { tag: Tag },
    /// A value on a cross-federate connection; `tag` already includes the
    /// connection delay.
    Msg { connection: String, tag: Tag, value: Value },
    /// Logical tag complete.
    Ltc { tag: Tag },
    Stop { tag: Tag },
    Fault {
        connection: String,
        tag: Tag,
        #[serde(with = "nanos")]
        lateness: TimeValue,
    },
}

mod nanos {
    use super::TimeValue;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &TimeValue, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(t.as_nanos())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TimeValue, D::Error> {
        i64::deserialize(d).map(TimeValue::from_nanos)
    }
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("wire messages always serialize");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn write_frame(w: &mut impl Write, msg: &WireMessage) -> io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<WireMessage>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let msg = WireMessage::Net { tag: Tag::new(TimeValue::from_millis(10), 2) };
        let bytes = encode(&msg);
        let body = br#"{"type":"NET","tag":{"t":10000000,"m":2}}"#;
        assert_eq!(&bytes[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], body);
    }

    #[test]
    fn round_trip_all_kinds() {
        let t = Tag::new(TimeValue::from_millis(12), 0);
        let msgs = vec![
            WireMessage::Hello { federate: 1, fed_count: 2 },
            WireMessage::Net { tag: Tag::FOREVER },
            WireMessage::Tag { tag: t },
            WireMessage::Msg { connection: "vision.stop->robot.human".into(), tag: t, value: Value::Float(-0.5) },
            WireMessage::Ltc { tag: t },
            WireMessage::Stop { tag: t },
            WireMessage::Fault { connection: "a->b".into(), tag: t, lateness: TimeValue::from_millis(5) },
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_frame(&mut buf, m).unwrap();
        }
        let mut r = buf.as_slice();
        let mut back = Vec::new();
        while let Some(m) = read_frame(&mut r).unwrap() {
            back.push(m);
        }
        assert_eq!(back, msgs);
    }

    #[test]
    fn rejects_oversized_frames() {
        let mut bytes = (u32::MAX).to_be_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert!(read_frame(&mut bytes.as_slice()).is_err());
    }
}
