//! Out-of-process enhancers.
//!
//! Wire format, both directions: a 4-byte little-endian unsigned payload
//! length followed by the payload. In embedding mode the payload is the
//! embedding as `dim` little-endian IEEE-754 `f32`s. The child answers each
//! request with exactly one response; only one request is in flight at a
//! time.

use std::io::{self, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::embedding::EmbeddingVector;
use crate::enhance::Enhancer;
use crate::error::{Error, Result};
use crate::frame::FrameRecord;

/// Largest payload accepted from a peer (64 MiB).
pub const MAX_PAYLOAD: u32 = 64 << 20;

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&n| n <= MAX_PAYLOAD)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "payload too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one framed payload. `Ok(None)` on a clean end of stream before the
/// length prefix.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => {
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "truncated length prefix",
                ))
            }
            n => got += n,
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("payload length {len} exceeds limit"),
        ));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

pub fn encode_embedding(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}

pub fn decode_embedding(payload: &[u8], dim: usize) -> Result<EmbeddingVector> {
    if payload.len() != dim * 4 {
        return Err(Error::DimMismatch {
            expected: dim,
            found: payload.len() / 4,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingVector::from_f32(&values)
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    responses: Receiver<io::Result<Option<Vec<u8>>>>,
}

impl Worker {
    fn spawn(command: &str) -> io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, responses) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let msg = read_frame(&mut reader);
                let done = !matches!(msg, Ok(Some(_)));
                if tx.send(msg).is_err() || done {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            responses,
        })
    }

    fn shutdown(mut self) {
        drop(self.stdin);
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Enhancer backed by a long-lived child process speaking the framed
/// embedding protocol on stdin/stdout. The command runs under `sh -c`.
///
/// A request that is not answered within the timeout counts as a failure;
/// the child is killed and a fresh one is started on the next request.
pub struct SubprocessEnhancer {
    command: String,
    timeout: Duration,
    worker: Option<Worker>,
}

impl SubprocessEnhancer {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        Self {
            command: command.into(),
            timeout,
            worker: None,
        }
    }

    fn round_trip(&mut self, payload: &[u8]) -> std::result::Result<Vec<u8>, String> {
        if self.worker.is_none() {
            let w = Worker::spawn(&self.command)
                .map_err(|e| format!("cannot start {:?}: {e}", self.command))?;
            self.worker = Some(w);
        }
        let worker = self.worker.as_mut().unwrap();
        let outcome = match write_frame(&mut worker.stdin, payload) {
            Err(e) => Err(format!("write to enhancer failed: {e}")),
            Ok(()) => match worker.responses.recv_timeout(self.timeout) {
                Ok(Ok(Some(resp))) => Ok(resp),
                Ok(Ok(None)) => Err("enhancer closed its output".into()),
                Ok(Err(e)) => Err(format!("bad response: {e}")),
                Err(RecvTimeoutError::Timeout) => {
                    Err(format!("no response within {:?}", self.timeout))
                }
                Err(RecvTimeoutError::Disconnected) => Err("enhancer exited".into()),
            },
        };
        if outcome.is_err() {
            if let Some(w) = self.worker.take() {
                w.shutdown();
            }
        }
        outcome
    }
}

impl Enhancer for SubprocessEnhancer {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        let fail = |reason: String| Error::Enhancer {
            frame_index: frame.frame_index,
            reason,
        };
        let response = self
            .round_trip(&encode_embedding(&frame.embedding))
            .map_err(fail)?;
        decode_embedding(&response, frame.embedding.dim()).map_err(|e| fail(e.to_string()))
    }

    fn name(&self) -> &str {
        "subprocess"
    }
}

impl Drop for SubprocessEnhancer {
    fn drop(&mut self) {
        if let Some(w) = self.worker.take() {
            w.shutdown();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frame_layout_is_length_prefixed() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &[0xAA, 0xBB, 0xCC]).unwrap();
        assert_eq!(buf, vec![3, 0, 0, 0, 0xAA, 0xBB, 0xCC]);
        let mut r = Cursor::new(buf);
        assert_eq!(read_frame(&mut r).unwrap(), Some(vec![0xAA, 0xBB, 0xCC]));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn truncated_frames_error() {
        let mut r = Cursor::new(vec![5, 0]);
        assert!(read_frame(&mut r).is_err());
        let mut r = Cursor::new(vec![5, 0, 0, 0, 1, 2]);
        assert!(read_frame(&mut r).is_err());
        let mut r = Cursor::new(u32::MAX.to_le_bytes().to_vec());
        assert!(read_frame(&mut r).is_err());
    }

    #[test]
    fn embedding_payload_is_f32_le() {
        let payload = encode_embedding(&[1.0, -2.5]);
        assert_eq!(
            payload,
            [1.0f32.to_le_bytes(), (-2.5f32).to_le_bytes()].concat()
        );
        let back = decode_embedding(&payload, 2).unwrap();
        assert_eq!(back.as_slice(), &[1.0, -2.5]);
        assert!(decode_embedding(&payload, 3).is_err());
    }

    fn frame(i: u64, values: &[f64]) -> FrameRecord {
        FrameRecord::new(i, 0.0, EmbeddingVector::new(values.to_vec()).unwrap())
    }

    #[test]
    fn cat_is_an_identity_enhancer() {
        let mut e = SubprocessEnhancer::new("cat", Duration::from_secs(5));
        for i in 0..3 {
            let f = frame(i, &[0.5, -0.25, i as f64]);
            assert_eq!(e.enhance(&f).unwrap(), f.embedding);
        }
    }

    #[test]
    fn silent_child_times_out_and_is_restarted() {
        let mut e = SubprocessEnhancer::new("sleep 30", Duration::from_millis(200));
        let err = e.enhance(&frame(4, &[1.0])).unwrap_err();
        assert!(
            matches!(err, Error::Enhancer { frame_index: 4, .. }),
            "{err}"
        );
        assert!(e.worker.is_none());
    }

    #[test]
    fn exiting_child_is_a_failure() {
        let mut e = SubprocessEnhancer::new("true", Duration::from_secs(5));
        assert!(e.enhance(&frame(0, &[1.0])).is_err());
    }
}
