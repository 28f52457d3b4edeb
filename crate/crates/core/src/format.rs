//! Binary embedding stream files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! header  : magic "MEF1" | version u16 | dim u16 | 8 reserved bytes
//! record* : frame_index u64 | timestamp f64 | dim × f32
//! ```
//!
//! A file holding `n` records is exactly `16 + n * (16 + 4 * dim)` bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::frame::{FrameRecord, QuerySet};

pub const MAGIC: [u8; 4] = *b"MEF1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 16;

pub fn record_len(dim: usize) -> u64 {
    16 + 4 * dim as u64
}

/// Reads as many bytes as are available, up to `buf.len()`.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Lazy, constant-memory reader over the records of a stream file.
///
/// The iterator stops after the first error.
pub struct StreamReader<R> {
    inner: R,
    path: PathBuf,
    dim: usize,
    offset: u64,
    buf: Vec<u8>,
    last: Option<(u64, f64)>,
    done: bool,
}

impl StreamReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file), path)
    }
}

impl<R: Read> StreamReader<R> {
    /// `path` only labels error messages.
    pub fn new(mut inner: R, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let fail = |offset: u64, message: String| Error::Format {
            path: path.clone(),
            offset,
            message,
        };
        let mut header = [0u8; HEADER_LEN as usize];
        let got = read_full(&mut inner, &mut header).map_err(|e| Error::io(&path, e))?;
        if got < header.len() {
            return Err(fail(
                got as u64,
                format!("truncated header ({got} of 16 bytes)"),
            ));
        }
        if header[..4] != MAGIC {
            return Err(fail(0, format!("bad magic {:?}", &header[..4])));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let dim = u16::from_le_bytes([header[6], header[7]]) as usize;
        if dim == 0 {
            return Err(fail(6, "dimension is zero".into()));
        }
        Ok(Self {
            inner,
            path,
            dim,
            offset: HEADER_LEN,
            buf: vec![0u8; record_len(dim) as usize],
            last: None,
            done: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn fail(&self, offset: u64, message: String) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset,
            message,
        }
    }

    fn next_record(&mut self) -> Result<Option<FrameRecord>> {
        let start = self.offset;
        let got =
            read_full(&mut self.inner, &mut self.buf).map_err(|e| Error::io(&self.path, e))?;
        if got == 0 {
            return Ok(None);
        }
        if got < self.buf.len() {
            return Err(self.fail(
                start,
                format!("truncated record ({got} of {} bytes)", self.buf.len()),
            ));
        }
        self.offset += got as u64;
        let b = &self.buf;
        let frame_index = u64::from_le_bytes(b[0..8].try_into().unwrap());
        let timestamp = f64::from_le_bytes(b[8..16].try_into().unwrap());
        if !timestamp.is_finite() {
            return Err(self.fail(start + 8, format!("non-finite timestamp {timestamp}")));
        }
        if let Some((prev_index, prev_ts)) = self.last {
            if frame_index <= prev_index {
                return Err(self.fail(
                    start,
                    format!("frame index {frame_index} does not increase (previous {prev_index})"),
                ));
            }
            if timestamp < prev_ts {
                return Err(self.fail(
                    start + 8,
                    format!("timestamp {timestamp} decreases (previous {prev_ts})"),
                ));
            }
        }
        let values: Vec<f32> = b[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let embedding = EmbeddingVector::from_f32(&values).map_err(|e| match e {
            Error::NonFinite(i) => self.fail(start + 16 + 4 * i as u64, e.to_string()),
            other => self.fail(start + 16, other.to_string()),
        })?;
        self.last = Some((frame_index, timestamp));
        Ok(Some(FrameRecord::new(frame_index, timestamp, embedding)))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<StreamReader<BufReader<File>>> {
    StreamReader::open(path)
}

/// Reads a whole stream into memory.
pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    read_stream(path)?.collect()
}

pub struct StreamWriter<W: Write> {
    inner: W,
    dim: usize,
    last: Option<(u64, f64)>,
    buf: Vec<u8>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, dim: usize) -> io::Result<Self> {
        let dim16 = u16::try_from(dim).ok().filter(|&d| d > 0).ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("unsupported dimension {dim}"),
            )
        })?;
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&dim16.to_le_bytes());
        header.extend_from_slice(&[0u8; 8]);
        inner.write_all(&header)?;
        Ok(Self {
            inner,
            dim,
            last: None,
            buf: Vec::with_capacity(record_len(dim) as usize),
        })
    }

    /// Appends one record. Embedding values are stored as `f32`.
    pub fn write(&mut self, record: &FrameRecord) -> Result<()> {
        record.embedding.check_dim(self.dim)?;
        if let Some((prev, prev_ts)) = self.last {
            if record.frame_index <= prev {
                return Err(Error::OutOfOrder {
                    previous: prev,
                    found: record.frame_index,
                });
            }
            if record.timestamp < prev_ts {
                return Err(Error::Config(format!(
                    "frame {}: timestamp {} decreases (previous {prev_ts})",
                    record.frame_index, record.timestamp
                )));
            }
        }
        if !record.timestamp.is_finite() {
            return Err(Error::Config(format!(
                "frame {}: non-finite timestamp",
                record.frame_index
            )));
        }
        self.buf.clear();
        self.buf
            .extend_from_slice(&record.frame_index.to_le_bytes());
        self.buf.extend_from_slice(&record.timestamp.to_le_bytes());
        for &v in record.embedding.iter() {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.inner
            .write_all(&self.buf)
            .map_err(|e| Error::io("<stream>", e))?;
        self.last = Some((record.frame_index, record.timestamp));
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_stream<'a>(
    records: impl IntoIterator<Item = &'a FrameRecord>,
    dim: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = StreamWriter::new(BufWriter::new(file), dim).map_err(|e| Error::io(path, e))?;
    for r in records {
        w.write(r)?;
    }
    w.finish().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Query files are stream files: the first record is the positive query,
/// the rest are negatives.
pub fn read_queries(path: impl AsRef<Path>) -> Result<QuerySet> {
    let path = path.as_ref();
    let mut records = read_all(path)?.into_iter().map(|r| r.embedding);
    let positive = records.next().ok_or_else(|| Error::Format {
        path: path.into(),
        offset: HEADER_LEN,
        message: "query file holds no records".into(),
    })?;
    QuerySet::new(positive, records.collect())
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_queries(queries: &QuerySet, path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<FrameRecord> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| FrameRecord::new(i as u64, 0.0, q.clone()))
        .collect();
    write_stream(&records, queries.dim(), path)
}
