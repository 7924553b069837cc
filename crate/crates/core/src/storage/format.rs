//! The `MDSF` fixed-record sample file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MDSF"
//! 4       4     version        u32 LE
//! 8       4     record_bytes   u32 LE
//! 12      4     record_count   u32 LE
//! 16      ...   record_count × record_bytes
//! ```
//!
//! Each record is an `i64` LE label followed by `record_bytes - 8` payload bytes.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

pub const MDSF_MAGIC: [u8; 4] = *b"MDSF";
pub const MDSF_VERSION: u32 = 1;
pub const MDSF_HEADER_LEN: u64 = 16;
/// Label width inside a record.
pub const LABEL_BYTES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdsfHeader {
    pub version: u32,
    pub record_bytes: u32,
    pub record_count: u32,
}

impl MdsfHeader {
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..4].copy_from_slice(&MDSF_MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..12].copy_from_slice(&self.record_bytes.to_le_bytes());
        out[12..16].copy_from_slice(&self.record_count.to_le_bytes());
        out
    }

    /// Parses a header; the error string names what is wrong, the caller adds
    /// path and offset.
    pub fn parse(bytes: &[u8; 16]) -> Result<Self, (u64, String)> {
        if bytes[..4] != MDSF_MAGIC {
            return Err((0, format!("bad magic {:?}", &bytes[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let header = Self { version: word(4), record_bytes: word(8), record_count: word(12) };
        if header.version != MDSF_VERSION {
            return Err((4, format!("unsupported version {}", header.version)));
        }
        if header.record_bytes <= LABEL_BYTES {
            return Err((8, format!("record_bytes {} leaves no payload", header.record_bytes)));
        }
        Ok(header)
    }

    pub fn payload_bytes(&self) -> u32 {
        self.record_bytes - LABEL_BYTES
    }

    pub fn record_offset(&self, index: u32) -> u64 {
        MDSF_HEADER_LEN + u64::from(index) * u64::from(self.record_bytes)
    }

    pub fn file_len(&self) -> u64 {
        self.record_offset(self.record_count)
    }
}

/// Streaming writer; the record count is patched into the header on `finish`.
pub struct MdsfWriter<W: Write + io::Seek> {
    out: W,
    record_bytes: u32,
    count: u32,
}

impl MdsfWriter<BufWriter<File>> {
    pub fn create(path: &Path, record_bytes: u32) -> io::Result<Self> {
        let file = File::create(path)?;
        Self::new(BufWriter::with_capacity(1 << 20, file), record_bytes)
    }
}

impl<W: Write + io::Seek> MdsfWriter<W> {
    pub fn new(mut out: W, record_bytes: u32) -> io::Result<Self> {
        if record_bytes <= LABEL_BYTES {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "record_bytes must be at least 9"));
        }
        let header = MdsfHeader { version: MDSF_VERSION, record_bytes, record_count: 0 };
        out.write_all(&header.to_bytes())?;
        Ok(Self { out, record_bytes, count: 0 })
    }

    pub fn push(&mut self, label: i64, payload: &[u8]) -> io::Result<()> {
        if payload.len() != (self.record_bytes - LABEL_BYTES) as usize {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("payload of {} bytes, record holds {}", payload.len(), self.record_bytes - LABEL_BYTES),
            ));
        }
        self.out.write_all(&label.to_le_bytes())?;
        self.out.write_all(payload)?;
        self.count = self
            .count
            .checked_add(1)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "record count overflows u32"))?;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.seek(io::SeekFrom::Start(12))?;
        self.out.write_all(&self.count.to_le_bytes())?;
        self.out.seek(io::SeekFrom::End(0))?;
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a complete file in one go.
pub fn write_mdsf<'a, I>(path: &Path, record_bytes: u32, records: I) -> io::Result<()>
where
    I: IntoIterator<Item = (i64, &'a [u8])>,
{
    let mut w = MdsfWriter::create(path, record_bytes)?;
    for (label, payload) in records {
        w.push(label, payload)?;
    }
    w.finish()?;
    Ok(())
}

/// `(label, payload)` pairs in file order.
pub type MdsfRecords = Vec<(i64, Vec<u8>)>;

/// Reads every record of a file into memory. Used by tests and the sequential
/// baseline; the store itself never loads whole files.
pub fn read_mdsf(path: &Path) -> io::Result<(MdsfHeader, MdsfRecords)> {
    let mut f = File::open(path)?;
    let mut hb = [0u8; 16];
    f.read_exact(&mut hb)?;
    let header = MdsfHeader::parse(&hb).map_err(|(_, m)| io::Error::new(io::ErrorKind::InvalidData, m))?;
    let mut body = Vec::new();
    f.read_to_end(&mut body)?;
    let rb = header.record_bytes as usize;
    if body.len() != rb * header.record_count as usize {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "body length does not match header"));
    }
    let records = body
        .chunks_exact(rb)
        .map(|r| (i64::from_le_bytes(r[..8].try_into().unwrap()), r[8..].to_vec()))
        .collect();
    Ok((header, records))
}
