//! File wrappers: one scanner per on-disk layout, plus the matching payload
//! reader used by retrieval.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use super::format::{MdsfHeader, LABEL_BYTES, MDSF_HEADER_LEN};
use super::{io_err, FileRecordSpec, SampleIndexEntry, StorageError};

pub(super) struct Scanned {
    pub offset: u64,
    pub length: u32,
    pub label: i64,
}

fn parse_err(path: &Path, offset: u64, reason: impl Into<String>) -> StorageError {
    StorageError::Parse { path: path.to_path_buf(), offset, reason: reason.into() }
}

pub(super) fn scan(path: &Path, spec: &FileRecordSpec) -> Result<Vec<Scanned>, StorageError> {
    match spec {
        FileRecordSpec::BinaryFixedRecord { record_bytes } => scan_binary(path, *record_bytes),
        FileRecordSpec::Csv { label_column, has_header } => scan_csv(path, *label_column, *has_header),
        FileRecordSpec::SingleSample { label } => {
            let len = std::fs::metadata(path).map_err(io_err(path))?.len();
            let length = u32::try_from(len).map_err(|_| parse_err(path, 0, "single-sample file exceeds 4 GiB"))?;
            Ok(vec![Scanned { offset: 0, length, label: *label }])
        }
    }
}

fn scan_binary(path: &Path, record_bytes: u32) -> Result<Vec<Scanned>, StorageError> {
    let file = File::open(path).map_err(io_err(path))?;
    let actual_len = file.metadata().map_err(io_err(path))?.len();
    let mut r = BufReader::with_capacity(1 << 20, file);
    let mut hb = [0u8; 16];
    if actual_len < MDSF_HEADER_LEN {
        return Err(parse_err(path, actual_len, "file shorter than the 16-byte header"));
    }
    r.read_exact(&mut hb).map_err(io_err(path))?;
    let header = MdsfHeader::parse(&hb).map_err(|(off, reason)| parse_err(path, off, reason))?;
    if header.record_bytes != record_bytes {
        return Err(parse_err(
            path,
            8,
            format!("header record_bytes {} does not match spec {record_bytes}", header.record_bytes),
        ));
    }
    if actual_len != header.file_len() {
        let complete = (actual_len - MDSF_HEADER_LEN) / u64::from(record_bytes);
        let offset = MDSF_HEADER_LEN + complete.min(u64::from(header.record_count)) * u64::from(record_bytes);
        return Err(parse_err(
            path,
            offset,
            format!("file is {actual_len} bytes, header implies {}", header.file_len()),
        ));
    }
    let payload_len = header.payload_bytes();
    let skip = i64::from(payload_len);
    let mut out = Vec::with_capacity(header.record_count as usize);
    let mut label = [0u8; LABEL_BYTES as usize];
    for i in 0..header.record_count {
        let offset = header.record_offset(i);
        r.read_exact(&mut label).map_err(io_err(path))?;
        r.seek_relative(skip).map_err(io_err(path))?;
        out.push(Scanned { offset: offset + u64::from(LABEL_BYTES), length: payload_len, label: i64::from_le_bytes(label) });
    }
    Ok(out)
}

/// Byte span `[start, end)` of field `column` within `line`, if present.
fn field_span(line: &[u8], column: usize) -> Option<(usize, usize)> {
    let mut start = 0;
    for _ in 0..column {
        start += line[start..].iter().position(|&b| b == b',')? + 1;
    }
    let end = line[start..].iter().position(|&b| b == b',').map_or(line.len(), |p| start + p);
    Some((start, end))
}

fn scan_csv(path: &Path, label_column: usize, has_header: bool) -> Result<Vec<Scanned>, StorageError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if let Err(e) = std::str::from_utf8(&bytes) {
        return Err(parse_err(path, e.valid_up_to() as u64, "invalid UTF-8"));
    }
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut first = true;
    while pos < bytes.len() {
        let nl = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| pos + p);
        let mut line = &bytes[pos..nl];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        let line_start = pos;
        pos = nl + 1;
        if std::mem::take(&mut first) && has_header {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (s, e) = field_span(line, label_column)
            .ok_or_else(|| parse_err(path, line_start as u64, format!("row has no column {label_column}")))?;
        let text = std::str::from_utf8(&line[s..e]).expect("validated above");
        let label = text
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(path, (line_start + s) as u64, format!("label {text:?} is not an integer")))?;
        let length = u32::try_from(line.len()).map_err(|_| parse_err(path, line_start as u64, "row too long"))?;
        out.push(Scanned { offset: line_start as u64, length, label });
    }
    Ok(out)
}

/// Drops the label column from a CSV row, keeping the other bytes verbatim.
pub(super) fn strip_csv_label(line: &[u8], label_column: usize) -> Vec<u8> {
    match field_span(line, label_column) {
        Some((s, e)) if e < line.len() => [&line[..s], &line[e + 1..]].concat(),
        Some((s, _)) => line[..s.saturating_sub(1)].to_vec(),
        None => line.to_vec(),
    }
}

/// Converts the raw byte span of an entry into its payload.
pub(super) fn finish_payload(spec: &FileRecordSpec, raw: Vec<u8>) -> Vec<u8> {
    match spec {
        FileRecordSpec::Csv { label_column, .. } => strip_csv_label(&raw, *label_column),
        _ => raw,
    }
}

pub(super) fn read_payload<R: Read + Seek>(
    r: &mut R,
    path: &Path,
    spec: &FileRecordSpec,
    e: &SampleIndexEntry,
) -> Result<Vec<u8>, StorageError> {
    r.seek(SeekFrom::Start(e.byte_offset)).map_err(io_err(path))?;
    let mut raw = vec![0u8; e.length as usize];
    r.read_exact(&mut raw).map_err(io_err(path))?;
    Ok(finish_payload(spec, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans() {
        assert_eq!(field_span(b"a,bb,c", 1), Some((2, 4)));
        assert_eq!(field_span(b"a,bb,c", 2), Some((5, 6)));
        assert_eq!(field_span(b"a,bb,c", 3), None);
        assert_eq!(strip_csv_label(b"1,x,y", 0), b"x,y");
        assert_eq!(strip_csv_label(b"x,y,1", 2), b"x,y");
        assert_eq!(strip_csv_label(b"7", 0), b"");
    }
}
