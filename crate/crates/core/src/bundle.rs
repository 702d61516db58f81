//! FIB: the single-file image bundle.
//!
//! Layout: 18-byte header (magic "FIB1", u16 version, u32 entry_count,
//! u64 index_offset, little-endian), then the payload blobs in input order,
//! then the entry index. Payloads are the original encoded file bytes, so a
//! create/fetch round trip is byte-exact.

use crate::codec::{self, CodecError};
use crate::raster::PixelImage;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use crate::codec::ImageFormat;

pub const BUNDLE_MAGIC: [u8; 4] = *b"FIB1";
pub const BUNDLE_VERSION: u16 = 1;
const HEADER_LEN: u64 = 18;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a bundle: bad magic")]
    BadMagic,
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
    #[error("source {name:?} is not a supported image: {source}")]
    BadSource {
        name: String,
        #[source]
        source: CodecError,
    },
    #[error("duplicate source name {0:?}")]
    DuplicateName(String),
    #[error("source name {0:?} exceeds 255 bytes")]
    NameTooLong(String),
    #[error("entry index {index} out of range (entry_count {count})")]
    IndexOutOfRange { index: u32, count: u32 },
    #[error("entry {index} payload decode failed: {source}")]
    PayloadDecode {
        index: u32,
        #[source]
        source: CodecError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleHeader {
    pub version: u16,
    pub entry_count: u32,
    pub index_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryMeta {
    pub index: u32,
    pub name: String,
    pub format: ImageFormat,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub payload_offset: u64,
    pub payload_length: u64,
}

/// Half-open range of entry indices assigned to one worker split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub start_index: u32,
    pub end_index: u32,
}

impl Split {
    pub fn len(&self) -> u32 {
        self.end_index - self.start_index
    }

    pub fn is_empty(&self) -> bool {
        self.start_index >= self.end_index
    }
}

/// Write a bundle from (name, encoded image bytes) sources, in input order.
pub fn bundle_create<P: AsRef<Path>>(
    path: P,
    sources: &[(String, Vec<u8>)],
) -> Result<(), BundleError> {
    let path = path.as_ref();
    let mut entries = Vec::with_capacity(sources.len());
    let mut seen = std::collections::HashSet::new();
    let mut offset = HEADER_LEN;
    for (i, (name, bytes)) in sources.iter().enumerate() {
        if !seen.insert(name.clone()) {
            return Err(BundleError::DuplicateName(name.clone()));
        }
        if name.as_bytes().len() > 255 {
            return Err(BundleError::NameTooLong(name.clone()));
        }
        let format = codec::detect_format(bytes)
            .and_then(|f| codec::decode(bytes).map(|img| (f, img)))
            .map_err(|source| BundleError::BadSource { name: name.clone(), source })?;
        let (format, img) = format;
        entries.push(EntryMeta {
            index: i as u32,
            name: name.clone(),
            format,
            width: img.width(),
            height: img.height(),
            channels: img.channels(),
            payload_offset: offset,
            payload_length: bytes.len() as u64,
        });
        offset += bytes.len() as u64;
    }

    let io_err = |source| BundleError::Io { path: path.to_path_buf(), source };
    let mut file = File::create(path).map_err(io_err)?;
    let mut header = Vec::with_capacity(HEADER_LEN as usize);
    header.extend_from_slice(&BUNDLE_MAGIC);
    header.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    header.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    header.extend_from_slice(&offset.to_le_bytes());
    file.write_all(&header).map_err(io_err)?;
    for (_, bytes) in sources {
        file.write_all(bytes).map_err(io_err)?;
    }
    let mut index = Vec::new();
    for e in &entries {
        index.extend_from_slice(&e.index.to_le_bytes());
        index.push(e.name.as_bytes().len() as u8);
        index.extend_from_slice(e.name.as_bytes());
        index.push(e.format.code());
        index.extend_from_slice(&e.width.to_le_bytes());
        index.extend_from_slice(&e.height.to_le_bytes());
        index.push(e.channels);
        index.extend_from_slice(&e.payload_offset.to_le_bytes());
        index.extend_from_slice(&e.payload_length.to_le_bytes());
    }
    file.write_all(&index).map_err(io_err)?;
    file.flush().map_err(io_err)?;
    Ok(())
}

/// Open handle over a bundle file: header plus full entry index, payloads
/// untouched. Cheap to clone; any number of concurrent readers is fine.
#[derive(Debug, Clone)]
pub struct Bundle {
    path: PathBuf,
    header: BundleHeader,
    entries: Vec<EntryMeta>,
}

struct IndexReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> IndexReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], BundleError> {
        if self.pos + n > self.buf.len() {
            return Err(BundleError::Corrupt(format!("index truncated reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, BundleError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Bundle {
    /// Read the header and entry index without touching payload bytes.
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self, BundleError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| BundleError::Io { path: path.clone(), source };
        let mut file = File::open(&path).map_err(io_err)?;
        let file_len = file.metadata().map_err(io_err)?.len();
        let mut header_bytes = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut header_bytes)
            .map_err(|_| BundleError::Corrupt("file shorter than header".into()))?;
        if header_bytes[0..4] != BUNDLE_MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = u16::from_le_bytes(header_bytes[4..6].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let entry_count = u32::from_le_bytes(header_bytes[6..10].try_into().unwrap());
        let index_offset = u64::from_le_bytes(header_bytes[10..18].try_into().unwrap());
        if index_offset < HEADER_LEN || index_offset > file_len {
            return Err(BundleError::Corrupt(format!(
                "index offset {index_offset} outside file of {file_len} bytes"
            )));
        }
        file.seek(SeekFrom::Start(index_offset)).map_err(io_err)?;
        let mut index_bytes = Vec::new();
        file.read_to_end(&mut index_bytes).map_err(io_err)?;
        let mut rd = IndexReader { buf: &index_bytes, pos: 0 };
        let mut entries = Vec::with_capacity(entry_count as usize);
        for expect in 0..entry_count {
            let index = rd.u32("entry index")?;
            if index != expect {
                return Err(BundleError::Corrupt(format!(
                    "entry indices not dense: expected {expect}, found {index}"
                )));
            }
            let name_len = rd.u8("name length")? as usize;
            let name = String::from_utf8(rd.take(name_len, "name")?.to_vec())
                .map_err(|_| BundleError::Corrupt(format!("entry {index} name is not UTF-8")))?;
            let format = ImageFormat::from_code(rd.u8("format code")?)
                .ok_or_else(|| BundleError::Corrupt(format!("entry {index} has unknown format code")))?;
            let width = rd.u32("width")?;
            let height = rd.u32("height")?;
            let channels = rd.u8("channels")?;
            let payload_offset = rd.u64("payload offset")?;
            let payload_length = rd.u64("payload length")?;
            if payload_offset < HEADER_LEN || payload_offset + payload_length > index_offset {
                return Err(BundleError::Corrupt(format!(
                    "entry {index} payload range escapes the payload region"
                )));
            }
            entries.push(EntryMeta {
                index,
                name,
                format,
                width,
                height,
                channels,
                payload_offset,
                payload_length,
            });
        }
        if rd.pos != index_bytes.len() {
            return Err(BundleError::Corrupt("trailing bytes after index".into()));
        }
        Ok(Self {
            path,
            header: BundleHeader { version, entry_count, index_offset },
            entries,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &BundleHeader {
        &self.header
    }

    pub fn entries(&self) -> &[EntryMeta] {
        &self.entries
    }

    pub fn entry_count(&self) -> u32 {
        self.header.entry_count
    }

    /// Raw encoded payload bytes of one entry.
    pub fn read_payload(&self, index: u32) -> Result<(ImageFormat, Vec<u8>), BundleError> {
        let entry = self
            .entries
            .get(index as usize)
            .ok_or(BundleError::IndexOutOfRange { index, count: self.header.entry_count })?;
        let io_err = |source| BundleError::Io { path: self.path.clone(), source };
        let mut file = File::open(&self.path).map_err(io_err)?;
        file.seek(SeekFrom::Start(entry.payload_offset)).map_err(io_err)?;
        let mut buf = vec![0u8; entry.payload_length as usize];
        file.read_exact(&mut buf)
            .map_err(|_| BundleError::Corrupt(format!("entry {index} payload truncated")))?;
        Ok((entry.format, buf))
    }

    /// Decode one entry's payload into a raster.
    pub fn fetch(&self, index: u32) -> Result<PixelImage, BundleError> {
        let (_, bytes) = self.read_payload(index)?;
        codec::decode(&bytes).map_err(|source| BundleError::PayloadDecode { index, source })
    }
}

/// Partition [0, entry_count) into at most `n_splits` contiguous ranges whose
/// sizes differ by at most one, larger splits first.
pub fn plan_splits(entry_count: u32, n_splits: u32) -> Vec<Split> {
    assert!(n_splits >= 1, "n_splits must be >= 1");
    if entry_count == 0 {
        return Vec::new();
    }
    let k = n_splits.min(entry_count);
    let base = entry_count / k;
    let remainder = entry_count % k;
    let mut splits = Vec::with_capacity(k as usize);
    let mut start = 0u32;
    for i in 0..k {
        let size = base + u32::from(i < remainder);
        splits.push(Split { start_index: start, end_index: start + size });
        start += size;
    }
    splits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_pgm, encode_ppm};
    use proptest::prelude::*;

    fn pgm_source(name: &str, w: u32, h: u32, fill: u8) -> (String, Vec<u8>) {
        let img = PixelImage::new(w, h, 1, vec![fill; (w * h) as usize]).unwrap();
        (name.to_string(), encode_pgm(&img))
    }

    fn ppm_source(name: &str, w: u32, h: u32, seed: u8) -> (String, Vec<u8>) {
        let n = (w * h * 3) as usize;
        let pixels: Vec<u8> = (0..n).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = PixelImage::new(w, h, 3, pixels).unwrap();
        (name.to_string(), encode_ppm(&img))
    }

    #[test]
    fn empty_bundle_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.fib");
        bundle_create(&path, &[]).unwrap();
        let bundle = Bundle::open(&path).unwrap();
        assert_eq!(bundle.entry_count(), 0);
        assert!(bundle.entries().is_empty());
    }

    #[test]
    fn single_pgm_entry_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.fib");
        bundle_create(&path, &[pgm_source("a.pgm", 4, 4, 9)]).unwrap();
        let bundle = Bundle::open(&path).unwrap();
        assert_eq!(bundle.entry_count(), 1);
        let e = &bundle.entries()[0];
        assert_eq!((e.width, e.height, e.channels), (4, 4, 1));
        assert_eq!(e.format, ImageFormat::Pgm);
        assert_eq!(e.name, "a.pgm");
    }

    #[test]
    fn twenty_ppm_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("twenty.fib");
        let sources: Vec<_> = (0..20)
            .map(|i| ppm_source(&format!("img_{i:03}.ppm"), 7 + i, 5, i as u8))
            .collect();
        bundle_create(&path, &sources).unwrap();
        let bundle = Bundle::open(&path).unwrap();
        assert_eq!(bundle.entry_count(), 20);
        for (i, (_, bytes)) in sources.iter().enumerate() {
            let (fmt, payload) = bundle.read_payload(i as u32).unwrap();
            assert_eq!(fmt, ImageFormat::Ppm);
            assert_eq!(&payload, bytes, "payload {i} differs");
            let img = bundle.fetch(i as u32).unwrap();
            assert_eq!(img, codec::decode(bytes).unwrap());
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fib");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x00\x00\x12\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(Bundle::open(&path), Err(BundleError::BadMagic)));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.fib");
        bundle_create(&path, &[]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 2;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(Bundle::open(&path), Err(BundleError::UnsupportedVersion(2))));
    }

    #[test]
    fn truncated_index_is_a_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.fib");
        bundle_create(&path, &[pgm_source("a.pgm", 4, 4, 0), pgm_source("b.pgm", 4, 4, 1)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(Bundle::open(&path), Err(BundleError::Corrupt(_))));
    }

    #[test]
    fn fetch_out_of_range_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oob.fib");
        bundle_create(&path, &[pgm_source("a.pgm", 4, 4, 0)]).unwrap();
        let bundle = Bundle::open(&path).unwrap();
        assert!(matches!(
            bundle.fetch(1),
            Err(BundleError::IndexOutOfRange { index: 1, count: 1 })
        ));
    }

    #[test]
    fn fetch_is_deterministic_in_any_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.fib");
        let sources: Vec<_> = (0..20).map(|i| ppm_source(&format!("{i}.ppm"), 6, 6, i as u8)).collect();
        bundle_create(&path, &sources).unwrap();
        let bundle = Bundle::open(&path).unwrap();
        let order = [13u32, 2, 19, 0, 7, 11, 5, 17, 3, 9, 1, 15, 4, 18, 6, 12, 8, 16, 10, 14];
        let first: Vec<_> = order.iter().map(|&i| bundle.fetch(i).unwrap()).collect();
        let second: Vec<_> = order.iter().map(|&i| bundle.fetch(i).unwrap()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.fib");
        let err = bundle_create(&path, &[pgm_source("a.pgm", 2, 2, 0), pgm_source("a.pgm", 2, 2, 1)]);
        assert!(matches!(err, Err(BundleError::DuplicateName(n)) if n == "a.pgm"));
    }

    #[test]
    fn unparseable_source_names_the_offender() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_src.fib");
        let err = bundle_create(&path, &[("junk.bin".to_string(), b"not an image".to_vec())]);
        assert!(matches!(err, Err(BundleError::BadSource { name, .. }) if name == "junk.bin"));
    }

    #[test]
    fn index_scan_ignores_payload_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("holey.fib");
        let sources = vec![ppm_source("a.ppm", 8, 8, 1), ppm_source("b.ppm", 8, 8, 2)];
        bundle_create(&path, &sources).unwrap();
        let reference = Bundle::open(&path).unwrap();
        // garbage the payload region; header and index untouched
        let mut bytes = std::fs::read(&path).unwrap();
        let start = HEADER_LEN as usize;
        let end = reference.header().index_offset as usize;
        bytes[start..end].fill(0xAB);
        std::fs::write(&path, bytes).unwrap();
        let scanned = Bundle::open(&path).unwrap();
        assert_eq!(scanned.entries(), reference.entries());
        assert!(scanned.fetch(0).is_err());
    }

    #[test]
    fn splits_match_spec_examples() {
        let sizes = |splits: Vec<Split>| splits.iter().map(Split::len).collect::<Vec<_>>();
        assert_eq!(sizes(plan_splits(20, 4)), vec![5, 5, 5, 5]);
        assert_eq!(sizes(plan_splits(3, 4)), vec![1, 1, 1]);
        assert_eq!(sizes(plan_splits(7, 3)), vec![3, 2, 2]);
        assert!(plan_splits(0, 4).is_empty());
    }

    proptest! {
        #[test]
        fn splits_partition_exactly(entry_count in 0u32..500, n_splits in 1u32..40) {
            let splits = plan_splits(entry_count, n_splits);
            let mut cursor = 0u32;
            for s in &splits {
                prop_assert_eq!(s.start_index, cursor);
                prop_assert!(s.start_index < s.end_index);
                cursor = s.end_index;
            }
            prop_assert_eq!(cursor, entry_count);
            if entry_count > 0 {
                let sizes: Vec<u32> = splits.iter().map(Split::len).collect();
                let max = *sizes.iter().max().unwrap();
                let min = *sizes.iter().min().unwrap();
                prop_assert!(max - min <= 1);
                prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
