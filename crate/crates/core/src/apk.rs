//! APK container access.
//!
//! The central directory is authoritative: local headers are consulted only
//! to find where an entry's data starts, since aligned APKs routinely carry
//! padding in the local extra field.

use std::collections::HashMap;
use std::io::Read;

use flate2::read::DeflateDecoder;
use log::warn;
use thiserror::Error;

const EOCD_SIG: u32 = 0x0605_4B50;
const CDH_SIG: u32 = 0x0201_4B50;
const LFH_SIG: u32 = 0x0403_4B50;
const EOCD_LEN: usize = 22;
const CDH_LEN: usize = 46;
const LFH_LEN: usize = 30;

/// Local file header magic, `PK\x03\x04`.
pub const ZIP_MAGIC: [u8; 4] = [0x50, 0x4B, 0x03, 0x04];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApkError {
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("entry {name}: unsupported compression method {method}")]
    UnsupportedCompression { name: String, method: u16 },
    #[error("entry {0}: encrypted entries are not supported")]
    Encrypted(String),
    #[error("entry not found: {0}")]
    EntryNotFound(String),
    #[error("corrupt entry {name}: {reason}")]
    CorruptEntry { name: String, reason: String },
}

fn malformed(msg: impl Into<String>) -> ApkError {
    ApkError::MalformedContainer(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionMethod {
    Stored,
    Deflate,
    Other(u16),
}

impl CompressionMethod {
    fn from_raw(raw: u16) -> Self {
        match raw {
            0 => CompressionMethod::Stored,
            8 => CompressionMethod::Deflate,
            other => CompressionMethod::Other(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryMeta {
    pub name: String,
    pub compressed_size: u32,
    pub uncompressed_size: u32,
    pub method: CompressionMethod,
    pub crc32: u32,
    pub local_header_offset: u32,
    pub flags: u16,
}

impl EntryMeta {
    pub fn is_encrypted(&self) -> bool {
        self.flags & 1 != 0
    }
}

/// A parsed, immutable APK container.
#[derive(Debug, Clone)]
pub struct ApkArchive {
    bytes: Vec<u8>,
    entries: Vec<EntryMeta>,
    index: HashMap<String, usize>,
    eocd_offset: usize,
    directory_records: usize,
    warnings: Vec<String>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn at(buf: &'a [u8], pos: usize) -> Self {
        Reader { buf, pos }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read_u32(buf: &[u8], at: usize) -> Option<u32> {
    Reader::at(buf, at).u32()
}

/// Normalizes separators and strips leading `/` and `./` components.
pub fn normalize_name(raw: &str) -> String {
    let mut s = raw.replace('\\', "/");
    loop {
        if let Some(rest) = s.strip_prefix('/') {
            s = rest.to_string();
        } else if let Some(rest) = s.strip_prefix("./") {
            s = rest.to_string();
        } else {
            return s;
        }
    }
}

fn find_eocd(bytes: &[u8]) -> Option<usize> {
    if bytes.len() < EOCD_LEN {
        return None;
    }
    let last = bytes.len() - EOCD_LEN;
    let first = last.saturating_sub(u16::MAX as usize);
    (first..=last).rev().find(|&pos| {
        read_u32(bytes, pos) == Some(EOCD_SIG) && {
            let comment_len = u16::from_le_bytes([bytes[pos + 20], bytes[pos + 21]]) as usize;
            pos + EOCD_LEN + comment_len <= bytes.len()
        }
    })
}

/// Parses the container structure. Nothing is decompressed.
pub fn open_apk(bytes: impl Into<Vec<u8>>) -> Result<ApkArchive, ApkError> {
    let bytes = bytes.into();
    if bytes.is_empty() {
        return Err(malformed("empty input"));
    }
    let eocd = find_eocd(&bytes).ok_or_else(|| malformed("no end-of-central-directory record"))?;
    let mut r = Reader::at(&bytes, eocd + 4);
    let disk = r.u16().unwrap();
    let cd_disk = r.u16().unwrap();
    let disk_entries = r.u16().unwrap();
    let total = r.u16().unwrap();
    let cd_size = r.u32().unwrap();
    let cd_offset = r.u32().unwrap();
    if disk != 0 || cd_disk != 0 || disk_entries != total {
        return Err(malformed("multi-disk archives are not supported"));
    }
    if total == u16::MAX || cd_size == u32::MAX || cd_offset == u32::MAX {
        return Err(malformed("ZIP64 archives are not supported"));
    }
    let cd_start = cd_offset as usize;
    let cd_end = cd_start
        .checked_add(cd_size as usize)
        .filter(|&e| e <= eocd)
        .ok_or_else(|| malformed("central directory lies outside the archive"))?;

    let mut r = Reader::at(&bytes[..cd_end], cd_start);
    let mut entries: Vec<EntryMeta> = Vec::with_capacity(total as usize);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut warnings = Vec::new();
    for i in 0..total {
        let truncated = || malformed(format!("central directory truncated at record {i}"));
        let fixed = r.take(CDH_LEN).ok_or_else(truncated)?;
        let mut f = Reader::at(fixed, 0);
        if f.u32() != Some(CDH_SIG) {
            return Err(malformed(format!("bad central directory signature at record {i}")));
        }
        f.take(4);
        let flags = f.u16().unwrap();
        let method = f.u16().unwrap();
        f.take(4);
        let crc32 = f.u32().unwrap();
        let compressed_size = f.u32().unwrap();
        let uncompressed_size = f.u32().unwrap();
        let name_len = f.u16().unwrap() as usize;
        let extra_len = f.u16().unwrap() as usize;
        let comment_len = f.u16().unwrap() as usize;
        f.take(8);
        let local_header_offset = f.u32().unwrap();
        let raw_name = r.take(name_len).ok_or_else(truncated)?;
        r.take(extra_len + comment_len).ok_or_else(truncated)?;

        if (local_header_offset as usize).saturating_add(LFH_LEN) > cd_start {
            return Err(malformed(format!(
                "local header offset {local_header_offset} out of bounds"
            )));
        }
        let name = normalize_name(&String::from_utf8_lossy(raw_name));
        let meta = EntryMeta {
            name: name.clone(),
            compressed_size,
            uncompressed_size,
            method: CompressionMethod::from_raw(method),
            crc32,
            local_header_offset,
            flags,
        };
        // last occurrence wins, as on device
        if let Some(&prev) = index.get(&name) {
            let msg = format!("duplicate entry {name}; keeping the later record");
            warn!("{msg}");
            warnings.push(msg);
            entries[prev] = meta;
        } else {
            index.insert(name, entries.len());
            entries.push(meta);
        }
    }

    Ok(ApkArchive {
        bytes,
        entries,
        index,
        eocd_offset: eocd,
        directory_records: total as usize,
        warnings,
    })
}

impl ApkArchive {
    pub fn entries(&self) -> &[EntryMeta] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&EntryMeta> {
        self.index.get(&normalize_name(name)).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entry(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn eocd_offset(&self) -> usize {
        self.eocd_offset
    }

    /// Number of records in the central directory, duplicates included.
    pub fn directory_records(&self) -> usize {
        self.directory_records
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Returns the fully decompressed, CRC-checked content of `name`.
    pub fn read_entry(&self, name: &str) -> Result<Vec<u8>, ApkError> {
        let meta = self
            .entry(name)
            .ok_or_else(|| ApkError::EntryNotFound(name.to_string()))?;
        self.read_meta(meta)
    }

    fn read_meta(&self, meta: &EntryMeta) -> Result<Vec<u8>, ApkError> {
        let corrupt = |reason: String| ApkError::CorruptEntry {
            name: meta.name.clone(),
            reason,
        };
        if meta.is_encrypted() {
            return Err(ApkError::Encrypted(meta.name.clone()));
        }
        if let CompressionMethod::Other(method) = meta.method {
            return Err(ApkError::UnsupportedCompression {
                name: meta.name.clone(),
                method,
            });
        }
        let mut r = Reader::at(&self.bytes, meta.local_header_offset as usize);
        if r.u32() != Some(LFH_SIG) {
            return Err(corrupt("bad local header signature".into()));
        }
        let mut r = Reader::at(&self.bytes, meta.local_header_offset as usize + 26);
        let (name_len, extra_len) = match (r.u16(), r.u16()) {
            (Some(n), Some(e)) => (n as usize, e as usize),
            _ => return Err(corrupt("truncated local header".into())),
        };
        r.take(name_len + extra_len)
            .ok_or_else(|| corrupt("truncated local header".into()))?;
        let data = r
            .take(meta.compressed_size as usize)
            .ok_or_else(|| corrupt("entry data extends past end of archive".into()))?;

        let out = match meta.method {
            CompressionMethod::Stored => {
                if meta.compressed_size != meta.uncompressed_size {
                    return Err(corrupt("stored entry with differing sizes".into()));
                }
                data.to_vec()
            }
            CompressionMethod::Deflate => {
                let expected = meta.uncompressed_size as usize;
                let mut out = Vec::with_capacity(expected.min(1 << 24));
                // one byte of slack detects oversize output without inflating a bomb
                DeflateDecoder::new(data)
                    .take(expected as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|e| corrupt(format!("inflate failed: {e}")))?;
                out
            }
            CompressionMethod::Other(_) => unreachable!(),
        };
        if out.len() != meta.uncompressed_size as usize {
            return Err(corrupt(format!(
                "size mismatch: expected {}, got {}",
                meta.uncompressed_size,
                out.len()
            )));
        }
        let crc = crc32fast::hash(&out);
        if crc != meta.crc32 {
            return Err(corrupt(format!(
                "crc mismatch: recorded {:08x}, computed {crc:08x}",
                meta.crc32
            )));
        }
        Ok(out)
    }
}

/// Result of screening the `assets/` folder for embedded packages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetScan {
    /// Entries flagged by an `.apk` extension.
    pub by_extension: Vec<String>,
    /// Entries flagged because their content starts with the ZIP magic.
    pub by_magic: Vec<String>,
    pub warnings: Vec<String>,
}

impl AssetScan {
    pub fn found(&self) -> bool {
        !self.by_extension.is_empty() || !self.by_magic.is_empty()
    }
}

fn has_ext(name: &str, ext: &str) -> bool {
    name.len() >= ext.len() && name[name.len() - ext.len()..].eq_ignore_ascii_case(ext)
}

/// Screens `assets/` for embedded APK payloads.
///
/// An asset counts when its name ends in `.apk` or its content begins with
/// the ZIP local-header magic. Assets explicitly named `.jar`/`.zip` are
/// reported as warnings only.
pub fn scan_assets(archive: &ApkArchive) -> AssetScan {
    let mut scan = AssetScan::default();
    for meta in archive.entries() {
        if !meta.name.starts_with("assets/") || meta.name.ends_with('/') {
            continue;
        }
        if has_ext(&meta.name, ".apk") {
            scan.by_extension.push(meta.name.clone());
        }
        match archive.read_meta(meta) {
            Ok(data) if data.starts_with(&ZIP_MAGIC) => {
                if has_ext(&meta.name, ".jar") || has_ext(&meta.name, ".zip") {
                    scan.warnings
                        .push(format!("nested non-APK archive in assets: {}", meta.name));
                } else {
                    scan.by_magic.push(meta.name.clone());
                }
            }
            Ok(_) => {}
            Err(e) => scan.warnings.push(format!("unreadable asset skipped: {e}")),
        }
    }
    for w in &scan.warnings {
        warn!("{w}");
    }
    scan
}

pub fn assets_contain_apk(archive: &ApkArchive) -> bool {
    scan_assets(archive).found()
}
