//! Decoder for the binary XML encoding of `AndroidManifest.xml`.
//!
//! Only the chunks that carry manifest facts are interpreted (string pool,
//! resource map, element start/end). Everything else is skipped by its
//! declared size.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

const RES_XML_TYPE: u16 = 0x0003;
const RES_STRING_POOL_TYPE: u16 = 0x0001;
const RES_XML_RESOURCE_MAP_TYPE: u16 = 0x0180;
const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
const RES_XML_END_ELEMENT_TYPE: u16 = 0x0103;

const UTF8_FLAG: u32 = 1 << 8;
const NO_INDEX: u32 = 0xFFFF_FFFF;
/// Framework resource id of `android:name`.
const ATTR_NAME_ID: u32 = 0x0101_0003;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AxmlError {
    #[error("malformed AXML: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> AxmlError {
    AxmlError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

impl ComponentKind {
    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "activity" => Some(ComponentKind::Activity),
            "service" => Some(ComponentKind::Service),
            "receiver" => Some(ComponentKind::Receiver),
            "provider" => Some(ComponentKind::Provider),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestInfo {
    pub package_name: String,
    pub permissions: BTreeSet<String>,
    pub intent_actions: BTreeSet<String>,
    pub component_counts: BTreeMap<ComponentKind, usize>,
}

/// Unordered permission pair, stored with the lexicographically smaller
/// name first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PermissionPair(String, String);

impl PermissionPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            PermissionPair(a, b)
        } else {
            PermissionPair(b, a)
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }
}

/// All unordered pairs of requested permissions.
pub fn permission_pairs(info: &ManifestInfo) -> BTreeSet<PermissionPair> {
    pairs_of(&info.permissions)
}

pub(crate) fn pairs_of(perms: &BTreeSet<String>) -> BTreeSet<PermissionPair> {
    let perms: Vec<&String> = perms.iter().collect();
    let mut out = BTreeSet::new();
    for (i, a) in perms.iter().enumerate() {
        for b in &perms[i + 1..] {
            out.insert(PermissionPair::new(a.as_str(), b.as_str()));
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn u16(&self, at: usize) -> Result<u16, AxmlError> {
        self.buf
            .get(at..at.checked_add(2).ok_or_else(|| malformed("offset overflow"))?)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or_else(|| malformed(format!("read past end at {at}")))
    }

    fn u32(&self, at: usize) -> Result<u32, AxmlError> {
        self.buf
            .get(at..at.checked_add(4).ok_or_else(|| malformed("offset overflow"))?)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| malformed(format!("read past end at {at}")))
    }

    fn u8(&self, at: usize) -> Result<u8, AxmlError> {
        self.buf
            .get(at)
            .copied()
            .ok_or_else(|| malformed(format!("read past end at {at}")))
    }
}

/// Decoded string pool.
#[derive(Debug, Clone, Default)]
pub struct StringPool {
    strings: Vec<String>,
}

impl StringPool {
    pub fn get(&self, idx: u32) -> Result<&str, AxmlError> {
        self.strings
            .get(idx as usize)
            .map(String::as_str)
            .ok_or_else(|| malformed(format!("string index {idx} out of range")))
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    fn parse(chunk: &[u8], header_size: usize) -> Result<Self, AxmlError> {
        let c = Cursor { buf: chunk };
        let count = c.u32(8)? as usize;
        let flags = c.u32(16)?;
        let strings_start = c.u32(20)? as usize;
        if count
            .checked_mul(4)
            .and_then(|n| n.checked_add(header_size))
            .is_none_or(|end| end > chunk.len())
        {
            return Err(malformed("string offsets exceed pool chunk"));
        }
        let utf8 = flags & UTF8_FLAG != 0;
        let mut strings = Vec::with_capacity(count);
        for i in 0..count {
            let off = c.u32(header_size + 4 * i)? as usize;
            let at = strings_start
                .checked_add(off)
                .ok_or_else(|| malformed("string offset overflow"))?;
            let s = if utf8 {
                decode_utf8_slot(&c, at)?
            } else {
                decode_utf16_slot(&c, at)?
            };
            strings.push(s);
        }
        Ok(StringPool { strings })
    }
}

fn utf8_len(c: &Cursor, at: usize) -> Result<(usize, usize), AxmlError> {
    let b0 = c.u8(at)? as usize;
    if b0 & 0x80 != 0 {
        let b1 = c.u8(at + 1)? as usize;
        Ok((((b0 & 0x7F) << 8) | b1, 2))
    } else {
        Ok((b0, 1))
    }
}

fn decode_utf8_slot(c: &Cursor, at: usize) -> Result<String, AxmlError> {
    let (_, n1) = utf8_len(c, at)?;
    let (len, n2) = utf8_len(c, at + n1)?;
    let start = at + n1 + n2;
    let bytes = c
        .buf
        .get(start..start + len)
        .ok_or_else(|| malformed("UTF-8 string runs past pool"))?;
    Ok(String::from_utf8_lossy(bytes).into_owned())
}

fn decode_utf16_slot(c: &Cursor, at: usize) -> Result<String, AxmlError> {
    let first = c.u16(at)? as usize;
    let (len, hdr) = if first & 0x8000 != 0 {
        let second = c.u16(at + 2)? as usize;
        (((first & 0x7FFF) << 16) | second, 4)
    } else {
        (first, 2)
    };
    let start = at + hdr;
    let end = len
        .checked_mul(2)
        .and_then(|n| n.checked_add(start))
        .ok_or_else(|| malformed("UTF-16 length overflow"))?;
    let bytes = c
        .buf
        .get(start..end)
        .ok_or_else(|| malformed("UTF-16 string runs past pool"))?;
    let units: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    Ok(String::from_utf16_lossy(&units))
}

#[derive(Debug)]
struct Attribute {
    ns: u32,
    name: u32,
    raw: u32,
    data_type: u8,
    data: u32,
}

fn render_value(pool: &StringPool, a: &Attribute) -> Result<String, AxmlError> {
    if a.raw != NO_INDEX {
        return pool.get(a.raw).map(str::to_string);
    }
    Ok(match a.data_type {
        0x03 => pool.get(a.data)?.to_string(),
        0x01 => format!("@ref/0x{:08x}", a.data),
        0x02 => format!("?attr/0x{:08x}", a.data),
        0x10 => (a.data as i32).to_string(),
        0x11 => format!("0x{:08x}", a.data),
        0x12 => (a.data != 0).to_string(),
        t => format!("@type{t:02x}/0x{:08x}", a.data),
    })
}

/// Decodes a binary manifest into the facts the feature extractor needs.
pub fn parse_axml(bytes: &[u8]) -> Result<ManifestInfo, AxmlError> {
    let c = Cursor { buf: bytes };
    if c.u16(0)? != RES_XML_TYPE {
        return Err(malformed("missing XML chunk magic"));
    }
    let header_size = c.u16(2)? as usize;
    let total = c.u32(4)? as usize;
    if header_size < 8 || total > bytes.len() || header_size > total {
        return Err(malformed("bad document header"));
    }

    let mut pool: Option<StringPool> = None;
    let mut resource_ids: Vec<u32> = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut info = ManifestInfo::default();
    let mut saw_root = false;

    let mut pos = header_size;
    while pos < total {
        let ty = c.u16(pos)?;
        let hsize = c.u16(pos + 2)? as usize;
        let size = c.u32(pos + 4)? as usize;
        let end = pos
            .checked_add(size)
            .filter(|&e| e <= total)
            .ok_or_else(|| malformed(format!("chunk at {pos} overruns document")))?;
        if size < 8 || hsize < 8 || hsize > size {
            return Err(malformed(format!("bad chunk sizes at {pos}")));
        }
        let chunk = &bytes[pos..end];
        match ty {
            RES_STRING_POOL_TYPE => {
                if hsize < 28 {
                    return Err(malformed("string pool header too small"));
                }
                pool = Some(StringPool::parse(chunk, hsize)?);
            }
            RES_XML_RESOURCE_MAP_TYPE => {
                resource_ids = chunk[hsize..]
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
            }
            RES_XML_START_ELEMENT_TYPE => {
                let pool = pool.as_ref().ok_or_else(|| malformed("element before string pool"))?;
                let ec = Cursor { buf: chunk };
                let name = pool.get(ec.u32(hsize + 4)?)?.to_string();
                let attr_start = ec.u16(hsize + 8)? as usize;
                let attr_size = ec.u16(hsize + 10)? as usize;
                let attr_count = ec.u16(hsize + 12)? as usize;
                if attr_size < 20 && attr_count > 0 {
                    return Err(malformed("attribute records shorter than 20 bytes"));
                }
                let mut attrs = Vec::with_capacity(attr_count);
                for i in 0..attr_count {
                    let at = hsize + attr_start + i * attr_size;
                    attrs.push(Attribute {
                        ns: ec.u32(at)?,
                        name: ec.u32(at + 4)?,
                        raw: ec.u32(at + 8)?,
                        data_type: ec.u8(at + 15)?,
                        data: ec.u32(at + 16)?,
                    });
                }
                if stack.is_empty() {
                    if saw_root {
                        return Err(malformed("more than one root element"));
                    }
                    saw_root = true;
                }
                on_element(&name, &stack, &attrs, pool, &resource_ids, &mut info)?;
                stack.push(name);
            }
            RES_XML_END_ELEMENT_TYPE => {
                let pool = pool.as_ref().ok_or_else(|| malformed("element before string pool"))?;
                let ec = Cursor { buf: chunk };
                let name = pool.get(ec.u32(hsize + 4)?)?;
                match stack.pop() {
                    Some(open) if open == name => {}
                    Some(open) => {
                        return Err(malformed(format!("</{name}> closes <{open}>")));
                    }
                    None => return Err(malformed(format!("</{name}> without open element"))),
                }
            }
            _ => {}
        }
        pos = end;
    }
    if !stack.is_empty() {
        return Err(malformed(format!("unterminated element <{}>", stack.last().unwrap())));
    }
    if !saw_root {
        return Err(malformed("document has no elements"));
    }
    Ok(info)
}

fn attr_is(
    a: &Attribute,
    local: &str,
    res_id: Option<u32>,
    pool: &StringPool,
    resource_ids: &[u32],
) -> bool {
    if let (Some(id), Some(&mapped)) = (res_id, resource_ids.get(a.name as usize)) {
        if mapped == id {
            return true;
        }
    }
    pool.get(a.name).map(|n| n == local).unwrap_or(false)
}

fn android_name(
    attrs: &[Attribute],
    pool: &StringPool,
    resource_ids: &[u32],
) -> Result<Option<String>, AxmlError> {
    for a in attrs {
        if a.ns != NO_INDEX && attr_is(a, "name", Some(ATTR_NAME_ID), pool, resource_ids) {
            return render_value(pool, a).map(Some);
        }
    }
    Ok(None)
}

fn on_element(
    name: &str,
    stack: &[String],
    attrs: &[Attribute],
    pool: &StringPool,
    resource_ids: &[u32],
    info: &mut ManifestInfo,
) -> Result<(), AxmlError> {
    let parent = stack.last().map(String::as_str);
    match name {
        "manifest" if stack.is_empty() => {
            for a in attrs {
                if a.ns == NO_INDEX && attr_is(a, "package", None, pool, resource_ids) {
                    info.package_name = render_value(pool, a)?;
                }
            }
        }
        "uses-permission" | "uses-permission-sdk-23" => {
            if let Some(p) = android_name(attrs, pool, resource_ids)? {
                info.permissions.insert(p);
            }
        }
        "action" if parent == Some("intent-filter") => {
            if let Some(a) = android_name(attrs, pool, resource_ids)? {
                info.intent_actions.insert(a);
            }
        }
        _ => {
            if let Some(kind) = ComponentKind::from_tag(name) {
                *info.component_counts.entry(kind).or_insert(0) += 1;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pairs_of_small_sets() {
        assert!(pairs_of(&set(&["A"])).is_empty());
        assert!(pairs_of(&set(&[])).is_empty());
        let two = pairs_of(&set(&["B", "A"]));
        assert_eq!(two.into_iter().collect::<Vec<_>>(), vec![PermissionPair::new("A", "B")]);
        let three = pairs_of(&set(&["A", "B", "C"]));
        let expected: BTreeSet<_> = [("A", "B"), ("A", "C"), ("B", "C")]
            .iter()
            .map(|(a, b)| PermissionPair::new(*a, *b))
            .collect();
        assert_eq!(three, expected);
    }

    #[test]
    fn pair_is_unordered() {
        assert_eq!(PermissionPair::new("x", "y"), PermissionPair::new("y", "x"));
    }

    #[test]
    fn wrong_magic_rejected() {
        assert!(parse_axml(&[0x02, 0x00, 0x08, 0x00, 8, 0, 0, 0]).is_err());
        assert!(parse_axml(&[]).is_err());
    }

    #[test]
    fn header_only_document_has_no_root() {
        let doc = [0x03, 0x00, 0x08, 0x00, 8, 0, 0, 0];
        assert!(matches!(parse_axml(&doc), Err(AxmlError::Malformed(_))));
    }
}
