//! DEX id-table reader and API category detection.
//!
//! Only the string, type and method id tables are decoded. Every external
//! method a class invokes has a `method_ids` record, so the tables are
//! enough to answer "does this app reference API X".

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::apk::{ApkArchive, ApkError};

const HEADER_SIZE: usize = 0x70;
const ENDIAN_CONSTANT: u32 = 0x1234_5678;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DexError {
    #[error("malformed DEX: {0}")]
    Malformed(String),
    #[error("no classes*.dex entries in archive")]
    NoDexFound,
    #[error("{entry}: {source}")]
    InEntry {
        entry: String,
        #[source]
        source: Box<DexError>,
    },
    #[error(transparent)]
    Container(#[from] ApkError),
}

fn malformed(msg: impl Into<String>) -> DexError {
    DexError::Malformed(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class_type: String,
    pub name: String,
}

impl MethodRef {
    pub fn new(class_type: impl Into<String>, name: impl Into<String>) -> Self {
        MethodRef {
            class_type: class_type.into(),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DexSummary {
    pub strings: Vec<String>,
    pub type_names: Vec<String>,
    pub method_refs: Vec<MethodRef>,
    pub dex_count: usize,
}

impl DexSummary {
    fn absorb(&mut self, other: DexSummary) {
        self.strings.extend(other.strings);
        self.type_names.extend(other.type_names);
        self.method_refs.extend(other.method_refs);
        self.dex_count += other.dex_count;
    }
}

struct Bytes<'a>(&'a [u8]);

impl Bytes<'_> {
    fn u16(&self, at: usize) -> Result<u16, DexError> {
        self.0
            .get(at..at + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or_else(|| malformed(format!("read past end at {at:#x}")))
    }

    fn u32(&self, at: usize) -> Result<u32, DexError> {
        self.0
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| malformed(format!("read past end at {at:#x}")))
    }
}

/// Checks that a table of `count` records of `width` bytes at `off` fits.
fn table(name: &str, count: u32, off: u32, width: usize, file_size: usize) -> Result<usize, DexError> {
    if count == 0 {
        return Ok(0);
    }
    let off = off as usize;
    let end = (count as usize)
        .checked_mul(width)
        .and_then(|n| n.checked_add(off));
    match end {
        Some(end) if off >= HEADER_SIZE && end <= file_size => Ok(off),
        _ => Err(malformed(format!("{name} table outside file"))),
    }
}

fn uleb128(buf: &[u8], mut at: usize) -> Result<(u32, usize), DexError> {
    let mut result: u32 = 0;
    for i in 0..5 {
        let b = *buf.get(at).ok_or_else(|| malformed("uleb128 runs past end"))?;
        at += 1;
        result |= ((b & 0x7F) as u32) << (7 * i);
        if b & 0x80 == 0 {
            return Ok((result, at));
        }
    }
    Err(malformed("uleb128 longer than 5 bytes"))
}

/// Decodes NUL-terminated modified UTF-8 starting at `at`.
pub fn decode_mutf8(buf: &[u8], at: usize) -> Result<String, DexError> {
    let mut units: Vec<u16> = Vec::new();
    let mut i = at;
    let byte = |i: usize| -> Result<u32, DexError> {
        buf.get(i)
            .map(|&b| b as u32)
            .ok_or_else(|| malformed("unterminated string data"))
    };
    loop {
        let b0 = byte(i)?;
        if b0 == 0 {
            break;
        }
        if b0 < 0x80 {
            units.push(b0 as u16);
            i += 1;
        } else if b0 & 0xE0 == 0xC0 {
            let b1 = byte(i + 1)?;
            if b1 & 0xC0 != 0x80 {
                return Err(malformed("bad MUTF-8 continuation"));
            }
            units.push((((b0 & 0x1F) << 6) | (b1 & 0x3F)) as u16);
            i += 2;
        } else if b0 & 0xF0 == 0xE0 {
            let (b1, b2) = (byte(i + 1)?, byte(i + 2)?);
            if b1 & 0xC0 != 0x80 || b2 & 0xC0 != 0x80 {
                return Err(malformed("bad MUTF-8 continuation"));
            }
            units.push((((b0 & 0x0F) << 12) | ((b1 & 0x3F) << 6) | (b2 & 0x3F)) as u16);
            i += 3;
        } else {
            return Err(malformed(format!("bad MUTF-8 lead byte {b0:#x}")));
        }
    }
    Ok(String::from_utf16_lossy(&units))
}

/// Parses the id tables of a single DEX file.
pub fn parse_dex(bytes: &[u8]) -> Result<DexSummary, DexError> {
    if bytes.len() < HEADER_SIZE {
        return Err(malformed("shorter than header"));
    }
    let magic = &bytes[0..8];
    if &magic[0..4] != b"dex\n" || !magic[4..7].iter().all(u8::is_ascii_digit) || magic[7] != 0 {
        return Err(malformed("bad magic"));
    }
    let h = Bytes(bytes);
    let file_size = h.u32(32)? as usize;
    if file_size < HEADER_SIZE || file_size > bytes.len() {
        return Err(malformed(format!(
            "declared file size {file_size} does not fit {} bytes",
            bytes.len()
        )));
    }
    if h.u32(36)? as usize != HEADER_SIZE {
        return Err(malformed("unexpected header size"));
    }
    if h.u32(40)? != ENDIAN_CONSTANT {
        return Err(malformed("unsupported endianness tag"));
    }
    let data = &bytes[..file_size];
    let d = Bytes(data);

    let n_strings = h.u32(56)?;
    let strings_off = table("string_ids", n_strings, h.u32(60)?, 4, file_size)?;
    let n_types = h.u32(64)?;
    let types_off = table("type_ids", n_types, h.u32(68)?, 4, file_size)?;
    let n_protos = h.u32(72)?;
    table("proto_ids", n_protos, h.u32(76)?, 12, file_size)?;
    let n_methods = h.u32(88)?;
    let methods_off = table("method_ids", n_methods, h.u32(92)?, 8, file_size)?;

    let mut strings = Vec::with_capacity(n_strings as usize);
    for i in 0..n_strings as usize {
        let data_off = d.u32(strings_off + 4 * i)? as usize;
        if data_off >= file_size {
            return Err(malformed(format!("string {i} data outside file")));
        }
        let (utf16_len, at) = uleb128(data, data_off)?;
        let s = decode_mutf8(data, at)?;
        if s.encode_utf16().count() != utf16_len as usize {
            return Err(malformed(format!("string {i} length mismatch")));
        }
        strings.push(s);
    }

    let string_at = |idx: u32| -> Result<&String, DexError> {
        strings
            .get(idx as usize)
            .ok_or_else(|| malformed(format!("string index {idx} out of range")))
    };

    let mut type_names = Vec::with_capacity(n_types as usize);
    for i in 0..n_types as usize {
        type_names.push(string_at(d.u32(types_off + 4 * i)?)?.clone());
    }

    let mut method_refs = Vec::with_capacity(n_methods as usize);
    for i in 0..n_methods as usize {
        let at = methods_off + 8 * i;
        let class_idx = d.u16(at)?;
        let proto_idx = d.u16(at + 2)?;
        let name_idx = d.u32(at + 4)?;
        let class_type = type_names
            .get(class_idx as usize)
            .ok_or_else(|| malformed(format!("method {i}: type index {class_idx} out of range")))?;
        if proto_idx as u32 >= n_protos {
            return Err(malformed(format!("method {i}: proto index {proto_idx} out of range")));
        }
        method_refs.push(MethodRef::new(class_type.clone(), string_at(name_idx)?.clone()));
    }

    Ok(DexSummary {
        strings,
        type_names,
        method_refs,
        dex_count: 1,
    })
}

/// Index of a `classesN.dex` entry name (`classes.dex` is 1), if it is one.
fn dex_ordinal(name: &str) -> Option<u32> {
    let mid = name.strip_prefix("classes")?.strip_suffix(".dex")?;
    if mid.is_empty() {
        return Some(1);
    }
    if mid.starts_with('0') || !mid.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    mid.parse().ok().filter(|&n| n >= 2)
}

/// Parses and concatenates every top-level `classes*.dex` in numeric order.
pub fn scan_all_dex(archive: &ApkArchive) -> Result<DexSummary, DexError> {
    let mut dexes: Vec<(u32, &str)> = archive
        .names()
        .filter_map(|n| dex_ordinal(n).map(|k| (k, n)))
        .collect();
    if dexes.is_empty() {
        return Err(DexError::NoDexFound);
    }
    dexes.sort();
    let mut summary = DexSummary::default();
    for (_, name) in dexes {
        let wrap = |e: DexError| DexError::InEntry {
            entry: name.to_string(),
            source: Box::new(e),
        };
        let bytes = archive.read_entry(name).map_err(|e| wrap(e.into()))?;
        summary.absorb(parse_dex(&bytes).map_err(wrap)?);
    }
    Ok(summary)
}

/// The seven API call categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ApiCategory {
    Telephony,
    Net,
    DexLoader,
    Reflection,
    SysService,
    RuntimeExec,
    Crypto,
}

impl ApiCategory {
    pub const ALL: [ApiCategory; 7] = [
        ApiCategory::Telephony,
        ApiCategory::Net,
        ApiCategory::DexLoader,
        ApiCategory::Reflection,
        ApiCategory::SysService,
        ApiCategory::RuntimeExec,
        ApiCategory::Crypto,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ApiCategory::Telephony => "telephony",
            ApiCategory::Net => "net",
            ApiCategory::DexLoader => "dexloader",
            ApiCategory::Reflection => "reflection",
            ApiCategory::SysService => "sysservice",
            ApiCategory::RuntimeExec => "runtime_exec",
            ApiCategory::Crypto => "crypto",
        }
    }
}

impl fmt::Display for ApiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ApiCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ApiCategory::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| format!("unknown API category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCategoryRule {
    pub category: ApiCategory,
    pub class_prefixes: Vec<String>,
    pub method_names: Option<BTreeSet<String>>,
}

impl ApiCategoryRule {
    pub fn matches(&self, m: &MethodRef) -> bool {
        self.class_prefixes.iter().any(|p| m.class_type.starts_with(p.as_str()))
            && self
                .method_names
                .as_ref()
                .is_none_or(|names| names.contains(&m.name))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("api rules line {line}: {msg}")]
pub struct RuleParseError {
    pub line: usize,
    pub msg: String,
}

pub const DEFAULT_RULES: &str = include_str!("../data/api_rules.txt");

/// Parses the rule table format of `data/api_rules.txt`.
pub fn parse_rules(text: &str) -> Result<Vec<ApiCategoryRule>, RuleParseError> {
    let mut rules: Vec<ApiCategoryRule> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| RuleParseError { line: i + 1, msg };
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 fields, got {}", fields.len())));
        }
        let category: ApiCategory = fields[0].parse().map_err(err)?;
        if rules.iter().any(|r| r.category == category) {
            return Err(err(format!("duplicate category {category}")));
        }
        let class_prefixes: Vec<String> = fields[1]
            .split(',')
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
        if class_prefixes.is_empty() {
            return Err(err("rule needs at least one class prefix".into()));
        }
        let method_names = fields
            .get(2)
            .map(|m| m.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
        rules.push(ApiCategoryRule {
            category,
            class_prefixes,
            method_names,
        });
    }
    Ok(rules)
}

pub fn default_rules() -> Vec<ApiCategoryRule> {
    parse_rules(DEFAULT_RULES).expect("built-in rule table parses")
}

pub fn detect_api_categories(summary: &DexSummary, rules: &[ApiCategoryRule]) -> BTreeSet<ApiCategory> {
    rules
        .iter()
        .filter(|r| summary.method_refs.iter().any(|m| r.matches(m)))
        .map(|r| r.category)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(refs: &[(&str, &str)]) -> DexSummary {
        DexSummary {
            method_refs: refs.iter().map(|(c, n)| MethodRef::new(*c, *n)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn default_rules_cover_all_categories() {
        let rules = default_rules();
        assert_eq!(rules.len(), 7);
        for c in ApiCategory::ALL {
            assert!(rules.iter().any(|r| r.category == c), "{c}");
        }
    }

    #[test]
    fn category_examples() {
        let rules = default_rules();
        let s = summary(&[("Ldalvik/system/DexClassLoader;", "<init>")]);
        assert!(detect_api_categories(&s, &rules).contains(&ApiCategory::DexLoader));
        assert!(detect_api_categories(&DexSummary::default(), &rules).is_empty());
        let s = summary(&[
            ("Ljavax/crypto/Cipher;", "getInstance"),
            ("Ljava/lang/reflect/Method;", "invoke"),
        ]);
        assert_eq!(
            detect_api_categories(&s, &rules),
            [ApiCategory::Crypto, ApiCategory::Reflection].into_iter().collect()
        );
    }

    #[test]
    fn method_filters_apply() {
        let rules = default_rules();
        let cats = |c, n| detect_api_categories(&summary(&[(c, n)]), &rules);
        assert!(cats("Ljava/lang/Runtime;", "exec").contains(&ApiCategory::RuntimeExec));
        assert!(cats("Ljava/lang/Runtime;", "availableProcessors").is_empty());
        assert!(cats("Ljava/lang/RuntimeException;", "exec").is_empty());
        assert!(cats("Landroid/app/Activity;", "getSystemService").contains(&ApiCategory::SysService));
        assert!(cats("Ljava/lang/System;", "loadLibrary").contains(&ApiCategory::RuntimeExec));
    }

    #[test]
    fn rule_parse_errors() {
        assert!(parse_rules("bogus Lx/").is_err());
        assert!(parse_rules("net").is_err());
        assert!(parse_rules("net Lx/\nnet Ly/").is_err());
        assert!(parse_rules("net ,").is_err());
    }

    #[test]
    fn dex_ordinals() {
        assert_eq!(dex_ordinal("classes.dex"), Some(1));
        assert_eq!(dex_ordinal("classes2.dex"), Some(2));
        assert_eq!(dex_ordinal("classes10.dex"), Some(10));
        assert_eq!(dex_ordinal("classes1.dex"), None);
        assert_eq!(dex_ordinal("classes02.dex"), None);
        assert_eq!(dex_ordinal("lib/classes.dex"), None);
        assert_eq!(dex_ordinal("classesX.dex"), None);
    }

    #[test]
    fn wrong_magic() {
        let mut b = vec![0u8; 0x70];
        b[0..8].copy_from_slice(b"dey\n036\0");
        assert!(matches!(parse_dex(&b), Err(DexError::Malformed(_))));
        b[0..8].copy_from_slice(b"cdex001\0");
        assert!(matches!(parse_dex(&b), Err(DexError::Malformed(_))));
    }

    #[test]
    fn mutf8_decoding() {
        assert_eq!(decode_mutf8(b"abc\0", 0).unwrap(), "abc");
        assert_eq!(decode_mutf8(&[0xC0, 0x80, 0x41, 0], 0).unwrap(), "\0A");
        // U+1F600 as a surrogate pair
        let smile = [0xED, 0xA0, 0xBD, 0xED, 0xB8, 0x80, 0];
        assert_eq!(decode_mutf8(&smile, 0).unwrap(), "\u{1F600}");
        assert!(decode_mutf8(b"abc", 0).is_err());
    }
}
