use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::axml::PermissionPair;
use crate::dex::ApiCategory;

/// The five feature sets, in canonical vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSet {
    /// Permissions and permission combinations.
    Fs1,
    /// Intent-filter actions.
    Fs2,
    /// API call categories.
    Fs3,
    /// Invalid certificate.
    Fs4,
    /// APK payload in assets.
    Fs5,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Fs1,
        FeatureSet::Fs2,
        FeatureSet::Fs3,
        FeatureSet::Fs4,
        FeatureSet::Fs5,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FeatureSet::Fs1 => "fs1",
            FeatureSet::Fs2 => "fs2",
            FeatureSet::Fs3 => "fs3",
            FeatureSet::Fs4 => "fs4",
            FeatureSet::Fs5 => "fs5",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            FeatureSet::Fs1 => "Permissions combination",
            FeatureSet::Fs2 => "Intent filters",
            FeatureSet::Fs3 => "API calls",
            FeatureSet::Fs4 => "Invalid certificate",
            FeatureSet::Fs5 => "APK in assets",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown feature set {s:?} (expected fs1..fs5)"))
    }
}

/// Parses `all` or a `+`-joined list such as `fs3+fs1+fs4`.
pub fn parse_subset(s: &str) -> Result<BTreeSet<FeatureSet>, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok(FeatureSet::ALL.into_iter().collect());
    }
    let set = s
        .split('+')
        .map(str::parse)
        .collect::<Result<BTreeSet<FeatureSet>, _>>()?;
    if set.is_empty() {
        return Err("empty feature subset".into());
    }
    Ok(set)
}

/// Renders a subset back in `parse_subset` syntax.
pub fn subset_label(subset: &BTreeSet<FeatureSet>) -> String {
    if subset.len() == FeatureSet::ALL.len() {
        return "all".into();
    }
    subset.iter().map(|s| s.id()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FeatureDescriptor {
    Perm(String),
    PermPair(PermissionPair),
    Intent(String),
    Api(ApiCategory),
    CertInvalid,
    ApkInAssets,
}

impl FeatureDescriptor {
    pub fn set(&self) -> FeatureSet {
        match self {
            FeatureDescriptor::Perm(_) | FeatureDescriptor::PermPair(_) => FeatureSet::Fs1,
            FeatureDescriptor::Intent(_) => FeatureSet::Fs2,
            FeatureDescriptor::Api(_) => FeatureSet::Fs3,
            FeatureDescriptor::CertInvalid => FeatureSet::Fs4,
            FeatureDescriptor::ApkInAssets => FeatureSet::Fs5,
        }
    }
}

impl fmt::Display for FeatureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureDescriptor::Perm(p) => write!(f, "perm {p}"),
            FeatureDescriptor::PermPair(p) => write!(f, "permpair {}+{}", p.first(), p.second()),
            FeatureDescriptor::Intent(a) => write!(f, "intent {a}"),
            FeatureDescriptor::Api(c) => write!(f, "api {c}"),
            FeatureDescriptor::CertInvalid => f.write_str("cert invalid"),
            FeatureDescriptor::ApkInAssets => f.write_str("asset apk_in_assets"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("schema line {line}: {msg}")]
pub struct SchemaParseError {
    pub line: usize,
    pub msg: String,
}

/// Ordered feature universe. Each set occupies one contiguous span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    descriptors: Vec<FeatureDescriptor>,
    spans: [Range<usize>; 5],
}

pub const DEFAULT_SCHEMA: &str = include_str!("../../data/default_schema.txt");

impl FeatureSchema {
    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn span(&self, set: FeatureSet) -> Range<usize> {
        self.spans[set.index()].clone()
    }

    /// Schema in the line format accepted by [`load_schema`].
    pub fn to_text(&self) -> String {
        self.descriptors.iter().map(|d| format!("{d}\n")).collect()
    }
}

fn parse_line(line: &str) -> Result<FeatureDescriptor, String> {
    let (kind, arg) = line
        .split_once(char::is_whitespace)
        .map(|(k, a)| (k, a.trim()))
        .unwrap_or((line, ""));
    let need_arg = |what: &str| -> Result<(), String> {
        if arg.is_empty() || arg.contains(char::is_whitespace) {
            Err(format!("`{kind}` takes exactly one {what}"))
        } else {
            Ok(())
        }
    };
    match kind {
        "perm" => {
            need_arg("permission name")?;
            Ok(FeatureDescriptor::Perm(arg.to_string()))
        }
        "permpair" => {
            need_arg("pair")?;
            match arg.split_once('+') {
                Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b && !b.contains('+') => {
                    Ok(FeatureDescriptor::PermPair(PermissionPair::new(a, b)))
                }
                _ => Err(format!("malformed permission pair {arg:?}")),
            }
        }
        "intent" => {
            need_arg("action")?;
            Ok(FeatureDescriptor::Intent(arg.to_string()))
        }
        "api" => {
            need_arg("category")?;
            arg.parse().map(FeatureDescriptor::Api)
        }
        "cert" if arg == "invalid" => Ok(FeatureDescriptor::CertInvalid),
        "asset" if arg == "apk_in_assets" => Ok(FeatureDescriptor::ApkInAssets),
        "cert" | "asset" => Err(format!("unknown `{kind}` feature {arg:?}")),
        other => Err(format!("unknown feature kind {other:?}")),
    }
}

/// Parses the line-oriented schema format; position is line order.
pub fn load_schema(text: &str) -> Result<FeatureSchema, SchemaParseError> {
    let mut descriptors: Vec<FeatureDescriptor> = Vec::new();
    let mut spans: [Range<usize>; 5] = Default::default();
    let mut current: Option<FeatureSet> = None;
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| SchemaParseError { line: i + 1, msg };
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let d = parse_line(line).map_err(err)?;
        if descriptors.contains(&d) {
            return Err(err(format!("duplicate descriptor `{d}`")));
        }
        let set = d.set();
        match current {
            Some(cur) if cur == set => {}
            Some(cur) if cur > set => {
                return Err(err(format!("{set} descriptor after {cur}; sets must be ordered fs1..fs5")));
            }
            _ => {
                spans[set.index()] = descriptors.len()..descriptors.len();
                current = Some(set);
            }
        }
        descriptors.push(d);
        spans[set.index()].end = descriptors.len();
    }
    if descriptors.is_empty() {
        return Err(SchemaParseError {
            line: 0,
            msg: "schema defines no features".into(),
        });
    }
    // absent sets get an empty span at their canonical position
    let mut cursor = 0;
    for span in spans.iter_mut() {
        if span.start == span.end {
            *span = cursor..cursor;
        }
        cursor = span.end;
    }
    Ok(FeatureSchema { descriptors, spans })
}

pub fn default_schema() -> FeatureSchema {
    load_schema(DEFAULT_SCHEMA).expect("built-in schema parses")
}
