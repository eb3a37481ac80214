//! The "invalid certificate" signal.
//!
//! An APK counts as carrying an invalid certificate when it is unsigned,
//! when any v1 manifest digest disagrees with the entry it covers, or when
//! the scan time falls outside the signing certificate's validity window.
//! The signature over the `.SF` file itself is not verified.

pub mod der;
pub mod manifest;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::{DateTime, Utc};
use log::warn;
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::apk::ApkArchive;
use der::{Tlv, TAG_CONTEXT_0, TAG_OID, TAG_SEQUENCE};

pub use manifest::{parse_manifest, JarManifest, Section};

pub const MANIFEST_PATH: &str = "META-INF/MANIFEST.MF";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("archive has no {MANIFEST_PATH}")]
    MissingManifest,
    #[error("malformed DER: {0}")]
    MalformedDer(String),
    #[error("no certificate in signature block")]
    NoCertificateFound,
    #[error("cannot read {0}")]
    Unreadable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DigestAlg {
    Sha1,
    Sha256,
}

impl DigestAlg {
    fn from_attribute(key: &str) -> Option<Self> {
        let alg = key.strip_suffix("-Digest").or_else(|| key.strip_suffix("-DIGEST"))?;
        match alg.to_ascii_uppercase().as_str() {
            "SHA1" | "SHA-1" => Some(DigestAlg::Sha1),
            "SHA-256" | "SHA256" => Some(DigestAlg::Sha256),
            _ => None,
        }
    }

    fn digest_b64(self, data: &[u8]) -> String {
        match self {
            DigestAlg::Sha1 => STANDARD.encode(Sha1::digest(data)),
            DigestAlg::Sha256 => STANDARD.encode(Sha256::digest(data)),
        }
    }
}

/// Outcome of checking MANIFEST.MF digests against archive content.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DigestReport {
    pub verified: Vec<String>,
    pub mismatched: Vec<String>,
    /// Sections naming entries that are not in the archive.
    pub absent: Vec<String>,
    /// Sections without a SHA-1 or SHA-256 digest.
    pub unsupported: Vec<String>,
    /// Archive entries outside META-INF/ that no section covers.
    pub unlisted: Vec<String>,
}

impl DigestReport {
    pub fn all_match(&self) -> bool {
        self.mismatched.is_empty() && self.unsupported.is_empty()
    }
}

/// Recomputes every manifest digest whose entry is present.
pub fn check_entry_digests(archive: &ApkArchive) -> Result<DigestReport, CertError> {
    let text = archive
        .read_entry(MANIFEST_PATH)
        .map_err(|_| CertError::MissingManifest)?;
    let manifest = parse_manifest(&String::from_utf8_lossy(&text));
    let mut report = DigestReport::default();
    for section in &manifest.entries {
        let Some(name) = section.name() else { continue };
        if !archive.contains(name) {
            report.absent.push(name.to_string());
            continue;
        }
        let digests: Vec<(DigestAlg, &str)> = section
            .attributes
            .iter()
            .filter_map(|(k, v)| DigestAlg::from_attribute(k).map(|a| (a, v.as_str())))
            .collect();
        if digests.is_empty() {
            report.unsupported.push(name.to_string());
            continue;
        }
        let ok = match archive.read_entry(name) {
            Ok(data) => digests.iter().all(|(alg, want)| alg.digest_b64(&data) == want.trim()),
            Err(e) => {
                warn!("digest check: {e}");
                false
            }
        };
        if ok {
            report.verified.push(name.to_string());
        } else {
            warn!("digest mismatch for {name}");
            report.mismatched.push(name.to_string());
        }
    }
    for entry in archive.names() {
        if !entry.starts_with("META-INF/")
            && !entry.ends_with('/')
            && !manifest.entries.iter().any(|s| s.name() == Some(entry))
        {
            report.unlisted.push(entry.to_string());
        }
    }
    Ok(report)
}

pub fn verify_entry_digests(archive: &ApkArchive) -> Result<bool, CertError> {
    check_entry_digests(archive).map(|r| r.all_match())
}

/// Facts read from the first certificate of a signature block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertValidity {
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub self_signed: bool,
    pub expired: bool,
    pub subject: String,
    pub issuer: String,
}

fn first_certificate(block: &[u8]) -> Result<Tlv<'_>, CertError> {
    let (top, _) = der::read_tlv(block)?;
    let top = top.expect(TAG_SEQUENCE)?;
    let mut it = top.children();
    let first = it.next_tlv()?;
    match first.tag {
        // a bare certificate: tbsCertificate comes first
        TAG_SEQUENCE => Ok(top),
        TAG_OID if first.content == der::OID_SIGNED_DATA => {
            let explicit = it.next_tlv()?.expect(TAG_CONTEXT_0)?;
            let (signed_data, _) = der::read_tlv(explicit.content)?;
            let signed_data = signed_data.expect(TAG_SEQUENCE)?;
            for child in signed_data.children() {
                let child = child?;
                if child.tag == TAG_CONTEXT_0 {
                    let mut certs = child.children();
                    if certs.is_empty() {
                        return Err(CertError::NoCertificateFound);
                    }
                    return certs.next_tlv()?.expect(TAG_SEQUENCE);
                }
            }
            Err(CertError::NoCertificateFound)
        }
        _ => Err(CertError::NoCertificateFound),
    }
}

/// Extracts the validity window and names of the first embedded
/// certificate. `expired` is true when `now` lies outside the window.
pub fn parse_certificate_validity(block: &[u8], now: DateTime<Utc>) -> Result<CertValidity, CertError> {
    let cert = first_certificate(block)?;
    let mut parts = cert.children();
    let tbs = parts.next_tlv()?.expect(TAG_SEQUENCE)?;
    let mut fields = tbs.children();
    let mut next = fields.next_tlv()?;
    if next.tag == TAG_CONTEXT_0 {
        next = fields.next_tlv()?;
    }
    next.expect(der::TAG_INTEGER)?;
    fields.next_tlv()?.expect(TAG_SEQUENCE)?;
    let issuer = fields.next_tlv()?.expect(TAG_SEQUENCE)?;
    let validity = fields.next_tlv()?.expect(TAG_SEQUENCE)?;
    let subject = fields.next_tlv()?.expect(TAG_SEQUENCE)?;

    let mut window = validity.children();
    let not_before = der::parse_time(&window.next_tlv()?)?;
    let not_after = der::parse_time(&window.next_tlv()?)?;
    Ok(CertValidity {
        not_before,
        not_after,
        self_signed: subject.content == issuer.content,
        expired: now < not_before || now > not_after,
        subject: der::render_name(&subject)?,
        issuer: der::render_name(&issuer)?,
    })
}

/// Which conditions make a certificate count as invalid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertPolicy {
    pub require_signature: bool,
    pub check_digests: bool,
    pub check_validity: bool,
}

impl Default for CertPolicy {
    fn default() -> Self {
        CertPolicy {
            require_signature: true,
            check_digests: true,
            check_validity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureReport {
    pub has_signature: bool,
    pub digest_ok: bool,
    pub cert_window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    pub self_signed: bool,
    pub verdict_invalid: bool,
    pub subject: Option<String>,
    pub reasons: Vec<String>,
}

fn is_signature_block(name: &str) -> bool {
    let Some(file) = name.strip_prefix("META-INF/") else {
        return false;
    };
    if file.contains('/') {
        return false;
    }
    let upper = file.to_ascii_uppercase();
    [".RSA", ".DSA", ".EC"].iter().any(|ext| upper.ends_with(ext))
}

pub fn signature_report(archive: &ApkArchive, now: DateTime<Utc>, policy: CertPolicy) -> SignatureReport {
    let mut reasons = Vec::new();
    let block_name = archive.names().find(|n| is_signature_block(n)).map(str::to_string);
    let has_manifest = archive.contains(MANIFEST_PATH);
    let has_signature = has_manifest && block_name.is_some();
    if !has_signature {
        reasons.push("unsigned: no manifest or signature block".to_string());
    }

    let digest_ok = match check_entry_digests(archive) {
        Ok(r) => {
            for m in &r.mismatched {
                reasons.push(format!("digest mismatch: {m}"));
            }
            for u in &r.unsupported {
                reasons.push(format!("no supported digest for {u}"));
            }
            r.all_match()
        }
        Err(e) => {
            reasons.push(e.to_string());
            false
        }
    };

    let mut cert_window = None;
    let mut self_signed = false;
    let mut subject = None;
    let mut in_window = false;
    if let Some(name) = &block_name {
        match archive
            .read_entry(name)
            .map_err(|e| CertError::Unreadable(e.to_string()))
            .and_then(|b| parse_certificate_validity(&b, now))
        {
            Ok(v) => {
                cert_window = Some((v.not_before, v.not_after));
                self_signed = v.self_signed;
                subject = Some(v.subject);
                in_window = !v.expired;
                if v.expired {
                    reasons.push(format!(
                        "{} outside validity window {} .. {}",
                        now.to_rfc3339(),
                        v.not_before.to_rfc3339(),
                        v.not_after.to_rfc3339()
                    ));
                }
            }
            Err(e) => reasons.push(format!("{name}: {e}")),
        }
    }

    // digest and window checks only apply to a signed archive
    let verdict_invalid = if has_signature {
        (policy.check_digests && !digest_ok) || (policy.check_validity && !in_window)
    } else {
        policy.require_signature
    };
    SignatureReport {
        has_signature,
        digest_ok,
        cert_window,
        self_signed,
        verdict_invalid,
        subject,
        reasons,
    }
}

/// The fs4 bit under the default policy.
pub fn certificate_invalid(archive: &ApkArchive, now: DateTime<Utc>) -> bool {
    signature_report(archive, now, CertPolicy::default()).verdict_invalid
}
