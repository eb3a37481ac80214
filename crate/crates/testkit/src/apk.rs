//! Archive assembly through the `zip` crate plus a JAR-style (v1) signer.

use std::io::{Cursor, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha1::Sha1;
use sha2::{Digest, Sha256};
use zip::write::SimpleFileOptions;
use zip::CompressionMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Stored,
    Deflate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestAlg {
    Sha1,
    Sha256,
}

impl DigestAlg {
    fn label(self) -> &'static str {
        match self {
            DigestAlg::Sha1 => "SHA1",
            DigestAlg::Sha256 => "SHA-256",
        }
    }

    fn b64(self, data: &[u8]) -> String {
        match self {
            DigestAlg::Sha1 => STANDARD.encode(Sha1::digest(data)),
            DigestAlg::Sha256 => STANDARD.encode(Sha256::digest(data)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApkBuilder {
    entries: Vec<(String, Vec<u8>, Method)>,
}

impl Default for ApkBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ApkBuilder {
    pub fn new() -> Self {
        ApkBuilder {
            entries: Vec::new(),
        }
    }

    pub fn add(mut self, name: &str, data: impl Into<Vec<u8>>, method: Method) -> Self {
        self.entries.push((name.to_string(), data.into(), method));
        self
    }

    pub fn entry(&self, name: &str) -> Option<&[u8]> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, d, _)| d.as_slice())
    }

    /// Appends META-INF/MANIFEST.MF, CERT.SF and the signature block,
    /// covering every entry added so far.
    pub fn sign_v1(self, block: &[u8], block_name: &str, alg: DigestAlg) -> Self {
        let mut manifest = String::from("Manifest-Version: 1.0\r\nCreated-By: malnet-testkit\r\n\r\n");
        let mut sections = Vec::new();
        for (name, data, _) in &self.entries {
            let mut sec = wrap72(&format!("Name: {name}"));
            sec.push_str(&wrap72(&format!("{}-Digest: {}", alg.label(), alg.b64(data))));
            sec.push_str("\r\n");
            manifest.push_str(&sec);
            sections.push((name.clone(), sec));
        }
        let mut sf = format!(
            "Signature-Version: 1.0\r\n{}-Digest-Manifest: {}\r\n\r\n",
            alg.label(),
            alg.b64(manifest.as_bytes())
        );
        for (name, sec) in &sections {
            sf.push_str(&wrap72(&format!("Name: {name}")));
            sf.push_str(&wrap72(&format!("{}-Digest: {}", alg.label(), alg.b64(sec.as_bytes()))));
            sf.push_str("\r\n");
        }
        self.add("META-INF/MANIFEST.MF", manifest, Method::Deflate)
            .add("META-INF/CERT.SF", sf, Method::Deflate)
            .add(&format!("META-INF/{block_name}"), block.to_vec(), Method::Deflate)
    }

    /// Copy with one byte of `name` XOR-flipped; signature files untouched.
    pub fn with_flipped_byte(&self, name: &str, offset: usize) -> Self {
        let mut out = self.clone();
        let entry = out
            .entries
            .iter_mut()
            .find(|(n, _, _)| n == name)
            .expect("entry to tamper with");
        entry.1[offset] ^= 0x01;
        out
    }

    pub fn build(&self) -> Vec<u8> {
        let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
        for (name, data, method) in &self.entries {
            let m = match method {
                Method::Stored => CompressionMethod::Stored,
                Method::Deflate => CompressionMethod::Deflated,
            };
            let opts = SimpleFileOptions::default()
                .compression_method(m)
                .last_modified_time(zip::DateTime::default());
            w.start_file(name.as_str(), opts).unwrap();
            w.write_all(data).unwrap();
        }
        w.finish().unwrap().into_inner()
    }
}

/// Wraps a manifest header line at 72 bytes with single-space continuations.
fn wrap72(line: &str) -> String {
    let bytes = line.as_bytes();
    let mut out = String::new();
    let mut start = 0;
    let mut width = 72;
    while bytes.len() - start > width {
        out.push_str(&line[start..start + width]);
        out.push_str("\r\n ");
        start += width;
        width = 71;
    }
    out.push_str(&line[start..]);
    out.push_str("\r\n");
    out
}

/// Nested archive usable as an asset payload.
pub fn nested_payload() -> Vec<u8> {
    ApkBuilder::new()
        .add("classes.dex", crate::dex::DexBuilder::new().build(), Method::Deflate)
        .build()
}
