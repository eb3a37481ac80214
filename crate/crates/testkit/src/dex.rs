//! DEX writer producing the header and id tables (strings, types, protos,
//! methods). No class definitions or code items are emitted.

use sha1::{Digest, Sha1};

#[derive(Debug, Default, Clone)]
pub struct DexBuilder {
    strings: Vec<String>,
    types: Vec<u32>,
    methods: Vec<(u32, String)>,
}

impl DexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn string(&mut self, s: &str) -> u32 {
        if let Some(i) = self.strings.iter().position(|x| x == s) {
            return i as u32;
        }
        self.strings.push(s.to_string());
        (self.strings.len() - 1) as u32
    }

    fn type_id(&mut self, descriptor: &str) -> u32 {
        let s = self.string(descriptor);
        if let Some(i) = self.types.iter().position(|&t| t == s) {
            return i as u32;
        }
        self.types.push(s);
        (self.types.len() - 1) as u32
    }

    pub fn extra_string(mut self, s: &str) -> Self {
        self.string(s);
        self
    }

    /// Adds a `method_ids` record for `class.name` with a `()V` prototype.
    pub fn method(mut self, class: &str, name: &str) -> Self {
        let c = self.type_id(class);
        self.string(name);
        self.methods.push((c, name.to_string()));
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut b = self.clone();
        let void = b.type_id("V");
        let shorty = b.string("V");

        let ns = b.strings.len();
        let nt = b.types.len();
        let nm = b.methods.len();
        let string_ids_off = 0x70;
        let type_ids_off = string_ids_off + 4 * ns;
        let proto_ids_off = type_ids_off + 4 * nt;
        let method_ids_off = proto_ids_off + 12;
        let data_off = method_ids_off + 8 * nm;

        let mut data = Vec::new();
        let mut string_offsets = Vec::with_capacity(ns);
        for s in &b.strings {
            string_offsets.push((data_off + data.len()) as u32);
            uleb128(&mut data, s.encode_utf16().count() as u32);
            data.extend_from_slice(&mutf8(s));
            data.push(0);
        }
        while data.len() % 4 != 0 {
            data.push(0);
        }
        let file_size = data_off + data.len();

        let mut out = vec![0u8; 0x70];
        out[0..8].copy_from_slice(b"dex\n035\0");
        put(&mut out, 32, file_size as u32);
        put(&mut out, 36, 0x70);
        put(&mut out, 40, 0x1234_5678);
        put(&mut out, 56, ns as u32);
        put(&mut out, 60, if ns > 0 { string_ids_off as u32 } else { 0 });
        put(&mut out, 64, nt as u32);
        put(&mut out, 68, if nt > 0 { type_ids_off as u32 } else { 0 });
        put(&mut out, 72, 1);
        put(&mut out, 76, proto_ids_off as u32);
        put(&mut out, 88, nm as u32);
        put(&mut out, 92, if nm > 0 { method_ids_off as u32 } else { 0 });
        put(&mut out, 104, data.len() as u32);
        put(&mut out, 108, data_off as u32);

        for o in string_offsets {
            out.extend_from_slice(&o.to_le_bytes());
        }
        for t in &b.types {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out.extend_from_slice(&shorty.to_le_bytes());
        out.extend_from_slice(&void.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for (class, name) in &b.methods {
            let name_idx = b.strings.iter().position(|x| x == name).unwrap() as u32;
            out.extend_from_slice(&(*class as u16).to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
            out.extend_from_slice(&name_idx.to_le_bytes());
        }
        out.extend_from_slice(&data);
        assert_eq!(out.len(), file_size);

        let sig: [u8; 20] = Sha1::digest(&out[32..]).into();
        out[12..32].copy_from_slice(&sig);
        let sum = adler32(&out[12..]);
        put(&mut out, 8, sum);
        out
    }
}

fn put(buf: &mut [u8], at: usize, v: u32) {
    buf[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

fn uleb128(buf: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

/// Modified UTF-8: NUL as C0 80, supplementary characters as two
/// three-byte surrogates.
pub fn mutf8(s: &str) -> Vec<u8> {
    let mut out = Vec::new();
    for unit in s.encode_utf16() {
        let u = unit as u32;
        if u != 0 && u < 0x80 {
            out.push(u as u8);
        } else if u < 0x800 {
            out.push(0xC0 | (u >> 6) as u8);
            out.push(0x80 | (u & 0x3F) as u8);
        } else {
            out.push(0xE0 | (u >> 12) as u8);
            out.push(0x80 | ((u >> 6) & 0x3F) as u8);
            out.push(0x80 | (u & 0x3F) as u8);
        }
    }
    out
}

fn adler32(data: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for &x in data {
        a = (a + x as u32) % 65521;
        b = (b + a) % 65521;
    }
    (b << 16) | a
}
