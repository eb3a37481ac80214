//! Just enough DER to reach the first certificate of a PKCS#7 signature
//! block and read its validity window and names.

use chrono::{DateTime, NaiveDate, Utc};

use super::CertError;

pub const TAG_INTEGER: u8 = 0x02;
pub const TAG_OID: u8 = 0x06;
pub const TAG_UTF8_STRING: u8 = 0x0C;
pub const TAG_PRINTABLE_STRING: u8 = 0x13;
pub const TAG_T61_STRING: u8 = 0x14;
pub const TAG_IA5_STRING: u8 = 0x16;
pub const TAG_UTC_TIME: u8 = 0x17;
pub const TAG_GENERALIZED_TIME: u8 = 0x18;
pub const TAG_BMP_STRING: u8 = 0x1E;
pub const TAG_SEQUENCE: u8 = 0x30;
pub const TAG_SET: u8 = 0x31;
pub const TAG_CONTEXT_0: u8 = 0xA0;

/// `1.2.840.113549.1.7.2`
pub const OID_SIGNED_DATA: &[u8] = &[0x2A, 0x86, 0x48, 0x86, 0xF7, 0x0D, 0x01, 0x07, 0x02];

fn malformed(msg: impl Into<String>) -> CertError {
    CertError::MalformedDer(msg.into())
}

/// One tag-length-value element. `raw` spans header and content.
#[derive(Debug, Clone, Copy)]
pub struct Tlv<'a> {
    pub tag: u8,
    pub content: &'a [u8],
    pub raw: &'a [u8],
}

impl<'a> Tlv<'a> {
    pub fn children(&self) -> DerIter<'a> {
        DerIter { rest: self.content }
    }

    pub fn expect(self, tag: u8) -> Result<Self, CertError> {
        if self.tag == tag {
            Ok(self)
        } else {
            Err(malformed(format!("expected tag {tag:#04x}, found {:#04x}", self.tag)))
        }
    }
}

/// Reads one element from the front of `input`, returning it and the rest.
pub fn read_tlv(input: &[u8]) -> Result<(Tlv<'_>, &[u8]), CertError> {
    let tag = *input.first().ok_or_else(|| malformed("unexpected end of input"))?;
    if tag & 0x1F == 0x1F {
        return Err(malformed("high tag numbers are not supported"));
    }
    let first = *input.get(1).ok_or_else(|| malformed("missing length"))?;
    let (len, header) = if first < 0x80 {
        (first as usize, 2)
    } else if first == 0x80 {
        return Err(malformed("indefinite length is not DER"));
    } else {
        let n = (first & 0x7F) as usize;
        if n > 4 {
            return Err(malformed("length field wider than 4 bytes"));
        }
        let bytes = input
            .get(2..2 + n)
            .ok_or_else(|| malformed("truncated length field"))?;
        let len = bytes.iter().fold(0usize, |acc, &b| (acc << 8) | b as usize);
        (len, 2 + n)
    };
    let end = header
        .checked_add(len)
        .filter(|&e| e <= input.len())
        .ok_or_else(|| malformed(format!("length {len} overruns {} available bytes", input.len() - header)))?;
    Ok((
        Tlv {
            tag,
            content: &input[header..end],
            raw: &input[..end],
        },
        &input[end..],
    ))
}

pub struct DerIter<'a> {
    rest: &'a [u8],
}

impl<'a> DerIter<'a> {
    pub fn next_tlv(&mut self) -> Result<Tlv<'a>, CertError> {
        let (tlv, rest) = read_tlv(self.rest)?;
        self.rest = rest;
        Ok(tlv)
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }
}

impl<'a> Iterator for DerIter<'a> {
    type Item = Result<Tlv<'a>, CertError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.rest.is_empty() {
            None
        } else {
            let r = read_tlv(self.rest);
            match r {
                Ok((tlv, rest)) => {
                    self.rest = rest;
                    Some(Ok(tlv))
                }
                Err(e) => {
                    self.rest = &[];
                    Some(Err(e))
                }
            }
        }
    }
}

fn digits(s: &[u8]) -> Result<u32, CertError> {
    if s.is_empty() || !s.iter().all(u8::is_ascii_digit) {
        return Err(malformed("non-digit in time value"));
    }
    Ok(s.iter().fold(0, |acc, &b| acc * 10 + (b - b'0') as u32))
}

/// Decodes UTCTime (`YYMMDDHHMM[SS]Z`) or GeneralizedTime
/// (`YYYYMMDDHHMMSS[.f]Z`).
pub fn parse_time(tlv: &Tlv) -> Result<DateTime<Utc>, CertError> {
    let s = tlv.content;
    let (year, rest) = match tlv.tag {
        TAG_UTC_TIME => {
            let yy = digits(s.get(0..2).ok_or_else(|| malformed("short UTCTime"))?)?;
            (if yy < 50 { 2000 + yy } else { 1900 + yy }, &s[2..])
        }
        TAG_GENERALIZED_TIME => {
            let yyyy = digits(s.get(0..4).ok_or_else(|| malformed("short GeneralizedTime"))?)?;
            (yyyy, &s[4..])
        }
        t => return Err(malformed(format!("tag {t:#04x} is not a time"))),
    };
    let rest = rest
        .strip_suffix(b"Z")
        .ok_or_else(|| malformed("time must be UTC (Z)"))?;
    // drop fractional seconds
    let rest = match rest.iter().position(|&b| b == b'.') {
        Some(p) if tlv.tag == TAG_GENERALIZED_TIME => &rest[..p],
        _ => rest,
    };
    let field = |i: usize| -> Result<u32, CertError> {
        digits(rest.get(i..i + 2).ok_or_else(|| malformed("short time value"))?)
    };
    let (month, day, hour, minute) = (field(0)?, field(2)?, field(4)?, field(6)?);
    let second = match rest.len() {
        8 => 0,
        10 => field(8)?,
        _ => return Err(malformed("bad time length")),
    };
    NaiveDate::from_ymd_opt(year as i32, month, day)
        .and_then(|d| d.and_hms_opt(hour, minute, second))
        .map(|t| t.and_utc())
        .ok_or_else(|| malformed("time value out of range"))
}

fn attr_label(oid: &[u8]) -> Option<&'static str> {
    // 2.5.4.x
    match oid {
        [0x55, 0x04, 0x03] => Some("CN"),
        [0x55, 0x04, 0x06] => Some("C"),
        [0x55, 0x04, 0x07] => Some("L"),
        [0x55, 0x04, 0x08] => Some("ST"),
        [0x55, 0x04, 0x0A] => Some("O"),
        [0x55, 0x04, 0x0B] => Some("OU"),
        _ => None,
    }
}

pub fn oid_to_string(oid: &[u8]) -> String {
    let mut parts = Vec::new();
    let mut acc: u64 = 0;
    for (i, &b) in oid.iter().enumerate() {
        acc = (acc << 7) | (b & 0x7F) as u64;
        if b & 0x80 == 0 {
            if parts.is_empty() && i < oid.len() {
                let (a, b) = if acc < 80 { (acc / 40, acc % 40) } else { (2, acc - 80) };
                parts.push(a.to_string());
                parts.push(b.to_string());
            } else {
                parts.push(acc.to_string());
            }
            acc = 0;
        }
    }
    parts.join(".")
}

fn decode_string(tlv: &Tlv) -> String {
    match tlv.tag {
        TAG_BMP_STRING => {
            let units: Vec<u16> = tlv
                .content
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect();
            String::from_utf16_lossy(&units)
        }
        TAG_T61_STRING => tlv.content.iter().map(|&b| b as char).collect(),
        _ => String::from_utf8_lossy(tlv.content).into_owned(),
    }
}

/// Renders an X.501 Name as `C=US, O=Org, CN=Name`.
pub fn render_name(name: &Tlv) -> Result<String, CertError> {
    let mut parts = Vec::new();
    for rdn in name.children() {
        let rdn = rdn?.expect(TAG_SET)?;
        for atv in rdn.children() {
            let atv = atv?.expect(TAG_SEQUENCE)?;
            let mut it = atv.children();
            let oid = it.next_tlv()?.expect(TAG_OID)?;
            let value = it.next_tlv()?;
            let label = attr_label(oid.content)
                .map(str::to_string)
                .unwrap_or_else(|| oid_to_string(oid.content));
            parts.push(format!("{label}={}", decode_string(&value)));
        }
    }
    Ok(parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_and_long_lengths() {
        let (t, rest) = read_tlv(&[0x04, 0x02, 0xAA, 0xBB, 0xFF]).unwrap();
        assert_eq!(t.content, &[0xAA, 0xBB]);
        assert_eq!(rest, &[0xFF]);
        let mut long = vec![0x04, 0x81, 0x80];
        long.extend(std::iter::repeat_n(7u8, 128));
        let (t, _) = read_tlv(&long).unwrap();
        assert_eq!(t.content.len(), 128);
    }

    #[test]
    fn overruns_are_errors() {
        assert!(read_tlv(&[0x30, 0x05, 0x00]).is_err());
        assert!(read_tlv(&[0x30, 0x82, 0x01]).is_err());
        assert!(read_tlv(&[0x30, 0x80, 0x00, 0x00]).is_err());
        assert!(read_tlv(&[0x30]).is_err());
        assert!(read_tlv(&[0x30, 0x89, 1, 2, 3, 4, 5, 6, 7, 8, 9]).is_err());
    }

    #[test]
    fn times() {
        let utc = Tlv { tag: TAG_UTC_TIME, content: b"200101000000Z", raw: &[] };
        assert_eq!(parse_time(&utc).unwrap().to_rfc3339(), "2020-01-01T00:00:00+00:00");
        let old = Tlv { tag: TAG_UTC_TIME, content: b"991231235959Z", raw: &[] };
        assert_eq!(parse_time(&old).unwrap().to_rfc3339(), "1999-12-31T23:59:59+00:00");
        let gen = Tlv { tag: TAG_GENERALIZED_TIME, content: b"20500101000000.5Z", raw: &[] };
        assert_eq!(parse_time(&gen).unwrap().to_rfc3339(), "2050-01-01T00:00:00+00:00");
        let bad = Tlv { tag: TAG_UTC_TIME, content: b"201301000000Z", raw: &[] };
        assert!(parse_time(&bad).is_err());
        let local = Tlv { tag: TAG_UTC_TIME, content: b"200101000000+0100", raw: &[] };
        assert!(parse_time(&local).is_err());
    }

    #[test]
    fn oid_rendering() {
        assert_eq!(oid_to_string(OID_SIGNED_DATA), "1.2.840.113549.1.7.2");
        assert_eq!(oid_to_string(&[0x55, 0x04, 0x03]), "2.5.4.3");
    }
}
