//! Minimal binary XML writer, enough to produce manifests the way the
//! platform packager lays them out (string pool, resource map, namespace
//! and element chunks).

const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";
const NO_INDEX: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone)]
pub enum AttrValue {
    Str(String),
    Ref(u32),
    Int(u32),
    Bool(bool),
}

#[derive(Debug, Clone)]
pub struct Attr {
    pub android_ns: bool,
    pub name: String,
    pub value: AttrValue,
}

#[derive(Debug, Clone)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<Attr>,
    pub children: Vec<Element>,
}

impl Element {
    pub fn new(name: &str) -> Self {
        Element {
            name: name.to_string(),
            attrs: Vec::new(),
            children: Vec::new(),
        }
    }

    /// `android:<name>="<value>"`
    pub fn android(mut self, name: &str, value: &str) -> Self {
        self.attrs.push(Attr {
            android_ns: true,
            name: name.to_string(),
            value: AttrValue::Str(value.to_string()),
        });
        self
    }

    pub fn plain(mut self, name: &str, value: &str) -> Self {
        self.attrs.push(Attr {
            android_ns: false,
            name: name.to_string(),
            value: AttrValue::Str(value.to_string()),
        });
        self
    }

    pub fn attr(mut self, android_ns: bool, name: &str, value: AttrValue) -> Self {
        self.attrs.push(Attr {
            android_ns,
            name: name.to_string(),
            value,
        });
        self
    }

    pub fn child(mut self, child: Element) -> Self {
        self.children.push(child);
        self
    }
}

/// Well-known framework attribute ids written into the resource map.
fn framework_attr_id(name: &str) -> Option<u32> {
    match name {
        "name" => Some(0x0101_0003),
        "exported" => Some(0x0101_0010),
        "versionCode" => Some(0x0101_021b),
        "label" => Some(0x0101_0001),
        _ => None,
    }
}

#[derive(Default)]
struct Pool {
    strings: Vec<String>,
}

impl Pool {
    fn idx(&mut self, s: &str) -> u32 {
        if let Some(i) = self.strings.iter().position(|x| x == s) {
            return i as u32;
        }
        self.strings.push(s.to_string());
        (self.strings.len() - 1) as u32
    }
}

fn collect_attr_names(e: &Element, out: &mut Vec<String>) {
    for a in &e.attrs {
        if a.android_ns && framework_attr_id(&a.name).is_some() && !out.contains(&a.name) {
            out.push(a.name.clone());
        }
    }
    for c in &e.children {
        collect_attr_names(c, out);
    }
}

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Options controlling layout details that parsers must tolerate.
#[derive(Debug, Clone, Copy)]
pub struct AxmlOptions {
    pub utf8: bool,
    pub resource_map: bool,
    /// Blank out attribute name strings, as obfuscators do; the resource
    /// map then carries the only identity of each attribute.
    pub strip_attr_names: bool,
    /// Insert an unknown chunk between the pool and the elements.
    pub unknown_chunk: bool,
}

impl Default for AxmlOptions {
    fn default() -> Self {
        AxmlOptions {
            utf8: false,
            resource_map: true,
            strip_attr_names: false,
            unknown_chunk: false,
        }
    }
}

pub fn encode(root: &Element) -> Vec<u8> {
    encode_with(root, AxmlOptions::default())
}

pub fn encode_with(root: &Element, opts: AxmlOptions) -> Vec<u8> {
    let mut pool = Pool::default();
    // resource-mapped attribute names must occupy the first pool slots
    let mut mapped = Vec::new();
    if opts.resource_map {
        collect_attr_names(root, &mut mapped);
    }
    for (i, n) in mapped.iter().enumerate() {
        if opts.strip_attr_names {
            // distinct placeholder strings keep the slots unique
            pool.strings.push(" ".repeat(i));
        } else {
            pool.idx(n);
        }
    }
    let ns_prefix = pool.idx("android");
    let ns_uri = pool.idx(ANDROID_NS);

    let mut body = Vec::new();
    // namespace start
    push_u16(&mut body, 0x0100);
    push_u16(&mut body, 16);
    push_u32(&mut body, 24);
    push_u32(&mut body, 1);
    push_u32(&mut body, NO_INDEX);
    push_u32(&mut body, ns_prefix);
    push_u32(&mut body, ns_uri);

    let mut line = 2;
    write_element(root, &mut pool, &mapped, ns_uri, &mut body, &mut line);

    push_u16(&mut body, 0x0101);
    push_u16(&mut body, 16);
    push_u32(&mut body, 24);
    push_u32(&mut body, line);
    push_u32(&mut body, NO_INDEX);
    push_u32(&mut body, ns_prefix);
    push_u32(&mut body, ns_uri);

    let mut chunks = string_pool(&pool.strings, opts.utf8);
    if opts.resource_map && !mapped.is_empty() {
        push_u16(&mut chunks, 0x0180);
        push_u16(&mut chunks, 8);
        push_u32(&mut chunks, 8 + 4 * mapped.len() as u32);
        for n in &mapped {
            push_u32(&mut chunks, framework_attr_id(n).unwrap());
        }
    }
    if opts.unknown_chunk {
        push_u16(&mut chunks, 0x0777);
        push_u16(&mut chunks, 8);
        push_u32(&mut chunks, 16);
        chunks.extend_from_slice(&[0xAB; 8]);
    }
    chunks.extend_from_slice(&body);

    let mut out = Vec::with_capacity(chunks.len() + 8);
    push_u16(&mut out, 0x0003);
    push_u16(&mut out, 8);
    push_u32(&mut out, 8 + chunks.len() as u32);
    out.extend_from_slice(&chunks);
    out
}

fn write_element(
    e: &Element,
    pool: &mut Pool,
    mapped: &[String],
    ns_uri: u32,
    out: &mut Vec<u8>,
    line: &mut u32,
) {
    let name = pool.idx(&e.name);
    push_u16(out, 0x0102);
    push_u16(out, 16);
    push_u32(out, 36 + 20 * e.attrs.len() as u32);
    push_u32(out, *line);
    push_u32(out, NO_INDEX);
    push_u32(out, NO_INDEX);
    push_u32(out, name);
    push_u16(out, 20);
    push_u16(out, 20);
    push_u16(out, e.attrs.len() as u16);
    push_u16(out, 0);
    push_u16(out, 0);
    push_u16(out, 0);
    for a in &e.attrs {
        let attr_name = match mapped.iter().position(|m| *m == a.name && a.android_ns) {
            Some(i) => i as u32,
            None => pool.idx(&a.name),
        };
        push_u32(out, if a.android_ns { ns_uri } else { NO_INDEX });
        push_u32(out, attr_name);
        let (raw, ty, data) = match &a.value {
            AttrValue::Str(s) => {
                let i = pool.idx(s);
                (i, 0x03u8, i)
            }
            AttrValue::Ref(id) => (NO_INDEX, 0x01, *id),
            AttrValue::Int(v) => (NO_INDEX, 0x10, *v),
            AttrValue::Bool(b) => (NO_INDEX, 0x12, if *b { 0xFFFF_FFFF } else { 0 }),
        };
        push_u32(out, raw);
        push_u16(out, 8);
        out.push(0);
        out.push(ty);
        push_u32(out, data);
    }
    *line += 1;
    for c in &e.children {
        write_element(c, pool, mapped, ns_uri, out, line);
    }
    push_u16(out, 0x0103);
    push_u16(out, 16);
    push_u32(out, 24);
    push_u32(out, *line);
    push_u32(out, NO_INDEX);
    push_u32(out, NO_INDEX);
    push_u32(out, name);
    *line += 1;
}

fn string_pool(strings: &[String], utf8: bool) -> Vec<u8> {
    let mut data = Vec::new();
    let mut offsets = Vec::with_capacity(strings.len());
    for s in strings {
        offsets.push(data.len() as u32);
        if utf8 {
            let units = s.encode_utf16().count();
            push_len8(&mut data, units);
            push_len8(&mut data, s.len());
            data.extend_from_slice(s.as_bytes());
            data.push(0);
        } else {
            let units: Vec<u16> = s.encode_utf16().collect();
            assert!(units.len() < 0x8000);
            push_u16(&mut data, units.len() as u16);
            for u in units {
                push_u16(&mut data, u);
            }
            push_u16(&mut data, 0);
        }
    }
    while data.len() % 4 != 0 {
        data.push(0);
    }
    let header = 28u32;
    let strings_start = header + 4 * strings.len() as u32;
    let mut out = Vec::new();
    push_u16(&mut out, 0x0001);
    push_u16(&mut out, header as u16);
    push_u32(&mut out, strings_start + data.len() as u32);
    push_u32(&mut out, strings.len() as u32);
    push_u32(&mut out, 0);
    push_u32(&mut out, if utf8 { 1 << 8 } else { 0 });
    push_u32(&mut out, strings_start);
    push_u32(&mut out, 0);
    for o in offsets {
        push_u32(&mut out, o);
    }
    out.extend_from_slice(&data);
    out
}

fn push_len8(buf: &mut Vec<u8>, n: usize) {
    assert!(n < 0x8000);
    if n < 0x80 {
        buf.push(n as u8);
    } else {
        buf.push(0x80 | (n >> 8) as u8);
        buf.push((n & 0xFF) as u8);
    }
}

/// Manifest with the given permissions and receivers (each receiver given
/// as its list of intent-filter actions).
pub fn manifest(package: &str, permissions: &[&str], receivers: &[&[&str]]) -> Element {
    let mut root = Element::new("manifest").plain("package", package);
    for p in permissions {
        root = root.child(Element::new("uses-permission").android("name", p));
    }
    let mut app = Element::new("application").android("label", "Fixture");
    app = app.child(
        Element::new("activity")
            .android("name", ".MainActivity")
            .child(
                Element::new("intent-filter")
                    .child(Element::new("action").android("name", "android.intent.action.MAIN"))
                    .child(
                        Element::new("category")
                            .android("name", "android.intent.category.LAUNCHER"),
                    ),
            ),
    );
    for (i, actions) in receivers.iter().enumerate() {
        let mut filter = Element::new("intent-filter");
        for a in actions.iter() {
            filter = filter.child(Element::new("action").android("name", a));
        }
        app = app.child(
            Element::new("receiver")
                .android("name", &format!(".Receiver{i}"))
                .attr(true, "exported", AttrValue::Bool(true))
                .child(filter),
        );
    }
    root.child(app)
}
