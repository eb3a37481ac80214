//! JAR manifest (`META-INF/MANIFEST.MF`) parsing.

/// One blank-line separated section. Attribute order is preserved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    pub attributes: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }

    pub fn name(&self) -> Option<&str> {
        self.get("Name")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JarManifest {
    pub main: Section,
    pub entries: Vec<Section>,
}

/// Parses manifest text. Continuation lines begin with a single space;
/// lines without a `:` separator are ignored. The first section is the main
/// section.
pub fn parse_manifest(text: &str) -> JarManifest {
    let mut blocks: Vec<Vec<String>> = vec![Vec::new()];
    for line in text.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let block = blocks.last_mut().unwrap();
        if line.is_empty() {
            if !block.is_empty() {
                blocks.push(Vec::new());
            }
        } else if let Some(cont) = line.strip_prefix(' ') {
            if let Some(last) = block.last_mut() {
                last.push_str(cont);
            }
        } else {
            block.push(line.to_string());
        }
    }
    let mut sections = blocks
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(|lines| Section {
            attributes: lines
                .iter()
                .filter_map(|l| l.split_once(':'))
                .map(|(k, v)| (k.to_string(), v.strip_prefix(' ').unwrap_or(v).to_string()))
                .collect(),
        });
    let main = if text.starts_with(['\r', '\n']) {
        Section::default()
    } else {
        sections.next().unwrap_or_default()
    };
    JarManifest {
        main,
        entries: sections.collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_continuations() {
        let text = "Manifest-Version: 1.0\r\nCreated-By: x\r\n\r\nName: assets/a-very-long-\r\n name.bin\r\nSHA-256-Digest: abc=\r\n\r\nName: b\r\nSHA1-Digest: def=\r\n";
        let m = parse_manifest(text);
        assert_eq!(m.main.get("manifest-version"), Some("1.0"));
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].name(), Some("assets/a-very-long-name.bin"));
        assert_eq!(m.entries[0].get("SHA-256-Digest"), Some("abc="));
        assert_eq!(m.entries[1].get("SHA1-Digest"), Some("def="));
    }

    #[test]
    fn main_only() {
        let m = parse_manifest("Manifest-Version: 1.0\n");
        assert!(m.entries.is_empty());
        assert_eq!(m.main.get("Manifest-Version"), Some("1.0"));
    }

    #[test]
    fn repeated_blank_lines() {
        let m = parse_manifest("A: 1\n\n\n\nName: x\nSHA1-Digest: y\n\n\n");
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].name(), Some("x"));
    }
}
