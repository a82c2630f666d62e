//! Self-describing plain-text documents: named sections of key/value lines.
//!
//! The same format backs checkpoints and resolved run configs. Floats are
//! written with 17 significant decimal digits after the leading digit, which
//! round-trips `f64` bitwise.

use crate::error::{Error, Result};

pub const DOC_HEADER: &str = "rnncert-doc v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub name: String,
    entries: Vec<(String, String)>,
}

impl Section {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        debug_assert!(!key.contains(char::is_whitespace), "key {key:?}");
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn set_usize(&mut self, key: &str, value: usize) -> &mut Self {
        self.set(key, value.to_string())
    }

    pub fn set_u64(&mut self, key: &str, value: u64) -> &mut Self {
        self.set(key, value.to_string())
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format_f64(value))
    }

    pub fn set_f64_slice(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let joined = values.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(" ");
        self.set(key, joined)
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("missing key {key:?} in [{}]", self.name)))
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.raw(key)
    }

    pub fn usize_(&self, key: &str) -> Result<usize> {
        self.raw(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad usize for {key:?}: {e}")))
    }

    pub fn u64_(&self, key: &str) -> Result<u64> {
        self.raw(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad u64 for {key:?}: {e}")))
    }

    pub fn f64_(&self, key: &str) -> Result<f64> {
        self.raw(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad f64 for {key:?}: {e}")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|e| Error::Checkpoint(format!("bad f64 in {key:?}: {e}")))
            })
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextDoc {
    sections: Vec<Section>,
}

impl TextDoc {
    pub fn new() -> Self {
        TextDoc::default()
    }

    /// Get-or-append a section by exact name.
    pub fn section(&mut self, name: &str) -> &mut Section {
        if let Some(pos) = self.sections.iter().position(|s| s.name == name) {
            return &mut self.sections[pos];
        }
        self.sections.push(Section {
            name: name.to_string(),
            entries: Vec::new(),
        });
        self.sections.last_mut().unwrap()
    }

    pub fn get(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section [{name}]")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|s| s.name.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(DOC_HEADER);
        out.push('\n');
        for s in &self.sections {
            out.push('[');
            out.push_str(&s.name);
            out.push_str("]\n");
            for (k, v) in &s.entries {
                out.push_str(k);
                if !v.is_empty() {
                    out.push(' ');
                    out.push_str(v);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim() == DOC_HEADER => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "expected header {DOC_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut doc = TextDoc::new();
        let mut current: Option<usize> = None;
        for (lineno, line) in lines.enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                doc.section(name);
                current = Some(doc.sections.len() - 1);
                continue;
            }
            let idx = current.ok_or_else(|| {
                Error::Checkpoint(format!("line {}: entry before any section", lineno + 2))
            })?;
            let (key, value) = match line.split_once(' ') {
                Some((k, v)) => (k, v.trim_start()),
                None => (line, ""),
            };
            doc.sections[idx]
                .entries
                .push((key.to_string(), value.to_string()));
        }
        Ok(doc)
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        TextDoc::parse(&text)
    }
}

/// 18 significant digits: exact decimal round-trip for every finite f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn floats_round_trip_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for _ in 0..10_000 {
            let v = f64::from_bits(rng.random::<u64>());
            if !v.is_finite() {
                continue;
            }
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v}");
        }
        for v in [0.0, -0.0, 1.0, -1.0, f64::MIN_POSITIVE, f64::MAX] {
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
        }
    }

    #[test]
    fn documents_round_trip() {
        let mut doc = TextDoc::new();
        doc.section("meta").set("format", "test").set_usize("n", 3);
        doc.section("data.block")
            .set_f64("x", -0.12345)
            .set_f64_slice("row", &[1.0, -2.5, 3.25e-17]);
        let text = doc.render();
        let parsed = TextDoc::parse(&text).unwrap();
        assert_eq!(doc, parsed);
        assert_eq!(parsed.get("data.block").unwrap().f64_list("row").unwrap(), vec![1.0, -2.5, 3.25e-17]);
        // render is stable
        assert_eq!(text, parsed.render());
    }

    #[test]
    fn missing_pieces_are_reported() {
        let doc = TextDoc::parse("rnncert-doc v1\n[a]\nk 1\n").unwrap();
        assert!(doc.get("b").is_err());
        assert!(doc.get("a").unwrap().raw("missing").is_err());
        assert!(TextDoc::parse("wrong header\n").is_err());
    }
}
