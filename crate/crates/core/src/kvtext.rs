//! Minimal sectioned `key = value` text format shared by geometry files and
//! run configurations.
//!
//! ```text
//! # comment
//! top_level = 3
//! [section]
//! number = 1.5e-3
//! list = [0, 0.25, 0.5]
//! name = "boreal"
//! ```
//!
//! Keys are addressed as `section.key` (or bare `key` before the first
//! section header). Every diagnostic carries the offending line and key.

use crate::error::{Result, TomoError};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub raw: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    entries: Vec<Entry>,
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> TomoError {
    TomoError::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line_no, line, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(is_key_char) {
                    return Err(config_err(line_no, name, "invalid section name"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line_no, line, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(is_key_char) {
                return Err(config_err(line_no, key, "invalid key name"));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if entries.iter().any(|e| e.key == full) {
                return Err(config_err(line_no, &full, "duplicate key"));
            }
            entries.push(Entry {
                key: full,
                raw: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(Document { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    /// Fails on the first key that is not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(config_err(e.line, &e.key, "unknown key")),
            None => Ok(()),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| parse_f64(e, &e.raw)).transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|e| {
                e.raw
                    .parse::<u64>()
                    .map_err(|_| config_err(e.line, &e.key, format!("expected a non-negative integer, got `{}`", e.raw)))
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|e| match e.raw.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(config_err(e.line, &e.key, format!("expected true/false, got `{other}`"))),
            })
            .transpose()
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        self.get(key)
            .map(|e| {
                let s = e.raw.as_str();
                let unquoted = s
                    .strip_prefix('"')
                    .and_then(|s| s.strip_suffix('"'))
                    .unwrap_or(s);
                if unquoted.is_empty() {
                    Err(config_err(e.line, &e.key, "empty string"))
                } else {
                    Ok(unquoted.to_string())
                }
            })
            .transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|e| list_items(e)?.iter().map(|item| parse_f64(e, item)).collect())
            .transpose()
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key)
            .map(|e| {
                list_items(e)?
                    .iter()
                    .map(|item| {
                        item.parse::<usize>().map_err(|_| {
                            config_err(e.line, &e.key, format!("expected integer list item, got `{item}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Line number of `key`, or 0 when absent (for diagnostics on derived checks).
    pub fn line_of(&self, key: &str) -> usize {
        self.get(key).map_or(0, |e| e.line)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'
}

fn parse_f64(e: &Entry, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| config_err(e.line, &e.key, format!("expected a number, got `{s}`")))?;
    if !v.is_finite() {
        return Err(config_err(e.line, &e.key, "value must be finite"));
    }
    Ok(v)
}

fn list_items(e: &Entry) -> Result<Vec<String>> {
    let inner = e
        .raw
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| config_err(e.line, &e.key, "expected a bracketed list"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(inner.split(',').map(|s| s.trim().to_string()).collect())
}

/// Formats a float with 17 significant digits so it parses back bit-exactly.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_types() {
        let doc = Document::parse(
            "top = 1\n# c\n[cs]\nlambda = 0.5 # trailing\nwavelet = \"haar\"\nsizes = [3, 5]\nnonneg = true\n",
        )
        .unwrap();
        assert_eq!(doc.u64("top").unwrap(), Some(1));
        assert_eq!(doc.f64("cs.lambda").unwrap(), Some(0.5));
        assert_eq!(doc.string("cs.wavelet").unwrap().as_deref(), Some("haar"));
        assert_eq!(doc.usize_list("cs.sizes").unwrap(), Some(vec![3, 5]));
        assert_eq!(doc.bool("cs.nonneg").unwrap(), Some(true));
        assert_eq!(doc.f64("cs.missing").unwrap(), None);
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let doc = Document::parse("[cs]\nlambda = abc\n").unwrap();
        match doc.f64("cs.lambda") {
            Err(TomoError::Config { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "cs.lambda");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Document::parse("a = 1\na = 2\n"),
            Err(TomoError::Config { line: 2, .. })
        ));
        assert!(matches!(
            Document::parse("[open\n"),
            Err(TomoError::Config { line: 1, .. })
        ));
        let doc = Document::parse("[x]\nbogus = 1\n").unwrap();
        assert!(matches!(
            doc.reject_unknown(&["x.ok"]),
            Err(TomoError::Config { line: 2, .. })
        ));
    }

    #[test]
    fn exact_float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(fmt_exact(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
