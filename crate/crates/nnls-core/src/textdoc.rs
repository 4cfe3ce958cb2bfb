//! Line-oriented `key value...` text documents shared by the problem,
//! report, and experiment-spec file formats. Floats are written with 17
//! significant digits so that every f64 round-trips exactly.

use crate::error::{NnlsError, Result};

/// Formats an f64 with 17 significant digits (round-trip exact).
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub(crate) fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ")
}

/// A parsed document: ordered `(key, rest-of-line, line_number)` fields.
#[derive(Debug)]
pub(crate) struct TextDoc {
    fields: Vec<(String, String, usize)>,
}

impl TextDoc {
    /// Parses a document whose first nonempty line must equal `magic`.
    /// Duplicate keys are rejected.
    pub fn parse(text: &str, magic: &str) -> Result<TextDoc> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or_else(|| NnlsError::Parse {
                line: 1,
                message: "empty document".into(),
            })?;
        if header.1.trim() != magic {
            return Err(NnlsError::Parse {
                line: header.0 + 1,
                message: format!("expected header '{magic}', found '{}'", header.1.trim()),
            });
        }
        let mut fields: Vec<(String, String, usize)> = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let trimmed = line.trim_end();
            if trimmed.trim().is_empty() {
                continue;
            }
            let (key, rest) = match trimmed.split_once(' ') {
                Some((k, r)) => (k.to_string(), r.to_string()),
                None => (trimmed.to_string(), String::new()),
            };
            if fields.iter().any(|(k, _, _)| *k == key) {
                return Err(NnlsError::Parse {
                    line: line_no,
                    message: format!("duplicate field '{key}'"),
                });
            }
            fields.push((key, rest, line_no));
        }
        Ok(TextDoc { fields })
    }

    pub fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.fields
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(k, _, _)| k.as_str())
    }

    pub fn require(&self, key: &str) -> Result<(&str, usize)> {
        self.get(key).ok_or_else(|| NnlsError::Parse {
            line: 0,
            message: format!("missing required field '{key}'"),
        })
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some((raw, line)) => Ok(Some(parse_f64_list(raw, line, key)?)),
        }
    }

    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let (raw, line) = self.require(key)?;
        parse_f64_list(raw, line, key)
    }

    pub fn f64_scalar(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some((raw, line)) => raw
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|e| NnlsError::Parse {
                    line,
                    message: format!("field '{key}': {e}"),
                }),
        }
    }

    pub fn u64_scalar(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some((raw, line)) => raw
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|e| NnlsError::Parse {
                    line,
                    message: format!("field '{key}': {e}"),
                }),
        }
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        let (raw, line) = self.require(key)?;
        raw.trim().parse::<usize>().map_err(|e| NnlsError::Parse {
            line,
            message: format!("field '{key}': {e}"),
        })
    }
}

pub(crate) fn parse_f64_list(raw: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, tok) in raw.split_whitespace().enumerate() {
        let v = tok.parse::<f64>().map_err(|e| NnlsError::Parse {
            line,
            message: format!("field '{key}' token {}: {e}", i + 1),
        })?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_format_round_trips() {
        for v in [0.1, -0.0, 1.0 / 3.0, 6.02e23, 5e-324, f64::MAX] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v} via {s}");
        }
    }

    #[test]
    fn parse_rejects_wrong_magic() {
        let err = TextDoc::parse("something else\n", "nnls problem v1").unwrap_err();
        assert!(matches!(err, NnlsError::Parse { line: 1, .. }));
    }

    #[test]
    fn parse_reports_bad_token_line() {
        let doc = TextDoc::parse("doc v1\nx 1.0 oops 2.0\n", "doc v1").unwrap();
        let err = doc.require_f64_list("x").unwrap_err();
        match err {
            NnlsError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("token 2"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_duplicates() {
        let err = TextDoc::parse("doc v1\na 1\na 2\n", "doc v1").unwrap_err();
        assert!(matches!(err, NnlsError::Parse { line: 3, .. }));
    }
}
