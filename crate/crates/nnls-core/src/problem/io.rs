//! Text file format for problem instances.
//!
//! A problem file is a self-describing document:
//!
//! ```text
//! nnls problem v1
//! label gaussian m=2 n=3 seed=7
//! m 2
//! n 3
//! seed 7
//! q 5.0000000000000000e-1
//! a <m*n row-major floats>
//! y <m floats>
//! x_true <n floats>
//! x_plus <n floats>
//! x_minus <n floats>
//! ```
//!
//! `seed`, `q`, and the three signal fields are optional. Floats carry 17
//! significant digits, so `load(save(p)) == p` holds bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{NnlsError, Result};
use crate::linalg::DenseMatrix;
use crate::problem::NnlsProblem;
use crate::textdoc::{fmt_f64, join_f64, TextDoc};

const MAGIC: &str = "nnls problem v1";
const KNOWN_KEYS: &[&str] = &[
    "label", "m", "n", "seed", "q", "a", "y", "x_true", "x_plus", "x_minus",
];

pub fn save_problem(p: &NnlsProblem, path: impl AsRef<Path>) -> Result<()> {
    p.validate()?;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("label {}\n", p.label));
    out.push_str(&format!("m {}\n", p.m()));
    out.push_str(&format!("n {}\n", p.n()));
    if let Some(seed) = p.seed {
        out.push_str(&format!("seed {seed}\n"));
    }
    if let Some(q) = p.q {
        out.push_str(&format!("q {}\n", fmt_f64(q)));
    }
    out.push_str(&format!("a {}\n", join_f64(p.a.data())));
    out.push_str(&format!("y {}\n", join_f64(&p.y)));
    for (key, field) in [
        ("x_true", &p.x_true),
        ("x_plus", &p.x_plus),
        ("x_minus", &p.x_minus),
    ] {
        if let Some(v) = field {
            out.push_str(&format!("{key} {}\n", join_f64(v)));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<NnlsProblem> {
    let text = fs::read_to_string(path)?;
    parse_problem(&text)
}

pub fn parse_problem(text: &str) -> Result<NnlsProblem> {
    let doc = TextDoc::parse(text, MAGIC)?;
    for key in doc.keys() {
        if !KNOWN_KEYS.contains(&key) {
            return Err(NnlsError::Parse {
                line: doc.get(key).map(|(_, l)| l).unwrap_or(0),
                message: format!("unknown field '{key}'"),
            });
        }
    }
    let m = doc.require_usize("m")?;
    let n = doc.require_usize("n")?;
    let a_data = doc.require_f64_list("a")?;
    if a_data.len() != m * n {
        return Err(NnlsError::Validation(format!(
            "field 'a' has {} entries but m*n = {}",
            a_data.len(),
            m * n
        )));
    }
    let a = DenseMatrix::new(m, n, a_data)?;
    let y = doc.require_f64_list("y")?;
    let p = NnlsProblem {
        a,
        y,
        x_true: doc.f64_list("x_true")?,
        x_plus: doc.f64_list("x_plus")?,
        x_minus: doc.f64_list("x_minus")?,
        q: doc.f64_scalar("q")?,
        seed: doc.u64_scalar("seed")?,
        label: doc.get("label").map(|(v, _)| v.to_string()).unwrap_or_default(),
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{consistent_sparse_problem, q_perturbed_problem};

    #[test]
    fn round_trip_is_bit_exact() {
        let p = q_perturbed_problem(4, 6, 2, 0.3, 42, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        save_problem(&p, &path).unwrap();
        let q = load_problem(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn round_trip_without_optionals() {
        let mut p = consistent_sparse_problem(3, 4, 2, 9, true).unwrap();
        p.x_true = None;
        p.seed = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        save_problem(&p, &path).unwrap();
        let q = load_problem(&path).unwrap();
        assert_eq!(p, q);
        assert!(q.x_true.is_none() && q.seed.is_none() && q.q.is_none());
    }

    #[test]
    fn wrong_y_length_is_validation_error() {
        let text = "nnls problem v1\nlabel t\nm 2\nn 2\na 1 0 0 1\ny 1 2 3\n";
        assert!(matches!(
            parse_problem(text),
            Err(NnlsError::Validation(_))
        ));
    }

    #[test]
    fn bad_float_is_parse_error_with_line() {
        let text = "nnls problem v1\nlabel t\nm 2\nn 2\na 1 0 zero 1\ny 1 2\n";
        match parse_problem(text) {
            Err(NnlsError::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("'a'"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let text = "nnls problem v1\nm 1\nn 1\na 1\ny 1\nbogus 3\n";
        assert!(matches!(parse_problem(text), Err(NnlsError::Parse { .. })));
    }
}
