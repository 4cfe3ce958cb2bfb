//! Declarative experiment descriptions with file and one-line
//! serializations. The one-line form is echoed into result-table
//! metadata, and parsing it back reproduces the exact run.

use std::fs;
use std::path::Path;

use crate::error::{NnlsError, Result};
use crate::textdoc::{fmt_f64, TextDoc};

const MAGIC: &str = "nnls experiment v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    InitSweep,
    LayerTrace,
    StepsizeRace,
    Stability,
    RateCheck,
    Timing,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::InitSweep => "init_sweep",
            ExperimentKind::LayerTrace => "layer_trace",
            ExperimentKind::StepsizeRace => "stepsize_race",
            ExperimentKind::Stability => "stability",
            ExperimentKind::RateCheck => "rate_check",
            ExperimentKind::Timing => "timing",
        }
    }

    pub fn parse(s: &str) -> Option<ExperimentKind> {
        match s {
            "init_sweep" => Some(ExperimentKind::InitSweep),
            "layer_trace" => Some(ExperimentKind::LayerTrace),
            "stepsize_race" => Some(ExperimentKind::StepsizeRace),
            "stability" => Some(ExperimentKind::Stability),
            "rate_check" => Some(ExperimentKind::RateCheck),
            "timing" => Some(ExperimentKind::Timing),
            _ => None,
        }
    }

    pub fn all() -> [ExperimentKind; 6] {
        [
            ExperimentKind::InitSweep,
            ExperimentKind::LayerTrace,
            ExperimentKind::StepsizeRace,
            ExperimentKind::Stability,
            ExperimentKind::RateCheck,
            ExperimentKind::Timing,
        ]
    }
}

/// Full description of one experiment. Not every field is meaningful for
/// every kind; `defaults` seeds each kind with its customary settings and
/// files only need to override what differs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    /// Initialization magnitude (`x0 = alpha * 1`).
    pub alpha: f64,
    /// Constant stepsize where one applies.
    pub eta: f64,
    pub alpha_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub layers_list: Vec<u32>,
    pub trials: usize,
    pub master_seed: u64,
    pub max_iters: u64,
    /// Residual-norm target for iterations-to-precision measurements.
    pub precision: f64,
    pub t_end: f64,
    pub dt: f64,
    pub trace_every: u64,
    /// Square matrix sizes for the timing run.
    pub sizes: Vec<usize>,
    /// Perturbation scale pushing `y` off the range of `A` (rate check).
    pub noise: f64,
    /// Global matrix rescaling applied after normalization (rate check).
    pub scale: f64,
    pub normalize_columns: bool,
    pub threads: usize,
}

impl ExperimentSpec {
    /// Customary settings per experiment at desk scale; the original
    /// larger dimensions are one override away in the spec file.
    pub fn defaults(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec {
            kind,
            m: 30,
            n: 50,
            s: 3,
            alpha: 1e-2,
            eta: 1e-2,
            alpha_grid: Vec::new(),
            q_grid: Vec::new(),
            layers_list: vec![3],
            trials: 1,
            master_seed: 7,
            max_iters: 1_000_000,
            precision: 1e-3,
            t_end: 1e3,
            dt: 2e-2,
            trace_every: 100,
            sizes: Vec::new(),
            noise: 0.5,
            scale: 1.0,
            normalize_columns: false,
            threads: 1,
        };
        match kind {
            ExperimentKind::InitSweep => {
                spec.m = 10;
                spec.alpha_grid = (0..7).map(|k| 10f64.powf(-3.0 + k as f64 / 3.0)).collect();
                spec.layers_list = vec![2, 3];
            }
            ExperimentKind::LayerTrace => {
                spec.layers_list = vec![2, 3];
                spec.trace_every = 1000;
            }
            ExperimentKind::StepsizeRace => {
                spec.m = 128;
                spec.n = 256;
                spec.s = 4;
                spec.alpha = 1.0;
                spec.eta = 2e-2;
                spec.trials = 25;
                spec.max_iters = 100_000;
                spec.trace_every = 1000;
                spec.normalize_columns = true;
                spec.layers_list = vec![2, 3];
            }
            ExperimentKind::Stability => {
                spec.q_grid = vec![0.3, 0.5, 0.7];
                spec.trials = 20;
                spec.max_iters = 200_000;
            }
            ExperimentKind::RateCheck => {
                spec.m = 256;
                spec.n = 128;
                spec.alpha = 1.0;
                spec.eta = 5e-2;
                spec.dt = 5e-2;
                spec.trials = 10;
                spec.layers_list = vec![2];
                spec.normalize_columns = true;
                spec.scale = 0.1;
            }
            ExperimentKind::Timing => {
                spec.sizes = vec![256];
                spec.trials = 3;
                spec.alpha = 1.0;
                spec.max_iters = 10_000;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(NnlsError::domain("dimensions must be positive"));
        }
        if self.trials == 0 {
            return Err(NnlsError::domain("trials must be >= 1"));
        }
        if self.threads == 0 {
            return Err(NnlsError::domain("threads must be >= 1"));
        }
        if self.layers_list.is_empty() || self.layers_list.iter().any(|&l| l < 2) {
            return Err(NnlsError::domain("layers list must be nonempty with entries >= 2"));
        }
        if !(self.eta > 0.0) || !(self.alpha > 0.0) {
            return Err(NnlsError::domain("alpha and eta must be > 0"));
        }
        match self.kind {
            ExperimentKind::InitSweep => {
                if self.alpha_grid.is_empty() {
                    return Err(NnlsError::domain("init_sweep needs a nonempty alpha_grid"));
                }
            }
            ExperimentKind::Stability => {
                if self.q_grid.is_empty() {
                    return Err(NnlsError::domain("stability needs a nonempty q_grid"));
                }
                if self.q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
                    return Err(NnlsError::domain("q values must lie in [0, 1]"));
                }
            }
            ExperimentKind::Timing => {
                if self.sizes.is_empty() {
                    return Err(NnlsError::domain("timing needs a nonempty sizes list"));
                }
            }
            ExperimentKind::RateCheck => {
                if !(self.dt > 0.0) || !(self.t_end > self.dt) {
                    return Err(NnlsError::domain("rate_check needs t_end > dt > 0"));
                }
            }
            _ => {}
        }
        if self.s == 0 || self.s > self.n {
            return Err(NnlsError::domain("sparsity must lie in [1, n]"));
        }
        Ok(())
    }

    /// One-line echo: `key=value` pairs, lists joined with `|`.
    pub fn to_line(&self) -> String {
        let join_f = |v: &[f64]| {
            v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join("|")
        };
        let join_u = |v: &[u32]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("|")
        };
        let join_us = |v: &[usize]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("|")
        };
        format!(
            "kind={} m={} n={} s={} alpha={} eta={} alpha_grid={} q_grid={} layers={} \
             trials={} master_seed={} max_iters={} precision={} t_end={} dt={} \
             trace_every={} sizes={} noise={} scale={} normalize={} threads={}",
            self.kind.as_str(),
            self.m,
            self.n,
            self.s,
            fmt_f64(self.alpha),
            fmt_f64(self.eta),
            join_f(&self.alpha_grid),
            join_f(&self.q_grid),
            join_u(&self.layers_list),
            self.trials,
            self.master_seed,
            self.max_iters,
            fmt_f64(self.precision),
            fmt_f64(self.t_end),
            fmt_f64(self.dt),
            self.trace_every,
            join_us(&self.sizes),
            fmt_f64(self.noise),
            fmt_f64(self.scale),
            self.normalize_columns as u8,
            self.threads,
        )
    }

    pub fn from_line(line: &str) -> Result<ExperimentSpec> {
        let mut kind: Option<ExperimentKind> = None;
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| NnlsError::Parse {
                line: 0,
                message: format!("expected key=value, found {tok:?}"),
            })?;
            if k == "kind" {
                kind = Some(ExperimentKind::parse(v).ok_or_else(|| NnlsError::Parse {
                    line: 0,
                    message: format!("unknown experiment kind {v:?}"),
                })?);
            } else {
                pairs.push((k, v));
            }
        }
        let kind = kind.ok_or_else(|| NnlsError::Parse {
            line: 0,
            message: "missing kind=...".into(),
        })?;
        let mut spec = ExperimentSpec::defaults(kind);
        for (k, v) in pairs {
            spec.apply_override(k, v, 0)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn apply_override(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |msg: String| NnlsError::Parse { line, message: msg };
        let parse_f = |v: &str| -> Result<f64> {
            v.parse().map_err(|e| bad(format!("field '{key}': {e}")))
        };
        let parse_u = |v: &str| -> Result<u64> {
            v.parse().map_err(|e| bad(format!("field '{key}': {e}")))
        };
        let parse_flist = |v: &str| -> Result<Vec<f64>> {
            v.split('|')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|e| bad(format!("field '{key}': {e}"))))
                .collect()
        };
        match key {
            "m" => self.m = parse_u(value)? as usize,
            "n" => self.n = parse_u(value)? as usize,
            "s" => self.s = parse_u(value)? as usize,
            "alpha" => self.alpha = parse_f(value)?,
            "eta" => self.eta = parse_f(value)?,
            "alpha_grid" => self.alpha_grid = parse_flist(value)?,
            "q_grid" => self.q_grid = parse_flist(value)?,
            "layers" => {
                self.layers_list = value
                    .split('|')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().map_err(|e| bad(format!("field 'layers': {e}"))))
                    .collect::<Result<Vec<u32>>>()?;
            }
            "trials" => self.trials = parse_u(value)? as usize,
            "master_seed" => self.master_seed = parse_u(value)?,
            "max_iters" => self.max_iters = parse_u(value)?,
            "precision" => self.precision = parse_f(value)?,
            "t_end" => self.t_end = parse_f(value)?,
            "dt" => self.dt = parse_f(value)?,
            "trace_every" => self.trace_every = parse_u(value)?.max(1),
            "sizes" => {
                self.sizes = value
                    .split('|')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().map_err(|e| bad(format!("field 'sizes': {e}"))))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "noise" => self.noise = parse_f(value)?,
            "scale" => self.scale = parse_f(value)?,
            "normalize" => self.normalize_columns = value != "0" && value != "false",
            "threads" => self.threads = parse_u(value)? as usize,
            other => {
                return Err(bad(format!("unknown field '{other}'")));
            }
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for tok in self.to_line().split_whitespace() {
            let (k, v) = tok.split_once('=').expect("to_line emits key=value");
            out.push_str(&format!("{k} {v}\n"));
        }
        out
    }

    pub fn parse_file(text: &str) -> Result<ExperimentSpec> {
        let doc = TextDoc::parse(text, MAGIC)?;
        let (kind_raw, kind_line) = doc.require("kind")?;
        let kind = ExperimentKind::parse(kind_raw.trim()).ok_or_else(|| NnlsError::Parse {
            line: kind_line,
            message: format!("unknown experiment kind {kind_raw:?}"),
        })?;
        let mut spec = ExperimentSpec::defaults(kind);
        for key in doc.keys() {
            if key == "kind" {
                continue;
            }
            let (value, line) = doc.get(key).expect("key comes from the doc");
            spec.apply_override(key, value.trim(), line)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
        Self::parse_file(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip_all_kinds() {
        for kind in ExperimentKind::all() {
            let spec = ExperimentSpec::defaults(kind);
            let line = spec.to_line();
            let back = ExperimentSpec::from_line(&line).unwrap();
            assert_eq!(spec, back, "kind {}", kind.as_str());
        }
    }

    #[test]
    fn file_round_trip_with_overrides() {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::Stability);
        spec.q_grid = vec![0.1, 0.9];
        spec.trials = 4;
        spec.master_seed = 99;
        let text = spec.to_file_string();
        let back = ExperimentSpec::parse_file(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn file_overrides_defaults() {
        let text = "nnls experiment v1\nkind stepsize_race\nm 64\ntrials 2\n";
        let spec = ExperimentSpec::parse_file(text).unwrap();
        assert_eq!(spec.m, 64);
        assert_eq!(spec.n, 256); // default preserved
        assert_eq!(spec.trials, 2);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = "nnls experiment v1\nkind timing\nwat 3\n";
        assert!(matches!(
            ExperimentSpec::parse_file(text),
            Err(NnlsError::Parse { .. })
        ));
    }

    #[test]
    fn validation_catches_empty_grids() {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::Stability);
        spec.q_grid.clear();
        assert!(matches!(spec.validate(), Err(NnlsError::Domain(_))));
    }
}
