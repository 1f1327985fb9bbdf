//! Run configuration: a single strict JSON document.
//!
//! Parsing happens in two passes. The raw document is deserialized with every
//! section optional, then [`resolve`] fills defaults, checks shapes and
//! ranges, and produces a [`RunConfig`] whose serialization is the canonical
//! form that gets hashed and echoed.

use std::path::Path;

use msrds_core::mc_sim::ModelSpec;
use msrds_core::moment::{CoefficientSystem, Coefficients, MomentState, Segment};
use msrds_core::numerics::Tolerances;
use msrds_core::pitchfork::{PitchforkParams, ReducedState};
use msrds_core::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Linear {
        d: usize,
        #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
        a: Option<Rows>,
        #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
        b: Option<Rows>,
        #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
        c: Option<Rows>,
        #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
        d_mat: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<Vec<ScheduleSegment>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound_m: Option<f64>,
    },
    Pitchfork {
        alpha: f64,
        #[serde(default = "one")]
        beta: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSegment {
    pub start: f64,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub finite_time: bool,
    pub horizon: f64,
    pub samples: usize,
    pub cluster_width: f64,
    pub merge_tol: f64,
    pub cone_samples: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            finite_time: false,
            horizon: 50.0,
            samples: 64,
            cluster_width: 0.05,
            merge_tol: 1e-9,
            cone_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentInit {
    pub mean: Vec<f64>,
    pub secmom: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub s: f64,
    pub t: f64,
    pub dt: f64,
    pub n: usize,
    /// Steps between recorded rows; 0 records the endpoints only.
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<MomentInit>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            s: 0.0,
            t: 1.0,
            dt: 1e-3,
            n: 100_000,
            record_every: 100,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointInit {
    pub x: f64,
    pub y: f64,
}

impl From<PointInit> for ReducedState {
    fn from(p: PointInit) -> Self {
        ReducedState { x: p.x, y: p.y }
    }
}

const UNIT_INIT: PointInit = PointInit { x: 1.0, y: 1.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PullbackConfig {
    pub t: f64,
    pub start_times: Vec<f64>,
    pub init: PointInit,
    pub classify_tol: f64,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        Self {
            t: 0.0,
            start_times: vec![-10.0, -20.0, -40.0],
            init: UNIT_INIT,
            classify_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcateConfig {
    pub alphas: Vec<f64>,
    pub init: PointInit,
    pub depth: f64,
    pub classify_tol: f64,
}

impl Default for BifurcateConfig {
    fn default() -> Self {
        Self {
            alphas: vec![-1.5, -1.25, -1.0, -0.875, -0.75, -0.625, -0.5],
            init: UNIT_INIT,
            depth: 40.0,
            classify_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub rel: f64,
    pub abs: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            rel: t.rel_tol,
            abs: t.abs_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "./out".into(),
            formats: vec![Format::Csv],
        }
    }
}

/// Fully resolved configuration; every field is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub pullback: PullbackConfig,
    #[serde(default)]
    pub bifurcate: BifurcateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    resolve(raw)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(name: &str, rows: &Rows, d: usize) -> Result<Matrix, CliError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        let cols = rows.first().map_or(0, Vec::len);
        return Err(bad(format!(
            "dimension mismatch: matrix \"{name}\" is {}x{cols}, expected {d}x{d}",
            rows.len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(format!("matrix \"{name}\" has non-finite entries")));
    }
    Matrix::from_rows(rows).map_err(|e| bad(e.to_string()))
}

fn coefficients(d: usize, mats: [(&str, &Rows); 4]) -> Result<Coefficients, CliError> {
    let [a, b, c, dd] = mats.map(|(name, rows)| matrix(name, rows, d));
    Coefficients::new(a?, b?, c?, dd?).map_err(|e| bad(e.to_string()))
}

fn finite(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("\"{key}\" must be finite")))
    }
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("\"{key}\" must be positive and finite, got {v}")))
    }
}

/// Checks ranges and shapes and fills the defaults that depend on the model.
pub fn resolve(mut cfg: RunConfig) -> Result<RunConfig, CliError> {
    // building the model runs all shape checks
    cfg.model_spec()?;
    let d = cfg.dim();

    let t = &cfg.tolerances;
    if !(t.rel > 0.0 && t.rel < 1.0 && t.abs > 0.0 && t.abs < 1.0) {
        return Err(bad("\"tolerances\" must lie in (0, 1)"));
    }

    let sp = &cfg.spectrum;
    if !(sp.horizon >= 10.0) || !sp.horizon.is_finite() {
        return Err(bad("\"spectrum.horizon\" must be at least 10"));
    }
    if sp.samples < 16 {
        return Err(bad("\"spectrum.samples\" must be at least 16"));
    }
    positive("spectrum.cluster_width", sp.cluster_width)?;
    positive("spectrum.merge_tol", sp.merge_tol)?;
    if sp.cone_samples == 0 {
        return Err(bad("\"spectrum.cone_samples\" must be positive"));
    }

    let sim = &mut cfg.simulate;
    finite("simulate.s", sim.s)?;
    finite("simulate.t", sim.t)?;
    if sim.t < sim.s {
        return Err(bad("\"simulate.t\" must not precede \"simulate.s\""));
    }
    if !(sim.dt > 0.0 && sim.dt <= 1e-2) {
        return Err(bad(format!("\"simulate.dt\" must lie in (0, 0.01], got {}", sim.dt)));
    }
    if sim.n < 100 {
        return Err(bad("\"simulate.n\" must be at least 100"));
    }
    let init = sim.init.get_or_insert_with(|| MomentInit {
        mean: vec![1.0; d],
        secmom: vec![vec![1.0; d]; d],
    });
    if init.mean.len() != d {
        return Err(bad(format!("\"simulate.init.mean\" has length {}, expected {d}", init.mean.len())));
    }
    let s = matrix("simulate.init.secmom", &init.secmom, d)?;
    MomentState::new(init.mean.clone(), s).map_err(|e| bad(format!("\"simulate.init\": {e}")))?;

    let pb = &cfg.pullback;
    finite("pullback.t", pb.t)?;
    if pb.start_times.is_empty() {
        return Err(bad("\"pullback.start_times\" must not be empty"));
    }
    if pb.start_times.windows(2).any(|w| !(w[1] < w[0])) || pb.start_times.iter().any(|&s| !(s <= pb.t)) {
        return Err(bad("\"pullback.start_times\" must be strictly decreasing and at most \"pullback.t\""));
    }
    reduced("pullback.init", pb.init)?;
    positive("pullback.classify_tol", pb.classify_tol)?;

    let bf = &cfg.bifurcate;
    if bf.alphas.is_empty() || bf.alphas.iter().any(|a| !a.is_finite()) {
        return Err(bad("\"bifurcate.alphas\" must be a nonempty list of finite numbers"));
    }
    if !(bf.depth >= 40.0) || !bf.depth.is_finite() {
        return Err(bad("\"bifurcate.depth\" must be at least 40"));
    }
    reduced("bifurcate.init", bf.init)?;
    positive("bifurcate.classify_tol", bf.classify_tol)?;

    let out = &mut cfg.output;
    if out.formats.is_empty() {
        return Err(bad("\"output.formats\" must not be empty"));
    }
    out.formats.sort();
    out.formats.dedup();
    Ok(cfg)
}

fn reduced(key: &str, p: PointInit) -> Result<(), CliError> {
    ReducedState::new(p.x, p.y)
        .map(|_| ())
        .map_err(|e| bad(format!("\"{key}\": {e}")))
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        match &self.model {
            ModelConfig::Linear { d, .. } => *d,
            ModelConfig::Pitchfork { .. } => 1,
        }
    }

    pub fn tol(&self) -> Tolerances {
        Tolerances {
            rel_tol: self.tolerances.rel,
            abs_tol: self.tolerances.abs,
        }
    }

    pub fn pitchfork(&self) -> Option<PitchforkParams> {
        match self.model {
            ModelConfig::Pitchfork { alpha, beta } => PitchforkParams::new(alpha, beta).ok(),
            ModelConfig::Linear { .. } => None,
        }
    }

    /// The coefficient system of a linear model, or the linearisation at zero
    /// (`A = α, B = β, C = 1, D = 0`) of the pitchfork model.
    pub fn linear_system(&self) -> Result<CoefficientSystem, CliError> {
        match &self.model {
            ModelConfig::Pitchfork { alpha, beta } => Ok(CoefficientSystem::autonomous(
                Coefficients::scalar(*alpha, *beta, 1.0, 0.0),
            )),
            ModelConfig::Linear {
                d,
                a,
                b,
                c,
                d_mat,
                schedule,
                bound_m,
            } => {
                let d = *d;
                if d == 0 {
                    return Err(bad("\"model.d\" must be positive"));
                }
                let direct = [a, b, c, d_mat].iter().filter(|m| m.is_some()).count();
                match (direct, schedule) {
                    (4, None) => {
                        let coeffs = coefficients(d, [
                            ("A", a.as_ref().unwrap()),
                            ("B", b.as_ref().unwrap()),
                            ("C", c.as_ref().unwrap()),
                            ("D", d_mat.as_ref().unwrap()),
                        ])?;
                        let seg = Segment {
                            start: f64::NEG_INFINITY,
                            coefficients: coeffs,
                        };
                        CoefficientSystem::piecewise(vec![seg], *bound_m).map_err(|e| bad(e.to_string()))
                    }
                    (0, Some(segs)) => {
                        if segs.is_empty() {
                            return Err(bad("\"model.schedule\" must not be empty"));
                        }
                        let segments = segs
                            .iter()
                            .enumerate()
                            .map(|(k, s)| {
                                let name = |m: &str| format!("schedule[{k}].{m}");
                                let (na, nb, nc, nd) = (name("A"), name("B"), name("C"), name("D"));
                                let start = if k == 0 { f64::NEG_INFINITY } else { s.start };
                                finite(&format!("model.schedule[{k}].start"), s.start)?;
                                Ok(Segment {
                                    start,
                                    coefficients: coefficients(d, [(&na, &s.a), (&nb, &s.b), (&nc, &s.c), (&nd, &s.d)])?,
                                })
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        CoefficientSystem::piecewise(segments, *bound_m).map_err(|e| bad(e.to_string()))
                    }
                    (0, None) => Err(bad("linear model needs either \"A\", \"B\", \"C\", \"D\" or \"schedule\"")),
                    (_, Some(_)) => Err(bad("linear model takes either matrices or \"schedule\", not both")),
                    _ => {
                        let missing: Vec<&str> = [("A", a), ("B", b), ("C", c), ("D", d_mat)]
                            .iter()
                            .filter(|(_, m)| m.is_none())
                            .map(|(n, _)| *n)
                            .collect();
                        Err(bad(format!("linear model is missing matrix \"{}\"", missing.join("\", \""))))
                    }
                }
            }
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        match &self.model {
            ModelConfig::Pitchfork { alpha, beta } => PitchforkParams::new(*alpha, *beta)
                .map(ModelSpec::Pitchfork)
                .map_err(|e| bad(e.to_string())),
            ModelConfig::Linear { .. } => Ok(ModelSpec::Linear(self.linear_system()?)),
        }
    }

    pub fn simulate_init(&self) -> MomentState {
        let init = self.simulate.init.as_ref().expect("resolved config");
        let s = Matrix::from_rows(&init.secmom).expect("resolved config");
        MomentState::new_unchecked(init.mean.clone(), s).expect("resolved config")
    }

    /// Canonical JSON: the resolved config with a fixed key order. The
    /// output section is left out since it cannot change any result.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output");
        value.to_string()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pitchfork_with_defaults() {
        let cfg = parse_config(r#"{"model":{"kind":"pitchfork","alpha":-0.75,"beta":1}}"#).unwrap();
        assert_eq!(cfg.dim(), 1);
        assert_eq!(cfg.simulate.init.as_ref().unwrap().mean, vec![1.0]);
        assert_eq!(cfg.output.formats, vec![Format::Csv]);
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn mismatched_matrix_is_named() {
        let text = r#"{"model":{"kind":"linear","d":2,
            "A":[[0,0],[0,0]],"B":[[0,0,0],[0,0,0]],"C":[[0,0],[0,0]],"D":[[0,0],[0,0]]}}"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("\"B\"") && err.contains("2x3"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0},"gamma":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("gamma"), "{err}");
        let err = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0,"A":[[1]]}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("A"), "{err}");
        let err = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0},"simulate":{"steps":3}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("steps"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_config("{\n  \"model\": {\"kind\": \"pitchfork\",\n  \"alpha\": }\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn range_checks() {
        let base = r#"{"model":{"kind":"pitchfork","alpha":0},"#;
        for tail in [
            r#""simulate":{"dt":0.1}}"#,
            r#""simulate":{"n":10}}"#,
            r#""bifurcate":{"depth":10}}"#,
            r#""pullback":{"start_times":[-1,-1]}}"#,
            r#""simulate":{"init":{"mean":[2],"secmom":[[1]]}}}"#,
        ] {
            assert!(parse_config(&format!("{base}{tail}")).is_err(), "{tail}");
        }
    }

    #[test]
    fn schedule_and_matrices_are_exclusive() {
        let seg = r#"{"start":0,"A":[[0]],"B":[[0]],"C":[[0]],"D":[[0]]}"#;
        let both = format!(
            r#"{{"model":{{"kind":"linear","d":1,"A":[[0]],"B":[[0]],"C":[[0]],"D":[[0]],"schedule":[{seg}]}}}}"#
        );
        assert!(parse_config(&both).is_err());
        let later = seg.replace("\"start\":0", "\"start\":1");
        let sched = format!(r#"{{"model":{{"kind":"linear","d":1,"schedule":[{seg},{later}],"bound_m":1}}}}"#);
        let cfg = parse_config(&sched).unwrap();
        assert_eq!(cfg.linear_system().unwrap().segments().len(), 2);
        let missing = r#"{"model":{"kind":"linear","d":1,"A":[[0]],"C":[[0]],"D":[[0]]}}"#;
        assert!(parse_config(missing).unwrap_err().to_string().contains("\"B\""));
    }

    #[test]
    fn hash_tracks_changes() {
        let a = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0}}"#).unwrap();
        let b = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0.5}}"#).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = parse_config(r#"{"model":{"kind":"pitchfork","alpha":0},"output":{"directory":"x"}}"#).unwrap();
        assert_eq!(moved.hash(), a.hash());
    }
}
