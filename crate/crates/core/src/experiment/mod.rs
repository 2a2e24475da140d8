//! Configuration-driven experiment runner with a result cache.
//!
//! A config is a TOML file with a top-level `kind` and nested sections:
//!
//! ```toml
//! kind = "mc-sweep"        # curve-export | mc-sweep | slope | solver-verify
//!                          # | lemma4 | conditional | tightness
//! seed = 1
//! trials = 1000000
//! format = "csv"           # or "json"
//! output = "out/sweep.csv"
//! snr_db = [10, 15, 20]
//! r = 0.3                  # multiplexing gain; `bits = 1.0` fixes the rate
//!
//! [network]
//! topology = "on-off"
//! protocol = "orth-df"
//! rule = "fixed:0"
//! ```
//!
//! `curve-export` takes `[curve] keys = [...]` and `step`, `solver-verify`
//! takes `[solver]` and `r_grid`, `lemma4` takes `[lemma4]` and
//! `conditional` takes `[conditional]`. Unknown keys are rejected.
//!
//! Results are cached under `<cache>/<hash>.json`, where the hash is the
//! SHA-256 of the canonical config with `output` and `format` removed.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compose::{
    estimate_conditional_slope, tightness_check, ConditionalOutageSpec, ConditionalSlope, TightnessReport,
};
use crate::dmt::{dmt_curve, CurveKey};
use crate::exponent::{default_checks, verify_catalog, SolverSettings, VerifyReport};
use crate::network::{ProtocolKind, RatePolicy, SelectionRule, TopologyKind};
use crate::outage::{
    fit_diversity, lemma4_limit_check, sweep, Experiment, Lemma4Case, Lemma4Params, Lemma4Point, OutageCurve,
    SlopeFit, MIN_TRIALS,
};
use crate::{Error, Result};

pub use output::{csv_header, format_float, to_csv, to_json};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_CURVE_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CurveExport,
    McSweep,
    Slope,
    SolverVerify,
    Lemma4,
    Conditional,
    Tightness,
}

impl ExperimentKind {
    pub fn is_monte_carlo(self) -> bool {
        !matches!(self, ExperimentKind::CurveExport | ExperimentKind::SolverVerify)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::UnknownKey(format!("format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub topology: TopologyKind,
    pub protocol: ProtocolKind,
    pub rule: SelectionRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub keys: Vec<CurveKey>,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    DEFAULT_CURVE_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Check labels; empty runs every default check.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_refine")]
    pub refine_passes: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_grid_step() -> f64 {
    SolverSettings::default().grid_step
}
fn default_refine() -> u32 {
    SolverSettings::default().refine_passes
}
fn default_tol() -> f64 {
    0.03
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            checks: Vec::new(),
            grid_step: default_grid_step(),
            refine_passes: default_refine(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma4Section {
    pub case: Lemma4Case,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit")]
    pub lambda_u: f64,
    #[serde(default = "unit")]
    pub lambda_v: f64,
    #[serde(default = "unit")]
    pub lambda_w: f64,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalSection {
    pub target: usize,
    pub given: Vec<usize>,
    /// Cap on draws per point; defaults to 100 times `trials`.
    pub max_trials: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub trials: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    pub snr_db: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub bits: Option<f64>,
    pub r_grid: Option<Vec<f64>>,
    pub network: Option<NetworkSection>,
    pub curve: Option<CurveSection>,
    pub solver: Option<SolverSection>,
    pub lemma4: Option<Lemma4Section>,
    pub conditional: Option<ConditionalSection>,
}

fn missing(what: &str, kind: ExperimentKind) -> Error {
    Error::Config(format!("{kind:?} experiments need `{what}`"))
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            trials: None,
            output: None,
            format: OutputFormat::Csv,
            snr_db: None,
            r: None,
            bits: None,
            r_grid: None,
            network: None,
            curve: None,
            solver: None,
            lemma4: None,
            conditional: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let net = self.network.as_ref().ok_or_else(|| missing("[network]", self.kind))?;
        Ok(Experiment::new(net.topology, net.protocol, net.rule))
    }

    /// Rate used by Monte Carlo kinds. A multiplexing gain of 0 means the
    /// fixed rate of 1 bit/s/Hz, whose slope is the zero-rate diversity.
    pub fn rate_policy(&self) -> Result<RatePolicy> {
        match (self.r, self.bits) {
            (Some(_), Some(_)) => Err(Error::Config("give either `r` or `bits`, not both".into())),
            (None, Some(bits)) => Ok(RatePolicy::FixedRate { bits }),
            (Some(r), None) if r == 0.0 => Ok(RatePolicy::FixedRate { bits: 1.0 }),
            (Some(r), None) => Ok(RatePolicy::Multiplexing { r }),
            (None, None) => Err(missing("r", self.kind)),
        }
    }

    fn require_r(&self) -> Result<f64> {
        self.r.ok_or_else(|| missing("r", self.kind))
    }

    fn snr_grid(&self) -> Result<&[f64]> {
        self.snr_db.as_deref().ok_or_else(|| missing("snr_db", self.kind))
    }

    pub fn trials(&self) -> Result<u64> {
        let t = self.trials.ok_or_else(|| missing("trials", self.kind))?;
        if t < MIN_TRIALS {
            return Err(Error::Config(format!("need at least {MIN_TRIALS} trials, got {t}")));
        }
        Ok(t)
    }

    fn solver_section(&self) -> SolverSection {
        self.solver.clone().unwrap_or_default()
    }

    pub fn solver_r_grid(&self) -> Vec<f64> {
        self.r_grid
            .clone()
            .unwrap_or_else(|| (0..10).map(|k| 0.05 + 0.1 * k as f64).collect())
    }

    /// Checks that every referenced key exists and that the sections the
    /// kind needs are present and consistent.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.kind.is_monte_carlo() {
            self.trials()?;
            crate::outage::check_grid(self.snr_grid()?)?;
        }
        match self.kind {
            CurveExport => {
                let curve = self.curve.as_ref().ok_or_else(|| missing("[curve]", self.kind))?;
                if curve.keys.is_empty() {
                    return Err(Error::Config("curve export needs at least one key".into()));
                }
                if !(curve.step > 0.0 && curve.step <= 0.5) {
                    return Err(Error::Config(format!("curve step must lie in (0, 0.5], got {}", curve.step)));
                }
                for &key in &curve.keys {
                    dmt_curve(key)?;
                }
            }
            McSweep | Slope => {
                let exp = self.experiment()?;
                exp.prepare()?;
                self.rate_policy()?.validate(exp.topology)?;
            }
            Tightness => {
                let exp = self.experiment()?;
                exp.prepare()?;
                RatePolicy::Multiplexing { r: self.require_r()? }.validate(exp.topology)?;
            }
            Conditional => {
                let c = self.conditional.as_ref().ok_or_else(|| missing("[conditional]", self.kind))?;
                let exp = self.experiment()?;
                RatePolicy::Multiplexing { r: self.require_r()? }.validate(exp.topology)?;
                ConditionalOutageSpec::new(exp, c.target, c.given.clone())?;
                let trials = self.trials()?;
                if c.max_trials.is_some_and(|m| m < trials) {
                    return Err(Error::Config("`max_trials` must be at least `trials`".into()));
                }
            }
            SolverVerify => {
                let s = self.solver_section();
                let known = default_checks();
                for label in &s.checks {
                    if !known.iter().any(|c| &c.label == label) {
                        return Err(Error::UnknownKey(format!("solver check `{label}`")));
                    }
                }
                if !(s.grid_step > 0.0 && s.grid_step <= 0.02) {
                    return Err(Error::Config(format!("grid step must lie in (0, 0.02], got {}", s.grid_step)));
                }
                if !(s.tol >= 0.0) {
                    return Err(Error::Config("tolerance must be nonnegative".into()));
                }
                let grid = self.solver_r_grid();
                if grid.is_empty() || grid.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return Err(Error::Config("r_grid must be nonempty and nonnegative".into()));
                }
            }
            Lemma4 => {
                self.lemma4.as_ref().ok_or_else(|| missing("[lemma4]", self.kind))?;
                let p = self.lemma4_params()?;
                if p.n == 0 || !(p.r > 0.0 && p.r < 0.5) {
                    return Err(Error::Config("lemma4 needs n >= 1 and 0 < r < 1/2".into()));
                }
            }
        }
        Ok(())
    }

    fn lemma4_params(&self) -> Result<Lemma4Params> {
        let l = self.lemma4.as_ref().ok_or_else(|| missing("[lemma4]", self.kind))?;
        Ok(Lemma4Params {
            n: l.n,
            r: self.r.unwrap_or(Lemma4Params::default().r),
            lambda_u: l.lambda_u,
            lambda_v: l.lambda_v,
            lambda_w: l.lambda_w,
        })
    }

    /// SHA-256 of the canonical config, without the output path and format.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = None;
        canonical.format = OutputFormat::Csv;
        let body = serde_json::to_string(&(SCHEMA_VERSION, &canonical)).expect("config serializes");
        hex(&Sha256::digest(body.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSamples {
    pub key: CurveKey,
    pub breakpoints: Vec<String>,
    /// `(r, d)` on `0, step, ...` up to the curve's maximum gain.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    CurveExport { curves: Vec<CurveSamples> },
    McSweep { curve: OutageCurve },
    Slope { curve: OutageCurve, fit: SlopeFit },
    SolverVerify { report: VerifyReport },
    Lemma4 { case: Lemma4Case, params: Lemma4Params, points: Vec<Lemma4Point> },
    Conditional { result: ConditionalSlope },
    Tightness { report: TightnessReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// SHA-256 of the payload's JSON, checked when read from the cache.
    pub payload_sha256: String,
    pub payload: Payload,
}

impl ResultRecord {
    /// A solver verification whose largest difference exceeds its tolerance.
    pub fn tolerance_failed(&self) -> bool {
        matches!(&self.payload, Payload::SolverVerify { report } if !report.pass)
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Csv => to_csv(&self.payload),
            OutputFormat::Json => to_json(self),
        }
    }
}

fn payload_digest(payload: &Payload) -> Result<String> {
    let body = serde_json::to_vec(payload).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(hex(&Sha256::digest(&body)))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Cache directory; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Ignore any cached result.
    pub force: bool,
}

impl RunOptions {
    pub fn cached(dir: impl Into<PathBuf>) -> Self {
        RunOptions { cache_dir: Some(dir.into()), force: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: ResultRecord,
    pub cache_hit: bool,
    /// File written, if the config named one.
    pub output: Option<PathBuf>,
}

/// Computes the payload of a validated config.
pub fn compute(cfg: &ExperimentConfig) -> Result<Payload> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ExperimentKind::CurveExport => {
            let section = cfg.curve.as_ref().expect("validated");
            let curves = section
                .keys
                .iter()
                .map(|&key| {
                    let curve = dmt_curve(key)?;
                    Ok(CurveSamples {
                        key,
                        breakpoints: curve.breakpoints().iter().map(|b| b.to_string()).collect(),
                        samples: curve.sample(section.step),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Payload::CurveExport { curves }
        }
        ExperimentKind::McSweep => Payload::McSweep {
            curve: sweep(&cfg.experiment()?, cfg.snr_grid()?, cfg.rate_policy()?, cfg.trials()?, cfg.seed)?,
        },
        ExperimentKind::Slope => {
            let curve = sweep(&cfg.experiment()?, cfg.snr_grid()?, cfg.rate_policy()?, cfg.trials()?, cfg.seed)?;
            let fit = fit_diversity(&curve)?;
            Payload::Slope { curve, fit }
        }
        ExperimentKind::SolverVerify => {
            let s = cfg.solver_section();
            let checks: Vec<_> = default_checks()
                .into_iter()
                .filter(|c| s.checks.is_empty() || s.checks.contains(&c.label))
                .collect();
            let settings = SolverSettings { grid_step: s.grid_step, refine_passes: s.refine_passes };
            Payload::SolverVerify { report: verify_catalog(&checks, &cfg.solver_r_grid(), s.tol, settings)? }
        }
        ExperimentKind::Lemma4 => {
            let case = cfg.lemma4.as_ref().expect("validated").case;
            let params = cfg.lemma4_params()?;
            let rho: Vec<f64> = cfg.snr_grid()?.iter().map(|db| 10f64.powf(db / 10.0)).collect();
            let points = lemma4_limit_check(case, &rho, params, cfg.trials()?, cfg.seed)?;
            Payload::Lemma4 { case, params, points }
        }
        ExperimentKind::Conditional => {
            let c = cfg.conditional.as_ref().expect("validated");
            let spec = ConditionalOutageSpec::new(cfg.experiment()?, c.target, c.given.clone())?;
            let trials = cfg.trials()?;
            let max_trials = c.max_trials.unwrap_or(trials.saturating_mul(100));
            Payload::Conditional {
                result: estimate_conditional_slope(
                    &spec,
                    cfg.snr_grid()?,
                    cfg.require_r()?,
                    trials,
                    max_trials,
                    cfg.seed,
                )?,
            }
        }
        ExperimentKind::Tightness => Payload::Tightness {
            report: tightness_check(&cfg.experiment()?, cfg.snr_grid()?, cfg.require_r()?, cfg.trials()?, cfg.seed)?,
        },
    })
}

fn read_cache(path: &Path, hash: &str) -> Option<ResultRecord> {
    let bytes = fs::read(path).ok()?;
    let record: ResultRecord = serde_json::from_slice(&bytes).ok()?;
    let intact = record.config_hash == hash
        && record.schema_version == SCHEMA_VERSION
        && payload_digest(&record.payload).ok()? == record.payload_sha256;
    intact.then_some(record)
}

/// Runs a config: reuses a cached record when one is intact, otherwise
/// computes and caches it, then writes the configured output file.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let cache_path = opts.cache_dir.as_ref().map(|d| d.join(format!("{hash}.json")));

    let cached = match (&cache_path, opts.force) {
        (Some(p), false) => read_cache(p, &hash),
        _ => None,
    };
    let cache_hit = cached.is_some();
    let record = match cached {
        Some(r) => r,
        None => {
            let started = now_ms();
            let payload = compute(cfg)?;
            let record = ResultRecord {
                schema_version: SCHEMA_VERSION,
                tool_version: TOOL_VERSION.into(),
                config_hash: hash,
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
                payload_sha256: payload_digest(&payload)?,
                payload,
            };
            if let Some(p) = &cache_path {
                let dir = p.parent().expect("cache file has a parent");
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let body = serde_json::to_vec_pretty(&record).map_err(|e| Error::Serde(e.to_string()))?;
                fs::write(p, body).map_err(|e| Error::io(p, e))?;
            }
            record
        }
    };

    if let Some(out) = &cfg.output {
        write_output(out, &record.render(cfg.format)?)?;
    }
    Ok(RunOutcome { record, cache_hit, output: cfg.output.clone() })
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Figure names and the curves each one plots.
pub fn figure_curves() -> Vec<(&'static str, Vec<CurveKey>)> {
    let keys = |list: &[&str]| list.iter().map(|k| k.parse().expect("static key")).collect::<Vec<CurveKey>>();
    let mut marc = Vec::new();
    for n in [1, 2, 4] {
        for v in ["genie", "orth-df", "orth-off-modes", "naf", "ddf", "cf"] {
            marc.push(format!("marc:{n}/{v}"));
        }
    }
    let marc: Vec<&str> = marc.iter().map(String::as_str).collect();
    vec![
        ("DMTIRC", keys(&["irc:4/genie", "irc:4/orth-af", "irc:4/naf", "irc:4/ddf", "irc:4/ddf-direct-link", "irc:4/cf"])),
        ("DMTSRC", keys(&["src:2/genie", "src:2/naf", "src:2/ddf", "src:2/cf", "src:2/orth-af"])),
        ("DMT", keys(&marc)),
        ("XRCDMT", keys(&["x-relay/orth-af", "x-relay/naf", "x-relay/ddf", "x-relay/cf", "x-relay/genie"])),
    ]
}

/// Writes one curve-export file per figure into `out_dir`, named after the
/// figure, sampled every 0.01 in `r`.
pub fn reproduce_figures(out_dir: &Path, format: OutputFormat, opts: &RunOptions) -> Result<Vec<ResultRecord>> {
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    figure_curves()
        .into_iter()
        .map(|(name, keys)| {
            let mut cfg = ExperimentConfig::new(ExperimentKind::CurveExport);
            cfg.curve = Some(CurveSection { keys, step: DEFAULT_CURVE_STEP });
            cfg.format = format;
            cfg.output = Some(out_dir.join(format!("{name}.{ext}")));
            Ok(run(&cfg, opts)?.record)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
kind = "mc-sweep"
seed = 3
trials = 20000
snr_db = [1.5, 5, 10.5]
r = 0

[network]
topology = "on-off"
protocol = "orth-df"
rule = "fixed:0"
"#;

    #[test]
    fn parses_and_hashes_stably() {
        let a = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere.csv".into());
        b.format = OutputFormat::Json;
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.rate_policy().unwrap(), RatePolicy::FixedRate { bits: 1.0 });
    }

    #[test]
    fn rejects_unknown_fields_and_keys() {
        let extra = format!("{SWEEP}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&extra), Err(Error::Config(_))));
        let nested = SWEEP.replace("rule = \"fixed:0\"", "rule = \"fixed:0\"\ncolour = \"red\"");
        assert!(ExperimentConfig::from_toml_str(&nested).is_err());
        let topo = SWEEP.replace("on-off", "ring:3");
        assert!(ExperimentConfig::from_toml_str(&topo).is_err());
        let curve = "kind = \"curve-export\"\n[curve]\nkeys = [\"src:3/ddf\"]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(curve), Err(Error::UnknownKey(_))));
    }

    #[test]
    fn monte_carlo_kinds_need_enough_trials() {
        let few = SWEEP.replace("trials = 20000", "trials = 999");
        assert!(ExperimentConfig::from_toml_str(&few).is_err());
        let none = SWEEP.replace("trials = 20000", "");
        assert!(ExperimentConfig::from_toml_str(&none).is_err());
    }

    #[test]
    fn sweep_matches_direct_link_closed_form() {
        let cfg = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        let Payload::McSweep { curve } = compute(&cfg).unwrap() else { panic!() };
        for p in &curve.points {
            let exact = 1.0 - (-1.0 / p.rho).exp();
            let sigma = (exact * (1.0 - exact) / p.trials as f64).sqrt();
            assert!((p.p_hat - exact).abs() <= 4.0 * sigma, "{p:?}");
        }
    }

    #[test]
    fn payload_survives_the_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        let opts = RunOptions::cached(dir.path());
        let first = run(&cfg, &opts).unwrap();
        assert!(!first.cache_hit);
        let second = run(&cfg, &opts).unwrap();
        assert!(second.cache_hit);
        assert_eq!(first.record, second.record);
        let forced = run(&cfg, &RunOptions { force: true, ..opts.clone() }).unwrap();
        assert!(!forced.cache_hit);
        assert_eq!(forced.record.payload, first.record.payload);
    }

    #[test]
    fn corrupt_cache_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        let opts = RunOptions::cached(dir.path());
        let first = run(&cfg, &opts).unwrap();
        let path = dir.path().join(format!("{}.json", cfg.hash()));
        let text = fs::read_to_string(&path).unwrap();
        let p = first.record.payload_sha256.clone();
        fs::write(&path, text.replacen("\"events\": ", "\"events\": 1", 1)).unwrap();
        let again = run(&cfg, &opts).unwrap();
        assert!(!again.cache_hit);
        assert_eq!(again.record.payload_sha256, p);
        fs::write(&path, "not json").unwrap();
        assert!(!run(&cfg, &opts).unwrap().cache_hit);
    }

    #[test]
    fn curve_export_csv_layout() {
        let cfg = ExperimentConfig::from_toml_str("kind = \"curve-export\"\n[curve]\nkeys = [\"marc:2/cf\"]\nstep = 0.25\n")
            .unwrap();
        let record = run(&cfg, &RunOptions::default()).unwrap().record;
        let csv = String::from_utf8(record.render(OutputFormat::Csv).unwrap()).unwrap();
        assert_eq!(csv, "curve,r,d\nmarc:2/cf,0,3\nmarc:2/cf,0.25,2.25\nmarc:2/cf,0.5,1.5\nmarc:2/cf,0.75,0.75\nmarc:2/cf,1,0\n");
        let json: serde_json::Value = serde_json::from_slice(&record.render(OutputFormat::Json).unwrap()).unwrap();
        assert_eq!(json["schema_version"], SCHEMA_VERSION);
        assert_eq!(json["payload"]["kind"], "curve-export");
    }

    #[test]
    fn every_figure_curve_exists() {
        for (name, keys) in figure_curves() {
            for key in keys {
                dmt_curve(key).unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
    }
}
