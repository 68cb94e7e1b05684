//! Experiment description files.
//!
//! A spec is a list of `key = value` lines; `#` starts a comment and blank
//! lines are ignored. Every key has a default reproducing the 3200 km
//! reference setup, so an empty file is a valid spec. Any key can also be set
//! from the environment as `ESSFM_<KEY>` (upper case), which takes precedence
//! over the file.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use essfm_core::dbp::Algorithm;
use essfm_core::modem::{ButterflyConfig, Pulse, TxConfig};
use essfm_core::sigkit::db_per_km_to_alpha;
use essfm_core::spectral::OverlapPlan;
use essfm_core::train::TrainConfig;
use essfm_core::{AmpGain, FiberParams, LinkConfig};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "ESSFM_";

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Env(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Env(name) => write!(f, "environment variable {name}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("{origin}: unknown key '{key}'")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: bad value for '{key}': {msg}")]
    BadValue {
        origin: Origin,
        key: String,
        msg: String,
    },
    #[error("{origin}: {msg}")]
    Syntax { origin: Origin, msg: String },
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    CostFig1,
    CostFig2,
    BerSweep,
    TrainCoeffs,
    InsetTable,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CostFig1 => "cost-fig1",
            Scenario::CostFig2 => "cost-fig2",
            Scenario::BerSweep => "ber-sweep",
            Scenario::TrainCoeffs => "train-coeffs",
            Scenario::InsetTable => "inset-table",
        }
    }

    pub fn is_cost(&self) -> bool {
        matches!(
            self,
            Scenario::CostFig1 | Scenario::CostFig2 | Scenario::InsetTable
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Scenario::CostFig1,
            Scenario::CostFig2,
            Scenario::BerSweep,
            Scenario::TrainCoeffs,
            Scenario::InsetTable,
        ]
        .into_iter()
        .find(|sc| sc.name() == s)
        .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

/// One compensation variant: `ffe`, `ssfm:<Ns>` or `essfm:<Ns>[:<Nc>]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub algorithm: Algorithm,
    pub num_steps: usize,
    pub nc: usize,
}

impl VariantSpec {
    pub fn ffe() -> Self {
        Self {
            algorithm: Algorithm::Ffe,
            num_steps: 1,
            nc: 0,
        }
    }

    pub fn ssfm(num_steps: usize) -> Self {
        Self {
            algorithm: Algorithm::Ssfm,
            num_steps,
            nc: 0,
        }
    }

    pub fn essfm(num_steps: usize, nc: usize) -> Self {
        Self {
            algorithm: Algorithm::Essfm,
            num_steps,
            nc,
        }
    }

    /// Short label such as `SSFM-20` or `ESSFM-1`.
    pub fn label(&self) -> String {
        match self.algorithm {
            Algorithm::Ffe => "FFE".to_string(),
            a => format!("{}-{}", a.name(), self.num_steps),
        }
    }

    /// Parses one list entry; a missing `Nc` is reported as `None`.
    fn parse(s: &str) -> Result<(Algorithm, usize, Option<usize>), String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let algorithm: Algorithm = parts[0].parse().map_err(|e: essfm_core::Error| e.to_string())?;
        let num = |i: usize| -> Result<usize, String> {
            parts[i]
                .parse::<usize>()
                .map_err(|_| format!("'{}' in variant '{s}' is not a count", parts[i]))
        };
        match (algorithm, parts.len()) {
            (Algorithm::Ffe, 1) => Ok((algorithm, 1, Some(0))),
            (Algorithm::Ssfm, 2) => Ok((algorithm, num(1)?, Some(0))),
            (Algorithm::Essfm, 2) => Ok((algorithm, num(1)?, None)),
            (Algorithm::Essfm, 3) => Ok((algorithm, num(1)?, Some(num(2)?))),
            _ => Err(format!(
                "malformed variant '{s}' (expected ffe, ssfm:Ns or essfm:Ns[:Nc])"
            )),
        }
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.algorithm {
            Algorithm::Ffe => f.write_str("ffe"),
            Algorithm::Ssfm => write!(f, "ssfm:{}", self.num_steps),
            Algorithm::Essfm => write!(f, "essfm:{}:{}", self.num_steps, self.nc),
        }
    }
}

/// Link parameters in the units used by the file format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub num_spans: usize,
    pub span_length_km: f64,
    /// ps²/km
    pub beta2: f64,
    /// 1/(W·km)
    pub gamma: f64,
    pub alpha_db_per_km: f64,
    pub amp_gain: AmpGain,
    pub noise_figure_db: Option<f64>,
    pub pol_rotation: bool,
    pub center_wavelength_nm: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        let link = LinkConfig::default();
        Self {
            num_spans: link.num_spans,
            span_length_km: link.span.length,
            beta2: link.span.beta2,
            gamma: link.span.gamma,
            alpha_db_per_km: 0.2,
            amp_gain: link.amp_gain,
            noise_figure_db: link.amp_noise_figure_db,
            pol_rotation: link.pol_rotation,
            center_wavelength_nm: link.center_wavelength,
        }
    }
}

impl LinkSpec {
    pub fn to_link(&self) -> LinkConfig {
        LinkConfig {
            span: FiberParams {
                beta2: self.beta2,
                gamma: self.gamma,
                alpha: db_per_km_to_alpha(self.alpha_db_per_km),
                length: self.span_length_km,
            },
            num_spans: self.num_spans,
            amp_gain: self.amp_gain,
            amp_noise_figure_db: self.noise_figure_db,
            pol_rotation: self.pol_rotation,
            center_wavelength: self.center_wavelength_nm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub link: LinkSpec,
    /// Skip the fiber entirely; every variant then sees the launched waveform.
    pub back_to_back: bool,
    pub forward_steps_per_span: usize,
    /// Transmitter laser linewidth, Hz.
    pub laser_linewidth: f64,
    /// Transmitter/local-oscillator frequency mismatch, Hz.
    pub frequency_offset: f64,
    /// Optional ADC emulation rate, Sa/s.
    pub adc_rate: Option<f64>,
    pub tx: TxConfig,
    pub variants: Vec<VariantSpec>,
    pub fft_size: usize,
    pub overlap: usize,
    /// ESSFM coefficients to use instead of training.
    pub coeffs_file: Option<PathBuf>,
    /// `n_coeffs` doubles as the default `Nc` for variants and cost tables.
    pub train: TrainConfig,
    pub equalizer: ButterflyConfig,
    pub launch_powers_dbm: Vec<f64>,
    pub num_blocks: usize,
    pub seeds: Vec<u64>,
    /// Leading symbols excluded from BER counting.
    pub skip_symbols: usize,
    pub cost_ratios: Vec<usize>,
    pub cost_lengths_km: Vec<f64>,
    /// Hz
    pub cost_bandwidth: f64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            scenario: Scenario::BerSweep,
            link: LinkSpec::default(),
            back_to_back: false,
            forward_steps_per_span: 20,
            laser_linewidth: 100e3,
            frequency_offset: 0.0,
            adc_rate: None,
            tx: TxConfig::default(),
            variants: vec![
                VariantSpec::ffe(),
                VariantSpec::ssfm(1),
                VariantSpec::ssfm(16),
                VariantSpec::ssfm(20),
                VariantSpec::essfm(1, train.n_coeffs),
            ],
            fft_size: 8192,
            overlap: 1024,
            coeffs_file: None,
            train,
            equalizer: ButterflyConfig::default(),
            launch_powers_dbm: vec![-2.0, -1.0, 0.0, 1.0],
            num_blocks: 5,
            seeds: (1..=5).collect(),
            skip_symbols: 8192,
            cost_ratios: vec![2, 4, 8, 16, 32],
            cost_lengths_km: (1..=20).map(|k| 250.0 * k as f64).collect(),
            cost_bandwidth: 50e9,
            output_path: None,
        }
    }
}

type Setter = fn(&mut Builder, &str) -> Result<(), String>;

/// Spec under construction: values whose meaning depends on other keys are
/// resolved in [`Builder::finish`].
struct Builder {
    spec: ExperimentSpec,
    variants: Option<Vec<(Algorithm, usize, Option<usize>)>>,
    seeds: Option<Vec<u64>>,
    num_blocks: Option<usize>,
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("'{v}' is not finite"))
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("'{v}' is not a non-negative integer"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

fn is_off(v: &str) -> bool {
    matches!(v.to_ascii_lowercase().as_str(), "off" | "none")
}

fn parse_list<T>(v: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

fn parse_pulse(v: &str) -> Result<Pulse, String> {
    let lower = v.to_ascii_lowercase();
    if lower == "nrz" {
        return Ok(Pulse::Nrz);
    }
    match lower.split_once(':') {
        Some(("rc", r)) => Ok(Pulse::RaisedCosine(parse_f64(r.trim())?)),
        _ => Err(format!("'{v}' is not a pulse (nrz or rc:<rolloff>)")),
    }
}

fn fmt_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "off".to_string(), |x| x.to_string())
}

/// Every key with its setter and its serializer, in file order.
#[rustfmt::skip]
const KEYS: &[(&str, Setter, fn(&ExperimentSpec) -> String)] = &[
    ("scenario", |b, v| { b.spec.scenario = v.parse()?; Ok(()) }, |s| s.scenario.to_string()),
    ("output_path", |b, v| { b.spec.output_path = (!v.is_empty()).then(|| PathBuf::from(v)); Ok(()) },
        |s| s.output_path.as_ref().map_or(String::new(), |p| p.display().to_string())),
    ("num_spans", |b, v| { b.spec.link.num_spans = parse_usize(v)?; Ok(()) }, |s| s.link.num_spans.to_string()),
    ("span_length_km", |b, v| { b.spec.link.span_length_km = parse_f64(v)?; Ok(()) }, |s| s.link.span_length_km.to_string()),
    ("beta2_ps2_per_km", |b, v| { b.spec.link.beta2 = parse_f64(v)?; Ok(()) }, |s| s.link.beta2.to_string()),
    ("gamma_per_w_km", |b, v| { b.spec.link.gamma = parse_f64(v)?; Ok(()) }, |s| s.link.gamma.to_string()),
    ("alpha_db_per_km", |b, v| { b.spec.link.alpha_db_per_km = parse_f64(v)?; Ok(()) }, |s| s.link.alpha_db_per_km.to_string()),
    ("amp_gain_db", |b, v| {
        b.spec.link.amp_gain = if v.eq_ignore_ascii_case("transparent") { AmpGain::Transparent } else { AmpGain::Db(parse_f64(v)?) };
        Ok(())
    }, |s| match s.link.amp_gain { AmpGain::Transparent => "transparent".to_string(), AmpGain::Db(g) => g.to_string() }),
    ("noise_figure_db", |b, v| { b.spec.link.noise_figure_db = if is_off(v) { None } else { Some(parse_f64(v)?) }; Ok(()) },
        |s| fmt_opt(s.link.noise_figure_db)),
    ("pol_rotation", |b, v| { b.spec.link.pol_rotation = parse_bool(v)?; Ok(()) }, |s| s.link.pol_rotation.to_string()),
    ("center_wavelength_nm", |b, v| { b.spec.link.center_wavelength_nm = parse_f64(v)?; Ok(()) },
        |s| s.link.center_wavelength_nm.to_string()),
    ("back_to_back", |b, v| { b.spec.back_to_back = parse_bool(v)?; Ok(()) }, |s| s.back_to_back.to_string()),
    ("forward_steps_per_span", |b, v| { b.spec.forward_steps_per_span = parse_usize(v)?; Ok(()) },
        |s| s.forward_steps_per_span.to_string()),
    ("laser_linewidth_hz", |b, v| { b.spec.laser_linewidth = parse_f64(v)?; Ok(()) }, |s| s.laser_linewidth.to_string()),
    ("frequency_offset_hz", |b, v| { b.spec.frequency_offset = parse_f64(v)?; Ok(()) }, |s| s.frequency_offset.to_string()),
    ("adc_rate_hz", |b, v| { b.spec.adc_rate = if is_off(v) { None } else { Some(parse_f64(v)?) }; Ok(()) },
        |s| fmt_opt(s.adc_rate)),
    ("symbol_rate", |b, v| { b.spec.tx.symbol_rate = parse_f64(v)?; Ok(()) }, |s| s.tx.symbol_rate.to_string()),
    ("prbs_order", |b, v| { b.spec.tx.prbs_order = v.parse().map_err(|_| format!("'{v}' is not an order"))?; Ok(()) },
        |s| s.tx.prbs_order.to_string()),
    ("samples_per_symbol", |b, v| { b.spec.tx.samples_per_symbol = parse_usize(v)?; Ok(()) },
        |s| s.tx.samples_per_symbol.to_string()),
    ("pulse", |b, v| { b.spec.tx.pulse = parse_pulse(v)?; Ok(()) }, |s| match s.tx.pulse {
        Pulse::Nrz => "nrz".to_string(),
        Pulse::RaisedCosine(r) => format!("rc:{r}"),
    }),
    ("num_symbols", |b, v| { b.spec.tx.num_symbols = parse_usize(v)?; Ok(()) }, |s| s.tx.num_symbols.to_string()),
    ("variants", |b, v| { b.variants = Some(parse_list(v, VariantSpec::parse)?); Ok(()) }, |s| fmt_list(&s.variants)),
    ("fft_size", |b, v| { b.spec.fft_size = parse_usize(v)?; Ok(()) }, |s| s.fft_size.to_string()),
    ("overlap", |b, v| { b.spec.overlap = parse_usize(v)?; Ok(()) }, |s| s.overlap.to_string()),
    ("coeffs_file", |b, v| { b.spec.coeffs_file = (!v.is_empty()).then(|| PathBuf::from(v)); Ok(()) },
        |s| s.coeffs_file.as_ref().map_or(String::new(), |p| p.display().to_string())),
    ("n_coeffs", |b, v| { b.spec.train.n_coeffs = parse_usize(v)?; Ok(()) }, |s| s.train.n_coeffs.to_string()),
    ("target_steps_per_span", |b, v| { b.spec.train.target_steps_per_span = parse_usize(v)?; Ok(()) },
        |s| s.train.target_steps_per_span.to_string()),
    ("train_samples", |b, v| { b.spec.train.train_samples = parse_usize(v)?; Ok(()) }, |s| s.train.train_samples.to_string()),
    ("max_iterations", |b, v| { b.spec.train.max_iterations = parse_usize(v)?; Ok(()) }, |s| s.train.max_iterations.to_string()),
    ("tolerance", |b, v| { b.spec.train.tolerance = parse_f64(v)?; Ok(()) }, |s| s.train.tolerance.to_string()),
    ("eq_taps", |b, v| { b.spec.equalizer.taps = parse_usize(v)?; Ok(()) }, |s| s.equalizer.taps.to_string()),
    ("eq_step_size", |b, v| { b.spec.equalizer.step_size = parse_f64(v)?; Ok(()) }, |s| s.equalizer.step_size.to_string()),
    ("eq_passes", |b, v| { b.spec.equalizer.passes = parse_usize(v)?; Ok(()) }, |s| s.equalizer.passes.to_string()),
    ("launch_powers_dbm", |b, v| { b.spec.launch_powers_dbm = parse_list(v, parse_f64)?; Ok(()) },
        |s| fmt_list(&s.launch_powers_dbm)),
    ("num_blocks", |b, v| { b.num_blocks = Some(parse_usize(v)?); Ok(()) }, |s| s.num_blocks.to_string()),
    ("seeds", |b, v| {
        b.seeds = Some(parse_list(v, |x| x.parse::<u64>().map_err(|_| format!("'{x}' is not a seed")))?);
        Ok(())
    }, |s| fmt_list(&s.seeds)),
    ("skip_symbols", |b, v| { b.spec.skip_symbols = parse_usize(v)?; Ok(()) }, |s| s.skip_symbols.to_string()),
    ("cost_ratios", |b, v| { b.spec.cost_ratios = parse_list(v, parse_usize)?; Ok(()) }, |s| fmt_list(&s.cost_ratios)),
    ("cost_lengths_km", |b, v| { b.spec.cost_lengths_km = parse_list(v, parse_f64)?; Ok(()) },
        |s| fmt_list(&s.cost_lengths_km)),
    ("cost_bandwidth_hz", |b, v| { b.spec.cost_bandwidth = parse_f64(v)?; Ok(()) }, |s| s.cost_bandwidth.to_string()),
];

impl Builder {
    fn new() -> Self {
        Self {
            spec: ExperimentSpec::default(),
            variants: None,
            seeds: None,
            num_blocks: None,
        }
    }

    fn apply(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), SpecError> {
        if key == "format_version" {
            return match value.parse::<u32>() {
                Ok(FORMAT_VERSION) => Ok(()),
                _ => Err(SpecError::BadValue {
                    origin: origin.clone(),
                    key: key.to_string(),
                    msg: format!("unsupported format version '{value}' (this build reads {FORMAT_VERSION})"),
                }),
            };
        }
        let (_, set, _) = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| SpecError::UnknownKey {
                origin: origin.clone(),
                key: key.to_string(),
            })?;
        set(self, value).map_err(|msg| SpecError::BadValue {
            origin: origin.clone(),
            key: key.to_string(),
            msg,
        })
    }

    fn finish(mut self) -> Result<ExperimentSpec, SpecError> {
        let nc = self.spec.train.n_coeffs;
        if let Some(v) = self.variants {
            self.spec.variants = v
                .into_iter()
                .map(|(algorithm, num_steps, n)| VariantSpec {
                    algorithm,
                    num_steps,
                    nc: n.unwrap_or(nc),
                })
                .collect();
        } else {
            for v in &mut self.spec.variants {
                if v.algorithm == Algorithm::Essfm {
                    v.nc = nc;
                }
            }
        }
        match (self.seeds, self.num_blocks) {
            (Some(seeds), Some(n)) => {
                self.spec.seeds = seeds;
                self.spec.num_blocks = n;
            }
            (Some(seeds), None) => {
                self.spec.num_blocks = seeds.len();
                self.spec.seeds = seeds;
            }
            (None, Some(n)) => {
                self.spec.num_blocks = n;
                self.spec.seeds = (1..=n as u64).collect();
            }
            (None, None) => {}
        }
        self.spec.validate()?;
        Ok(self.spec)
    }
}

/// Parses spec text without consulting the environment.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec, SpecError> {
    parse_spec_with_env(text, std::iter::empty())
}

/// Parses spec text, then applies `ESSFM_*` overrides from `env`.
pub fn parse_spec_with_env(
    text: &str,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<ExperimentSpec, SpecError> {
    let mut b = Builder::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SpecError::Syntax {
            origin: origin.clone(),
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        if !seen.insert(key.clone()) {
            return Err(SpecError::Syntax {
                origin,
                msg: format!("duplicate key '{key}'"),
            });
        }
        b.apply(&key, value.trim(), &origin)?;
    }
    let mut overrides: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    overrides.sort();
    for (name, value) in overrides {
        let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        b.apply(&key, value.trim(), &Origin::Env(name.clone()))?;
    }
    b.finish()
}

/// Reads a spec file, honouring `ESSFM_*` environment overrides.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    parse_spec_with_env(&text, std::env::vars())
}

/// An experiment spec built from defaults and environment overrides only.
pub fn default_spec_from_env() -> Result<ExperimentSpec, SpecError> {
    parse_spec_with_env("", std::env::vars())
}

impl ExperimentSpec {
    /// Writes every key, so the output parses back to an equal spec.
    pub fn to_text(&self) -> String {
        let mut out = format!("format_version = {FORMAT_VERSION}\n");
        for (key, _, get) in KEYS {
            let _ = writeln!(out, "{key} = {}", get(self));
        }
        out
    }

    /// Replaces the block seeds with `base, base+1, …`.
    pub fn with_base_seed(mut self, base: u64) -> Self {
        self.seeds = (0..self.num_blocks as u64).map(|k| base + k).collect();
        self
    }

    pub fn plan(&self) -> Result<OverlapPlan, SpecError> {
        OverlapPlan::new(self.fft_size, self.overlap).map_err(|e| SpecError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |msg: String| Err(SpecError::Invalid(msg));
        let core = |e: essfm_core::Error| SpecError::Invalid(e.to_string());
        self.link.to_link().validate().map_err(core)?;
        self.tx.validate().map_err(core)?;
        self.equalizer.validate().map_err(core)?;
        self.plan()?;
        if self.forward_steps_per_span == 0 {
            return bad("forward_steps_per_span must be >= 1".into());
        }
        if !(self.laser_linewidth >= 0.0) {
            return bad(format!(
                "laser_linewidth_hz must be >= 0, got {}",
                self.laser_linewidth
            ));
        }
        if let Some(r) = self.adc_rate {
            if !(r > 0.0) {
                return bad(format!("adc_rate_hz must be positive, got {r}"));
            }
        }
        if self.num_blocks == 0 {
            return bad("num_blocks must be >= 1".into());
        }
        if self.seeds.len() != self.num_blocks {
            return bad(format!(
                "seeds lists {} entries but num_blocks = {}",
                self.seeds.len(),
                self.num_blocks
            ));
        }
        if self.skip_symbols >= self.tx.num_symbols {
            return bad(format!(
                "skip_symbols = {} leaves nothing of {} symbols",
                self.skip_symbols, self.tx.num_symbols
            ));
        }
        for v in &self.variants {
            if v.algorithm != Algorithm::Ffe && v.num_steps == 0 {
                return bad(format!("variant {v} needs at least one step"));
            }
            if v.algorithm == Algorithm::Essfm {
                TrainConfig {
                    n_coeffs: v.nc,
                    ..self.train
                }
                .validate()
                .map_err(core)?;
                if self.fft_size <= 2 * v.nc {
                    return bad(format!("fft_size {} too short for variant {v}", self.fft_size));
                }
            }
        }
        let samples = self.tx.num_symbols * self.tx.samples_per_symbol;
        if self.train.train_samples > samples {
            return bad(format!(
                "train_samples = {} exceeds the {samples}-sample block",
                self.train.train_samples
            ));
        }
        match self.scenario {
            Scenario::BerSweep => {
                if self.variants.is_empty() {
                    return bad("ber-sweep needs at least one variant".into());
                }
                if self.launch_powers_dbm.is_empty() {
                    return bad("ber-sweep needs at least one launch power".into());
                }
            }
            Scenario::TrainCoeffs => {
                if !self.variants.iter().any(|v| v.algorithm == Algorithm::Essfm) {
                    return bad("train-coeffs needs an essfm variant".into());
                }
                if self.launch_powers_dbm.is_empty() {
                    return bad("train-coeffs needs at least one launch power".into());
                }
            }
            Scenario::CostFig1 => {
                if self.cost_ratios.is_empty() || self.cost_ratios.contains(&0) {
                    return bad("cost_ratios must be a non-empty list of positive integers".into());
                }
            }
            Scenario::CostFig2 => {
                if self.cost_lengths_km.is_empty() || self.cost_lengths_km.iter().any(|&l| !(l > 0.0)) {
                    return bad("cost_lengths_km must be a non-empty list of positive lengths".into());
                }
                if !(self.cost_bandwidth > 0.0) {
                    return bad("cost_bandwidth_hz must be positive".into());
                }
            }
            Scenario::InsetTable => {}
        }
        Ok(())
    }
}
