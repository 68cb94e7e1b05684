//! Scenario execution and CSV reporting.

use std::fmt::Write as _;

use essfm_core::channel::{apply_laser_phase_noise, propagate_link, SsfmStepConfig};
use essfm_core::costmodel::{self, cost_per_sample, CostReport};
use essfm_core::dbp::{backpropagate, Algorithm, DbpConfig};
use essfm_core::modem::tx::{adc_round_trip, resample};
use essfm_core::modem::{
    butterfly_equalize, carrier_recover, evaluate, modulate_pm_qpsk, CarrierConfig, QpskReference, TxConfig,
};
use essfm_core::sigkit::scale_to_power;
use essfm_core::spectral::OverlapPlan;
use essfm_core::train::{coefficients_from_text, optimize_coefficients, TrainConfig, TrainResult};
use essfm_core::{DualPolSignal, EssfmCoefficients};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::spec::{ExperimentSpec, Scenario, SpecError, VariantSpec, FORMAT_VERSION};

/// BER assigned to a failed row when aggregating; a receiver that cannot lock
/// is no better than guessing.
pub const FAILED_ROW_BER: f64 = 0.5;

pub const BER_CSV_HEADER: &str =
    "scenario,algorithm,Ns,Nc,power_dbm,ber,q_db,mse,mults_per_sample,latency_proxy,seed,status";

pub const TRAIN_CSV_HEADER: &str =
    "scenario,algorithm,Ns,Nc,power_dbm,seed,initial_mse,final_mse,iterations,converged,coeffs,status";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("coefficient file {path}: {msg}")]
    Coefficients { path: String, msg: String },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Core(#[from] essfm_core::Error),
}

/// Per-row receiver figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub ber: f64,
    pub q_db: f64,
    /// Normalized symbol MSE after carrier recovery.
    pub mse: f64,
    pub bits_counted: usize,
    pub singularity_reset: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRow {
    pub variant: VariantSpec,
    pub power_dbm: f64,
    pub seed: u64,
    pub cost: CostReport,
    pub outcome: Result<RowMetrics, String>,
}

impl BerRow {
    /// BER used for aggregation.
    pub fn effective_ber(&self) -> f64 {
        self.outcome.as_ref().map_or(FAILED_ROW_BER, |m| m.ber)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow {
    pub variant: VariantSpec,
    pub power_dbm: f64,
    pub seed: u64,
    pub outcome: Result<TrainResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentResult {
    /// Cost tables are fully formatted by the cost model.
    Cost {
        scenario: Scenario,
        table: String,
    },
    Ber(Vec<BerRow>),
    Train(Vec<TrainRow>),
}

fn status(outcome: &Result<impl Sized, String>) -> String {
    match outcome {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("failed: {}", e.replace([',', '\n', '\r'], ";")),
    }
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# format_version={FORMAT_VERSION}\n");
        match self {
            ExperimentResult::Cost { table, .. } => out.push_str(table),
            ExperimentResult::Ber(rows) => {
                let _ = writeln!(out, "{BER_CSV_HEADER}");
                for r in rows {
                    let figures = match &r.outcome {
                        Ok(m) => format!("{:.2e},{:.2},{:.3e}", m.ber, m.q_db, m.mse),
                        Err(_) => ",,".to_string(),
                    };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{figures},{:.4},{},{},{}",
                        Scenario::BerSweep,
                        r.variant.algorithm.name(),
                        r.variant.num_steps,
                        r.variant.nc,
                        r.power_dbm,
                        r.cost.real_mults_per_sample(),
                        r.cost.latency_proxy,
                        r.seed,
                        status(&r.outcome)
                    );
                }
            }
            ExperimentResult::Train(rows) => {
                let _ = writeln!(out, "{TRAIN_CSV_HEADER}");
                for r in rows {
                    let figures = match &r.outcome {
                        Ok(t) => format!(
                            "{:.6e},{:.6e},{},{},{}",
                            t.initial_mse,
                            t.final_mse,
                            t.iterations,
                            t.converged,
                            t.coeffs
                                .as_slice()
                                .iter()
                                .map(f64::to_string)
                                .collect::<Vec<_>>()
                                .join(" ")
                        ),
                        Err(_) => ",,,,".to_string(),
                    };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{figures},{}",
                        Scenario::TrainCoeffs,
                        r.variant.algorithm.name(),
                        r.variant.num_steps,
                        r.variant.nc,
                        r.power_dbm,
                        r.seed,
                        status(&r.outcome)
                    );
                }
            }
        }
        out
    }

    /// One description per failed row.
    pub fn failures(&self) -> Vec<String> {
        match self {
            ExperimentResult::Cost { .. } => Vec::new(),
            ExperimentResult::Ber(rows) => rows
                .iter()
                .filter_map(|r| {
                    r.outcome.as_ref().err().map(|e| {
                        format!(
                            "{} at {} dBm, seed {}: {e}",
                            r.variant.label(),
                            r.power_dbm,
                            r.seed
                        )
                    })
                })
                .collect(),
            ExperimentResult::Train(rows) => rows
                .iter()
                .filter_map(|r| {
                    r.outcome.as_ref().err().map(|e| {
                        format!(
                            "training {} at {} dBm, seed {}: {e}",
                            r.variant.label(),
                            r.power_dbm,
                            r.seed
                        )
                    })
                })
                .collect(),
        }
    }
}

/// Median BER over blocks for one variant at one power.
#[derive(Debug, Clone, PartialEq)]
pub struct BerSummary {
    pub variant: VariantSpec,
    pub power_dbm: f64,
    pub median_ber: f64,
    pub blocks: usize,
    pub failed: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups rows by (variant, power) in order of first appearance. Failed rows
/// enter the median as [`FAILED_ROW_BER`].
pub fn summarize(rows: &[BerRow]) -> Vec<BerSummary> {
    let mut keys: Vec<(VariantSpec, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(v, p)| v == r.variant && p == r.power_dbm) {
            keys.push((r.variant, r.power_dbm));
        }
    }
    keys.into_iter()
        .map(|(variant, power_dbm)| {
            let group: Vec<&BerRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.power_dbm == power_dbm)
                .collect();
            BerSummary {
                variant,
                power_dbm,
                median_ber: median(group.iter().map(|r| r.effective_ber()).collect()),
                blocks: group.len(),
                failed: group.iter().filter(|r| r.outcome.is_err()).count(),
            }
        })
        .collect()
}

/// Independent streams for the random stages of one block.
struct BlockSeeds {
    link: u64,
    laser: u64,
}

impl BlockSeeds {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            link: rng.next_u64(),
            laser: rng.next_u64(),
        }
    }
}

/// Received waveform of one block together with its transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub signal: DualPolSignal,
    pub reference: QpskReference,
}

fn apply_frequency_offset(sig: &DualPolSignal, offset: f64) -> essfm_core::Result<DualPolSignal> {
    let w = 2.0 * std::f64::consts::PI * offset / sig.sample_rate();
    let rot = |pol: &[Complex64]| -> Vec<Complex64> {
        pol.iter()
            .enumerate()
            .map(|(n, &v)| v * Complex64::from_polar(1.0, w * n as f64))
            .collect()
    };
    DualPolSignal::new(rot(sig.x()), rot(sig.y()), sig.sample_rate())
}

/// Transmitter, link and receiver front end for one block at one launch
/// power. Laser phase noise is imposed at the transmitter.
pub fn simulate_received(spec: &ExperimentSpec, power_dbm: f64, seed: u64) -> essfm_core::Result<Received> {
    let seeds = BlockSeeds::new(seed);
    let tx = TxConfig {
        rng_seed: seed,
        ..spec.tx
    };
    let (sig, reference) = modulate_pm_qpsk(&tx)?;
    let mut sig = scale_to_power(&sig, power_dbm)?;
    sig = apply_laser_phase_noise(&sig, spec.laser_linewidth, seeds.laser)?;
    if !spec.back_to_back {
        let steps = SsfmStepConfig::new(spec.forward_steps_per_span)?;
        sig = propagate_link(&sig, &spec.link.to_link(), &steps, seeds.link)?;
    }
    if spec.frequency_offset != 0.0 {
        sig = apply_frequency_offset(&sig, spec.frequency_offset)?;
    }
    if let Some(rate) = spec.adc_rate {
        sig = adc_round_trip(&sig, rate)?;
    }
    Ok(Received {
        signal: sig,
        reference,
    })
}

/// DBP configuration of `variant`; ESSFM uses `coeffs` or the unit filter.
pub fn dbp_config(
    spec: &ExperimentSpec,
    variant: &VariantSpec,
    coeffs: Option<EssfmCoefficients>,
) -> essfm_core::Result<DbpConfig> {
    let link = spec.link.to_link();
    let plan = OverlapPlan::new(spec.fft_size, spec.overlap)?;
    Ok(match variant.algorithm {
        Algorithm::Ffe => DbpConfig::ffe(link, plan),
        Algorithm::Ssfm => DbpConfig::ssfm(link, plan, variant.num_steps),
        Algorithm::Essfm => DbpConfig::essfm(
            link,
            plan,
            variant.num_steps,
            coeffs.unwrap_or_else(|| EssfmCoefficients::unit(variant.nc)),
        ),
    })
}

/// Fits ESSFM coefficients for `variant` on the leading samples of `rx`.
pub fn train_variant(
    spec: &ExperimentSpec,
    rx: &DualPolSignal,
    variant: &VariantSpec,
) -> essfm_core::Result<TrainResult> {
    let cfg = dbp_config(spec, variant, None)?;
    let train = TrainConfig {
        n_coeffs: variant.nc,
        ..spec.train
    };
    optimize_coefficients(rx, &cfg, &train)
}

/// Equalizer, carrier recovery and BER counting on a compensated waveform.
pub fn measure(
    spec: &ExperimentSpec,
    sig: &DualPolSignal,
    reference: &QpskReference,
) -> essfm_core::Result<RowMetrics> {
    let two_sps = if spec.tx.samples_per_symbol == 2 {
        sig.clone()
    } else {
        resample(sig, 2 * spec.tx.num_symbols)?
    };
    let eq = butterfly_equalize(&two_sps, &spec.equalizer)?;
    let cr = carrier_recover(&eq.signal, reference, &CarrierConfig::new(spec.tx.symbol_rate))?;
    let m = evaluate([cr.signal.x(), cr.signal.y()], reference, spec.skip_symbols)?;
    let evm = m.evm.unwrap_or(f64::NAN);
    Ok(RowMetrics {
        ber: m.ber,
        q_db: m.q_factor_db,
        mse: (evm / 100.0).powi(2),
        bits_counted: m.bits_counted,
        singularity_reset: eq.singularity_reset,
    })
}

fn run_variant(
    spec: &ExperimentSpec,
    rx: &Received,
    variant: &VariantSpec,
    file_coeffs: Option<&EssfmCoefficients>,
) -> essfm_core::Result<RowMetrics> {
    if spec.back_to_back {
        return measure(spec, &rx.signal, &rx.reference);
    }
    let coeffs = match (variant.algorithm, file_coeffs) {
        (Algorithm::Essfm, Some(c)) => {
            if c.nc() != variant.nc {
                return Err(essfm_core::Error::InvalidParameter(format!(
                    "coefficient file has N_c = {} but variant {} needs {}",
                    c.nc(),
                    variant,
                    variant.nc
                )));
            }
            Some(c.clone())
        }
        (Algorithm::Essfm, None) => Some(train_variant(spec, &rx.signal, variant)?.coeffs),
        _ => None,
    };
    let out = backpropagate(&rx.signal, &dbp_config(spec, variant, coeffs)?)?.signal;
    measure(spec, &out, &rx.reference)
}

fn row_cost(spec: &ExperimentSpec, v: &VariantSpec) -> essfm_core::Result<CostReport> {
    cost_per_sample(v.algorithm, spec.fft_size, spec.overlap, v.nc, v.num_steps)
}

fn load_coefficients(spec: &ExperimentSpec) -> Result<Option<EssfmCoefficients>, RunError> {
    let Some(path) = &spec.coeffs_file else {
        return Ok(None);
    };
    let err = |msg: String| RunError::Coefficients {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    coefficients_from_text(&text)
        .map(Some)
        .map_err(|e| err(e.to_string()))
}

/// Every (power, seed) block, in spec order.
fn blocks(spec: &ExperimentSpec) -> Vec<(f64, u64)> {
    spec.launch_powers_dbm
        .iter()
        .flat_map(|&p| spec.seeds.iter().map(move |&s| (p, s)))
        .collect()
}

fn run_ber_sweep(spec: &ExperimentSpec) -> Result<Vec<BerRow>, RunError> {
    let file_coeffs = load_coefficients(spec)?;
    let costs = spec
        .variants
        .iter()
        .map(|v| row_cost(spec, v))
        .collect::<essfm_core::Result<Vec<_>>>()?;
    let per_block: Vec<Vec<Result<RowMetrics, String>>> = blocks(spec)
        .par_iter()
        .map(|&(p, seed)| match simulate_received(spec, p, seed) {
            Ok(rx) => spec
                .variants
                .iter()
                .map(|v| run_variant(spec, &rx, v, file_coeffs.as_ref()).map_err(|e| e.to_string()))
                .collect(),
            Err(e) => vec![Err(e.to_string()); spec.variants.len()],
        })
        .collect();
    // Reorder to power → variant → seed.
    let nseeds = spec.seeds.len();
    let mut rows = Vec::with_capacity(per_block.len() * spec.variants.len());
    for (pi, &power_dbm) in spec.launch_powers_dbm.iter().enumerate() {
        for (vi, variant) in spec.variants.iter().enumerate() {
            for (si, &seed) in spec.seeds.iter().enumerate() {
                rows.push(BerRow {
                    variant: *variant,
                    power_dbm,
                    seed,
                    cost: costs[vi],
                    outcome: per_block[pi * nseeds + si][vi].clone(),
                });
            }
        }
    }
    Ok(rows)
}

fn run_training(spec: &ExperimentSpec) -> Vec<TrainRow> {
    let essfm: Vec<VariantSpec> = spec
        .variants
        .iter()
        .copied()
        .filter(|v| v.algorithm == Algorithm::Essfm)
        .collect();
    let per_block: Vec<Vec<TrainRow>> = blocks(spec)
        .par_iter()
        .map(|&(power_dbm, seed)| {
            let rx = simulate_received(spec, power_dbm, seed);
            essfm
                .iter()
                .map(|v| TrainRow {
                    variant: *v,
                    power_dbm,
                    seed,
                    outcome: rx
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|rx| train_variant(spec, &rx.signal, v).map_err(|e| e.to_string())),
                })
                .collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

const COST_ALGORITHMS: [Algorithm; 3] = [Algorithm::Ffe, Algorithm::Ssfm, Algorithm::Essfm];

fn cost_table(spec: &ExperimentSpec) -> Result<String, RunError> {
    let nc = spec.train.n_coeffs;
    let mut out = format!("{}\n", costmodel::CSV_HEADER);
    match spec.scenario {
        Scenario::CostFig1 => {
            let reports =
                costmodel::sweep_block_length(&COST_ALGORITHMS, spec.overlap, nc, &spec.cost_ratios)?;
            for r in &reports {
                // Percent of the cheapest block length for the same algorithm.
                let best = reports
                    .iter()
                    .filter(|o| o.algorithm == r.algorithm)
                    .map(CostReport::real_mults_per_sample)
                    .fold(f64::INFINITY, f64::min);
                let pct = 100.0 * r.real_mults_per_sample() / best;
                let _ = writeln!(out, "{}", costmodel::csv_row(r, Some(pct)));
            }
        }
        Scenario::CostFig2 => {
            let rows = costmodel::sweep_link_length(
                &COST_ALGORITHMS,
                &spec.cost_lengths_km,
                spec.link.beta2.abs(),
                spec.cost_bandwidth,
                nc,
            )?;
            out = costmodel::length_sweep_csv(&rows);
        }
        _ => {
            for (r, pct) in costmodel::inset_table(spec.fft_size, spec.overlap, nc)? {
                let _ = writeln!(out, "{}", costmodel::csv_row(&r, Some(pct)));
            }
        }
    }
    Ok(out)
}

/// Runs the experiment's scenario on a pool of `jobs` threads (all cores when
/// `None`). Row order and content do not depend on the pool size.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<ExperimentResult, RunError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| match spec.scenario {
        Scenario::BerSweep => run_ber_sweep(spec).map(ExperimentResult::Ber),
        Scenario::TrainCoeffs => Ok(ExperimentResult::Train(run_training(spec))),
        sc => cost_table(spec).map(|table| ExperimentResult::Cost { scenario: sc, table }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    #[test]
    fn median_handles_both_parities() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn inset_table_percentages() {
        let spec = parse_spec("scenario = inset-table\n").unwrap();
        let ExperimentResult::Cost { table, .. } = run_experiment(&spec, Some(1)).unwrap() else {
            panic!("cost result expected");
        };
        let pct: Vec<f64> = table
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        // 128, 179, 2286 and 2857 multiplications per sample.
        for (got, want) in pct.iter().zip([4.5, 6.3, 80.0, 100.0]) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn frequency_offset_is_a_pure_rotation() {
        let sig = DualPolSignal::new(
            vec![Complex64::new(1.0, 0.0); 8],
            vec![Complex64::new(0.0, 1.0); 8],
            8.0,
        )
        .unwrap();
        let out = apply_frequency_offset(&sig, 1.0).unwrap();
        let w = 2.0 * std::f64::consts::PI / 8.0;
        for n in 0..8 {
            assert!((out.x()[n] - Complex64::from_polar(1.0, w * n as f64)).norm() < 1e-12);
            assert_eq!(out.y()[n].norm(), 1.0);
        }
    }

    #[test]
    fn failed_rows_count_as_coin_flips() {
        let spec = ExperimentSpec::default();
        let cost = row_cost(&spec, &VariantSpec::ffe()).unwrap();
        let row = |seed, outcome| BerRow {
            variant: VariantSpec::ffe(),
            power_dbm: 0.0,
            seed,
            cost,
            outcome,
        };
        let ok = |ber| {
            Ok(RowMetrics {
                ber,
                q_db: 0.0,
                mse: 0.0,
                bits_counted: 1,
                singularity_reset: false,
            })
        };
        let rows = vec![row(1, ok(1e-3)), row(2, Err("x".into())), row(3, Err("y".into()))];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(
            (s[0].median_ber, s[0].failed, s[0].blocks),
            (FAILED_ROW_BER, 2, 3)
        );
        let csv = ExperimentResult::Ber(rows).to_csv();
        assert!(csv.lines().nth(3).unwrap().ends_with(",failed: x"), "{csv}");
    }
}
