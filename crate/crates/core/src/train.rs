//! Least-squares fitting of the enhanced-step filter coefficients against a
//! multi-step SSFM backpropagation target.
//!
//! The coefficients enter the output only through the nonlinear phase, so
//! the exact derivative of the DBP output with respect to every `cᵢ` is
//! carried alongside the signal through each block (forward-mode
//! differentiation). A damped Gauss–Newton iteration on those tangents
//! converges in a handful of passes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dbp::{filter_intensity, Algorithm, DbpConfig, DbpProcessor, StepOrder};
use crate::error::{invalid, Result};
use crate::sigkit::{DualPolSignal, EssfmCoefficients};
use crate::spectral::overlap_save_multi;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n_coeffs: usize,
    /// Fine-step SSFM resolution of the target.
    pub target_steps_per_span: usize,
    /// Leading output samples used for fitting.
    pub train_samples: usize,
    pub max_iterations: usize,
    /// Stop once the relative MSE improvement of an iteration falls below this.
    pub tolerance: f64,
    /// Recorded with the result; the solver itself draws no random numbers.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 32,
            target_steps_per_span: 4,
            train_samples: 16384,
            max_iterations: 30,
            tolerance: 1e-6,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_steps_per_span == 0 {
            return Err(invalid("target_steps_per_span must be >= 1"));
        }
        let min = 10 * (self.n_coeffs + 1);
        if self.train_samples < min {
            return Err(invalid(format!(
                "train_samples = {} must be at least 10·(N_c + 1) = {min}",
                self.train_samples
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(invalid("tolerance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub coeffs: EssfmCoefficients,
    pub final_mse: f64,
    /// MSE of the plain-SSFM starting point `c = (1, 0, …)`.
    pub initial_mse: f64,
    pub iterations: usize,
    /// False when `max_iterations` ran out before the tolerance was met.
    pub converged: bool,
}

/// `Σ|a − b|² / Σ|b|²` over both polarizations.
pub fn mse(a: &DualPolSignal, b: &DualPolSignal) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!(
            "cannot compare signals of {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let mut err = 0.0;
    let mut pow = 0.0;
    for (pa, pb) in [(a.x(), b.x()), (a.y(), b.y())] {
        for (u, v) in pa.iter().zip(pb) {
            err += (u - v).norm_sqr();
            pow += v.norm_sqr();
        }
    }
    if pow == 0.0 {
        return Err(invalid("reference signal has zero power"));
    }
    Ok(err / pow)
}

/// Separable derivative of the intensity filter output with respect to `cᵢ`.
fn basis(intensity: &[f64], i: usize) -> Vec<f64> {
    let n = intensity.len();
    if i == 0 {
        return intensity.to_vec();
    }
    (0..n)
        .map(|k| intensity[(k + n - i) % n] + intensity[(k + i) % n])
        .collect()
}

fn intensity_derivative(y: &DualPolSignal, dy: &DualPolSignal) -> Vec<f64> {
    let mut j = vec![0.0; y.len()];
    for (p, dp) in [(y.x(), dy.x()), (y.y(), dy.y())] {
        for ((acc, a), da) in j.iter_mut().zip(p).zip(dp) {
            *acc += 2.0 * (a.conj() * da).re;
        }
    }
    j
}

/// Enhanced nonlinear step applied to `block` and its tangents.
fn nonlinear_with_tangents(block: &mut DualPolSignal, tangents: &mut [DualPolSignal], kappa: f64, c: &[f64]) {
    let intensity = block.intensities();
    let theta: Vec<f64> = filter_intensity(&intensity, c)
        .into_iter()
        .map(|v| kappa * v)
        .collect();
    let jay = Complex64::new(0.0, 1.0);
    for (i, dy) in tangents.iter_mut().enumerate() {
        let ji = intensity_derivative(block, dy);
        let fj = filter_intensity(&ji, c);
        let si = basis(&intensity, i);
        let (dx, dyy) = dy.pols_mut();
        for (pol, base) in [(dx, block.x()), (dyy, block.y())] {
            for k in 0..pol.len() {
                let dtheta = kappa * (si[k] + fj[k]);
                pol[k] = Complex64::cis(theta[k]) * (pol[k] + jay * base[k] * dtheta);
            }
        }
    }
    let (x, y) = block.pols_mut();
    for ((a, b), t) in x.iter_mut().zip(y.iter_mut()).zip(&theta) {
        let rot = Complex64::cis(*t);
        *a *= rot;
        *b *= rot;
    }
}

/// Processes one block and returns it followed by `∂output/∂cᵢ` for every
/// coefficient.
fn process_with_tangents(p: &DbpProcessor, mut block: DualPolSignal) -> Vec<DualPolSignal> {
    let c = p.coeffs.as_ref().expect("enhanced processor").as_slice().to_vec();
    let zeros = DualPolSignal::zeros(block.len(), block.sample_rate()).expect("non-empty block");
    let mut tangents = vec![zeros; c.len()];
    for step in &p.steps {
        // Inverse Kerr phase: γ → −γ, so the rotation is +γ·w·(filtered I).
        let kappa = p.gamma * step.nl_weight;
        let linear = |b: &mut DualPolSignal, t: &mut [DualPolSignal]| {
            DbpProcessor::linear(b, &p.phasors);
            for d in t.iter_mut() {
                DbpProcessor::linear(d, &p.phasors);
            }
        };
        let scale = |b: &mut DualPolSignal, t: &mut [DualPolSignal]| {
            b.scale(step.amplitude);
            for d in t.iter_mut() {
                d.scale(step.amplitude);
            }
        };
        match p.order {
            StepOrder::LinearFirst => {
                linear(&mut block, &mut tangents);
                scale(&mut block, &mut tangents);
                nonlinear_with_tangents(&mut block, &mut tangents, kappa, &c);
            }
            StepOrder::NonlinearFirst => {
                scale(&mut block, &mut tangents);
                nonlinear_with_tangents(&mut block, &mut tangents, kappa, &c);
                linear(&mut block, &mut tangents);
            }
        }
    }
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(block);
    out.extend(tangents);
    out
}

fn run_window(sig: &DualPolSignal, cfg: &DbpConfig, window: std::ops::Range<usize>) -> Result<DualPolSignal> {
    let p = DbpProcessor::new(cfg, sig.sample_rate())?;
    let mut out = overlap_save_multi(sig, cfg.plan, window, |mut b| {
        p.process(&mut b);
        vec![b]
    })?;
    Ok(out.remove(0))
}

/// Fine-step SSFM backpropagation of the output samples in `window`.
pub fn training_target(
    received: &DualPolSignal,
    cfg_dbp: &DbpConfig,
    target_steps_per_span: usize,
    window: std::ops::Range<usize>,
) -> Result<DualPolSignal> {
    let target_cfg = DbpConfig {
        algorithm: Algorithm::Ssfm,
        num_steps: target_steps_per_span * cfg_dbp.link.num_spans,
        coeffs: None,
        ..cfg_dbp.clone()
    };
    run_window(received, &target_cfg, window)
}

/// Normalized MSE of the enhanced DBP with `coeffs` against `target` over
/// `window`.
pub fn windowed_mse(
    received: &DualPolSignal,
    cfg_dbp: &DbpConfig,
    coeffs: &EssfmCoefficients,
    target: &DualPolSignal,
    window: std::ops::Range<usize>,
) -> Result<f64> {
    let cfg = DbpConfig {
        algorithm: Algorithm::Essfm,
        coeffs: Some(coeffs.clone()),
        ..cfg_dbp.clone()
    };
    mse(&run_window(received, &cfg, window)?, target)
}

fn gauss_newton_step(
    out: &DualPolSignal,
    tangents: &[DualPolSignal],
    target: &DualPolSignal,
) -> Option<Vec<f64>> {
    let p = tangents.len();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut g = DVector::<f64>::zeros(p);
    let pols = |s: &DualPolSignal| [s.x().to_vec(), s.y().to_vec()];
    let t: Vec<[Vec<Complex64>; 2]> = tangents.iter().map(pols).collect();
    let (o, r) = (pols(out), pols(target));
    for pol in 0..2 {
        let resid: Vec<Complex64> = r[pol].iter().zip(&o[pol]).map(|(r, o)| r - o).collect();
        for i in 0..p {
            g[i] += t[i][pol]
                .iter()
                .zip(&resid)
                .map(|(ti, ri)| (ti.conj() * ri).re)
                .sum::<f64>();
            for j in i..p {
                let v: f64 = t[i][pol]
                    .iter()
                    .zip(&t[j][pol])
                    .map(|(a, b)| (a.conj() * b).re)
                    .sum();
                a[(i, j)] += v;
                if i != j {
                    a[(j, i)] += v;
                }
            }
        }
    }
    let trace = a.trace();
    if !(trace > 0.0) {
        return None;
    }
    let damping = 1e-10 * trace / p as f64;
    for i in 0..p {
        a[(i, i)] += damping;
    }
    a.cholesky().map(|ch| ch.solve(&g).iter().copied().collect())
}

/// Fits `cfg_train.n_coeffs + 1` coefficients of the enhanced DBP in
/// `cfg_dbp` (its step count, framing and link) so that its output over the
/// first `train_samples` samples approaches the fine-step SSFM target. Starts
/// from `c = (1, 0, …)` and only accepts steps that lower the MSE.
pub fn optimize_coefficients(
    received: &DualPolSignal,
    cfg_dbp: &DbpConfig,
    cfg_train: &TrainConfig,
) -> Result<TrainResult> {
    cfg_train.validate()?;
    if cfg_train.train_samples > received.len() {
        return Err(invalid(format!(
            "train_samples = {} exceeds the {} received samples",
            cfg_train.train_samples,
            received.len()
        )));
    }
    let window = 0..cfg_train.train_samples;
    let target = training_target(received, cfg_dbp, cfg_train.target_steps_per_span, window.clone())?;

    let mut coeffs = EssfmCoefficients::unit(cfg_train.n_coeffs);
    let mut cfg = DbpConfig {
        algorithm: Algorithm::Essfm,
        coeffs: Some(coeffs.clone()),
        ..cfg_dbp.clone()
    };
    cfg.validate()?;
    let mut current = windowed_mse(received, &cfg, &coeffs, &target, window.clone())?;
    let initial_mse = current;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg_train.max_iterations {
        iterations += 1;
        cfg.coeffs = Some(coeffs.clone());
        let p = DbpProcessor::new(&cfg, received.sample_rate())?;
        let mut blocks = overlap_save_multi(received, cfg.plan, window.clone(), |b| {
            process_with_tangents(&p, b)
        })?;
        let out = blocks.remove(0);
        let Some(delta) = gauss_newton_step(&out, &blocks, &target) else {
            converged = true;
            break;
        };

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..20 {
            let trial: Vec<f64> = coeffs
                .as_slice()
                .iter()
                .zip(&delta)
                .map(|(c, d)| c + t * d)
                .collect();
            let trial = EssfmCoefficients::new(trial)?;
            let m = windowed_mse(received, &cfg, &trial, &target, window.clone())?;
            if m < current {
                accepted = Some((trial, m));
                break;
            }
            t *= 0.5;
        }
        let Some((next, m)) = accepted else {
            converged = true;
            break;
        };
        let improvement = (current - m) / current;
        coeffs = next;
        current = m;
        if improvement < cfg_train.tolerance || current == 0.0 {
            converged = true;
            break;
        }
    }

    Ok(TrainResult {
        coeffs,
        final_mse: current,
        initial_mse,
        iterations,
        converged,
    })
}

/// Plain-text form: `N_c` on the first line, then `c₀ … c_{N_c}` one per line.
pub fn coefficients_to_text(c: &EssfmCoefficients) -> String {
    let mut s = format!("{}\n", c.nc());
    for v in c.as_slice() {
        s.push_str(&format!("{v:e}\n"));
    }
    s
}

pub fn coefficients_from_text(text: &str) -> Result<EssfmCoefficients> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| invalid("empty coefficient file"))?;
    let nc: usize = header
        .parse()
        .map_err(|_| invalid(format!("line 1: expected N_c, found '{header}'")))?;
    let values = lines
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|_| invalid(format!("coefficient {i}: cannot parse '{l}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != nc + 1 {
        return Err(invalid(format!(
            "expected {} coefficients for N_c = {nc}, found {}",
            nc + 1,
            values.len()
        )));
    }
    EssfmCoefficients::new(values)
}
