//! Fractionally spaced 2×2 butterfly equalizer adapted by the constant-modulus
//! algorithm.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::sigkit::DualPolSignal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButterflyConfig {
    /// Odd number of taps per filter, spaced at half a symbol.
    pub taps: usize,
    pub step_size: f64,
    /// Adaptation passes over the block before the final filtering pass.
    pub passes: usize,
}

impl Default for ButterflyConfig {
    fn default() -> Self {
        Self {
            taps: 15,
            step_size: 1e-3,
            passes: 2,
        }
    }
}

impl ButterflyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps.is_multiple_of(2) {
            return Err(invalid(format!("equalizer taps must be odd, got {}", self.taps)));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(invalid("equalizer step size must be positive"));
        }
        if self.passes == 0 {
            return Err(invalid("at least one adaptation pass is required"));
        }
        Ok(())
    }
}

/// Filter bank `h[out][in][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterflyTaps(pub [[Vec<Complex64>; 2]; 2]);

impl ButterflyTaps {
    pub fn center_spike(taps: usize) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); taps];
        let mut spike = zero.clone();
        spike[taps / 2] = Complex64::new(1.0, 0.0);
        Self([[spike.clone(), zero.clone()], [zero, spike]])
    }

    fn len(&self) -> usize {
        self.0[0][0].len()
    }

    /// Rebuilds the y-row as the orthogonal complement of the x-row, which
    /// forces the second output onto the other polarization.
    fn reinit_second_row(&mut self) {
        let rev_conj = |h: &[Complex64]| -> Vec<Complex64> { h.iter().rev().map(|v| v.conj()).collect() };
        let hxx = &self.0[0][0];
        let hxy = &self.0[0][1];
        let hyx: Vec<Complex64> = rev_conj(hxy).into_iter().map(|v| -v).collect();
        let hyy = rev_conj(hxx);
        self.0[1] = [hyx, hyy];
    }
}

#[derive(Debug, Clone)]
pub struct ButterflyOutput {
    /// One sample per symbol.
    pub signal: DualPolSignal,
    pub taps: ButterflyTaps,
    /// Set when both outputs locked onto the same polarization and the
    /// second row had to be re-initialized.
    pub singularity_reset: bool,
}

struct Inputs<'a> {
    x: &'a [Complex64],
    y: &'a [Complex64],
}

impl Inputs<'_> {
    /// Input window for output symbol `n`, centred on sample `2n`.
    fn window(&self, n: usize, taps: usize, buf: &mut [Vec<Complex64>; 2]) {
        let len = self.x.len() as isize;
        let half = (taps / 2) as isize;
        for k in 0..taps {
            let idx = (2 * n as isize + k as isize - half).rem_euclid(len) as usize;
            buf[0][k] = self.x[idx];
            buf[1][k] = self.y[idx];
        }
    }
}

fn filter(h: &ButterflyTaps, u: &[Vec<Complex64>; 2]) -> [Complex64; 2] {
    std::array::from_fn(|o| {
        (0..2)
            .map(|i| h.0[o][i].iter().zip(&u[i]).map(|(a, b)| a * b).sum::<Complex64>())
            .sum()
    })
}

fn adapt_pass(h: &mut ButterflyTaps, input: &Inputs, symbols: usize, mu: f64) {
    let t = h.len();
    let mut u = [
        vec![Complex64::new(0.0, 0.0); t],
        vec![Complex64::new(0.0, 0.0); t],
    ];
    for n in 0..symbols {
        input.window(n, t, &mut u);
        let out = filter(h, &u);
        for o in 0..2 {
            let e = out[o] * (1.0 - out[o].norm_sqr()) * mu;
            for i in 0..2 {
                for (w, v) in h.0[o][i].iter_mut().zip(&u[i]) {
                    *w += e * v.conj();
                }
            }
        }
    }
}

fn run_fixed(h: &ButterflyTaps, input: &Inputs, symbols: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let t = h.len();
    let mut u = [
        vec![Complex64::new(0.0, 0.0); t],
        vec![Complex64::new(0.0, 0.0); t],
    ];
    let mut ox = Vec::with_capacity(symbols);
    let mut oy = Vec::with_capacity(symbols);
    for n in 0..symbols {
        input.window(n, t, &mut u);
        let [a, b] = filter(h, &u);
        ox.push(a);
        oy.push(b);
    }
    (ox, oy)
}

/// Peak normalized cross-correlation magnitude between two streams over lags
/// `-max_lag..=max_lag`.
pub fn max_cross_correlation(a: &[Complex64], b: &[Complex64], max_lag: usize) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let pa: f64 = a[..n].iter().map(|v| v.norm_sqr()).sum();
    let pb: f64 = b[..n].iter().map(|v| v.norm_sqr()).sum();
    if pa == 0.0 || pb == 0.0 {
        return 0.0;
    }
    let lag = max_lag.min(n - 1) as isize;
    (-lag..=lag)
        .map(|l| {
            let c: Complex64 = (0..n)
                .map(|k| a[k] * b[(k as isize + l).rem_euclid(n as isize) as usize].conj())
                .sum();
            c.norm() / (pa * pb).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Equalizes a block sampled at two samples per symbol and returns the
/// symbol-rate output. The block is treated as circular.
pub fn butterfly_equalize(sig: &DualPolSignal, cfg: &ButterflyConfig) -> Result<ButterflyOutput> {
    cfg.validate()?;
    if !sig.len().is_multiple_of(2) || sig.len() < 2 * cfg.taps {
        return Err(invalid(format!(
            "equalizer input must have an even length of at least {} samples, got {}",
            2 * cfg.taps,
            sig.len()
        )));
    }
    // CMA radius 1 per polarization.
    let power = sig.intensities().iter().sum::<f64>() / sig.len() as f64;
    if power == 0.0 {
        return Err(invalid("equalizer input has zero power"));
    }
    let norm = (2.0 / power).sqrt();
    let x: Vec<Complex64> = sig.x().iter().map(|v| v * norm).collect();
    let y: Vec<Complex64> = sig.y().iter().map(|v| v * norm).collect();
    let input = Inputs { x: &x, y: &y };
    let symbols = sig.len() / 2;

    let mut h = ButterflyTaps::center_spike(cfg.taps);
    let mut singularity_reset = false;
    for pass in 0..cfg.passes {
        adapt_pass(&mut h, &input, symbols, cfg.step_size);
        if pass == 0 {
            let (ox, oy) = run_fixed(&h, &input, symbols.min(4096));
            if max_cross_correlation(&ox, &oy, cfg.taps) > 0.5 {
                h.reinit_second_row();
                singularity_reset = true;
            }
        }
    }
    let (ox, oy) = run_fixed(&h, &input, symbols);
    Ok(ButterflyOutput {
        signal: DualPolSignal::new(ox, oy, sig.sample_rate() / 2.0)?,
        taps: h,
        singularity_reset,
    })
}
