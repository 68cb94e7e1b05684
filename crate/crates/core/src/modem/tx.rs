use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prbs::generate_prbs;
use crate::error::{invalid, Result};
use crate::sigkit::DualPolSignal;
use crate::spectral::{fft_any_in_place, frequencies_any, ifft_any_in_place};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pulse {
    /// Each symbol held for `samples_per_symbol` samples.
    Nrz,
    /// Nyquist raised-cosine spectrum with the given roll-off.
    RaisedCosine(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxConfig {
    /// Bd
    pub symbol_rate: f64,
    pub prbs_order: u32,
    pub samples_per_symbol: usize,
    pub pulse: Pulse,
    /// Symbols per polarization; `num_symbols · samples_per_symbol` must be a
    /// power of two.
    pub num_symbols: usize,
    pub rng_seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 28e9,
            prbs_order: 11,
            samples_per_symbol: 2,
            pulse: Pulse::RaisedCosine(0.1),
            num_symbols: 1 << 15,
            rng_seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate > 0.0) {
            return Err(invalid("symbol rate must be positive"));
        }
        if self.samples_per_symbol < 2 {
            return Err(invalid("samples_per_symbol must be >= 2"));
        }
        let len = self.num_symbols * self.samples_per_symbol;
        if len == 0 || !len.is_power_of_two() {
            return Err(invalid(format!(
                "num_symbols × samples_per_symbol = {len} must be a power of two"
            )));
        }
        if let Pulse::RaisedCosine(r) = self.pulse {
            if !(0.0..=1.0).contains(&r) {
                return Err(invalid(format!("roll-off must be in [0, 1], got {r}")));
            }
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate * self.samples_per_symbol as f64
    }

    /// Line rate over both polarizations, b/s.
    pub fn bit_rate(&self) -> f64 {
        4.0 * self.symbol_rate
    }
}

/// Transmitted symbol sequences, one per polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct QpskReference {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Gray-mapped QPSK symbol `(1 − 2b_I + j(1 − 2b_Q))/√2`.
pub fn qpsk_symbol(bit_i: u8, bit_q: u8) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(s * (1.0 - 2.0 * bit_i as f64), s * (1.0 - 2.0 * bit_q as f64))
}

/// Generates a PM-QPSK waveform from one PRBS read at four independent,
/// seed-dependent offsets (I/Q of each polarization).
pub fn modulate_pm_qpsk(cfg: &TxConfig) -> Result<(DualPolSignal, QpskReference)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mask = (1u32 << cfg.prbs_order) - 1;
    let seed_state = rng.random_range(1..=mask);
    let prbs = generate_prbs(cfg.prbs_order, seed_state)?;
    let p = prbs.len();
    let offsets: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..p));
    let pol = |oi: usize, oq: usize| -> Vec<Complex64> {
        (0..cfg.num_symbols)
            .map(|n| qpsk_symbol(prbs[(oi + n) % p], prbs[(oq + n) % p]))
            .collect()
    };
    let reference = QpskReference {
        x: pol(offsets[0], offsets[1]),
        y: pol(offsets[2], offsets[3]),
    };
    let x = shape(&reference.x, cfg);
    let y = shape(&reference.y, cfg);
    Ok((DualPolSignal::new(x, y, cfg.sample_rate())?, reference))
}

fn shape(symbols: &[Complex64], cfg: &TxConfig) -> Vec<Complex64> {
    let sps = cfg.samples_per_symbol;
    match cfg.pulse {
        Pulse::Nrz => symbols
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, sps))
            .collect(),
        Pulse::RaisedCosine(rolloff) => {
            let n = symbols.len() * sps;
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for (k, &s) in symbols.iter().enumerate() {
                buf[k * sps] = s * sps as f64;
            }
            fft_any_in_place(&mut buf);
            for (v, f) in buf.iter_mut().zip(frequencies_any(n, cfg.sample_rate())) {
                *v *= raised_cosine(f, cfg.symbol_rate, rolloff);
            }
            ifft_any_in_place(&mut buf);
            buf
        }
    }
}

/// Raised-cosine spectrum with unit passband gain.
pub fn raised_cosine(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if rolloff == 0.0 && (af - f1).abs() <= 1e-9 * symbol_rate {
        // Band edge of the brick-wall spectrum.
        0.5
    } else if af <= f1 {
        1.0
    } else if af < f2 {
        0.5 * (1.0 + (std::f64::consts::PI / (rolloff * symbol_rate) * (af - f1)).cos())
    } else {
        0.0
    }
}

/// Band-limited resampling of a circular signal to `new_len` samples
/// (zero-padding or truncating the spectrum). The sample rate scales with the
/// length.
pub fn resample(sig: &DualPolSignal, new_len: usize) -> Result<DualPolSignal> {
    if new_len == 0 {
        return Err(invalid("resampled length must be positive"));
    }
    let n = sig.len();
    let rate = sig.sample_rate() * new_len as f64 / n as f64;
    let go = |pol: &[Complex64]| {
        let mut spec = pol.to_vec();
        fft_any_in_place(&mut spec);
        let mut out = vec![Complex64::new(0.0, 0.0); new_len];
        let keep = n.min(new_len);
        // Positive frequencies (including DC), then negative ones.
        let pos = keep.div_ceil(2);
        let neg = keep - pos;
        out[..pos].copy_from_slice(&spec[..pos]);
        out[new_len - neg..].copy_from_slice(&spec[n - neg..]);
        ifft_any_in_place(&mut out);
        let scale = new_len as f64 / n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    };
    DualPolSignal::new(go(sig.x()), go(sig.y()), rate)
}

/// Emulates an ADC at `adc_rate` followed by digital resampling back to the
/// original rate.
pub fn adc_round_trip(sig: &DualPolSignal, adc_rate: f64) -> Result<DualPolSignal> {
    if !(adc_rate > 0.0) {
        return Err(invalid("ADC rate must be positive"));
    }
    let adc_len = (sig.len() as f64 * adc_rate / sig.sample_rate()).round() as usize;
    let down = resample(sig, adc_len)?;
    // Keep the nominal rate exactly.
    let (x, y, _) = resample(&down, sig.len())?.into_parts();
    DualPolSignal::new(x, y, sig.sample_rate())
}
