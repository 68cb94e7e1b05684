//! Frequency-offset removal and fourth-power (Viterbi & Viterbi) phase
//! tracking for QPSK at one sample per symbol.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use super::metrics::align;
use super::tx::QpskReference;
use crate::error::{invalid, Error, Result};
use crate::sigkit::DualPolSignal;
use crate::spectral::fft_any_in_place;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierConfig {
    /// Bd; equals the sample rate of the symbol streams.
    pub symbol_rate: f64,
    /// Symbols on each side of the current one in the phase estimate.
    pub half_window: usize,
    /// Largest offset accepted, Hz; at most a quarter of the fourth-power
    /// Nyquist range (`symbol_rate / 8`).
    pub max_offset: Option<f64>,
}

impl CarrierConfig {
    pub fn new(symbol_rate: f64) -> Self {
        Self {
            symbol_rate,
            half_window: 16,
            max_offset: None,
        }
    }

    fn offset_limit(&self) -> Result<f64> {
        let nyquist = self.symbol_rate / 8.0;
        match self.max_offset {
            None => Ok(nyquist),
            Some(m) if m > 0.0 && m <= nyquist => Ok(m),
            Some(m) => Err(invalid(format!(
                "max offset {m} Hz must lie in (0, {nyquist}] Hz"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CarrierOutput {
    pub signal: DualPolSignal,
    /// Estimated and removed offset, Hz.
    pub frequency_offset: f64,
    /// Quarter turns removed from each stream to resolve the ambiguity.
    pub quadrant: [u8; 2],
}

/// Estimates the carrier offset from the peak of the fourth-power spectrum
/// summed over both streams.
pub fn estimate_frequency_offset(streams: [&[Complex64]; 2], cfg: &CarrierConfig) -> Result<f64> {
    let limit = cfg.offset_limit()?;
    let n = streams[0].len();
    let padded = (4 * n).next_power_of_two();
    let mut spectrum = vec![0.0f64; padded];
    for s in streams {
        let mut buf = vec![Complex64::new(0.0, 0.0); padded];
        for (b, v) in buf.iter_mut().zip(s) {
            *b = v.powu(4);
        }
        fft_any_in_place(&mut buf);
        for (acc, v) in spectrum.iter_mut().zip(&buf) {
            *acc += v.norm_sqr();
        }
    }
    let (peak, &pv) = spectrum
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let mean = spectrum.iter().sum::<f64>() / padded as f64;
    if !(pv > 10.0 * mean) {
        return Err(Error::EstimationFailure(
            "no fourth-power spectral line found".into(),
        ));
    }
    let at = |k: isize| spectrum[k.rem_euclid(padded as isize) as usize];
    let (l, c, r) = (at(peak as isize - 1), pv, at(peak as isize + 1));
    let denom = l - 2.0 * c + r;
    let delta = if denom != 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    let mut bin = peak as f64 + delta;
    if bin > padded as f64 / 2.0 {
        bin -= padded as f64;
    }
    let offset = bin * cfg.symbol_rate / padded as f64 / 4.0;
    if offset.abs() > limit {
        return Err(Error::EstimationFailure(format!(
            "offset estimate {offset:.3e} Hz exceeds the {limit:.3e} Hz limit"
        )));
    }
    Ok(offset)
}

/// Sliding-window fourth-power phase estimate, unwrapped across the
/// quarter-turn ambiguity.
pub fn viterbi_viterbi_phase(s: &[Complex64], half_window: usize) -> Vec<f64> {
    let n = s.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for v in s {
        let last = *prefix.last().unwrap();
        prefix.push(last + v.powu(4));
    }
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    for k in 0..n {
        let lo = k.saturating_sub(half_window);
        let hi = (k + half_window + 1).min(n);
        let sum = prefix[hi] - prefix[lo];
        let raw = (-sum).arg() / 4.0;
        let theta = if k == 0 {
            raw
        } else {
            raw + FRAC_PI_2 * ((prev - raw) / FRAC_PI_2).round()
        };
        out.push(theta);
        prev = theta;
    }
    out
}

fn rotate_quadrant(s: &mut [Complex64], k: u8) {
    let rot = Complex64::cis(-(k as f64) * FRAC_PI_2);
    s.iter_mut().for_each(|v| *v *= rot);
}

/// Removes the carrier offset and phase noise, then resolves the residual
/// quarter-turn ambiguity of each stream against the transmitted symbols.
pub fn carrier_recover(
    symbols: &DualPolSignal,
    reference: &QpskReference,
    cfg: &CarrierConfig,
) -> Result<CarrierOutput> {
    if !(cfg.symbol_rate > 0.0) {
        return Err(invalid("symbol rate must be positive"));
    }
    if symbols.len() != reference.x.len() {
        return Err(Error::LengthMismatch {
            expected: reference.x.len(),
            actual: symbols.len(),
        });
    }
    let offset = estimate_frequency_offset([symbols.x(), symbols.y()], cfg)?;
    let mut out = symbols.clone();
    {
        let (x, y) = out.pols_mut();
        for pol in [x, y] {
            for (k, v) in pol.iter_mut().enumerate() {
                *v *= Complex64::cis(-2.0 * PI * offset * k as f64 / cfg.symbol_rate);
            }
            let theta = viterbi_viterbi_phase(pol, cfg.half_window);
            for (v, t) in pol.iter_mut().zip(theta) {
                *v *= Complex64::cis(-t);
            }
        }
    }
    let al = align([out.x(), out.y()], [&reference.x, &reference.y], true)?;
    {
        let (x, y) = out.pols_mut();
        rotate_quadrant(x, al.quadrant[0]);
        rotate_quadrant(y, al.quadrant[1]);
    }
    Ok(CarrierOutput {
        signal: out,
        frequency_offset: offset,
        quadrant: al.quadrant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::metrics::{add_awgn, evaluate};
    use crate::modem::tx::{modulate_pm_qpsk, TxConfig};

    fn reference(n: usize) -> QpskReference {
        modulate_pm_qpsk(&TxConfig {
            num_symbols: n,
            ..TxConfig::default()
        })
        .unwrap()
        .1
    }

    fn streams(r: &QpskReference, f: impl Fn(usize, Complex64) -> Complex64) -> DualPolSignal {
        let x = r.x.iter().enumerate().map(|(k, &s)| f(k, s)).collect();
        let y = r.y.iter().enumerate().map(|(k, &s)| f(k, s)).collect();
        DualPolSignal::new(x, y, 28e9).unwrap()
    }

    #[test]
    fn zero_offset_is_identity_up_to_quadrant() {
        let r = reference(4096);
        let j = Complex64::new(0.0, 1.0);
        let sig = streams(&r, |_, s| s * j);
        let out = carrier_recover(&sig, &r, &CarrierConfig::new(28e9)).unwrap();
        assert_eq!(out.quadrant, [1, 1]);
        assert!(out.frequency_offset.abs() < 1e5);
        for (a, b) in out.signal.x().iter().zip(&r.x) {
            assert!((a - b).norm() < 1e-3);
        }
    }

    #[test]
    fn removes_one_gigahertz() {
        let r = reference(8192);
        let sig = streams(&r, |k, s| {
            s * Complex64::cis(2.0 * PI * 1e9 * k as f64 / 28e9 + 0.3)
        });
        let out = carrier_recover(&sig, &r, &CarrierConfig::new(28e9)).unwrap();
        assert!(
            (out.frequency_offset - 1e9).abs() < 1e6,
            "{}",
            out.frequency_offset
        );
        let m = evaluate([out.signal.x(), out.signal.y()], &r, 0).unwrap();
        assert!(m.evm.unwrap() < 2.0, "{:?}", m.evm);
        assert_eq!(m.ber, 0.0);
    }

    #[test]
    fn offset_beyond_limit_fails() {
        let r = reference(4096);
        let sig = streams(&r, |k, s| s * Complex64::cis(2.0 * PI * 1e9 * k as f64 / 28e9));
        let cfg = CarrierConfig {
            max_offset: Some(0.5e9),
            ..CarrierConfig::new(28e9)
        };
        assert!(matches!(
            carrier_recover(&sig, &r, &cfg),
            Err(Error::EstimationFailure(_))
        ));
        let cfg = CarrierConfig {
            max_offset: Some(4e9),
            ..CarrierConfig::new(28e9)
        };
        assert!(matches!(
            carrier_recover(&sig, &r, &cfg),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn noise_only_input_fails() {
        let zeros = vec![Complex64::new(0.0, 0.0); 4096];
        let noise = add_awgn(&zeros, -100.0, 3);
        let noise2 = add_awgn(&zeros, -100.0, 4);
        let err = estimate_frequency_offset([&noise, &noise2], &CarrierConfig::new(28e9));
        assert!(matches!(err, Err(Error::EstimationFailure(_))));
    }

    #[test]
    fn tracks_slow_phase_drift() {
        let r = reference(4096);
        let sig = streams(&r, |k, s| s * Complex64::cis(0.002 * k as f64));
        let out = carrier_recover(&sig, &r, &CarrierConfig::new(28e9)).unwrap();
        let m = evaluate([out.signal.x(), out.signal.y()], &r, 0).unwrap();
        assert_eq!(m.ber, 0.0);
        assert!(m.evm.unwrap() < 2.0);
    }
}
