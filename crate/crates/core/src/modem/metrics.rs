//! Hard decisions, sequence alignment and BER/Q/EVM metrics.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use super::tx::{qpsk_symbol, QpskReference};
use crate::error::{invalid, Error, Result};
use crate::spectral::{fft_any_in_place, ifft_any_in_place};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxMetrics {
    pub ber: f64,
    pub q_factor_db: f64,
    /// Percent; only available when soft symbols were evaluated.
    pub evm: Option<f64>,
    pub bits_counted: usize,
    pub errors: usize,
}

/// How received polarization streams map onto the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    /// Reference polarization matched by each received stream.
    pub source: [usize; 2],
    /// Received sample `n` corresponds to reference symbol `(n + shift) mod L`.
    pub shift: [usize; 2],
    /// Residual rotation of each stream in quarter turns.
    pub quadrant: [u8; 2],
}

/// Gray demapping: negative in-phase or quadrature component decides a one.
pub fn decide(s: Complex64) -> (u8, u8) {
    ((s.re < 0.0) as u8, (s.im < 0.0) as u8)
}

/// Bits of a symbol stream, interleaved `I, Q, I, Q, ...`.
pub fn symbols_to_bits(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|&s| {
            let (i, q) = decide(s);
            [i, q]
        })
        .collect()
}

fn bits_to_symbols(bits: &[u8]) -> Vec<Complex64> {
    bits.chunks_exact(2).map(|p| qpsk_symbol(p[0], p[1])).collect()
}

/// `c[s] = Σₙ rx[n]·conj(reference[(n + s) mod L])` for every shift `s`.
pub fn circular_correlation(rx: &[Complex64], reference: &[Complex64]) -> Result<Vec<Complex64>> {
    if rx.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: rx.len(),
        });
    }
    let mut a = reference.to_vec();
    let mut b = rx.to_vec();
    fft_any_in_place(&mut a);
    fft_any_in_place(&mut b);
    let mut d: Vec<Complex64> = a.iter().zip(&b).map(|(a, b)| a * b.conj()).collect();
    ifft_any_in_place(&mut d);
    Ok(d.into_iter().map(|v| v.conj()).collect())
}

fn best_peak(c: &[Complex64], real_only: bool) -> (usize, Complex64) {
    let score = |v: &Complex64| if real_only { v.re } else { v.norm() };
    let (idx, v) = c
        .iter()
        .enumerate()
        .max_by(|a, b| score(a.1).total_cmp(&score(b.1)).then(b.0.cmp(&a.0)))
        .expect("non-empty correlation");
    (idx, *v)
}

/// Finds the circular shift and polarization permutation maximizing the
/// correlation with the reference. With `phase_blind` the peak magnitude is
/// used and the stream's quarter-turn rotation is reported; otherwise only the
/// real part counts and `quadrant` is zero.
pub fn align(rx: [&[Complex64]; 2], reference: [&[Complex64]; 2], phase_blind: bool) -> Result<Alignment> {
    let mut peaks = [[(0usize, Complex64::new(0.0, 0.0)); 2]; 2];
    for (r, row) in peaks.iter_mut().enumerate() {
        for (s, cell) in row.iter_mut().enumerate() {
            *cell = best_peak(&circular_correlation(rx[r], reference[s])?, !phase_blind);
        }
    }
    let score = |v: Complex64| if phase_blind { v.norm() } else { v.re };
    let straight = score(peaks[0][0].1) + score(peaks[1][1].1);
    let crossed = score(peaks[0][1].1) + score(peaks[1][0].1);
    let source = if crossed > straight { [1, 0] } else { [0, 1] };
    let pick = |r: usize| peaks[r][source[r]];
    let quadrant = |v: Complex64| {
        if phase_blind {
            ((v.arg() / FRAC_PI_2).round() as i64).rem_euclid(4) as u8
        } else {
            0
        }
    };
    Ok(Alignment {
        source,
        shift: [pick(0).0, pick(1).0],
        quadrant: [quadrant(pick(0).1), quadrant(pick(1).1)],
    })
}

/// `20·log₁₀(√2·erfc⁻¹(2·BER))`; infinite for an error-free count.
pub fn q_factor_db(ber: f64) -> f64 {
    if ber <= 0.0 {
        return f64::INFINITY;
    }
    if ber >= 0.5 {
        return f64::NEG_INFINITY;
    }
    20.0 * (std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber)).log10()
}

/// Per-bit error probability of Gray-mapped QPSK in AWGN.
pub fn qpsk_ber_awgn(es_n0_db: f64) -> f64 {
    let es_n0 = 10f64.powf(es_n0_db / 10.0);
    0.5 * erfc((es_n0 / 2.0).sqrt())
}

/// Adds circular complex Gaussian noise at the requested Es/N0, where Es is the
/// measured mean symbol energy.
pub fn add_awgn(symbols: &[Complex64], es_n0_db: f64, rng_seed: u64) -> Vec<Complex64> {
    let es = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / symbols.len().max(1) as f64;
    let sigma = (es / 10f64.powf(es_n0_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    symbols
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re, im) * sigma
        })
        .collect()
}

fn check_bits(decided: [&[u8]; 2], reference: [&[u8]; 2]) -> Result<usize> {
    let len = reference[0].len();
    if len == 0 || !len.is_multiple_of(2) || reference[1].len() != len {
        return Err(invalid(
            "reference bits must hold whole symbols, equally on both polarizations",
        ));
    }
    for d in decided {
        if d.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: d.len(),
            });
        }
    }
    Ok(len / 2)
}

fn count_errors(decided: [&[u8]; 2], reference: [&[u8]; 2], al: &Alignment, skip: usize) -> usize {
    let symbols = decided[0].len() / 2;
    let mut errors = 0;
    for r in 0..2 {
        let ref_bits = reference[al.source[r]];
        for n in skip..symbols {
            let m = (n + al.shift[r]) % symbols;
            errors += (decided[r][2 * n] != ref_bits[2 * m]) as usize;
            errors += (decided[r][2 * n + 1] != ref_bits[2 * m + 1]) as usize;
        }
    }
    errors
}

fn measure_aligned(
    decided: [&[u8]; 2],
    reference: [&[u8]; 2],
    skip: usize,
) -> Result<(RxMetrics, Alignment)> {
    let symbols = check_bits(decided, reference)?;
    if skip >= symbols {
        return Err(invalid(format!(
            "skip of {skip} symbols leaves nothing to count out of {symbols}"
        )));
    }
    let rx = [bits_to_symbols(decided[0]), bits_to_symbols(decided[1])];
    let rf = [bits_to_symbols(reference[0]), bits_to_symbols(reference[1])];
    let al = align([&rx[0], &rx[1]], [&rf[0], &rf[1]], false)?;
    let errors = count_errors(decided, reference, &al, skip);
    let bits_counted = 4 * (symbols - skip);
    let ber = errors as f64 / bits_counted as f64;
    if ber >= 0.4 {
        return Err(Error::AlignmentFailure(format!(
            "best alignment still has BER {ber:.3}"
        )));
    }
    let metrics = RxMetrics {
        ber,
        q_factor_db: q_factor_db(ber),
        evm: None,
        bits_counted,
        errors,
    };
    Ok((metrics, al))
}

/// BER over both polarizations after searching circular shifts and the
/// polarization permutation. Bits are interleaved `I, Q` per symbol; the first
/// `skip` received symbols of each stream are excluded.
pub fn measure_ber(decided: [&[u8]; 2], reference: [&[u8]; 2], skip: usize) -> Result<RxMetrics> {
    measure_aligned(decided, reference, skip).map(|(m, _)| m)
}

/// Decides soft symbols and reports BER, Q and EVM against the transmitted
/// reference.
pub fn evaluate(rx: [&[Complex64]; 2], reference: &QpskReference, skip: usize) -> Result<RxMetrics> {
    let decided = [symbols_to_bits(rx[0]), symbols_to_bits(rx[1])];
    let ref_bits = [symbols_to_bits(&reference.x), symbols_to_bits(&reference.y)];
    let (mut metrics, al) = measure_aligned([&decided[0], &decided[1]], [&ref_bits[0], &ref_bits[1]], skip)?;
    let refs = [&reference.x, &reference.y];
    let (mut err, mut pow) = (0.0, 0.0);
    for r in 0..2 {
        let target = refs[al.source[r]];
        let l = target.len();
        for n in skip..l {
            let t = target[(n + al.shift[r]) % l];
            err += (rx[r][n] - t).norm_sqr();
            pow += t.norm_sqr();
        }
    }
    metrics.evm = Some(100.0 * (err / pow).sqrt());
    Ok(metrics)
}
