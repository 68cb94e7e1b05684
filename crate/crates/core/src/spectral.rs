//! FFT helpers and the overlap-and-save block framer.
//!
//! Transforms are unnormalized in the forward direction; the `1/N` factor is
//! applied by the inverse so that `ifft(fft(x)) == x`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::sigkit::DualPolSignal;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<usize, Plans>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    if let Some(p) = map.get(&n) {
        return p.clone();
    }
    let p = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    map.insert(n, p.clone());
    p
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid(format!("FFT length must be a power of two, got {n}")));
    }
    Ok(())
}

/// In-place forward transform of any length (used by the resampler).
pub(crate) fn fft_any_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    plans(buf.len()).0.process(buf);
}

/// In-place normalized inverse transform of any length.
pub(crate) fn ifft_any_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    plans(buf.len()).1.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    check_pow2(buf.len())?;
    fft_any_in_place(buf);
    Ok(())
}

pub fn ifft_in_place(buf: &mut [Complex64]) -> Result<()> {
    check_pow2(buf.len())?;
    ifft_any_in_place(buf);
    Ok(())
}

pub fn fft(block: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut v = block.to_vec();
    fft_in_place(&mut v)?;
    Ok(v)
}

pub fn ifft(block: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut v = block.to_vec();
    ifft_in_place(&mut v)?;
    Ok(v)
}

/// Bin frequencies in FFT output order: `0, Δf, …, (n/2−1)Δf, −(n/2)Δf, …, −Δf`.
pub fn fft_frequencies(n: usize, sample_rate: f64) -> Result<Vec<f64>> {
    check_pow2(n)?;
    if !(sample_rate > 0.0) {
        return Err(invalid(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    Ok(frequencies_any(n, sample_rate))
}

pub(crate) fn frequencies_any(n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            if k < n.div_ceil(2) {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            }
        })
        .collect()
}

/// Block length and overlap of an overlap-and-save run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapPlan {
    block_len: usize,
    overlap: usize,
}

/// One block of an overlap-and-save run. The processed block contributes
/// `output_len` samples starting at `output_start`, taken from block offset
/// `keep_from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub input_start: isize,
    pub output_start: usize,
    pub output_len: usize,
    pub keep_from: usize,
}

impl OverlapPlan {
    pub fn new(block_len: usize, overlap: usize) -> Result<Self> {
        check_pow2(block_len)?;
        if overlap >= block_len {
            return Err(invalid(format!(
                "overlap {overlap} must be smaller than block length {block_len}"
            )));
        }
        Ok(Self { block_len, overlap })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// Output samples contributed by each block, `N − M`.
    pub fn usable(&self) -> usize {
        self.block_len - self.overlap
    }

    /// Samples discarded at the leading edge of every block.
    pub fn lead(&self) -> usize {
        self.overlap / 2
    }

    /// Blocks needed to produce output samples `window` of a `len`-sample signal.
    pub fn segments(&self, len: usize, window: Range<usize>) -> Vec<Segment> {
        let usable = self.usable();
        let window = window.start.min(len)..window.end.min(len);
        if window.is_empty() {
            return Vec::new();
        }
        let first = window.start / usable;
        let last = (window.end - 1) / usable;
        (first..=last)
            .map(|b| {
                let block_out = b * usable;
                let out_start = block_out.max(window.start);
                let out_end = (block_out + usable).min(window.end);
                Segment {
                    input_start: block_out as isize - self.lead() as isize,
                    output_start: out_start,
                    output_len: out_end - out_start,
                    keep_from: self.lead() + (out_start - block_out),
                }
            })
            .collect()
    }
}

/// Runs `processor` over overlapping blocks of `sig` and stitches the central
/// `N − M` samples of every processed block back together.
///
/// The input is extended cyclically, so the first and last `M/2` output
/// samples assume a periodic signal. Blocks are processed in parallel; the
/// result does not depend on the number of worker threads.
pub fn overlap_save_run<F>(sig: &DualPolSignal, plan: OverlapPlan, processor: F) -> Result<DualPolSignal>
where
    F: Fn(&mut DualPolSignal) + Sync,
{
    let mut out = overlap_save_multi(sig, plan, 0..sig.len(), |mut block| {
        processor(&mut block);
        vec![block]
    })?;
    Ok(out.remove(0))
}

/// Generalized framer: `processor` maps one input block to any fixed number
/// of output blocks (for instance a processed block plus its derivatives),
/// each of which is stitched separately. Only the output samples in `window`
/// are produced.
pub fn overlap_save_multi<F>(
    sig: &DualPolSignal,
    plan: OverlapPlan,
    window: Range<usize>,
    processor: F,
) -> Result<Vec<DualPolSignal>>
where
    F: Fn(DualPolSignal) -> Vec<DualPolSignal> + Sync,
{
    if window.start >= window.end || window.end > sig.len() {
        return Err(invalid(format!(
            "output window {window:?} invalid for signal of length {}",
            sig.len()
        )));
    }
    let segments = plan.segments(sig.len(), window.clone());
    let processed: Vec<Vec<DualPolSignal>> = segments
        .par_iter()
        .map(|seg| processor(sig.cyclic_window(seg.input_start, plan.block_len())))
        .collect();

    let outputs = processed.first().map_or(0, Vec::len);
    let out_len = window.end - window.start;
    let mut result = Vec::with_capacity(outputs);
    for o in 0..outputs {
        let mut x = Vec::with_capacity(out_len);
        let mut y = Vec::with_capacity(out_len);
        for (seg, blocks) in segments.iter().zip(&processed) {
            let b = &blocks[o];
            debug_assert_eq!(b.len(), plan.block_len(), "block processor changed block length");
            let keep = seg.keep_from..seg.keep_from + seg.output_len;
            x.extend_from_slice(&b.x()[keep.clone()]);
            y.extend_from_slice(&b.y()[keep]);
        }
        result.push(DualPolSignal::new(x, y, sig.sample_rate())?);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn random_signal(n: usize, seed: u64) -> DualPolSignal {
        DualPolSignal::new(random_vec(n, seed), random_vec(n, seed + 7777), 1.0e9).unwrap()
    }

    // O(N^2) reference transform.
    fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(m, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * m) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_examples() {
        let imp = fft(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(imp.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let cst = fft(&[c(1.0, 0.0); 4]).unwrap();
        assert!((cst[0] - c(4.0, 0.0)).norm() < 1e-15);
        assert!(cst[1..].iter().all(|v| v.norm() < 1e-15));
        assert!(fft(&[c(1.0, 0.0); 6]).is_err());
        assert!(ifft(&[]).is_err());
    }

    #[test]
    fn fft_matches_direct_dft() {
        for seed in 0..5 {
            let x = random_vec(8, seed);
            let fast = fft(&x).unwrap();
            let slow = direct_dft(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn frequency_layout() {
        assert_eq!(fft_frequencies(4, 4.0).unwrap(), vec![0.0, 1.0, -2.0, -1.0]);
        let f = fft_frequencies(8, 50e9).unwrap();
        assert_eq!(f[1], 6.25e9);
        let max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(max, 25e9);
        assert!(fft_frequencies(6, 1.0).is_err());
        assert!(fft_frequencies(8, 0.0).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(OverlapPlan::new(8, 8).is_err());
        assert!(OverlapPlan::new(12, 2).is_err());
        let p = OverlapPlan::new(16, 4).unwrap();
        assert_eq!(p.usable(), 12);
        assert_eq!(p.lead(), 2);
    }

    #[test]
    fn identity_processor_is_exact() {
        let sig = random_signal(1000, 1);
        for (n, m) in [(64, 16), (64, 0), (32, 31), (2048, 100)] {
            let plan = OverlapPlan::new(n, m).unwrap();
            let out = overlap_save_run(&sig, plan, |_| {}).unwrap();
            assert_eq!(out, sig);
        }
    }

    #[test]
    fn zero_overlap_is_plain_blocking() {
        let sig = random_signal(64, 2);
        let plan = OverlapPlan::new(16, 0).unwrap();
        // Reverse each block: visible only if blocks are disjoint and aligned.
        let out = overlap_save_run(&sig, plan, |b| {
            b.x_mut().reverse();
        })
        .unwrap();
        for blk in 0..4 {
            for i in 0..16 {
                assert_eq!(out.x()[blk * 16 + i], sig.x()[blk * 16 + 15 - i]);
            }
        }
    }

    // Quadratic-phase filter with a Gaussian taper at 15% of the sample rate,
    // which keeps its impulse response compact.
    fn dispersion_filter(block: &mut DualPolSignal, phase_per_hz2: f64) {
        let f = fft_frequencies(block.len(), block.sample_rate()).unwrap();
        let taper = 0.15 * block.sample_rate();
        let (x, y) = block.pols_mut();
        for pol in [x, y] {
            fft_in_place(pol).unwrap();
            for (v, fk) in pol.iter_mut().zip(&f) {
                *v *= Complex64::from_polar((-(fk / taper).powi(2)).exp(), phase_per_hz2 * fk * fk);
            }
            ifft_in_place(pol).unwrap();
        }
    }

    #[test]
    fn overlap_save_matches_whole_signal_filtering() {
        let n = 4096;
        let sig = random_signal(n, 11);
        // Group delay k*f/pi stays below 60 samples wherever the taper exceeds 1e-8.
        let k = 3.0e-16;
        let mut reference = sig.clone();
        dispersion_filter(&mut reference, k);
        let plan = OverlapPlan::new(512, 256).unwrap();
        let out = overlap_save_run(&sig, plan, |b| dispersion_filter(b, k)).unwrap();
        let num: f64 = out
            .x()
            .iter()
            .zip(reference.x())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = reference.x().iter().map(|v| v.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-6, "relative error {}", num / den);
    }

    #[test]
    fn parallel_run_is_bit_identical_to_single_thread() {
        let sig = random_signal(5000, 4);
        let plan = OverlapPlan::new(256, 64).unwrap();
        let proc = |b: &mut DualPolSignal| dispersion_filter(b, 3e-18);
        let multi = overlap_save_run(&sig, plan, proc).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| overlap_save_run(&sig, plan, proc).unwrap());
        assert_eq!(multi, single);
    }

    #[test]
    fn windowed_multi_output() {
        let sig = random_signal(300, 5);
        let plan = OverlapPlan::new(64, 16).unwrap();
        let outs = overlap_save_multi(&sig, plan, 50..170, |b| vec![b.clone(), b.scaled(2.0)]).unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!(outs[0].len(), 120);
        assert_eq!(outs[0].x(), &sig.x()[50..170]);
        assert_eq!(outs[1].x()[3], sig.x()[53] * 2.0);
        assert!(overlap_save_multi(&sig, plan, 10..10, |b| vec![b]).is_err());
    }

    proptest! {
        #[test]
        fn parseval(seed in 0u64..500, log_n in 1u32..10) {
            let n = 1usize << log_n;
            let x = random_vec(n, seed);
            let big = fft(&x).unwrap();
            let et: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ef: f64 = big.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!(((et - ef) / et).abs() < 1e-10);
            let back = ifft(&big).unwrap();
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
            }
        }

        #[test]
        fn output_length_always_matches(len in 1usize..700, log_n in 3u32..9, frac in 0.0f64..0.95) {
            let n = 1usize << log_n;
            let m = ((n as f64) * frac) as usize;
            let plan = OverlapPlan::new(n, m.min(n - 1)).unwrap();
            let sig = random_signal(len, len as u64);
            let out = overlap_save_run(&sig, plan, |b| b.scale(0.5)).unwrap();
            prop_assert_eq!(out.len(), len);
        }

        #[test]
        fn commutes_with_block_aligned_delay(seed in 0u64..50) {
            // Cyclic delay by a multiple of N - M maps blocks onto blocks.
            let plan = OverlapPlan::new(128, 32).unwrap();
            let len = plan.usable() * 6;
            let sig = random_signal(len, seed);
            let shift = plan.usable();
            let delayed = sig.cyclic_window(-(shift as isize), len);
            let proc = |b: &mut DualPolSignal| dispersion_filter(b, 2e-18);
            let a = overlap_save_run(&sig, plan, proc).unwrap();
            let b = overlap_save_run(&delayed, plan, proc).unwrap();
            let a_delayed = a.cyclic_window(-(shift as isize), len);
            for (u, v) in a_delayed.x().iter().zip(b.x()) {
                prop_assert!((u - v).norm() < 1e-12);
            }
        }
    }
}
