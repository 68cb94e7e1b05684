//! Real-operation counts per processed sample for the FFE, SSFM and ESSFM
//! inside an overlap-and-save framer, with latency and power proxies.
//!
//! Counting assumes a radix-2 FFT of `N` complex samples at `8N·log₂N`
//! operations per polarization pair, a complex product at 4 real
//! multiplications and 2 real additions, precomputed constants and a
//! lookup-table complex exponential.

use std::fmt::Write as _;

use crate::dbp::{estimate_channel_memory, Algorithm};
use crate::error::{invalid, Result};

/// Exact count `numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub numerator: u128,
    pub denominator: u128,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn less_than(&self, other: &Ratio) -> bool {
        self.numerator * other.denominator < other.numerator * self.denominator
    }

    /// Nearest integer, halves rounded up.
    pub fn rounded(&self) -> u128 {
        (2 * self.numerator + self.denominator) / (2 * self.denominator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub nc: usize,
    pub ns: usize,
    pub mults: Ratio,
    pub adds: Ratio,
    /// Cascaded FFT/IFFT pairs.
    pub latency_proxy: usize,
}

impl CostReport {
    pub fn real_mults_per_sample(&self) -> f64 {
        self.mults.value()
    }

    pub fn real_adds_per_sample(&self) -> f64 {
        self.adds.value()
    }

    /// Declared proportional to the multiplication count.
    pub fn power_proxy(&self) -> f64 {
        self.real_mults_per_sample()
    }

    pub fn label(&self) -> String {
        match self.algorithm {
            Algorithm::Ffe => "FFE".to_string(),
            a => format!("{a}-{}", self.ns),
        }
    }
}

/// Operation count for `ns` steps (ignored for the FFE) on blocks of `n`
/// samples with `m` of them discarded.
pub fn cost_per_sample(algorithm: Algorithm, n: usize, m: usize, nc: usize, ns: usize) -> Result<CostReport> {
    if !n.is_power_of_two() || n < 2 {
        return Err(invalid(format!("block length {n} must be a power of two >= 2")));
    }
    if n <= m {
        return Err(invalid(format!("block length {n} must exceed the overlap {m}")));
    }
    if ns == 0 {
        return Err(invalid("number of steps must be >= 1"));
    }
    let log2n = n.trailing_zeros() as u128;
    let (nc, ns) = match algorithm {
        Algorithm::Ffe => (0, 1),
        Algorithm::Ssfm => (0, ns),
        Algorithm::Essfm => (nc, ns),
    };
    let (mult_k, add_k) = match algorithm {
        Algorithm::Ffe => (8 * log2n + 8, 8 * log2n + 4),
        _ => (8 * log2n + 21 + nc as u128, 8 * log2n + 11 + 2 * nc as u128),
    };
    let scale = ns as u128 * n as u128;
    let denominator = (n - m) as u128;
    Ok(CostReport {
        algorithm,
        n,
        m,
        nc,
        ns,
        mults: Ratio {
            numerator: scale * mult_k,
            denominator,
        },
        adds: Ratio {
            numerator: scale * add_k,
            denominator,
        },
        latency_proxy: ns,
    })
}

/// Candidate block length with the fewest multiplications per sample; ties go
/// to the shorter block.
pub fn optimize_block_length(
    algorithm: Algorithm,
    m: usize,
    nc: usize,
    candidates: &[usize],
) -> Result<(usize, CostReport)> {
    if candidates.is_empty() {
        return Err(invalid("no candidate block lengths"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<CostReport> = None;
    for n in sorted {
        let r = cost_per_sample(algorithm, n, m, nc, 1)?;
        if best.is_none_or(|b| r.mults.less_than(&b.mults)) {
            best = Some(r);
        }
    }
    let best = best.expect("non-empty candidates");
    Ok((best.n, best))
}

/// One-step costs against `N = ratio·M` for fixed memory.
pub fn sweep_block_length(
    algorithms: &[Algorithm],
    m: usize,
    nc: usize,
    ratios: &[usize],
) -> Result<Vec<CostReport>> {
    let mut rows = Vec::new();
    for &ratio in ratios {
        for &a in algorithms {
            rows.push(cost_per_sample(a, ratio * m, m, nc, 1)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthRow {
    pub length_km: f64,
    pub report: CostReport,
}

/// One-step costs against link length with the memory estimated from the
/// dispersion and `N = 8M`.
pub fn sweep_link_length(
    algorithms: &[Algorithm],
    lengths_km: &[f64],
    beta2_mag: f64,
    bandwidth: f64,
    nc: usize,
) -> Result<Vec<LengthRow>> {
    let mut rows = Vec::new();
    for &length_km in lengths_km {
        if !(length_km > 0.0) {
            return Err(invalid(format!("link length must be positive, got {length_km}")));
        }
        let m = estimate_channel_memory(beta2_mag, length_km, bandwidth);
        for &a in algorithms {
            rows.push(LengthRow {
                length_km,
                report: cost_per_sample(a, 8 * m, m, nc, 1)?,
            });
        }
    }
    Ok(rows)
}

/// Multiplications of each report as a percentage of `reference`.
pub fn relative_pct(reports: &[CostReport], reference: &CostReport) -> Vec<f64> {
    let r = reference.real_mults_per_sample();
    reports
        .iter()
        .map(|c| 100.0 * c.real_mults_per_sample() / r)
        .collect()
}

/// FFE, one-step ESSFM and 16/20-step SSFM at the given framing, normalized
/// to the 20-step SSFM.
pub fn inset_table(n: usize, m: usize, nc: usize) -> Result<Vec<(CostReport, f64)>> {
    let reports = vec![
        cost_per_sample(Algorithm::Ffe, n, m, 0, 1)?,
        cost_per_sample(Algorithm::Essfm, n, m, nc, 1)?,
        cost_per_sample(Algorithm::Ssfm, n, m, 0, 16)?,
        cost_per_sample(Algorithm::Ssfm, n, m, 0, 20)?,
    ];
    let pct = relative_pct(&reports, &reports[3]);
    Ok(reports.into_iter().zip(pct).collect())
}

pub const CSV_HEADER: &str =
    "algorithm,N,M,Nc,Ns,mults_per_sample,adds_per_sample,latency_proxy,relative_pct";

/// One CSV line (no newline) in the `CSV_HEADER` layout; `relative_pct` is
/// left empty when absent.
pub fn csv_row(r: &CostReport, relative_pct: Option<f64>) -> String {
    let mut s = format!(
        "{},{},{},{},{},{:.4},{:.4},{},",
        r.algorithm.name(),
        r.n,
        r.m,
        r.nc,
        r.ns,
        r.real_mults_per_sample(),
        r.real_adds_per_sample(),
        r.latency_proxy
    );
    if let Some(p) = relative_pct {
        let _ = write!(s, "{p:.2}");
    }
    s
}

/// CSV of a link-length sweep with a leading `length_km` column; percentages
/// are relative to the FFE at the same length when it is present.
pub fn length_sweep_csv(rows: &[LengthRow]) -> String {
    let mut out = format!("length_km,{CSV_HEADER}\n");
    for row in rows {
        let ffe = rows
            .iter()
            .find(|o| o.length_km == row.length_km && o.report.algorithm == Algorithm::Ffe);
        let pct = ffe.map(|f| 100.0 * row.report.real_mults_per_sample() / f.report.real_mults_per_sample());
        let _ = writeln!(out, "{},{}", row.length_km, csv_row(&row.report, pct));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct floating-point evaluation of the closed forms.
    fn closed_form(a: Algorithm, n: f64, m: f64, nc: f64, ns: f64) -> (f64, f64) {
        let l = n.log2();
        match a {
            Algorithm::Ffe => (n * (8.0 * l + 8.0) / (n - m), n * (8.0 * l + 4.0) / (n - m)),
            Algorithm::Ssfm => (
                ns * n * (8.0 * l + 21.0) / (n - m),
                ns * n * (8.0 * l + 11.0) / (n - m),
            ),
            Algorithm::Essfm => (
                ns * n * (8.0 * l + 21.0 + nc) / (n - m),
                ns * n * (8.0 * l + 11.0 + 2.0 * nc) / (n - m),
            ),
        }
    }

    #[test]
    fn quoted_counts() {
        let ffe = cost_per_sample(Algorithm::Ffe, 8192, 1024, 0, 1).unwrap();
        assert_eq!(ffe.real_mults_per_sample(), 128.0);
        assert_eq!(ffe.mults.rounded(), 128);
        assert_eq!(ffe.latency_proxy, 1);
        let essfm = cost_per_sample(Algorithm::Essfm, 8192, 1024, 32, 1).unwrap();
        assert!((essfm.real_mults_per_sample() - 179.4286).abs() < 1e-4);
        assert_eq!(essfm.mults.rounded(), 179);
        let s16 = cost_per_sample(Algorithm::Ssfm, 8192, 1024, 0, 16).unwrap();
        let s20 = cost_per_sample(Algorithm::Ssfm, 8192, 1024, 0, 20).unwrap();
        assert_eq!(s16.mults.rounded(), 2286);
        assert_eq!(s20.mults.rounded(), 2857);
        assert_eq!(s20.latency_proxy, 20);
        assert_eq!(s20.latency_proxy / essfm.latency_proxy, 20);
        assert_eq!(
            (s20.real_mults_per_sample() / essfm.real_mults_per_sample()).round(),
            16.0
        );
        assert_eq!(s20.power_proxy(), s20.real_mults_per_sample());
    }

    #[test]
    fn inset_percentages() {
        let t = inset_table(8192, 1024, 32).unwrap();
        let want = [4.5, 6.3, 80.0, 100.0];
        for ((_, pct), w) in t.iter().zip(want) {
            assert!((pct - w).abs() < 0.2, "{pct} vs {w}");
        }
        let labels: Vec<String> = t.iter().map(|(r, _)| r.label()).collect();
        assert_eq!(labels, ["FFE", "ESSFM-1", "SSFM-16", "SSFM-20"]);
    }

    #[test]
    fn overlap_must_be_smaller_than_block() {
        assert!(cost_per_sample(Algorithm::Ffe, 1024, 1024, 0, 1).is_err());
        assert!(cost_per_sample(Algorithm::Ffe, 1000, 10, 0, 1).is_err());
        assert!(cost_per_sample(Algorithm::Ssfm, 1024, 10, 0, 0).is_err());
    }

    #[test]
    fn eight_m_is_near_optimal() {
        let m = 1024;
        let candidates: Vec<usize> = (1..=5).map(|k| m << k).collect();
        for (alg, nc) in [(Algorithm::Essfm, 32), (Algorithm::Ssfm, 0), (Algorithm::Ffe, 0)] {
            let (_, best) = optimize_block_length(alg, m, nc, &candidates).unwrap();
            let at8 = cost_per_sample(alg, 8 * m, m, nc, 1).unwrap();
            assert!(at8.real_mults_per_sample() <= 1.05 * best.real_mults_per_sample());
        }
    }

    #[test]
    fn optimum_without_overlap_is_smallest_block() {
        let (n, _) = optimize_block_length(Algorithm::Essfm, 0, 8, &[4096, 256, 1024]).unwrap();
        assert_eq!(n, 256);
        assert!(optimize_block_length(Algorithm::Ffe, 16, 0, &[]).is_err());
    }

    #[test]
    fn ties_prefer_shorter_blocks() {
        // 4·48/3 = 8·56/7 = 64.
        let (n, r) = optimize_block_length(Algorithm::Essfm, 1, 11, &[8, 4]).unwrap();
        assert_eq!(n, 4);
        assert_eq!(r.real_mults_per_sample(), 64.0);
    }

    #[test]
    fn optimum_depends_on_algorithm() {
        let m = 64;
        let candidates: Vec<usize> = (1..=10).map(|k| m << k).collect();
        let (n_essfm, _) = optimize_block_length(Algorithm::Essfm, m, 64, &candidates).unwrap();
        let (n_ffe, _) = optimize_block_length(Algorithm::Ffe, m, 0, &candidates).unwrap();
        assert!(n_essfm >= n_ffe);
    }

    #[test]
    fn ratios_at_two_thousand_km() {
        let rows = sweep_link_length(
            &[Algorithm::Ffe, Algorithm::Ssfm, Algorithm::Essfm],
            &[2000.0],
            21.0,
            50e9,
            32,
        )
        .unwrap();
        assert_eq!(rows[0].report.m, 1024);
        assert_eq!(rows[0].report.n, 8192);
        let [ffe, ssfm, essfm] = [0, 1, 2].map(|i| rows[i].report.real_mults_per_sample());
        assert!((1.20..=1.30).contains(&(essfm / ssfm)));
        assert!((1.35..=1.45).contains(&(essfm / ffe)));
    }

    #[test]
    fn ratio_decreases_with_length() {
        let lengths: Vec<f64> = (1..=20).map(|k| 250.0 * k as f64).collect();
        let rows = sweep_link_length(&[Algorithm::Ssfm, Algorithm::Essfm], &lengths, 21.0, 50e9, 32).unwrap();
        let ratios: Vec<f64> = rows
            .chunks(2)
            .map(|p| p[1].report.real_mults_per_sample() / p[0].report.real_mults_per_sample())
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] <= w[0]));
        assert!(ratios[0] > *ratios.last().unwrap());
    }

    #[test]
    fn csv_layout() {
        let t = inset_table(8192, 1024, 32).unwrap();
        let line = csv_row(&t[1].0, Some(t[1].1));
        assert_eq!(line, "ESSFM,8192,1024,32,1,179.4286,204.5714,1,6.28");
        let rows = sweep_link_length(&[Algorithm::Ffe, Algorithm::Ssfm], &[1000.0], 21.0, 50e9, 0).unwrap();
        let csv = length_sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], format!("length_km,{CSV_HEADER}"));
        assert!(lines[1].starts_with("1000,FFE,4096,512,0,1,"));
        assert!(lines[1].ends_with(",100.00"));
    }

    proptest! {
        #[test]
        fn matches_closed_form(log2n in 4u32..20, mfrac in 0.0f64..0.95, nc in 0usize..64, ns in 1usize..40) {
            let n = 1usize << log2n;
            let m = ((n as f64) * mfrac) as usize;
            for a in [Algorithm::Ffe, Algorithm::Ssfm, Algorithm::Essfm] {
                let r = cost_per_sample(a, n, m, nc, ns).unwrap();
                let (mu, ad) = closed_form(a, n as f64, m as f64, nc as f64, ns as f64);
                prop_assert!((r.real_mults_per_sample() - mu).abs() <= 1e-9 * mu);
                prop_assert!((r.real_adds_per_sample() - ad).abs() <= 1e-9 * ad);
                prop_assert!(r.real_mults_per_sample() >= 0.0);
            }
        }

        #[test]
        fn essfm_without_taps_is_ssfm(log2n in 4u32..20, mfrac in 0.0f64..0.95, ns in 1usize..40) {
            let n = 1usize << log2n;
            let m = ((n as f64) * mfrac) as usize;
            let a = cost_per_sample(Algorithm::Essfm, n, m, 0, ns).unwrap();
            let b = cost_per_sample(Algorithm::Ssfm, n, m, 0, ns).unwrap();
            prop_assert_eq!(a.mults, b.mults);
            prop_assert_eq!(a.adds, b.adds);
        }

        #[test]
        fn unimodal_in_block_length(log2m in 0u32..14, nc in 0usize..64) {
            let m = 1usize << log2m;
            let costs: Vec<f64> = (1..=12)
                .map(|k| cost_per_sample(Algorithm::Essfm, m << k, m, nc, 1).unwrap().real_mults_per_sample())
                .collect();
            let argmin = costs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            prop_assert!(costs[..=argmin].windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(costs[argmin..].windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
