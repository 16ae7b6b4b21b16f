//! Numeric primitives: special functions, binning, medians, and the small
//! dense linear algebra used by the independence tests and GP fits.
//!
//! Everything here is deterministic and allocation-light; matrices are
//! row-major `Vec<f64>` since nothing in the pipeline exceeds a few hundred
//! rows.

use rand::RngExt;

/// ln Γ(x) via the Lanczos approximation (x > 0).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let gln = ln_gamma(a);
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - gln).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let gln = ln_gamma(a);
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - gln).exp() * h
}

/// Survival function of the chi-square distribution with `df` degrees of
/// freedom: P(X > x).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// Complementary error function, fractional error below 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Two-sided normal tail probability for a statistic value.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// A standard normal draw via Box-Muller; two uniforms per call keeps the
/// stream deterministic and stateless.
pub fn std_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Lower median: for even counts the smaller of the two central values.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[(v.len() - 1) / 2]
}

/// Sample mean.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (0 for fewer than two values).
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Number of discretization bins for n samples: ⌈n^(1/3)⌉ capped at 8.
pub fn bin_count(n: usize) -> usize {
    ((n as f64).powf(1.0 / 3.0).ceil() as usize).clamp(1, 8)
}

/// Assign each value to a quantile bin (0..k). Duplicate cut points collapse,
/// so the effective number of bins can be smaller than `k`.
pub fn quantile_bins(values: &[f64], k: usize) -> Vec<u32> {
    let n = values.len();
    if n == 0 || k <= 1 {
        return vec![0; n];
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut cuts: Vec<f64> = Vec::with_capacity(k - 1);
    for j in 1..k {
        let q = sorted[(j * n / k).min(n - 1)];
        if cuts.last().map(|c| *c < q).unwrap_or(true) {
            cuts.push(q);
        }
    }
    values
        .iter()
        .map(|v| cuts.iter().take_while(|c| *v >= **c).count() as u32)
        .collect()
}

/// Assign each value to an equal-width bin over a robust range
/// (mean ± 3 standard deviations, clipped to the observed extent), so a few
/// extreme samples cannot shift every bin edge.
pub fn equal_width_bins_robust(values: &[f64], k: usize) -> Vec<u32> {
    let n = values.len();
    if n == 0 || k <= 1 {
        return vec![0; n];
    }
    let m = mean(values);
    let sd = variance(values).sqrt();
    let obs_lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let obs_hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (m - 3.0 * sd).max(obs_lo);
    let hi = (m + 3.0 * sd).min(obs_hi);
    if !(hi > lo) {
        return vec![0; n];
    }
    let w = (hi - lo) / k as f64;
    values
        .iter()
        .map(|v| {
            let clamped = v.clamp(lo, hi);
            (((clamped - lo) / w) as usize).min(k - 1) as u32
        })
        .collect()
}

/// Assign each value to an equal-width bin over [min, max].
pub fn equal_width_bins(values: &[f64], k: usize) -> Vec<u32> {
    let n = values.len();
    if n == 0 || k <= 1 {
        return vec![0; n];
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; n];
    }
    let w = (hi - lo) / k as f64;
    values
        .iter()
        .map(|v| (((v - lo) / w) as usize).min(k - 1) as u32)
        .collect()
}

/// Shannon entropy (nats) of a label assignment.
pub fn entropy_of_labels(labels: &[u32]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_insert(0usize) += 1;
    }
    let n = labels.len() as f64;
    counts
        .values()
        .map(|c| {
            let p = *c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Silverman rule-of-thumb bandwidth on one coordinate, floored at 0.05.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len().max(1) as f64;
    let sd = variance(values).sqrt();
    (1.06 * sd * n.powf(-0.2)).max(0.05)
}

// ---------------------------------------------------------------------------
// Dense linear algebra on row-major Vec<f64>
// ---------------------------------------------------------------------------

/// Cholesky factorization of a symmetric positive-definite n×n matrix.
/// Returns the lower factor L with A = L·Lᵀ, or None if not PD.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve A·x = b given the lower Cholesky factor of A.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// log |A| from the lower Cholesky factor of A.
pub fn cholesky_log_det(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum()
}

/// Gauss-Jordan inverse with partial pivoting. None if singular.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if m[r * n + col].abs() > m[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if m[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                m.swap(col * n + c, pivot * n + c);
                inv.swap(col * n + c, pivot * n + c);
            }
        }
        let d = m[col * n + col];
        for c in 0..n {
            m[col * n + c] /= d;
            inv[col * n + c] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for c in 0..n {
                        m[r * n + c] -= f * m[col * n + c];
                        inv[r * n + c] -= f * inv[col * n + c];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Pearson correlation matrix of the given columns (all equal length).
/// Constant columns get unit self-correlation and zero cross-correlation.
pub fn correlation_matrix(cols: &[&[f64]]) -> Vec<f64> {
    let k = cols.len();
    let n = cols.first().map(|c| c.len()).unwrap_or(0);
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let sds: Vec<f64> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| {
            let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n.max(1) as f64;
            v.sqrt()
        })
        .collect();
    let mut r = vec![0.0; k * k];
    for i in 0..k {
        r[i * k + i] = 1.0;
        for j in (i + 1)..k {
            let mut cov = 0.0;
            for t in 0..n {
                cov += (cols[i][t] - means[i]) * (cols[j][t] - means[j]);
            }
            cov /= n.max(1) as f64;
            let denom = sds[i] * sds[j];
            let rij = if denom > 1e-300 { cov / denom } else { 0.0 };
            r[i * k + j] = rij;
            r[j * k + i] = rij;
        }
    }
    r
}

/// Fisher z statistic for a (partial) correlation r with n samples and a
/// conditioning set of size z_size: arctanh(r)·sqrt(n − z_size − 3).
pub fn fisher_z(r: f64, n: usize, z_size: usize) -> f64 {
    let clamped = r.clamp(-0.999_999, 0.999_999);
    clamped.atanh() * ((n as f64) - z_size as f64 - 3.0).sqrt()
}

/// Stable 64-bit FNV-1a hash, for reproducible derived seeds and row hashes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_matches_known_values() {
        // Γ(5) = 24
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-10);
        // P(a, x) + Q(a, x) = 1
        assert!((gamma_p(2.5, 1.7) + gamma_q(2.5, 1.7) - 1.0).abs() < 1e-12);
        // chi2 with 1 df: P(X > 3.841) ≈ 0.05
        assert!((chi2_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn normal_cdf_symmetry() {
        // erfc approximation carries ~1e-7 error
        assert!((normal_cdf(0.0) - 0.5).abs() < 2e-7);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-7);
        assert!((normal_cdf(-1.0) + normal_cdf(1.0) - 1.0).abs() < 2e-7);
    }

    #[test]
    fn fisher_z_hand_value() {
        // arctanh(0.5)·sqrt(100) = 0.5·ln(3)·10
        let expected = 0.5 * 3f64.ln() * 10.0;
        assert!((fisher_z(0.5, 103, 0) - expected).abs() < 1e-6);
    }

    #[test]
    fn lower_median_conventions() {
        assert_eq!(lower_median(&[5.0, 3.0, 9.0, 1.0, 7.0]), 5.0);
        assert_eq!(lower_median(&[4.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[4.0]), 4.0);
    }

    #[test]
    fn cholesky_round_trip() {
        // A = L Lᵀ with known L
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = cholesky_solve(&l, 2, &[1.0, 1.0]);
        // verify A x = b
        assert!((4.0 * x[0] + 2.0 * x[1] - 1.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        let det: f64 = 4.0 * 3.0 - 2.0 * 2.0;
        assert!((cholesky_log_det(&l, 2) - det.ln()).abs() < 1e-12);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn invert_identity() {
        let a = vec![2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 1.0, 0.0, 2.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quantile_bins_balance() {
        let vals: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let bins = quantile_bins(&vals, 4);
        let mut counts = [0usize; 4];
        for b in &bins {
            counts[*b as usize] += 1;
        }
        for c in counts {
            assert_eq!(c, 25);
        }
    }

    #[test]
    fn entropy_extremes() {
        assert_eq!(entropy_of_labels(&[1, 1, 1, 1]), 0.0);
        let h = entropy_of_labels(&[0, 1, 0, 1]);
        assert!((h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn std_normal_moments() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..20000).map(|_| std_normal(&mut rng)).collect();
        assert!(mean(&draws).abs() < 0.03);
        assert!((variance(&draws) - 1.0).abs() < 0.05);
    }
}
