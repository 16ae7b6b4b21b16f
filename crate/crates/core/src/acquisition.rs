//! Acquisition: expected improvement per surrogate, max-normalization of the
//! two score vectors, the indicator coefficient that gates between them, and
//! candidate selection over a mixed low-discrepancy/grid pool.

use thiserror::Error;

use crate::space::{Configuration, ConfigurationSpace, DomainKind, Value};
use crate::stats;
use crate::surrogate::{CausalGP, InterventionSet, SurrogateError};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("{0}")]
    Surrogate(#[from] SurrogateError),
}

/// Minimization-form expected improvement: how much a Gaussian belief
/// (mean, std) is expected to undercut the incumbent best.
pub fn expected_improvement(mean: f64, std: f64, best_so_far: f64) -> f64 {
    if std <= 0.0 {
        return (best_so_far - mean).max(0.0);
    }
    let z = (best_so_far - mean) / std;
    let ei = (best_so_far - mean) * stats::normal_cdf(z) + std * stats::normal_pdf(z);
    ei.max(0.0)
}

/// Scale a score vector into [0,1] by its maximum (all-zero stays all-zero).
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        scores.iter().map(|s| s / max).collect()
    } else {
        scores.to_vec()
    }
}

/// Indicator coefficient: 1 when the candidate's normalized warm score is
/// within `l_alpha` of the best normalized warm score.
pub fn interpolation_coeff(warm_normalized: &[f64], candidate: usize, l_alpha: f64) -> u8 {
    let best = warm_normalized.iter().cloned().fold(0.0f64, f64::max);
    u8::from(best - warm_normalized[candidate] <= l_alpha)
}

/// Combined scores for a pool: normalized warm and cold vectors, the
/// per-candidate indicator, and the gated combination. Returns the scores
/// and the argmax index (ties prefer the higher cold score, then the lower
/// index; callers with richer tie-break keys re-resolve equal maxima).
pub fn combine_scores(
    warm_raw: &[f64],
    cold_raw: &[f64],
    l_alpha: f64,
) -> (Vec<(f64, f64, u8, f64)>, usize) {
    let warm = normalize_scores(warm_raw);
    let cold = normalize_scores(cold_raw);
    let mut rows = Vec::with_capacity(warm.len());
    for i in 0..warm.len() {
        let lambda = interpolation_coeff(&warm, i, l_alpha);
        let combined = if lambda == 1 { cold[i] } else { warm[i] };
        rows.push((warm[i], cold[i], lambda, combined));
    }
    let mut best = 0usize;
    for i in 1..rows.len() {
        let (better, tie) =
            (rows[i].3 > rows[best].3, rows[i].3 == rows[best].3 && rows[i].1 > rows[best].1);
        if better || tie {
            best = i;
        }
    }
    (rows, best)
}

/// Score of one candidate as produced by candidate selection.
#[derive(Debug, Clone)]
pub struct AcquisitionScore {
    pub candidate: Configuration,
    pub warm: f64,
    pub cold: f64,
    pub lambda: u8,
    pub combined: f64,
}

/// Which surrogate and member set produced the winning score; the optimizer
/// tags the measurement's provenance with it.
#[derive(Debug, Clone)]
pub struct SelectedArm {
    pub from_cold: bool,
    pub member: InterventionSet,
}

fn best_ei(
    cgp: &CausalGP,
    cfg: &Configuration,
    best_y: f64,
) -> Result<(f64, usize), SurrogateError> {
    let mut best = (0.0f64, 0usize);
    for idx in 0..cgp.member_count() {
        let (mean, std) = cgp.posterior_member(idx, cfg)?;
        let ei = expected_improvement(mean, std, best_y);
        if idx == 0 || ei > best.0 {
            best = (ei, idx);
        }
    }
    Ok(best)
}

/// Evaluate both surrogates over the pool, normalize, gate, and pick the
/// argmax of the combined score. Ties break toward the higher cold score and
/// then the lexicographically smaller configuration.
///
/// Without a warm surrogate every warm score is zero, the indicator fires
/// everywhere, and selection reduces to the cold argmax.
pub fn select_candidate(
    cgp_warm: Option<&CausalGP>,
    cgp_cold: &CausalGP,
    pool: &[Configuration],
    l_alpha: f64,
    best_y: f64,
) -> Result<(Configuration, AcquisitionScore, SelectedArm), AcquisitionError> {
    if pool.is_empty() {
        return Err(AcquisitionError::EmptyPool);
    }
    let mut warm_raw = Vec::with_capacity(pool.len());
    let mut warm_member = Vec::with_capacity(pool.len());
    let mut cold_raw = Vec::with_capacity(pool.len());
    let mut cold_member = Vec::with_capacity(pool.len());
    for cfg in pool {
        let (w, wm) = match cgp_warm {
            Some(warm) => best_ei(warm, cfg, best_y)?,
            None => (0.0, 0),
        };
        let (c, cm) = best_ei(cgp_cold, cfg, best_y)?;
        warm_raw.push(w);
        warm_member.push(wm);
        cold_raw.push(c);
        cold_member.push(cm);
    }
    let (rows, mut best) = combine_scores(&warm_raw, &cold_raw, l_alpha);
    // Exact-tie re-resolution with the configuration key as the last resort.
    for i in 0..rows.len() {
        if i == best {
            continue;
        }
        if rows[i].3 == rows[best].3
            && rows[i].1 == rows[best].1
            && pool[i].canonical_key() < pool[best].canonical_key()
        {
            best = i;
        }
    }
    let (warm, cold, lambda, combined) = rows[best];
    let arm = match (lambda, cgp_warm) {
        (0, Some(warm_gp)) => {
            SelectedArm { from_cold: false, member: warm_gp.members()[warm_member[best]].clone() }
        }
        _ => SelectedArm { from_cold: true, member: cgp_cold.members()[cold_member[best]].clone() },
    };
    Ok((
        pool[best].clone(),
        AcquisitionScore { candidate: pool[best].clone(), warm, cold, lambda, combined },
        arm,
    ))
}

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

fn value_from_unit(domain: &DomainKind, u: f64) -> Value {
    match domain {
        DomainKind::Boolean => Value::Bool(u >= 0.5),
        DomainKind::Real { min, max } => Value::Real(min + (max - min) * u),
        DomainKind::Integer { min, max, step } => {
            let levels = ((max - min) / step + 1) as u64;
            let idx = ((u * levels as f64) as i64).clamp(0, levels as i64 - 1);
            Value::Int(min + step * idx)
        }
        DomainKind::Categorical { levels } => {
            let idx = ((u * levels.len() as f64) as usize).min(levels.len() - 1);
            Value::Level(levels[idx].clone())
        }
    }
}

/// Candidate pool: a low-discrepancy batch of full configurations (Halton
/// sequence, offset by iteration so batches differ over the run) plus grid
/// points over each warm exploration-set member completed with the incumbent
/// best values. Duplicates are removed; order is deterministic.
pub fn candidate_pool(
    space: &ConfigurationSpace,
    warm_members: &[InterventionSet],
    incumbent: &Configuration,
    batch: usize,
    iteration: u64,
) -> Vec<Configuration> {
    let mut seen = std::collections::BTreeSet::new();
    let mut pool = Vec::new();
    let mut push = |cfg: Configuration, pool: &mut Vec<Configuration>| {
        if seen.insert(cfg.canonical_key()) {
            pool.push(cfg);
        }
    };

    let start = iteration.wrapping_mul(batch as u64).wrapping_add(1);
    for i in 0..batch as u64 {
        let mut cfg = Configuration::new();
        for (d, opt) in space.options.iter().enumerate() {
            let base = HALTON_PRIMES[d % HALTON_PRIMES.len()];
            let mut u = radical_inverse(start + i, base);
            if d >= HALTON_PRIMES.len() {
                // Cranley-Patterson style deterministic shift for reused bases.
                let shift = (d / HALTON_PRIMES.len()) as f64 * 0.38196601125;
                u = (u + shift).fract();
            }
            cfg.set(&opt.name, value_from_unit(&opt.kind, u));
        }
        push(cfg, &mut pool);
    }

    for member in warm_members {
        let per_dim = if member.options.len() <= 1 { 10 } else { 5 };
        let grids: Vec<(String, Vec<Value>)> = member
            .options
            .iter()
            .filter_map(|name| {
                space.option(name).map(|d| (name.clone(), d.grid(per_dim)))
            })
            .collect();
        if grids.is_empty() {
            continue;
        }
        let mut idx = vec![0usize; grids.len()];
        loop {
            let mut cfg = incumbent.clone();
            for (d, (name, values)) in grids.iter().enumerate() {
                cfg.set(name, values[idx[d]].clone());
            }
            push(cfg, &mut pool);
            // advance mixed-radix counter
            let mut d = grids.len();
            loop {
                if d == 0 {
                    break;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < grids[d].1.len() {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    d = usize::MAX;
                    break;
                }
            }
            if d == usize::MAX {
                break;
            }
        }
    }
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::OptionDomain;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn ei_degenerate_cases() {
        assert_eq!(expected_improvement(5.0, 0.0, 5.0), 0.0);
        assert_eq!(expected_improvement(4.0, 0.0, 5.0), 1.0);
        assert_eq!(expected_improvement(6.0, 0.0, 5.0), 0.0);
    }

    #[test]
    fn ei_at_mean_equals_pdf_height() {
        let ei = expected_improvement(5.0, 1.0, 5.0);
        let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((ei - expect).abs() < 1e-9, "ei {ei}");
    }

    #[test]
    fn ei_monte_carlo_agreement() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let (mean, std, best) = (2.0, 0.7, 2.3);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let y = mean + std * stats::std_normal(&mut rng);
            acc += (best - y).max(0.0);
        }
        let mc = acc / draws as f64;
        let closed = expected_improvement(mean, std, best);
        assert!((mc - closed).abs() < 1e-3, "mc {mc} closed {closed}");
    }

    #[test]
    fn ei_increases_with_std() {
        let lo = expected_improvement(5.0, 0.5, 5.0);
        let hi = expected_improvement(5.0, 1.5, 5.0);
        assert!(hi > lo);
    }

    #[test]
    fn lambda_threshold() {
        // normalized warm scores with best 1.0: gaps 0, 0.05, 0.10, 0.30
        let warm = vec![1.0, 0.95, 0.90, 0.70];
        let lambdas: Vec<u8> =
            (0..4).map(|i| interpolation_coeff(&warm, i, 0.1)).collect();
        assert_eq!(lambdas, vec![1, 1, 1, 0]);
    }

    #[test]
    fn combined_matches_hand_case() {
        // warm [1.0, 0.95, 0.2, 0.1], cold [0.1, 0.9, 1.0, 0.2], l_α = 0.1:
        // λ = [1,1,0,0], combined = [0.1, 0.9, 0.2, 0.1] → candidate 1.
        let warm = vec![1.0, 0.95, 0.2, 0.1];
        let cold = vec![0.1, 0.9, 1.0, 0.2];
        let (rows, best) = combine_scores(&warm, &cold, 0.1);
        assert_eq!(rows.iter().map(|r| r.2).collect::<Vec<_>>(), vec![1, 1, 0, 0]);
        let combined: Vec<f64> = rows.iter().map(|r| r.3).collect();
        assert_eq!(combined, vec![0.1, 0.9, 0.2, 0.1]);
        assert_eq!(best, 1);
    }

    #[test]
    fn degenerate_all_cold_or_all_warm() {
        let warm = vec![1.0, 0.99, 0.98];
        let cold = vec![0.2, 0.9, 0.4];
        // every gap within 0.1 → all λ=1 → argmax of cold
        let (rows, best) = combine_scores(&warm, &cold, 0.1);
        assert!(rows.iter().all(|r| r.2 == 1));
        assert_eq!(best, 1);
        // l_α = 0 keeps only the warm argmax on cold; others use warm
        let warm2 = vec![0.3, 1.0, 0.5];
        let (rows2, _) = combine_scores(&warm2, &cold, 0.0);
        assert_eq!(rows2.iter().map(|r| r.2).collect::<Vec<_>>(), vec![0, 1, 0]);
    }

    #[test]
    fn normalization_preserves_argmax() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..20).map(|_| rng.random::<f64>() * 3.0).collect();
            let norm = normalize_scores(&raw);
            let argmax_raw = raw
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let argmax_norm = norm
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax_raw, argmax_norm);
            assert!(norm.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn pool_is_deterministic_valid_and_offset_by_iteration() {
        let space = ConfigurationSpace::new(
            vec![
                OptionDomain::real("a", 0.0, 1.0).unwrap(),
                OptionDomain::integer("b", 0, 6, 2).unwrap(),
                OptionDomain::categorical("c", &["x", "y", "z"]).unwrap(),
            ],
            vec![],
            vec!["obj".into()],
        )
        .unwrap();
        let incumbent = &space.sample_uniform(1, 1)[0];
        let members = vec![InterventionSet::new(vec!["a".into()])];
        let p1 = candidate_pool(&space, &members, incumbent, 64, 0);
        let p1b = candidate_pool(&space, &members, incumbent, 64, 0);
        let p2 = candidate_pool(&space, &members, incumbent, 64, 1);
        assert_eq!(p1, p1b);
        assert_ne!(p1, p2);
        for cfg in &p1 {
            assert!(space.is_valid(cfg), "invalid pool candidate {cfg:?}");
        }
        // grid completion keeps incumbent values on unassigned options
        assert!(p1
            .iter()
            .any(|c| c.get("b") == incumbent.get("b") && c.get("c") == incumbent.get("c")));
    }
}
