//! Correlation estimation and CHSH evaluation.
//!
//! Estimates come with their standard error and, crucially, with both the
//! total and the retained trial count: postselection is never allowed to
//! hide how much data it threw away.

use rand::Rng;

use crate::classical::{Direction3, ReadoutConvention, TrialRecord};
use crate::error::{Error, Result};
use crate::oracle::oracle_correlation;
use crate::rng::{self, domain};

/// The classical bound on the CHSH combination.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// The quantum (Tsirelson) ceiling, 2*sqrt(2).
pub const TSIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Sample mean of `alpha * beta` with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_total: u64,
    pub n_kept: u64,
}

impl CorrelationEstimate {
    /// Build an estimate from coincidence counts: `plus` products of +1,
    /// `minus` products of -1, out of `kept` retained and `total` generated
    /// trials. Products of retained trials are always in {-1, +1} when
    /// postselected, {-1, 0, +1} otherwise.
    pub fn from_counts(plus: u64, minus: u64, kept: u64, total: u64) -> Result<Self> {
        if kept > total || plus + minus > kept {
            return Err(Error::InvalidArgument(format!(
                "inconsistent counts: plus={plus} minus={minus} kept={kept} total={total}"
            )));
        }
        if kept == 0 {
            return Err(Error::EmptySubensemble(
                "no retained trials; the configuration rejects everything".into(),
            ));
        }
        let n = kept as f64;
        let mean = (plus as f64 - minus as f64) / n;
        let std_error = if kept < 2 {
            0.0
        } else {
            // Sample variance from counts: products are -1, 0, +1 so the sum
            // of squares is plus + minus.
            let ss = (plus + minus) as f64 - n * mean * mean;
            (ss.max(0.0) / (n - 1.0) / n).sqrt()
        };
        Ok(CorrelationEstimate {
            mean,
            std_error,
            n_total: total,
            n_kept: kept,
        })
    }
}

/// Four measurement settings defining one CHSH configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshConfig {
    pub a: Direction3,
    pub a_prime: Direction3,
    pub b: Direction3,
    pub b_prime: Direction3,
}

impl ChshConfig {
    /// The canonical four coplanar directions at successive 45-degree steps:
    /// b' at 0, a at 45, b at 90, a' at 135 degrees. Every unprimed/primed
    /// pair entering the CHSH sum with a plus sign is separated by 45
    /// degrees; the primed-primed pair by 135.
    pub fn figure_45() -> Self {
        use std::f64::consts::FRAC_PI_4;
        ChshConfig {
            b_prime: Direction3::in_plane(0.0),
            a: Direction3::in_plane(FRAC_PI_4),
            b: Direction3::in_plane(2.0 * FRAC_PI_4),
            a_prime: Direction3::in_plane(3.0 * FRAC_PI_4),
        }
    }

    /// Setting pairs in term order: (a,b), (a,b'), (a',b), (a',b').
    pub fn pairs(&self) -> [(Direction3, Direction3); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// The CHSH combination |E(a,b) + E(a,b') + E(a',b) - E(a',b')| with its
/// four signed terms and the root-sum-square propagated standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshValue {
    pub value: f64,
    pub terms: [f64; 4],
    pub std_error: f64,
}

/// Combine the four correlation estimates, the primed-primed term negated.
pub fn chsh_value(
    e_ab: &CorrelationEstimate,
    e_ab_prime: &CorrelationEstimate,
    e_a_prime_b: &CorrelationEstimate,
    e_a_prime_b_prime: &CorrelationEstimate,
) -> ChshValue {
    let terms = [
        e_ab.mean,
        e_ab_prime.mean,
        e_a_prime_b.mean,
        e_a_prime_b_prime.mean,
    ];
    let value = (terms[0] + terms[1] + terms[2] - terms[3]).abs();
    let std_error = (e_ab.std_error.powi(2)
        + e_ab_prime.std_error.powi(2)
        + e_a_prime_b.std_error.powi(2)
        + e_a_prime_b_prime.std_error.powi(2))
    .sqrt();
    ChshValue {
        value,
        terms,
        std_error,
    }
}

/// Largest CHSH value over the four possible placements of the minus sign.
/// Which term carries it is conventional, so bound checks use this maximum.
pub fn max_over_sign_placements(terms: &[f64; 4]) -> f64 {
    let [t0, t1, t2, t3] = *terms;
    [
        (t0 + t1 + t2 - t3).abs(),
        (t0 + t1 - t2 + t3).abs(),
        (t0 - t1 + t2 + t3).abs(),
        (-t0 + t1 + t2 + t3).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Average `alpha * beta` over the records of one setting pair.
///
/// With `postselect = true` only trials where both results fired enter the
/// average; an empty retained set is an error, never a silent zero.
pub fn estimate_correlation(
    records: &[TrialRecord],
    pair: (u32, u32),
    postselect: bool,
) -> Result<CorrelationEstimate> {
    let mut plus = 0u64;
    let mut minus = 0u64;
    let mut kept = 0u64;
    let mut total = 0u64;
    for r in records {
        if r.setting_a_id != pair.0 || r.setting_b_id != pair.1 {
            continue;
        }
        total += 1;
        let fired = !r.alpha.is_null() && !r.beta.is_null();
        if postselect && !fired {
            continue;
        }
        kept += 1;
        match i32::from(r.alpha.value()) * i32::from(r.beta.value()) {
            1 => plus += 1,
            -1 => minus += 1,
            _ => {}
        }
    }
    if total == 0 {
        return Err(Error::Precondition(format!(
            "no records for setting pair ({}, {})",
            pair.0, pair.1
        )));
    }
    CorrelationEstimate::from_counts(plus, minus, kept, total)
}

/// One scanned configuration with its oracle-evaluated CHSH.
#[derive(Debug, Clone)]
pub struct ScanEntry {
    pub config: ChshConfig,
    pub chsh: ChshValue,
    pub max_over_placements: f64,
}

/// Evaluate `n_configs` CHSH configurations against the quadrature oracle,
/// the canonical 45-degree figure first, then alternating random coplanar
/// and fully random 4-tuples. Sorted by descending placement maximum.
pub fn scan_classical_chsh(
    n_configs: usize,
    seed: u64,
    postselect: bool,
    convention: ReadoutConvention,
) -> Result<Vec<ScanEntry>> {
    if n_configs == 0 {
        return Err(Error::InvalidArgument("n_configs must be >= 1".into()));
    }
    let mut entries = Vec::with_capacity(n_configs);
    for idx in 0..n_configs {
        let config = if idx == 0 {
            ChshConfig::figure_45()
        } else {
            let mut rng = rng::stream(seed, domain::SCAN_CONFIG, 0, idx as u64);
            if idx % 2 == 1 {
                random_coplanar_config(&mut rng)
            } else {
                random_config(&mut rng)
            }
        };
        entries.push(evaluate_config_with_oracle(
            &config, postselect, convention,
        )?);
    }
    entries.sort_by(|a, b| {
        b.max_over_placements
            .partial_cmp(&a.max_over_placements)
            .unwrap()
    });
    Ok(entries)
}

/// Oracle-evaluate a single configuration.
pub fn evaluate_config_with_oracle(
    config: &ChshConfig,
    postselect: bool,
    convention: ReadoutConvention,
) -> Result<ScanEntry> {
    let mut terms = [0.0; 4];
    for (k, (a, b)) in config.pairs().into_iter().enumerate() {
        terms[k] = oracle_correlation(a, b, postselect, convention)?;
    }
    let value = (terms[0] + terms[1] + terms[2] - terms[3]).abs();
    Ok(ScanEntry {
        config: *config,
        chsh: ChshValue {
            value,
            terms,
            std_error: 0.0,
        },
        max_over_placements: max_over_sign_placements(&terms),
    })
}

fn random_config<R: Rng>(rng: &mut R) -> ChshConfig {
    ChshConfig {
        a: crate::classical::sample_direction(rng),
        a_prime: crate::classical::sample_direction(rng),
        b: crate::classical::sample_direction(rng),
        b_prime: crate::classical::sample_direction(rng),
    }
}

fn random_coplanar_config<R: Rng>(rng: &mut R) -> ChshConfig {
    use std::f64::consts::TAU;
    // A random plane through the origin: orthonormal pair (e1, e2).
    let e1 = crate::classical::sample_direction(rng);
    let e2 = loop {
        let raw = crate::classical::sample_direction(rng);
        let proj = raw.dot(&e1);
        let v = [
            raw.x() - proj * e1.x(),
            raw.y() - proj * e1.y(),
            raw.z() - proj * e1.z(),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 {
            break Direction3::new(v[0], v[1], v[2]).expect("nonzero by construction");
        }
    };
    let in_plane = |angle: f64| {
        Direction3::new(
            angle.cos() * e1.x() + angle.sin() * e2.x(),
            angle.cos() * e1.y() + angle.sin() * e2.y(),
            angle.cos() * e1.z() + angle.sin() * e2.z(),
        )
        .expect("unit by construction")
    };
    let angles: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() * TAU);
    ChshConfig {
        a: in_plane(angles[0]),
        a_prime: in_plane(angles[1]),
        b: in_plane(angles[2]),
        b_prime: in_plane(angles[3]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{run_block, Trit};

    fn rec(a: i8, b: i8) -> TrialRecord {
        TrialRecord {
            setting_a_id: 0,
            setting_b_id: 0,
            alpha: Trit::from_value(a).unwrap(),
            beta: Trit::from_value(b).unwrap(),
        }
    }

    #[test]
    fn constant_sample_has_zero_error() {
        let records = vec![rec(1, 1); 8];
        let e = estimate_correlation(&records, (0, 0), false).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n_kept, 8);
    }

    #[test]
    fn postselection_filters_null_results() {
        let records = vec![rec(1, 1), rec(0, 1), rec(-1, 0), rec(0, 0)];
        let e = estimate_correlation(&records, (0, 0), true).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.n_kept, 1);
        assert_eq!(e.n_total, 4);
        // Unpostselected keeps everything.
        let e = estimate_correlation(&records, (0, 0), false).unwrap();
        assert_eq!(e.n_kept, 4);
        assert_eq!(e.mean, 0.25);
    }

    #[test]
    fn empty_subensemble_is_an_error() {
        let records = vec![rec(0, 1), rec(0, 0)];
        assert!(matches!(
            estimate_correlation(&records, (0, 0), true),
            Err(Error::EmptySubensemble(_))
        ));
    }

    #[test]
    fn missing_pair_is_a_precondition_error() {
        let records = vec![rec(1, 1)];
        assert!(matches!(
            estimate_correlation(&records, (3, 3), true),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn chsh_combines_terms_with_rss_error() {
        let e = |mean: f64, se: f64| CorrelationEstimate {
            mean,
            std_error: se,
            n_total: 1,
            n_kept: 1,
        };
        let v = chsh_value(&e(1.0, 0.1), &e(1.0, 0.1), &e(1.0, 0.1), &e(-1.0, 0.1));
        assert_eq!(v.value, 4.0);
        assert!((v.std_error - 0.2).abs() < 1e-15);
        let v0 = chsh_value(&e(0.0, 0.0), &e(0.0, 0.0), &e(0.0, 0.0), &e(0.0, 0.0));
        assert_eq!(v0.value, 0.0);
    }

    #[test]
    fn placement_maximum_is_permutation_invariant() {
        let terms = [0.3, -0.1, 0.25, 0.05];
        let m = max_over_sign_placements(&terms);
        // Swapping a <-> a' permutes the terms but must not change the max.
        let swapped = [terms[2], terms[3], terms[0], terms[1]];
        assert!((m - max_over_sign_placements(&swapped)).abs() < 1e-15);
    }

    #[test]
    fn postselected_figure_reaches_four() {
        let entry = evaluate_config_with_oracle(
            &ChshConfig::figure_45(),
            true,
            ReadoutConvention::default(),
        )
        .unwrap();
        assert_eq!(entry.chsh.terms, [1.0, 1.0, 1.0, -1.0]);
        assert_eq!(entry.chsh.value, 4.0);
    }

    #[test]
    fn unpostselected_figure_respects_the_classical_bound() {
        let entry = evaluate_config_with_oracle(
            &ChshConfig::figure_45(),
            false,
            ReadoutConvention::default(),
        )
        .unwrap();
        assert!(entry.max_over_placements <= 2.0 + 1e-9);
    }

    #[test]
    fn scan_is_sorted_and_deterministic() {
        let s1 = scan_classical_chsh(21, 5, false, ReadoutConvention::default()).unwrap();
        let s2 = scan_classical_chsh(21, 5, false, ReadoutConvention::default()).unwrap();
        assert_eq!(s1.len(), 21);
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a.chsh.terms, b.chsh.terms);
        }
        for w in s1.windows(2) {
            assert!(w[0].max_over_placements >= w[1].max_over_placements);
        }
    }

    #[test]
    fn monte_carlo_matches_oracle_at_forty_five_degrees() {
        let config = ChshConfig::figure_45();
        let (a, b) = config.pairs()[0];
        let n = 200_000u64;
        let records = run_block(&[a], &[b], n, 11, ReadoutConvention::default()).unwrap();
        let est = estimate_correlation(&records, (0, 0), false).unwrap();
        let oracle = oracle_correlation(a, b, false, ReadoutConvention::default()).unwrap();
        assert!(
            (est.mean - oracle).abs() < 4.0 * est.std_error,
            "MC {} vs oracle {oracle} (se {})",
            est.mean,
            est.std_error
        );
    }
}
