//! Werner's hidden-variable model.
//!
//! The hidden variable is a unit vector `r` in Hilbert space, isotropically
//! distributed. For a complete orthonormal basis, Alice's rule is
//! deterministic: the basis vector most orthogonal to `r` (smallest
//! |<r, v_mu>|) takes the value 1, every other one 0. Bob's rule is
//! probabilistic: outcome mu fires with probability |<r, v_mu>|^2.
//!
//! For a projector of rank 2 or higher Alice must first pick an arbitrary
//! privileged basis spanning the subspace and its complement; the projector's
//! value is the sum of the privileged rank-1 values. This module also houses
//! the finder for hidden vectors where the direct fine value of P_u and the
//! coarse value of P_uv disagree, and the Monte Carlo validator that compares
//! the model against the exact Werner-state probabilities.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classical::Direction3;
use crate::error::{Error, Result};
use crate::quantum::{self, joint_probability, make_state, ComplexVector, Projector, StateKind};
use crate::rng::{self, domain};

/// Scalar field of the hidden-variable sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// Real-restricted vectors (zero imaginary parts).
    Real,
    Complex,
}

/// A unit vector in C^d (or R^d when real-restricted).
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertVector {
    components: ComplexVector,
    field: Field,
}

impl HilbertVector {
    pub fn new(components: ComplexVector, field: Field) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidArgument(
                "hilbert vectors need dimension >= 2".into(),
            ));
        }
        let norm = components.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "hilbert vector must be unit norm, |v| = {norm}"
            )));
        }
        if field == Field::Real && components.iter().any(|z| z.im.abs() > 1e-14) {
            return Err(Error::Precondition(
                "real-restricted vector has nonzero imaginary parts".into(),
            ));
        }
        Ok(HilbertVector { components, field })
    }

    /// Real vector from components, normalized.
    pub fn real_normalized(components: &[f64]) -> Result<Self> {
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::InvalidArgument(
                "cannot normalize the zero vector".into(),
            ));
        }
        let v = ComplexVector::from_iterator(
            components.len(),
            components.iter().map(|&x| Complex64::new(x / norm, 0.0)),
        );
        HilbertVector::new(v, Field::Real)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn components(&self) -> &ComplexVector {
        &self.components
    }

    /// <self, other> with the conjugation on self.
    pub fn inner(&self, other: &HilbertVector) -> Complex64 {
        self.components.dotc(&other.components)
    }

    /// Componentwise complex conjugate (in the computational basis).
    pub fn conjugated(&self) -> HilbertVector {
        HilbertVector {
            components: self.components.map(|z| z.conj()),
            field: self.field,
        }
    }
}

/// A complete set of orthonormal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: Vec<HilbertVector>,
}

impl OrthonormalBasis {
    pub fn new(vectors: Vec<HilbertVector>) -> Result<Self> {
        let d = vectors
            .first()
            .ok_or_else(|| Error::InvalidArgument("basis is empty".into()))?
            .dim();
        if vectors.len() != d {
            return Err(Error::InvalidArgument(format!(
                "a complete basis of dimension {d} needs {d} vectors, got {}",
                vectors.len()
            )));
        }
        for (i, vi) in vectors.iter().enumerate() {
            if vi.dim() != d {
                return Err(Error::InvalidArgument(
                    "basis vectors differ in dimension".into(),
                ));
            }
            for (j, vj) in vectors.iter().enumerate() {
                let overlap = vi.inner(vj).norm();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (overlap - expected).abs() > 1e-10 {
                    return Err(Error::Numeric(format!(
                        "basis integrity: |<v_{i}, v_{j}>| = {overlap}, expected {expected}"
                    )));
                }
            }
        }
        Ok(OrthonormalBasis { vectors })
    }

    /// The standard computational basis of R^d.
    pub fn standard_real(d: usize) -> Self {
        let vectors = (0..d)
            .map(|k| {
                let mut v = ComplexVector::zeros(d);
                v[k] = Complex64::new(1.0, 0.0);
                HilbertVector {
                    components: v,
                    field: Field::Real,
                }
            })
            .collect();
        OrthonormalBasis { vectors }
    }

    /// Orthonormal eigenbasis {|+a>, |-a>} of `sigma . a`.
    pub fn spin_basis(a: &Direction3) -> Self {
        let theta = a.z().acos();
        let phi = a.y().atan2(a.x());
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let e_phi = Complex64::new(0.0, phi).exp();
        let plus = ComplexVector::from_vec(vec![Complex64::new(ct, 0.0), e_phi * st]);
        let minus = ComplexVector::from_vec(vec![-e_phi.conj() * st, Complex64::new(ct, 0.0)]);
        OrthonormalBasis {
            vectors: vec![
                HilbertVector {
                    components: plus,
                    field: Field::Complex,
                },
                HilbertVector {
                    components: minus,
                    field: Field::Complex,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[HilbertVector] {
        &self.vectors
    }

    pub fn vector(&self, idx: usize) -> &HilbertVector {
        &self.vectors[idx]
    }
}

/// A privileged basis together with the index subset spanning a coarse
/// projector.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivilegedDecomposition {
    pub basis: OrthonormalBasis,
    pub subspace_indices: Vec<usize>,
}

impl PrivilegedDecomposition {
    pub fn new(basis: OrthonormalBasis, subspace_indices: Vec<usize>) -> Result<Self> {
        let d = basis.dim();
        let mut seen = vec![false; d];
        for &idx in &subspace_indices {
            if idx >= d {
                return Err(Error::InvalidArgument(format!(
                    "subspace index {idx} out of range for dimension {d}"
                )));
            }
            if seen[idx] {
                return Err(Error::InvalidArgument(format!(
                    "subspace index {idx} repeated"
                )));
            }
            seen[idx] = true;
        }
        if subspace_indices.is_empty() {
            return Err(Error::InvalidArgument("subspace index set is empty".into()));
        }
        Ok(PrivilegedDecomposition {
            basis,
            subspace_indices,
        })
    }

    pub fn rank(&self) -> usize {
        self.subspace_indices.len()
    }

    /// The coarse projector defined by the subspace indices.
    pub fn projector(&self) -> Result<Projector> {
        let span: Vec<ComplexVector> = self
            .subspace_indices
            .iter()
            .map(|&i| self.basis.vector(i).components().clone())
            .collect();
        Projector::from_span(&span)
    }
}

/// Haar-uniform unit vector on the sphere of the declared field.
pub fn sample_hidden<R: Rng + ?Sized>(
    d: usize,
    field: Field,
    rng: &mut R,
) -> Result<HilbertVector> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "hidden-variable dimension must be >= 2, got {d}"
        )));
    }
    loop {
        let v = match field {
            Field::Real => ComplexVector::from_iterator(
                d,
                (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)),
            ),
            Field::Complex => ComplexVector::from_iterator(
                d,
                (0..d).map(|_| {
                    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                }),
            ),
        };
        let norm = v.norm();
        if norm > 1e-12 {
            return Ok(HilbertVector {
                components: v / Complex64::new(norm, 0.0),
                field,
            });
        }
    }
}

/// Alice's deterministic rule: index of the basis vector most orthogonal to
/// `r` (smallest |<r, v_mu>|), ties broken to the lowest index.
pub fn alice_outcome(r: &HilbertVector, basis: &OrthonormalBasis) -> usize {
    assert_eq!(
        r.dim(),
        basis.dim(),
        "hidden vector and basis dimensions differ"
    );
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (idx, v) in basis.vectors().iter().enumerate() {
        let overlap = r.inner(v).norm();
        if overlap < best_val {
            best_val = overlap;
            best = idx;
        }
    }
    best
}

/// Bob's probabilistic rule: sample index mu with probability |<r, v_mu>|^2.
pub fn bob_outcome<R: Rng + ?Sized>(
    r: &HilbertVector,
    basis: &OrthonormalBasis,
    rng: &mut R,
) -> Result<usize> {
    assert_eq!(
        r.dim(),
        basis.dim(),
        "hidden vector and basis dimensions differ"
    );
    let weights: Vec<f64> = basis
        .vectors()
        .iter()
        .map(|v| r.inner(v).norm_sqr())
        .collect();
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Numeric(format!(
            "basis integrity: Bob's outcome probabilities sum to {total}"
        )));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(idx);
        }
    }
    Ok(weights.len() - 1)
}

/// Value of the coarse projector defined by a privileged decomposition:
/// 1 iff Alice's fine outcome in the privileged basis lands in the subspace.
pub fn coarse_value(r: &HilbertVector, decomp: &PrivilegedDecomposition) -> u8 {
    let outcome = alice_outcome(r, &decomp.basis);
    u8::from(decomp.subspace_indices.contains(&outcome))
}

/// Result of the paradoxical-vector search.
#[derive(Debug, Clone)]
pub struct ParadoxSearch {
    pub vector: HilbertVector,
    /// Samples drawn until acceptance (acceptance rate ~ 1/attempts).
    pub attempts: u64,
    /// The two inequality chains at the found vector:
    /// (|r.u|, |r.z|, |r.v|) and (|r.z|, |r.x|, |r.y|).
    pub chain_uzv: [f64; 3],
    pub chain_zxy: [f64; 3],
}

/// Margin by which each strict inequality in the chains must hold.
pub const PARADOX_MARGIN: f64 = 1e-6;

/// Sample budget for the rejection search.
pub const PARADOX_MAX_SAMPLES: u64 = 10_000_000;

/// Overlap moduli of `r` with both bases, or `None` unless both strict
/// chains hold with the declared margin.
fn chains_at(
    r: &HilbertVector,
    uvz_basis: &OrthonormalBasis,
    xyz_basis: &OrthonormalBasis,
) -> Option<([f64; 3], [f64; 3])> {
    let ru = r.inner(uvz_basis.vector(0)).norm();
    let rv = r.inner(uvz_basis.vector(1)).norm();
    let rz = r.inner(uvz_basis.vector(2)).norm();
    let rx = r.inner(xyz_basis.vector(0)).norm();
    let ry = r.inner(xyz_basis.vector(1)).norm();
    let chain_one = rz - ru >= PARADOX_MARGIN && rv - rz >= PARADOX_MARGIN;
    let chain_two = rx - rz >= PARADOX_MARGIN && ry - rx >= PARADOX_MARGIN;
    (chain_one && chain_two).then_some(([ru, rz, rv], [rz, rx, ry]))
}

/// Whether both inequality chains hold at `r` with the declared margin.
pub fn paradox_chains_hold(
    r: &HilbertVector,
    uvz_basis: &OrthonormalBasis,
    xyz_basis: &OrthonormalBasis,
) -> bool {
    chains_at(r, uvz_basis, xyz_basis).is_some()
}

/// Find a hidden vector `r` with |r.u| < |r.z| < |r.v| and
/// |r.z| < |r.x| < |r.y| (both strict, margin >= 1e-6) by rejection sampling
/// the real 3-sphere. The two bases must be real, three-dimensional, and
/// share their third vector.
pub fn find_paradox(
    uvz_basis: &OrthonormalBasis,
    xyz_basis: &OrthonormalBasis,
    seed: u64,
) -> Result<ParadoxSearch> {
    if uvz_basis.dim() != 3 || xyz_basis.dim() != 3 {
        return Err(Error::Precondition(
            "paradox search needs dimension 3".into(),
        ));
    }
    for basis in [uvz_basis, xyz_basis] {
        if basis.vectors().iter().any(|v| v.field() != Field::Real) {
            return Err(Error::Precondition(
                "paradox search needs real-restricted bases".into(),
            ));
        }
    }
    let shared = uvz_basis.vector(2).inner(xyz_basis.vector(2)).norm();
    if (shared - 1.0).abs() > 1e-10 {
        return Err(Error::Precondition(format!(
            "bases must share their third vector, |<z1, z2>| = {shared}"
        )));
    }
    let mut rng = rng::stream(seed, domain::PARADOX, 0, 0);
    for attempt in 1..=PARADOX_MAX_SAMPLES {
        let r = sample_hidden(3, Field::Real, &mut rng)?;
        if let Some((chain_uzv, chain_zxy)) = chains_at(&r, uvz_basis, xyz_basis) {
            return Ok(ParadoxSearch {
                vector: r,
                attempts: attempt,
                chain_uzv,
                chain_zxy,
            });
        }
    }
    Err(Error::SearchExhausted(format!(
        "no hidden vector satisfied both chains in {PARADOX_MAX_SAMPLES} samples; \
         the basis pair is degenerate"
    )))
}

/// The canonical basis pair for the paradox: {x, y, z} standard, and
/// {u, v, z} with u = (x + y)/sqrt(2), v = (x - y)/sqrt(2).
pub fn paradox_figure_bases() -> (OrthonormalBasis, OrthonormalBasis) {
    let xyz = OrthonormalBasis::standard_real(3);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let u = HilbertVector::real_normalized(&[s, s, 0.0]).expect("unit");
    let v = HilbertVector::real_normalized(&[s, -s, 0.0]).expect("unit");
    let z = HilbertVector::real_normalized(&[0.0, 0.0, 1.0]).expect("unit");
    let uvz = OrthonormalBasis::new(vec![u, v, z]).expect("orthonormal by construction");
    (uvz, xyz)
}

/// Monte Carlo means of the fine values P_u, P_v and the coarse value P_uv
/// (privileged basis {x, y}), for isotropic real hidden vectors.
#[derive(Debug, Clone, Copy)]
pub struct AveragingCheck {
    pub p_u: (f64, f64),
    pub p_v: (f64, f64),
    pub p_uv: (f64, f64),
    pub n_samples: u64,
}

/// Estimate <P_u>, <P_v> and <P_uv> over `n_samples` isotropic draws.
/// The sum rule <P_u> + <P_v> = <P_uv> holds on average even though single
/// hidden vectors can violate the pointwise identification.
pub fn averaging_check(
    uvz_basis: &OrthonormalBasis,
    xyz_basis: &OrthonormalBasis,
    n_samples: u64,
    seed: u64,
) -> Result<AveragingCheck> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let coarse = PrivilegedDecomposition::new(xyz_basis.clone(), vec![0, 1])?;
    let counts = (0..n_samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, domain::HIDDEN_VECTOR, 0, t);
            let r = sample_hidden(3, Field::Real, &mut rng).expect("d = 3");
            let fine = alice_outcome(&r, uvz_basis);
            let c = coarse_value(&r, &coarse);
            [
                u64::from(fine == 0),
                u64::from(fine == 1),
                u64::from(c == 1),
            ]
        })
        .reduce(|| [0u64; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    let n = n_samples as f64;
    let stats = |k: u64| {
        let p = k as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    };
    Ok(AveragingCheck {
        p_u: stats(counts[0]),
        p_v: stats(counts[1]),
        p_uv: stats(counts[2]),
        n_samples,
    })
}

/// Whether Bob's vectors are conjugated (in the computational basis) before
/// his probability rule is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conjugation {
    None,
    SecondFactor,
}

impl std::fmt::Display for Conjugation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Conjugation::None => write!(f, "none"),
            Conjugation::SecondFactor => write!(f, "second-factor"),
        }
    }
}

/// One validated setting pair.
#[derive(Debug, Clone, Copy)]
pub struct ValidationRow {
    pub a: Direction3,
    pub b: Direction3,
    pub model_mean: f64,
    pub model_std_error: f64,
    pub quantum_target: f64,
    /// (model - target) / standard error.
    pub deviation_sigma: f64,
}

/// Outcome of a model-vs-quantum comparison run.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub conjugation: Conjugation,
    pub phi: f64,
    pub n_samples: u64,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    /// Largest absolute deviation over all pairs, in standard errors.
    pub fn worst_deviation_sigma(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.deviation_sigma.abs())
            .fold(0.0, f64::max)
    }
}

/// Compare the model's joint probability P(alice fires +a AND bob fires +b)
/// against Tr(rho_W (P_a x P_b)) for each setting pair.
///
/// The model average uses Bob's exact probability |<r', b>|^2 (not a sampled
/// outcome), which estimates the same mean with lower variance. Mismatches
/// are reported, never thrown.
pub fn validate_against_quantum(
    pairs: &[(Direction3, Direction3)],
    phi: f64,
    n_samples: u64,
    seed: u64,
    conjugation: Conjugation,
) -> Result<ValidationReport> {
    if n_samples < 100_000 {
        return Err(Error::InvalidArgument(format!(
            "validation needs n_samples >= 1e5, got {n_samples}"
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no setting pairs given".into()));
    }
    let rho = make_state(StateKind::WernerFamily { d: 2, phi })?;
    let alice_bases: Vec<OrthonormalBasis> = pairs
        .iter()
        .map(|(a, _)| OrthonormalBasis::spin_basis(a))
        .collect();
    let bob_vectors: Vec<HilbertVector> = pairs
        .iter()
        .map(|(_, b)| {
            let basis = OrthonormalBasis::spin_basis(b);
            match conjugation {
                Conjugation::None => basis.vector(0).clone(),
                Conjugation::SecondFactor => basis.vector(0).conjugated(),
            }
        })
        .collect();

    // Deterministic chunked accumulation of (sum, sum of squares) per pair.
    const CHUNK: u64 = 8192;
    let n_chunks = n_samples.div_ceil(CHUNK);
    let k = pairs.len();
    let chunk_sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            let mut sums = vec![0.0; k];
            let mut squares = vec![0.0; k];
            for t in lo..hi {
                let mut rng = rng::stream(seed, domain::VALIDATE, 0, t);
                let r = sample_hidden(2, Field::Complex, &mut rng).expect("d = 2");
                for (idx, basis) in alice_bases.iter().enumerate() {
                    let fires = alice_outcome(&r, basis) == 0;
                    let weight = if fires {
                        r.inner(&bob_vectors[idx]).norm_sqr()
                    } else {
                        0.0
                    };
                    sums[idx] += weight;
                    squares[idx] += weight * weight;
                }
            }
            (sums, squares)
        })
        .collect();
    let mut sums = vec![0.0; k];
    let mut squares = vec![0.0; k];
    for (s, q) in &chunk_sums {
        for i in 0..k {
            sums[i] += s[i];
            squares[i] += q[i];
        }
    }

    let n = n_samples as f64;
    let mut rows = Vec::with_capacity(k);
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        let target = joint_probability(
            &rho,
            &quantum::Projector::spin_up(&a),
            &quantum::Projector::spin_up(&b),
        )?;
        let mean = sums[idx] / n;
        let var = (squares[idx] / n - mean * mean).max(0.0) * n / (n - 1.0);
        let std_error = (var / n).sqrt();
        let deviation_sigma = if std_error > 0.0 {
            (mean - target) / std_error
        } else if (mean - target).abs() < 1e-15 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(ValidationRow {
            a,
            b,
            model_mean: mean,
            model_std_error: std_error,
            quantum_target: target,
            deviation_sigma,
        });
    }
    Ok(ValidationReport {
        conjugation,
        phi,
        n_samples,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_samples_are_unit_and_haar_moments_hold() {
        let mut rng = rng::stream(1, domain::HIDDEN_VECTOR, 9, 0);
        // Complex d=2: E|<r, e1>|^2 = 1/2. Real d=3: 1/3.
        let n = 200_000;
        let mut acc2 = 0.0;
        let mut acc3 = 0.0;
        for _ in 0..n {
            let r2 = sample_hidden(2, Field::Complex, &mut rng).unwrap();
            let r3 = sample_hidden(3, Field::Real, &mut rng).unwrap();
            assert!((r2.components().norm() - 1.0).abs() < 1e-12);
            acc2 += r2.components()[0].norm_sqr();
            acc3 += r3.components()[0].norm_sqr();
        }
        let nf = n as f64;
        // Var(|<r,e1>|^2) for complex d=2 is 1/12; for real d=3 it is 4/45.
        assert!((acc2 / nf - 0.5).abs() < 4.0 * (1.0f64 / 12.0 / nf).sqrt());
        assert!((acc3 / nf - 1.0 / 3.0).abs() < 4.0 * (4.0f64 / 45.0 / nf).sqrt());
    }

    #[test]
    fn sample_hidden_rejects_small_dimension() {
        let mut rng = rng::stream(1, domain::HIDDEN_VECTOR, 0, 0);
        assert!(sample_hidden(1, Field::Real, &mut rng).is_err());
    }

    #[test]
    fn alice_picks_the_most_orthogonal_vector() {
        let basis = OrthonormalBasis::standard_real(3);
        let r = HilbertVector::real_normalized(&[0.8, 0.6, 0.0]).unwrap();
        // Component 2 is exactly orthogonal.
        assert_eq!(alice_outcome(&r, &basis), 2);
        // r = e1: tie between components 1 and 2, broken to the lowest.
        let r = HilbertVector::real_normalized(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(alice_outcome(&r, &basis), 1);
    }

    #[test]
    fn bob_outcome_follows_born_weights() {
        let basis = OrthonormalBasis::standard_real(2);
        let mut rng = rng::stream(2, domain::BOB_SAMPLE, 0, 0);
        // r = e1: outcome 0 with probability 1.
        let r = HilbertVector::real_normalized(&[1.0, 0.0]).unwrap();
        for _ in 0..32 {
            assert_eq!(bob_outcome(&r, &basis, &mut rng).unwrap(), 0);
        }
        // Equal superposition: frequencies are 1/2 within 4 s.e.
        let r = HilbertVector::real_normalized(&[1.0, 1.0]).unwrap();
        let n = 100_000;
        let mut zero = 0u64;
        for _ in 0..n {
            if bob_outcome(&r, &basis, &mut rng).unwrap() == 0 {
                zero += 1;
            }
        }
        let p = zero as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn bob_empirical_distribution_matches_weights_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = rng::stream(3, domain::BOB_SAMPLE, 0, 0);
        let r = sample_hidden(4, Field::Complex, &mut rng).unwrap();
        let basis = {
            // Haar-ish basis by orthonormalizing random vectors.
            let mut vs: Vec<ComplexVector> = Vec::new();
            while vs.len() < 4 {
                let cand = sample_hidden(4, Field::Complex, &mut rng).unwrap();
                let mut v = cand.components().clone();
                for u in &vs {
                    let overlap = (u.adjoint() * &v)[(0, 0)];
                    v -= u * overlap;
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    vs.push(v / Complex64::new(norm, 0.0));
                }
            }
            OrthonormalBasis::new(
                vs.into_iter()
                    .map(|v| HilbertVector::new(v, Field::Complex).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        let weights: Vec<f64> = basis
            .vectors()
            .iter()
            .map(|v| r.inner(v).norm_sqr())
            .collect();
        let n = 1_000_000u64;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            counts[bob_outcome(&r, &basis, &mut rng).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(&c, &w)| {
                let expected = w * n as f64;
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
        assert!(p_value > 0.001, "chi2 = {chi2}, p = {p_value}");
    }

    #[test]
    fn coarse_value_rules() {
        let basis = OrthonormalBasis::standard_real(3);
        let r = HilbertVector::real_normalized(&[1.0, 0.0, 0.0]).unwrap();
        // Full-space projector is always 1.
        let full = PrivilegedDecomposition::new(basis.clone(), vec![0, 1, 2]).unwrap();
        assert_eq!(coarse_value(&r, &full), 1);
        // r = e1 minimizes at index 1 (tie 1 vs 2 broken low), inside {1, 2}.
        let sub = PrivilegedDecomposition::new(basis, vec![1, 2]).unwrap();
        assert_eq!(coarse_value(&r, &sub), 1);
    }

    #[test]
    fn paradox_vector_example_chains_hold() {
        // r ~ (0.45, -0.75, 0.40) in {x, y, z} coordinates satisfies both
        // chains for the 45-degree rotated pair.
        let (uvz, xyz) = paradox_figure_bases();
        let r = HilbertVector::real_normalized(&[0.45, -0.75, 0.40]).unwrap();
        let ru = r.inner(uvz.vector(0)).norm();
        let rv = r.inner(uvz.vector(1)).norm();
        let rz = r.inner(uvz.vector(2)).norm();
        let rx = r.inner(xyz.vector(0)).norm();
        let ry = r.inner(xyz.vector(1)).norm();
        assert!(ru < rz && rz < rv, "chain 1: {ru} {rz} {rv}");
        assert!(rz < rx && rx < ry, "chain 2: {rz} {rx} {ry}");
    }

    #[test]
    fn find_paradox_succeeds_and_witnesses_contextuality() {
        let (uvz, xyz) = paradox_figure_bases();
        let found = find_paradox(&uvz, &xyz, 17).unwrap();
        let r = &found.vector;
        // Fine value: P_u fires when Alice measures in {u, v, z}.
        assert_eq!(alice_outcome(r, &uvz), 0);
        // Coarse value of P_uv = P_xy with privileged basis {x, y}: zero.
        let coarse = PrivilegedDecomposition::new(xyz, vec![0, 1]).unwrap();
        assert_eq!(coarse_value(r, &coarse), 0);
        // Chains hold with the declared margin.
        assert!(found.chain_uzv[1] - found.chain_uzv[0] >= PARADOX_MARGIN);
        assert!(found.chain_uzv[2] - found.chain_uzv[1] >= PARADOX_MARGIN);
        assert!(found.chain_zxy[1] - found.chain_zxy[0] >= PARADOX_MARGIN);
        assert!(found.chain_zxy[2] - found.chain_zxy[1] >= PARADOX_MARGIN);
    }

    #[test]
    fn find_paradox_is_deterministic() {
        let (uvz, xyz) = paradox_figure_bases();
        let a = find_paradox(&uvz, &xyz, 23).unwrap();
        let b = find_paradox(&uvz, &xyz, 23).unwrap();
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.attempts, b.attempts);
    }

    #[test]
    fn degenerate_bases_exhaust_the_search() {
        // u = x, v = y makes the chains contradictory.
        let xyz = OrthonormalBasis::standard_real(3);
        let err = find_paradox(&xyz, &xyz, 1).unwrap_err();
        assert!(matches!(err, Error::SearchExhausted(_)));
    }

    #[test]
    fn averaging_identity_holds() {
        let (uvz, xyz) = paradox_figure_bases();
        let check = averaging_check(&uvz, &xyz, 200_000, 31).unwrap();
        // Isotropy: each fine vector is the minimizer with probability 1/3,
        // the coarse subspace with probability 2/3.
        assert!((check.p_u.0 - 1.0 / 3.0).abs() < 4.0 * check.p_u.1);
        assert!((check.p_v.0 - 1.0 / 3.0).abs() < 4.0 * check.p_v.1);
        assert!((check.p_uv.0 - 2.0 / 3.0).abs() < 4.0 * check.p_uv.1);
        let lhs = check.p_u.0 + check.p_v.0;
        let combined = (check.p_u.1.powi(2) + check.p_v.1.powi(2) + check.p_uv.1.powi(2)).sqrt();
        assert!((lhs - check.p_uv.0).abs() < 4.0 * combined);
    }

    #[test]
    fn model_reproduces_werner_qubit_probabilities() {
        let pairs = vec![
            (
                Direction3::new(0.0, 0.0, 1.0).unwrap(),
                Direction3::new(0.0, 0.0, 1.0).unwrap(),
            ),
            (
                Direction3::new(0.0, 0.0, 1.0).unwrap(),
                Direction3::new(1.0, 0.0, 0.0).unwrap(),
            ),
            (
                Direction3::new(1.0, 2.0, -0.5).unwrap(),
                Direction3::new(-0.3, 0.4, 1.0).unwrap(),
            ),
        ];
        let report =
            validate_against_quantum(&pairs, -0.25, 400_000, 5, Conjugation::None).unwrap();
        // Targets: (2 - a.b)/8 -> 1/8 aligned, 1/4 orthogonal.
        assert!((report.rows[0].quantum_target - 0.125).abs() < 1e-12);
        assert!((report.rows[1].quantum_target - 0.25).abs() < 1e-12);
        assert!(
            report.worst_deviation_sigma() < 4.0,
            "worst deviation {} sigma",
            report.worst_deviation_sigma()
        );
    }

    #[test]
    fn validation_rejects_small_sample_counts() {
        let pairs = vec![(
            Direction3::new(0.0, 0.0, 1.0).unwrap(),
            Direction3::new(0.0, 0.0, 1.0).unwrap(),
        )];
        assert!(validate_against_quantum(&pairs, -0.25, 10, 5, Conjugation::None).is_err());
    }

    #[test]
    fn basis_validation_catches_non_orthonormal_sets() {
        let v1 = HilbertVector::real_normalized(&[1.0, 0.0]).unwrap();
        let v2 = HilbertVector::real_normalized(&[0.9, 0.4358898943540674]).unwrap();
        assert!(OrthonormalBasis::new(vec![v1, v2]).is_err());
    }

    #[test]
    fn spin_basis_is_orthonormal_and_aligned() {
        let a = Direction3::new(0.3, -0.7, 0.2).unwrap();
        let basis = OrthonormalBasis::spin_basis(&a);
        assert!(basis.vector(0).inner(basis.vector(1)).norm() < 1e-12);
        // <+a| sigma.a |+a> = 1.
        let plus = basis.vector(0).components();
        let expect = (plus.adjoint() * quantum::pauli_dot(&a) * plus)[(0, 0)];
        assert!((expect.re - 1.0).abs() < 1e-12);
    }
}
