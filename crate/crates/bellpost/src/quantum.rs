//! Dense complex-matrix engine for small bipartite systems.
//!
//! States, projectors, joint probabilities, spin correlations, CHSH
//! maximization with a closed-form cross-check, the partial-transpose
//! witness, and postselected-state construction. Dimensions stay tiny
//! (at most ~25 per factor), so everything is dense and every
//! eigendecomposition is full.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::classical::Direction3;
use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Tolerance for algebraic identities (hermiticity, trace, idempotence).
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Tolerance for agreement between the settings optimizer and the
/// closed-form CHSH maximum.
pub const OPTIMIZER_TOL: f64 = 1e-6;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Identity on a `d`-dimensional space.
pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

/// The swap operator F on a d x d tensor product: `F |i,j> = |j,i>`.
pub fn flip_operator(d: usize) -> ComplexMatrix {
    let mut f = ComplexMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            f[(i * d + j, j * d + i)] = c(1.0);
        }
    }
    f
}

/// Pauli matrices; index 0..2 for x, y, z.
pub fn pauli(i: usize) -> ComplexMatrix {
    match i {
        0 => ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
        1 => ComplexMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0),
                c(0.0),
            ],
        ),
        2 => ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
        _ => panic!("pauli index must be 0, 1 or 2"),
    }
}

/// `sigma . a` for a unit direction `a`.
pub fn pauli_dot(a: &Direction3) -> ComplexMatrix {
    pauli(0) * c(a.x()) + pauli(1) * c(a.y()) + pauli(2) * c(a.z())
}

fn trace(m: &ComplexMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Declared tensor factorization of a state's carrier space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factorization {
    Single(usize),
    Bipartite(usize, usize),
}

impl Factorization {
    pub fn total_dim(&self) -> usize {
        match self {
            Factorization::Single(d) => *d,
            Factorization::Bipartite(da, db) => da * db,
        }
    }
}

/// A validated density matrix: Hermitian, positive semidefinite, unit trace,
/// checked at construction time against `ALGEBRAIC_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    factorization: Factorization,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix, factorization: Factorization) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidArgument(
                "density matrix must be square".into(),
            ));
        }
        if matrix.nrows() != factorization.total_dim() {
            return Err(Error::InvalidArgument(format!(
                "matrix dimension {} does not match factorization {:?}",
                matrix.nrows(),
                factorization
            )));
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Numeric(
                "density matrix has non-finite entries".into(),
            ));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > ALGEBRAIC_TOL {
            return Err(Error::Numeric(format!(
                "density matrix is not Hermitian (defect {herm:.3e})"
            )));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(Error::Numeric(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let min_eig = hermitian_eigenvalues(&matrix)[0];
        if min_eig < -ALGEBRAIC_TOL {
            return Err(Error::Numeric(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(DensityMatrix {
            matrix,
            factorization,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn factorization(&self) -> Factorization {
        self.factorization
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.factorization {
            Factorization::Single(d) => (d, 1),
            Factorization::Bipartite(da, db) => (da, db),
        }
    }

    /// Purity Tr(rho^2).
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix)
            .diagonal()
            .iter()
            .map(|z| z.re)
            .sum()
    }
}

/// A validated projector: Hermitian, idempotent, integer trace equal to
/// its rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: ComplexMatrix,
    rank: usize,
}

impl Projector {
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidArgument("projector must be square".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > ALGEBRAIC_TOL {
            return Err(Error::Numeric(format!(
                "projector is not Hermitian (defect {herm:.3e})"
            )));
        }
        let idem = (&matrix * &matrix - &matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if idem > ALGEBRAIC_TOL {
            return Err(Error::Numeric(format!(
                "projector is not idempotent (defect {idem:.3e})"
            )));
        }
        let tr = trace(&matrix).re;
        let rank = tr.round();
        if (tr - rank).abs() > 1e-8 || rank < 0.0 {
            return Err(Error::Numeric(format!(
                "projector trace {tr} is not a nonnegative integer"
            )));
        }
        Ok(Projector {
            matrix,
            rank: rank as usize,
        })
    }

    /// Projector onto the span of the given orthonormal vectors.
    pub fn from_span(vectors: &[ComplexVector]) -> Result<Self> {
        let d = vectors
            .first()
            .ok_or_else(|| Error::InvalidArgument("projector span is empty".into()))?
            .len();
        let mut m = ComplexMatrix::zeros(d, d);
        for v in vectors {
            if v.len() != d {
                return Err(Error::InvalidArgument(
                    "span vectors differ in dimension".into(),
                ));
            }
            m += v * v.adjoint();
        }
        Projector::from_matrix(m)
    }

    pub fn identity(d: usize) -> Self {
        Projector {
            matrix: identity(d),
            rank: d,
        }
    }

    /// Rank-1 qubit projector onto spin-up along `a`: (1 + sigma.a) / 2.
    pub fn spin_up(a: &Direction3) -> Self {
        let m = (identity(2) + pauli_dot(a)) * c(0.5);
        Projector { matrix: m, rank: 1 }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// State constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateKind {
    /// The two-qubit singlet (|01> - |10>) / sqrt(2).
    Singlet,
    /// Equal-weight mixture of white noise and the singlet:
    /// rho = 1/8 + (1/2) rho_singlet = (3/8) 1 - (1/4) F.
    WernerQubit,
    /// The d-dimensional family
    /// [(d - phi) 1 + (d phi - 1) F] / (d^3 - d), with phi = Tr(rho F).
    WernerFamily { d: usize, phi: f64 },
}

/// Build one of the named states.
pub fn make_state(kind: StateKind) -> Result<DensityMatrix> {
    match kind {
        StateKind::Singlet => {
            let mut psi = ComplexVector::zeros(4);
            psi[1] = c(std::f64::consts::FRAC_1_SQRT_2);
            psi[2] = c(-std::f64::consts::FRAC_1_SQRT_2);
            DensityMatrix::new(&psi * psi.adjoint(), Factorization::Bipartite(2, 2))
        }
        StateKind::WernerQubit => {
            let singlet = make_state(StateKind::Singlet)?;
            let m = identity(4) * c(1.0 / 8.0) + singlet.matrix() * c(0.5);
            DensityMatrix::new(m, Factorization::Bipartite(2, 2))
        }
        StateKind::WernerFamily { d, phi } => {
            if d < 2 {
                return Err(Error::InvalidArgument(format!(
                    "Werner family needs d >= 2, got {d}"
                )));
            }
            if !(-1.0..=1.0).contains(&phi) {
                return Err(Error::InvalidArgument(format!(
                    "flip parameter must be in [-1, 1], got {phi}"
                )));
            }
            let df = d as f64;
            let norm = df * df * df - df;
            let m = identity(d * d) * c((df - phi) / norm)
                + flip_operator(d) * c((df * phi - 1.0) / norm);
            DensityMatrix::new(m, Factorization::Bipartite(d, d))
        }
    }
}

/// Tr(rho (sigma.a x sigma.b)) for a two-qubit state.
pub fn spin_correlation(rho: &DensityMatrix, a: &Direction3, b: &Direction3) -> Result<f64> {
    if rho.factorization() != Factorization::Bipartite(2, 2) {
        return Err(Error::InvalidArgument(
            "spin_correlation requires a two-qubit state".into(),
        ));
    }
    let obs = pauli_dot(a).kronecker(&pauli_dot(b));
    let val = trace(&(rho.matrix() * obs));
    if val.im.abs() > ALGEBRAIC_TOL {
        return Err(Error::Numeric(format!(
            "spin correlation has imaginary residue {:.3e}",
            val.im
        )));
    }
    Ok(val.re)
}

/// Tr(rho (P_A x P_B)), clamped to [0, 1] when within `ALGEBRAIC_TOL` of the
/// boundary. Values further outside are a numeric integrity error.
pub fn joint_probability(rho: &DensityMatrix, p_a: &Projector, p_b: &Projector) -> Result<f64> {
    let (da, db) = rho.dims();
    if p_a.dim() != da || p_b.dim() != db {
        return Err(Error::InvalidArgument(format!(
            "projector dims ({}, {}) do not match state dims ({da}, {db})",
            p_a.dim(),
            p_b.dim()
        )));
    }
    let op = p_a.matrix().kronecker(p_b.matrix());
    let val = trace(&(rho.matrix() * op));
    if val.im.abs() > ALGEBRAIC_TOL {
        return Err(Error::Numeric(format!(
            "joint probability has imaginary residue {:.3e}",
            val.im
        )));
    }
    let p = val.re;
    if !(-ALGEBRAIC_TOL..=1.0 + ALGEBRAIC_TOL).contains(&p) {
        return Err(Error::Numeric(format!(
            "joint probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// The 3x3 real correlation matrix T_ij = Tr(rho sigma_i x sigma_j).
pub fn correlation_matrix(rho: &DensityMatrix) -> Result<nalgebra::Matrix3<f64>> {
    if rho.factorization() != Factorization::Bipartite(2, 2) {
        return Err(Error::InvalidArgument(
            "correlation matrix requires a two-qubit state".into(),
        ));
    }
    let mut t = nalgebra::Matrix3::<f64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let obs = pauli(i).kronecker(&pauli(j));
            t[(i, j)] = trace(&(rho.matrix() * obs)).re;
        }
    }
    Ok(t)
}

/// Maximum of the CHSH combination over measurement settings, together with
/// the maximizing four directions (a, a', b, b').
///
/// The search alternates closed-form updates of (a, a') given (b, b') and
/// vice versa from several deterministic restarts, and the result is
/// cross-checked against the closed form 2 sqrt(m1 + m2), m1 and m2 the two
/// largest eigenvalues of T^T T. Disagreement beyond `OPTIMIZER_TOL` is a
/// numeric error.
pub fn chsh_quantum_max_with_settings(rho: &DensityMatrix) -> Result<(f64, [Direction3; 4])> {
    let t = correlation_matrix(rho)?;
    // Closed form.
    let m = t.transpose() * t;
    let mut eigs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let closed = 2.0 * (eigs[0] + eigs[1]).max(0.0).sqrt();

    // Alternating ascent from seeded restarts.
    let mut rng = crate::rng::stream(0x5e771465, crate::rng::domain::SEARCH_INIT, 0, 0);
    let mut best = f64::NEG_INFINITY;
    let mut best_dirs = [
        Direction3::in_plane(0.0),
        Direction3::in_plane(0.0),
        Direction3::in_plane(0.0),
        Direction3::in_plane(0.0),
    ];
    for _ in 0..24 {
        let mut b_vec = random_unit3(&mut rng);
        let mut b_prime = random_unit3(&mut rng);
        let mut a_vec;
        let mut a_prime;
        let mut value = f64::NEG_INFINITY;
        for _ in 0..200 {
            let tb_sum = t * (b_vec + b_prime);
            let tb_diff = t * (b_vec - b_prime);
            a_vec = normalize_or(&tb_sum, &b_vec);
            a_prime = normalize_or(&tb_diff, &b_prime);
            let ta_sum = t.transpose() * (a_vec + a_prime);
            let ta_diff = t.transpose() * (a_vec - a_prime);
            b_vec = normalize_or(&ta_sum, &b_vec);
            b_prime = normalize_or(&ta_diff, &b_prime);
            let new_value = (t * (b_vec + b_prime)).norm() + (t * (b_vec - b_prime)).norm();
            if new_value - value < 1e-13 {
                value = new_value;
                break;
            }
            value = new_value;
        }
        if value > best {
            best = value;
            let tb_sum = t * (b_vec + b_prime);
            let tb_diff = t * (b_vec - b_prime);
            let a_vec = normalize_or(&tb_sum, &b_vec);
            let a_prime = normalize_or(&tb_diff, &b_prime);
            best_dirs = [
                to_direction(&a_vec),
                to_direction(&a_prime),
                to_direction(&b_vec),
                to_direction(&b_prime),
            ];
        }
    }
    if (best - closed).abs() > OPTIMIZER_TOL {
        return Err(Error::Numeric(format!(
            "CHSH optimizer ({best}) and closed form ({closed}) disagree beyond {OPTIMIZER_TOL}"
        )));
    }
    Ok((closed, best_dirs))
}

/// Maximum of the CHSH combination over measurement settings.
pub fn chsh_quantum_max(rho: &DensityMatrix) -> Result<f64> {
    chsh_quantum_max_with_settings(rho).map(|(v, _)| v)
}

fn random_unit3<R: Rng>(rng: &mut R) -> nalgebra::Vector3<f64> {
    let d = crate::classical::sample_direction(rng);
    nalgebra::Vector3::new(d.x(), d.y(), d.z())
}

fn normalize_or(
    v: &nalgebra::Vector3<f64>,
    fallback: &nalgebra::Vector3<f64>,
) -> nalgebra::Vector3<f64> {
    let n = v.norm();
    if n > 1e-14 {
        v / n
    } else {
        *fallback
    }
}

fn to_direction(v: &nalgebra::Vector3<f64>) -> Direction3 {
    Direction3::new(v.x, v.y, v.z).expect("unit vector by construction")
}

/// Minimum eigenvalue of the partial transpose on the second factor.
/// A negative value certifies that the state is not a mixture of product
/// states.
pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    let (da, db) = match rho.factorization() {
        Factorization::Bipartite(da, db) => (da, db),
        Factorization::Single(_) => {
            return Err(Error::InvalidArgument(
                "partial transpose needs a declared bipartite factorization".into(),
            ))
        }
    };
    let m = rho.matrix();
    let mut pt = ComplexMatrix::zeros(da * db, da * db);
    for i in 0..da {
        for k in 0..da {
            for j in 0..db {
                for l in 0..db {
                    // (i,l),(k,j) <- (i,j),(k,l): transpose the second factor.
                    pt[(i * db + l, k * db + j)] = m[(i * db + j, k * db + l)];
                }
            }
        }
    }
    let vals = hermitian_eigenvalues(&pt);
    vals.first().copied().ok_or_else(|| {
        Error::Numeric("eigendecomposition of the partial transpose returned nothing".into())
    })
}

/// Orthonormal basis of the range of a projector, ordered by descending
/// eigenvalue with each vector's first nonzero component made real positive.
pub fn range_basis(p: &Projector) -> Vec<ComplexVector> {
    let eig = p.matrix().clone().symmetric_eigen();
    let mut pairs: Vec<(f64, ComplexVector)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, eig.eigenvectors.column(k).into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs
        .into_iter()
        .take(p.rank())
        .map(|(_, v)| fix_phase(v))
        .collect()
}

/// Multiply by a global phase so the first component above 1e-12 in modulus
/// becomes real positive.
pub fn fix_phase(mut v: ComplexVector) -> ComplexVector {
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12) {
        let phase = z / z.norm();
        let correction = phase.conj();
        for x in v.iter_mut() {
            *x *= correction;
        }
    }
    v
}

/// Project, renormalize, and re-express on the retained subspaces.
///
/// Returns the effective state on the rank(P_A) x rank(P_B) space spanned by
/// `bases` (or by deterministically derived range bases when `None`),
/// together with the retention probability Tr(rho (P_A x P_B)).
pub fn postselect_state(
    rho: &DensityMatrix,
    p_a: &Projector,
    p_b: &Projector,
    bases: Option<(&[ComplexVector], &[ComplexVector])>,
) -> Result<(DensityMatrix, f64)> {
    let retention = joint_probability(rho, p_a, p_b)?;
    if retention <= 1e-12 {
        return Err(Error::EmptySubensemble(format!(
            "retention probability {retention:.3e} vanishes"
        )));
    }
    let (basis_a, basis_b) = match bases {
        Some((a, b)) => (a.to_vec(), b.to_vec()),
        None => (range_basis(p_a), range_basis(p_b)),
    };
    if basis_a.len() != p_a.rank() || basis_b.len() != p_b.rank() {
        return Err(Error::InvalidArgument(format!(
            "subspace bases must match projector ranks ({}, {})",
            p_a.rank(),
            p_b.rank()
        )));
    }
    let ra = basis_a.len();
    let rb = basis_b.len();
    let db = rho.dims().1;
    let m = rho.matrix();
    // eff[(i,j),(k,l)] = <a_i x b_j| rho |a_k x b_l> / retention
    let mut eff = ComplexMatrix::zeros(ra * rb, ra * rb);
    let d_tot = m.nrows();
    let kron_vec = |va: &ComplexVector, vb: &ComplexVector| -> ComplexVector {
        let mut out = ComplexVector::zeros(d_tot);
        for (ia, za) in va.iter().enumerate() {
            for (ib, zb) in vb.iter().enumerate() {
                out[ia * db + ib] = za * zb;
            }
        }
        out
    };
    let span: Vec<ComplexVector> = basis_a
        .iter()
        .flat_map(|va| basis_b.iter().map(move |vb| kron_vec(va, vb)))
        .collect();
    for (j, ket) in span.iter().enumerate() {
        let m_ket = m * ket;
        for (i, bra) in span.iter().enumerate() {
            eff[(i, j)] = bra.dotc(&m_ket) / c(retention);
        }
    }
    let eff = DensityMatrix::new(eff, Factorization::Bipartite(ra, rb))?;
    Ok((eff, retention))
}

/// Random density matrix from the Ginibre ensemble (for tests and scans).
pub fn random_density_matrix<R: Rng>(d: usize, fact: Factorization, rng: &mut R) -> DensityMatrix {
    use rand_distr::StandardNormal;
    loop {
        let g = ComplexMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        if tr > 1e-9 {
            // Symmetrize away the last drops of rounding before validation.
            let m = (&m + m.adjoint()) * c(0.5 / tr);
            return DensityMatrix::new(m, fact).expect("Ginibre state is valid by construction");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, domain};

    fn singlet() -> DensityMatrix {
        make_state(StateKind::Singlet).unwrap()
    }

    fn werner() -> DensityMatrix {
        make_state(StateKind::WernerQubit).unwrap()
    }

    fn maximally_mixed() -> DensityMatrix {
        DensityMatrix::new(identity(4) * c(0.25), Factorization::Bipartite(2, 2)).unwrap()
    }

    fn random_dir(rng: &mut impl Rng) -> Direction3 {
        crate::classical::sample_direction(rng)
    }

    #[test]
    fn singlet_is_pure() {
        assert!((singlet().purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn werner_qubit_equals_its_flip_form() {
        // Expanding the equal-weight mixture gives (3/8) 1 - (1/4) F.
        let expected = identity(4) * c(3.0 / 8.0) - flip_operator(2) * c(0.25);
        let got = werner();
        for (a, b) in got.matrix().iter().zip(expected.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn werner_family_matches_qubit_at_canonical_phi() {
        let fam = make_state(StateKind::WernerFamily { d: 2, phi: -0.25 }).unwrap();
        for (a, b) in fam.matrix().iter().zip(werner().matrix().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn werner_family_recovers_phi() {
        for (d, phi) in [(2, -1.0), (2, 0.3), (3, -0.5), (4, 0.9), (5, -0.76)] {
            let rho = make_state(StateKind::WernerFamily { d, phi }).unwrap();
            let f = flip_operator(d);
            let got = trace(&(rho.matrix() * f)).re;
            assert!((got - phi).abs() < 1e-10, "d={d} phi={phi} got {got}");
        }
    }

    #[test]
    fn werner_family_rejects_bad_arguments() {
        assert!(make_state(StateKind::WernerFamily { d: 1, phi: 0.0 }).is_err());
        assert!(make_state(StateKind::WernerFamily { d: 3, phi: 1.5 }).is_err());
    }

    #[test]
    fn singlet_correlation_is_minus_cosine() {
        let s = singlet();
        let mut rng = rng::stream(3, domain::SCAN_CONFIG, 1, 0);
        for _ in 0..50 {
            let a = random_dir(&mut rng);
            let b = random_dir(&mut rng);
            let got = spin_correlation(&s, &a, &b).unwrap();
            assert!((got + a.dot(&b)).abs() < 1e-10);
        }
    }

    #[test]
    fn werner_correlation_is_half_singlet() {
        let w = werner();
        let mut rng = rng::stream(4, domain::SCAN_CONFIG, 1, 0);
        for _ in 0..50 {
            let a = random_dir(&mut rng);
            let b = random_dir(&mut rng);
            let got = spin_correlation(&w, &a, &b).unwrap();
            assert!((got + 0.5 * a.dot(&b)).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_state_has_no_correlations() {
        let m = maximally_mixed();
        let a = Direction3::in_plane(0.3);
        let b = Direction3::in_plane(2.0);
        assert!(spin_correlation(&m, &a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn joint_probability_reference_values() {
        let s = singlet();
        let z = Direction3::new(0.0, 0.0, 1.0).unwrap();
        let up = Projector::spin_up(&z);
        // Singlet anticorrelation: same outcome along the same axis never happens.
        assert!(joint_probability(&s, &up, &up).unwrap().abs() < 1e-12);

        // Werner: (2 - a.b) / 8 for rank-1 projectors along a and b.
        let w = werner();
        let mut rng = rng::stream(5, domain::SCAN_CONFIG, 1, 0);
        for _ in 0..20 {
            let a = random_dir(&mut rng);
            let b = random_dir(&mut rng);
            let got =
                joint_probability(&w, &Projector::spin_up(&a), &Projector::spin_up(&b)).unwrap();
            assert!((got - (2.0 - a.dot(&b)) / 8.0).abs() < 1e-10);
        }

        // Identity tests pass with probability one.
        let one = Projector::identity(2);
        assert!((joint_probability(&w, &one, &one).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_probability_is_linear_in_the_state() {
        let mut rng = rng::stream(6, domain::SCAN_CONFIG, 1, 0);
        let rho1 = random_density_matrix(4, Factorization::Bipartite(2, 2), &mut rng);
        let rho2 = random_density_matrix(4, Factorization::Bipartite(2, 2), &mut rng);
        let lambda = 0.3;
        let mix = DensityMatrix::new(
            rho1.matrix() * c(lambda) + rho2.matrix() * c(1.0 - lambda),
            Factorization::Bipartite(2, 2),
        )
        .unwrap();
        let a = random_dir(&mut rng);
        let b = random_dir(&mut rng);
        let pa = Projector::spin_up(&a);
        let pb = Projector::spin_up(&b);
        let lhs = joint_probability(&mix, &pa, &pb).unwrap();
        let rhs = lambda * joint_probability(&rho1, &pa, &pb).unwrap()
            + (1.0 - lambda) * joint_probability(&rho2, &pa, &pb).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn chsh_max_reference_values() {
        assert!((chsh_quantum_max(&singlet()).unwrap() - TSIRELSON).abs() < 1e-6);
        assert!((chsh_quantum_max(&werner()).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-6);
        assert!(chsh_quantum_max(&maximally_mixed()).unwrap().abs() < 1e-6);
    }

    const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn chsh_max_respects_tsirelson_on_random_states() {
        let mut rng = rng::stream(7, domain::SCAN_CONFIG, 2, 0);
        for _ in 0..50 {
            let rho = random_density_matrix(4, Factorization::Bipartite(2, 2), &mut rng);
            let v = chsh_quantum_max(&rho).unwrap();
            assert!(v <= TSIRELSON + 1e-9, "got {v}");
        }
    }

    #[test]
    fn chsh_settings_achieve_the_maximum() {
        let (v, dirs) = chsh_quantum_max_with_settings(&singlet()).unwrap();
        let s = singlet();
        let e = |a: &Direction3, b: &Direction3| spin_correlation(&s, a, b).unwrap();
        let combo = (e(&dirs[0], &dirs[2]) + e(&dirs[0], &dirs[3]) + e(&dirs[1], &dirs[2])
            - e(&dirs[1], &dirs[3]))
        .abs();
        assert!((combo - v).abs() < 1e-6, "settings give {combo}, max {v}");
    }

    #[test]
    fn ppt_witness_values() {
        // Werner qubit: (3/8) - (1/4) * 2 = -1/8 on the maximally entangled
        // eigenvector of the partially transposed flip.
        assert!((ppt_min_eigenvalue(&werner()).unwrap() + 0.125).abs() < 1e-10);
        // Unit-trace singlet: eigenvalues of the partial transpose are
        // {-1/2, 1/2, 1/2, 1/2}.
        assert!((ppt_min_eigenvalue(&singlet()).unwrap() + 0.5).abs() < 1e-10);
        // Product state stays positive.
        assert!((ppt_min_eigenvalue(&maximally_mixed()).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn flip_partial_transpose_has_known_spectrum() {
        // F^(T_B) = d |Phi><Phi| with |Phi> the maximally entangled vector,
        // so its eigenvalues for qubits are {2, 0, 0, 0}.
        let f = flip_operator(2);
        let mut pt = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    for l in 0..2 {
                        pt[(i * 2 + l, k * 2 + j)] = f[(i * 2 + j, k * 2 + l)];
                    }
                }
            }
        }
        let vals = hermitian_eigenvalues(&pt);
        for (got, want) in vals.iter().zip([0.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "spectrum {vals:?}");
        }
    }

    #[test]
    fn postselect_with_identity_is_a_no_op() {
        let w = werner();
        let one = Projector::identity(2);
        let (eff, p) = postselect_state(&w, &one, &one, None).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        for (a, b) in eff.matrix().iter().zip(w.matrix().iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn postselect_werner_rank_one_gives_pure_product() {
        let w = werner();
        let z = Direction3::new(0.0, 0.0, 1.0).unwrap();
        let p = Projector::spin_up(&z);
        let (eff, prob) = postselect_state(&w, &p, &p, None).unwrap();
        assert!((prob - 0.125).abs() < 1e-12);
        assert_eq!(eff.matrix().nrows(), 1);
        assert!((eff.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn postselect_family_keeps_unit_trace() {
        let rho = make_state(StateKind::WernerFamily { d: 5, phi: -0.76 }).unwrap();
        let span: Vec<ComplexVector> = (0..2)
            .map(|k| {
                let mut v = ComplexVector::zeros(5);
                v[k] = c(1.0);
                v
            })
            .collect();
        let p = Projector::from_span(&span).unwrap();
        let (eff, prob) = postselect_state(&rho, &p, &p, None).unwrap();
        assert_eq!(eff.dims(), (2, 2));
        let tr: f64 = eff.matrix().diagonal().iter().map(|z| z.re).sum();
        assert!((tr - 1.0).abs() < 1e-10);
        assert!(prob > 0.0);
    }

    #[test]
    fn postselect_rejects_vanishing_retention() {
        let s = singlet();
        let z = Direction3::new(0.0, 0.0, 1.0).unwrap();
        let p = Projector::spin_up(&z);
        // Singlet never gives the same outcome on both sides.
        assert!(matches!(
            postselect_state(&s, &p, &p, None),
            Err(Error::EmptySubensemble(_))
        ));
    }

    #[test]
    fn density_matrix_validation_rejects_bad_input() {
        // Non-unit trace.
        assert!(DensityMatrix::new(identity(4), Factorization::Bipartite(2, 2)).is_err());
        // Not Hermitian.
        let mut m = identity(2) * c(0.5);
        m[(0, 1)] = Complex64::new(0.0, 0.4);
        assert!(DensityMatrix::new(m, Factorization::Single(2)).is_err());
        // Negative eigenvalue.
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.2), c(0.0), c(0.0), c(-0.2)]);
        assert!(DensityMatrix::new(m, Factorization::Single(2)).is_err());
    }

    #[test]
    fn projector_validation() {
        assert!(Projector::from_matrix(identity(3)).is_ok());
        let not_idem = identity(2) * c(0.5);
        assert!(Projector::from_matrix(not_idem).is_err());
        let z = Direction3::new(0.0, 0.0, 1.0).unwrap();
        let p = Projector::spin_up(&z);
        assert_eq!(p.rank(), 1);
    }
}
