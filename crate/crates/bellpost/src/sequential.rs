//! Sequential coarse-then-fine measurements on the hidden-variable model,
//! their postselected statistics, the exact quantum reference, and a
//! settings search contrasting the two.
//!
//! Protocol: Alice and Bob each measure an agreed rank-2 projector first.
//! A null result on either side fails the trial. Only when both coarse
//! results are 1 do they refine with independently chosen rank-1 projectors
//! inside their retained subspaces; the refined outcomes, mapped to +/-1,
//! feed a CHSH estimate over the postselected subensemble.
//!
//! On the hidden-variable side Alice's refinement re-runs the argmin rule on
//! the fine pair completed by her privileged complement. The global minimizer
//! can then escape the coarse subspace even though the coarse step retained
//! the trial; such trials are counted as an explicit anomaly class instead of
//! being silently reassigned. The hidden variable itself is not updated by
//! the coarse measurement (the model defines no update rule).

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::chsh::{chsh_value, ChshValue, CorrelationEstimate};
use crate::classical::Direction3;
use crate::error::{Error, Result};
use crate::quantum::{
    chsh_quantum_max_with_settings, correlation_matrix, make_state, pauli, postselect_state,
    ComplexMatrix, ComplexVector, StateKind,
};
use crate::rng::{self, domain};
use crate::werner::{
    alice_outcome, sample_hidden, Field, HilbertVector, OrthonormalBasis, PrivilegedDecomposition,
};

const SUBSPACE_TOL: f64 = 1e-10;

/// One wing's sequential measurement plan: a rank-2 coarse projector with its
/// privileged basis, plus one orthonormal fine pair per CHSH arm, each pair
/// spanning the coarse subspace.
#[derive(Debug, Clone)]
pub struct SequentialSetting {
    coarse: PrivilegedDecomposition,
    fine_pairs: Vec<[HilbertVector; 2]>,
    /// Per-arm completed measurement bases (fine pair followed by the
    /// privileged complement), prebuilt so the trial loop never validates
    /// or allocates.
    completed: Vec<OrthonormalBasis>,
}

impl SequentialSetting {
    pub fn new(
        coarse: PrivilegedDecomposition,
        fine_pairs: Vec<[HilbertVector; 2]>,
    ) -> Result<Self> {
        if coarse.rank() != 2 {
            return Err(Error::InvalidArgument(format!(
                "sequential coarse projectors must have rank 2, got {}",
                coarse.rank()
            )));
        }
        if fine_pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one fine pair is required".into(),
            ));
        }
        let subspace: Vec<&HilbertVector> = coarse
            .subspace_indices
            .iter()
            .map(|&i| coarse.basis.vector(i))
            .collect();
        for (k, pair) in fine_pairs.iter().enumerate() {
            for f in pair {
                if f.dim() != coarse.basis.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "fine pair {k} dimension mismatch"
                    )));
                }
                // Residual after projecting onto the coarse subspace.
                let proj_norm_sq: f64 = subspace.iter().map(|w| w.inner(f).norm_sqr()).sum();
                if (1.0 - proj_norm_sq).abs() > SUBSPACE_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "fine pair {k} does not lie in the coarse subspace \
                         (residual {:.3e})",
                        (1.0 - proj_norm_sq).abs()
                    )));
                }
            }
            let overlap = pair[0].inner(&pair[1]).norm();
            if overlap > SUBSPACE_TOL {
                return Err(Error::InvalidArgument(format!(
                    "fine pair {k} is not orthonormal (|<f0, f1>| = {overlap:.3e})"
                )));
            }
        }
        let completed = (0..fine_pairs.len())
            .map(|arm| {
                let pair = &fine_pairs[arm];
                let mut vectors = vec![pair[0].clone(), pair[1].clone()];
                for (idx, v) in coarse.basis.vectors().iter().enumerate() {
                    if !coarse.subspace_indices.contains(&idx) {
                        vectors.push(v.clone());
                    }
                }
                OrthonormalBasis::new(vectors)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SequentialSetting {
            coarse,
            fine_pairs,
            completed,
        })
    }

    pub fn coarse(&self) -> &PrivilegedDecomposition {
        &self.coarse
    }

    pub fn fine_pairs(&self) -> &[[HilbertVector; 2]] {
        &self.fine_pairs
    }

    pub fn dim(&self) -> usize {
        self.coarse.basis.dim()
    }

    /// Completed measurement basis for one arm: the fine pair followed by the
    /// privileged complement vectors.
    pub fn completed_basis(&self, arm: usize) -> Result<&OrthonormalBasis> {
        self.completed
            .get(arm)
            .ok_or_else(|| Error::InvalidArgument(format!("no fine pair for arm {arm}")))
    }

    /// Probability weight <r, P r> of the coarse projector.
    fn coarse_weight(&self, r: &HilbertVector) -> f64 {
        self.coarse
            .subspace_indices
            .iter()
            .map(|&i| r.inner(self.coarse.basis.vector(i)).norm_sqr())
            .sum()
    }
}

/// Outcome of one sequential trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequentialTrialRecord {
    pub retained: bool,
    /// Retained, but Alice's recomputed global minimizer left the coarse
    /// subspace; no fine value exists for her.
    pub escaped: bool,
    pub alice_fine: Option<i8>,
    pub bob_fine: Option<i8>,
    pub arm_a: usize,
    pub arm_b: usize,
}

/// Run one trial: coarse step on both wings, then (if both retained) the
/// fine refinement. Alice is deterministic in `r` throughout; Bob draws his
/// coarse outcome from `coarse_rng` and his fine outcome from `fine_rng`.
pub fn run_sequential_trial<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    r: &HilbertVector,
    alice: &SequentialSetting,
    bob: &SequentialSetting,
    arm_a: usize,
    arm_b: usize,
    coarse_rng: &mut R1,
    fine_rng: &mut R2,
) -> Result<SequentialTrialRecord> {
    if r.dim() != alice.dim() || r.dim() != bob.dim() {
        return Err(Error::InvalidArgument(
            "hidden vector and setting dimensions differ".into(),
        ));
    }
    let alice_coarse = crate::werner::coarse_value(r, &alice.coarse) == 1;
    let p_b = bob.coarse_weight(r);
    // The draw happens unconditionally so the stream position is a pure
    // function of the trial index.
    let bob_coarse = coarse_rng.random::<f64>() < p_b;
    let retained = alice_coarse && bob_coarse;
    if !retained {
        return Ok(SequentialTrialRecord {
            retained: false,
            escaped: false,
            alice_fine: None,
            bob_fine: None,
            arm_a,
            arm_b,
        });
    }

    // Alice refines: argmin over the fine pair completed by her privileged
    // complement. Landing on a complement vector is the escape anomaly.
    let completed = alice.completed_basis(arm_a)?;
    let alice_idx = alice_outcome(r, completed);
    let (alice_fine, escaped) = match alice_idx {
        0 => (Some(1i8), false),
        1 => (Some(-1i8), false),
        _ => (None, true),
    };

    // Bob refines with the conditional rule <r, P_b r> / <r, P_B r>.
    let pair = &bob.fine_pairs[arm_b];
    let w0 = r.inner(&pair[0]).norm_sqr() / p_b;
    let w1 = r.inner(&pair[1]).norm_sqr() / p_b;
    for w in [w0, w1] {
        if !(0.0..=1.0 + 1e-10).contains(&w) {
            return Err(Error::Numeric(format!(
                "Bob's conditional fine probability {w} outside [0, 1]"
            )));
        }
    }
    let total = w0 + w1;
    let u = fine_rng.random::<f64>() * total;
    let bob_fine = if u < w0 { Some(1i8) } else { Some(-1i8) };

    Ok(SequentialTrialRecord {
        retained: true,
        escaped,
        alice_fine,
        bob_fine,
        arm_a,
        arm_b,
    })
}

/// Per-arm tallies.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArmCounts {
    pub trials: u64,
    pub retained: u64,
    pub escaped: u64,
    pub plus: u64,
    pub minus: u64,
}

impl ArmCounts {
    fn add(self, other: ArmCounts) -> ArmCounts {
        ArmCounts {
            trials: self.trials + other.trials,
            retained: self.retained + other.retained,
            escaped: self.escaped + other.escaped,
            plus: self.plus + other.plus,
            minus: self.minus + other.minus,
        }
    }

    pub fn retention_rate(&self) -> f64 {
        self.retained as f64 / self.trials as f64
    }

    pub fn escaped_fraction(&self) -> f64 {
        if self.retained == 0 {
            0.0
        } else {
            self.escaped as f64 / self.retained as f64
        }
    }
}

/// Postselected CHSH statistics over the four arm combinations.
#[derive(Debug, Clone)]
pub struct PostselectedStatistics {
    /// Indexed `[arm_a][arm_b]`.
    pub counts: [[ArmCounts; 2]; 2],
    pub estimates: [[CorrelationEstimate; 2]; 2],
    pub chsh: ChshValue,
}

/// Minimum trials per arm for the postselected statistics.
pub const MIN_SEQUENTIAL_TRIALS: u64 = 10_000;

/// Run `n_trials` per arm combination and form the postselected CHSH.
///
/// Correlations average the +/-1 fine products of retained, non-escaped
/// trials; escape and retention rates are reported per arm. An arm whose
/// retained set is empty is an error.
pub fn postselected_statistics(
    alice: &SequentialSetting,
    bob: &SequentialSetting,
    n_trials: u64,
    seed: u64,
) -> Result<PostselectedStatistics> {
    if alice.fine_pairs.len() != 2 || bob.fine_pairs.len() != 2 {
        return Err(Error::InvalidArgument(
            "CHSH needs exactly two fine pairs per wing".into(),
        ));
    }
    if n_trials < MIN_SEQUENTIAL_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "postselected statistics need >= {MIN_SEQUENTIAL_TRIALS} trials per arm, got {n_trials}"
        )));
    }
    let d = alice.dim();
    if d != bob.dim() {
        return Err(Error::InvalidArgument("wing dimensions differ".into()));
    }
    let mut counts = [[ArmCounts::default(); 2]; 2];
    #[allow(clippy::needless_range_loop)] // the indices double as arm ids
    for arm_a in 0..2 {
        for arm_b in 0..2 {
            let arm_index = (arm_a * 2 + arm_b) as u64;
            let tally = (0..n_trials)
                .into_par_iter()
                .map(|t| {
                    let mut hidden_rng = rng::stream(seed, domain::HIDDEN_VECTOR, arm_index, t);
                    let r = sample_hidden(d, Field::Complex, &mut hidden_rng).expect("d >= 2");
                    let mut coarse_rng = rng::stream(seed, domain::BOB_COARSE, arm_index, t);
                    let mut fine_rng = rng::stream(seed, domain::BOB_FINE, arm_index, t);
                    let rec = run_sequential_trial(
                        &r,
                        alice,
                        bob,
                        arm_a,
                        arm_b,
                        &mut coarse_rng,
                        &mut fine_rng,
                    )
                    .expect("validated settings");
                    let mut c = ArmCounts {
                        trials: 1,
                        ..ArmCounts::default()
                    };
                    if rec.retained {
                        c.retained = 1;
                        if rec.escaped {
                            c.escaped = 1;
                        } else if let (Some(a), Some(b)) = (rec.alice_fine, rec.bob_fine) {
                            if a * b > 0 {
                                c.plus = 1;
                            } else {
                                c.minus = 1;
                            }
                        }
                    }
                    c
                })
                .reduce(ArmCounts::default, ArmCounts::add);
            counts[arm_a][arm_b] = tally;
        }
    }
    let estimate = |c: &ArmCounts| -> Result<CorrelationEstimate> {
        CorrelationEstimate::from_counts(c.plus, c.minus, c.plus + c.minus, c.trials)
    };
    let estimates = [
        [estimate(&counts[0][0])?, estimate(&counts[0][1])?],
        [estimate(&counts[1][0])?, estimate(&counts[1][1])?],
    ];
    let chsh = chsh_value(
        &estimates[0][0],
        &estimates[0][1],
        &estimates[1][0],
        &estimates[1][1],
    );
    Ok(PostselectedStatistics {
        counts,
        estimates,
        chsh,
    })
}

/// Exact quantum side of the protocol.
#[derive(Debug, Clone, Copy)]
pub struct QuantumReference {
    /// CHSH combination at the configured fine pairs.
    pub chsh_arms: f64,
    /// Settings-optimal CHSH of the effective two-qubit state.
    pub chsh_max: f64,
    /// Tr(rho (P_A x P_B)).
    pub retention: f64,
}

/// Build the d-dimensional Werner state, postselect with both coarse
/// projectors, and evaluate the CHSH combination of the configured fine
/// pairs as well as the settings-optimal maximum on the effective state.
pub fn quantum_reference(
    phi: f64,
    d: usize,
    alice: &SequentialSetting,
    bob: &SequentialSetting,
) -> Result<QuantumReference> {
    if alice.dim() != d || bob.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "settings dimension does not match d = {d}"
        )));
    }
    if alice.fine_pairs.len() != 2 || bob.fine_pairs.len() != 2 {
        return Err(Error::InvalidArgument(
            "CHSH needs exactly two fine pairs per wing".into(),
        ));
    }
    let rho = make_state(StateKind::WernerFamily { d, phi })?;
    let basis_a: Vec<ComplexVector> = alice
        .coarse
        .subspace_indices
        .iter()
        .map(|&i| alice.coarse.basis.vector(i).components().clone())
        .collect();
    let basis_b: Vec<ComplexVector> = bob
        .coarse
        .subspace_indices
        .iter()
        .map(|&i| bob.coarse.basis.vector(i).components().clone())
        .collect();
    let p_a = alice.coarse.projector()?;
    let p_b = bob.coarse.projector()?;
    let (eff, retention) = postselect_state(&rho, &p_a, &p_b, Some((&basis_a, &basis_b)))?;
    let t = correlation_matrix(&eff)?;
    let bloch_a: Vec<nalgebra::Vector3<f64>> = alice
        .fine_pairs
        .iter()
        .map(|pair| fine_pair_bloch(pair, &basis_a))
        .collect::<Result<_>>()?;
    let bloch_b: Vec<nalgebra::Vector3<f64>> = bob
        .fine_pairs
        .iter()
        .map(|pair| fine_pair_bloch(pair, &basis_b))
        .collect::<Result<_>>()?;
    let e = |i: usize, j: usize| (bloch_a[i].transpose() * t * bloch_b[j])[(0, 0)];
    let chsh_arms = (e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1)).abs();
    let (chsh_max, _) = chsh_quantum_max_with_settings(&eff)?;
    Ok(QuantumReference {
        chsh_arms,
        chsh_max,
        retention,
    })
}

/// Bloch vector of the +/-1 observable |f0><f0| - |f1><f1| expressed in the
/// declared subspace basis.
fn fine_pair_bloch(
    pair: &[HilbertVector; 2],
    subspace_basis: &[ComplexVector],
) -> Result<nalgebra::Vector3<f64>> {
    // Components of each fine vector in the subspace basis.
    let comp = |f: &HilbertVector| -> ComplexVector {
        ComplexVector::from_iterator(
            subspace_basis.len(),
            subspace_basis
                .iter()
                .map(|w| (w.adjoint() * f.components())[(0, 0)]),
        )
    };
    let f0 = comp(&pair[0]);
    let f1 = comp(&pair[1]);
    let obs: ComplexMatrix = &f0 * f0.adjoint() - &f1 * f1.adjoint();
    let mut n = nalgebra::Vector3::zeros();
    for k in 0..3 {
        let val = (obs.clone() * pauli(k))
            .diagonal()
            .iter()
            .sum::<Complex64>()
            * 0.5;
        if val.im.abs() > 1e-9 {
            return Err(Error::Numeric(format!(
                "fine-pair observable has imaginary Bloch component {:.3e}",
                val.im
            )));
        }
        n[k] = val.re;
    }
    let norm = n.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Numeric(format!(
            "fine-pair observable Bloch norm {norm} != 1"
        )));
    }
    Ok(n / norm)
}

/// Construct the fine pair realizing the qubit observable `sigma . n` on the
/// subspace spanned by the (orthonormal) `subspace_basis`.
pub fn fine_pair_from_bloch(
    n: &Direction3,
    subspace_basis: &[ComplexVector],
) -> Result<[HilbertVector; 2]> {
    if subspace_basis.len() != 2 {
        return Err(Error::InvalidArgument(
            "fine pairs need a two-vector subspace basis".into(),
        ));
    }
    let qubit = OrthonormalBasis::spin_basis(n);
    let lift = |q: &HilbertVector| -> Result<HilbertVector> {
        let c0 = q.components()[0];
        let c1 = q.components()[1];
        let v = &subspace_basis[0] * c0 + &subspace_basis[1] * c1;
        HilbertVector::new(v, Field::Complex)
    };
    Ok([lift(qubit.vector(0))?, lift(qubit.vector(1))?])
}

/// Parameters of the settings search.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub d: usize,
    pub phi: f64,
    /// Total number of objective evaluations.
    pub budget: u64,
    pub seed: u64,
    /// Hidden-variable trials per arm at every visited configuration.
    pub hv_trials: u64,
    pub restarts: u32,
}

impl SearchParams {
    pub fn new(d: usize, phi: f64, budget: u64, seed: u64) -> Self {
        SearchParams {
            d,
            phi,
            budget,
            seed,
            hv_trials: MIN_SEQUENTIAL_TRIALS,
            restarts: 4,
        }
    }
}

/// One visited configuration.
#[derive(Debug, Clone, Copy)]
pub struct SearchVisit {
    pub evaluation: u64,
    pub quantum_chsh: f64,
    pub quantum_retention: f64,
    pub hv_chsh: f64,
    pub hv_std_error: f64,
    pub hv_retention: f64,
    pub hv_escaped_fraction: f64,
    pub accepted: bool,
    pub best_so_far: f64,
}

/// Search outcome: the full visit trace plus the best configuration found.
#[derive(Debug, Clone)]
pub struct SearchReport {
    pub params: SearchParams,
    pub visits: Vec<SearchVisit>,
    pub best_quantum: f64,
    pub best_hv_chsh: f64,
    pub best_hv_std_error: f64,
    pub best_alice: SequentialSetting,
    pub best_bob: SequentialSetting,
}

impl SearchReport {
    /// Whether any visited configuration exceeded the classical bound on the
    /// quantum side.
    pub fn found_violation(&self) -> bool {
        self.best_quantum > crate::chsh::CLASSICAL_BOUND
    }
}

/// Random-restart coordinate ascent over rank-2 subspace frames for both
/// wings. Each wing's subspace is charted by an unconstrained d x 2 complex
/// parameter block, orthonormalized with deterministic phase fixing; the
/// fine pairs at each visited configuration are the CHSH-optimal settings of
/// the effective state, so the objective is the settings-optimal quantum
/// CHSH. Every visited configuration is also simulated on the
/// hidden-variable side. Acceptance is serial in evaluation order, so the
/// whole search is a pure function of its parameters.
pub fn search_settings(params: &SearchParams) -> Result<SearchReport> {
    if params.budget < 1_000 {
        return Err(Error::InvalidArgument(format!(
            "search budget must be >= 1000 evaluations, got {}",
            params.budget
        )));
    }
    if params.d < 2 {
        return Err(Error::InvalidArgument("search needs d >= 2".into()));
    }
    let d = params.d;
    let n_params = 8 * d; // two wings, d x 2 complex entries each
    let mut visits = Vec::new();
    let mut evaluation = 0u64;
    let mut best_quantum = f64::NEG_INFINITY;
    // Best configuration so far: both wings plus the hv CHSH and its error.
    type BestFound = Option<(SequentialSetting, SequentialSetting, f64, f64)>;
    let mut best: BestFound = None;

    let evaluate = |theta: &[f64],
                    evaluation: &mut u64,
                    visits: &mut Vec<SearchVisit>,
                    best_quantum: &mut f64,
                    best: &mut BestFound|
     -> Result<Option<f64>> {
        let built = match build_settings(theta, d, params.phi) {
            Ok(b) => b,
            Err(_) => return Ok(None), // degenerate chart point; not a configuration
        };
        let (alice, bob, reference) = built;
        *evaluation += 1;
        let hv_seed = rng::stream_key(params.seed, domain::BOB_SAMPLE, 0xda7a, *evaluation);
        let hv = postselected_statistics(&alice, &bob, params.hv_trials, hv_seed)?;
        let hv_retention = {
            let total: u64 = hv.counts.iter().flatten().map(|c| c.retained).sum();
            let trials: u64 = hv.counts.iter().flatten().map(|c| c.trials).sum();
            total as f64 / trials as f64
        };
        let hv_escaped = {
            let escaped: u64 = hv.counts.iter().flatten().map(|c| c.escaped).sum();
            let retained: u64 = hv.counts.iter().flatten().map(|c| c.retained).sum();
            if retained == 0 {
                0.0
            } else {
                escaped as f64 / retained as f64
            }
        };
        let value = reference.chsh_max;
        let accepted = value > *best_quantum;
        if accepted {
            *best_quantum = value;
            *best = Some((alice.clone(), bob.clone(), hv.chsh.value, hv.chsh.std_error));
        }
        visits.push(SearchVisit {
            evaluation: *evaluation,
            quantum_chsh: value,
            quantum_retention: reference.retention,
            hv_chsh: hv.chsh.value,
            hv_std_error: hv.chsh.std_error,
            hv_retention,
            hv_escaped_fraction: hv_escaped,
            accepted,
            best_so_far: *best_quantum,
        });
        Ok(Some(value))
    };

    'restarts: for restart in 0..params.restarts {
        let share = params.budget / u64::from(params.restarts.max(1));
        let restart_cap = if restart + 1 == params.restarts {
            params.budget
        } else {
            u64::from(restart + 1) * share
        };
        let mut init_rng = rng::stream(params.seed, domain::SEARCH_INIT, u64::from(restart), 0);
        let mut theta: Vec<f64> = (0..n_params)
            .map(|_| init_rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut local_best = match evaluate(
            &theta,
            &mut evaluation,
            &mut visits,
            &mut best_quantum,
            &mut best,
        )? {
            Some(v) => v,
            None => continue,
        };
        let mut step = 0.5f64;
        while step >= 1e-3 {
            let mut improved = false;
            for coord in 0..n_params {
                if evaluation >= restart_cap {
                    if evaluation >= params.budget {
                        break 'restarts;
                    }
                    continue 'restarts;
                }
                for sign in [1.0, -1.0] {
                    let saved = theta[coord];
                    theta[coord] = saved + sign * step;
                    match evaluate(
                        &theta,
                        &mut evaluation,
                        &mut visits,
                        &mut best_quantum,
                        &mut best,
                    )? {
                        Some(v) if v > local_best + 1e-9 => {
                            local_best = v;
                            improved = true;
                            break;
                        }
                        _ => theta[coord] = saved,
                    }
                    if evaluation >= restart_cap {
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
    }

    let (best_alice, best_bob, best_hv_chsh, best_hv_std_error) =
        best.ok_or_else(|| Error::Numeric("search never evaluated a valid configuration".into()))?;
    Ok(SearchReport {
        params: *params,
        visits,
        best_quantum,
        best_hv_chsh,
        best_hv_std_error,
        best_alice,
        best_bob,
    })
}

/// Map one wing's parameter block to an orthonormal frame: the two charted
/// columns first (the coarse subspace), completed by Gram-Schmidt against the
/// computational basis, all phase-fixed.
fn frame_from_params(block: &[f64], d: usize) -> Result<Vec<ComplexVector>> {
    let col = |k: usize| -> ComplexVector {
        ComplexVector::from_iterator(
            d,
            (0..d).map(|i| Complex64::new(block[4 * i + 2 * k], block[4 * i + 2 * k + 1])),
        )
    };
    let mut frame: Vec<ComplexVector> = Vec::with_capacity(d);
    for candidate in [col(0), col(1)] {
        let v = orthonormalize_against(candidate, &frame)?;
        frame.push(v);
    }
    for k in 0..d {
        if frame.len() == d {
            break;
        }
        let mut e = ComplexVector::zeros(d);
        e[k] = Complex64::new(1.0, 0.0);
        if let Ok(v) = orthonormalize_against(e, &frame) {
            frame.push(v);
        }
    }
    if frame.len() != d {
        return Err(Error::Numeric(
            "failed to complete the orthonormal frame".into(),
        ));
    }
    Ok(frame)
}

fn orthonormalize_against(mut v: ComplexVector, frame: &[ComplexVector]) -> Result<ComplexVector> {
    for _ in 0..2 {
        for u in frame {
            let overlap = (u.adjoint() * &v)[(0, 0)];
            v -= u * overlap;
        }
    }
    let norm = v.norm();
    if norm < 1e-9 {
        return Err(Error::Numeric("degenerate frame column".into()));
    }
    Ok(crate::quantum::fix_phase(v / Complex64::new(norm, 0.0)))
}

/// Build both wings' settings from the flat parameter vector and evaluate
/// the quantum reference. The fine pairs are the CHSH-optimal settings of
/// the effective postselected state.
fn build_settings(
    theta: &[f64],
    d: usize,
    phi: f64,
) -> Result<(SequentialSetting, SequentialSetting, QuantumReference)> {
    let half = 4 * d;
    let frame_a = frame_from_params(&theta[..half], d)?;
    let frame_b = frame_from_params(&theta[half..], d)?;
    let to_basis = |frame: &[ComplexVector]| -> Result<OrthonormalBasis> {
        OrthonormalBasis::new(
            frame
                .iter()
                .map(|v| HilbertVector::new(v.clone(), Field::Complex))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let basis_a = to_basis(&frame_a)?;
    let basis_b = to_basis(&frame_b)?;
    let coarse_a = PrivilegedDecomposition::new(basis_a, vec![0, 1])?;
    let coarse_b = PrivilegedDecomposition::new(basis_b, vec![0, 1])?;

    let rho = make_state(StateKind::WernerFamily { d, phi })?;
    let sub_a: Vec<ComplexVector> = frame_a[..2].to_vec();
    let sub_b: Vec<ComplexVector> = frame_b[..2].to_vec();
    let p_a = coarse_a.projector()?;
    let p_b = coarse_b.projector()?;
    let (eff, retention) = postselect_state(&rho, &p_a, &p_b, Some((&sub_a, &sub_b)))?;
    let (chsh_max, dirs) = chsh_quantum_max_with_settings(&eff)?;

    let alice = SequentialSetting::new(
        coarse_a,
        vec![
            fine_pair_from_bloch(&dirs[0], &sub_a)?,
            fine_pair_from_bloch(&dirs[1], &sub_a)?,
        ],
    )?;
    let bob = SequentialSetting::new(
        coarse_b,
        vec![
            fine_pair_from_bloch(&dirs[2], &sub_b)?,
            fine_pair_from_bloch(&dirs[3], &sub_b)?,
        ],
    )?;
    let reference = quantum_reference(phi, d, &alice, &bob)?;
    debug_assert!((reference.chsh_max - chsh_max).abs() < 1e-9);
    debug_assert!((reference.retention - retention).abs() < 1e-12);
    Ok((alice, bob, reference))
}

/// Aligned rank-2 subspaces spanned by the first two computational vectors
/// on both wings, with fine pairs optimal for the effective state. The
/// canonical hand-built configuration for d >= 2.
pub fn aligned_settings(d: usize, phi: f64) -> Result<(SequentialSetting, SequentialSetting)> {
    let rho = make_state(StateKind::WernerFamily { d, phi })?;
    let mut frame: Vec<ComplexVector> = Vec::new();
    for k in 0..d {
        let mut e = ComplexVector::zeros(d);
        e[k] = Complex64::new(1.0, 0.0);
        frame.push(e);
    }
    let basis = OrthonormalBasis::new(
        frame
            .iter()
            .map(|v| HilbertVector::new(v.clone(), Field::Complex))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let coarse = PrivilegedDecomposition::new(basis, vec![0, 1])?;
    let sub: Vec<ComplexVector> = frame[..2].to_vec();
    let p = coarse.projector()?;
    let (eff, _) = postselect_state(&rho, &p, &p, Some((&sub, &sub)))?;
    let (_, dirs) = chsh_quantum_max_with_settings(&eff)?;
    let alice = SequentialSetting::new(
        coarse.clone(),
        vec![
            fine_pair_from_bloch(&dirs[0], &sub)?,
            fine_pair_from_bloch(&dirs[1], &sub)?,
        ],
    )?;
    let bob = SequentialSetting::new(
        coarse,
        vec![
            fine_pair_from_bloch(&dirs[2], &sub)?,
            fine_pair_from_bloch(&dirs[3], &sub)?,
        ],
    )?;
    Ok((alice, bob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::werner::bob_outcome;

    /// Werner's canonical flip parameter for the d-dimensional state his
    /// hidden-variable model reproduces: phi = -(d^2 - d - 1) / d^2.
    fn canonical_phi(d: usize) -> f64 {
        let df = d as f64;
        -(df * df - df - 1.0) / (df * df)
    }

    #[test]
    fn canonical_phi_matches_the_qubit_value() {
        assert!((canonical_phi(2) - (-0.25)).abs() < 1e-15);
        assert!((canonical_phi(5) - (-0.76)).abs() < 1e-15);
    }

    #[test]
    fn full_space_coarse_at_d2_reduces_to_single_measurements() {
        // With the whole qubit space as the coarse subspace, the sequential
        // engine must reproduce single-measurement statistics bit for bit
        // when fed the same streams.
        let basis = OrthonormalBasis::standard_real(2);
        let coarse = PrivilegedDecomposition::new(basis.clone(), vec![0, 1]).unwrap();
        let pair = [basis.vector(0).clone(), basis.vector(1).clone()];
        let setting = SequentialSetting::new(coarse, vec![pair]).unwrap();
        for t in 0..2_000u64 {
            let mut hidden = rng::stream(3, domain::HIDDEN_VECTOR, 0, t);
            let r = sample_hidden(2, Field::Complex, &mut hidden).unwrap();
            let mut coarse_rng = rng::stream(3, domain::BOB_COARSE, 0, t);
            let mut fine_rng = rng::stream(3, domain::BOB_FINE, 0, t);
            let rec =
                run_sequential_trial(&r, &setting, &setting, 0, 0, &mut coarse_rng, &mut fine_rng)
                    .unwrap();
            assert!(rec.retained, "full-space coarse step always retains");
            assert!(!rec.escaped, "no complement to escape into");
            // Alice: single-measurement argmin on the same basis.
            let expect_alice = if alice_outcome(&r, &basis) == 0 {
                1
            } else {
                -1
            };
            assert_eq!(rec.alice_fine, Some(expect_alice));
            // Bob: single-measurement outcome driven by an identically
            // seeded stream.
            let mut single_rng = rng::stream(3, domain::BOB_FINE, 0, t);
            let expect_bob = if bob_outcome(&r, &basis, &mut single_rng).unwrap() == 0 {
                1
            } else {
                -1
            };
            assert_eq!(rec.bob_fine, Some(expect_bob));
        }
    }

    #[test]
    fn out_of_subspace_hidden_vector_fails_alice_coarse() {
        let basis = OrthonormalBasis::standard_real(3);
        let coarse = PrivilegedDecomposition::new(basis.clone(), vec![0, 1]).unwrap();
        let pair = [basis.vector(0).clone(), basis.vector(1).clone()];
        let setting = SequentialSetting::new(coarse, vec![pair]).unwrap();
        // |r.e2| is strictly smallest, so the privileged argmin lands on the
        // complement index 2 and Alice's coarse projector reads 0.
        let r = HilbertVector::real_normalized(&[0.7, 0.7, 0.1]).unwrap();
        let mut c = rng::stream(1, domain::BOB_COARSE, 0, 0);
        let mut f = rng::stream(1, domain::BOB_FINE, 0, 0);
        let rec = run_sequential_trial(&r, &setting, &setting, 0, 0, &mut c, &mut f).unwrap();
        assert!(!rec.retained);
        assert_eq!(rec.alice_fine, None);
    }

    #[test]
    fn retention_rate_matches_direct_averaging() {
        // Engine retention vs the Monte Carlo average of
        // indicator(alice coarse) * <r, P_B r> over the same hidden draws.
        let d = 5;
        let (alice, bob) = aligned_settings(d, canonical_phi(d)).unwrap();
        let n = 100_000u64;
        let stats = postselected_statistics(&alice, &bob, n, 77).unwrap();
        let c = &stats.counts[0][0];
        let mut acc = 0.0;
        for t in 0..n {
            let mut hidden = rng::stream(77, domain::HIDDEN_VECTOR, 0, t);
            let r = sample_hidden(d, Field::Complex, &mut hidden).unwrap();
            if crate::werner::coarse_value(&r, alice.coarse()) == 1 {
                acc += bob.coarse_weight(&r);
            }
        }
        let expected = acc / n as f64;
        let got = c.retention_rate();
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (got - expected).abs() < 4.0 * se,
            "retention {got} vs direct average {expected}"
        );
    }

    #[test]
    fn quantum_reference_reduces_to_the_qubit_werner_state() {
        // d = 2, coarse = identity, phi = -1/4: the effective state is the
        // qubit Werner state, whose optimal CHSH is sqrt(2).
        let (alice, bob) = aligned_settings(2, -0.25).unwrap();
        let q = quantum_reference(-0.25, 2, &alice, &bob).unwrap();
        assert!((q.retention - 1.0).abs() < 1e-12);
        assert!((q.chsh_max - std::f64::consts::SQRT_2).abs() < 1e-6);
        // The arm observables are the optimal ones.
        assert!((q.chsh_arms - q.chsh_max).abs() < 1e-6);
    }

    #[test]
    fn aligned_d5_canonical_phi_violates_chsh() {
        // Exact value for aligned rank-2 subspaces at d = 5 and Werner's
        // canonical phi = -19/25: the effective state is a qubit Werner
        // family member with correlation -5/7, so the optimal CHSH is
        // 10 sqrt(2) / 7 ~ 2.0203.
        let d = 5;
        let phi = canonical_phi(d);
        let (alice, bob) = aligned_settings(d, phi).unwrap();
        let q = quantum_reference(phi, d, &alice, &bob).unwrap();
        let expected = 10.0 * std::f64::consts::SQRT_2 / 7.0;
        assert!(
            (q.chsh_max - expected).abs() < 1e-9,
            "got {}, expected {expected}",
            q.chsh_max
        );
        assert!(q.chsh_max > 2.0);
        // Arm combination never beats the settings optimum, which never
        // beats the quantum ceiling.
        assert!(q.chsh_arms <= q.chsh_max + 1e-9);
        assert!(q.chsh_max <= crate::chsh::TSIRELSON_BOUND + 1e-9);
        // Retention: [(d - phi) * 4 + (d phi - 1) * 2] / (d^3 - d) = 0.112.
        assert!((q.retention - 0.112).abs() < 1e-12);
    }

    #[test]
    fn aligned_d5_phi_minus_one_gives_the_singlet() {
        // phi = -1 is the normalized antisymmetric projector; postselecting
        // aligned rank-2 subspaces leaves exactly the two-qubit singlet.
        let (alice, bob) = aligned_settings(5, -1.0).unwrap();
        let q = quantum_reference(-1.0, 5, &alice, &bob).unwrap();
        assert!((q.chsh_max - crate::chsh::TSIRELSON_BOUND).abs() < 1e-9);
    }

    #[test]
    fn hidden_variable_side_respects_the_classical_bound_at_d5() {
        let d = 5;
        let phi = canonical_phi(d);
        let (alice, bob) = aligned_settings(d, phi).unwrap();
        let stats = postselected_statistics(&alice, &bob, 40_000, 13).unwrap();
        assert!(
            stats.chsh.value <= 2.0 + 4.0 * stats.chsh.std_error,
            "hv CHSH {} +- {} broke the classical bound",
            stats.chsh.value,
            stats.chsh.std_error
        );
        // The quantum side violates at the same settings.
        let q = quantum_reference(phi, d, &alice, &bob).unwrap();
        assert!(q.chsh_max > 2.0);
    }

    #[test]
    fn postselected_statistics_validates_inputs() {
        let (alice, bob) = aligned_settings(2, -0.25).unwrap();
        assert!(postselected_statistics(&alice, &bob, 10, 1).is_err());
    }

    #[test]
    fn sequential_setting_rejects_out_of_subspace_fine_pairs() {
        let basis = OrthonormalBasis::standard_real(3);
        let coarse = PrivilegedDecomposition::new(basis.clone(), vec![0, 1]).unwrap();
        // e2 lies outside span{e0, e1}.
        let pair = [basis.vector(0).clone(), basis.vector(2).clone()];
        assert!(SequentialSetting::new(coarse, vec![pair]).is_err());
    }

    #[test]
    fn search_is_deterministic_and_reports_visits() {
        let params = SearchParams {
            d: 2,
            phi: -0.25,
            budget: 1_000,
            seed: 5,
            hv_trials: MIN_SEQUENTIAL_TRIALS,
            restarts: 2,
        };
        let a = search_settings(&params).unwrap();
        let b = search_settings(&params).unwrap();
        assert_eq!(a.visits.len(), b.visits.len());
        assert_eq!(a.best_quantum, b.best_quantum);
        assert!(a.visits.len() as u64 <= params.budget);
        // No violation exists for single ideal measurements on the qubit
        // Werner state: the whole space is the only rank-2 subspace at d=2.
        assert!(a.best_quantum <= 2.0 + 1e-6);
        assert!((a.best_quantum - std::f64::consts::SQRT_2).abs() < 1e-6);
    }
}
