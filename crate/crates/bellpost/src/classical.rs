//! Classical angular-momentum source with threshold readout.
//!
//! A source emits opposite angular momenta; only the unit direction `n`
//! matters. Alice projects `n` on her setting `a` and records +1, -1, or 0
//! depending on whether the projection clears the `1/sqrt(2)` threshold.
//! Bob applies the same rule to `-n.b` (or `+n.b` under the flipped
//! convention, which reproduces the conventional sign of the correlation
//! tables; see [`ReadoutConvention`]).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

/// Unit threshold of the readout rule.
pub const THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

const UNIT_NORM_TOL: f64 = 1e-12;

/// A unit vector in R^3. Construction normalizes, so every held value
/// satisfies `x^2 + y^2 + z^2 = 1` to within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction3 {
    /// Normalize the given components into a direction.
    ///
    /// Errors if the vector is zero or non-finite.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidArgument(
                "direction components must be finite".into(),
            ));
        }
        let norm = (x * x + y * y + z * z).sqrt();
        if norm < 1e-300 {
            return Err(Error::InvalidArgument(
                "cannot normalize the zero vector into a direction".into(),
            ));
        }
        Ok(Direction3 {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Accept components that are already unit norm (within 1e-12).
    pub fn from_unit(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm_sq = x * x + y * y + z * z;
        if (norm_sq - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "expected a unit vector, |v|^2 = {norm_sq}"
            )));
        }
        Ok(Direction3 { x, y, z })
    }

    /// Unit vector at `angle` (radians) from the x-axis in the x-y plane.
    pub fn in_plane(angle: f64) -> Self {
        Direction3 {
            x: angle.cos(),
            y: angle.sin(),
            z: 0.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn dot(&self, other: &Direction3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    fn check_unit(&self, who: &str) -> Result<()> {
        if (self.norm_sq() - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Precondition(format!(
                "{who} is not unit norm (|v|^2 = {})",
                self.norm_sq()
            )));
        }
        Ok(())
    }
}

/// Three-valued measurement record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(i8)]
pub enum Trit {
    Minus = -1,
    Zero = 0,
    Plus = 1,
}

impl Trit {
    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn from_value(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Trit::Minus),
            0 => Ok(Trit::Zero),
            1 => Ok(Trit::Plus),
            other => Err(Error::InvalidArgument(format!(
                "trit value must be -1, 0 or +1, got {other}"
            ))),
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, Trit::Zero)
    }
}

/// Which wing of the experiment is reading out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

/// Sign convention for Bob's readout.
///
/// With `flip_bob = false` Bob thresholds `-n.b` literally. That choice
/// yields correlations of the opposite sign to the conventional tables
/// (e.g. about -0.29 at `a.b = 1`), so the default is `flip_bob = true`,
/// which thresholds `+n.b` and reproduces the usual signs. Flipping the
/// flag negates every correlation exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutConvention {
    pub flip_bob: bool,
}

impl Default for ReadoutConvention {
    fn default() -> Self {
        ReadoutConvention { flip_bob: true }
    }
}

/// One generated coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub setting_a_id: u32,
    pub setting_b_id: u32,
    pub alpha: Trit,
    pub beta: Trit,
}

/// Threshold step: +1 above `1/sqrt(2)`, -1 below `-1/sqrt(2)`, else 0.
/// The dead zone is closed, so hitting a threshold exactly records 0.
#[inline]
fn threshold_sign(projection: f64) -> Trit {
    if projection > THRESHOLD {
        Trit::Plus
    } else if projection < -THRESHOLD {
        Trit::Minus
    } else {
        Trit::Zero
    }
}

/// Draw an isotropic unit direction: three independent standard normals,
/// normalized. The zero vector (probability zero) retries.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction3 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let norm = (x * x + y * y + z * z).sqrt();
        if norm > 1e-12 {
            return Direction3 {
                x: x / norm,
                y: y / norm,
                z: z / norm,
            };
        }
    }
}

/// Apply the readout rule for one wing.
pub fn readout(
    n: Direction3,
    setting: Direction3,
    role: Role,
    convention: ReadoutConvention,
) -> Result<Trit> {
    n.check_unit("source direction")?;
    setting.check_unit("measurement setting")?;
    Ok(readout_unchecked(n, setting, role, convention))
}

#[inline]
fn readout_unchecked(
    n: Direction3,
    setting: Direction3,
    role: Role,
    convention: ReadoutConvention,
) -> Trit {
    let projection = n.dot(&setting);
    match role {
        Role::Alice => threshold_sign(projection),
        Role::Bob => {
            if convention.flip_bob {
                threshold_sign(projection)
            } else {
                threshold_sign(-projection)
            }
        }
    }
}

/// Generate `trials_per_pair` coincidences for every `(a, b)` setting pair.
///
/// Each trial draws a fresh isotropic source direction from its own
/// `(seed, pair, trial)` stream, so the output is a pure function of the
/// arguments and identical under any parallel partitioning.
pub fn run_block(
    settings_a: &[Direction3],
    settings_b: &[Direction3],
    trials_per_pair: u64,
    seed: u64,
    convention: ReadoutConvention,
) -> Result<Vec<TrialRecord>> {
    if settings_a.is_empty() || settings_b.is_empty() {
        return Err(Error::InvalidArgument(
            "settings lists must be non-empty".into(),
        ));
    }
    if trials_per_pair == 0 {
        return Err(Error::InvalidArgument(
            "trials_per_pair must be >= 1".into(),
        ));
    }
    let n_pairs = settings_a.len() * settings_b.len();
    let total = n_pairs as u64 * trials_per_pair;
    let records = (0..total)
        .into_par_iter()
        .map(|flat| {
            let pair = flat / trials_per_pair;
            let trial = flat % trials_per_pair;
            let ia = (pair as usize) / settings_b.len();
            let ib = (pair as usize) % settings_b.len();
            let mut rng = rng::stream(seed, domain::CLASSICAL_TRIAL, pair, trial);
            let n = sample_direction(&mut rng);
            TrialRecord {
                setting_a_id: ia as u32,
                setting_b_id: ib as u32,
                alpha: readout_unchecked(n, settings_a[ia], Role::Alice, convention),
                beta: readout_unchecked(n, settings_b[ib], Role::Bob, convention),
            }
        })
        .collect();
    Ok(records)
}
