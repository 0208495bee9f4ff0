//! Single-qubit tomography from six projection counts via Stokes parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{expected_output_state, StateLabel, TimeBinQubit};
use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-10;

/// Projection counts in the six cardinal states. Values are usually integer
/// counts; time-normalized inputs may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyCounts {
    pub n_e: f64,
    pub n_l: f64,
    pub n_plus: f64,
    pub n_minus: f64,
    pub n_plus_i: f64,
    pub n_minus_i: f64,
}

impl TomographyCounts {
    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::input("tomography counts must be finite and >= 0"));
        }
        if all.iter().all(|&v| v == 0.0) {
            return Err(Error::input("tomography needs at least one non-zero count"));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 6] {
        [
            self.n_e,
            self.n_l,
            self.n_plus,
            self.n_minus,
            self.n_plus_i,
            self.n_minus_i,
        ]
    }

    pub fn get(&self, label: StateLabel) -> f64 {
        match label {
            StateLabel::E => self.n_e,
            StateLabel::L => self.n_l,
            StateLabel::Plus => self.n_plus,
            StateLabel::Minus => self.n_minus,
            StateLabel::PlusI => self.n_plus_i,
            StateLabel::MinusI => self.n_minus_i,
        }
    }

    pub fn set(&mut self, label: StateLabel, value: f64) {
        let slot = match label {
            StateLabel::E => &mut self.n_e,
            StateLabel::L => &mut self.n_l,
            StateLabel::Plus => &mut self.n_plus,
            StateLabel::Minus => &mut self.n_minus,
            StateLabel::PlusI => &mut self.n_plus_i,
            StateLabel::MinusI => &mut self.n_minus_i,
        };
        *slot = value;
    }

    /// Expected counts of `total` copies of `rho` per measurement basis.
    pub fn expected(rho: &DensityMatrix, total: f64) -> Self {
        let mut c = TomographyCounts::default();
        for label in StateLabel::ALL {
            c.set(label, total * rho.expectation(&label.qubit()));
        }
        c
    }
}

/// Stokes vector `(S0, S1, S2, S3)` with `S1` along `|+>`, `S2` along `|+i>`
/// and `S3` along `|e>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stokes {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl Stokes {
    /// Length of the Bloch vector `|S| / S0`.
    pub fn bloch_length(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
    }
}

/// Raw Stokes parameters from the count differences.
pub fn stokes_from_counts(c: &TomographyCounts) -> Result<Stokes> {
    c.validate()?;
    Ok(Stokes {
        s0: c.n_e + c.n_l,
        s1: c.n_plus - c.n_minus,
        s2: c.n_plus_i - c.n_minus_i,
        s3: c.n_e - c.n_l,
    })
}

/// Stokes parameters after rescaling each basis pair to the mean pair total,
/// which removes flux differences between the three measurement settings.
/// A basis with no counts contributes a zero component.
pub fn normalized_stokes(c: &TomographyCounts) -> Result<Stokes> {
    let raw = stokes_from_counts(c)?;
    let totals = [c.n_plus + c.n_minus, c.n_plus_i + c.n_minus_i, c.n_e + c.n_l];
    let measured: Vec<f64> = totals.iter().copied().filter(|t| *t > 0.0).collect();
    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    let scale = |s: f64, t: f64| if t > 0.0 { s * mean / t } else { 0.0 };
    Ok(Stokes {
        s0: mean,
        s1: scale(raw.s1, totals[0]),
        s2: scale(raw.s2, totals[1]),
        s3: scale(raw.s3, totals[2]),
    })
}

/// 2x2 density matrix in the `(|e>, |l>)` basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    m: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace.
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::input("density matrix entries must be finite"));
        }
        let herm = (m[0][1] - m[1][0].conj()).norm() + m[0][0].im.abs() + m[1][1].im.abs();
        if herm > HERMITIAN_TOL {
            return Err(Error::input("density matrix is not Hermitian"));
        }
        let tr = (m[0][0] + m[1][1]).re;
        if (tr - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::input(format!("density matrix trace is {tr}, expected 1")));
        }
        Ok(DensityMatrix { m })
    }

    /// `(I + r . sigma) / 2`.
    pub fn from_bloch(r: [f64; 3]) -> Self {
        let [x, y, z] = r;
        DensityMatrix {
            m: [
                [
                    Complex64::new((1.0 + z) / 2.0, 0.0),
                    Complex64::new(x / 2.0, -y / 2.0),
                ],
                [
                    Complex64::new(x / 2.0, y / 2.0),
                    Complex64::new((1.0 - z) / 2.0, 0.0),
                ],
            ],
        }
    }

    pub fn pure(psi: &TimeBinQubit) -> Self {
        Self::from_bloch(psi.bloch())
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.m
    }

    pub fn trace(&self) -> f64 {
        (self.m[0][0] + self.m[1][1]).re
    }

    pub fn bloch(&self) -> [f64; 3] {
        let off = self.m[1][0];
        [2.0 * off.re, 2.0 * off.im, (self.m[0][0] - self.m[1][1]).re]
    }

    pub fn bloch_length(&self) -> f64 {
        let [x, y, z] = self.bloch();
        (x * x + y * y + z * z).sqrt()
    }

    /// Eigenvalues in ascending order, `(1 -/+ |r|) / 2` for unit trace.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let t = self.trace();
        let r = self.bloch_length();
        [(t - r) / 2.0, (t + r) / 2.0]
    }

    pub fn is_physical(&self) -> bool {
        self.eigenvalues()[0] >= -EIGEN_TOL
    }

    /// `<psi| rho |psi>`.
    pub fn expectation(&self, psi: &TimeBinQubit) -> f64 {
        let a = psi.amplitudes();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                acc += a[i].conj() * self.m[i][j] * a[j];
            }
        }
        acc.re
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Builds `rho = (S0 I + S1 sx + S2 sy + S3 sz) / (2 S0)`.
pub fn density_from_stokes(s: &Stokes) -> Result<DensityMatrix> {
    if !(s.s0 > 0.0) || !s.s0.is_finite() {
        return Err(Error::input(format!("S0 must be > 0, got {}", s.s0)));
    }
    Ok(DensityMatrix::from_bloch([s.s1 / s.s0, s.s2 / s.s0, s.s3 / s.s0]))
}

/// Projects a Bloch vector longer than 1 back onto the sphere. Physical
/// matrices are returned untouched.
pub fn physicality_repair(rho: &DensityMatrix) -> DensityMatrix {
    if rho.eigenvalues()[0] >= 0.0 {
        return *rho;
    }
    let r = rho.bloch_length();
    let [x, y, z] = rho.bloch();
    DensityMatrix::from_bloch([x / r, y / r, z / r])
}

pub fn state_fidelity(rho: &DensityMatrix, psi: &TimeBinQubit) -> Result<f64> {
    if !rho.is_physical() {
        return Err(Error::input(format!(
            "density matrix has a negative eigenvalue ({:.3e}); repair it first",
            rho.eigenvalues()[0]
        )));
    }
    // Rounding can push a pure-state overlap just past 1.
    Ok(rho.expectation(psi).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub stokes: Stokes,
    pub rho: DensityMatrix,
    /// True when the raw reconstruction was nonphysical and got projected.
    pub repaired: bool,
    pub expected_state: TimeBinQubit,
    pub fidelity: f64,
}

/// Reconstructs the teleported state and scores it against `sigma_y` applied
/// to the prepared input.
pub fn tomography_pipeline(
    counts: &TomographyCounts,
    expected_input: &TimeBinQubit,
) -> Result<TomographyResult> {
    let stokes = normalized_stokes(counts)?;
    let raw = density_from_stokes(&stokes)?;
    let rho = physicality_repair(&raw);
    let expected_state = expected_output_state(expected_input);
    let fidelity = state_fidelity(&rho, &expected_state)?;
    Ok(TomographyResult {
        stokes,
        rho,
        repaired: rho != raw,
        expected_state,
        fidelity,
    })
}
