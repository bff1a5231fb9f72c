//! Fisher information fusion and the square-root Cramér-Rao bounds for
//! position and Doppler scale.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Fused FIMs whose diagonally scaled condition number exceeds this are
/// reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Symmetric 3×3 information matrix over θ = [x, y, η].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FimMatrix<T>(pub [[T; 3]; 3]);

impl<T: Real> FimMatrix<T> {
    pub fn zeros() -> Self {
        Self([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = T::one();
        }
        m
    }

    pub fn diagonal(d: [T; 3]) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    /// `Σₖ aₖ aₖᵀ` style accumulation of one outer product.
    pub fn add_outer(&mut self, a: [T; 3], weight: T) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] = self.0[i][j] + weight * a[i] * a[j];
            }
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[i][j]
    }

    pub fn scale(&self, s: T) -> Self {
        let mut m = *self;
        for row in &mut m.0 {
            for v in row {
                *v = *v * s;
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(3, 3, |i, j| self.0[i][j])
    }

    pub fn max_asymmetry(&self) -> T {
        self.to_matrix().max_asymmetry()
    }

    pub fn eigenvalues(&self) -> [T; 3] {
        let e = self.to_matrix().symmetric_eigenvalues();
        [e[0], e[1], e[2]]
    }

    /// Symmetric to 1e−12 (relative to the largest entry) with eigenvalues
    /// ≥ −1e−9·trace.
    pub fn is_symmetric_psd(&self) -> bool {
        let scale = self.to_matrix().max_abs().max(T::min_positive_value());
        if self.max_asymmetry() > T::lit(1e-12) * scale {
            return false;
        }
        let tr = self.trace().abs();
        self.eigenvalues()[0] >= -T::lit(1e-9) * tr
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl<T: Real> Add for FimMatrix<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = m.0[i][j] + rhs.0[i][j];
            }
        }
        m
    }
}

/// Which information sources enter the fused FIM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FusionCase {
    /// Passive bearings from both nodes.
    PassiveOnly = 1,
    /// Passive bearings plus the bistatic echo.
    Fused = 2,
    /// Bistatic echo alone, the waveform used purely for sensing.
    BistaticOnly = 3,
}

impl FusionCase {
    pub const ALL: [FusionCase; 3] = [FusionCase::PassiveOnly, FusionCase::Fused, FusionCase::BistaticOnly];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for FusionCase {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(FusionCase::PassiveOnly),
            2 => Ok(FusionCase::Fused),
            3 => Ok(FusionCase::BistaticOnly),
            other => Err(Error::Config(format!("case must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<FusionCase> for u8 {
    fn from(c: FusionCase) -> u8 {
        c.id()
    }
}

impl fmt::Display for FusionCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}", self.id())
    }
}

pub fn fuse<T: Real>(case: FusionCase, fim_n1: &FimMatrix<T>, fim_n2: &FimMatrix<T>, fim_bs: &FimMatrix<T>) -> FimMatrix<T> {
    match case {
        FusionCase::PassiveOnly => *fim_n1 + *fim_n2,
        FusionCase::Fused => *fim_n1 + *fim_n2 + *fim_bs,
        FusionCase::BistaticOnly => *fim_bs,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrlbFlag {
    Ok,
    /// Position finite, η singular (always the case for case 1).
    EtaSingular,
    Singular,
}

impl CrlbFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CrlbFlag::Ok => "ok",
            CrlbFlag::EtaSingular => "eta_singular",
            CrlbFlag::Singular => "singular",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbResult<T> {
    /// √([I⁻¹]₁₁ + [I⁻¹]₂₂), meters; `None` when singular.
    pub sqrt_crlb_position: Option<T>,
    /// √[I⁻¹]₃₃; `None` when singular or unobservable.
    pub sqrt_crlb_eta: Option<T>,
    pub case: FusionCase,
    /// Condition number of the diagonally scaled (unit-diagonal) FIM block
    /// that was inverted; infinite when a diagonal entry vanishes.
    pub condition_number: T,
}

impl<T: Real> CrlbResult<T> {
    pub fn flag(&self) -> CrlbFlag {
        match (self.sqrt_crlb_position, self.sqrt_crlb_eta) {
            (Some(_), Some(_)) => CrlbFlag::Ok,
            (Some(_), None) if self.case == FusionCase::PassiveOnly => CrlbFlag::EtaSingular,
            _ => CrlbFlag::Singular,
        }
    }
}

/// Inverts the leading `n`×`n` block of `fim` after scaling it to unit
/// diagonal. Returns the inverse diagonal and the scaled condition number,
/// or `None` for the inverse when the block is singular.
fn scaled_inverse_diag<T: Real>(fim: &FimMatrix<T>, n: usize) -> (Option<Vec<T>>, T) {
    let d: Vec<T> = (0..n).map(|i| fim.get(i, i)).collect();
    if d.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
        return (None, T::infinity());
    }
    let inv_sqrt: Vec<T> = d.iter().map(|&v| T::one() / v.sqrt()).collect();
    let scaled = Matrix::from_fn(n, n, |i, j| fim.get(i, j) * inv_sqrt[i] * inv_sqrt[j]);
    let eig = scaled.symmetric_eigenvalues();
    let (lo, hi) = (eig[0], eig[n - 1]);
    let cond = if lo > T::zero() { hi / lo } else { T::infinity() };
    if !(cond <= T::lit(SINGULAR_CONDITION)) {
        return (None, cond);
    }
    match scaled.cholesky("fused FIM") {
        Ok(ch) => {
            let inv = ch.inverse();
            let diag = (0..n).map(|i| inv[(i, i)] * inv_sqrt[i] * inv_sqrt[i]).collect();
            (Some(diag), cond)
        }
        Err(_) => (None, T::infinity()),
    }
}

/// Square-root CRLB of position and Doppler scale for a fused FIM.
///
/// Case 1 inverts only the position block since passive covariances carry no
/// Doppler information.
pub fn crlb<T: Real>(fim: &FimMatrix<T>, case: FusionCase) -> CrlbResult<T> {
    let n = if case == FusionCase::PassiveOnly { 2 } else { 3 };
    let (diag, condition_number) = scaled_inverse_diag(fim, n);
    let (pos, eta) = match diag {
        Some(d) => (
            Some((d[0] + d[1]).max(T::zero()).sqrt()),
            if n == 3 { Some(d[2].max(T::zero()).sqrt()) } else { None },
        ),
        None => (None, None),
    };
    CrlbResult {
        sqrt_crlb_position: pos,
        sqrt_crlb_eta: eta,
        case,
        condition_number,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_psd(seed: [f64; 9], rank_boost: f64) -> FimMatrix<f64> {
        let mut m = FimMatrix::zeros();
        for k in 0..3 {
            m.add_outer([seed[3 * k], seed[3 * k + 1], seed[3 * k + 2]], 1.0);
        }
        m + FimMatrix::identity().scale(rank_boost)
    }

    #[test]
    fn identity_and_diagonal() {
        let r = crlb(&FimMatrix::<f64>::identity(), FusionCase::Fused);
        assert!((r.sqrt_crlb_position.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((r.sqrt_crlb_eta.unwrap() - 1.0).abs() < 1e-15);
        let r = crlb(&FimMatrix::diagonal([4.0, 4.0, 25.0]), FusionCase::BistaticOnly);
        assert!((r.sqrt_crlb_position.unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r.sqrt_crlb_eta.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(r.flag(), CrlbFlag::Ok);
    }

    #[test]
    fn case1_inverts_position_block_only() {
        let mut f = FimMatrix::zeros();
        f.0[0][0] = 4.0;
        f.0[1][1] = 1.0;
        let r = crlb(&f, FusionCase::PassiveOnly);
        assert!((r.sqrt_crlb_position.unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.sqrt_crlb_eta, None);
        assert_eq!(r.flag(), CrlbFlag::EtaSingular);
    }

    #[test]
    fn collinear_bearings_are_singular() {
        // two rank-one bearing FIMs with the same gradient direction
        let mut f = FimMatrix::<f64>::zeros();
        f.add_outer([0.0, 1e-3, 0.0], 5.0);
        f.add_outer([0.0, 2e-3, 0.0], 3.0);
        let r = crlb(&f, FusionCase::PassiveOnly);
        assert_eq!(r.sqrt_crlb_position, None);
        assert_eq!(r.flag(), CrlbFlag::Singular);
        assert!(r.condition_number.is_infinite());
    }

    #[test]
    fn fusion_is_additive() {
        let a = random_psd([1.0, 0.2, 0.0, -0.3, 0.5, 0.0, 0.1, 0.1, 0.0], 0.0);
        let b = random_psd([0.3, -0.2, 0.0, 0.4, 0.1, 0.0, 0.0, 0.0, 0.0], 0.0);
        let bs = random_psd([0.2, 0.1, 3.0, -0.1, 0.4, 1.0, 0.5, 0.0, 0.2], 0.0);
        let c1 = fuse(FusionCase::PassiveOnly, &a, &b, &bs);
        let c2 = fuse(FusionCase::Fused, &a, &b, &bs);
        let c3 = fuse(FusionCase::BistaticOnly, &a, &b, &bs);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c2.0[i][j] - c1.0[i][j], bs.0[i][j] + (a.0[i][j] + b.0[i][j]) - c1.0[i][j]);
            }
        }
        assert_eq!(c3, bs);
        for f in [c1, c2, c3] {
            assert!(f.is_symmetric_psd());
        }
    }

    #[test]
    fn case_ids_round_trip() {
        for c in FusionCase::ALL {
            assert_eq!(FusionCase::try_from(c.id()).unwrap(), c);
        }
        assert!(FusionCase::try_from(4).is_err());
    }

    proptest! {
        #[test]
        fn scaling_fim_scales_bound(seed in prop::array::uniform9(-2.0f64..2.0), alpha in 0.01f64..100.0) {
            let f = random_psd(seed, 0.1);
            let r1 = crlb(&f, FusionCase::Fused);
            let r2 = crlb(&f.scale(alpha), FusionCase::Fused);
            let k = 1.0 / alpha.sqrt();
            let (p1, p2) = (r1.sqrt_crlb_position.unwrap(), r2.sqrt_crlb_position.unwrap());
            prop_assert!((p2 - k * p1).abs() <= 1e-12 * p2.max(k * p1));
            let (e1, e2) = (r1.sqrt_crlb_eta.unwrap(), r2.sqrt_crlb_eta.unwrap());
            prop_assert!((e2 - k * e1).abs() <= 1e-12 * e2.max(k * e1));
        }

        #[test]
        fn more_information_never_hurts(seed in prop::array::uniform9(-2.0f64..2.0), extra in prop::array::uniform9(-2.0f64..2.0)) {
            let base = random_psd(seed, 0.05);
            let more = base + random_psd(extra, 0.0);
            let (r0, r1) = (crlb(&base, FusionCase::Fused), crlb(&more, FusionCase::Fused));
            prop_assert!(r1.sqrt_crlb_position.unwrap() <= r0.sqrt_crlb_position.unwrap() * (1.0 + 1e-12));
            prop_assert!(r1.sqrt_crlb_eta.unwrap() <= r0.sqrt_crlb_eta.unwrap() * (1.0 + 1e-12));
        }
    }
}
