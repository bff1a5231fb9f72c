//! Passive Fisher information from a uniform linear array listening to the
//! target's own radiated noise.
//!
//! Each sensor sees the reference-sensor signal through a fractional delay
//! τ_m, applied as a real circulant operator `D_m = Wᴴ Λ_m W`. The stacked
//! observation `y = D s + e` is zero-mean Gaussian with covariance
//! `Σ = σ_s² D Dᵀ + I_M ⊗ R`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::crlb::FimMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::noise::{Ar1Precision, NoiseModel};
use crate::scalar::Real;
use crate::scenario::{NodeId, Scenario};

/// Passive FIMs whose covariance condition estimate exceeds this are
/// rejected rather than returned.
pub const MAX_PASSIVE_CONDITION: f64 = 1e12;

/// Largest tolerated imaginary residue when assembling a real delay kernel,
/// raised to a few hundred ulps per bin for narrow scalars.
const IMAG_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinate {
    X,
    Y,
}

/// Real N×N circulant matrix, stored as its first column.
#[derive(Clone, Debug, PartialEq)]
pub struct Circulant<T> {
    pub kernel: Vec<T>,
}

impl<T: Real> Circulant<T> {
    pub fn n(&self) -> usize {
        self.kernel.len()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        let n = self.n();
        self.kernel[(i + n - j) % n]
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j) * x[j]).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            kernel: self.kernel.iter().map(|&v| v * s).collect(),
        }
    }
}

/// λ_k(τ) for k = 0..N, with the Nyquist bin split so the operator is real.
pub fn delay_spectrum<T: Real>(tau: T, n: usize, ts: T) -> Vec<Complex<T>> {
    let nf = T::from_usize_lossy(n);
    let w = T::TAU() * tau / (nf * ts);
    (0..n)
        .map(|k| {
            if 2 * k < n {
                Complex::from_polar(T::one(), -w * T::from_usize_lossy(k))
            } else if 2 * k == n {
                Complex::new((T::PI() * tau / ts).cos(), T::zero())
            } else {
                Complex::from_polar(T::one(), w * T::from_usize_lossy(n - k))
            }
        })
        .collect()
}

/// dλ_k/dτ.
pub fn delay_spectrum_derivative<T: Real>(tau: T, n: usize, ts: T) -> Vec<Complex<T>> {
    let nf = T::from_usize_lossy(n);
    let lam = delay_spectrum(tau, n, ts);
    (0..n)
        .map(|k| {
            if 2 * k < n {
                lam[k] * Complex::new(T::zero(), -T::TAU() * T::from_usize_lossy(k) / (nf * ts))
            } else if 2 * k == n {
                Complex::new(-(T::PI() / ts) * (T::PI() * tau / ts).sin(), T::zero())
            } else {
                lam[k] * Complex::new(T::zero(), T::TAU() * T::from_usize_lossy(n - k) / (nf * ts))
            }
        })
        .collect()
}

/// First column `h[q] = (1/N) Σ_k λ_k e^{j2πkq/N}` of `Wᴴ Λ W`, with the
/// largest discarded imaginary part.
fn kernel_from_spectrum<T: Real>(spectrum: &[Complex<T>]) -> (Vec<T>, T) {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut max_imag = T::zero();
    let kernel = buf
        .iter()
        .map(|c| {
            max_imag = max_imag.max((c.im * inv_n).abs());
            c.re * inv_n
        })
        .collect();
    (kernel, max_imag)
}

fn real_kernel<T: Real>(spectrum: &[Complex<T>], scale: T, what: &str) -> Result<Vec<T>> {
    let (kernel, max_imag) = kernel_from_spectrum(spectrum);
    let ulps = T::epsilon() * T::from_usize_lossy(64 * spectrum.len());
    if max_imag > T::lit(IMAG_TOLERANCE).max(ulps) * scale.max(T::one()) {
        return Err(Error::Domain(format!(
            "{what}: imaginary residue {} in a real delay operator",
            max_imag.to_f64_lossy()
        )));
    }
    Ok(kernel)
}

/// Stacked per-sensor delay operators of one node, `D = [D_1; …; D_M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayOperator<T> {
    pub blocks: Vec<Circulant<T>>,
    pub spectra: Vec<Vec<Complex<T>>>,
}

impl<T: Real> DelayOperator<T> {
    pub fn num_sensors(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.first().map_or(0, Circulant::n)
    }

    /// The MN×N matrix D.
    pub fn to_dense(&self) -> Matrix<T> {
        stack_dense(&self.blocks)
    }

    pub fn apply(&self, s: &[T]) -> Vec<T> {
        self.blocks.iter().flat_map(|b| b.apply(s)).collect()
    }
}

fn stack_dense<T: Real>(blocks: &[Circulant<T>]) -> Matrix<T> {
    let n = blocks.first().map_or(0, Circulant::n);
    Matrix::from_fn(blocks.len() * n, n, |r, c| blocks[r / n].entry(r % n, c))
}

fn check_even(scenario: &Scenario<impl Real>) -> Result<usize> {
    let n = scenario.num_samples;
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::Config(format!(
            "passive num_samples must be even, got {n}"
        )));
    }
    Ok(n)
}

pub fn build_delay_operator<T: Real>(scenario: &Scenario<T>, node: NodeId) -> Result<DelayOperator<T>> {
    let n = check_even(scenario)?;
    let ts = scenario.passive_sample_period();
    let mut blocks = Vec::new();
    let mut spectra = Vec::new();
    for m in 1..=scenario.node(node).num_sensors {
        let tau = scenario.intersensor_delay(node, m)?;
        let spec = delay_spectrum(tau, n, ts);
        blocks.push(Circulant {
            kernel: real_kernel(&spec, T::one(), "delay operator")?,
        });
        spectra.push(spec);
    }
    Ok(DelayOperator { blocks, spectra })
}

/// dD_m/dβ, where β = eᵀu is the axis cosine that τ_m depends on.
fn delay_operator_axis_derivative<T: Real>(scenario: &Scenario<T>, node: NodeId) -> Result<Vec<Circulant<T>>> {
    let n = check_even(scenario)?;
    let ts = scenario.passive_sample_period();
    (1..=scenario.node(node).num_sensors)
        .map(|m| {
            let lever = scenario.sensor_lever(node, m);
            let tau = scenario.intersensor_delay(node, m)?;
            let spec = delay_spectrum_derivative(tau, n, ts);
            let kernel = real_kernel(&spec, T::PI() / ts, "delay operator derivative")?;
            Ok(Circulant { kernel }.scale(lever))
        })
        .collect()
}

/// ∂D/∂x or ∂D/∂y, one circulant per sensor.
pub fn delay_operator_derivative<T: Real>(
    scenario: &Scenario<T>,
    node: NodeId,
    wrt: Coordinate,
) -> Result<Vec<Circulant<T>>> {
    let g = scenario.axis_cosine_gradient(node)?;
    let dp = match wrt {
        Coordinate::X => g.x,
        Coordinate::Y => g.y,
    };
    Ok(delay_operator_axis_derivative(scenario, node)?
        .iter()
        .map(|c| c.scale(dp))
        .collect())
}

/// Dense Σ and ∂Σ/∂x, ∂Σ/∂y for one node.
#[derive(Clone, Debug)]
pub struct PassiveCovariance<T> {
    pub sigma: Matrix<T>,
    pub d_sigma: [Matrix<T>; 2],
}

fn check_signal_power<T: Real>(sigma_s2: T) -> Result<()> {
    if !(sigma_s2 >= T::zero()) || !sigma_s2.is_finite() {
        return Err(Error::Domain(format!(
            "signal power must be finite and >= 0, got {}",
            sigma_s2.to_f64_lossy()
        )));
    }
    Ok(())
}

fn sigma_and_operator<T: Real>(
    scenario: &Scenario<T>,
    node: NodeId,
    sigma_s2: T,
    noise: &NoiseModel<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_signal_power(sigma_s2)?;
    let noise = noise.with_num_samples(scenario.num_samples);
    let m = scenario.node(node).num_sensors;
    let d = build_delay_operator(scenario, node)?.to_dense();
    let mut sigma = d.matmul(&d.transpose()).scale(sigma_s2).add(&noise.spatial_block_covariance(m)?);
    sigma.symmetrize();
    Ok((sigma, d))
}

/// `Σ = σ_s² D Dᵀ + I_M ⊗ R` alone.
pub fn passive_sigma<T: Real>(scenario: &Scenario<T>, node: NodeId, sigma_s2: T, noise: &NoiseModel<T>) -> Result<Matrix<T>> {
    Ok(sigma_and_operator(scenario, node, sigma_s2, noise)?.0)
}

pub fn passive_covariance<T: Real>(
    scenario: &Scenario<T>,
    node: NodeId,
    sigma_s2: T,
    noise: &NoiseModel<T>,
) -> Result<PassiveCovariance<T>> {
    let (sigma, d) = sigma_and_operator(scenario, node, sigma_s2, noise)?;
    let dt = d.transpose();
    let d_sigma = |c| -> Result<Matrix<T>> {
        let half = stack_dense(&delay_operator_derivative(scenario, node, c)?).matmul(&dt);
        Ok(half.add(&half.transpose()).scale(sigma_s2))
    };
    let (dx, dy) = (d_sigma(Coordinate::X)?, d_sigma(Coordinate::Y)?);
    Ok(PassiveCovariance {
        sigma,
        d_sigma: [dx, dy],
    })
}

/// Rough upper bound on cond(Σ): the AR(1) spectrum spans
/// [1/(1+|a|)², 1/(1−|a|)²] and ‖D‖² ≤ M.
pub fn passive_condition_estimate<T: Real>(sigma_s2: T, num_sensors: usize, noise: &NoiseModel<T>) -> T {
    let a = noise.ar_coefficient.abs();
    let lo = T::one() / ((T::one() + a) * (T::one() + a));
    let hi = T::one() / ((T::one() - a) * (T::one() - a));
    (hi + sigma_s2 * T::from_usize_lossy(num_sensors)) / lo
}

/// Gaussian FIM `½ tr(Σ⁻¹ ∂_iΣ Σ⁻¹ ∂_jΣ)` by dense factorization. O((MN)³);
/// meant for cross-checks.
pub fn fim_passive_dense<T: Real>(
    scenario: &Scenario<T>,
    node: NodeId,
    sigma_s2: T,
    noise: &NoiseModel<T>,
) -> Result<FimMatrix<T>> {
    let cov = passive_covariance(scenario, node, sigma_s2, noise)?;
    let chol = cov.sigma.cholesky("passive covariance")?;
    let a = [chol.solve_matrix(&cov.d_sigma[0]), chol.solve_matrix(&cov.d_sigma[1])];
    let half = T::lit(0.5);
    let mut fim = FimMatrix::zeros();
    for i in 0..2 {
        for j in 0..2 {
            fim.0[i][j] = half * a[i].trace_of_product(&a[j]);
        }
    }
    let sym = half * (fim.0[0][1] + fim.0[1][0]);
    fim.0[0][1] = sym;
    fim.0[1][0] = sym;
    Ok(fim)
}

/// `P · X` for a tridiagonal AR(1) precision acting on the rows of `X`.
fn precision_times<T: Real>(p: &Ar1Precision<T>, x: &Matrix<T>) -> Matrix<T> {
    let a = p.off_diag();
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let mut v = p.diag(i) * x[(i, j)];
        if i > 0 {
            v = v + a * x[(i - 1, j)];
        }
        if i + 1 < x.rows() {
            v = v + a * x[(i + 1, j)];
        }
        v
    })
}

/// Passive FIM of one node in O(M N³).
///
/// Σ depends on p only through the axis cosine β, so the position block is
/// `I_β ∇β ∇βᵀ`. With `U = [D, ∂D/∂β]`, `Q = Uᵀ (I ⊗ R⁻¹) U` and
/// `A = I + σ² Q₀₀`, the Woodbury identity gives the blocks of `K = UᵀΣ⁻¹U`
/// as `K₀₀ = A⁻¹Q₀₀`, `K₀β = A⁻¹Q₀β`, `Kββ = Qββ − σ² Qβ₀ A⁻¹ Q₀β`, and
/// `I_β = σ⁴ [tr(K₀β²) + tr(Kββ K₀₀)]`. The η row and column are zero.
pub fn fim_passive<T: Real>(
    scenario: &Scenario<T>,
    node: NodeId,
    sigma_s2: T,
    noise: &NoiseModel<T>,
) -> Result<FimMatrix<T>> {
    check_signal_power(sigma_s2)?;
    noise.validate()?;
    let n = check_even(scenario)?;
    let m = scenario.node(node).num_sensors;
    let cond = passive_condition_estimate(sigma_s2, m, noise);
    if !(cond <= T::lit(MAX_PASSIVE_CONDITION)) {
        return Err(Error::Conditioning {
            context: format!("passive covariance at node {}", node.number()),
            condition: cond.to_f64_lossy(),
            limit: MAX_PASSIVE_CONDITION,
        });
    }
    let grad = scenario.axis_cosine_gradient(node)?;
    if sigma_s2 == T::zero() {
        return Ok(FimMatrix::zeros());
    }
    let ops = build_delay_operator(scenario, node)?;
    let dops = delay_operator_axis_derivative(scenario, node)?;
    let prec = Ar1Precision::new(noise.ar_coefficient, n);

    let mut q00 = Matrix::zeros(n, n);
    let mut q0b = Matrix::zeros(n, n);
    let mut qbb = Matrix::zeros(n, n);
    for (c, dc) in ops.blocks.iter().zip(&dops) {
        let c = c.to_dense();
        let pc = precision_times(&prec, &c);
        q00 = q00.add(&c.tr_matmul(&pc));
        if dc.kernel.iter().all(|&v| v == T::zero()) {
            continue;
        }
        let dc = dc.to_dense();
        let pdc = precision_times(&prec, &dc);
        q0b = q0b.add(&c.tr_matmul(&pdc));
        qbb = qbb.add(&dc.tr_matmul(&pdc));
    }
    q00.symmetrize();
    qbb.symmetrize();

    let a_mat = Matrix::identity(n).add(&q00.scale(sigma_s2));
    let chol = a_mat.cholesky("passive Woodbury core")?;
    let k00 = chol.solve_matrix(&q00);
    let k0b = chol.solve_matrix(&q0b);
    let kbb = qbb.sub(&q0b.tr_matmul(&k0b).scale(sigma_s2));
    let s2 = sigma_s2 * sigma_s2;
    let info_beta = s2 * (k0b.trace_of_product(&k0b) + kbb.trace_of_product(&k00));

    let mut fim = FimMatrix::zeros();
    fim.add_outer([grad.x, grad.y, T::zero()], info_beta.max(T::zero()));
    Ok(fim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{SensorNode, TargetState, Vec2};

    fn scenario(n: usize, m: usize) -> Scenario<f64> {
        Scenario {
            node1: SensorNode::new(Vec2::new(-1000.0, 0.0), m, 0.125),
            node2: SensorNode::new(Vec2::new(1000.0, 0.0), m, 0.125),
            target: TargetState::from_knots(Vec2::new(300.0, 800.0), 9.72, 90.0, 1.0),
            sound_speed: 1500.0,
            sample_rate: 24_000.0,
            num_samples: n,
            passive_sample_rate: n as f64 / 0.05,
        }
    }

    #[test]
    fn zero_delay_is_identity() {
        let spec = delay_spectrum(0.0f64, 8, 1.0);
        let (h, im) = kernel_from_spectrum(&spec);
        assert!(im < 1e-15);
        assert!((h[0] - 1.0).abs() < 1e-14);
        assert!(h[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn integer_delay_is_cyclic_shift() {
        let ts = 0.5f64;
        let spec = delay_spectrum(2.0 * ts, 16, ts);
        let (h, _) = kernel_from_spectrum(&spec);
        for (q, v) in h.iter().enumerate() {
            let expect = if q == 2 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-13, "q={q} {v}");
        }
    }

    #[test]
    fn spectrum_derivative_matches_finite_difference() {
        let (n, ts, tau) = (10, 0.1, 0.037);
        let d = delay_spectrum_derivative(tau, n, ts);
        let h = 1e-7;
        let (p, q) = (delay_spectrum(tau + h, n, ts), delay_spectrum(tau - h, n, ts));
        for k in 0..n {
            let fd = (p[k] - q[k]) / (2.0 * h);
            assert!((fd - d[k]).norm() < 1e-5 * (1.0 + d[k].norm()), "k={k}");
        }
    }

    #[test]
    fn odd_n_is_rejected() {
        let s = scenario(9, 2);
        assert!(matches!(build_delay_operator(&s, NodeId::One), Err(Error::Config(_))));
    }

    #[test]
    fn reference_sensor_has_no_delay() {
        let s = scenario(16, 3);
        let d = build_delay_operator(&s, NodeId::Two).unwrap();
        assert_eq!(d.blocks[0].kernel[0], 1.0);
        assert_eq!(d.num_sensors(), 3);
        let x: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let y = d.apply(&x);
        let dense = d.to_dense().matvec(&x);
        for (a, b) in y.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_dense_trace_formula() {
        let noise = NoiseModel::new(0.5, 16).unwrap();
        for &(n, m, s2) in &[(16, 4, 3.0), (12, 2, 0.2), (8, 3, 40.0)] {
            let s = scenario(n, m);
            for node in NodeId::BOTH {
                let fast = fim_passive(&s, node, s2, &noise).unwrap();
                let dense = fim_passive_dense(&s, node, s2, &noise).unwrap();
                let scale = dense.0[0][0].abs().max(dense.0[1][1].abs());
                assert!(scale > 0.0);
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((fast.0[i][j] - dense.0[i][j]).abs() <= 1e-9 * scale, "{fast:?} vs {dense:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn single_sensor_and_silent_target_give_zero() {
        let noise = NoiseModel::new(0.3, 16).unwrap();
        let f = fim_passive(&scenario(16, 1), NodeId::One, 5.0, &noise).unwrap();
        assert_eq!(f, FimMatrix::zeros());
        let f = fim_passive(&scenario(16, 4), NodeId::One, 0.0, &noise).unwrap();
        assert_eq!(f, FimMatrix::zeros());
    }

    #[test]
    fn ill_conditioned_noise_is_rejected() {
        let noise = NoiseModel::new(0.9999999, 16).unwrap();
        let r = fim_passive(&scenario(16, 2), NodeId::One, 1.0, &noise);
        assert!(matches!(r, Err(Error::Conditioning { .. })));
    }
}
