//! Post-processing of trajectories: spectra of time series and mirror-mirror
//! entanglement.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::DynamicsError;
use crate::hilbert::HilbertSpace;
use crate::linalg::eigvalsh;
use crate::spectrum::EigenSystem;

/// Relative spacing error allowed in a sample grid before it is rejected.
const GRID_TOL: f64 = 1e-6;

/// One-sided amplitude spectrum of a real signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySpectrum {
    /// Angular frequencies `2πk/(N dt)`.
    pub frequencies: Vec<f64>,
    /// `|X_k| / N`.
    pub magnitudes: Vec<f64>,
    pub bin_width: f64,
}

impl FrequencySpectrum {
    /// Local maxima above the zero bin, strongest first.
    pub fn peaks(&self) -> Vec<(f64, f64)> {
        let m = &self.magnitudes;
        let mut out: Vec<(f64, f64)> = (1..m.len())
            .filter(|&k| m[k] > m[k - 1] && (k + 1 == m.len() || m[k] >= m[k + 1]))
            .map(|k| (self.frequencies[k], m[k]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }

    /// Bin index closest to `omega`.
    pub fn bin_of(&self, omega: f64) -> usize {
        ((omega / self.bin_width).round().max(0.0) as usize).min(self.frequencies.len().saturating_sub(1))
    }
}

/// FFT of `series` sampled at the uniform `times`.
pub fn fft_signal(times: &[f64], series: &[f64]) -> Result<FrequencySpectrum, DynamicsError> {
    if times.len() != series.len() {
        return Err(DynamicsError::Dimension { expected: times.len(), got: series.len() });
    }
    if times.len() < 4 {
        return Err(DynamicsError::TimeGrid);
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(DynamicsError::TimeGrid);
    }
    let worst = times.windows(2).map(|w| ((w[1] - w[0]) / dt - 1.0).abs()).fold(0.0, f64::max);
    if worst > GRID_TOL {
        return Err(DynamicsError::NonUniformGrid(worst));
    }
    let mut buf: Vec<C64> = series.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin_width = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let half = n / 2 + 1;
    Ok(FrequencySpectrum {
        frequencies: (0..half).map(|k| k as f64 * bin_width).collect(),
        magnitudes: buf[..half].iter().map(|c| c.norm() / n as f64).collect(),
        bin_width,
    })
}

/// Mirror state `Tr_cavity[U ρ U†]` for an eigenbasis density matrix over the
/// lowest `ρ.nrows()` eigenstates.
pub fn mirror_reduced_from_eigenbasis(eig: &EigenSystem, rho: &Array2<C64>) -> Array2<C64> {
    let space = eig.space;
    let d = rho.nrows();
    let m = space.n_m1 * space.n_m2;
    let u = eig.states.slice(s![.., ..d]);
    let mut out = Array2::<C64>::zeros((m, m));
    for n in 0..space.n_cav {
        let v = u.slice(s![n * m..(n + 1) * m, ..]);
        let vr = v.dot(rho);
        out += &vr.dot(&v.t().mapv(|c| c.conj()));
    }
    out
}

/// Mirror state `Tr_cavity |ψ⟩⟨ψ|` for a bare-basis state vector.
pub fn mirror_reduced_from_pure(space: HilbertSpace, psi: &Array1<C64>) -> Array2<C64> {
    let m = space.n_m1 * space.n_m2;
    let mut out = Array2::<C64>::zeros((m, m));
    for n in 0..space.n_cav {
        let block = psi.slice(s![n * m..(n + 1) * m]);
        for i in 0..m {
            for j in 0..m {
                out[[i, j]] += block[i] * block[j].conj();
            }
        }
    }
    out
}

/// Trace norm of the partial transpose on mirror 2.
fn partial_transpose_trace_norm(rho: &Array2<C64>, n_m1: usize, n_m2: usize) -> f64 {
    let m = n_m1 * n_m2;
    assert_eq!(rho.dim(), (m, m), "mirror state has wrong shape");
    let mut pt = Array2::<C64>::zeros((m, m));
    for k in 0..n_m1 {
        for q in 0..n_m2 {
            for kp in 0..n_m1 {
                for qp in 0..n_m2 {
                    pt[[k * n_m2 + q, kp * n_m2 + qp]] = rho[[k * n_m2 + qp, kp * n_m2 + q]];
                }
            }
        }
    }
    let sym = (&pt + &pt.t().mapv(|c| c.conj())).mapv(|c| c * 0.5);
    match eigvalsh(&sym) {
        Ok(ev) => ev.iter().map(|x| x.abs()).sum(),
        Err(_) => f64::NAN,
    }
}

/// `log₂ ‖ρ^{T₂}‖₁` of a two-mirror state.
pub fn log_negativity(rho: &Array2<C64>, n_m1: usize, n_m2: usize) -> f64 {
    partial_transpose_trace_norm(rho, n_m1, n_m2).log2()
}

/// `(‖ρ^{T₂}‖₁ − 1)/2` of a two-mirror state.
pub fn negativity(rho: &Array2<C64>, n_m1: usize, n_m2: usize) -> f64 {
    (partial_transpose_trace_norm(rho, n_m1, n_m2) - 1.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_space, FockLabel};
    use approx::assert_abs_diff_eq;

    #[test]
    fn fft_finds_tone() {
        let dt = 0.5;
        let n = 400;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let w = 2.0 * std::f64::consts::PI * 25.0 / (n as f64 * dt);
        let x: Vec<f64> = times.iter().map(|t| 0.3 + (w * t).cos()).collect();
        let sp = fft_signal(&times, &x).unwrap();
        assert_abs_diff_eq!(sp.magnitudes[0], 0.3, epsilon = 1e-12);
        let (f, a) = sp.peaks()[0];
        assert_abs_diff_eq!(f, w, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert_eq!(sp.bin_of(w), 25);
    }

    #[test]
    fn fft_rejects_irregular_grid() {
        let times = [0.0, 1.0, 2.0, 3.5, 4.0];
        assert!(matches!(fft_signal(&times, &[0.0; 5]), Err(DynamicsError::NonUniformGrid(_))));
    }

    #[test]
    fn bell_pair_has_unit_log_negativity() {
        let space = make_space(2, 3, 3).unwrap();
        let mut psi = Array1::zeros(space.dim());
        let s = 0.5f64.sqrt();
        psi[space.index(FockLabel::new(1, 0, 0)).unwrap()] = C64::new(s, 0.0);
        psi[space.index(FockLabel::new(0, 1, 0)).unwrap()] = C64::new(s, 0.0);
        let rho = mirror_reduced_from_pure(space, &psi);
        assert_abs_diff_eq!(log_negativity(&rho, 3, 3), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(negativity(&rho, 3, 3), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn product_state_is_separable() {
        let space = make_space(2, 3, 3).unwrap();
        let psi = space.basis_state(FockLabel::new(1, 2, 1)).unwrap();
        let rho = mirror_reduced_from_pure(space, &psi);
        assert_abs_diff_eq!(log_negativity(&rho, 3, 3), 0.0, epsilon = 1e-12);
    }
}
