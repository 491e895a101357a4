//! Adaptive Dormand–Prince 5(4) integration of complex ODE systems.

use num_complex::Complex64 as C64;

use crate::error::DynamicsError;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 50_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrator statistics.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_calls: usize,
}

/// Stateful Dormand–Prince stepper for `dy/dt = f(t, y)`.
pub struct DormandPrince<F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    f: F,
    tol: Tolerances,
    t: f64,
    y: Vec<C64>,
    h: f64,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    fresh: bool,
    pub stats: StepStats,
}

impl<F> DormandPrince<F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    pub fn new(f: F, t0: f64, y0: Vec<C64>, tol: Tolerances) -> Self {
        let n = y0.len();
        let k = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
        Self { f, tol, t: t0, y: y0, h: 0.0, k, tmp: vec![C64::new(0.0, 0.0); n], fresh: true, stats: StepStats::default() }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    fn err_scale(&self, a: C64, b: C64) -> f64 {
        self.tol.atol + self.tol.rtol * a.norm().max(b.norm())
    }

    fn rms(&self, v: &[C64], reference: &[C64]) -> f64 {
        let n = v.len().max(1) as f64;
        let s: f64 = v.iter().zip(reference).map(|(x, r)| (x.norm() / self.err_scale(*r, *r)).powi(2)).sum();
        (s / n).sqrt()
    }

    /// Initial step size following the usual two-evaluation estimate.
    fn initial_step(&mut self, span: f64) -> f64 {
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k[0], &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span.abs());
        for i in 0..self.y.len() {
            self.tmp[i] = self.y[i] + self.k[0][i] * h0;
        }
        let mut f1 = vec![C64::new(0.0, 0.0); self.y.len()];
        (self.f)(self.t + h0, &self.tmp, &mut f1);
        self.stats.rhs_calls += 1;
        let diff: Vec<C64> = f1.iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = self.rms(&diff, &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(span.abs())
    }

    /// Advances exactly to `t_end`.
    pub fn integrate_to(&mut self, t_end: f64) -> Result<(), DynamicsError> {
        if t_end <= self.t {
            return Ok(());
        }
        if self.fresh {
            (self.f)(self.t, &self.y, &mut self.k[0]);
            self.stats.rhs_calls += 1;
            self.h = self.initial_step(t_end - self.t);
            self.fresh = false;
        }
        let n = self.y.len();
        let mut y_new = vec![C64::new(0.0, 0.0); n];
        while self.t < t_end {
            if self.stats.accepted + self.stats.rejected >= self.tol.max_steps {
                return Err(DynamicsError::TooManySteps { t: self.t, steps: self.tol.max_steps });
            }
            let remaining = t_end - self.t;
            let clipped = self.h >= remaining || remaining - self.h < 1e-12 * t_end.abs().max(1.0);
            let h = if clipped { remaining } else { self.h };
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(DynamicsError::StepSizeUnderflow { t: self.t });
            }
            let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (s, a) in stages.iter().enumerate() {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for (j, aj) in a.iter().enumerate() {
                        acc += self.k[j][i] * (h * aj);
                    }
                    self.tmp[i] = acc;
                }
                (self.f)(self.t + C[s + 1] * h, &self.tmp, &mut self.k[s + 1]);
            }
            for i in 0..n {
                let mut acc = self.y[i];
                for (j, bj) in B.iter().enumerate() {
                    acc += self.k[j][i] * (h * bj);
                }
                y_new[i] = acc;
            }
            (self.f)(self.t + h, &y_new, &mut self.k[6]);
            self.stats.rhs_calls += 6;

            let mut err = 0.0;
            for i in 0..n {
                let mut e = C64::new(0.0, 0.0);
                for (j, ej) in E.iter().enumerate() {
                    e += self.k[j][i] * (h * ej);
                }
                err += (e.norm() / self.err_scale(self.y[i], y_new[i])).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(DynamicsError::NonFinite { t: self.t });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if clipped { t_end } else { self.t + h };
                std::mem::swap(&mut self.y, &mut y_new);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                // A clipped step says nothing about the natural step size.
                if !clipped || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.stats.rejected += 1;
                self.h = h * factor.min(1.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation() {
        // y' = -i w y  =>  y(t) = e^{-iwt}
        let w = 1.3;
        let f = move |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, -w) * y[0];
        let tol = Tolerances { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let mut dp = DormandPrince::new(f, 0.0, vec![C64::new(1.0, 0.0)], tol);
        for t in [0.5, 1.0, 7.25, 30.0] {
            dp.integrate_to(t).unwrap();
            let exact = C64::from_polar(1.0, -w * t);
            assert!((dp.y()[0] - exact).norm() < 1e-8, "t={t}");
            assert_eq!(dp.t(), t);
        }
    }

    #[test]
    fn driven_decay() {
        // y' = -y + cos t, y(0)=0  =>  y = (cos t + sin t - e^{-t})/2
        let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -y[0] + C64::new(t.cos(), 0.0);
        let mut dp = DormandPrince::new(f, 0.0, vec![C64::new(0.0, 0.0)], Tolerances::default());
        dp.integrate_to(10.0).unwrap();
        let exact = (10f64.cos() + 10f64.sin() - (-10f64).exp()) / 2.0;
        assert!((dp.y()[0].re - exact).abs() < 1e-7);
    }

    #[test]
    fn step_budget() {
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, -50.0) * y[0];
        let tol = Tolerances { max_steps: 10, ..Default::default() };
        let mut dp = DormandPrince::new(f, 0.0, vec![C64::new(1.0, 0.0)], tol);
        assert!(matches!(dp.integrate_to(100.0), Err(DynamicsError::TooManySteps { .. })));
    }
}
