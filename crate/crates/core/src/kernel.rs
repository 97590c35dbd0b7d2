//! One-particle computations: the walk generator `L_n`, its semigroup
//! `P_t^n`, dense transition kernels, the Dirichlet form, and a pathwise
//! check of the Duhamel representation of the exclusion process.

use crate::error::{Error, Result};
use crate::graph::GraphInstance;
use crate::harris::{EventLog, Occupancy};

/// Dense kernels are refused above this many vertices.
pub const DENSE_KERNEL_CAP: usize = 4096;

/// Above this uniformization rate the semigroup switches to adaptive integration.
pub const UNIFORMIZATION_RATE_CAP: f64 = 1e6;

/// Sparse form of `L_n f(x) = b_n sum_{y~x} c(x,y) (f(y) - f(x))`.
#[derive(Debug, Clone)]
pub struct Generator {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemigroupMethod {
    /// Uniformization unless the rate exceeds [`UNIFORMIZATION_RATE_CAP`].
    Auto,
    Uniformization,
    Adaptive,
}

impl Generator {
    pub fn new(g: &GraphInstance) -> Result<Self> {
        let c = g.conductances()?;
        let nv = g.num_vertices();
        let mut degree = vec![0usize; nv];
        for &(u, v) in g.edges() {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0; nv + 1];
        for x in 0..nv {
            offsets[x + 1] = offsets[x] + degree[x];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[nv]];
        let mut rates = vec![0.0; offsets[nv]];
        for (&(u, v), &cb) in g.edges().iter().zip(c) {
            let r = g.time_scale() * cb;
            for (a, b) in [(u, v), (v, u)] {
                neighbors[fill[a]] = b as u32;
                rates[fill[a]] = r;
                fill[a] += 1;
            }
        }
        let exit = (0..nv)
            .map(|x| rates[offsets[x]..offsets[x + 1]].iter().sum())
            .collect();
        Ok(Self {
            offsets,
            neighbors,
            rates,
            exit,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.exit.len()
    }

    /// Largest total exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    /// `out = L f`.
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        for x in 0..self.exit.len() {
            let range = self.offsets[x]..self.offsets[x + 1];
            let mut acc = 0.0;
            for (&y, &r) in self.neighbors[range.clone()].iter().zip(&self.rates[range]) {
                acc += r * (f[y as usize] - f[x]);
            }
            out[x] = acc;
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        out
    }

    /// `P_t f` to absolute accuracy `tol` (relative to `sup |f|`).
    pub fn semigroup(
        &self,
        f: &[f64],
        t: f64,
        tol: f64,
        method: SemigroupMethod,
    ) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidHorizon(t));
        }
        if !(tol > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite input".into()));
        }
        let rate = self.max_exit_rate();
        if t == 0.0 || rate == 0.0 {
            return Ok(f.to_vec());
        }
        let out = match method {
            SemigroupMethod::Uniformization => self.uniformize(f, t, tol),
            SemigroupMethod::Adaptive => self.integrate(f, t, tol)?,
            SemigroupMethod::Auto if rate > UNIFORMIZATION_RATE_CAP => self.integrate(f, t, tol)?,
            SemigroupMethod::Auto => self.uniformize(f, t, tol),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "semigroup produced non-finite values at t = {t}"
            )));
        }
        Ok(out)
    }

    fn uniformize(&self, f: &[f64], t: f64, tol: f64) -> Vec<f64> {
        let rate = self.max_exit_rate();
        let scale = f
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let weights = PoissonWeights::new(rate * t, 0.5 * tol / scale);
        let mut v = f.to_vec();
        let mut lv = vec![0.0; f.len()];
        let mut acc = vec![0.0; f.len()];
        for k in 0..=weights.right {
            if k >= weights.left {
                let w = weights.weight(k);
                acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
            }
            if k < weights.right {
                self.apply_into(&v, &mut lv);
                v.iter_mut().zip(&lv).for_each(|(x, l)| *x += l / rate);
            }
        }
        acc
    }

    /// Dormand-Prince 5(4) with step-size control on the local error per unit time.
    fn integrate(&self, f: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [
                19372.0 / 6561.0,
                -25360.0 / 2187.0,
                64448.0 / 6561.0,
                -212.0 / 729.0,
                0.0,
                0.0,
            ],
            [
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
                0.0,
            ],
            [
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
            ],
        ];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let nv = f.len();
        let scale = f
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let per_time = 0.5 * tol / (scale * t);
        // below this the error estimate is roundoff, so demanding less never converges
        let floor = 16.0 * f64::EPSILON * scale;
        let mut u = f.to_vec();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; nv]; 7];
        let mut stage = vec![0.0; nv];
        let mut time = 0.0;
        let mut h = (1.0 / self.max_exit_rate()).min(t);
        let mut steps = 0usize;
        self.apply_into(&u, &mut k[0]);
        while time < t {
            steps += 1;
            if steps > 50_000_000 {
                return Err(Error::NumericalFailure(
                    "adaptive integration did not finish".into(),
                ));
            }
            h = h.min(t - time);
            for s in 1..7 {
                for x in 0..nv {
                    let mut acc = u[x];
                    for j in 0..s {
                        acc += h * A[s][j] * k[j][x];
                    }
                    stage[x] = acc;
                }
                self.apply_into(&stage, &mut k[s]);
            }
            // stage now holds the 5th-order solution (FSAL row)
            let mut err = 0.0f64;
            for x in 0..nv {
                let e: f64 = (0..7).map(|j| E[j] * k[j][x]).sum::<f64>() * h;
                err = err.max(e.abs());
            }
            if !err.is_finite() {
                return Err(Error::NumericalFailure(
                    "adaptive integration diverged".into(),
                ));
            }
            let allowed = (per_time * h).max(floor);
            if err <= allowed {
                time += h;
                u.copy_from_slice(&stage);
                k.swap(0, 6);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                0.9 * (allowed / err).powf(0.2)
            };
            h *= factor.clamp(0.2, 5.0);
        }
        Ok(u)
    }
}

/// Truncated, renormalised Poisson weights for uniformization.
struct PoissonWeights {
    left: usize,
    right: usize,
    weights: Vec<f64>,
}

impl PoissonWeights {
    /// Keeps the window `[left, right]` whose excluded mass is below `eps`.
    fn new(mean: f64, eps: f64) -> Self {
        let mode = mean.floor() as usize;
        let mut right_w = vec![1.0];
        let mut sum = 1.0;
        let mut k = mode;
        loop {
            let ratio = mean / (k + 1) as f64;
            let w = right_w.last().unwrap() * ratio;
            let next_ratio = mean / (k + 2) as f64;
            right_w.push(w);
            sum += w;
            k += 1;
            if next_ratio < 1.0 && w / (1.0 - next_ratio) < eps * sum {
                break;
            }
        }
        let mut left_w = Vec::new();
        let mut k = mode;
        let mut w = 1.0;
        while k > 0 {
            let ratio = k as f64 / mean;
            w *= ratio;
            left_w.push(w);
            sum += w;
            k -= 1;
            let next_ratio = k as f64 / mean;
            if next_ratio < 1.0 && w * next_ratio / (1.0 - next_ratio) < eps * sum {
                break;
            }
        }
        let left = mode - left_w.len();
        let right = mode + right_w.len() - 1;
        let weights = left_w
            .into_iter()
            .rev()
            .chain(right_w)
            .map(|w| w / sum)
            .collect();
        Self {
            left,
            right,
            weights,
        }
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights[k - self.left]
    }
}

/// `L_n f`.
pub fn apply_generator(g: &GraphInstance, f: &[f64]) -> Result<Vec<f64>> {
    Ok(Generator::new(g)?.apply(f))
}

/// `P_t^n phi` to absolute tolerance `tol`.
pub fn semigroup_apply(g: &GraphInstance, phi: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    Generator::new(g)?.semigroup(phi, t, tol, SemigroupMethod::Auto)
}

/// Dense `p_n(t, x, y)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    t: f64,
    size: usize,
    data: Vec<f64>,
}

impl TransitionKernel {
    fn identity(size: usize, t: f64) -> Self {
        let mut data = vec![0.0; size * size];
        for x in 0..size {
            data[x * size + x] = 1.0;
        }
        Self { t, size, data }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.size + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.size..(x + 1) * self.size]
    }

    /// `max_{x,y} |p(x,y) - p(y,x)|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.size {
            for y in x + 1..self.size {
                worst = worst.max((self.get(x, y) - self.get(y, x)).abs());
            }
        }
        worst
    }

    /// `max_x |sum_y p(x,y) - 1|`.
    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.size)
            .map(|x| (self.row(x).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Matrix product `self * other`, the kernel at `t + other.t`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.size, other.size);
        let n = self.size;
        let mut data = vec![0.0; n * n];
        for x in 0..n {
            let out = &mut data[x * n..(x + 1) * n];
            for z in 0..n {
                let a = self.data[x * n + z];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(other.row(z)) {
                    *o += a * b;
                }
            }
        }
        Self {
            t: self.t + other.t,
            size: n,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense transition kernel at time `t`.
///
/// Columns are semigroup images of indicators. Short times are uniformized
/// directly; long times uniformize `t / 2^s` and square `s` times.
pub fn transition_matrix(g: &GraphInstance, t: f64, tol: f64) -> Result<TransitionKernel> {
    let nv = g.num_vertices();
    if nv > DENSE_KERNEL_CAP {
        return Err(Error::TooLarge(nv));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidHorizon(t));
    }
    let generator = Generator::new(g)?;
    let rate = generator.max_exit_rate();
    if t == 0.0 || rate == 0.0 {
        return Ok(TransitionKernel::identity(nv, t));
    }
    let squarings = ((rate * t / 32.0).log2().ceil().max(0.0)) as u32;
    let tau = t / 2f64.powi(squarings as i32);
    let column_tol = tol / 2f64.powi(squarings as i32 + 1);
    let mut kernel = TransitionKernel::identity(nv, tau);
    let mut indicator = vec![0.0; nv];
    for y in 0..nv {
        indicator[y] = 1.0;
        let column =
            generator.semigroup(&indicator, tau, column_tol, SemigroupMethod::Uniformization)?;
        indicator[y] = 0.0;
        for (x, p) in column.into_iter().enumerate() {
            kernel.data[x * nv + y] = p;
        }
    }
    for _ in 0..squarings {
        kernel = kernel.compose(&kernel);
    }
    kernel.t = t;
    Ok(kernel)
}

/// `<f, h>_{m_n} = (1/a_n) sum_x f(x) h(x)`.
pub fn inner_product(g: &GraphInstance, f: &[f64], h: &[f64]) -> f64 {
    f.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / g.mass_scale()
}

/// `<phi, -L_n phi>_{m_n} = (b_n / a_n) sum_{edges} c(x,y) (phi(x) - phi(y))^2`.
pub fn dirichlet_form(g: &GraphInstance, phi: &[f64]) -> Result<f64> {
    let c = g.conductances()?;
    let s: f64 = g
        .edges()
        .iter()
        .zip(c)
        .map(|(&(x, y), &cb)| cb * (phi[x] - phi[y]).powi(2))
        .sum();
    Ok(g.time_scale() * s / g.mass_scale())
}

/// Largest pathwise violation of
/// `eta_x(t) = sum_y p(t,x,y) eta_y(0) + sum_y int_0^t p(t-s,x,y) dM_y(s)`
/// on one event log.
///
/// Jumps of the martingale are taken exactly at the ring times; its
/// compensator `-int_0^t P_{t-s} L eta(s) ds` uses the composite midpoint
/// rule with step at most `tol` between consecutive rings.
pub fn duhamel_residual(
    g: &GraphInstance,
    eta0: &Occupancy,
    log: &EventLog,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if t > log.horizon() {
        return Err(Error::HorizonExceeded {
            requested: t,
            horizon: log.horizon(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::NumericalFailure(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let generator = Generator::new(g)?;
    let inner_tol = tol * 1e-3;
    let nv = g.num_vertices();
    let mut eta = eta0.as_f64();
    let mut rhs = generator.semigroup(&eta, t, inner_tol, SemigroupMethod::Auto)?;
    let mut drift = vec![0.0; nv];
    let mut compensate = |eta: &[f64], from: f64, to: f64, rhs: &mut [f64]| -> Result<()> {
        if to <= from {
            return Ok(());
        }
        generator.apply_into(eta, &mut drift);
        if drift.iter().all(|&d| d == 0.0) {
            return Ok(());
        }
        let steps = ((to - from) / tol).ceil().max(1.0) as usize;
        let h = (to - from) / steps as f64;
        for i in 0..steps {
            let s = from + (i as f64 + 0.5) * h;
            let pushed = generator.semigroup(&drift, t - s, inner_tol, SemigroupMethod::Auto)?;
            rhs.iter_mut().zip(&pushed).for_each(|(r, p)| *r -= h * p);
        }
        Ok(())
    };
    let mut last = 0.0;
    let mut jump = vec![0.0; nv];
    for e in log.until(t) {
        compensate(&eta, last, e.time, &mut rhs)?;
        let (y, z) = log.endpoints(e.edge);
        let delta = eta[z] - eta[y];
        if delta != 0.0 {
            jump[y] = 1.0;
            jump[z] = -1.0;
            let pushed =
                generator.semigroup(&jump, t - e.time, inner_tol, SemigroupMethod::Auto)?;
            jump[y] = 0.0;
            jump[z] = 0.0;
            rhs.iter_mut()
                .zip(&pushed)
                .for_each(|(r, p)| *r += delta * p);
        }
        eta.swap(y, z);
        last = e.time;
    }
    compensate(&eta, last, t, &mut rhs)?;
    Ok(eta
        .iter()
        .zip(&rhs)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductance::{ConductanceField, FieldKind};
    use crate::graph::{build_torus_1d, Scaling};
    use crate::harris::{sample_clocks, sample_product_measure, Event};

    fn two_ring() -> GraphInstance {
        ConductanceField::constant(1.0)
            .assign(
                &build_torus_1d(
                    2,
                    Scaling::Custom {
                        mass: 1.0,
                        time: 1.0,
                    },
                )
                .unwrap(),
            )
            .unwrap()
    }

    fn ring(n: usize, kind: FieldKind) -> GraphInstance {
        ConductanceField::new(kind, 3)
            .assign(&build_torus_1d(n, Scaling::Diffusive).unwrap())
            .unwrap()
    }

    #[test]
    fn generator_examples() {
        let g = two_ring();
        assert_eq!(apply_generator(&g, &[1.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
        let g = ring(16, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        assert!(apply_generator(&g, &[3.0; 16])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let f: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        assert!(apply_generator(&g, &f).unwrap().iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn two_state_closed_form() {
        let g = two_ring();
        for t in [0.0, 0.1, 0.7, 3.0] {
            let p = semigroup_apply(&g, &[1.0, 0.0], t, 1e-13).unwrap();
            let e = (-2.0 * t).exp();
            assert!((p[0] - (1.0 + e) / 2.0).abs() < 1e-12);
            assert!((p[1] - (1.0 - e) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn time_zero_is_identity() {
        let g = ring(8, FieldKind::Constant { value: 1.0 });
        let phi = [0.1, 0.9, -3.0, 4.0, 0.0, 1.0, 2.0, 5.0];
        assert_eq!(semigroup_apply(&g, &phi, 0.0, 1e-9).unwrap(), phi.to_vec());
        let k = transition_matrix(&g, 0.0, 1e-12).unwrap();
        assert_eq!(k.max_abs_diff(&TransitionKernel::identity(8, 0.0)), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = ring(8, FieldKind::Constant { value: 1.0 });
        assert!(matches!(
            semigroup_apply(&g, &[f64::NAN; 8], 0.1, 1e-9),
            Err(Error::NumericalFailure(_))
        ));
        assert!(semigroup_apply(&g, &[0.0; 8], -1.0, 1e-9).is_err());
        let big = ConductanceField::constant(1.0)
            .assign(&build_torus_1d(DENSE_KERNEL_CAP + 1, Scaling::Diffusive).unwrap())
            .unwrap();
        assert!(matches!(
            transition_matrix(&big, 0.1, 1e-9),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn max_principle() {
        let g = ring(32, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let phi: Vec<f64> = (0..32).map(|i| ((i * 13) % 11) as f64 - 4.0).collect();
        for t in [1e-4, 1e-3, 0.01, 0.1] {
            let p = semigroup_apply(&g, &phi, t, 1e-12).unwrap();
            assert!(p.iter().all(|&v| v >= -4.0 - 1e-10 && v <= 6.0 + 1e-10));
        }
    }

    #[test]
    fn uniformization_and_adaptive_agree() {
        for kind in [
            FieldKind::Constant { value: 1.0 },
            FieldKind::Periodic {
                pattern: vec![1.0, 2.0],
            },
            FieldKind::IidPareto {
                exponent: 2.0,
                scale: 1.0,
            },
        ] {
            let g = ring(64, kind);
            let gen = Generator::new(&g).unwrap();
            let phi: Vec<f64> = (0..64).map(|i| (i as f64 / 64.0 * 6.283).cos()).collect();
            for t in [0.001, 0.05] {
                let a = gen
                    .semigroup(&phi, t, 1e-10, SemigroupMethod::Uniformization)
                    .unwrap();
                let b = gen
                    .semigroup(&phi, t, 1e-10, SemigroupMethod::Adaptive)
                    .unwrap();
                let diff = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-9, "t={t} diff={diff}");
            }
        }
    }

    #[test]
    fn poisson_window_mass() {
        for mean in [0.3, 5.0, 80.0, 5e4] {
            let w = PoissonWeights::new(mean, 1e-14);
            let total: f64 = w.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let avg: f64 = (w.left..=w.right).map(|k| k as f64 * w.weight(k)).sum();
            assert!(
                (avg - mean).abs() < 1e-8 * mean.max(1.0),
                "mean {mean}: {avg}"
            );
        }
    }

    /// Heat kernel of the constant-conductance ring from its Fourier eigenbasis.
    fn spectral_ring_kernel(n: usize, rate: f64, t: f64, x: usize, y: usize) -> f64 {
        let mut p = 0.0;
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let lambda = 2.0 * rate * (1.0 - theta.cos());
            p += (-lambda * t).exp() * (theta * (x as f64 - y as f64)).cos();
        }
        p / n as f64
    }

    #[test]
    fn ring_kernel_matches_spectral_oracle() {
        let n = 64;
        let g = ring(n, FieldKind::Constant { value: 1.0 });
        let k = transition_matrix(&g, 0.05, 1e-12).unwrap();
        for y in 0..n {
            let exact = spectral_ring_kernel(n, (n * n) as f64, 0.05, 0, y);
            assert!((k.get(0, y) - exact).abs() < 1e-8, "y={y}");
        }
        let short = transition_matrix(&g, 1e-4, 1e-12).unwrap();
        for y in 0..n {
            assert!(
                (short.get(3, y) - spectral_ring_kernel(n, (n * n) as f64, 1e-4, 3, y)).abs()
                    < 1e-8
            );
        }
    }

    #[test]
    fn kernel_invariants_and_chapman_kolmogorov() {
        let g = ring(32, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let ks = transition_matrix(&g, 0.003, 1e-12).unwrap();
        let kt = transition_matrix(&g, 0.011, 1e-12).unwrap();
        let kst = transition_matrix(&g, 0.014, 1e-12).unwrap();
        for k in [&ks, &kt, &kst] {
            assert!(k.max_asymmetry() < 1e-9);
            assert!(k.max_row_sum_deviation() < 1e-9);
            assert!(k.min_entry() >= -1e-12 && k.max_entry() <= 1.0 + 1e-12);
        }
        assert!(ks.compose(&kt).max_abs_diff(&kst) < 1e-7);
    }

    #[test]
    fn kernel_columns_match_semigroup() {
        let g = ring(
            16,
            FieldKind::Periodic {
                pattern: vec![1.0, 2.0],
            },
        );
        let k = transition_matrix(&g, 0.02, 1e-12).unwrap();
        let mut e = vec![0.0; 16];
        e[5] = 1.0;
        let col = semigroup_apply(&g, &e, 0.02, 1e-12).unwrap();
        for x in 0..16 {
            assert!((k.get(x, 5) - col[x]).abs() < 1e-10);
        }
    }

    #[test]
    fn summation_identity() {
        // sum_x phi(x) (p(t,x,y) - p(t,x,z)) = P_t phi(y) - P_t phi(z)
        let g = ring(24, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let t = 0.01;
        let k = transition_matrix(&g, t, 1e-12).unwrap();
        let phi: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let p_phi = semigroup_apply(&g, &phi, t, 1e-12).unwrap();
        for &(y, z) in g.edges() {
            let lhs: f64 = (0..24).map(|x| phi[x] * (k.get(x, y) - k.get(x, z))).sum();
            assert!((lhs - (p_phi[y] - p_phi[z])).abs() < 1e-9);
        }
    }

    #[test]
    fn dirichlet_form_examples() {
        let g = two_ring();
        assert_eq!(dirichlet_form(&g, &[1.0, 0.0]).unwrap(), 1.0);
        let g = ring(16, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        assert_eq!(dirichlet_form(&g, &[2.0; 16]).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_form_is_energy_dissipation_rate() {
        let g = ring(32, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let phi: Vec<f64> = (0..32)
            .map(|i| (i as f64 * 0.6).cos() + 0.3 * (i as f64 * 0.2).sin())
            .collect();
        let gen = Generator::new(&g).unwrap();
        let norm = |s: f64| {
            let p = gen
                .semigroup(&phi, s, 1e-14, SemigroupMethod::Uniformization)
                .unwrap();
            inner_product(&g, &p, &p)
        };
        // P_{-h} is not available, so differentiate the even extension through s = h.
        let h = 1e-7;
        let s0 = 2.0 * h;
        let derivative = (norm(s0 + h) - norm(s0 - h)) / (2.0 * h);
        let p0 = gen
            .semigroup(&phi, s0, 1e-14, SemigroupMethod::Uniformization)
            .unwrap();
        let energy = dirichlet_form(&g, &p0).unwrap();
        assert!(
            (-0.5 * derivative - energy).abs() <= 1e-4 * energy,
            "{} vs {energy}",
            -0.5 * derivative
        );
        // and at s=0 through a one-sided second-order stencil
        let d0 = (-3.0 * norm(0.0) + 4.0 * norm(h) - norm(2.0 * h)) / (2.0 * h);
        let e0 = dirichlet_form(&g, &phi).unwrap();
        assert!((-0.5 * d0 - e0).abs() <= 1e-4 * e0);
    }

    #[test]
    fn squared_norm_is_non_increasing() {
        let g = ring(32, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let phi: Vec<f64> = (0..32).map(|i| if i < 10 { 1.0 } else { -0.5 }).collect();
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let p = semigroup_apply(&g, &phi, i as f64 * 5e-4, 1e-12).unwrap();
            let norm = inner_product(&g, &p, &p);
            assert!(norm <= prev + 1e-12);
            prev = norm;
        }
    }

    #[test]
    fn duhamel_zero_configuration_is_exact() {
        let g = ring(8, FieldKind::Constant { value: 1.0 });
        let log = EventLog::from_events(&g, 0.05, vec![]).unwrap();
        assert_eq!(
            duhamel_residual(&g, &Occupancy::empty(8), &log, 0.05, 1e-4).unwrap(),
            0.0
        );
        let eta0 = Occupancy::from_bits(vec![true, true, false, true, false, false, false, true]);
        assert!(duhamel_residual(&g, &eta0, &log, 0.05, 1e-4).unwrap() < 1e-3);
    }

    #[test]
    fn duhamel_single_particle() {
        let g = ring(8, FieldKind::IidUniform { lo: 1.0, hi: 2.0 });
        let tol = 1e-4;
        for seed in 0..5 {
            let log = sample_clocks(&g, 0.05, seed).unwrap();
            let r = duhamel_residual(&g, &Occupancy::indicator(8, 2), &log, 0.05, tol).unwrap();
            assert!(r <= 10.0 * tol, "seed {seed}: {r}");
        }
        let log = EventLog::from_events(
            &g,
            0.05,
            vec![Event {
                time: 0.01,
                edge: 0,
            }],
        )
        .unwrap();
        let eta0 = sample_product_measure(&g, |_| 0.5, 4).unwrap();
        assert!(duhamel_residual(&g, &eta0, &log, 0.05, tol).unwrap() <= 10.0 * tol);
    }
}
