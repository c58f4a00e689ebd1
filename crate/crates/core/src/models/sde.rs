//! Euler-Maruyama and the stochastic volatility schemes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::rng::stream_rng;

/// `dX = b(X) dt + Sigma(X) dW`.
pub trait Sde: Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `state_dim x noise_dim`.
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
}

/// `X_{i+1} = X_i + b(X_i) dt + Sigma(X_i) sqrt(dt) z_i` with
/// `z` row-major `ns x noise_dim`.
pub fn euler_maruyama<S: Sde + ?Sized>(sde: &S, x0: &[f64], t: f64, ns: usize, z: &[f64]) -> Result<Vec<f64>> {
    let m = sde.noise_dim();
    if z.len() != ns * m {
        return Err(Error::DimensionMismatch { expected: ns * m, actual: z.len() });
    }
    em_driver(sde, x0, t, ns, |i, out| out.copy_from_slice(&z[i * m..(i + 1) * m]))
}

/// Euler-Maruyama with normals drawn from `rng`.
pub fn euler_maruyama_rng<S: Sde + ?Sized, R: Rng + ?Sized>(
    sde: &S,
    x0: &[f64],
    t: f64,
    ns: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    em_driver(sde, x0, t, ns, |_, out| {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    })
}

fn em_driver<S: Sde + ?Sized>(
    sde: &S,
    x0: &[f64],
    t: f64,
    ns: usize,
    mut noise: impl FnMut(usize, &mut [f64]),
) -> Result<Vec<f64>> {
    let (d, m) = (sde.state_dim(), sde.noise_dim());
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: x0.len() });
    }
    if ns == 0 || !(t > 0.0) {
        return Err(Error::InvalidInput("Euler-Maruyama needs Ns >= 1 and T > 0".into()));
    }
    let dt = t / ns as f64;
    let sdt = dt.sqrt();
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut sig = vec![0.0; d * m];
    let mut z = vec![0.0; m];
    for step in 0..ns {
        noise(step, &mut z);
        sde.drift(&x, &mut b);
        sde.diffusion(&x, &mut sig);
        for k in 0..d {
            let dw: f64 = (0..m).map(|l| sig[k * m + l] * z[l]).sum();
            x[k] += b[k] * dt + dw * sdt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: step + 1 });
        }
    }
    Ok(x)
}

/// Scalar geometric Brownian motion `dS = r S dt + sigma S dW`.
#[derive(Clone, Copy, Debug)]
pub struct Gbm {
    pub r: f64,
    pub sigma: f64,
}

impl Sde for Gbm {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.r * x[0];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * x[0];
    }
}

/// Heston dynamics for `(V, X)` with `X` the log-price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HestonSpec {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
    pub v0: f64,
    pub x0: f64,
}

impl HestonSpec {
    pub fn new(kappa: f64, theta: f64, sigma: f64, rho: f64, r: f64, v0: f64, x0: f64) -> Result<Self> {
        let s = Self { kappa, theta, sigma, rho, r, v0, x0 };
        s.validate()?;
        Ok(s)
    }

    /// The parameters of the Heston pricing experiment.
    pub fn paper() -> Self {
        Self { kappa: 0.5, theta: 0.01, sigma: 0.15, rho: -0.5, r: 0.01, v0: 0.04, x0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.theta, self.sigma, self.rho, self.r, self.v0, self.x0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Heston parameters must be finite".into()));
        }
        if self.kappa < 0.0 || self.theta < 0.0 || !(self.sigma > 0.0) || self.r < 0.0 {
            return Err(Error::InvalidInput("Heston needs kappa, theta, r >= 0 and sigma > 0".into()));
        }
        if self.rho.abs() > 1.0 || !(self.v0 > 0.0) {
            return Err(Error::InvalidInput("Heston needs |rho| <= 1 and v0 > 0".into()));
        }
        Ok(())
    }
}

/// Jacobi dynamics: Heston with `sqrt(V)` replaced by `sqrt(Q(V))` in the
/// variance and the correlated part of the log-price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiSpec {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
    pub v0: f64,
    pub x0: f64,
    pub vmin: f64,
    pub vmax: f64,
}

impl JacobiSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kappa: f64,
        theta: f64,
        sigma: f64,
        rho: f64,
        r: f64,
        v0: f64,
        x0: f64,
        vmin: f64,
        vmax: f64,
    ) -> Result<Self> {
        let s = Self { kappa, theta, sigma, rho, r, v0, x0, vmin, vmax };
        s.validate()?;
        Ok(s)
    }

    /// The parameters of the Jacobi pricing experiment.
    pub fn paper() -> Self {
        Self { kappa: 0.5, theta: 0.04, sigma: 0.15, rho: -0.5, r: 0.01, v0: 0.04, x0: 0.0, vmin: 1e-4, vmax: 0.08 }
    }

    pub fn validate(&self) -> Result<()> {
        HestonSpec {
            kappa: self.kappa,
            theta: self.theta,
            sigma: self.sigma,
            rho: self.rho,
            r: self.r,
            v0: self.v0,
            x0: self.x0,
        }
        .validate()?;
        if !(self.vmin >= 0.0 && self.vmin < self.vmax && self.vmax.is_finite()) {
            return Err(Error::InvalidInput("Jacobi needs 0 <= vmin < vmax".into()));
        }
        if self.theta < self.vmin || self.theta > self.vmax {
            return Err(Error::InvalidInput("Jacobi needs theta in [vmin, vmax]".into()));
        }
        Ok(())
    }

    /// `(sqrt(vmax) - sqrt(vmin))^2`
    pub fn q_scale(&self) -> f64 {
        (self.vmax.sqrt() - self.vmin.sqrt()).powi(2)
    }

    pub fn q(&self, v: f64) -> f64 {
        (v - self.vmin) * (self.vmax - v) / self.q_scale()
    }
}

fn pos_sqrt(a: f64, clamps: &mut u32) -> f64 {
    if a < 0.0 {
        *clamps += 1;
        0.0
    } else {
        a.sqrt()
    }
}

/// One Euler step of the Heston scheme. Square-root arguments are replaced
/// by their positive parts; the returned count says how many were clamped.
pub fn heston_step(spec: &HestonSpec, state: [f64; 2], dt: f64, z1: f64, z2: f64) -> ([f64; 2], u32) {
    let [v, x] = state;
    let mut clamps = 0;
    let sv = pos_sqrt(v, &mut clamps);
    let indep = pos_sqrt(v * (1.0 - spec.rho * spec.rho), &mut clamps);
    let sdt = dt.sqrt();
    let v1 = v + spec.kappa * (spec.theta - v) * dt + spec.sigma * sv * sdt * z1;
    let x1 = x + (spec.r - 0.5 * v) * dt + spec.rho * sv * sdt * z1 + indep * sdt * z2;
    ([v1, x1], clamps)
}

/// One Euler step of the Jacobi scheme, clamping as [`heston_step`].
pub fn jacobi_step(spec: &JacobiSpec, state: [f64; 2], dt: f64, z1: f64, z2: f64) -> ([f64; 2], u32) {
    let [v, x] = state;
    let mut clamps = 0;
    let q = spec.q(v);
    let sq = pos_sqrt(q, &mut clamps);
    let indep = pos_sqrt(v - spec.rho * spec.rho * q, &mut clamps);
    let sdt = dt.sqrt();
    let v1 = v + spec.kappa * (spec.theta - v) * dt + spec.sigma * sq * sdt * z1;
    let x1 = x + (spec.r - 0.5 * v) * dt + spec.rho * sq * sdt * z1 + indep * sdt * z2;
    ([v1, x1], clamps)
}

impl Sde for HestonSpec {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.kappa * (self.theta - x[0]);
        out[1] = self.r - 0.5 * x[0];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let sv = x[0].max(0.0).sqrt();
        out.copy_from_slice(&[
            self.sigma * sv,
            0.0,
            self.rho * sv,
            (x[0] * (1.0 - self.rho * self.rho)).max(0.0).sqrt(),
        ]);
    }
}

impl Sde for JacobiSpec {
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.kappa * (self.theta - x[0]);
        out[1] = self.r - 0.5 * x[0];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let q = self.q(x[0]);
        let sq = q.max(0.0).sqrt();
        out.copy_from_slice(&[self.sigma * sq, 0.0, self.rho * sq, (x[0] - self.rho * self.rho * q).max(0.0).sqrt()]);
    }
}

/// Stochastic volatility models simulated by Euler-Maruyama.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StochVolModel {
    Heston(HestonSpec),
    Jacobi(JacobiSpec),
}

impl StochVolModel {
    pub fn rate(&self) -> f64 {
        match self {
            Self::Heston(s) => s.r,
            Self::Jacobi(s) => s.r,
        }
    }

    /// `(v0, x0)`.
    pub fn initial(&self) -> [f64; 2] {
        match self {
            Self::Heston(s) => [s.v0, s.x0],
            Self::Jacobi(s) => [s.v0, s.x0],
        }
    }

    pub fn step(&self, state: [f64; 2], dt: f64, z1: f64, z2: f64) -> ([f64; 2], u32) {
        match self {
            Self::Heston(s) => heston_step(s, state, dt, z1, z2),
            Self::Jacobi(s) => jacobi_step(s, state, dt, z1, z2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Heston(s) => s.validate(),
            Self::Jacobi(s) => s.validate(),
        }
    }

    /// Terminal state of one path driven by `rng`; returns the number of
    /// clamped square roots along the way.
    pub fn simulate_path<R: Rng + ?Sized>(&self, t: f64, ns: usize, rng: &mut R) -> Result<([f64; 2], u32)> {
        let dt = t / ns as f64;
        let mut state = self.initial();
        let mut clamps = 0;
        for step in 0..ns {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let (next, c) = self.step(state, dt, z1, z2);
            if !(next[0].is_finite() && next[1].is_finite()) {
                return Err(Error::BlowUp { step: step + 1 });
            }
            state = next;
            clamps += c;
        }
        Ok((state, clamps))
    }
}

/// Terminal `(V_T, X_T)` of `n` Euler paths.
#[derive(Clone, Debug)]
pub struct PathBatch {
    /// Coordinate 0 is the variance, coordinate 1 the log-price.
    pub points: PointSet,
    pub clamp_events: u64,
}

impl PathBatch {
    pub fn variance(&self) -> &[f64] {
        self.points.coord(0)
    }

    pub fn log_price(&self) -> &[f64] {
        self.points.coord(1)
    }
}

/// `n` Euler paths with `ns` steps to `t`; path `i` uses stream `i` of `seed`.
pub fn simulate_terminal(model: &StochVolModel, t: f64, ns: usize, n: usize, seed: u64) -> Result<PathBatch> {
    model.validate()?;
    if ns == 0 || !(t > 0.0) {
        return Err(Error::InvalidInput("Euler-Maruyama needs Ns >= 1 and T > 0".into()));
    }
    let (points, clamps) = PointSet::generate(
        2,
        n,
        || (),
        |_, i, out| {
            let mut rng = stream_rng(seed, i as u64);
            let (state, c) = model.simulate_path(t, ns, &mut rng)?;
            out.copy_from_slice(&state);
            Ok(c as f64)
        },
    )?;
    let clamp_events = clamps.iter().map(|&c| c as u64).sum();
    Ok(PathBatch { points, clamp_events })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ConstDrift;
    impl Sde for ConstDrift {
        fn state_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, _: &[f64], out: &mut [f64]) {
            out[0] = 0.7;
        }
        fn diffusion(&self, _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    struct Exploding;
    impl Sde for Exploding {
        fn state_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[0] * 1e150;
        }
        fn diffusion(&self, _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn constant_drift_is_exact() {
        for ns in [1, 3, 17] {
            let x = euler_maruyama(&ConstDrift, &[1.0], 2.0, ns, &vec![0.3; ns]).unwrap();
            assert!((x[0] - 2.4).abs() < 1e-14);
        }
    }

    #[test]
    fn blow_up_names_the_step() {
        let err = euler_maruyama(&Exploding, &[1.0], 1.0, 10, &[0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::BlowUp { step } if (1..=10).contains(&step)));
    }

    #[test]
    fn degenerate_vol_of_vol() {
        let spec = HestonSpec { kappa: 1.0, theta: 0.04, sigma: 0.0, rho: 0.0, r: 0.02, v0: 0.04, x0: 0.0 };
        let (s, _) = heston_step(&spec, [0.04, 0.1], 0.01, 1.0, -0.5);
        assert_eq!(s[0], 0.04);
        assert!((s[1] - (0.1 + (0.02 - 0.02) * 0.01 + 0.2 * 0.1 * -0.5)).abs() < 1e-15);
    }

    #[test]
    fn jacobi_boundary_has_no_variance_noise() {
        let spec = JacobiSpec::paper();
        for v in [spec.vmin, spec.vmax] {
            let (s, _) = jacobi_step(&spec, [v, 0.0], 0.01, 2.0, 0.0);
            assert!((s[0] - (v + spec.kappa * (spec.theta - v) * 0.01)).abs() < 1e-15);
        }
    }

    #[test]
    fn schemes_match_generic_euler() {
        let heston = HestonSpec::paper();
        let jacobi = JacobiSpec::paper();
        let ns = 50;
        let z: Vec<f64> = (0..2 * ns).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        for model in [StochVolModel::Heston(heston), StochVolModel::Jacobi(jacobi)] {
            let mut state = model.initial();
            for i in 0..ns {
                state = model.step(state, 0.5 / ns as f64, z[2 * i], z[2 * i + 1]).0;
            }
            let generic = match model {
                StochVolModel::Heston(s) => euler_maruyama(&s, &model.initial(), 0.5, ns, &z).unwrap(),
                StochVolModel::Jacobi(s) => euler_maruyama(&s, &model.initial(), 0.5, ns, &z).unwrap(),
            };
            assert!((state[0] - generic[0]).abs() < 1e-14 && (state[1] - generic[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_variance_is_clamped() {
        let spec = HestonSpec::paper();
        let (_, c) = heston_step(&spec, [-0.01, 0.0], 0.01, 0.0, 0.0);
        assert_eq!(c, 2);
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = StochVolModel::Heston(HestonSpec::paper());
        let a = simulate_terminal(&m, 1.0 / 12.0, 20, 1000, 9).unwrap();
        let b = simulate_terminal(&m, 1.0 / 12.0, 20, 1000, 9).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn brownian_increments_telescope() {
        // zero drift, constant diffusion: X_T - x0 ~ N(0, sigma^2 T)
        struct Bm;
        impl Sde for Bm {
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn drift(&self, _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn diffusion(&self, _: &[f64], out: &mut [f64]) {
                out[0] = 0.5;
            }
        }
        let z = [0.3, -1.2, 0.8, 2.0];
        let x = euler_maruyama(&Bm, &[0.0], 2.0, 4, &z).unwrap();
        let expected = 0.5 * (0.5f64).sqrt() * z.iter().sum::<f64>();
        assert!((x[0] - expected).abs() < 1e-15);
    }
}
