//! Monte Carlo simulation of the GRW collapse process.
//!
//! Two rate models are supported. With a constant rate `λ₀` the collapse
//! times form a Poisson process independent of the state and the state
//! evolves unitarily between collapses. With a position-dependent rate
//! `λ(x)` collapses centered at `x` occur with rate density
//! `λ(x) (g ∗ |Ψ|²)(x)`, and between collapses the unnormalized state obeys
//! `iħ ∂Ψ/∂t = (H - iħ(λ∗g)/2) Ψ`, whose squared norm is the probability of
//! no collapse so far. Collapse times are drawn by inverting that survival
//! curve against a uniform variate.
//!
//! Trajectory `i` of an ensemble uses the seed `base_seed + i`, so results do
//! not depend on how trajectories are scheduled across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    gaussian_density, DetectionOutcome, DetectorProfile, GaussianKernel, Side, SpatialGrid, WaveFunction,
    DEFAULT_TOLERANCE,
};
use crate::error::{invalid, Error, Result};
use crate::propagator::{assemble, CrankNicolson, PropagatorConfig, TridiagonalOperator};

/// Collapse rate operator `Λ(x)ψ(y) = rate(x) g(x-y) ψ(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateOperatorKind {
    ConstantRate { lambda0: f64 },
    PositionDependent { rate: Vec<f64> },
}

impl RateOperatorKind {
    pub fn from_profile(profile: &DetectorProfile, mode: GrwMode) -> Self {
        match mode {
            GrwMode::ConstantRate => RateOperatorKind::ConstantRate {
                lambda0: profile.lambda0(),
            },
            GrwMode::PositionDependent => RateOperatorKind::PositionDependent {
                rate: profile.rate().to_vec(),
            },
        }
    }

    fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        match self {
            RateOperatorKind::ConstantRate { lambda0 } if !(lambda0.is_finite() && *lambda0 >= 0.0) => {
                Err(invalid("lambda0", "must be nonnegative"))
            }
            RateOperatorKind::PositionDependent { rate } => {
                if rate.len() != grid.len() {
                    return Err(Error::LengthMismatch {
                        expected: grid.len(),
                        actual: rate.len(),
                    });
                }
                if rate.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return Err(invalid("rate", "must be finite and nonnegative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    #[inline]
    fn rate_at_node(&self, i: usize) -> f64 {
        match self {
            RateOperatorKind::ConstantRate { lambda0 } => *lambda0,
            RateOperatorKind::PositionDependent { rate } => rate[i],
        }
    }

    /// Rate at an arbitrary position, linearly interpolated between nodes.
    fn rate_at(&self, grid: &SpatialGrid, x: f64) -> f64 {
        match self {
            RateOperatorKind::ConstantRate { lambda0 } => *lambda0,
            RateOperatorKind::PositionDependent { rate } => {
                let c = grid.cell_of(x);
                let s = ((x - grid.node(c)) / grid.dx()).clamp(0.0, 1.0);
                rate[c] * (1.0 - s) + rate[c + 1] * s
            }
        }
    }
}

/// Which rate model drives [`run_grw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrwMode {
    ConstantRate,
    PositionDependent,
}

/// Shape of the post-collapse state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpConvention {
    /// Multiply by `g(x - X)^{1/2}` and renormalize.
    #[default]
    SqrtGaussian,
    /// Multiply by `Λ(X)`, i.e. by `λ(X) g(x - X)`, and renormalize.
    RateOperator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrwConfig {
    pub propagator: PropagatorConfig,
    pub mode: GrwMode,
    pub jump: JumpConvention,
}

/// One collapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub time: f64,
    pub center: f64,
    /// Squared norm of the state just before the jump.
    pub pre_norm: f64,
    /// `∫ ⟨Ψ|Λ(x)|Ψ⟩ dx` just before the jump.
    pub total_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrwRunRecord {
    pub events: Vec<CollapseEvent>,
    /// Normalized state at `t_max`.
    pub final_state: WaveFunction,
    pub seed: u64,
}

/// `⟨Ψ|Λ(x)|Ψ⟩ = rate(x) (g ∗ |Ψ|²)(x)` on the grid.
pub fn collapse_rate_density(psi: &WaveFunction, kind: &RateOperatorKind, sigma: f64) -> Result<Vec<f64>> {
    let grid = psi.grid();
    kind.validate(grid)?;
    let kernel = GaussianKernel::new(grid, sigma)?;
    Ok(rate_density_with(&kernel, psi, kind))
}

fn rate_density_with(kernel: &GaussianKernel, psi: &WaveFunction, kind: &RateOperatorKind) -> Vec<f64> {
    let grid = psi.grid();
    let rho = psi.density();
    let n = grid.len();
    let support = match kind {
        RateOperatorKind::ConstantRate { .. } => n,
        RateOperatorKind::PositionDependent { rate } => rate.iter().filter(|&&l| l > 0.0).count(),
    };
    if 2 * support < n {
        (0..n)
            .map(|i| {
                let lam = kind.rate_at_node(i);
                if lam > 0.0 {
                    lam * kernel.apply_at(grid, &rho, i)
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        let smooth = kernel.apply(grid, &rho);
        smooth.iter().enumerate().map(|(i, s)| kind.rate_at_node(i) * s).collect()
    }
}

/// Density of collapse centers together with the lattice it lives on.
///
/// Under a constant rate, centers may fall outside the region: the lattice
/// extends the grid by the kernel reach on both sides, so the density
/// integrates to `λ₀‖Ψ‖²` even for a state pressed against a wall. A
/// position-dependent rate vanishes outside the grid and keeps the grid.
pub fn collapse_center_density(
    psi: &WaveFunction,
    kind: &RateOperatorKind,
    sigma: f64,
) -> Result<(SpatialGrid, Vec<f64>)> {
    kind.validate(psi.grid())?;
    let kernel = GaussianKernel::new(psi.grid(), sigma)?;
    center_density_with(&kernel, psi, kind)
}

fn center_density_with(
    kernel: &GaussianKernel,
    psi: &WaveFunction,
    kind: &RateOperatorKind,
) -> Result<(SpatialGrid, Vec<f64>)> {
    let grid = *psi.grid();
    let RateOperatorKind::ConstantRate { lambda0 } = kind else {
        return Ok((grid, rate_density_with(kernel, psi, kind)));
    };
    let reach = kernel.reach();
    let lattice = SpatialGrid::with_spacing(grid.x_min() - reach as f64 * grid.dx(), grid.dx(), grid.len() + 2 * reach)?;
    let mut out = vec![0.0; lattice.len()];
    for (j, v) in psi.values().iter().enumerate() {
        let src = lambda0 * grid.trapezoid_weight(j) * v.norm_sqr();
        if src == 0.0 {
            continue;
        }
        // node j of the grid is node j + reach of the lattice
        for (k, o) in out[j..=j + 2 * reach].iter_mut().enumerate() {
            *o += kernel.tap(k.abs_diff(reach)) * src;
        }
    }
    Ok((lattice, out))
}

/// Draws a collapse center from the density `⟨Ψ|Λ(x)|Ψ⟩`.
pub fn sample_collapse_center<R: Rng + ?Sized>(
    psi: &WaveFunction,
    kind: &RateOperatorKind,
    sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    let (lattice, density) = collapse_center_density(psi, kind, sigma)?;
    sample_piecewise_linear(&lattice, &density, rng.random())
}

/// Inverse-CDF draw from the piecewise-linear interpolant of `f`, using the
/// uniform variate `u ∈ [0, 1)`. The within-cell position solves the
/// quadratic CDF exactly.
pub fn sample_piecewise_linear(grid: &SpatialGrid, f: &[f64], u: f64) -> Result<f64> {
    let h = grid.dx();
    let total: f64 = f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroRate);
    }
    let mut target = u * total;
    let last_cell = f.len() - 2;
    for c in 0..=last_cell {
        let (a, b) = (f[c], f[c + 1]);
        let mass = 0.5 * (a + b) * h;
        if target < mass || (c == last_cell && mass > 0.0) {
            let r = target.clamp(0.0, mass);
            let disc = (a * a + 2.0 * (b - a) * r / h).max(0.0);
            let denom = a + disc.sqrt();
            let s = if denom > 0.0 { (2.0 * r / denom).min(h) } else { 0.0 };
            return Ok(grid.node(c) + s);
        }
        target -= mass;
    }
    unreachable!("positive total mass guarantees a cell")
}

/// Applies the collapse jump centered at `center` and renormalizes.
pub fn apply_collapse(
    psi: &WaveFunction,
    center: f64,
    kind: &RateOperatorKind,
    sigma: f64,
    jump: JumpConvention,
) -> Result<WaveFunction> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    let grid = *psi.grid();
    let prefactor = match jump {
        JumpConvention::SqrtGaussian => 1.0,
        JumpConvention::RateOperator => kind.rate_at(&grid, center),
    };
    let values: Vec<Complex64> = psi
        .values()
        .iter()
        .zip(grid.nodes())
        .map(|(v, x)| {
            let g = gaussian_density(x - center, sigma);
            let factor = match jump {
                JumpConvention::SqrtGaussian => g.sqrt(),
                JumpConvention::RateOperator => prefactor * g,
            };
            v * factor
        })
        .collect();
    WaveFunction::new(grid, values)?.normalized()
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform variate in `(0, 1]`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Generator of the between-collapse evolution for a rate model.
fn between_collapse_operator(
    grid: &SpatialGrid,
    profile: &DetectorProfile,
    kind: &RateOperatorKind,
    kernel: &GaussianKernel,
    config: &PropagatorConfig,
) -> Result<TridiagonalOperator> {
    let effective = match kind {
        RateOperatorKind::ConstantRate { .. } => vec![0.0; grid.len()],
        RateOperatorKind::PositionDependent { rate } => kernel.apply(grid, rate),
    };
    let generator = DetectorProfile::new(profile.potential().to_vec(), effective, profile.sigma(), profile.lambda0())?;
    assemble(grid, &generator, &config.boundaries(), &config.consts)
}

fn partial_step(op: &TridiagonalOperator, from: &[Complex64], tau: f64) -> Result<Vec<Complex64>> {
    let mut out = from.to_vec();
    if tau > 0.0 {
        CrankNicolson::new(op, tau)?.step_into(from, &mut out);
    }
    Ok(out)
}

fn norm_of(grid: &SpatialGrid, v: &[Complex64]) -> f64 {
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().map(|z| z.norm_sqr()).sum();
    (inner + 0.5 * (v[0].norm_sqr() + v[n - 1].norm_sqr())) * grid.dx()
}

/// Fraction of a step at which a log-linear survival curve crosses `threshold`.
fn crossing_fraction(s0: f64, s1: f64, threshold: f64) -> f64 {
    if threshold >= s0 {
        return 0.0;
    }
    let f = if s1 > 0.0 {
        (threshold / s0).ln() / (s1 / s0).ln()
    } else {
        (s0 - threshold) / (s0 - s1)
    };
    f.clamp(0.0, 1.0)
}

fn check_normalized(psi0: &WaveFunction) -> Result<f64> {
    let n2 = psi0.squared_norm();
    if (n2 - 1.0).abs() > DEFAULT_TOLERANCE {
        return Err(Error::NotNormalized(n2));
    }
    Ok(n2)
}

/// Simulates one GRW trajectory on `[0, t_max]`.
pub fn run_grw(psi0: &WaveFunction, profile: &DetectorProfile, config: &GrwConfig, seed: u64) -> Result<GrwRunRecord> {
    config.propagator.validate()?;
    check_normalized(psi0)?;
    let grid = *psi0.grid();
    profile.check_grid(&grid)?;
    let kind = RateOperatorKind::from_profile(profile, config.mode);
    kind.validate(&grid)?;
    let kernel = GaussianKernel::new(&grid, profile.sigma())?;
    let op = between_collapse_operator(&grid, profile, &kind, &kernel, &config.propagator)?;
    let dt = config.propagator.dt;
    let t_max = config.propagator.t_max;
    let cn = CrankNicolson::new(&op, dt)?;
    let mut rng = seeded(seed);

    let mut events = Vec::new();
    let mut state = psi0.values().to_vec();
    let mut next = state.clone();
    let mut t = 0.0;
    let done = |t: f64| t_max - t <= 1e-12 * t_max;

    let collapse = |state: &mut Vec<Complex64>, t: f64, rng: &mut ChaCha8Rng, events: &mut Vec<CollapseEvent>| -> Result<()> {
        let psi = WaveFunction::from_parts_unchecked(grid, std::mem::take(state));
        let (lattice, density) = center_density_with(&kernel, &psi, &kind)?;
        let total_rate = lattice.integrate(&density);
        let center = sample_piecewise_linear(&lattice, &density, rng.random())?;
        events.push(CollapseEvent {
            time: t,
            center,
            pre_norm: psi.squared_norm(),
            total_rate,
        });
        *state = apply_collapse(&psi, center, &kind, profile.sigma(), config.jump)?.into_values();
        Ok(())
    };

    match &kind {
        RateOperatorKind::ConstantRate { lambda0 } => {
            let lambda0 = *lambda0;
            let draw = |rng: &mut ChaCha8Rng| {
                if lambda0 > 0.0 {
                    -open_unit(rng).ln() / lambda0
                } else {
                    f64::INFINITY
                }
            };
            let mut next_collapse = draw(&mut rng);
            while !done(t) {
                let h = dt.min(t_max - t);
                if next_collapse < t + h {
                    state = partial_step(&op, &state, next_collapse - t)?;
                    t = next_collapse;
                    collapse(&mut state, t, &mut rng, &mut events)?;
                    next_collapse = t + draw(&mut rng);
                    continue;
                }
                if h < dt {
                    state = partial_step(&op, &state, h)?;
                } else {
                    cn.step_into(&state, &mut next);
                    std::mem::swap(&mut state, &mut next);
                }
                t += h;
            }
        }
        RateOperatorKind::PositionDependent { .. } => {
            let mut threshold = open_unit(&mut rng) * norm_of(&grid, &state);
            let mut s_cur = norm_of(&grid, &state);
            while !done(t) {
                let h = dt.min(t_max - t);
                if h < dt {
                    next = partial_step(&op, &state, h)?;
                } else {
                    cn.step_into(&state, &mut next);
                }
                let s_next = norm_of(&grid, &next);
                if s_next < threshold {
                    let tau = h * crossing_fraction(s_cur, s_next, threshold);
                    state = partial_step(&op, &state, tau)?;
                    t += tau;
                    collapse(&mut state, t, &mut rng, &mut events)?;
                    s_cur = norm_of(&grid, &state);
                    threshold = open_unit(&mut rng) * s_cur;
                    continue;
                }
                std::mem::swap(&mut state, &mut next);
                s_cur = s_next;
                t += h;
            }
        }
    }

    let final_state = WaveFunction::from_parts_unchecked(grid, state);
    let final_state = if final_state.squared_norm() > 0.0 {
        final_state.normalized()?
    } else {
        final_state
    };
    Ok(GrwRunRecord {
        events,
        final_state,
        seed,
    })
}

/// `n` independent trajectories with seeds `base_seed + i`, run in parallel.
pub fn run_grw_ensemble(
    psi0: &WaveFunction,
    profile: &DetectorProfile,
    config: &GrwConfig,
    base_seed: u64,
    n: usize,
) -> Result<Vec<GrwRunRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| run_grw(psi0, profile, config, base_seed.wrapping_add(i as u64)))
        .collect()
}

/// First collapse of the position-dependent process, or `NeverDetected` if
/// none occurs by `t_max`.
pub fn first_detection(
    psi0: &WaveFunction,
    profile: &DetectorProfile,
    config: &PropagatorConfig,
    seed: u64,
) -> Result<DetectionOutcome> {
    Ok(first_detection_ensemble(psi0, profile, config, seed, 1)?[0])
}

/// `n` first-detection outcomes with seeds `base_seed + i`.
///
/// Up to its first collapse every trajectory follows the same deterministic
/// semigroup, so the propagation is done once and each trajectory only
/// branches off where its survival threshold is crossed. Each outcome is
/// identical to what [`first_detection`] returns for the same seed.
pub fn first_detection_ensemble(
    psi0: &WaveFunction,
    profile: &DetectorProfile,
    config: &PropagatorConfig,
    base_seed: u64,
    n: usize,
) -> Result<Vec<DetectionOutcome>> {
    config.validate()?;
    let s0 = check_normalized(psi0)?;
    let grid = *psi0.grid();
    profile.check_grid(&grid)?;
    let kind = RateOperatorKind::from_profile(profile, GrwMode::PositionDependent);
    let kernel = GaussianKernel::new(&grid, profile.sigma())?;
    let op = between_collapse_operator(&grid, profile, &kind, &kernel, config)?;
    let cn = CrankNicolson::new(&op, config.dt)?;

    let seed_of = |i: usize| base_seed.wrapping_add(i as u64);
    let thresholds: Vec<f64> = (0..n).map(|i| open_unit(&mut seeded(seed_of(i))) * s0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| thresholds[b].total_cmp(&thresholds[a]).then(a.cmp(&b)));

    let mut outcomes = vec![DetectionOutcome::NeverDetected; n];
    let mut cursor = 0;
    let mut state = psi0.values().to_vec();
    let mut next = state.clone();
    let mut s_cur = s0;
    let mut t = 0.0;
    let t_max = config.t_max;
    while t_max - t > 1e-12 * t_max && cursor < n {
        let h = config.dt.min(t_max - t);
        if h < config.dt {
            next = partial_step(&op, &state, h)?;
        } else {
            cn.step_into(&state, &mut next);
        }
        let s_next = norm_of(&grid, &next);
        let start = cursor;
        while cursor < n && thresholds[order[cursor]] > s_next {
            cursor += 1;
        }
        let group = &order[start..cursor];
        let detected: Vec<(usize, DetectionOutcome)> = group
            .par_iter()
            .map(|&i| {
                let mut rng = seeded(seed_of(i));
                let _threshold_draw = open_unit(&mut rng);
                let tau = h * crossing_fraction(s_cur, s_next, thresholds[i]);
                let at = WaveFunction::from_parts_unchecked(grid, partial_step(&op, &state, tau)?);
                let density = rate_density_with(&kernel, &at, &kind);
                let position = sample_piecewise_linear(&grid, &density, rng.random())?;
                Ok((
                    i,
                    DetectionOutcome::Detected {
                        time: t + tau,
                        position,
                        side: Side::Bulk,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        for (i, outcome) in detected {
            outcomes[i] = outcome;
        }
        std::mem::swap(&mut state, &mut next);
        s_cur = s_next;
        t += h;
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PhysicalConstants;
    use crate::propagator::BoundaryCondition;

    fn wide_grid() -> SpatialGrid {
        SpatialGrid::new(-20.0, 20.0, 801).unwrap()
    }

    fn config(t_max: f64, mode: GrwMode) -> GrwConfig {
        GrwConfig {
            propagator: PropagatorConfig::new(
                0.02,
                t_max,
                BoundaryCondition::Dirichlet,
                BoundaryCondition::Dirichlet,
                PhysicalConstants::default(),
            )
            .unwrap(),
            mode,
            jump: JumpConvention::SqrtGaussian,
        }
    }

    #[test]
    fn constant_rate_total_is_lambda0() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, 1.0, 1.5, 0.7).unwrap();
        let kind = RateOperatorKind::ConstantRate { lambda0: 0.8 };
        let d = collapse_rate_density(&psi, &kind, 0.3).unwrap();
        assert!((g.integrate(&d) - 0.8).abs() < 1e-8);
    }

    #[test]
    fn constant_rate_centers_reach_past_the_walls() {
        let g = SpatialGrid::new(0.0, 10.0, 401).unwrap();
        let psi = WaveFunction::gaussian_packet(g, 0.3, 0.2, 0.0).unwrap();
        let kind = RateOperatorKind::ConstantRate { lambda0: 0.8 };
        let (lattice, d) = collapse_center_density(&psi, &kind, 1.0).unwrap();
        assert!(lattice.x_min() < -7.9 && lattice.x_max() > 17.9);
        assert!((lattice.integrate(&d) - 0.8 * psi.squared_norm()).abs() < 1e-12);
        let on_grid = collapse_rate_density(&psi, &kind, 1.0).unwrap();
        assert!(g.integrate(&on_grid) < 0.7);
    }

    #[test]
    fn disjoint_rate_has_no_collapses() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, -10.0, 0.5, 0.0).unwrap();
        let rate = g.sample(|x| if x > 5.0 { 3.0 } else { 0.0 });
        let d = collapse_rate_density(&psi, &RateOperatorKind::PositionDependent { rate }, 0.2).unwrap();
        assert!(g.integrate(&d) < 1e-12);
    }

    #[test]
    fn narrow_kernel_density_tracks_local_rate() {
        let g = SpatialGrid::new(-10.0, 10.0, 4001).unwrap();
        let psi = WaveFunction::gaussian_packet(g, 0.0, 2.0, 0.0).unwrap();
        let rate = g.sample(|x| 1.0 + 0.5 * (0.3 * x).sin());
        let d = collapse_rate_density(&psi, &RateOperatorKind::PositionDependent { rate: rate.clone() }, 0.05).unwrap();
        let rho = psi.density();
        for i in (0..g.len()).filter(|&i| g.node(i).abs() < 4.0) {
            let local = rate[i] * rho[i];
            assert!((d[i] - local).abs() < 0.01 * local);
        }
    }

    #[test]
    fn spike_samples_spread_by_sigma() {
        let g = wide_grid();
        let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
        let i0 = g.nearest_index(3.0);
        values[i0] = Complex64::new(1.0, 0.0);
        let psi = WaveFunction::new(g, values).unwrap().normalized().unwrap();
        let kind = RateOperatorKind::ConstantRate { lambda0: 1.0 };
        let sigma = 0.5;
        let mut rng = seeded(7);
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_collapse_center(&psi, &kind, sigma, &mut rng).unwrap()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * sigma / (n as f64).sqrt());
        // piecewise-linear interpolation adds dx²/6 to the variance
        assert!((var.sqrt() - sigma).abs() < 0.02);
    }

    #[test]
    fn symmetric_setup_samples_centered() {
        let g = wide_grid();
        let psi = WaveFunction::from_fn(g, |x| Complex64::new((-(x - 4.0).powi(2)).exp() + (-(x + 4.0).powi(2)).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let kind = RateOperatorKind::PositionDependent { rate: g.sample(|x| 1.0 + 0.1 * x * x) };
        let mut rng = seeded(11);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_collapse_center(&psi, &kind, 0.3, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn samples_stay_inside_rate_support() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, 0.0, 3.0, 0.0).unwrap();
        let kind = RateOperatorKind::PositionDependent { rate: g.sample(|x| if (-1.0..=2.0).contains(&x) { 1.0 } else { 0.0 }) };
        let mut rng = seeded(3);
        // node-sampled rate: its interpolant is supported on [a - dx, b + dx]
        let dx = g.dx();
        for _ in 0..5000 {
            let x = sample_collapse_center(&psi, &kind, 0.4, &mut rng).unwrap();
            assert!((-1.0 - dx..=2.0 + dx).contains(&x), "{x}");
        }
        let none = RateOperatorKind::ConstantRate { lambda0: 0.0 };
        assert_eq!(sample_collapse_center(&psi, &none, 0.4, &mut rng), Err(Error::ZeroRate));
    }

    #[test]
    fn collapse_of_constant_state_is_gaussian() {
        let g = wide_grid();
        let psi = WaveFunction::from_fn(g, |_| Complex64::new(0.3, 0.1)).unwrap().normalized().unwrap();
        let kind = RateOperatorKind::ConstantRate { lambda0: 1.0 };
        let sigma = 0.7;
        let out = apply_collapse(&psi, 2.0, &kind, sigma, JumpConvention::SqrtGaussian).unwrap();
        assert!((out.squared_norm() - 1.0).abs() < 1e-12);
        for (i, d) in out.density().iter().enumerate() {
            let expect = gaussian_density(g.node(i) - 2.0, sigma);
            assert!((d - expect).abs() < 1e-9);
        }
        let literal = apply_collapse(&psi, 2.0, &kind, sigma, JumpConvention::RateOperator).unwrap();
        for (i, d) in literal.density().iter().enumerate() {
            let expect = gaussian_density(g.node(i) - 2.0, sigma / 2f64.sqrt());
            assert!((d - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn broad_collapse_barely_changes_a_narrow_packet() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, 0.5, 0.3, 1.0).unwrap();
        let out = apply_collapse(&psi, 0.5, &RateOperatorKind::ConstantRate { lambda0: 1.0 }, 6.0, JumpConvention::SqrtGaussian).unwrap();
        assert!(out.fidelity(&psi) > 0.99);
    }

    #[test]
    fn collapse_far_from_support_annihilates() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, -15.0, 0.2, 0.0).unwrap();
        let r = apply_collapse(&psi, 15.0, &RateOperatorKind::ConstantRate { lambda0: 1.0 }, 0.05, JumpConvention::SqrtGaussian);
        assert_eq!(r, Err(Error::ZeroNorm));
    }

    #[test]
    fn zero_rate_is_plain_schrodinger_evolution() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, 0.0, 1.0, 1.0).unwrap();
        let profile = DetectorProfile::free(&g);
        let cfg = config(2.0, GrwMode::ConstantRate);
        let rec = run_grw(&psi, &profile, &cfg, 5).unwrap();
        assert!(rec.events.is_empty());
        let reference = crate::propagator::evolve(&psi, &cfg.propagator, &profile, |_| ()).unwrap();
        assert!(rec.final_state.fidelity(&reference.final_state) > 1.0 - 1e-12);
    }

    #[test]
    fn identical_seeds_identical_records() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, 0.0, 1.0, 1.0).unwrap();
        let profile = DetectorProfile::free(&g).with_lambda0(2.0).unwrap().with_sigma(0.5).unwrap();
        let cfg = config(2.0, GrwMode::ConstantRate);
        let a = run_grw(&psi, &profile, &cfg, 99).unwrap();
        let b = run_grw(&psi, &profile, &cfg, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        let c = run_grw(&psi, &profile, &cfg, 100).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn rate_outside_reach_never_fires() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, -8.0, 0.7, 0.0).unwrap();
        let profile = DetectorProfile::free(&g).with_rate_fn(&g, |x| if x > 12.0 { 5.0 } else { 0.0 }).unwrap().with_sigma(0.2).unwrap();
        let cfg = config(1.0, GrwMode::PositionDependent);
        for seed in 0..20 {
            assert!(run_grw(&psi, &profile, &cfg, seed).unwrap().events.is_empty());
            assert_eq!(first_detection(&psi, &profile, &cfg.propagator, seed).unwrap(), DetectionOutcome::NeverDetected);
        }
    }

    #[test]
    fn position_dependent_events_conserve_rate_mass() {
        let g = wide_grid();
        let psi = WaveFunction::gaussian_packet(g, -3.0, 1.0, 2.0).unwrap();
        let profile = DetectorProfile::free(&g).with_rate_fn(&g, |x| if x > 0.0 { 1.0 } else { 0.0 }).unwrap().with_sigma(0.2).unwrap();
        let cfg = config(5.0, GrwMode::PositionDependent);
        let rec = run_grw(&psi, &profile, &cfg, 1).unwrap();
        assert!(!rec.events.is_empty());
        for e in &rec.events {
            assert!(e.total_rate > 0.0 && e.center > -1.5);
        }
        assert!((rec.final_state.squared_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_matches_single_runs() {
        let g = SpatialGrid::new(-10.0, 10.0, 401).unwrap();
        let psi = WaveFunction::gaussian_packet(g, -3.0, 1.0, 2.0).unwrap();
        let profile = DetectorProfile::free(&g).with_rate_fn(&g, |x| if x > 0.0 { 2.0 } else { 0.0 }).unwrap().with_sigma(0.2).unwrap();
        let cfg = config(4.0, GrwMode::PositionDependent).propagator;
        let ens = first_detection_ensemble(&psi, &profile, &cfg, 40, 16).unwrap();
        for (i, o) in ens.iter().enumerate() {
            assert_eq!(*o, first_detection(&psi, &profile, &cfg, 40 + i as u64).unwrap());
        }
        assert!(ens.iter().any(|o| o.is_detected()));
    }

    #[test]
    fn zero_rate_never_detects() {
        let g = SpatialGrid::new(-10.0, 10.0, 201).unwrap();
        let psi = WaveFunction::gaussian_packet(g, 0.0, 1.0, 1.0).unwrap();
        let cfg = config(1.0, GrwMode::PositionDependent).propagator;
        let out = first_detection_ensemble(&psi, &DetectorProfile::free(&g), &cfg, 0, 50).unwrap();
        assert!(out.iter().all(|o| *o == DetectionOutcome::NeverDetected));
    }

    #[test]
    fn piecewise_linear_sampler_edges() {
        let g = SpatialGrid::new(0.0, 1.0, 3).unwrap();
        // triangle peaked at 0.5
        let f = [0.0, 1.0, 0.0];
        assert_eq!(sample_piecewise_linear(&g, &f, 0.0).unwrap(), 0.0);
        assert!((sample_piecewise_linear(&g, &f, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((sample_piecewise_linear(&g, &f, 0.125).unwrap() - 0.25).abs() < 1e-15);
        assert!(sample_piecewise_linear(&g, &f, 1.0 - 1e-16).unwrap() <= 1.0);
        assert_eq!(sample_piecewise_linear(&g, &[0.0; 3], 0.3), Err(Error::ZeroRate));
    }
}
