//! Soft detectors: Schrödinger evolution with the imaginary potential
//! `-iħλ(x)/2`, whose norm loss `λ(x)|Ψ|²` is read as the detection rate.

use crate::abr::DetectionOptions;
use crate::domain::{DetectionDistribution, DetectorProfile, Side, SpatialGrid, WaveFunction};
use crate::error::{invalid, Error, Result};
use crate::propagator::{evolve, PropagatorConfig};

/// Detection distribution of an imaginary-potential run.
///
/// Absorption in the bulk is credited to `side`; boundary flux at absorbing
/// endpoints, if any, is credited to the corresponding endpoint.
pub fn imaginary_potential_distribution(
    psi0: &WaveFunction,
    profile: &DetectorProfile,
    config: &PropagatorConfig,
    options: &DetectionOptions,
    side: Side,
) -> Result<DetectionDistribution> {
    let mut dist = DetectionDistribution::uniform(config.t_max, options.bins)?;
    let run = evolve(psi0, config, profile, |s| {
        dist.deposit(side, s.t_start, s.t_end(), s.bulk_absorption(profile.rate()));
        for b in [Side::Left, Side::Right] {
            if s.operator.absorbs_at(b) {
                dist.deposit(b, s.t_start, s.t_end(), s.boundary_outflow(b));
            }
        }
    })?;
    dist.p_never = run.final_state.squared_norm();
    let defect = dist.closure_defect();
    if defect.abs() > options.closure_tolerance {
        return Err(Error::ClosureViolation { defect });
    }
    Ok(dist)
}

/// Space–time histogram of the absorbed probability `∫∫ λ |Ψ_t|² dx dt`.
///
/// `masses[t][x]` covers the time bin `[time_edges[t], time_edges[t+1])`
/// and the space bin `[x_edges[x], x_edges[x+1])`; the density is taken as
/// the piecewise-linear interpolant of the node values.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionHistogram {
    pub time_edges: Vec<f64>,
    pub x_edges: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
    pub survival: Vec<f64>,
}

impl AbsorptionHistogram {
    /// Survival probability at each time edge (`survival[0] = 1`).
    pub fn survival_at_edges(&self) -> &[f64] {
        &self.survival
    }
}

pub fn absorption_histogram(
    psi0: &WaveFunction,
    profile: &DetectorProfile,
    config: &PropagatorConfig,
    time_edges: &[f64],
    x_edges: &[f64],
) -> Result<AbsorptionHistogram> {
    if time_edges.len() < 2 || x_edges.len() < 2 {
        return Err(invalid("edges", "need at least one bin in each direction"));
    }
    if time_edges.windows(2).any(|w| w[1] <= w[0]) || x_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("edges", "must be strictly increasing"));
    }
    let grid: SpatialGrid = *psi0.grid();
    let nt = time_edges.len() - 1;
    let nx = x_edges.len() - 1;
    let mut masses = vec![vec![0.0; nx]; nt];
    let mut survival = vec![f64::NAN; time_edges.len()];
    survival[0] = psi0.squared_norm();
    let mut density = vec![0.0; grid.len()];
    let rate = profile.rate();
    evolve(psi0, config, profile, |s| {
        let (t0, t1) = (s.t_start, s.t_end());
        let overlaps: Vec<(usize, f64)> = (0..nt)
            .filter_map(|b| {
                let lo = time_edges[b].max(t0);
                let hi = time_edges[b + 1].min(t1);
                (hi > lo).then(|| (b, (hi - lo) / s.dt))
            })
            .collect();
        if !overlaps.is_empty() {
            for (i, d) in density.iter_mut().enumerate() {
                *d = rate[i] * s.midpoint(i).norm_sqr();
            }
            for x in 0..nx {
                let m = s.dt * grid.integrate_interval(&density, x_edges[x], x_edges[x + 1]);
                for &(b, frac) in &overlaps {
                    masses[b][x] += m * frac;
                }
            }
        }
        // survival at an edge inside this step: log-linear in time
        let (n0, n1) = (s.previous_norm(), s.squared_norm());
        for (e, &te) in time_edges.iter().enumerate() {
            if te > t0 && te <= t1 {
                let f = (te - t0) / s.dt;
                survival[e] = if n0 > 0.0 && n1 > 0.0 { n0 * (n1 / n0).powf(f) } else { n0 + (n1 - n0) * f };
            }
        }
    })?;
    Ok(AbsorptionHistogram {
        time_edges: time_edges.to_vec(),
        x_edges: x_edges.to_vec(),
        masses,
        survival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PhysicalConstants;
    use crate::propagator::BoundaryCondition;

    fn setup() -> (WaveFunction, PropagatorConfig) {
        let g = SpatialGrid::new(-15.0, 5.0, 801).unwrap();
        let psi = WaveFunction::gaussian_packet(g, -5.0, 1.5, 1.5).unwrap();
        let cfg = PropagatorConfig::new(
            0.01,
            10.0,
            BoundaryCondition::Dirichlet,
            BoundaryCondition::Neumann,
            PhysicalConstants::default(),
        )
        .unwrap();
        (psi, cfg)
    }

    #[test]
    fn no_rate_no_detection() {
        let (psi, cfg) = setup();
        let p = DetectorProfile::free(psi.grid());
        let d = imaginary_potential_distribution(&psi, &p, &cfg, &DetectionOptions::default(), Side::Right).unwrap();
        assert_eq!(d.detected_mass(), 0.0);
        assert!((d.p_never - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closure_and_histogram_agree() {
        let (psi, cfg) = setup();
        let g = *psi.grid();
        let p = DetectorProfile::free(&g).with_rate_fn(&g, |x| if x > 0.0 { 2.0 } else { 0.0 }).unwrap();
        let d = imaginary_potential_distribution(&psi, &p, &cfg, &DetectionOptions::default(), Side::Right).unwrap();
        assert!(d.closure_defect().abs() < 1e-12);
        assert!(d.detected_mass() > 0.5);
        let edges: Vec<f64> = (0..=5).map(|i| 2.0 * i as f64).collect();
        let h = absorption_histogram(&psi, &p, &cfg, &edges, &[-15.0, 0.0, 2.5, 5.0]).unwrap();
        let total: f64 = h.masses.iter().flatten().sum();
        assert!((total - d.detected_mass()).abs() < 1e-10);
        assert!((h.survival[5] - d.p_never).abs() < 1e-12);
        assert!(h.masses.iter().all(|row| row[0].abs() < 1e-12));
    }
}
