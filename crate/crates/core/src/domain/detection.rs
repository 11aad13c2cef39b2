use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Where a detection was registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bulk,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bulk => "bulk",
        }
    }
}

/// Outcome of a single detection experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectionOutcome {
    Detected { time: f64, position: f64, side: Side },
    NeverDetected,
}

impl DetectionOutcome {
    pub fn time(&self) -> Option<f64> {
        match self {
            DetectionOutcome::Detected { time, .. } => Some(*time),
            DetectionOutcome::NeverDetected => None,
        }
    }

    pub fn position(&self) -> Option<f64> {
        match self {
            DetectionOutcome::Detected { position, .. } => Some(*position),
            DetectionOutcome::NeverDetected => None,
        }
    }

    pub fn is_detected(&self) -> bool {
        matches!(self, DetectionOutcome::Detected { .. })
    }
}

/// Time-binned detection masses on the two boundary points, plus the mass
/// that was not detected.
///
/// `p_never` is the squared norm left at the end of the simulation and
/// `truncation_remainder` is whatever flux was absorbed after `t_max` by the
/// last time step, so that `detected + p_never + truncation_remainder = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionDistribution {
    pub time_edges: Vec<f64>,
    pub mass_left: Vec<f64>,
    pub mass_right: Vec<f64>,
    pub p_never: f64,
    pub truncation_remainder: f64,
}

impl DetectionDistribution {
    /// Empty distribution with `bins` uniform bins on `[0, t_max]`.
    pub fn uniform(t_max: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("bins", "need at least one time bin"));
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(invalid("t_max", "must be positive"));
        }
        let width = t_max / bins as f64;
        let mut time_edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
        time_edges[bins] = t_max;
        Ok(Self {
            time_edges,
            mass_left: vec![0.0; bins],
            mass_right: vec![0.0; bins],
            p_never: 0.0,
            truncation_remainder: 0.0,
        })
    }

    pub fn bins(&self) -> usize {
        self.mass_left.len()
    }

    pub fn t_max(&self) -> f64 {
        *self.time_edges.last().expect("nonempty edges")
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.time_edges[i] + self.time_edges[i + 1])
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.time_edges[i + 1] - self.time_edges[i]
    }

    /// Combined mass of both sides in bin `i`.
    pub fn mass(&self, i: usize) -> f64 {
        self.mass_left[i] + self.mass_right[i]
    }

    pub fn side_masses(&self, side: Side) -> &[f64] {
        match side {
            Side::Left => &self.mass_left,
            Side::Right | Side::Bulk => &self.mass_right,
        }
    }

    pub fn detected_mass(&self) -> f64 {
        self.mass_left.iter().sum::<f64>() + self.mass_right.iter().sum::<f64>()
    }

    /// Mass not detected within `[0, t_max)`.
    pub fn undetected_mass(&self) -> f64 {
        self.p_never + self.truncation_remainder
    }

    /// `detected + p_never + truncation_remainder - 1`
    pub fn closure_defect(&self) -> f64 {
        self.detected_mass() + self.p_never + self.truncation_remainder - 1.0
    }

    /// Spreads `mass`, absorbed uniformly over `[t0, t1]`, across the bins it
    /// overlaps. The part beyond `t_max` goes to the truncation remainder.
    pub fn deposit(&mut self, side: Side, t0: f64, t1: f64, mass: f64) {
        let span = t1 - t0;
        if span <= 0.0 {
            return;
        }
        let t_max = self.t_max();
        if t1 > t_max {
            let beyond = (t1 - t_max.max(t0)) / span;
            self.truncation_remainder += mass * beyond;
        }
        if t0 >= t_max {
            return;
        }
        let bins = self.bins();
        let width = t_max / bins as f64;
        let first = ((t0 / width).floor().max(0.0) as usize).min(bins - 1);
        let target = match side {
            Side::Left => &mut self.mass_left,
            Side::Right | Side::Bulk => &mut self.mass_right,
        };
        let mut b = first;
        while b < bins {
            let lo = self.time_edges[b].max(t0);
            let hi = self.time_edges[b + 1].min(t1);
            if hi > lo {
                target[b] += mass * (hi - lo) / span;
            }
            if self.time_edges[b + 1] >= t1 {
                break;
            }
            b += 1;
        }
    }

    /// Adds a point mass at time `t`; times past `t_max` go to the
    /// truncation remainder.
    pub fn deposit_at(&mut self, side: Side, t: f64, mass: f64) {
        let t_max = self.t_max();
        if t >= t_max {
            self.truncation_remainder += mass;
            return;
        }
        let bins = self.bins();
        let b = ((t / (t_max / bins as f64)).floor().max(0.0) as usize).min(bins - 1);
        match side {
            Side::Left => self.mass_left[b] += mass,
            Side::Right | Side::Bulk => self.mass_right[b] += mass,
        }
    }

    /// Detection-weighted mean of the bin centers.
    pub fn mean_detection_time(&self) -> Result<f64> {
        let total = self.detected_mass();
        if !(total > 0.0) {
            return Err(Error::NoDetectionMass);
        }
        let weighted: f64 = (0..self.bins()).map(|i| self.mass(i) * self.bin_center(i)).sum();
        Ok(weighted / total)
    }

    /// Total-variation distance on the outcome space (bin × side) ∪ {undetected}.
    pub fn total_variation(&self, other: &DetectionDistribution) -> Result<f64> {
        self.check_bins(other)?;
        let bins: f64 = (0..self.bins())
            .map(|i| {
                (self.mass_left[i] - other.mass_left[i]).abs()
                    + (self.mass_right[i] - other.mass_right[i]).abs()
            })
            .sum();
        Ok(0.5 * (bins + (self.undetected_mass() - other.undetected_mass()).abs()))
    }

    /// Kolmogorov–Smirnov distance between the cumulative detection-time curves.
    pub fn kolmogorov_smirnov(&self, other: &DetectionDistribution) -> Result<f64> {
        self.check_bins(other)?;
        let mut a = 0.0;
        let mut b = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..self.bins() {
            a += self.mass(i);
            b += other.mass(i);
            worst = worst.max((a - b).abs());
        }
        Ok(worst)
    }

    fn check_bins(&self, other: &DetectionDistribution) -> Result<()> {
        let same = self.bins() == other.bins()
            && self
                .time_edges
                .iter()
                .zip(&other.time_edges)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if same {
            Ok(())
        } else {
            Err(Error::Precondition("time bins of the two distributions differ".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_mean_is_its_center() {
        let mut d = DetectionDistribution::uniform(4.0, 4).unwrap();
        d.mass_right[2] = 0.3;
        assert!((d.mean_detection_time().unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn two_equal_bins_average_their_centers() {
        let mut d = DetectionDistribution::uniform(10.0, 10).unwrap();
        d.mass_left[1] = 0.2;
        d.mass_right[5] = 0.2;
        assert!((d.mean_detection_time().unwrap() - 0.5 * (1.5 + 5.5)).abs() < 1e-14);
    }

    #[test]
    fn empty_distribution_has_no_mean() {
        let d = DetectionDistribution::uniform(1.0, 3).unwrap();
        assert_eq!(d.mean_detection_time(), Err(Error::NoDetectionMass));
    }

    #[test]
    fn deposits_split_across_bins_and_truncation() {
        let mut d = DetectionDistribution::uniform(1.0, 4).unwrap();
        d.deposit(Side::Right, 0.2, 0.3, 1.0);
        assert!((d.mass_right[0] - 0.5).abs() < 1e-14);
        assert!((d.mass_right[1] - 0.5).abs() < 1e-14);
        d.deposit(Side::Left, 0.9, 1.1, 2.0);
        assert!((d.mass_left[3] - 1.0).abs() < 1e-14);
        assert!((d.truncation_remainder - 1.0).abs() < 1e-14);
        d.deposit(Side::Left, 1.2, 1.3, 0.5);
        assert!((d.truncation_remainder - 1.5).abs() < 1e-14);
        assert!((d.detected_mass() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn distances_vanish_on_identical_inputs() {
        let mut d = DetectionDistribution::uniform(1.0, 4).unwrap();
        d.mass_right = vec![0.1, 0.2, 0.3, 0.1];
        d.p_never = 0.3;
        assert_eq!(d.total_variation(&d).unwrap(), 0.0);
        let mut e = d.clone();
        e.mass_right[0] = 0.0;
        e.p_never = 0.4;
        assert!((d.total_variation(&e).unwrap() - 0.1).abs() < 1e-15);
        assert!((d.kolmogorov_smirnov(&e).unwrap() - 0.1).abs() < 1e-15);
        let other = DetectionDistribution::uniform(2.0, 4).unwrap();
        assert!(d.total_variation(&other).is_err());
    }
}
