use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cosine annealing with warm restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    /// Iterations at which the rate jumps back up, strictly increasing.
    pub restart_iterations: Vec<usize>,
    pub total_iterations: usize,
    /// Multiplier on `lr_max` after each restart.
    pub restart_weights: Vec<f64>,
}

/// Full-length reference run.
pub const REFERENCE_ITERATIONS: usize = 50_000;

impl Default for ScheduleConfig {
    /// 50k iterations, restarts at 10k/20k/40k, 1e-4 annealed to 1e-7.
    fn default() -> Self {
        Self {
            lr_max: 1e-4,
            lr_min: 1e-7,
            restart_iterations: vec![10_000, 20_000, 40_000],
            total_iterations: REFERENCE_ITERATIONS,
            restart_weights: vec![1.0; 3],
        }
    }
}

impl ScheduleConfig {
    /// Same shape, with every iteration count scaled to `total`. Restarts
    /// that collapse onto 0, a previous restart or the end of a short run
    /// are dropped.
    pub fn scaled(&self, total: usize) -> Result<Self> {
        self.validate()?;
        let f = total as f64 / self.total_iterations as f64;
        let mut restart_iterations = Vec::new();
        let mut restart_weights = Vec::new();
        for (r, w) in self.restart_iterations.iter().zip(&self.restart_weights) {
            let r = (*r as f64 * f).round() as usize;
            if r > restart_iterations.last().copied().unwrap_or(0) && r < total {
                restart_iterations.push(r);
                restart_weights.push(*w);
            }
        }
        let s = Self {
            restart_iterations,
            restart_weights,
            total_iterations: total,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min >= 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::config(
                "lr_max",
                format!("need 0 <= lr_min < lr_max, got {} and {}", self.lr_min, self.lr_max),
            ));
        }
        let mut prev = 0;
        for &r in &self.restart_iterations {
            if r <= prev || r >= self.total_iterations {
                return Err(Error::config(
                    "restarts",
                    format!(
                        "restarts {:?} must be strictly increasing within (0, {})",
                        self.restart_iterations, self.total_iterations
                    ),
                ));
            }
            prev = r;
        }
        if self.restart_weights.len() != self.restart_iterations.len() {
            return Err(Error::config("restart_weights", "need one weight per restart"));
        }
        Ok(())
    }

    /// Period boundaries `[0, r1, .., rk, total]`.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.restart_iterations.len() + 2);
        b.push(0);
        b.extend(&self.restart_iterations);
        b.push(self.total_iterations);
        b
    }

    /// Rate at `t_cur` iterations into period `k`, for `0 <= t_cur <= T_k`.
    /// At `t_cur = T_k` this is exactly `lr_min`.
    pub fn lr_in_period(&self, k: usize, t_cur: f64) -> f64 {
        let b = self.boundaries();
        let t_i = (b[k + 1] - b[k]) as f64;
        let peak = if k == 0 { self.lr_max } else { self.lr_max * self.restart_weights[k - 1] };
        let c = (1.0 + (PI * t_cur / t_i).cos()) / 2.0;
        self.lr_min * (1.0 - c) + peak * c
    }
}

/// Learning rate at iteration `t`.
pub fn cosine_lr(schedule: &ScheduleConfig, t: usize) -> Result<f64> {
    if t >= schedule.total_iterations {
        return Err(Error::Domain(format!(
            "iteration {t} outside schedule of {}",
            schedule.total_iterations
        )));
    }
    let b = schedule.boundaries();
    let k = b.partition_point(|s| *s <= t) - 1;
    Ok(schedule.lr_in_period(k, (t - b[k]) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_anchors() {
        let s = ScheduleConfig::default();
        assert_eq!(cosine_lr(&s, 0).unwrap(), 1e-4);
        for r in [10_000, 20_000, 40_000] {
            assert_eq!(cosine_lr(&s, r).unwrap(), 1e-4);
        }
        for k in 0..4 {
            let b = s.boundaries();
            assert_eq!(s.lr_in_period(k, (b[k + 1] - b[k]) as f64), 1e-7);
        }
        let mid = cosine_lr(&s, 5_000).unwrap();
        assert!((mid - (1e-4 + 1e-7) / 2.0).abs() < 1e-18);
        assert!(matches!(cosine_lr(&s, 50_000), Err(Error::Domain(_))));
    }

    #[test]
    fn last_iteration_of_a_period_is_just_above_min() {
        let s = ScheduleConfig::default();
        let t_i = 10_000.0;
        let lr = cosine_lr(&s, 9_999).unwrap();
        let bound = 1e-7 + (1e-4 - 1e-7) * (1.0 - (PI * (t_i - 1.0) / t_i).cos()) / 2.0;
        assert!(lr > 1e-7 && lr <= bound);
    }

    #[test]
    fn monotone_within_periods() {
        let s = ScheduleConfig::default().scaled(2_000).unwrap();
        assert_eq!(s.restart_iterations, vec![400, 800, 1600]);
        let lrs: Vec<f64> = (0..2_000).map(|t| cosine_lr(&s, t).unwrap()).collect();
        for t in 1..2_000 {
            if s.restart_iterations.contains(&t) {
                assert_eq!(lrs[t], 1e-4);
            } else {
                assert!(lrs[t] <= lrs[t - 1]);
            }
        }
    }

    #[test]
    fn invalid_schedules() {
        assert_eq!(ScheduleConfig::default().scaled(3).unwrap().restart_iterations, vec![1, 2]);
        assert!(ScheduleConfig::default().scaled(1).unwrap().restart_iterations.is_empty());
        let bad = ScheduleConfig {
            lr_min: 1e-3,
            ..ScheduleConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn restart_weights_scale_the_peak() {
        let s = ScheduleConfig {
            restart_weights: vec![0.5, 0.25, 0.125],
            ..ScheduleConfig::default()
        };
        assert_eq!(cosine_lr(&s, 10_000).unwrap(), 0.5e-4);
        assert_eq!(cosine_lr(&s, 40_000).unwrap(), 0.125e-4);
    }
}
