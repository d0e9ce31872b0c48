//! Denoising-diffusion math: noise schedules, the forward (noising) process,
//! and the reverse (denoising) update.
//!
//! Timesteps are 1-based: `t` runs over `1..=num_steps`, and `alpha_bar(t)`
//! is the cumulative product of `alpha(1..=t)`. States are coordinate pairs,
//! one per movable macro, in the normalized frame.

use alloc::vec::Vec;

use crate::error::CoreError;

/// Which beta curve to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Betas linearly interpolated from `beta_start` to `beta_end`.
    Linear,
    /// Squared-cosine cumulative-alpha curve; `beta_end` caps each beta.
    Cosine,
}

/// Precomputed noise schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    fn check_t(&self, t: usize) -> Result<(), CoreError> {
        if t >= 1 && t <= self.num_steps() {
            Ok(())
        } else {
            Err(CoreError::TimestepOutOfRange { t, num_steps: self.num_steps() })
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64, CoreError> {
        self.check_t(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64, CoreError> {
        self.check_t(t)?;
        Ok(self.alphas[t - 1])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, CoreError> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    /// Reverse-step noise scale, `sqrt(beta_t)`.
    pub fn sigma(&self, t: usize) -> Result<f64, CoreError> {
        Ok(libm::sqrt(self.beta(t)?))
    }

    /// Shrink the schedule to `target_steps` by uniform striding, preserving
    /// the cumulative-alpha curve at the kept steps: the new betas satisfy
    /// `1 - beta'_k = alpha_bar(t_k) / alpha_bar(t_{k-1})`.
    pub fn subsample(&self, target_steps: usize) -> Result<DiffusionSchedule, CoreError> {
        let total = self.num_steps();
        if target_steps == 0 || total % target_steps != 0 {
            return Err(CoreError::InvalidSchedule(alloc::format!(
                "cannot stride {total} steps down to {target_steps}"
            )));
        }
        let ratio = total / target_steps;
        let mut betas = Vec::with_capacity(target_steps);
        let mut prev_bar = 1.0;
        for k in 1..=target_steps {
            let bar = self.alpha_bars[k * ratio - 1];
            betas.push(1.0 - bar / prev_bar);
            prev_bar = bar;
        }
        finish_schedule(self.kind, betas)
    }
}

fn finish_schedule(kind: ScheduleKind, betas: Vec<f64>) -> Result<DiffusionSchedule, CoreError> {
    let mut alphas = Vec::with_capacity(betas.len());
    let mut alpha_bars = Vec::with_capacity(betas.len());
    let mut bar = 1.0;
    for &b in &betas {
        if !(b > 0.0 && b < 1.0) {
            return Err(CoreError::InvalidSchedule(alloc::format!("beta {b} outside (0, 1)")));
        }
        let a = 1.0 - b;
        bar *= a;
        alphas.push(a);
        alpha_bars.push(bar);
    }
    Ok(DiffusionSchedule { kind, betas, alphas, alpha_bars })
}

/// Build a noise schedule.
///
/// For the linear kind, betas run from `beta_start` to `beta_end` inclusive.
/// For the cosine kind the betas come from the squared-cosine cumulative
/// curve (offset 0.008) and `beta_end` acts as the per-step cap.
pub fn make_schedule(
    kind: ScheduleKind,
    num_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<DiffusionSchedule, CoreError> {
    if num_steps == 0 {
        return Err(CoreError::InvalidSchedule("num_steps must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(CoreError::InvalidSchedule(alloc::format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas = match kind {
        ScheduleKind::Linear => {
            if num_steps == 1 {
                alloc::vec![beta_start]
            } else {
                (0..num_steps)
                    .map(|i| {
                        beta_start
                            + (beta_end - beta_start) * i as f64 / (num_steps as f64 - 1.0)
                    })
                    .collect()
            }
        }
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| {
                let v = libm::cos((t / num_steps as f64 + s) / (1.0 + s) * core::f64::consts::PI
                    / 2.0);
                v * v
            };
            let f0 = f(0.0);
            (1..=num_steps)
                .map(|t| {
                    let bar_t = f(t as f64) / f0;
                    let bar_prev = f(t as f64 - 1.0) / f0;
                    (1.0 - bar_t / bar_prev).clamp(beta_start, beta_end)
                })
                .collect()
        }
    };
    finish_schedule(kind, betas)
}

fn check_len(a: &[[f64; 2]], b: &[[f64; 2]], what: &'static str) -> Result<(), CoreError> {
    if a.len() != b.len() {
        return Err(CoreError::ShapeMismatch { expected: a.len(), got: b.len(), what });
    }
    Ok(())
}

/// Forward process: `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(
    x0: &[[f64; 2]],
    eps: &[[f64; 2]],
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Vec<[f64; 2]>, CoreError> {
    check_len(x0, eps, "q_sample noise")?;
    let bar = sched.alpha_bar(t)?;
    let a = libm::sqrt(bar);
    let b = libm::sqrt(1.0 - bar);
    Ok(x0
        .iter()
        .zip(eps.iter())
        .map(|(x, e)| [a * x[0] + b * e[0], a * x[1] + b * e[1]])
        .collect())
}

/// Clean-state estimate from a noise prediction:
/// `x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`.
pub fn predict_x0(
    x_t: &[[f64; 2]],
    eps: &[[f64; 2]],
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Vec<[f64; 2]>, CoreError> {
    check_len(x_t, eps, "predict_x0 noise")?;
    let bar = sched.alpha_bar(t)?;
    let a = libm::sqrt(bar);
    let b = libm::sqrt(1.0 - bar);
    Ok(x_t
        .iter()
        .zip(eps.iter())
        .map(|(x, e)| [(x[0] - b * e[0]) / a, (x[1] - b * e[1]) / a])
        .collect())
}

/// Invert the clean-state estimate back into noise space:
/// `eps = (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t)`.
///
/// Composing with [`predict_x0`] is the identity, so feeding back an
/// unmodified estimate reproduces the original noise prediction exactly.
pub fn guided_epsilon(
    x_t: &[[f64; 2]],
    x0: &[[f64; 2]],
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Vec<[f64; 2]>, CoreError> {
    check_len(x_t, x0, "guided_epsilon state")?;
    let bar = sched.alpha_bar(t)?;
    let a = libm::sqrt(bar);
    let b = libm::sqrt(1.0 - bar);
    Ok(x_t
        .iter()
        .zip(x0.iter())
        .map(|(x, x0)| [(x[0] - a * x0[0]) / b, (x[1] - a * x0[1]) / b])
        .collect())
}

/// One reverse (ancestral) step:
/// `x_{t-1} = (x_t - ((1 - alpha_t)/sqrt(1 - abar_t)) eps) / sqrt(alpha_t) + sigma_t z`.
///
/// At `t = 1` the noise term is dropped regardless of `z`.
pub fn ddpm_step(
    x_t: &[[f64; 2]],
    eps: &[[f64; 2]],
    t: usize,
    z: &[[f64; 2]],
    sched: &DiffusionSchedule,
) -> Result<Vec<[f64; 2]>, CoreError> {
    check_len(x_t, eps, "ddpm_step noise")?;
    check_len(x_t, z, "ddpm_step z")?;
    let alpha = sched.alpha(t)?;
    let bar = sched.alpha_bar(t)?;
    let coeff = (1.0 - alpha) / libm::sqrt(1.0 - bar);
    let inv_sqrt_alpha = 1.0 / libm::sqrt(alpha);
    let sigma = if t > 1 { sched.sigma(t)? } else { 0.0 };
    Ok(x_t
        .iter()
        .zip(eps.iter())
        .zip(z.iter())
        .map(|((x, e), zz)| {
            [
                inv_sqrt_alpha * (x[0] - coeff * e[0]) + sigma * zz[0],
                inv_sqrt_alpha * (x[1] - coeff * e[1]) + sigma * zz[1],
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::rng::{derive_rng, standard_normal_pairs};
    use alloc::vec;

    fn desk_schedule() -> DiffusionSchedule {
        make_schedule(ScheduleKind::Linear, 200, 1e-4, 0.02).unwrap()
    }

    fn max_abs_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        a.iter()
            .zip(b.iter())
            .flat_map(|(x, y)| [(x[0] - y[0]).abs(), (x[1] - y[1]).abs()])
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_schedule_endpoints_and_monotonicity() {
        let s = make_schedule(ScheduleKind::Linear, 1000, 1e-4, 0.02).unwrap();
        assert!((s.beta(1).unwrap() - 1e-4).abs() < 1e-15);
        assert!((s.beta(1000).unwrap() - 0.02).abs() < 1e-15);
        let mut prev = 1.0;
        for t in 1..=1000 {
            let bar = s.alpha_bar(t).unwrap();
            assert!(bar > 0.0 && bar < prev, "alpha_bar not strictly decreasing at t={t}");
            assert!((s.alpha(t).unwrap() - (1.0 - s.beta(t).unwrap())).abs() < 1e-15);
            prev = bar;
        }
    }

    #[test]
    fn alpha_bar_is_cumulative_product() {
        let s = desk_schedule();
        let mut bar = 1.0;
        for t in 1..=s.num_steps() {
            bar *= s.alpha(t).unwrap();
            assert!((s.alpha_bar(t).unwrap() - bar).abs() < 1e-15);
        }
    }

    #[test]
    fn cosine_schedule_is_valid_and_capped() {
        let s = make_schedule(ScheduleKind::Cosine, 500, 1e-4, 0.999).unwrap();
        let mut prev = 1.0;
        for t in 1..=500 {
            let b = s.beta(t).unwrap();
            assert!(b > 0.0 && b <= 0.999);
            let bar = s.alpha_bar(t).unwrap();
            assert!(bar < prev);
            prev = bar;
        }
        // The cap binds at the tail where the raw cosine betas blow up.
        let capped = make_schedule(ScheduleKind::Cosine, 500, 1e-4, 0.02).unwrap();
        assert!((capped.beta(500).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(make_schedule(ScheduleKind::Linear, 0, 1e-4, 0.02).is_err());
        assert!(make_schedule(ScheduleKind::Linear, 10, 0.0, 0.02).is_err());
        assert!(make_schedule(ScheduleKind::Linear, 10, 0.03, 0.02).is_err());
        assert!(make_schedule(ScheduleKind::Linear, 10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn timestep_bounds_are_enforced() {
        let s = desk_schedule();
        assert!(matches!(s.beta(0), Err(CoreError::TimestepOutOfRange { t: 0, .. })));
        assert!(matches!(s.beta(201), Err(CoreError::TimestepOutOfRange { t: 201, .. })));
        let x = vec![[0.0, 0.0]];
        assert!(q_sample(&x, &x, 0, &s).is_err());
        assert!(q_sample(&x, &x, 201, &s).is_err());
    }

    #[test]
    fn zero_noise_scales_by_sqrt_alpha_bar() {
        let s = desk_schedule();
        let x0 = vec![[1.0, -2.0], [0.5, 0.25]];
        let zeros = vec![[0.0, 0.0]; 2];
        for t in [1, 77, 200] {
            let xt = q_sample(&x0, &zeros, t, &s).unwrap();
            let a = libm::sqrt(s.alpha_bar(t).unwrap());
            for (orig, noised) in x0.iter().zip(xt.iter()) {
                assert!((noised[0] - a * orig[0]).abs() < 1e-15);
                assert!((noised[1] - a * orig[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn predict_x0_inverts_q_sample() {
        let s = desk_schedule();
        let mut rng = derive_rng(1, &[1]);
        let x0 = standard_normal_pairs(&mut rng, 16);
        let eps = standard_normal_pairs(&mut rng, 16);
        for t in [1, 2, 50, 123, 200] {
            let xt = q_sample(&x0, &eps, t, &s).unwrap();
            let rec = predict_x0(&xt, &eps, t, &s).unwrap();
            assert!(max_abs_diff(&rec, &x0) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn guided_epsilon_inverts_predict_x0() {
        let s = desk_schedule();
        let mut rng = derive_rng(2, &[2]);
        let xt = standard_normal_pairs(&mut rng, 12);
        let eps = standard_normal_pairs(&mut rng, 12);
        for t in [1, 99, 200] {
            let x0 = predict_x0(&xt, &eps, t, &s).unwrap();
            let back = guided_epsilon(&xt, &x0, t, &s).unwrap();
            assert!(max_abs_diff(&back, &eps) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn ddpm_step_drops_noise_at_final_step() {
        let s = desk_schedule();
        let mut rng = derive_rng(3, &[3]);
        let xt = standard_normal_pairs(&mut rng, 8);
        let eps = standard_normal_pairs(&mut rng, 8);
        let z1 = standard_normal_pairs(&mut rng, 8);
        let z2 = standard_normal_pairs(&mut rng, 8);
        let a = ddpm_step(&xt, &eps, 1, &z1, &s).unwrap();
        let b = ddpm_step(&xt, &eps, 1, &z2, &s).unwrap();
        assert_eq!(a, b);
        // At t > 1 the noise matters.
        let c = ddpm_step(&xt, &eps, 2, &z1, &s).unwrap();
        let d = ddpm_step(&xt, &eps, 2, &z2, &s).unwrap();
        assert!(max_abs_diff(&c, &d) > 1e-6);
    }

    #[test]
    fn forward_marginal_matches_theory() {
        let s = desk_schedule();
        let x0 = vec![[0.7, -0.3]];
        let t = 120;
        let bar = s.alpha_bar(t).unwrap();
        let n = 100_000;
        let mut rng = derive_rng(4, &[4]);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let eps = standard_normal_pairs(&mut rng, 1);
            let xt = q_sample(&x0, &eps, t, &s).unwrap();
            sum += xt[0][0];
            sumsq += xt[0][0] * xt[0][0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expect_mean = libm::sqrt(bar) * x0[0][0];
        let expect_var = 1.0 - bar;
        let se_mean = libm::sqrt(expect_var / n as f64);
        let se_var = expect_var * libm::sqrt(2.0 / n as f64);
        assert!((mean - expect_mean).abs() < 3.0 * se_mean, "mean {mean} vs {expect_mean}");
        assert!((var - expect_var).abs() < 3.0 * se_var, "var {var} vs {expect_var}");
    }

    #[test]
    fn subsample_preserves_alpha_bar_curve() {
        let full = make_schedule(ScheduleKind::Linear, 1000, 1e-4, 0.02).unwrap();
        let small = full.subsample(200).unwrap();
        assert_eq!(small.num_steps(), 200);
        for k in 1..=200 {
            let want = full.alpha_bar(k * 5).unwrap();
            let got = small.alpha_bar(k).unwrap();
            assert!((want - got).abs() < 1e-12, "k={k}");
        }
        assert!(full.subsample(0).is_err());
        assert!(full.subsample(300).is_err()); // does not divide 1000
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let s = desk_schedule();
        let a = vec![[0.0, 0.0]; 3];
        let b = vec![[0.0, 0.0]; 2];
        assert!(matches!(q_sample(&a, &b, 5, &s), Err(CoreError::ShapeMismatch { .. })));
        assert!(matches!(ddpm_step(&a, &a, 5, &b, &s), Err(CoreError::ShapeMismatch { .. })));
    }
}
