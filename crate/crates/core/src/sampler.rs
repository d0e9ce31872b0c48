//! Physics-guided reverse-diffusion sampling.
//!
//! The outer loop is standard DDPM ancestral sampling. At each timestep the
//! clean-data estimate is refined by an inner gradient descent on the
//! composite placement loss (wirelength + overlap), and the refined estimate
//! is folded back into the noise prediction before the denoising step. The
//! wirelength/overlap trade-off follows a two-phase weight schedule that
//! flips — at most once per sample — when wirelength improvement plateaus;
//! at the flip the wirelength smoothing temperature is annealed by 0.5x.
//!
//! Guidance operates in normalized coordinates ([-1, 1] canvas), so the step
//! size is interpreted in normalized units. A backtracking line search wraps
//! each inner step: with zero halvings it reduces to the plain update, and it
//! guarantees the composite loss never increases.

use alloc::vec::Vec;

use crate::diffusion::{ddpm_step, guided_epsilon, predict_x0, DiffusionSchedule};
use crate::error::CoreError;
use crate::graph::{build_graph, normalize_netlist, update_dynamic, HeteroGraph};
use crate::netlist::{Netlist, Placement};
use crate::objectives::{
    guide_loss, guide_loss_value, hpwl_exact, overlap_loss, weight_schedule, GuideWeights,
    ScheduleState,
};
use crate::rng::{derive_rng, standard_normal_pairs, stream};

/// How much physics steering the sampler applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Two-phase schedule over wirelength + overlap.
    Full,
    /// Fixed weights (0, 1): overlap resolution only.
    OverlapOnly,
    /// No inner loop; reduces exactly to vanilla DDPM sampling.
    None,
}

/// Inner-loop settings. Defaults follow the canonical preset: 700 steps at
/// step size 0.05 with plateau threshold 0.1 over a 10-step window.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Maximum inner gradient steps per timestep.
    pub max_steps: usize,
    /// Inner step size, normalized units.
    pub eta: f64,
    /// Relative-improvement plateau threshold for the phase flip.
    pub threshold: f64,
    /// Plateau detection window, in inner steps.
    pub window: usize,
    /// Phase-1 weights (wirelength emphasis).
    pub phase1: GuideWeights,
    /// Phase-2 weights (overlap emphasis).
    pub phase2: GuideWeights,
    /// Wirelength smoothing temperature; halved once when phase 2 begins.
    pub gamma: f64,
    pub mode: GuidanceMode,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            max_steps: 700,
            eta: 0.05,
            threshold: 0.1,
            window: 10,
            phase1: GuideWeights { w_hpwl: 1.0, w_overlap: 0.1 },
            phase2: GuideWeights { w_hpwl: 0.1, w_overlap: 1.0 },
            gamma: 0.01,
            mode: GuidanceMode::Full,
        }
    }
}

impl GuidanceConfig {
    /// Inner steps actually allowed: disabling guidance forces zero.
    pub fn effective_max_steps(&self) -> usize {
        if self.mode == GuidanceMode::None {
            0
        } else {
            self.max_steps
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(CoreError::InvalidConfig("guidance step size must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(CoreError::InvalidConfig("smoothing temperature must be positive".into()));
        }
        if !(self.threshold > 0.0) || self.window == 0 {
            return Err(CoreError::InvalidConfig(
                "plateau threshold must be positive over a nonempty window".into(),
            ));
        }
        let p1_zero = self.phase1.w_hpwl == 0.0 && self.phase1.w_overlap == 0.0;
        let p2_zero = self.phase2.w_hpwl == 0.0 && self.phase2.w_overlap == 0.0;
        if self.mode != GuidanceMode::None && (p1_zero || p2_zero) {
            return Err(CoreError::InvalidConfig(
                "guidance weights must not both be zero while guidance is enabled".into(),
            ));
        }
        Ok(())
    }
}

/// Shared guidance state carried across the timesteps of one sample: the
/// phase machine plus the one-shot smoothing anneal.
#[derive(Debug, Clone)]
pub struct GuidanceState {
    pub schedule: ScheduleState,
    gamma_annealed: bool,
}

impl GuidanceState {
    pub fn new(cfg: &GuidanceConfig) -> Self {
        GuidanceState {
            schedule: ScheduleState::new(cfg.window, cfg.threshold, cfg.phase1, cfg.phase2),
            gamma_annealed: false,
        }
    }

    fn gamma(&self, cfg: &GuidanceConfig) -> f64 {
        if self.gamma_annealed {
            cfg.gamma * 0.5
        } else {
            cfg.gamma
        }
    }
}

/// Result of one inner-loop run.
#[derive(Debug, Clone)]
pub struct InnerLoopOutcome {
    pub placement: Placement,
    /// Accepted gradient steps.
    pub steps: usize,
    /// (loss before, loss after) per accepted step; after <= before always.
    pub loss_trace: Vec<[f64; 2]>,
}

const GRAD_RMS_EXIT: f64 = 1e-6;
const MAX_HALVINGS: usize = 10;

fn grad_rms(grad: &[[f64; 2]]) -> f64 {
    if grad.is_empty() {
        return 0.0;
    }
    let ss: f64 = grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum();
    libm::sqrt(ss / (2.0 * grad.len() as f64))
}

/// Refine a clean-data estimate by gradient descent on the composite loss.
///
/// Runs up to `cfg.effective_max_steps()` iterations of
/// `x <- x - eta * grad(L)`, with per-step backtracking (halve the step up to
/// ten times if the loss would increase, then stop early) and an early exit
/// when the gradient RMS drops below 1e-6. `state` persists across calls so
/// the phase flip happens at most once per sample.
pub fn guidance_inner_loop(
    x0_hat: &Placement,
    netlist: &Netlist,
    cfg: &GuidanceConfig,
    state: &mut GuidanceState,
) -> Result<InnerLoopOutcome, CoreError> {
    cfg.validate()?;
    if !x0_hat.is_finite() {
        return Err(CoreError::NonFinite { what: "inner-loop input", epoch: 0, step: 0 });
    }
    let mut x = x0_hat.clone();
    let mut trace = Vec::new();
    if cfg.mode == GuidanceMode::None {
        return Ok(InnerLoopOutcome { placement: x, steps: 0, loss_trace: trace });
    }
    let mut steps = 0;
    for k in 1..=cfg.effective_max_steps() {
        let weights = match cfg.mode {
            GuidanceMode::Full => {
                let hpwl_now = hpwl_exact(netlist, &x)?;
                let w = weight_schedule(&mut state.schedule, k, hpwl_now);
                if state.schedule.phase() == 2 {
                    state.gamma_annealed = true;
                }
                w
            }
            GuidanceMode::OverlapOnly => GuideWeights { w_hpwl: 0.0, w_overlap: 1.0 },
            GuidanceMode::None => unreachable!(),
        };
        let gamma = state.gamma(cfg);
        let (loss, grad) = guide_loss(netlist, &x, weights, gamma)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite { what: "guidance loss", epoch: 0, step: k });
        }
        // A phase-1 stall is not a reason to stop: the weight schedule must
        // get to observe the plateau so it can flip to phase 2 (it does so
        // within one window of stalled iterations). Early exits apply only
        // once no flip can happen any more.
        let flip_pending = cfg.mode == GuidanceMode::Full && state.schedule.phase() == 1;
        if grad_rms(&grad) < GRAD_RMS_EXIT {
            if flip_pending {
                continue;
            }
            break;
        }
        // Backtracking line search: plain step first, halved on increase.
        let mut eta = cfg.eta;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = Placement {
                coords: x
                    .coords
                    .iter()
                    .zip(grad.iter())
                    .map(|(c, g)| [c[0] - eta * g[0], c[1] - eta * g[1]])
                    .collect(),
            };
            let cand_loss = guide_loss_value(netlist, &candidate, weights, gamma)?;
            if cand_loss <= loss {
                accepted = Some((candidate, cand_loss));
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some((candidate, cand_loss)) => {
                trace.push([loss, cand_loss]);
                x = candidate;
                steps += 1;
            }
            // Even the smallest step increases the loss: hold position if a
            // phase flip is still pending, otherwise stop early.
            None => {
                if !flip_pending {
                    break;
                }
            }
        }
    }
    Ok(InnerLoopOutcome { placement: x, steps, loss_trace: trace })
}

/// Anything that predicts the noise component of a noisy placement. The
/// timestep is taken from `graph.timestep`; the graph's positions are the
/// noisy state the prediction is for.
pub trait NoisePredictor {
    fn predict(
        &self,
        graph: &HeteroGraph,
        netlist: &Netlist,
    ) -> Result<Vec<[f64; 2]>, CoreError>;
}

impl NoisePredictor for crate::denoiser::DenoiserParams {
    fn predict(
        &self,
        graph: &HeteroGraph,
        netlist: &Netlist,
    ) -> Result<Vec<[f64; 2]>, CoreError> {
        Ok(crate::denoiser::denoiser_forward(self, graph, netlist)?.eps)
    }
}

/// Test predictor that returns the exact noise separating the current state
/// from a known clean placement. Reverse diffusion driven by it must recover
/// that placement, which exercises every pipeline stage except the network.
pub struct TrueNoiseOracle {
    /// Clean placement in normalized coordinates.
    pub x0: Vec<[f64; 2]>,
    pub sched: DiffusionSchedule,
}

impl NoisePredictor for TrueNoiseOracle {
    fn predict(
        &self,
        graph: &HeteroGraph,
        _netlist: &Netlist,
    ) -> Result<Vec<[f64; 2]>, CoreError> {
        let x_t = graph.movable_placement().coords;
        if x_t.len() != self.x0.len() {
            return Err(CoreError::ShapeMismatch {
                expected: self.x0.len(),
                got: x_t.len(),
                what: "oracle clean placement",
            });
        }
        let t = graph.timestep;
        let ab = self.sched.alpha_bar(t)?;
        let (ca, cb) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        Ok(x_t
            .iter()
            .zip(self.x0.iter())
            .map(|(xt, x0)| [(xt[0] - ca * x0[0]) / cb, (xt[1] - ca * x0[1]) / cb])
            .collect())
    }
}

/// One per-timestep diagnostic record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    /// Exact wirelength of the guided clean-data estimate, canvas units.
    pub hpwl: f64,
    /// Overlap-plus-boundary penalty of the same estimate, canvas units.
    pub overlap: f64,
    /// Inner gradient steps accepted at this timestep.
    pub guidance_steps: usize,
}

/// Per-timestep diagnostics for one sampling run.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    /// One record per timestep, in sampling order (t = T first).
    pub records: Vec<TrajectoryRecord>,
    /// Normalized state after each denoising step, same order. Lets tests
    /// compare two runs step by step rather than only at the end.
    pub states: Vec<Vec<[f64; 2]>>,
}

fn check_finite_state(x: &[[f64; 2]], t: usize) -> Result<(), CoreError> {
    if x.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(CoreError::NonFiniteState { t });
    }
    Ok(())
}

/// Run physics-guided reverse diffusion and return the final placement in
/// canvas units along with per-timestep diagnostics.
///
/// Determinism: all randomness derives from `seed` via per-purpose streams
/// (one for the initial state, one per timestep for the ancestral noise), so
/// equal inputs give bitwise-equal outputs, and guided/unguided runs under
/// the same seed share the exact same noise draws.
pub fn sample<P: NoisePredictor + ?Sized>(
    netlist: &Netlist,
    predictor: &P,
    sched: &DiffusionSchedule,
    cfg: &GuidanceConfig,
    seed: u64,
) -> Result<(Placement, Trajectory), CoreError> {
    cfg.validate()?;
    let (nn, frame) = normalize_netlist(netlist)?;
    let m = nn.num_movable();
    let t_max = sched.num_steps();

    let mut rng = derive_rng(seed, &[stream::INIT]);
    let mut x = standard_normal_pairs(&mut rng, m);
    let mut graph = build_graph(&nn, &Placement { coords: x.clone() }, t_max)?;
    let mut state = GuidanceState::new(cfg);
    let mut trajectory = Trajectory::default();

    for t in (1..=t_max).rev() {
        let eps_pred = predictor.predict(&graph, &nn)?;
        let x0_hat = predict_x0(&x, &eps_pred, t, sched)?;
        let (x0_guided, steps) = if cfg.mode == GuidanceMode::None {
            (Placement { coords: x0_hat }, 0)
        } else {
            let out = guidance_inner_loop(&Placement { coords: x0_hat }, &nn, cfg, &mut state)?;
            (out.placement, out.steps)
        };
        // With guidance disabled the guided-noise inversion is the exact
        // inverse of the clean-data estimate, so eps_used == eps_pred up to
        // rounding; the vanilla path below avoids even that rounding.
        let eps_used = if cfg.mode == GuidanceMode::None {
            eps_pred
        } else {
            guided_epsilon(&x, &x0_guided.coords, t, sched)?
        };
        let z = if t > 1 {
            let mut zr = derive_rng(seed, &[stream::STEP_NOISE, t as u64]);
            standard_normal_pairs(&mut zr, m)
        } else {
            alloc::vec![[0.0; 2]; m]
        };
        x = ddpm_step(&x, &eps_used, t, &z, sched)?;
        check_finite_state(&x, t)?;

        let denorm = frame.denormalize_placement(&x0_guided);
        trajectory.records.push(TrajectoryRecord {
            t,
            hpwl: hpwl_exact(netlist, &denorm)?,
            overlap: overlap_loss(netlist, &denorm)?,
            guidance_steps: steps,
        });
        trajectory.states.push(x.clone());

        if t > 1 {
            update_dynamic(&mut graph, &nn, &Placement { coords: x.clone() }, t - 1)?;
        }
    }

    let placement = frame.denormalize_placement(&Placement { coords: x });
    Ok((placement, trajectory))
}

/// Plain DDPM ancestral sampling with the same RNG stream discipline as
/// `sample`. Exists so tests can assert that disabling guidance reproduces
/// vanilla sampling tensor-for-tensor, not merely statistically.
pub fn sample_vanilla<P: NoisePredictor + ?Sized>(
    netlist: &Netlist,
    predictor: &P,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<(Placement, Trajectory), CoreError> {
    let (nn, frame) = normalize_netlist(netlist)?;
    let m = nn.num_movable();
    let t_max = sched.num_steps();
    let mut rng = derive_rng(seed, &[stream::INIT]);
    let mut x = standard_normal_pairs(&mut rng, m);
    let mut graph = build_graph(&nn, &Placement { coords: x.clone() }, t_max)?;
    let mut trajectory = Trajectory::default();
    for t in (1..=t_max).rev() {
        let eps_pred = predictor.predict(&graph, &nn)?;
        let x0_hat = predict_x0(&x, &eps_pred, t, sched)?;
        let z = if t > 1 {
            let mut zr = derive_rng(seed, &[stream::STEP_NOISE, t as u64]);
            standard_normal_pairs(&mut zr, m)
        } else {
            alloc::vec![[0.0; 2]; m]
        };
        x = ddpm_step(&x, &eps_pred, t, &z, sched)?;
        check_finite_state(&x, t)?;
        let denorm = frame.denormalize_placement(&Placement { coords: x0_hat });
        trajectory.records.push(TrajectoryRecord {
            t,
            hpwl: hpwl_exact(netlist, &denorm)?,
            overlap: overlap_loss(netlist, &denorm)?,
            guidance_steps: 0,
        });
        trajectory.states.push(x.clone());
        if t > 1 {
            update_dynamic(&mut graph, &nn, &Placement { coords: x.clone() }, t - 1)?;
        }
    }
    let placement = frame.denormalize_placement(&Placement { coords: x });
    Ok((placement, trajectory))
}

/// Run independent sampling trajectories for several seeds on one netlist.
/// Results are keyed by seed; per-seed failures do not abort the batch.
pub fn sample_batch<P: NoisePredictor + ?Sized>(
    netlist: &Netlist,
    predictor: &P,
    sched: &DiffusionSchedule,
    cfg: &GuidanceConfig,
    seeds: &[u64],
) -> Vec<(u64, Result<(Placement, Trajectory), CoreError>)> {
    seeds.iter().map(|&s| (s, sample(netlist, predictor, sched, cfg, s))).collect()
}
