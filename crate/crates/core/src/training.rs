//! Denoiser training: synthetic base designs, degree-preserving netlist
//! augmentation, reference-placement generation, and the SGD loop.
//!
//! The training pipeline is pure and deterministic: every stochastic draw
//! comes from a stream keyed by `(seed, purpose, indices)`, so two runs with
//! the same config produce bitwise-equal parameters, and a run resumed from a
//! serialized [`Trainer`] continues exactly where the original would have.
//! File I/O (checkpoints, loss CSVs) lives in the companion CLI crate.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::denoiser::{forward_on_tape, DenoiserConfig, DenoiserParams};
use crate::diffusion::{make_schedule, q_sample, DiffusionSchedule, ScheduleKind};
use crate::error::CoreError;
use crate::graph::{build_graph, normalize_netlist};
use crate::legalize::legalize;
use crate::netlist::{filter_macro_connectivity, Canvas, Macro, Net, Netlist, Pin, Placement};
use crate::rng::{
    derive_rng, derive_seed, gen_index, shuffle, standard_normal_pairs, stream, uniform01,
};
use crate::objectives::{guide_loss, hpwl_exact, weight_schedule, ScheduleState};
use crate::sampler::GuidanceConfig;
use crate::tape::{Matrix, Tape};

// ---------------------------------------------------------------------------
// Synthetic base designs
// ---------------------------------------------------------------------------

/// Macro counts of the synthetic base designs, two bases per count.
pub const BASE_MACRO_COUNTS: [usize; 4] = [8, 16, 32, 64];

/// Target fraction of the canvas covered by movable macro area.
const FILL_TARGET: f64 = 0.30;
/// Net count per movable macro.
const NETS_PER_MACRO: usize = 3;
/// Power-law exponent for net degrees.
const DEGREE_ALPHA: f64 = 2.2;
/// Number of fixed boundary pads per base design.
const NUM_PADS: usize = 8;
/// Probability that a pin lands on a pad rather than a macro, roughly the
/// pad-pin share of the mixed-size benchmarks.
const PAD_PIN_SHARE: f64 = 0.05;

/// Generate one desk-scale base design: `macro_count` movable macros with
/// aspect ratios in `[0.5, 2]`, four zero-area corner pads, and
/// `3 * macro_count` nets whose degrees follow a truncated power law on
/// `[2, min(8, macro_count)]`.
///
/// Requires `macro_count >= 2`; everything is drawn from the stream
/// `(seed, SYNTH, macro_count)`.
pub fn synthesize_base(macro_count: usize, seed: u64) -> Result<Netlist, CoreError> {
    if macro_count < 2 {
        return Err(CoreError::InvalidConfig(
            "synthetic base needs at least two macros".into(),
        ));
    }
    let mut rng = derive_rng(seed, &[stream::SYNTH, macro_count as u64]);
    let canvas = Canvas { origin: [0.0, 0.0], width: 100.0, height: 100.0 };

    let mean_area = FILL_TARGET * canvas.area() / macro_count as f64;
    let mut macros = Vec::with_capacity(macro_count);
    for id in 0..macro_count {
        let area = mean_area * (0.5 + uniform01(&mut rng));
        // Log-uniform aspect in [0.5, 2] keeps tall and wide shapes balanced.
        let ln_half = libm::log(0.5);
        let aspect = libm::exp(ln_half + uniform01(&mut rng) * (libm::log(2.0) - ln_half));
        let width = libm::sqrt(area * aspect);
        let height = libm::sqrt(area / aspect);
        macros.push(Macro { id, width, height });
    }

    let mut pads = Vec::with_capacity(NUM_PADS);
    let mut pad_positions = Vec::with_capacity(NUM_PADS);
    let rim = [
        [25.0, 0.0],
        [75.0, 0.0],
        [25.0, 100.0],
        [75.0, 100.0],
        [0.0, 25.0],
        [0.0, 75.0],
        [100.0, 25.0],
        [100.0, 75.0],
    ];
    for (i, &pos) in rim.iter().enumerate() {
        pads.push(Macro { id: macro_count + i, width: 0.0, height: 0.0 });
        pad_positions.push(pos);
    }

    // Degree distribution: weights d^-alpha on [2, min(8, macro_count)].
    let d_max = macro_count.min(8);
    let weights: Vec<f64> =
        (2..=d_max).map(|d| libm::pow(d as f64, -DEGREE_ALPHA)).collect();
    let total_weight: f64 = weights.iter().sum();

    let mut nets = Vec::with_capacity(NETS_PER_MACRO * macro_count);
    for id in 0..NETS_PER_MACRO * macro_count {
        let u = uniform01(&mut rng) * total_weight;
        let mut acc = 0.0;
        let mut degree = d_max;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                degree = 2 + i;
                break;
            }
        }
        // Distinct owners by rejection: mostly macros, pads at the benchmark
        // pin share; degree <= 8 keeps this quick.
        let mut owners: Vec<usize> = Vec::with_capacity(degree);
        while owners.len() < degree {
            let candidate = if uniform01(&mut rng) < PAD_PIN_SHARE {
                macro_count + gen_index(&mut rng, NUM_PADS)
            } else {
                gen_index(&mut rng, macro_count)
            };
            if !owners.contains(&candidate) {
                owners.push(candidate);
            }
        }
        let pins = owners
            .into_iter()
            .map(|owner| {
                let offset = if owner < macro_count {
                    let m = &macros[owner];
                    [
                        (uniform01(&mut rng) - 0.5) * m.width * 0.5,
                        (uniform01(&mut rng) - 0.5) * m.height * 0.5,
                    ]
                } else {
                    [0.0, 0.0]
                };
                Pin { owner, offset }
            })
            .collect();
        nets.push(Net { id, pins, total_degree: None });
    }

    let netlist =
        Netlist { macros, pads, pad_positions, cells: Vec::new(), nets, canvas };
    netlist.validate()?;
    Ok(netlist)
}

/// The eight standard base designs: two per count in [`BASE_MACRO_COUNTS`],
/// all derived from `seed`.
pub fn synthesize_bases(seed: u64) -> Result<Vec<Netlist>, CoreError> {
    let mut out = Vec::new();
    for (i, &count) in BASE_MACRO_COUNTS.iter().enumerate() {
        for rep in 0..2u64 {
            let sub = derive_seed(seed, &[stream::SYNTH, i as u64, rep]);
            out.push(synthesize_base(count, sub)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Configuration-model augmentation
// ---------------------------------------------------------------------------

/// Result of one augmentation: the rewired netlist plus a flag that is false
/// when the bounded repair pass could not clear every duplicate (net, owner)
/// pair. Degraded outputs are usable, just flagged.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub netlist: Netlist,
    /// True when no net contains the same owner twice.
    pub fully_simple: bool,
}

/// Excess pin count of one net's owner list: pins beyond the first per owner.
fn span_excess(span: &[usize]) -> usize {
    let mut sorted: Vec<usize> = span.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Positions (into the flat stub list) holding a duplicated owner.
fn duplicate_positions(stubs: &[usize], spans: &[(usize, usize)]) -> Vec<usize> {
    let mut dups = Vec::new();
    for &(start, len) in spans {
        let span = &stubs[start..start + len];
        for (i, &owner) in span.iter().enumerate() {
            if span.iter().enumerate().any(|(j, &o)| j != i && o == owner) {
                dups.push(start + i);
            }
        }
    }
    dups
}

/// Rewire a netlist by the bipartite configuration model: every pin is a
/// (net-stub, owner-stub) pair; owner stubs are shuffled and re-paired, which
/// preserves both per-net degrees and per-owner degrees exactly. Pad pins are
/// rewired the same way as macro pins. Duplicate (net, owner) pairs created
/// by the shuffle are repaired by random swaps accepted only when they
/// strictly reduce the duplicate count, bounded by `100 * total_pins`
/// attempts; leftovers are flagged, not fatal. Pin offsets are resampled
/// uniformly from the new owner's original offset set, so they stay
/// physically on the block. Blocks, pads, and canvas are untouched.
pub fn augment_netlist(netlist: &Netlist, seed: u64) -> Result<Augmented, CoreError> {
    netlist.validate()?;
    let mut rng = derive_rng(seed, &[stream::AUGMENT]);

    // Flatten pins to owner stubs, remembering each net's span.
    let mut stubs: Vec<usize> = Vec::with_capacity(netlist.total_pins());
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(netlist.nets.len());
    for net in &netlist.nets {
        spans.push((stubs.len(), net.pins.len()));
        stubs.extend(net.pins.iter().map(|p| p.owner));
    }
    let num_stubs = stubs.len();

    // Offset pools before rewiring: every owner that appears in a stub has at
    // least one original pin, so its pool is never empty.
    let max_owner = stubs.iter().copied().max().unwrap_or(0);
    let mut offset_pool: Vec<Vec<[f64; 2]>> = vec![Vec::new(); max_owner + 1];
    for net in &netlist.nets {
        for pin in &net.pins {
            offset_pool[pin.owner].push(pin.offset);
        }
    }

    shuffle(&mut rng, &mut stubs);

    // Map stub position -> net, for local duplicate accounting.
    let mut net_of = vec![0usize; num_stubs];
    for (net, &(start, len)) in spans.iter().enumerate() {
        for slot in net_of.iter_mut().skip(start).take(len) {
            *slot = net;
        }
    }

    let budget = 100 * num_stubs;
    let mut attempts = 0usize;
    let fully_simple = loop {
        let dups = duplicate_positions(&stubs, &spans);
        if dups.is_empty() {
            break true;
        }
        if attempts >= budget {
            break false;
        }
        attempts += 1;
        let p = dups[gen_index(&mut rng, dups.len())];
        let q = gen_index(&mut rng, num_stubs);
        let (np, nq) = (net_of[p], net_of[q]);
        if np == nq || stubs[p] == stubs[q] {
            continue;
        }
        // Accept the swap only if it strictly reduces the total excess of the
        // two affected nets (all other nets are unchanged).
        let (sp, lp) = spans[np];
        let (sq, lq) = spans[nq];
        let before =
            span_excess(&stubs[sp..sp + lp]) + span_excess(&stubs[sq..sq + lq]);
        stubs.swap(p, q);
        let after =
            span_excess(&stubs[sp..sp + lp]) + span_excess(&stubs[sq..sq + lq]);
        if after >= before {
            stubs.swap(p, q); // revert
        }
    };

    // Rebuild nets with resampled offsets from each new owner's pool.
    let mut nets = Vec::with_capacity(netlist.nets.len());
    for (net, &(start, len)) in netlist.nets.iter().zip(spans.iter()) {
        let pins = stubs[start..start + len]
            .iter()
            .map(|&owner| {
                let pool = &offset_pool[owner];
                let offset = pool[gen_index(&mut rng, pool.len())];
                Pin { owner, offset }
            })
            .collect();
        nets.push(Net { id: net.id, pins, total_degree: net.total_degree });
    }

    let out = Netlist {
        macros: netlist.macros.clone(),
        pads: netlist.pads.clone(),
        pad_positions: netlist.pad_positions.clone(),
        cells: netlist.cells.clone(),
        nets,
        canvas: netlist.canvas,
    };
    Ok(Augmented { netlist: out, fully_simple })
}

// ---------------------------------------------------------------------------
// Reference placements
// ---------------------------------------------------------------------------

/// Gradient steps used to produce a reference placement.
pub const REFERENCE_STEPS: usize = 500;
/// Step size for reference descent, in normalized units.
pub const REFERENCE_ETA: f64 = 0.05;

/// Deterministic starting point for reference descent: uniform positions
/// with each macro fully inside the canvas, drawn from `(seed, REFERENCE)`.
pub fn reference_initialization(netlist: &Netlist, seed: u64) -> Placement {
    let mut rng = derive_rng(seed, &[stream::REFERENCE]);
    let c = &netlist.canvas;
    let coords = netlist
        .macros
        .iter()
        .map(|m| {
            let span_x = (c.width - m.width).max(0.0);
            let span_y = (c.height - m.height).max(0.0);
            [
                c.origin[0] + uniform01(&mut rng) * span_x,
                c.origin[1] + uniform01(&mut rng) * span_y,
            ]
        })
        .collect();
    Placement { coords }
}

/// Produce an overlap-free, in-bounds reference placement: 500 plain
/// gradient steps on the composite guidance loss (two-phase weight schedule,
/// smoothing halved once at the flip) from a seeded random start, then
/// greedy legalization. The result is in the same coordinate frame as the
/// input netlist, and its wirelength does not exceed the random start's.
///
/// Unlike the sampler's inner loop, the descent here uses fixed steps with no
/// line search or early exit: references benefit from the full step budget,
/// and no per-step monotonicity is required of this pipeline.
pub fn make_reference_placement(netlist: &Netlist, seed: u64) -> Result<Placement, CoreError> {
    let (normalized, frame) = normalize_netlist(netlist)?;
    let init = reference_initialization(netlist, seed);
    let mut x = frame.normalize_placement(&init);

    let defaults = GuidanceConfig::default();
    let mut schedule = ScheduleState::new(
        defaults.window,
        defaults.threshold,
        defaults.phase1,
        defaults.phase2,
    );
    let mut gamma = defaults.gamma;
    let mut annealed = false;
    for k in 1..=REFERENCE_STEPS {
        let hpwl_now = hpwl_exact(&normalized, &x)?;
        let weights = weight_schedule(&mut schedule, k, hpwl_now);
        if schedule.phase() == 2 && !annealed {
            gamma *= 0.5;
            annealed = true;
        }
        let (_, grad) = guide_loss(&normalized, &x, weights, gamma)?;
        for (c, g) in x.coords.iter_mut().zip(grad.iter()) {
            c[0] -= REFERENCE_ETA * g[0];
            c[1] -= REFERENCE_ETA * g[1];
        }
        if !x.is_finite() {
            return Err(CoreError::NonFinite { what: "reference descent", epoch: 0, step: k });
        }
    }
    let legal = legalize(&normalized, &x)?;
    Ok(frame.denormalize_placement(&legal.placement))
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// One training example: a connectivity-filtered, canvas-normalized netlist
/// and its overlap-free reference placement in that normalized frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub netlist: Netlist,
    pub x0: Placement,
}

/// A built dataset plus a count of augmentations whose duplicate repair hit
/// the attempt budget (their samples are still included).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<TrainSample>,
    pub degraded: usize,
}

/// Expand base designs into training samples: `n_aug` rewired variants per
/// base, each with its own reference placement. Sub-seeds are derived per
/// `(base, variant)`, so the dataset is independent of iteration order.
pub fn build_dataset(bases: &[Netlist], n_aug: usize, seed: u64) -> Result<Dataset, CoreError> {
    let mut samples = Vec::with_capacity(bases.len() * n_aug);
    let mut degraded = 0usize;
    for (b, base) in bases.iter().enumerate() {
        for a in 0..n_aug {
            let aug_seed = derive_seed(seed, &[stream::AUGMENT, b as u64, a as u64]);
            let augmented = augment_netlist(base, aug_seed)?;
            if !augmented.fully_simple {
                degraded += 1;
            }
            let filtered = filter_macro_connectivity(&augmented.netlist);
            let (normalized, _) = normalize_netlist(&filtered)?;
            let ref_seed = derive_seed(seed, &[stream::REFERENCE, b as u64, a as u64]);
            let x0 = make_reference_placement(&normalized, ref_seed)?;
            samples.push(TrainSample { netlist: normalized, x0 });
        }
    }
    Ok(Dataset { samples, degraded })
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Gradient descent with classical momentum. Velocity tensors mirror the
/// canonical parameter order of [`DenoiserParams::tensors`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub beta: f64,
    pub velocity: Vec<Matrix>,
}

impl SgdMomentum {
    pub fn new(params: &DenoiserParams, beta: f64) -> Self {
        let velocity = params
            .tensors()
            .iter()
            .map(|(_, m)| Matrix::zeros(m.rows, m.cols))
            .collect();
        SgdMomentum { beta, velocity }
    }

    /// `v <- beta v + g; p <- p - lr v`, per tensor.
    pub fn step(
        &mut self,
        params: &mut DenoiserParams,
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<(), CoreError> {
        let mut tensors = params.tensors_mut();
        if grads.len() != tensors.len() || self.velocity.len() != tensors.len() {
            return Err(CoreError::ShapeMismatch {
                expected: tensors.len(),
                got: grads.len().min(self.velocity.len()),
                what: "optimizer tensor count",
            });
        }
        for ((vel, (_, tensor)), grad) in
            self.velocity.iter_mut().zip(tensors.iter_mut()).zip(grads.iter())
        {
            if grad.len() != tensor.data.len() {
                return Err(CoreError::ShapeMismatch {
                    expected: tensor.data.len(),
                    got: grad.len(),
                    what: "optimizer gradient size",
                });
            }
            for ((v, p), g) in
                vel.data.iter_mut().zip(tensor.data.iter_mut()).zip(grad.iter())
            {
                *v = self.beta * *v + g;
                *p -= lr * *v;
            }
        }
        Ok(())
    }
}

/// Cosine learning-rate decay over epochs: the full rate at epoch 0, tapering
/// toward zero at the end of training.
pub fn cosine_lr(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs <= 1 {
        return base;
    }
    let progress = epoch as f64 / total_epochs as f64;
    base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Everything that shapes a training run. Two runs with equal configs produce
/// bitwise-equal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub schedule_kind: ScheduleKind,
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub model: DenoiserConfig,
    /// Rewired variants generated per base design when building the dataset.
    pub augmentations_per_base: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 0.003,
            momentum: 0.9,
            seed: 0,
            schedule_kind: ScheduleKind::Linear,
            num_steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            model: DenoiserConfig::default(),
            augmentations_per_base: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(CoreError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn build_schedule(&self) -> Result<DiffusionSchedule, CoreError> {
        make_schedule(self.schedule_kind, self.num_steps, self.beta_start, self.beta_end)
    }
}

/// Mean loss and averaged parameter gradients over one batch.
///
/// Per example: draw a timestep uniformly from `1..=T` and a noise target
/// (streams keyed by `(seed, purpose, epoch, step, slot)`), diffuse the
/// reference placement to that timestep, run the denoiser, and score
/// `sum_i ||eps_i - eps_hat_i||^2 / num_macros` — the mean squared noise
/// error per macro, which is 2.0 in expectation for a model that predicts
/// zero. Gradients come back in canonical tensor order.
pub fn batch_loss(
    dataset: &[TrainSample],
    batch: &[usize],
    params: &DenoiserParams,
    sched: &DiffusionSchedule,
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<(f64, Vec<Vec<f64>>), CoreError> {
    if batch.is_empty() {
        return Err(CoreError::InvalidConfig("empty training batch".into()));
    }
    let mut acc: Vec<Vec<f64>> =
        params.tensors().iter().map(|(_, m)| vec![0.0; m.data.len()]).collect();
    let mut loss_sum = 0.0;

    for (slot, &index) in batch.iter().enumerate() {
        let sample = &dataset[index];
        let m = sample.netlist.num_movable();
        let tags = [epoch as u64, step as u64, slot as u64];

        let mut t_rng =
            derive_rng(seed, &[stream::TRAIN_T, tags[0], tags[1], tags[2]]);
        let t = 1 + gen_index(&mut t_rng, sched.num_steps());
        let mut eps_rng =
            derive_rng(seed, &[stream::TRAIN_EPS, tags[0], tags[1], tags[2]]);
        let eps = standard_normal_pairs(&mut eps_rng, m);

        let x_t = Placement { coords: q_sample(&sample.x0.coords, &eps, t, sched)? };
        let graph = build_graph(&sample.netlist, &x_t, t)?;

        let mut tape = Tape::new();
        let fwd = forward_on_tape(&mut tape, params, &graph, &sample.netlist)?;
        let target = Matrix::from_vec(
            m,
            2,
            eps.iter().flat_map(|p| p.iter().copied()).collect(),
        );
        let loss_var = tape.mse_scaled(fwd.eps, &target, 1.0 / m as f64);
        let loss = tape.value(loss_var).data[0];
        if !loss.is_finite() {
            return Err(CoreError::NonFinite { what: "training loss", epoch, step });
        }
        loss_sum += loss;

        let grads = tape.backward(loss_var);
        for (slot_acc, var) in acc.iter_mut().zip(fwd.param_vars.iter()) {
            for (a, g) in slot_acc.iter_mut().zip(grads.get(*var).iter()) {
                *a += g;
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    loss_sum *= scale;
    for tensor in &mut acc {
        for g in tensor.iter_mut() {
            *g *= scale;
            if !g.is_finite() {
                return Err(CoreError::NonFinite { what: "parameter gradient", epoch, step });
            }
        }
    }
    Ok((loss_sum, acc))
}

/// One optimizer update on one batch; returns the batch loss.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    dataset: &[TrainSample],
    batch: &[usize],
    params: &mut DenoiserParams,
    optimizer: &mut SgdMomentum,
    sched: &DiffusionSchedule,
    lr: f64,
    seed: u64,
    epoch: usize,
    step: usize,
) -> Result<f64, CoreError> {
    let (loss, grads) = batch_loss(dataset, batch, params, sched, seed, epoch, step)?;
    optimizer.step(params, &grads, lr)?;
    Ok(loss)
}

/// One point of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

/// Complete training state; serializing this (plus the dataset inputs) is
/// enough for a bit-identical resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: DenoiserParams,
    pub optimizer: SgdMomentum,
    /// Next epoch to run, 0-based.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, CoreError> {
        config.validate()?;
        let params = DenoiserParams::init(config.model, config.seed)?;
        let optimizer = SgdMomentum::new(&params, config.momentum);
        Ok(Trainer { config, params, optimizer, epoch: 0 })
    }

    /// Run one epoch: seeded shuffle, cosine learning rate, one optimizer
    /// step per batch. Returns the per-batch losses.
    pub fn run_epoch(
        &mut self,
        dataset: &[TrainSample],
        sched: &DiffusionSchedule,
    ) -> Result<Vec<LossPoint>, CoreError> {
        if dataset.is_empty() {
            return Err(CoreError::InvalidConfig("empty training dataset".into()));
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut shuffle_rng = derive_rng(self.config.seed, &[stream::SHUFFLE, epoch as u64]);
        shuffle(&mut shuffle_rng, &mut order);
        let lr = cosine_lr(self.config.learning_rate, epoch, self.config.epochs);

        let mut points = Vec::new();
        for (step, batch) in order.chunks(self.config.batch_size).enumerate() {
            let loss = train_step(
                dataset,
                batch,
                &mut self.params,
                &mut self.optimizer,
                sched,
                lr,
                self.config.seed,
                epoch,
                step,
            )?;
            points.push(LossPoint { epoch, step, loss });
        }
        self.epoch += 1;
        Ok(points)
    }

    /// Run all remaining epochs; with `epochs = 0` (or a finished trainer)
    /// this returns an empty curve and leaves the parameters untouched.
    pub fn run(&mut self, dataset: &[TrainSample]) -> Result<Vec<LossPoint>, CoreError> {
        let sched = self.config.build_schedule()?;
        let mut curve = Vec::new();
        while self.epoch < self.config.epochs {
            curve.extend(self.run_epoch(dataset, &sched)?);
        }
        Ok(curve)
    }
}
