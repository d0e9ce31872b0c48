//! Dual-branch noise predictor.
//!
//! Branch one is a heterogeneous graph attention network over the circuit
//! graph: each layer passes messages net -> macro, then macro -> net, with
//! GATv2-style scores `a . leaky_relu(W_src h_src + W_dst h_dst + W_t temb)`
//! softmaxed over each destination's incoming edges. Pin offsets enter the
//! message values. Branch two is a transformer over the movable-macro
//! embeddings with time-conditioned self-attention and cross-attention
//! against the macro-size condition.
//!
//! The branches fuse as `eps = lambda_cell * eps_cell + lambda_net * P`,
//! where `P` projects the per-net scalar head through the smoothed-HPWL
//! gradient at the current noisy state (RMS-normalized). The projection
//! coefficients are treated as constants of the state, so the whole forward
//! pass stays differentiable in the parameters.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::graph::HeteroGraph;
use crate::netlist::Netlist;
use crate::objectives::per_net_smooth_grad;
use crate::rng::{derive_rng, stream, uniform01};
use crate::tape::{Matrix, Tape, Var};

/// Architecture variant; the non-`Full` modes are the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchMode {
    /// Both branches plus the projected per-net term.
    Full,
    /// Drop the projected per-net term (`lambda_net = 0` path).
    NoEpsNet,
    /// Skip message passing; tokens come straight from the input projection.
    /// The net branch carries no signal without message passing, so the
    /// projected term is dropped as well.
    NoGnn,
    /// Replace the transformer branch by a linear head on the graph
    /// embeddings.
    NoTransformer,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Embedding width `d`; must be even and divisible by `heads`.
    pub hidden: usize,
    pub heads: usize,
    pub gnn_layers: usize,
    pub tf_blocks: usize,
    /// Fusion scalar on the transformer branch.
    pub lambda_cell: f64,
    /// Fusion scalar on the projected per-net term.
    pub lambda_net: f64,
    /// Smoothing temperature of the projection's HPWL gradient.
    pub gamma: f64,
    pub arch: ArchMode,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            hidden: 64,
            heads: 4,
            gnn_layers: 2,
            tf_blocks: 2,
            lambda_cell: 1.0,
            lambda_net: 0.1,
            gamma: 0.01,
            arch: ArchMode::Full,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "hidden width must be positive and even, got {}",
                self.hidden
            )));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "heads ({}) must divide hidden width ({})",
                self.heads,
                self.hidden
            )));
        }
        if self.gnn_layers == 0 || self.tf_blocks == 0 {
            return Err(CoreError::InvalidConfig(
                "need at least one GNN layer and one transformer block".into(),
            ));
        }
        if !(self.gamma > 0.0) || !self.lambda_cell.is_finite() || !self.lambda_net.is_finite() {
            return Err(CoreError::InvalidConfig("fusion scalars must be finite, gamma > 0".into()));
        }
        Ok(())
    }
}

const MACRO_FEATS: usize = 6; // w, h, x, y, ln(1+W), ln(1+H)
const NET_FEATS: usize = 5; // hpwl, retained degree, declared degree, ln(1+W), ln(1+H)
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GnnDirectionParams {
    pub w_src: Matrix,
    pub w_dst: Matrix,
    pub w_time: Matrix,
    pub attn: Matrix,
    pub w_edge: Matrix,
    pub w_msg: Matrix,
    pub w_self: Matrix,
    pub b_upd: Matrix,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GnnLayerParams {
    pub net_to_macro: GnnDirectionParams,
    pub macro_to_net: GnnDirectionParams,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransformerBlockParams {
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub t_inj: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub w_q2: Matrix,
    pub w_k2: Matrix,
    pub w_v2: Matrix,
    pub w_o2: Matrix,
    pub ln3_g: Matrix,
    pub ln3_b: Matrix,
    pub ffn_w1: Matrix,
    pub ffn_b1: Matrix,
    pub ffn_w2: Matrix,
    pub ffn_b2: Matrix,
}

/// All learnable weights of the denoiser.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub macro_in_w: Matrix,
    pub macro_in_b: Matrix,
    pub net_in_w: Matrix,
    pub net_in_b: Matrix,
    pub time_w: Matrix,
    pub time_b: Matrix,
    pub gnn: Vec<GnnLayerParams>,
    pub cond_w: Matrix,
    pub cond_b: Matrix,
    pub blocks: Vec<TransformerBlockParams>,
    pub cell_head_w: Matrix,
    pub cell_head_b: Matrix,
    pub net_head_w: Matrix,
    pub net_head_b: Matrix,
    pub lin_cell_w: Matrix,
    pub lin_cell_b: Matrix,
}

/// Visit every tensor with its canonical name, in canonical order. This
/// single macro body defines the parameter-group ordering used everywhere:
/// optimizer state, checkpoints, gradient extraction. The `mut` entry point
/// yields `&mut Matrix`, the plain one `&Matrix`.
macro_rules! visit_tensors {
    (@go $self:expr, $f:expr, $iter:ident, ($($r:tt)+)) => {{
        let mut f = $f;
        f("macro_in_w", $($r)+ $self.macro_in_w);
        f("macro_in_b", $($r)+ $self.macro_in_b);
        f("net_in_w", $($r)+ $self.net_in_w);
        f("net_in_b", $($r)+ $self.net_in_b);
        f("time_w", $($r)+ $self.time_w);
        f("time_b", $($r)+ $self.time_b);
        for (l, layer) in $self.gnn.$iter().enumerate() {
            for (tag, dir) in
                [("n2m", $($r)+ layer.net_to_macro), ("m2n", $($r)+ layer.macro_to_net)]
            {
                f(&alloc::format!("gnn.{l}.{tag}.w_src"), $($r)+ dir.w_src);
                f(&alloc::format!("gnn.{l}.{tag}.w_dst"), $($r)+ dir.w_dst);
                f(&alloc::format!("gnn.{l}.{tag}.w_time"), $($r)+ dir.w_time);
                f(&alloc::format!("gnn.{l}.{tag}.attn"), $($r)+ dir.attn);
                f(&alloc::format!("gnn.{l}.{tag}.w_edge"), $($r)+ dir.w_edge);
                f(&alloc::format!("gnn.{l}.{tag}.w_msg"), $($r)+ dir.w_msg);
                f(&alloc::format!("gnn.{l}.{tag}.w_self"), $($r)+ dir.w_self);
                f(&alloc::format!("gnn.{l}.{tag}.b_upd"), $($r)+ dir.b_upd);
            }
        }
        f("cond_w", $($r)+ $self.cond_w);
        f("cond_b", $($r)+ $self.cond_b);
        for (b, blk) in $self.blocks.$iter().enumerate() {
            f(&alloc::format!("tf.{b}.ln1_g"), $($r)+ blk.ln1_g);
            f(&alloc::format!("tf.{b}.ln1_b"), $($r)+ blk.ln1_b);
            f(&alloc::format!("tf.{b}.t_inj"), $($r)+ blk.t_inj);
            f(&alloc::format!("tf.{b}.w_q"), $($r)+ blk.w_q);
            f(&alloc::format!("tf.{b}.w_k"), $($r)+ blk.w_k);
            f(&alloc::format!("tf.{b}.w_v"), $($r)+ blk.w_v);
            f(&alloc::format!("tf.{b}.w_o"), $($r)+ blk.w_o);
            f(&alloc::format!("tf.{b}.ln2_g"), $($r)+ blk.ln2_g);
            f(&alloc::format!("tf.{b}.ln2_b"), $($r)+ blk.ln2_b);
            f(&alloc::format!("tf.{b}.w_q2"), $($r)+ blk.w_q2);
            f(&alloc::format!("tf.{b}.w_k2"), $($r)+ blk.w_k2);
            f(&alloc::format!("tf.{b}.w_v2"), $($r)+ blk.w_v2);
            f(&alloc::format!("tf.{b}.w_o2"), $($r)+ blk.w_o2);
            f(&alloc::format!("tf.{b}.ln3_g"), $($r)+ blk.ln3_g);
            f(&alloc::format!("tf.{b}.ln3_b"), $($r)+ blk.ln3_b);
            f(&alloc::format!("tf.{b}.ffn_w1"), $($r)+ blk.ffn_w1);
            f(&alloc::format!("tf.{b}.ffn_b1"), $($r)+ blk.ffn_b1);
            f(&alloc::format!("tf.{b}.ffn_w2"), $($r)+ blk.ffn_w2);
            f(&alloc::format!("tf.{b}.ffn_b2"), $($r)+ blk.ffn_b2);
        }
        f("cell_head_w", $($r)+ $self.cell_head_w);
        f("cell_head_b", $($r)+ $self.cell_head_b);
        f("net_head_w", $($r)+ $self.net_head_w);
        f("net_head_b", $($r)+ $self.net_head_b);
        f("lin_cell_w", $($r)+ $self.lin_cell_w);
        f("lin_cell_b", $($r)+ $self.lin_cell_b);
    }};
    ($self:expr, $f:expr) => {
        visit_tensors!(@go $self, $f, iter, (&))
    };
    (mut $self:expr, $f:expr) => {
        visit_tensors!(@go $self, $f, iter_mut, (&mut))
    };
}

impl DenoiserParams {
    /// Deterministic initialization: uniform Xavier weights (per-tensor
    /// derived streams), zero biases, unit layer-norm gains.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self, CoreError> {
        config.validate()?;
        let d = config.hidden;
        let mut counter = 0u64;
        let mut xavier = |rows: usize, cols: usize| {
            counter += 1;
            let mut rng = derive_rng(seed, &[stream::PARAM_INIT, counter]);
            let lim = libm::sqrt(6.0 / (rows + cols) as f64);
            let data =
                (0..rows * cols).map(|_| (2.0 * uniform01(&mut rng) - 1.0) * lim).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let ones = |cols: usize| Matrix::from_vec(1, cols, alloc::vec![1.0; cols]);
        let dir = |xavier: &mut dyn FnMut(usize, usize) -> Matrix| GnnDirectionParams {
            w_src: xavier(d, d),
            w_dst: xavier(d, d),
            w_time: xavier(d, d),
            attn: xavier(1, d),
            w_edge: xavier(2, d),
            w_msg: xavier(d, d),
            w_self: xavier(d, d),
            b_upd: Matrix::zeros(1, d),
        };
        let gnn = (0..config.gnn_layers)
            .map(|_| GnnLayerParams {
                net_to_macro: dir(&mut xavier),
                macro_to_net: dir(&mut xavier),
            })
            .collect();
        let blocks = (0..config.tf_blocks)
            .map(|_| TransformerBlockParams {
                ln1_g: ones(d),
                ln1_b: Matrix::zeros(1, d),
                t_inj: xavier(d, d),
                w_q: xavier(d, d),
                w_k: xavier(d, d),
                w_v: xavier(d, d),
                w_o: xavier(d, d),
                ln2_g: ones(d),
                ln2_b: Matrix::zeros(1, d),
                w_q2: xavier(d, d),
                w_k2: xavier(d, d),
                w_v2: xavier(d, d),
                w_o2: xavier(d, d),
                ln3_g: ones(d),
                ln3_b: Matrix::zeros(1, d),
                ffn_w1: xavier(d, 4 * d),
                ffn_b1: Matrix::zeros(1, 4 * d),
                ffn_w2: xavier(4 * d, d),
                ffn_b2: Matrix::zeros(1, d),
            })
            .collect();
        Ok(DenoiserParams {
            config,
            macro_in_w: xavier(MACRO_FEATS, d),
            macro_in_b: Matrix::zeros(1, d),
            net_in_w: xavier(NET_FEATS, d),
            net_in_b: Matrix::zeros(1, d),
            time_w: xavier(d, d),
            time_b: Matrix::zeros(1, d),
            gnn,
            cond_w: xavier(2, d),
            cond_b: Matrix::zeros(1, d),
            blocks,
            cell_head_w: xavier(d, 2),
            cell_head_b: Matrix::zeros(1, 2),
            net_head_w: xavier(d, 1),
            net_head_b: Matrix::zeros(1, 1),
            lin_cell_w: xavier(d, 2),
            lin_cell_b: Matrix::zeros(1, 2),
        })
    }

    /// All-zero weights (layer-norm gains included). Useful as the anchor
    /// for the zero-output identity.
    pub fn zeros(config: DenoiserConfig) -> Result<Self, CoreError> {
        let mut p = Self::init(config, 0)?;
        let mut tensors = p.tensors_mut();
        for (_, m) in tensors.iter_mut() {
            for v in m.data.iter_mut() {
                *v = 0.0;
            }
        }
        Ok(p)
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, *const Matrix)> = Vec::new();
        visit_tensors!(self, |name: &str, m: &Matrix| {
            out.push((String::from(name), m as *const Matrix));
        });
        // The pointers come straight from `self` fields and stay valid for
        // the borrow's lifetime.
        out.into_iter().map(|(n, p)| (n, unsafe { &*p })).collect()
    }

    /// Mutable named tensors in canonical order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, *mut Matrix)> = Vec::new();
        visit_tensors!(mut self, |name: &str, m: &mut Matrix| {
            out.push((String::from(name), m as *mut Matrix));
        });
        // Each field is visited exactly once, so the mutable aliases are
        // disjoint.
        out.into_iter().map(|(n, p)| (n, unsafe { &mut *p })).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }
}

/// Sinusoidal timestep embedding: first half sines, second half cosines,
/// frequencies geometrically spaced from 1 down to 1/10000.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = libm::exp(-(libm::log(10000.0)) * i as f64 / half as f64);
        out.push(libm::sin(t as f64 * freq));
    }
    for i in 0..half {
        let freq = libm::exp(-(libm::log(10000.0)) * i as f64 / half as f64);
        out.push(libm::cos(t as f64 * freq));
    }
    out
}

/// Handles into a recorded forward pass: the prediction plus the parameter
/// leaves in canonical order (for gradient extraction after `backward`).
pub struct TapedForward {
    /// Predicted noise, `M x 2`.
    pub eps: Var,
    /// Parameter leaf for every tensor, canonical order.
    pub param_vars: Vec<Var>,
    /// Per-net scalar head output (`N x 1`), when the architecture has one.
    pub eps_net: Option<Var>,
    /// Projected per-net term before RMS normalization, when present.
    pub projected_raw: Option<Var>,
    /// Transformer-branch output (`M x 2`) before fusion scaling.
    pub eps_cell: Var,
}

/// Plain-value output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub eps: Vec<[f64; 2]>,
    pub eps_cell: Vec<[f64; 2]>,
    pub eps_net: Option<Vec<f64>>,
    /// Projected per-net term before RMS normalization.
    pub projected_raw: Option<Vec<[f64; 2]>>,
}

struct DirVars {
    w_src: Var,
    w_dst: Var,
    w_time: Var,
    attn: Var,
    w_edge: Var,
    w_msg: Var,
    w_self: Var,
    b_upd: Var,
}

struct BlockVars {
    ln1_g: Var,
    ln1_b: Var,
    t_inj: Var,
    w_q: Var,
    w_k: Var,
    w_v: Var,
    w_o: Var,
    ln2_g: Var,
    ln2_b: Var,
    w_q2: Var,
    w_k2: Var,
    w_v2: Var,
    w_o2: Var,
    ln3_g: Var,
    ln3_b: Var,
    ffn_w1: Var,
    ffn_b1: Var,
    ffn_w2: Var,
    ffn_b2: Var,
}

struct ParamVars {
    macro_in_w: Var,
    macro_in_b: Var,
    net_in_w: Var,
    net_in_b: Var,
    time_w: Var,
    time_b: Var,
    gnn: Vec<(DirVars, DirVars)>,
    cond_w: Var,
    cond_b: Var,
    blocks: Vec<BlockVars>,
    cell_head_w: Var,
    cell_head_b: Var,
    net_head_w: Var,
    net_head_b: Var,
    lin_cell_w: Var,
    lin_cell_b: Var,
}

/// Push every parameter as a tape leaf, mirroring the canonical order of
/// `tensors()` (verified by a unit test).
fn register_params(tape: &mut Tape, p: &DenoiserParams, order: &mut Vec<Var>) -> ParamVars {
    let reg = |tape: &mut Tape, m: &Matrix, order: &mut Vec<Var>| {
        let v = tape.leaf(m.clone());
        order.push(v);
        v
    };
    let macro_in_w = reg(tape, &p.macro_in_w, order);
    let macro_in_b = reg(tape, &p.macro_in_b, order);
    let net_in_w = reg(tape, &p.net_in_w, order);
    let net_in_b = reg(tape, &p.net_in_b, order);
    let time_w = reg(tape, &p.time_w, order);
    let time_b = reg(tape, &p.time_b, order);
    let mut gnn = Vec::new();
    for layer in &p.gnn {
        let dir = |tape: &mut Tape, d: &GnnDirectionParams, order: &mut Vec<Var>| DirVars {
            w_src: reg(tape, &d.w_src, order),
            w_dst: reg(tape, &d.w_dst, order),
            w_time: reg(tape, &d.w_time, order),
            attn: reg(tape, &d.attn, order),
            w_edge: reg(tape, &d.w_edge, order),
            w_msg: reg(tape, &d.w_msg, order),
            w_self: reg(tape, &d.w_self, order),
            b_upd: reg(tape, &d.b_upd, order),
        };
        let n2m = dir(tape, &layer.net_to_macro, order);
        let m2n = dir(tape, &layer.macro_to_net, order);
        gnn.push((n2m, m2n));
    }
    let cond_w = reg(tape, &p.cond_w, order);
    let cond_b = reg(tape, &p.cond_b, order);
    let mut blocks = Vec::new();
    for b in &p.blocks {
        blocks.push(BlockVars {
            ln1_g: reg(tape, &b.ln1_g, order),
            ln1_b: reg(tape, &b.ln1_b, order),
            t_inj: reg(tape, &b.t_inj, order),
            w_q: reg(tape, &b.w_q, order),
            w_k: reg(tape, &b.w_k, order),
            w_v: reg(tape, &b.w_v, order),
            w_o: reg(tape, &b.w_o, order),
            ln2_g: reg(tape, &b.ln2_g, order),
            ln2_b: reg(tape, &b.ln2_b, order),
            w_q2: reg(tape, &b.w_q2, order),
            w_k2: reg(tape, &b.w_k2, order),
            w_v2: reg(tape, &b.w_v2, order),
            w_o2: reg(tape, &b.w_o2, order),
            ln3_g: reg(tape, &b.ln3_g, order),
            ln3_b: reg(tape, &b.ln3_b, order),
            ffn_w1: reg(tape, &b.ffn_w1, order),
            ffn_b1: reg(tape, &b.ffn_b1, order),
            ffn_w2: reg(tape, &b.ffn_w2, order),
            ffn_b2: reg(tape, &b.ffn_b2, order),
        });
    }
    ParamVars {
        macro_in_w,
        macro_in_b,
        net_in_w,
        net_in_b,
        time_w,
        time_b,
        gnn,
        cond_w,
        cond_b,
        blocks,
        cell_head_w: reg(tape, &p.cell_head_w, order),
        cell_head_b: reg(tape, &p.cell_head_b, order),
        net_head_w: reg(tape, &p.net_head_w, order),
        net_head_b: reg(tape, &p.net_head_b, order),
        lin_cell_w: reg(tape, &p.lin_cell_w, order),
        lin_cell_b: reg(tape, &p.lin_cell_b, order),
    }
}

fn macro_feature_matrix(graph: &HeteroGraph) -> Matrix {
    let n = graph.num_nodes();
    let gw = libm::log(1.0 + graph.global[0]);
    let gh = libm::log(1.0 + graph.global[1]);
    let mut data = Vec::with_capacity(n * MACRO_FEATS);
    for i in 0..n {
        data.extend_from_slice(&[
            graph.size[i][0],
            graph.size[i][1],
            graph.pos[i][0],
            graph.pos[i][1],
            gw,
            gh,
        ]);
    }
    Matrix::from_vec(n, MACRO_FEATS, data)
}

fn net_feature_matrix(graph: &HeteroGraph) -> Matrix {
    let n = graph.num_nets();
    let gw = libm::log(1.0 + graph.global[0]);
    let gh = libm::log(1.0 + graph.global[1]);
    let mut data = Vec::with_capacity(n * NET_FEATS);
    for i in 0..n {
        data.extend_from_slice(&[
            graph.net_hpwl[i],
            graph.net_degree[i][0],
            graph.net_degree[i][1],
            gw,
            gh,
        ]);
    }
    Matrix::from_vec(n, NET_FEATS, data)
}

/// One GATv2-style message-passing direction with residual update. Nodes
/// without incoming edges keep their embedding unchanged.
#[allow(clippy::too_many_arguments)]
fn gat_direction(
    tape: &mut Tape,
    h_src: Var,
    h_dst: Var,
    src_idx: &[usize],
    dst_idx: &[usize],
    edge_feat: Var,
    time_row: Var,
    p: &DirVars,
    heads: usize,
) -> Var {
    let n_dst = tape.value(h_dst).rows;
    if src_idx.is_empty() {
        return h_dst;
    }
    let src_proj = tape.matmul(h_src, p.w_src);
    let dst_proj = tape.matmul(h_dst, p.w_dst);
    let t_proj = tape.matmul(time_row, p.w_time);
    let s_src = tape.gather_rows(src_proj, src_idx);
    let s_dst = tape.gather_rows(dst_proj, dst_idx);
    let s = tape.add(s_src, s_dst);
    let s = tape.add_row(s, t_proj);
    let z = tape.leaky_relu(s, LEAKY_SLOPE);
    let logits = tape.attn_score(z, p.attn, heads);
    let alpha = tape.segment_softmax(logits, dst_idx, n_dst);
    let edge_vals = tape.matmul(edge_feat, p.w_edge);
    let vals_src = tape.gather_rows(src_proj, src_idx);
    let vals = tape.add(vals_src, edge_vals);
    let agg = tape.attn_aggregate(alpha, vals, dst_idx, n_dst);
    let upd = tape.matmul(agg, p.w_msg);
    let self_term = tape.matmul(h_dst, p.w_self);
    let upd = tape.add(upd, self_term);
    let upd = tape.add_row(upd, p.b_upd);
    let upd = tape.leaky_relu(upd, LEAKY_SLOPE);
    let mut has_in = alloc::vec![false; n_dst];
    for &d in dst_idx {
        has_in[d] = true;
    }
    let upd = tape.mask_rows(upd, &has_in);
    tape.add(h_dst, upd)
}

/// Record the full forward pass on `tape`. The timestep conditioning comes
/// from `graph.timestep`; positions in the graph are the noisy state the
/// prediction is for.
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &DenoiserParams,
    graph: &HeteroGraph,
    netlist: &Netlist,
) -> Result<TapedForward, CoreError> {
    params.config.validate()?;
    if graph.num_movable != netlist.num_movable() || graph.num_nets() != netlist.nets.len() {
        return Err(CoreError::ShapeMismatch {
            expected: netlist.num_movable(),
            got: graph.num_movable,
            what: "graph/netlist pairing",
        });
    }
    let cfg = params.config;
    let m = graph.num_movable;
    let heads = cfg.heads;

    let mut order = Vec::new();
    let pv = register_params(tape, params, &mut order);

    // Constant inputs.
    let macro_feats = tape.leaf(macro_feature_matrix(graph));
    let net_feats = tape.leaf(net_feature_matrix(graph));
    let sin_t = tape.leaf(Matrix::from_vec(
        1,
        cfg.hidden,
        sinusoidal_embedding(graph.timestep, cfg.hidden),
    ));
    let mut edge_data = Vec::with_capacity(graph.edges.len() * 2);
    let mut net_idx = Vec::with_capacity(graph.edges.len());
    let mut node_idx = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        edge_data.extend_from_slice(&e.offset);
        net_idx.push(e.net);
        node_idx.push(e.node);
    }
    let edge_feat = tape.leaf(Matrix::from_vec(graph.edges.len(), 2, edge_data));

    // Input projections and time conditioning.
    let h_macro0 = tape.matmul(macro_feats, pv.macro_in_w);
    let h_macro0 = tape.add_row(h_macro0, pv.macro_in_b);
    let h_net0 = tape.matmul(net_feats, pv.net_in_w);
    let h_net0 = tape.add_row(h_net0, pv.net_in_b);
    let time_row = tape.matmul(sin_t, pv.time_w);
    let time_row = tape.add_row(time_row, pv.time_b);

    // Graph branch.
    let (h_macro, h_net) = if cfg.arch == ArchMode::NoGnn {
        (h_macro0, h_net0)
    } else {
        let mut hm = h_macro0;
        let mut hn = h_net0;
        for (n2m, m2n) in &pv.gnn {
            hm = gat_direction(tape, hn, hm, &net_idx, &node_idx, edge_feat, time_row, n2m, heads);
            hn = gat_direction(tape, hm, hn, &node_idx, &net_idx, edge_feat, time_row, m2n, heads);
        }
        (hm, hn)
    };

    // Transformer branch over the movable tokens.
    let movable_rows: Vec<usize> = (0..m).collect();
    let tokens0 = tape.gather_rows(h_macro, &movable_rows);
    let eps_cell = if cfg.arch == ArchMode::NoTransformer {
        let out = tape.matmul(tokens0, pv.lin_cell_w);
        tape.add_row(out, pv.lin_cell_b)
    } else {
        let mut cond_data = Vec::with_capacity(m * 2);
        for i in 0..m {
            cond_data.extend_from_slice(&graph.size[i]);
        }
        let cond_feats = tape.leaf(Matrix::from_vec(m, 2, cond_data));
        let cond = tape.matmul(cond_feats, pv.cond_w);
        let cond = tape.add_row(cond, pv.cond_b);
        let mut tokens = tokens0;
        for blk in &pv.blocks {
            let x1 = tape.layer_norm(tokens, blk.ln1_g, blk.ln1_b);
            let t2 = tape.matmul(time_row, blk.t_inj);
            let x1t = tape.add_row(x1, t2);
            let q = tape.matmul(x1t, blk.w_q);
            let k = tape.matmul(x1t, blk.w_k);
            let v = tape.matmul(x1t, blk.w_v);
            let sa = tape.attention(q, k, v, heads);
            let sa = tape.matmul(sa, blk.w_o);
            tokens = tape.add(tokens, sa);
            let x2 = tape.layer_norm(tokens, blk.ln2_g, blk.ln2_b);
            let q2 = tape.matmul(x2, blk.w_q2);
            let k2 = tape.matmul(cond, blk.w_k2);
            let v2 = tape.matmul(cond, blk.w_v2);
            let ca = tape.attention(q2, k2, v2, heads);
            let ca = tape.matmul(ca, blk.w_o2);
            tokens = tape.add(tokens, ca);
            let x3 = tape.layer_norm(tokens, blk.ln3_g, blk.ln3_b);
            let ff = tape.matmul(x3, blk.ffn_w1);
            let ff = tape.add_row(ff, blk.ffn_b1);
            let ff = tape.relu(ff);
            let ff = tape.matmul(ff, blk.ffn_w2);
            let ff = tape.add_row(ff, blk.ffn_b2);
            tokens = tape.add(tokens, ff);
        }
        let out = tape.matmul(tokens, pv.cell_head_w);
        tape.add_row(out, pv.cell_head_b)
    };

    // Fusion.
    let use_net_term = matches!(cfg.arch, ArchMode::Full | ArchMode::NoTransformer);
    let (eps, eps_net, projected_raw) = if use_net_term {
        let eps_net = tape.matmul(h_net, pv.net_head_w);
        let eps_net = tape.add_row(eps_net, pv.net_head_b);
        let coeffs = Rc::new(per_net_smooth_grad(
            netlist,
            &graph.movable_placement(),
            cfg.gamma,
        )?);
        let projected = tape.hpwl_project(eps_net, coeffs, m);
        let normalized = tape.rms_normalize(projected);
        let cell_term = tape.scale(eps_cell, cfg.lambda_cell);
        let net_term = tape.scale(normalized, cfg.lambda_net);
        (tape.add(cell_term, net_term), Some(eps_net), Some(projected))
    } else {
        (tape.scale(eps_cell, cfg.lambda_cell), None, None)
    };

    Ok(TapedForward { eps, param_vars: order, eps_net, projected_raw, eps_cell })
}

fn rows_to_pairs(m: &Matrix) -> Vec<[f64; 2]> {
    debug_assert_eq!(m.cols, 2);
    m.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// Run the denoiser and return plain values.
pub fn denoiser_forward(
    params: &DenoiserParams,
    graph: &HeteroGraph,
    netlist: &Netlist,
) -> Result<ForwardOutput, CoreError> {
    let mut tape = Tape::new();
    let fwd = forward_on_tape(&mut tape, params, graph, netlist)?;
    Ok(ForwardOutput {
        eps: rows_to_pairs(tape.value(fwd.eps)),
        eps_cell: rows_to_pairs(tape.value(fwd.eps_cell)),
        eps_net: fwd.eps_net.map(|v| tape.value(v).data.clone()),
        projected_raw: fwd.projected_raw.map(|v| rows_to_pairs(tape.value(v))),
    })
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::graph::build_graph;
    use crate::netlist::{Canvas, Macro, Net, Pin, Placement};
    use crate::rng::{derive_rng, standard_normal_pairs, standard_normal_vec};
    use alloc::vec;

    fn small_config() -> DenoiserConfig {
        DenoiserConfig { hidden: 16, heads: 2, gnn_layers: 2, tf_blocks: 2, ..Default::default() }
    }

    /// Four macros, one pad, three nets; offsets exercised. Canvas already
    /// the centered unit square.
    fn fixture() -> (Netlist, Placement) {
        let netlist = Netlist {
            macros: vec![
                Macro { id: 0, width: 0.3, height: 0.2 },
                Macro { id: 1, width: 0.2, height: 0.2 },
                Macro { id: 2, width: 0.15, height: 0.4 },
                Macro { id: 3, width: 0.25, height: 0.1 },
            ],
            pads: vec![Macro { id: 4, width: 0.0, height: 0.0 }],
            pad_positions: vec![[0.9, -0.9]],
            cells: vec![],
            nets: vec![
                Net {
                    id: 0,
                    pins: vec![
                        Pin { owner: 0, offset: [0.05, 0.0] },
                        Pin { owner: 1, offset: [0.0, -0.05] },
                        Pin { owner: 4, offset: [0.0, 0.0] },
                    ],
                    total_degree: Some(4),
                },
                Net {
                    id: 1,
                    pins: vec![
                        Pin { owner: 1, offset: [0.0, 0.0] },
                        Pin { owner: 2, offset: [-0.02, 0.02] },
                    ],
                    total_degree: None,
                },
                Net {
                    id: 2,
                    pins: vec![
                        Pin { owner: 2, offset: [0.0, 0.0] },
                        Pin { owner: 3, offset: [0.0, 0.0] },
                        Pin { owner: 0, offset: [-0.05, 0.05] },
                    ],
                    total_degree: None,
                },
            ],
            canvas: Canvas { origin: [-1.0, -1.0], width: 2.0, height: 2.0 },
        };
        let mut rng = derive_rng(99, &[7]);
        let coords = standard_normal_pairs(&mut rng, 4)
            .into_iter()
            .map(|c| [0.3 * c[0], 0.3 * c[1]])
            .collect();
        (netlist, Placement { coords })
    }

    #[test]
    fn embedding_at_zero_is_zeros_then_ones() {
        let e = sinusoidal_embedding(0, 8);
        assert_eq!(&e[..4], &[0.0; 4]);
        assert_eq!(&e[4..], &[1.0; 4]);
    }

    #[test]
    fn embeddings_are_pairwise_distinct_over_the_schedule() {
        let dim = 16;
        let embs: Vec<Vec<f64>> = (1..=1000).map(|t| sinusoidal_embedding(t, dim)).collect();
        for i in 0..embs.len() {
            for j in (i + 1)..embs.len() {
                assert_ne!(embs[i], embs[j], "collision between t={} and t={}", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn registration_order_matches_canonical_tensor_order() {
        let params = DenoiserParams::init(small_config(), 3).unwrap();
        let mut tape = Tape::new();
        let mut order = Vec::new();
        register_params(&mut tape, &params, &mut order);
        let tensors = params.tensors();
        assert_eq!(order.len(), tensors.len());
        for (var, (name, m)) in order.iter().zip(tensors.iter()) {
            assert_eq!(tape.value(*var), *m, "order mismatch at {name}");
        }
    }

    #[test]
    fn tensors_mut_covers_the_same_set() {
        let mut params = DenoiserParams::init(small_config(), 3).unwrap();
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = params.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
    }

    #[test]
    fn zero_parameters_predict_zero_noise() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 37).unwrap();
        let params = DenoiserParams::zeros(small_config()).unwrap();
        let out = denoiser_forward(&params, &graph, &netlist).unwrap();
        assert!(out.eps.iter().all(|e| e == &[0.0, 0.0]), "eps {:?}", out.eps);
    }

    #[test]
    fn forward_is_deterministic_bitwise() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 12).unwrap();
        let params = DenoiserParams::init(small_config(), 5).unwrap();
        let a = denoiser_forward(&params, &graph, &netlist).unwrap();
        let b = denoiser_forward(&params, &graph, &netlist).unwrap();
        assert_eq!(a.eps, b.eps);
        assert_eq!(a.eps_net, b.eps_net);
    }

    #[test]
    fn timestep_changes_the_prediction() {
        let (netlist, placement) = fixture();
        let params = DenoiserParams::init(small_config(), 5).unwrap();
        let g1 = build_graph(&netlist, &placement, 1).unwrap();
        let g2 = build_graph(&netlist, &placement, 190).unwrap();
        let a = denoiser_forward(&params, &g1, &netlist).unwrap();
        let b = denoiser_forward(&params, &g2, &netlist).unwrap();
        assert_ne!(a.eps, b.eps);
    }

    #[test]
    fn no_eps_net_mode_is_the_scaled_transformer_branch() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 8).unwrap();
        let mut params = DenoiserParams::init(small_config(), 11).unwrap();
        params.config.arch = ArchMode::NoEpsNet;
        let out = denoiser_forward(&params, &graph, &netlist).unwrap();
        assert!(out.eps_net.is_none());
        assert!(out.projected_raw.is_none());
        for (e, c) in out.eps.iter().zip(out.eps_cell.iter()) {
            assert_eq!(e[0], params.config.lambda_cell * c[0]);
            assert_eq!(e[1], params.config.lambda_cell * c[1]);
        }
    }

    #[test]
    fn full_mode_on_edgeless_graph_equals_no_gnn_mode() {
        let (mut netlist, placement) = fixture();
        for net in &mut netlist.nets {
            net.pins.clear();
        }
        let graph = build_graph(&netlist, &placement, 8).unwrap();
        let full = DenoiserParams::init(small_config(), 11).unwrap();
        let mut nognn = full.clone();
        nognn.config.arch = ArchMode::NoGnn;
        let a = denoiser_forward(&full, &graph, &netlist).unwrap();
        let b = denoiser_forward(&nognn, &graph, &netlist).unwrap();
        // No edges: message passing is a no-op and the projected term is
        // exactly zero, so the two modes coincide bitwise.
        assert_eq!(a.eps, b.eps);
    }

    #[test]
    fn projected_term_matches_explicit_jacobian_transpose() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 25).unwrap();
        let params = DenoiserParams::init(small_config(), 21).unwrap();
        let out = denoiser_forward(&params, &graph, &netlist).unwrap();
        let eps_net = out.eps_net.unwrap();
        let raw = out.projected_raw.unwrap();
        // Finite-difference per-net Jacobian of smoothed HPWL, transposed
        // against eps_net.
        let gamma = params.config.gamma;
        let h = 1e-6;
        let m = netlist.num_movable();
        let mut expect = vec![[0.0f64; 2]; m];
        for i in 0..m {
            for c in 0..2 {
                let mut hi = placement.clone();
                let mut lo = placement.clone();
                hi.coords[i][c] += h;
                lo.coords[i][c] -= h;
                let fh = crate::objectives::per_net_hpwl_smooth(&netlist, &hi, gamma).unwrap();
                let fl = crate::objectives::per_net_hpwl_smooth(&netlist, &lo, gamma).unwrap();
                for (n, w) in eps_net.iter().enumerate() {
                    expect[i][c] += w * (fh[n] - fl[n]) / (2.0 * h);
                }
            }
        }
        for i in 0..m {
            for c in 0..2 {
                let denom = expect[i][c].abs().max(raw[i][c].abs()).max(1e-6);
                assert!(
                    (expect[i][c] - raw[i][c]).abs() / denom < 1e-3,
                    "row {i} comp {c}: {} vs {}",
                    raw[i][c],
                    expect[i][c]
                );
            }
        }
    }

    #[test]
    fn permuting_macros_permutes_the_prediction() {
        let (netlist, placement) = fixture();
        let params = DenoiserParams::init(small_config(), 31).unwrap();
        let graph = build_graph(&netlist, &placement, 14).unwrap();
        let base = denoiser_forward(&params, &graph, &netlist).unwrap();

        // Permutation of the movable macros (pads keep their ids).
        let perm = [2usize, 0, 3, 1]; // new index of old macro i
        let mut macros: Vec<Macro> = vec![Macro { id: 0, width: 0.0, height: 0.0 }; 4];
        for (old, &new) in perm.iter().enumerate() {
            macros[new] = Macro { id: new, ..netlist.macros[old] };
        }
        let mut nets = netlist.nets.clone();
        for net in &mut nets {
            for pin in &mut net.pins {
                if pin.owner < 4 {
                    pin.owner = perm[pin.owner];
                }
            }
        }
        let permuted = Netlist { macros, nets, ..netlist.clone() };
        let mut coords = vec![[0.0f64; 2]; 4];
        for (old, &new) in perm.iter().enumerate() {
            coords[new] = placement.coords[old];
        }
        let permuted_placement = Placement { coords };
        let pgraph = build_graph(&permuted, &permuted_placement, 14).unwrap();
        let pout = denoiser_forward(&params, &pgraph, &permuted).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for c in 0..2 {
                assert!(
                    (base.eps[old][c] - pout.eps[new][c]).abs() < 1e-9,
                    "macro {old}->{new} comp {c}"
                );
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences_for_every_group() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 60).unwrap();
        let params = DenoiserParams::init(small_config(), 41).unwrap();
        let m = netlist.num_movable();
        let mut rng = derive_rng(77, &[1]);
        let target = Matrix::from_vec(m, 2, standard_normal_vec(&mut rng, m * 2));
        let scale = 1.0 / m as f64;

        let loss_of = |p: &DenoiserParams| -> f64 {
            let mut tape = Tape::new();
            let fwd = forward_on_tape(&mut tape, p, &graph, &netlist).unwrap();
            let loss = tape.mse_scaled(fwd.eps, &target, scale);
            tape.value(loss).data[0]
        };

        let mut tape = Tape::new();
        let fwd = forward_on_tape(&mut tape, &params, &graph, &netlist).unwrap();
        let loss = tape.mse_scaled(fwd.eps, &target, scale);
        let grads = tape.backward(loss);

        let tensors = params.tensors();
        let h = 1e-5;
        for (gi, (name, tensor)) in tensors.iter().enumerate() {
            // Probe a few entries per tensor; FD over all 20k parameters
            // would be slow without adding coverage.
            let len = tensor.data.len();
            let probes: Vec<usize> = if len <= 4 {
                (0..len).collect()
            } else {
                vec![0, len / 3, len / 2, len - 1]
            };
            for &e in &probes {
                let mut perturbed = params.clone();
                {
                    let mut tm = perturbed.tensors_mut();
                    tm[gi].1.data[e] += h;
                }
                let up = loss_of(&perturbed);
                {
                    let mut tm = perturbed.tensors_mut();
                    tm[gi].1.data[e] -= 2.0 * h;
                }
                let down = loss_of(&perturbed);
                let fd = (up - down) / (2.0 * h);
                let an = grads.get(fwd.param_vars[gi])[e];
                let denom = an.abs().max(fd.abs()).max(1e-4);
                assert!(
                    (an - fd).abs() / denom < 1e-3,
                    "{name}[{e}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small_config();
        c.heads = 3;
        assert!(DenoiserParams::init(c, 0).is_err());
        let mut c = small_config();
        c.hidden = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.gamma = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn graph_netlist_mismatch_is_rejected() {
        let (netlist, placement) = fixture();
        let graph = build_graph(&netlist, &placement, 5).unwrap();
        let (other, _) = fixture();
        let mut truncated = other.clone();
        truncated.macros.pop();
        truncated.nets.clear();
        let params = DenoiserParams::init(small_config(), 1).unwrap();
        assert!(matches!(
            denoiser_forward(&params, &graph, &truncated),
            Err(CoreError::ShapeMismatch { .. })
        ));
    }
}
