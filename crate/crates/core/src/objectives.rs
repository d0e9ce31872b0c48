//! Differentiable placement objectives: half-perimeter wirelength (exact and
//! log-sum-exp smoothed), pairwise overlap with boundary penalty, and the
//! two-phase guidance weight schedule.
//!
//! All functions take a connectivity-filtered netlist (no standard-cell pins)
//! and a placement of bottom-left macro corners in the same coordinate frame
//! as the netlist. Pin positions are `owner center + pin offset`; pads are
//! fixed at their stored positions.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::netlist::{Netlist, OwnerKind, Placement};

/// Composite guidance weights for one inner-loop step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GuideWeights {
    pub w_hpwl: f64,
    pub w_overlap: f64,
}

fn check_inputs(netlist: &Netlist, placement: &Placement) -> Result<(), CoreError> {
    if !netlist.cells.is_empty() {
        return Err(CoreError::UnfilteredNetlist { cell_pins: netlist.cell_pin_count() });
    }
    if placement.coords.len() != netlist.num_movable() {
        return Err(CoreError::ShapeMismatch {
            expected: netlist.num_movable(),
            got: placement.coords.len(),
            what: "placement",
        });
    }
    Ok(())
}

/// Collect the pin coordinates of one net into `xs`/`ys` and the movable
/// owner of each pin (`usize::MAX` for pads) into `owners`.
fn gather_net_pins(
    netlist: &Netlist,
    placement: &Placement,
    net_idx: usize,
    xs: &mut Vec<f64>,
    ys: &mut Vec<f64>,
    owners: &mut Vec<usize>,
) {
    xs.clear();
    ys.clear();
    owners.clear();
    let m = netlist.num_movable();
    for pin in &netlist.nets[net_idx].pins {
        let (cx, cy) = match netlist.owner_kind(pin.owner) {
            OwnerKind::Movable => {
                let mac = &netlist.macros[pin.owner];
                let bl = placement.coords[pin.owner];
                (bl[0] + mac.width / 2.0, bl[1] + mac.height / 2.0)
            }
            OwnerKind::Pad => {
                let pad = &netlist.pads[pin.owner - m];
                let bl = netlist.pad_positions[pin.owner - m];
                (bl[0] + pad.width / 2.0, bl[1] + pad.height / 2.0)
            }
            _ => continue, // unreachable on filtered netlists
        };
        xs.push(cx + pin.offset[0]);
        ys.push(cy + pin.offset[1]);
        owners.push(if pin.owner < m { pin.owner } else { usize::MAX });
    }
}

fn bbox_span(v: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Exact half-perimeter wirelength of one coordinate list via the smoothed
/// bound's limit: span of the bounding interval.
fn exact_net_hpwl(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    bbox_span(xs) + bbox_span(ys)
}

/// Smoothed max/min of `v` with temperature `gamma`, plus softmax weights.
///
/// smoothmax = gamma * ln sum exp(v/gamma), stabilized by max subtraction;
/// smoothmin is the mirrored form. `w_plus`/`w_minus` receive the softmax
/// weights, which are exactly the partial derivatives of smoothmax/min.
fn smooth_extrema(
    v: &[f64],
    gamma: f64,
    w_plus: &mut Vec<f64>,
    w_minus: &mut Vec<f64>,
) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &x in v {
        hi = hi.max(x);
        lo = lo.min(x);
    }
    w_plus.clear();
    w_minus.clear();
    let mut sum_p = 0.0;
    let mut sum_m = 0.0;
    for &x in v {
        let ep = libm::exp((x - hi) / gamma);
        let em = libm::exp((lo - x) / gamma);
        w_plus.push(ep);
        w_minus.push(em);
        sum_p += ep;
        sum_m += em;
    }
    for w in w_plus.iter_mut() {
        *w /= sum_p;
    }
    for w in w_minus.iter_mut() {
        *w /= sum_m;
    }
    let smax = hi + gamma * libm::log(sum_p);
    let smin = lo - gamma * libm::log(sum_m);
    (smax, smin)
}

/// Exact HPWL of each net: half-perimeter of the pin bounding box.
pub fn per_net_hpwl(netlist: &Netlist, placement: &Placement) -> Result<Vec<f64>, CoreError> {
    check_inputs(netlist, placement)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut owners = Vec::new();
    let mut out = Vec::with_capacity(netlist.nets.len());
    for i in 0..netlist.nets.len() {
        gather_net_pins(netlist, placement, i, &mut xs, &mut ys, &mut owners);
        out.push(exact_net_hpwl(&xs, &ys));
    }
    Ok(out)
}

/// Total exact HPWL over all nets.
pub fn hpwl_exact(netlist: &Netlist, placement: &Placement) -> Result<f64, CoreError> {
    Ok(per_net_hpwl(netlist, placement)?.iter().sum())
}

/// Log-sum-exp smoothed HPWL of each net.
///
/// Always an upper bound on the exact value; the gap per net is at most
/// `2 * gamma * ln(pins)` per axis.
pub fn per_net_hpwl_smooth(
    netlist: &Netlist,
    placement: &Placement,
    gamma: f64,
) -> Result<Vec<f64>, CoreError> {
    check_inputs(netlist, placement)?;
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidConfig(alloc::format!("gamma must be positive, got {gamma}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut owners = Vec::new();
    let mut wp = Vec::new();
    let mut wm = Vec::new();
    let mut out = Vec::with_capacity(netlist.nets.len());
    for i in 0..netlist.nets.len() {
        gather_net_pins(netlist, placement, i, &mut xs, &mut ys, &mut owners);
        if xs.len() < 2 {
            out.push(0.0);
            continue;
        }
        let (sx_max, sx_min) = smooth_extrema(&xs, gamma, &mut wp, &mut wm);
        let (sy_max, sy_min) = smooth_extrema(&ys, gamma, &mut wp, &mut wm);
        out.push((sx_max - sx_min) + (sy_max - sy_min));
    }
    Ok(out)
}

/// Total smoothed HPWL.
pub fn hpwl_smooth(netlist: &Netlist, placement: &Placement, gamma: f64) -> Result<f64, CoreError> {
    Ok(per_net_hpwl_smooth(netlist, placement, gamma)?.iter().sum())
}

/// Walk every pin of every multi-pin net and hand its smoothed-HPWL gradient
/// contribution `(net, movable owner, d smooth_n / d owner_bl)` to `sink`.
fn for_each_smooth_pin_grad(
    netlist: &Netlist,
    placement: &Placement,
    gamma: f64,
    mut sink: impl FnMut(usize, usize, [f64; 2]),
) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut owners = Vec::new();
    let mut wpx = Vec::new();
    let mut wmx = Vec::new();
    let mut wpy = Vec::new();
    let mut wmy = Vec::new();
    for n in 0..netlist.nets.len() {
        gather_net_pins(netlist, placement, n, &mut xs, &mut ys, &mut owners);
        if xs.len() < 2 {
            continue;
        }
        smooth_extrema(&xs, gamma, &mut wpx, &mut wmx);
        smooth_extrema(&ys, gamma, &mut wpy, &mut wmy);
        for (k, &owner) in owners.iter().enumerate() {
            if owner == usize::MAX {
                continue;
            }
            // Moving the owner moves the pin one-for-one, so the pin
            // derivative is also the owner derivative.
            sink(n, owner, [wpx[k] - wmx[k], wpy[k] - wmy[k]]);
        }
    }
}

/// Gradient of the (optionally net-weighted) smoothed HPWL with respect to
/// movable bottom-left coordinates.
///
/// With `net_weights = Some(w)` this is the gradient of `sum_n w[n] *
/// hpwl_smooth_n`, i.e. the Jacobian-transpose product used when projecting
/// per-net scalars into coordinate space. `None` means all weights are 1.
pub fn grad_hpwl(
    netlist: &Netlist,
    placement: &Placement,
    gamma: f64,
    net_weights: Option<&[f64]>,
) -> Result<Vec<[f64; 2]>, CoreError> {
    check_inputs(netlist, placement)?;
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidConfig(alloc::format!("gamma must be positive, got {gamma}")));
    }
    if let Some(w) = net_weights {
        if w.len() != netlist.nets.len() {
            return Err(CoreError::ShapeMismatch {
                expected: netlist.nets.len(),
                got: w.len(),
                what: "net weights",
            });
        }
    }
    let mut grad = vec![[0.0f64; 2]; netlist.num_movable()];
    for_each_smooth_pin_grad(netlist, placement, gamma, |net, owner, g| {
        let w = net_weights.map(|w| w[net]).unwrap_or(1.0);
        grad[owner][0] += w * g[0];
        grad[owner][1] += w * g[1];
    });
    Ok(grad)
}

/// Per-net sparse gradients of the smoothed HPWL: one `(owner, d/d owner_bl)`
/// entry per movable-owned pin. This is the per-net Jacobian in sparse form;
/// the denoiser's projection op consumes it in both directions.
pub fn per_net_smooth_grad(
    netlist: &Netlist,
    placement: &Placement,
    gamma: f64,
) -> Result<Vec<Vec<(usize, [f64; 2])>>, CoreError> {
    check_inputs(netlist, placement)?;
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidConfig(alloc::format!("gamma must be positive, got {gamma}")));
    }
    let mut out: Vec<Vec<(usize, [f64; 2])>> = vec![Vec::new(); netlist.nets.len()];
    for_each_smooth_pin_grad(netlist, placement, gamma, |net, owner, g| {
        out[net].push((owner, g));
    });
    Ok(out)
}

/// Positive part of the intersection length of `[a0, a1]` and `[b0, b1]`.
fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Pairwise overlap area plus squared boundary protrusion.
///
/// `sum_{i<j} ox*oy + sum_i sum_side max(0, protrusion)^2`. Zero exactly on
/// legal placements (pairwise disjoint interiors, fully inside the canvas).
pub fn overlap_loss(netlist: &Netlist, placement: &Placement) -> Result<f64, CoreError> {
    check_inputs(netlist, placement)?;
    let mut loss = 0.0;
    let n = netlist.num_movable();
    for i in 0..n {
        let (wi, hi) = (netlist.macros[i].width, netlist.macros[i].height);
        let [xi, yi] = placement.coords[i];
        for j in (i + 1)..n {
            let (wj, hj) = (netlist.macros[j].width, netlist.macros[j].height);
            let [xj, yj] = placement.coords[j];
            let ox = overlap_1d(xi, xi + wi, xj, xj + wj);
            let oy = overlap_1d(yi, yi + hi, yj, yj + hj);
            loss += ox * oy;
        }
        let c = netlist.canvas;
        let pl = (c.origin[0] - xi).max(0.0);
        let pr = (xi + wi - (c.origin[0] + c.width)).max(0.0);
        let pb = (c.origin[1] - yi).max(0.0);
        let pt = (yi + hi - (c.origin[1] + c.height)).max(0.0);
        loss += pl * pl + pr * pr + pb * pb + pt * pt;
    }
    Ok(loss)
}

/// Subgradient of [`overlap_loss`]. At the kinks of the `max(0, .)` terms the
/// one-sided choice is zero; interior min/max ties resolve by strict
/// comparison, which keeps the result deterministic.
pub fn grad_overlap(netlist: &Netlist, placement: &Placement) -> Result<Vec<[f64; 2]>, CoreError> {
    check_inputs(netlist, placement)?;
    let n = netlist.num_movable();
    let mut grad = vec![[0.0f64; 2]; n];
    for i in 0..n {
        let (wi, hi) = (netlist.macros[i].width, netlist.macros[i].height);
        let [xi, yi] = placement.coords[i];
        for j in (i + 1)..n {
            let (wj, hj) = (netlist.macros[j].width, netlist.macros[j].height);
            let [xj, yj] = placement.coords[j];
            let (ri, rj) = (xi + wi, xj + wj);
            let (ti, tj) = (yi + hi, yj + hj);
            let ox = overlap_1d(xi, ri, xj, rj);
            let oy = overlap_1d(yi, ti, yj, tj);
            if ox <= 0.0 || oy <= 0.0 {
                continue;
            }
            // d ox / d xi = [ri is the strict min right edge] - [xi is the strict max left edge]
            let dox_di = (if ri < rj { 1.0 } else { 0.0 }) - (if xi > xj { 1.0 } else { 0.0 });
            let dox_dj = (if rj < ri { 1.0 } else { 0.0 }) - (if xj > xi { 1.0 } else { 0.0 });
            let doy_di = (if ti < tj { 1.0 } else { 0.0 }) - (if yi > yj { 1.0 } else { 0.0 });
            let doy_dj = (if tj < ti { 1.0 } else { 0.0 }) - (if yj > yi { 1.0 } else { 0.0 });
            grad[i][0] += oy * dox_di;
            grad[j][0] += oy * dox_dj;
            grad[i][1] += ox * doy_di;
            grad[j][1] += ox * doy_dj;
        }
        let c = netlist.canvas;
        let pl = (c.origin[0] - xi).max(0.0);
        let pr = (xi + wi - (c.origin[0] + c.width)).max(0.0);
        let pb = (c.origin[1] - yi).max(0.0);
        let pt = (yi + hi - (c.origin[1] + c.height)).max(0.0);
        grad[i][0] += 2.0 * pr - 2.0 * pl;
        grad[i][1] += 2.0 * pt - 2.0 * pb;
    }
    Ok(grad)
}

/// Composite guidance loss `w_hpwl * hpwl_smooth + w_overlap * overlap_loss`.
pub fn guide_loss_value(
    netlist: &Netlist,
    placement: &Placement,
    weights: GuideWeights,
    gamma: f64,
) -> Result<f64, CoreError> {
    Ok(weights.w_hpwl * hpwl_smooth(netlist, placement, gamma)?
        + weights.w_overlap * overlap_loss(netlist, placement)?)
}

/// Composite guidance loss and its gradient in one call.
pub fn guide_loss(
    netlist: &Netlist,
    placement: &Placement,
    weights: GuideWeights,
    gamma: f64,
) -> Result<(f64, Vec<[f64; 2]>), CoreError> {
    let value = guide_loss_value(netlist, placement, weights, gamma)?;
    let gh = grad_hpwl(netlist, placement, gamma, None)?;
    let go = grad_overlap(netlist, placement)?;
    let grad = gh
        .iter()
        .zip(go.iter())
        .map(|(a, b)| {
            [
                weights.w_hpwl * a[0] + weights.w_overlap * b[0],
                weights.w_hpwl * a[1] + weights.w_overlap * b[1],
            ]
        })
        .collect();
    Ok((value, grad))
}

/// State of the two-phase guidance weight schedule.
///
/// Phase 1 emphasizes wirelength; once the relative HPWL improvement over a
/// sliding window of observations falls below `threshold`, the schedule
/// switches permanently to phase 2 (overlap-dominant) for the rest of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    phase: u8,
    history: VecDeque<f64>,
    window: usize,
    threshold: f64,
    phase1: GuideWeights,
    phase2: GuideWeights,
}

impl ScheduleState {
    pub fn new(window: usize, threshold: f64, phase1: GuideWeights, phase2: GuideWeights) -> Self {
        ScheduleState {
            phase: 1,
            history: VecDeque::with_capacity(window + 1),
            window: window.max(2),
            threshold,
            phase1,
            phase2,
        }
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }
}

/// Observe the current HPWL at inner step `k` (1-based) and return the
/// weights to use for this step.
///
/// The transition fires at most once: after the history window fills, a
/// relative improvement `(oldest - newest) / |oldest|` below the threshold
/// moves the schedule to phase 2 permanently.
pub fn weight_schedule(state: &mut ScheduleState, k: usize, current_hpwl: f64) -> GuideWeights {
    debug_assert!(k >= 1);
    if state.phase == 2 {
        return state.phase2;
    }
    state.history.push_back(current_hpwl);
    if state.history.len() > state.window {
        state.history.pop_front();
    }
    if state.history.len() == state.window {
        let oldest = *state.history.front().expect("window is nonempty");
        let newest = *state.history.back().expect("window is nonempty");
        let rel = (oldest - newest) / oldest.abs().max(1e-12);
        if rel < state.threshold {
            state.phase = 2;
            state.history.clear();
            return state.phase2;
        }
    }
    state.phase1
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::netlist::{Canvas, Macro, Net, Pin};
    use crate::rng::{derive_rng, standard_normal_pairs, uniform01};
    use alloc::vec;

    /// Two point macros (zero-offset pins at centers) joined by one net, pin
    /// centers at (0,0) and (3,4).
    fn two_pin_fixture() -> (Netlist, Placement) {
        let netlist = Netlist {
            macros: vec![
                Macro { id: 0, width: 2.0, height: 2.0 },
                Macro { id: 1, width: 2.0, height: 2.0 },
            ],
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets: vec![Net {
                id: 0,
                pins: vec![
                    Pin { owner: 0, offset: [0.0, 0.0] },
                    Pin { owner: 1, offset: [0.0, 0.0] },
                ],
                total_degree: None,
            }],
            canvas: Canvas { origin: [-10.0, -10.0], width: 20.0, height: 20.0 },
        };
        // Bottom-left corners chosen so centers land on (0,0) and (3,4).
        let placement = Placement { coords: vec![[-1.0, -1.0], [2.0, 3.0]] };
        (netlist, placement)
    }

    fn random_instance(seed: u64, m: usize, nets: usize) -> (Netlist, Placement) {
        let mut rng = derive_rng(seed, &[0xbeef]);
        let macros = (0..m)
            .map(|id| Macro {
                id,
                width: 0.1 + 0.3 * uniform01(&mut rng),
                height: 0.1 + 0.3 * uniform01(&mut rng),
            })
            .collect::<Vec<_>>();
        let nets = (0..nets)
            .map(|id| {
                let deg = 2 + (uniform01(&mut rng) * 3.0) as usize;
                let pins = (0..deg)
                    .map(|_| Pin {
                        owner: (uniform01(&mut rng) * m as f64) as usize % m,
                        offset: [0.1 * uniform01(&mut rng) - 0.05, 0.1 * uniform01(&mut rng) - 0.05],
                    })
                    .collect();
                Net { id, pins, total_degree: None }
            })
            .collect();
        let netlist = Netlist {
            macros,
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets,
            canvas: Canvas { origin: [-1.0, -1.0], width: 2.0, height: 2.0 },
        };
        let coords = standard_normal_pairs(&mut rng, m)
            .into_iter()
            .map(|c| [c[0] * 0.4, c[1] * 0.4])
            .collect();
        (netlist, Placement { coords })
    }

    #[test]
    fn exact_hpwl_is_bbox_half_perimeter() {
        let (n, p) = two_pin_fixture();
        assert_eq!(hpwl_exact(&n, &p).unwrap(), 7.0);
        assert_eq!(per_net_hpwl(&n, &p).unwrap(), vec![7.0]);
    }

    #[test]
    fn single_pin_net_contributes_zero() {
        let (mut n, p) = two_pin_fixture();
        n.nets.push(Net {
            id: 1,
            pins: vec![Pin { owner: 0, offset: [0.5, 0.5] }],
            total_degree: None,
        });
        assert_eq!(per_net_hpwl(&n, &p).unwrap()[1], 0.0);
        assert_eq!(per_net_hpwl_smooth(&n, &p, 0.01).unwrap()[1], 0.0);
        let g = grad_hpwl(&n, &p, 0.01, None).unwrap();
        assert!(g.iter().all(|r| r[0].is_finite() && r[1].is_finite()));
    }

    #[test]
    fn smooth_hpwl_converges_to_exact_as_gamma_shrinks() {
        let (n, p) = two_pin_fixture();
        let s = hpwl_smooth(&n, &p, 1e-4).unwrap();
        assert!((s - 7.0).abs() < 1e-3, "smooth {s}");
    }

    #[test]
    fn smooth_upper_bounds_exact_with_lse_gap() {
        let (n, p) = random_instance(7, 8, 12);
        let gamma = 0.05;
        let exact = per_net_hpwl(&n, &p).unwrap();
        let smooth = per_net_hpwl_smooth(&n, &p, gamma).unwrap();
        for (i, net) in n.nets.iter().enumerate() {
            let gap = smooth[i] - exact[i];
            let k = net.pins.len() as f64;
            // Per axis the LSE gap is at most 2*gamma*ln(k); two axes double it.
            let bound = 4.0 * gamma * libm::log(k);
            assert!(gap >= -1e-12, "net {i}: smooth below exact by {gap}");
            assert!(gap <= bound + 1e-12, "net {i}: gap {gap} above bound {bound}");
        }
    }

    #[test]
    fn two_macro_gradient_is_equal_and_opposite() {
        let (n, p) = two_pin_fixture();
        let g = grad_hpwl(&n, &p, 0.01, None).unwrap();
        assert!((g[0][0] + g[1][0]).abs() < 1e-12);
        assert!((g[0][1] + g[1][1]).abs() < 1e-12);
        // Net stretches up-right from macro 0 to macro 1, so macro 0 is pulled
        // negative-from-macro-1's side: d smooth / d x0 < 0.
        assert!(g[0][0] < 0.0 && g[0][1] < 0.0);
        assert!(g[1][0] > 0.0 && g[1][1] > 0.0);
    }

    #[test]
    fn per_net_gradient_rows_sum_to_zero_for_internal_nets() {
        let (n, p) = random_instance(11, 6, 9);
        let per_net = per_net_smooth_grad(&n, &p, 0.02).unwrap();
        for (i, entries) in per_net.iter().enumerate() {
            if n.nets[i].pins.len() < 2 {
                continue;
            }
            let mut sum = [0.0f64; 2];
            for (_, g) in entries {
                sum[0] += g[0];
                sum[1] += g[1];
            }
            assert!(sum[0].abs() < 1e-10 && sum[1].abs() < 1e-10, "net {i} sums {sum:?}");
        }
    }

    #[test]
    fn grad_is_linear_in_net_weights() {
        let (n, p) = random_instance(13, 5, 8);
        let gamma = 0.03;
        let w1: Vec<f64> = (0..n.nets.len()).map(|i| 0.1 + i as f64).collect();
        let w2: Vec<f64> = (0..n.nets.len()).map(|i| 1.0 - 0.05 * i as f64).collect();
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let g1 = grad_hpwl(&n, &p, gamma, Some(&w1)).unwrap();
        let g2 = grad_hpwl(&n, &p, gamma, Some(&w2)).unwrap();
        let gc = grad_hpwl(&n, &p, gamma, Some(&combo)).unwrap();
        for i in 0..g1.len() {
            for c in 0..2 {
                let expect = 2.0 * g1[i][c] - 0.5 * g2[i][c];
                assert!((gc[i][c] - expect).abs() < 1e-9, "row {i} comp {c}");
            }
        }
        // None is the all-ones weighting.
        let ones = vec![1.0; n.nets.len()];
        assert_eq!(
            grad_hpwl(&n, &p, gamma, None).unwrap(),
            grad_hpwl(&n, &p, gamma, Some(&ones)).unwrap()
        );
    }

    #[test]
    fn translation_leaves_hpwl_unchanged_when_all_pins_movable() {
        let (n, p) = random_instance(17, 7, 10);
        let shifted = Placement {
            coords: p.coords.iter().map(|c| [c[0] + 0.37, c[1] - 0.21]).collect(),
        };
        let a = hpwl_exact(&n, &p).unwrap();
        let b = hpwl_exact(&n, &shifted).unwrap();
        assert!((a - b).abs() < 1e-9);
        let sa = hpwl_smooth(&n, &p, 0.02).unwrap();
        let sb = hpwl_smooth(&n, &shifted, 0.02).unwrap();
        assert!((sa - sb).abs() < 1e-9);
    }

    #[test]
    fn overlap_of_unit_squares_offset_by_half() {
        let n = Netlist {
            macros: vec![
                Macro { id: 0, width: 1.0, height: 1.0 },
                Macro { id: 1, width: 1.0, height: 1.0 },
            ],
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets: vec![],
            canvas: Canvas { origin: [-5.0, -5.0], width: 10.0, height: 10.0 },
        };
        // Offset (0.5, 0.5): overlap box 0.5 x 0.5.
        let p = Placement { coords: vec![[0.0, 0.0], [0.5, 0.5]] };
        assert!((overlap_loss(&n, &p).unwrap() - 0.25).abs() < 1e-12);
        // Coincident squares overlap fully.
        let p2 = Placement { coords: vec![[0.0, 0.0], [0.0, 0.0]] };
        assert!((overlap_loss(&n, &p2).unwrap() - 1.0).abs() < 1e-12);
        // Separated: zero loss, zero gradient.
        let p3 = Placement { coords: vec![[0.0, 0.0], [3.0, 0.0]] };
        assert_eq!(overlap_loss(&n, &p3).unwrap(), 0.0);
        assert_eq!(grad_overlap(&n, &p3).unwrap(), vec![[0.0, 0.0]; 2]);
    }

    #[test]
    fn boundary_protrusion_is_squared() {
        let n = Netlist {
            macros: vec![Macro { id: 0, width: 1.0, height: 1.0 }],
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets: vec![],
            canvas: Canvas { origin: [0.0, 0.0], width: 4.0, height: 4.0 },
        };
        // Sticks out 0.5 beyond the right edge.
        let p = Placement { coords: vec![[3.5, 1.0]] };
        assert!((overlap_loss(&n, &p).unwrap() - 0.25).abs() < 1e-12);
        let g = grad_overlap(&n, &p).unwrap();
        assert!((g[0][0] - 1.0).abs() < 1e-12); // 2 * 0.5
        assert_eq!(g[0][1], 0.0);
    }

    /// Central finite difference of a scalar placement function.
    fn fd_grad(
        f: &dyn Fn(&Placement) -> f64,
        p: &Placement,
        h: f64,
    ) -> Vec<[f64; 2]> {
        let mut g = vec![[0.0f64; 2]; p.coords.len()];
        for i in 0..p.coords.len() {
            for c in 0..2 {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi.coords[i][c] += h;
                lo.coords[i][c] -= h;
                g[i][c] = (f(&hi) - f(&lo)) / (2.0 * h);
            }
        }
        g
    }

    fn max_rel_err(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        let mut worst = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            for c in 0..2 {
                let denom = x[c].abs().max(y[c].abs()).max(1e-6);
                worst = worst.max((x[c] - y[c]).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn hpwl_gradient_matches_finite_differences() {
        for seed in 0..5u64 {
            let (n, p) = random_instance(100 + seed, 6, 9);
            let gamma = 0.02;
            let analytic = grad_hpwl(&n, &p, gamma, None).unwrap();
            let fd = fd_grad(&|pl| hpwl_smooth(&n, pl, gamma).unwrap(), &p, 1e-5);
            let err = max_rel_err(&analytic, &fd);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    /// True when no pair or boundary sits within `margin` of a kink of the
    /// overlap loss, so central differences see a smooth function.
    fn away_from_overlap_kinks(n: &Netlist, p: &Placement, margin: f64) -> bool {
        let m = n.num_movable();
        for i in 0..m {
            let (wi, hi) = (n.macros[i].width, n.macros[i].height);
            let [xi, yi] = p.coords[i];
            for j in (i + 1)..m {
                let (wj, hj) = (n.macros[j].width, n.macros[j].height);
                let [xj, yj] = p.coords[j];
                let ox = (xi + wi).min(xj + wj) - xi.max(xj);
                let oy = (yi + hi).min(yj + hj) - yi.max(yj);
                if ox.abs() < margin || oy.abs() < margin {
                    return false;
                }
                if ox > 0.0 && oy > 0.0 {
                    // Interior min/max ties are also kinks.
                    if ((xi + wi) - (xj + wj)).abs() < margin || (xi - xj).abs() < margin {
                        return false;
                    }
                    if ((yi + hi) - (yj + hj)).abs() < margin || (yi - yj).abs() < margin {
                        return false;
                    }
                }
            }
            let c = n.canvas;
            for d in [
                xi - c.origin[0],
                xi + wi - (c.origin[0] + c.width),
                yi - c.origin[1],
                yi + hi - (c.origin[1] + c.height),
            ] {
                if d.abs() < margin {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn overlap_gradient_matches_finite_differences_at_smooth_points() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let (n, p) = random_instance(200 + seed, 6, 4);
            if !away_from_overlap_kinks(&n, &p, 1e-3) {
                continue;
            }
            let analytic = grad_overlap(&n, &p).unwrap();
            let fd = fd_grad(&|pl| overlap_loss(&n, pl).unwrap(), &p, 1e-6);
            let err = max_rel_err(&analytic, &fd);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} smooth instances found");
    }

    #[test]
    fn guide_loss_combines_terms_linearly() {
        let (n, p) = random_instance(33, 5, 6);
        let w = GuideWeights { w_hpwl: 0.7, w_overlap: 1.3 };
        let gamma = 0.02;
        let (value, grad) = guide_loss(&n, &p, w, gamma).unwrap();
        let expect = 0.7 * hpwl_smooth(&n, &p, gamma).unwrap() + 1.3 * overlap_loss(&n, &p).unwrap();
        assert!((value - expect).abs() < 1e-12);
        let gh = grad_hpwl(&n, &p, gamma, None).unwrap();
        let go = grad_overlap(&n, &p).unwrap();
        for i in 0..grad.len() {
            for c in 0..2 {
                assert!((grad[i][c] - (0.7 * gh[i][c] + 1.3 * go[i][c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schedule_stays_in_phase_one_while_improving() {
        let p1 = GuideWeights { w_hpwl: 1.0, w_overlap: 0.1 };
        let p2 = GuideWeights { w_hpwl: 0.1, w_overlap: 1.0 };
        let mut st = ScheduleState::new(10, 0.1, p1, p2);
        // 20% improvement per window: stays in phase 1.
        let mut hpwl = 100.0;
        for k in 1..=30 {
            let w = weight_schedule(&mut st, k, hpwl);
            assert_eq!(w, p1, "step {k}");
            assert_eq!(st.phase(), 1);
            hpwl *= 0.97; // ~24% improvement over 9 steps
        }
    }

    #[test]
    fn schedule_transitions_once_on_plateau_and_stays() {
        let p1 = GuideWeights { w_hpwl: 1.0, w_overlap: 0.1 };
        let p2 = GuideWeights { w_hpwl: 0.1, w_overlap: 1.0 };
        let mut st = ScheduleState::new(10, 0.1, p1, p2);
        let mut transitioned_at = None;
        for k in 1..=40 {
            // Constant HPWL: zero improvement, must plateau as soon as the
            // window fills.
            let w = weight_schedule(&mut st, k, 50.0);
            if st.phase() == 2 && transitioned_at.is_none() {
                transitioned_at = Some(k);
                assert_eq!(w, p2);
            }
        }
        assert_eq!(transitioned_at, Some(10));
        // Improvement afterwards cannot revert the phase.
        let w = weight_schedule(&mut st, 41, 1.0);
        assert_eq!(w, p2);
        assert_eq!(st.phase(), 2);
    }

    #[test]
    fn shape_and_filter_errors_are_reported() {
        let (n, p) = two_pin_fixture();
        let short = Placement { coords: vec![[0.0, 0.0]] };
        assert!(matches!(
            hpwl_exact(&n, &short),
            Err(CoreError::ShapeMismatch { expected: 2, got: 1, .. })
        ));
        let mut unfiltered = n.clone();
        unfiltered.cells.push(Macro { id: 2, width: 0.1, height: 0.1 });
        assert!(matches!(
            hpwl_exact(&unfiltered, &p),
            Err(CoreError::UnfilteredNetlist { .. })
        ));
        assert!(matches!(
            hpwl_smooth(&n, &p, 0.0),
            Err(CoreError::InvalidConfig(_))
        ));
    }
}
