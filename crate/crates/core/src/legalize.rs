//! Greedy macro legalization and placement metrics.
//!
//! Legalization processes macros in area-descending order (ties by id) and
//! snaps each to the first legal position found by an outward ring search on
//! a grid centered at its desired position. The grid pitch starts at a
//! quarter of the macro's smaller dimension and is halved up to three times
//! if the search exhausts the canvas. Ring zero is the desired position
//! itself, checked with exact comparisons, so an already-legal placement is
//! a fixed point with zero displacement.
//!
//! All geometry here is exact: two macros may touch along an edge (zero
//! intersection area is legal), and in-bounds tests use plain `<=` with no
//! epsilon.

use alloc::vec::Vec;

use crate::error::CoreError;
use crate::netlist::{Netlist, Placement};

/// A legalized placement plus how far everything moved (Manhattan metric).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LegalizationResult {
    pub placement: Placement,
    pub displacement_total: f64,
    pub per_macro_displacement: Vec<f64>,
    /// Macros whose position changed at all.
    pub moved_count: usize,
}

fn check_placement(netlist: &Netlist, placement: &Placement) -> Result<(), CoreError> {
    if placement.coords.len() != netlist.num_movable() {
        return Err(CoreError::ShapeMismatch {
            expected: netlist.num_movable(),
            got: placement.coords.len(),
            what: "placement rows",
        });
    }
    if !placement.is_finite() {
        return Err(CoreError::NonFinite { what: "placement", epoch: 0, step: 0 });
    }
    Ok(())
}

/// Total pairwise rectangle-intersection area between movable macros.
/// Zero exactly when the placement is overlap-free.
pub fn overlap_area_exact(netlist: &Netlist, placement: &Placement) -> Result<f64, CoreError> {
    check_placement(netlist, placement)?;
    let m = netlist.num_movable();
    let mut total = 0.0;
    for i in 0..m {
        let (xi, yi) = (placement.coords[i][0], placement.coords[i][1]);
        let (wi, hi) = (netlist.macros[i].width, netlist.macros[i].height);
        for j in (i + 1)..m {
            let (xj, yj) = (placement.coords[j][0], placement.coords[j][1]);
            let (wj, hj) = (netlist.macros[j].width, netlist.macros[j].height);
            let ox = (xi + wi).min(xj + wj) - xi.max(xj);
            let oy = (yi + hi).min(yj + hj) - yi.max(yj);
            if ox > 0.0 && oy > 0.0 {
                total += ox * oy;
            }
        }
    }
    Ok(total)
}

/// Whether every movable macro lies fully inside the canvas (exact
/// comparisons; boundary contact is in bounds).
pub fn in_bounds(netlist: &Netlist, placement: &Placement) -> Result<bool, CoreError> {
    check_placement(netlist, placement)?;
    let [ox, oy] = netlist.canvas.origin;
    let (cw, ch) = (netlist.canvas.width, netlist.canvas.height);
    Ok(netlist.macros.iter().zip(placement.coords.iter()).all(|(mac, c)| {
        c[0] >= ox && c[1] >= oy && c[0] + mac.width <= ox + cw && c[1] + mac.height <= oy + ch
    }))
}

/// Per-macro Manhattan distance between two placements, plus the total.
/// Symmetric in its arguments.
pub fn displacement(
    before: &Placement,
    after: &Placement,
) -> Result<(f64, Vec<f64>), CoreError> {
    if before.coords.len() != after.coords.len() {
        return Err(CoreError::ShapeMismatch {
            expected: before.coords.len(),
            got: after.coords.len(),
            what: "displacement placements",
        });
    }
    let per: Vec<f64> = before
        .coords
        .iter()
        .zip(after.coords.iter())
        .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs())
        .collect();
    Ok((per.iter().sum(), per))
}

const PITCH_REFINEMENTS: usize = 3;
const AREA_CAPACITY_LIMIT: f64 = 0.98;

/// Does `(x, y, w, h)` avoid strictly-positive-area overlap with every
/// rectangle in `placed`?
fn position_is_free(x: f64, y: f64, w: f64, h: f64, placed: &[(f64, f64, f64, f64)]) -> bool {
    placed.iter().all(|&(px, py, pw, ph)| {
        let ox = (x + w).min(px + pw) - x.max(px);
        let oy = (y + h).min(py + ph) - y.max(py);
        ox <= 0.0 || oy <= 0.0
    })
}

/// Search outward rings (Chebyshev radius r on the pitch grid, centered at
/// the desired position) for the first legal spot. Within a ring, candidates
/// are tried nearest-Manhattan-first, ties broken by (dy, dx).
fn ring_search(
    desired: [f64; 2],
    w: f64,
    h: f64,
    netlist: &Netlist,
    placed: &[(f64, f64, f64, f64)],
    pitch: f64,
) -> Option<[f64; 2]> {
    let [cx, cy] = netlist.canvas.origin;
    let (cw, ch) = (netlist.canvas.width, netlist.canvas.height);
    let (x_max, y_max) = (cx + cw - w, cy + ch - h);
    if x_max < cx || y_max < cy {
        return None; // macro larger than the canvas
    }
    // Enough rings for the grid to cover the whole legal rectangle from the
    // desired position.
    let span_x = (desired[0] - cx).abs().max((desired[0] - x_max).abs());
    let span_y = (desired[1] - cy).abs().max((desired[1] - y_max).abs());
    let r_max = (span_x.max(span_y) / pitch) as usize + 2;
    let mut ring: Vec<(i64, i64)> = Vec::new();
    for r in 0..=r_max as i64 {
        ring.clear();
        if r == 0 {
            ring.push((0, 0));
        } else {
            for j in -r..=r {
                for i in -r..=r {
                    if i.abs().max(j.abs()) == r {
                        ring.push((i, j));
                    }
                }
            }
            ring.sort_by_key(|&(i, j)| (i.abs() + j.abs(), j, i));
        }
        for &(i, j) in &ring {
            let x = desired[0] + i as f64 * pitch;
            let y = desired[1] + j as f64 * pitch;
            if x < cx || y < cy || x > x_max || y > y_max {
                continue;
            }
            if position_is_free(x, y, w, h, placed) {
                return Some([x, y]);
            }
        }
    }
    None
}

/// Greedy legalization: macros in area-descending order (ties by id) are
/// snapped to the nearest free in-bounds position found by the ring search.
///
/// Fails with `NonConvergence` when total macro area exceeds 98% of the
/// canvas or when the search exhausts the canvas for some macro even after
/// three pitch refinements.
pub fn legalize(netlist: &Netlist, placement: &Placement) -> Result<LegalizationResult, CoreError> {
    check_placement(netlist, placement)?;
    let canvas_area = netlist.canvas.width * netlist.canvas.height;
    let macro_area = netlist.movable_area();
    if macro_area > AREA_CAPACITY_LIMIT * canvas_area {
        return Err(CoreError::NonConvergence(alloc::format!(
            "macro area {macro_area} exceeds {AREA_CAPACITY_LIMIT} of canvas area {canvas_area}"
        )));
    }

    let m = netlist.num_movable();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let aa = netlist.macros[a].width * netlist.macros[a].height;
        let ab = netlist.macros[b].width * netlist.macros[b].height;
        ab.partial_cmp(&aa).expect("validated dims are finite").then(a.cmp(&b))
    });

    let mut placed: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(m);
    let mut coords = placement.coords.clone();
    for &idx in &order {
        let (w, h) = (netlist.macros[idx].width, netlist.macros[idx].height);
        let desired = placement.coords[idx];
        let base_pitch = w.min(h) / 4.0;
        let mut found = None;
        for refine in 0..=PITCH_REFINEMENTS {
            let pitch = base_pitch / (1 << refine) as f64;
            if let Some(pos) = ring_search(desired, w, h, netlist, &placed, pitch) {
                found = Some(pos);
                break;
            }
        }
        let pos = found.ok_or_else(|| {
            CoreError::NonConvergence(alloc::format!(
                "no legal position for macro {idx} after {PITCH_REFINEMENTS} pitch refinements"
            ))
        })?;
        coords[idx] = pos;
        placed.push((pos[0], pos[1], w, h));
    }

    let legal = Placement { coords };
    let (displacement_total, per_macro_displacement) = displacement(placement, &legal)?;
    let moved_count = per_macro_displacement.iter().filter(|&&d| d > 0.0).count();
    Ok(LegalizationResult {
        placement: legal,
        displacement_total,
        per_macro_displacement,
        moved_count,
    })
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::netlist::{Canvas, Macro, Netlist};
    use crate::rng::{derive_rng, uniform01};
    use alloc::vec;
    use proptest::prelude::*;

    fn netlist_with(macros: Vec<Macro>, canvas: Canvas) -> Netlist {
        Netlist {
            macros,
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets: vec![],
            canvas,
        }
    }

    fn unit_canvas(side: f64) -> Canvas {
        Canvas { origin: [0.0, 0.0], width: side, height: side }
    }

    /// Exact pairwise-overlap total via coordinate compression: split the
    /// plane into elementary cells at every rectangle edge, count coverage k
    /// per cell, and add k(k-1)/2 times the cell area. Independent of the
    /// min/max intersection arithmetic in the implementation.
    fn overlap_by_sweep(netlist: &Netlist, placement: &Placement) -> f64 {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for (mac, c) in netlist.macros.iter().zip(placement.coords.iter()) {
            xs.push(c[0]);
            xs.push(c[0] + mac.width);
            ys.push(c[1]);
            ys.push(c[1] + mac.height);
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        let mut total = 0.0;
        for wx in xs.windows(2) {
            for wy in ys.windows(2) {
                let (mx, my) = (0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1]));
                let k = netlist
                    .macros
                    .iter()
                    .zip(placement.coords.iter())
                    .filter(|(mac, c)| {
                        mx > c[0] && mx < c[0] + mac.width && my > c[1] && my < c[1] + mac.height
                    })
                    .count() as f64;
                total += 0.5 * k * (k - 1.0) * (wx[1] - wx[0]) * (wy[1] - wy[0]);
            }
        }
        total
    }

    #[test]
    fn disjoint_layout_has_zero_overlap() {
        let netlist = netlist_with(
            vec![
                Macro { id: 0, width: 2.0, height: 2.0 },
                Macro { id: 1, width: 2.0, height: 2.0 },
            ],
            unit_canvas(10.0),
        );
        let p = Placement { coords: vec![[0.0, 0.0], [5.0, 5.0]] };
        assert_eq!(overlap_area_exact(&netlist, &p).unwrap(), 0.0);
    }

    #[test]
    fn offset_squares_overlap_by_hand_geometry() {
        let netlist = netlist_with(
            vec![
                Macro { id: 0, width: 4.0, height: 4.0 },
                Macro { id: 1, width: 4.0, height: 4.0 },
            ],
            unit_canvas(20.0),
        );
        let p = Placement { coords: vec![[0.0, 0.0], [2.0, 2.0]] };
        assert_eq!(overlap_area_exact(&netlist, &p).unwrap(), 4.0);
    }

    #[test]
    fn overlap_matches_the_sweep_oracle_on_random_instances() {
        for seed in 0..10u64 {
            let mut rng = derive_rng(seed, &[100]);
            let macros: Vec<Macro> = (0..10)
                .map(|i| Macro {
                    id: i,
                    width: 0.5 + 2.0 * uniform01(&mut rng),
                    height: 0.5 + 2.0 * uniform01(&mut rng),
                })
                .collect();
            let netlist = netlist_with(macros, unit_canvas(8.0));
            let coords =
                (0..10).map(|_| [6.0 * uniform01(&mut rng), 6.0 * uniform01(&mut rng)]).collect();
            let p = Placement { coords };
            let fast = overlap_area_exact(&netlist, &p).unwrap();
            let sweep = overlap_by_sweep(&netlist, &p);
            let denom = fast.abs().max(sweep.abs()).max(1e-12);
            assert!(
                (fast - sweep).abs() / denom < 1e-3,
                "seed {seed}: {fast} vs sweep {sweep}"
            );
        }
    }

    #[test]
    fn displacement_basics() {
        let a = Placement { coords: vec![[0.0, 0.0], [1.0, 1.0]] };
        assert_eq!(displacement(&a, &a).unwrap().0, 0.0);
        let b = Placement { coords: vec![[3.0, 4.0], [1.0, 1.0]] };
        let (total, per) = displacement(&a, &b).unwrap();
        assert_eq!(total, 7.0);
        assert_eq!(per, vec![7.0, 0.0]);
        let (sym, _) = displacement(&b, &a).unwrap();
        assert_eq!(sym, total);
        let short = Placement { coords: vec![[0.0, 0.0]] };
        assert!(displacement(&a, &short).is_err());
    }

    #[test]
    fn legal_input_is_a_fixed_point() {
        let netlist = netlist_with(
            vec![
                Macro { id: 0, width: 2.0, height: 3.0 },
                Macro { id: 1, width: 1.5, height: 1.0 },
            ],
            unit_canvas(10.0),
        );
        let p = Placement { coords: vec![[1.0, 1.0], [5.0, 5.0]] };
        let out = legalize(&netlist, &p).unwrap();
        assert_eq!(out.placement.coords, p.coords);
        assert_eq!(out.displacement_total, 0.0);
        assert_eq!(out.moved_count, 0);
    }

    #[test]
    fn coincident_squares_separate_cleanly() {
        let netlist = netlist_with(
            vec![
                Macro { id: 0, width: 2.0, height: 2.0 },
                Macro { id: 1, width: 2.0, height: 2.0 },
            ],
            unit_canvas(20.0),
        );
        let p = Placement { coords: vec![[9.0, 9.0], [9.0, 9.0]] };
        let out = legalize(&netlist, &p).unwrap();
        assert_eq!(overlap_area_exact(&netlist, &out.placement).unwrap(), 0.0);
        assert!(in_bounds(&netlist, &out.placement).unwrap());
        // One stays put, the other moves at least one side length in
        // Manhattan terms (any free position is >= 2 away on some axis).
        let moved: Vec<f64> = out.per_macro_displacement;
        assert_eq!(moved.iter().filter(|&&d| d == 0.0).count(), 1);
        assert!(moved.iter().any(|&d| d >= 2.0), "{moved:?}");
    }

    #[test]
    fn infeasible_area_is_rejected() {
        let netlist = netlist_with(
            vec![Macro { id: 0, width: 9.95, height: 9.95 }],
            unit_canvas(10.0),
        );
        let p = Placement { coords: vec![[0.0, 0.0]] };
        assert!(matches!(legalize(&netlist, &p), Err(CoreError::NonConvergence(_))));
    }

    #[test]
    fn oversized_macro_cannot_be_placed() {
        // Fits the area budget but exceeds the canvas in one dimension.
        let netlist = netlist_with(
            vec![Macro { id: 0, width: 12.0, height: 0.5 }],
            unit_canvas(10.0),
        );
        let p = Placement { coords: vec![[0.0, 0.0]] };
        assert!(matches!(legalize(&netlist, &p), Err(CoreError::NonConvergence(_))));
    }

    #[test]
    fn out_of_bounds_input_is_pulled_inside() {
        let netlist =
            netlist_with(vec![Macro { id: 0, width: 2.0, height: 2.0 }], unit_canvas(10.0));
        let p = Placement { coords: vec![[-5.0, 11.0]] };
        let out = legalize(&netlist, &p).unwrap();
        assert!(in_bounds(&netlist, &out.placement).unwrap());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let netlist =
            netlist_with(vec![Macro { id: 0, width: 2.0, height: 2.0 }], unit_canvas(10.0));
        let p = Placement { coords: vec![[f64::NAN, 0.0]] };
        assert!(matches!(legalize(&netlist, &p), Err(CoreError::NonFinite { .. })));
        assert!(matches!(overlap_area_exact(&netlist, &p), Err(CoreError::NonFinite { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Random loose instances always legalize to exact-zero overlap,
        /// fully in bounds, and legalization is idempotent.
        #[test]
        fn legalization_postconditions_hold(seed in 0u64..1_000_000) {
            let mut rng = derive_rng(seed, &[200]);
            let n = 3 + (seed % 6) as usize;
            let macros: Vec<Macro> = (0..n)
                .map(|i| Macro {
                    id: i,
                    width: 0.5 + 1.5 * uniform01(&mut rng),
                    height: 0.5 + 1.5 * uniform01(&mut rng),
                })
                .collect();
            let netlist = netlist_with(macros, unit_canvas(12.0));
            let coords = (0..n)
                .map(|_| [10.0 * uniform01(&mut rng), 10.0 * uniform01(&mut rng)])
                .collect();
            let p = Placement { coords };
            let out = legalize(&netlist, &p).unwrap();
            prop_assert_eq!(overlap_area_exact(&netlist, &out.placement).unwrap(), 0.0);
            prop_assert!(in_bounds(&netlist, &out.placement).unwrap());
            let again = legalize(&netlist, &out.placement).unwrap();
            prop_assert_eq!(again.placement.coords, out.placement.coords);
            prop_assert_eq!(again.displacement_total, 0.0);
            prop_assert_eq!(again.moved_count, 0);
        }

        /// Displacement agrees with an index-free recomputation and is
        /// symmetric.
        #[test]
        fn displacement_matches_recomputation(seed in 0u64..1_000_000) {
            let mut rng = derive_rng(seed, &[201]);
            let n = 1 + (seed % 8) as usize;
            let a: Vec<[f64; 2]> =
                (0..n).map(|_| [uniform01(&mut rng) * 9.0, uniform01(&mut rng) * 9.0]).collect();
            let b: Vec<[f64; 2]> =
                (0..n).map(|_| [uniform01(&mut rng) * 9.0, uniform01(&mut rng) * 9.0]).collect();
            let pa = Placement { coords: a.clone() };
            let pb = Placement { coords: b.clone() };
            let (total, per) = displacement(&pa, &pb).unwrap();
            let mut expect = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                expect += (x[0] - y[0]).abs() + (x[1] - y[1]).abs();
            }
            prop_assert!((total - expect).abs() < 1e-12);
            prop_assert_eq!(per.len(), n);
            let (sym, _) = displacement(&pb, &pa).unwrap();
            prop_assert_eq!(total, sym);
        }
    }
}
