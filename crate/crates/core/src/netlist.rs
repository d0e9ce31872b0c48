//! Circuit netlist model: movable macros, fixed I/O pads, optional standard
//! cells, and the nets connecting them.
//!
//! Owner ids share one dense space: movable macros occupy `0..M`, pads
//! `M..M+P`, standard cells `M+P..M+P+C`. Standard cells only survive until
//! [`filter_macro_connectivity`] runs; the placement engine itself never
//! places them.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Violation};

/// A rectangular block. Used for movable macros, zero-area pads, and
/// standard cells alike; which of those it is follows from the list it sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Macro {
    pub id: usize,
    pub width: f64,
    pub height: f64,
}

/// One pin of a net. `offset` is relative to the owner's center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub owner: usize,
    pub offset: [f64; 2],
}

/// A net: the set of pins it connects.
///
/// `total_degree` records the pin count before connectivity filtering removed
/// standard-cell pins; `None` means the net was never filtered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub id: usize,
    pub pins: Vec<Pin>,
    pub total_degree: Option<u32>,
}

impl Net {
    /// Pre-filter degree if recorded, otherwise the current pin count.
    pub fn declared_degree(&self) -> usize {
        self.total_degree.map(|d| d as usize).unwrap_or(self.pins.len())
    }
}

/// Placement region, bottom-left origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Canvas {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Bottom-left coordinates of every movable macro, indexed by macro id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub coords: Vec<[f64; 2]>,
}

impl Placement {
    pub fn zeros(n: usize) -> Self {
        Placement { coords: alloc::vec![[0.0, 0.0]; n] }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite())
    }
}

/// What kind of node an owner id refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwnerKind {
    Movable,
    Pad,
    Cell,
    Dangling,
}

/// Headline counts, as printed by netlist inspection tooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistStats {
    pub macros: usize,
    pub pads: usize,
    pub cells: usize,
    pub nets: usize,
    pub pins: usize,
}

/// A complete design: blocks, pads with fixed positions, nets, and the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    /// Movable macros, ids `0..macros.len()`.
    pub macros: Vec<Macro>,
    /// Fixed I/O pads, ids `macros.len()..macros.len()+pads.len()`.
    pub pads: Vec<Macro>,
    /// Bottom-left position of each pad, same order as `pads`.
    pub pad_positions: Vec<[f64; 2]>,
    /// Standard cells, ids above the pad range. Empty after filtering.
    #[serde(default)]
    pub cells: Vec<Macro>,
    pub nets: Vec<Net>,
    pub canvas: Canvas,
}

impl Netlist {
    pub fn num_movable(&self) -> usize {
        self.macros.len()
    }

    pub fn num_pads(&self) -> usize {
        self.pads.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_pins(&self) -> usize {
        self.nets.iter().map(|n| n.pins.len()).sum()
    }

    pub fn stats(&self) -> NetlistStats {
        NetlistStats {
            macros: self.num_movable(),
            pads: self.num_pads(),
            cells: self.num_cells(),
            nets: self.nets.len(),
            pins: self.total_pins(),
        }
    }

    pub fn owner_kind(&self, owner: usize) -> OwnerKind {
        let m = self.macros.len();
        let p = m + self.pads.len();
        let c = p + self.cells.len();
        if owner < m {
            OwnerKind::Movable
        } else if owner < p {
            OwnerKind::Pad
        } else if owner < c {
            OwnerKind::Cell
        } else {
            OwnerKind::Dangling
        }
    }

    /// Dimensions of any owner id (movable, pad, or cell).
    pub fn owner_dims(&self, owner: usize) -> Option<[f64; 2]> {
        let m = self.macros.len();
        let p = m + self.pads.len();
        match self.owner_kind(owner) {
            OwnerKind::Movable => {
                let mac = &self.macros[owner];
                Some([mac.width, mac.height])
            }
            OwnerKind::Pad => {
                let pad = &self.pads[owner - m];
                Some([pad.width, pad.height])
            }
            OwnerKind::Cell => {
                let cell = &self.cells[owner - p];
                Some([cell.width, cell.height])
            }
            OwnerKind::Dangling => None,
        }
    }

    /// Center of an owner under `placement`. Pads and cells sit at their fixed
    /// stored positions; cells have no stored position and return `None`.
    pub fn owner_center(&self, placement: &Placement, owner: usize) -> Option<[f64; 2]> {
        let m = self.macros.len();
        match self.owner_kind(owner) {
            OwnerKind::Movable => {
                let mac = &self.macros[owner];
                let bl = placement.coords[owner];
                Some([bl[0] + mac.width / 2.0, bl[1] + mac.height / 2.0])
            }
            OwnerKind::Pad => {
                let pad = &self.pads[owner - m];
                let bl = self.pad_positions[owner - m];
                Some([bl[0] + pad.width / 2.0, bl[1] + pad.height / 2.0])
            }
            _ => None,
        }
    }

    /// Total movable macro area.
    pub fn movable_area(&self) -> f64 {
        self.macros.iter().map(|m| m.width * m.height).sum()
    }

    /// Structural validation. Collects every violation rather than stopping at
    /// the first, so callers can report the full picture.
    pub fn validate(&self) -> Result<(), CoreError> {
        let mut v = Vec::new();

        for (i, m) in self.macros.iter().enumerate() {
            if m.id != i {
                v.push(Violation::NonDenseIds { what: "macro" });
                break;
            }
        }
        for (i, n) in self.nets.iter().enumerate() {
            if n.id != i {
                v.push(Violation::NonDenseIds { what: "net" });
                break;
            }
        }

        if self.pads.len() != self.pad_positions.len() {
            v.push(Violation::PadPositionCount {
                pads: self.pads.len(),
                positions: self.pad_positions.len(),
            });
        }

        if !(self.canvas.width > 0.0 && self.canvas.height > 0.0) {
            v.push(Violation::DegenerateCanvas {
                width: self.canvas.width,
                height: self.canvas.height,
            });
        }
        if !self.canvas.origin[0].is_finite()
            || !self.canvas.origin[1].is_finite()
            || !self.canvas.width.is_finite()
            || !self.canvas.height.is_finite()
        {
            v.push(Violation::NonFiniteValue { what: "canvas", id: 0 });
        }

        for m in &self.macros {
            if !(m.width > 0.0 && m.height > 0.0) {
                v.push(Violation::NonPositiveMacroDims {
                    id: m.id,
                    width: m.width,
                    height: m.height,
                });
            }
            if !m.width.is_finite() || !m.height.is_finite() {
                v.push(Violation::NonFiniteValue { what: "macro dims", id: m.id });
            }
        }
        for p in &self.pads {
            if p.width != 0.0 || p.height != 0.0 {
                v.push(Violation::NonZeroPadDims { id: p.id, width: p.width, height: p.height });
            }
        }
        for (i, pos) in self.pad_positions.iter().enumerate() {
            if !pos[0].is_finite() || !pos[1].is_finite() {
                v.push(Violation::NonFiniteValue {
                    what: "pad position",
                    id: self.macros.len() + i,
                });
            }
        }

        for n in &self.nets {
            if n.pins.is_empty() {
                v.push(Violation::EmptyNet { net: n.id });
            }
            for pin in &n.pins {
                if self.owner_kind(pin.owner) == OwnerKind::Dangling {
                    v.push(Violation::DanglingPinOwner { net: n.id, owner: pin.owner });
                }
                if !pin.offset[0].is_finite() || !pin.offset[1].is_finite() {
                    v.push(Violation::NonFiniteValue { what: "pin offset", id: n.id });
                }
            }
            if let Some(d) = n.total_degree {
                if (d as usize) < n.pins.len() {
                    v.push(Violation::DegreeBelowPinCount {
                        net: n.id,
                        declared: d,
                        pins: n.pins.len(),
                    });
                }
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidNetlist(v))
        }
    }

    /// Number of pins owned by standard cells (or dangling ids).
    pub fn cell_pin_count(&self) -> usize {
        self.nets
            .iter()
            .flat_map(|n| n.pins.iter())
            .filter(|p| {
                matches!(self.owner_kind(p.owner), OwnerKind::Cell | OwnerKind::Dangling)
            })
            .count()
    }
}

/// Reduce a netlist to its macro-connectivity skeleton.
///
/// Keeps exactly the nets touching at least one macro or pad, strips
/// standard-cell pins from those nets, and drops the standard cells. The
/// pre-filter pin count of each retained net is recorded in `total_degree`
/// (first filter only; re-filtering preserves the original record, which makes
/// the operation idempotent). Net ids are re-densified; macro and pad ids are
/// untouched because cells occupy the top of the id space.
pub fn filter_macro_connectivity(netlist: &Netlist) -> Netlist {
    let placeable = netlist.macros.len() + netlist.pads.len();
    let mut nets = Vec::new();
    for net in &netlist.nets {
        let touches_placeable = net.pins.iter().any(|p| p.owner < placeable);
        if !touches_placeable {
            continue;
        }
        let kept: Vec<Pin> =
            net.pins.iter().filter(|p| p.owner < placeable).cloned().collect();
        let total = net.total_degree.unwrap_or(net.pins.len() as u32);
        nets.push(Net { id: nets.len(), pins: kept, total_degree: Some(total) });
    }
    Netlist {
        macros: netlist.macros.clone(),
        pads: netlist.pads.clone(),
        pad_positions: netlist.pad_positions.clone(),
        cells: Vec::new(),
        nets,
        canvas: netlist.canvas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn toy_netlist() -> Netlist {
        // Two macros, one pad, one cell; three nets exercising every retention case.
        Netlist {
            macros: vec![
                Macro { id: 0, width: 2.0, height: 2.0 },
                Macro { id: 1, width: 1.0, height: 3.0 },
            ],
            pads: vec![Macro { id: 2, width: 0.0, height: 0.0 }],
            pad_positions: vec![[10.0, 10.0]],
            cells: vec![Macro { id: 3, width: 0.1, height: 0.1 }],
            nets: vec![
                Net {
                    id: 0,
                    pins: vec![
                        Pin { owner: 0, offset: [0.0, 0.0] },
                        Pin { owner: 1, offset: [0.1, -0.1] },
                        Pin { owner: 3, offset: [0.0, 0.0] },
                    ],
                    total_degree: None,
                },
                Net {
                    id: 1,
                    pins: vec![
                        Pin { owner: 2, offset: [0.0, 0.0] },
                        Pin { owner: 3, offset: [0.0, 0.0] },
                    ],
                    total_degree: None,
                },
                Net {
                    id: 2,
                    pins: vec![Pin { owner: 3, offset: [0.0, 0.0] }],
                    total_degree: None,
                },
            ],
            canvas: Canvas { origin: [0.0, 0.0], width: 20.0, height: 20.0 },
        }
    }

    #[test]
    fn toy_netlist_is_valid() {
        toy_netlist().validate().unwrap();
    }

    #[test]
    fn validate_reports_all_violations() {
        let mut n = toy_netlist();
        n.macros[0].width = -1.0;
        n.pads[0].width = 5.0;
        n.nets[0].pins[0].owner = 99;
        n.nets.push(Net { id: 3, pins: vec![], total_degree: None });
        let err = n.validate().unwrap_err();
        match err {
            CoreError::InvalidNetlist(vs) => {
                assert!(vs.iter().any(|v| matches!(v, Violation::NonPositiveMacroDims { id: 0, .. })));
                assert!(vs.iter().any(|v| matches!(v, Violation::NonZeroPadDims { id: 2, .. })));
                assert!(vs.iter().any(|v| matches!(v, Violation::DanglingPinOwner { net: 0, owner: 99 })));
                assert!(vs.iter().any(|v| matches!(v, Violation::EmptyNet { net: 3 })));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_degenerate_canvas() {
        let mut n = toy_netlist();
        n.canvas.width = 0.0;
        assert!(n.validate().is_err());
    }

    #[test]
    fn validate_rejects_non_dense_ids() {
        let mut n = toy_netlist();
        n.macros[1].id = 5;
        let err = n.validate().unwrap_err();
        match err {
            CoreError::InvalidNetlist(vs) => {
                assert!(vs.iter().any(|v| matches!(v, Violation::NonDenseIds { what: "macro" })));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn filter_keeps_placeable_nets_and_strips_cell_pins() {
        let n = toy_netlist();
        let f = filter_macro_connectivity(&n);
        // Net 2 touched only the cell and is gone; nets 0 and 1 survive.
        assert_eq!(f.nets.len(), 2);
        assert_eq!(f.cells.len(), 0);
        assert_eq!(f.macros, n.macros);
        assert_eq!(f.pads, n.pads);
        // Net ids re-densified, cell pins removed, pre-filter degree recorded.
        assert_eq!(f.nets[0].id, 0);
        assert_eq!(f.nets[0].pins.len(), 2);
        assert_eq!(f.nets[0].total_degree, Some(3));
        assert_eq!(f.nets[1].pins.len(), 1);
        assert_eq!(f.nets[1].total_degree, Some(2));
        f.validate().unwrap();
    }

    #[test]
    fn filter_is_idempotent() {
        let once = filter_macro_connectivity(&toy_netlist());
        let twice = filter_macro_connectivity(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn filter_on_macro_only_netlist_is_identity_except_degree() {
        let mut n = toy_netlist();
        n.cells.clear();
        n.nets = vec![Net {
            id: 0,
            pins: vec![
                Pin { owner: 0, offset: [0.0, 0.0] },
                Pin { owner: 1, offset: [0.0, 0.0] },
            ],
            total_degree: None,
        }];
        let f = filter_macro_connectivity(&n);
        assert_eq!(f.nets[0].pins, n.nets[0].pins);
        assert_eq!(f.nets[0].total_degree, Some(2));
    }

    #[test]
    fn owner_center_accounts_for_dims() {
        let n = toy_netlist();
        let p = Placement { coords: vec![[1.0, 1.0], [4.0, 0.0]] };
        assert_eq!(n.owner_center(&p, 0), Some([2.0, 2.0]));
        assert_eq!(n.owner_center(&p, 1), Some([4.5, 1.5]));
        assert_eq!(n.owner_center(&p, 2), Some([10.0, 10.0]));
        assert_eq!(n.owner_center(&p, 3), None);
    }

    #[test]
    fn stats_counts_everything() {
        let s = toy_netlist().stats();
        assert_eq!(
            s,
            NetlistStats { macros: 2, pads: 1, cells: 1, nets: 3, pins: 6 }
        );
    }
}
