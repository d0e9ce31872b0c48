//! Coordinate normalization and the heterogeneous circuit graph consumed by
//! the denoiser.
//!
//! The graph has two node families: placeable nodes (movable macros followed
//! by fixed pads) and nets. Every pin becomes one edge between its net and
//! its owner, carrying the pin offset as an edge feature. Static features
//! (sizes, degrees, edges) are built once; positions, per-net HPWL, and the
//! timestep are dynamic and cheap to refresh between sampling steps.

use alloc::vec::Vec;

use crate::error::CoreError;
use crate::netlist::{Canvas, Netlist, Placement};
use crate::objectives::per_net_hpwl;

/// Affine map between canvas coordinates and the centered unit frame
/// `[-1, 1]^2`. Each axis is scaled independently.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoordFrame {
    /// Canvas center; maps to the origin.
    pub center: [f64; 2],
    /// Multiplicative factor per axis, `2 / extent`.
    pub scale: [f64; 2],
}

impl CoordFrame {
    pub fn from_canvas(canvas: &Canvas) -> Result<Self, CoreError> {
        if !(canvas.width > 0.0 && canvas.height > 0.0)
            || !canvas.width.is_finite()
            || !canvas.height.is_finite()
        {
            return Err(CoreError::DegenerateCanvas {
                width: canvas.width,
                height: canvas.height,
            });
        }
        Ok(CoordFrame {
            center: [
                canvas.origin[0] + canvas.width / 2.0,
                canvas.origin[1] + canvas.height / 2.0,
            ],
            scale: [2.0 / canvas.width, 2.0 / canvas.height],
        })
    }

    /// Canvas point to normalized point.
    pub fn normalize_point(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.center[0]) * self.scale[0], (p[1] - self.center[1]) * self.scale[1]]
    }

    /// Normalized point back to canvas coordinates.
    pub fn denormalize_point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.scale[0] + self.center[0], p[1] / self.scale[1] + self.center[1]]
    }

    /// Scale a displacement or extent (no translation part).
    pub fn normalize_disp(&self, d: [f64; 2]) -> [f64; 2] {
        [d[0] * self.scale[0], d[1] * self.scale[1]]
    }

    pub fn denormalize_disp(&self, d: [f64; 2]) -> [f64; 2] {
        [d[0] / self.scale[0], d[1] / self.scale[1]]
    }

    pub fn normalize_placement(&self, p: &Placement) -> Placement {
        Placement { coords: p.coords.iter().map(|&c| self.normalize_point(c)).collect() }
    }

    pub fn denormalize_placement(&self, p: &Placement) -> Placement {
        Placement { coords: p.coords.iter().map(|&c| self.denormalize_point(c)).collect() }
    }
}

/// Rewrite a netlist into the centered unit frame: canvas becomes
/// `[-1,1]^2`, macro dimensions, pad positions, and pin offsets scale along.
pub fn normalize_netlist(netlist: &Netlist) -> Result<(Netlist, CoordFrame), CoreError> {
    let frame = CoordFrame::from_canvas(&netlist.canvas)?;
    let scale_macro = |m: &crate::netlist::Macro| crate::netlist::Macro {
        id: m.id,
        width: m.width * frame.scale[0],
        height: m.height * frame.scale[1],
    };
    let mut nets = netlist.nets.clone();
    for net in &mut nets {
        for pin in &mut net.pins {
            pin.offset = frame.normalize_disp(pin.offset);
        }
    }
    Ok((
        Netlist {
            macros: netlist.macros.iter().map(&scale_macro).collect(),
            pads: netlist.pads.iter().map(&scale_macro).collect(),
            pad_positions: netlist
                .pad_positions
                .iter()
                .map(|&p| frame.normalize_point(p))
                .collect(),
            cells: netlist.cells.iter().map(&scale_macro).collect(),
            nets,
            canvas: Canvas { origin: [-1.0, -1.0], width: 2.0, height: 2.0 },
        },
        frame,
    ))
}

/// One pin edge: net node `net` connects to placeable node `node`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub net: usize,
    pub node: usize,
    pub offset: [f64; 2],
}

/// Heterogeneous circuit graph.
///
/// Placeable node `i < num_movable` is movable macro `i`; nodes from
/// `num_movable` on are pads in netlist order. `pos` holds bottom-left
/// coordinates for every placeable node; the pad entries never change.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    pub num_movable: usize,
    /// Width/height per placeable node.
    pub size: Vec<[f64; 2]>,
    /// Bottom-left position per placeable node (dynamic for movables).
    pub pos: Vec<[f64; 2]>,
    /// Per net: (retained pin count, declared pre-filter degree).
    pub net_degree: Vec<[f64; 2]>,
    /// Per net: exact HPWL under the current positions (dynamic).
    pub net_hpwl: Vec<f64>,
    /// One edge per pin, net-major order.
    pub edges: Vec<GraphEdge>,
    /// Canvas width/height of the frame the graph was built in.
    pub global: [f64; 2],
    /// Diffusion timestep the positions correspond to (dynamic).
    pub timestep: usize,
}

impl HeteroGraph {
    pub fn num_nets(&self) -> usize {
        self.net_degree.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.size.len()
    }

    /// Movable-macro rows of `pos`, as a placement.
    pub fn movable_placement(&self) -> Placement {
        Placement { coords: self.pos[..self.num_movable].to_vec() }
    }
}

fn check_graph_inputs(netlist: &Netlist, placement: &Placement) -> Result<(), CoreError> {
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

/// Build the full graph for one placement state at timestep `t`.
pub fn build_graph(
    netlist: &Netlist,
    placement: &Placement,
    t: usize,
) -> Result<HeteroGraph, CoreError> {
    check_graph_inputs(netlist, placement)?;
    let m = netlist.num_movable();
    let mut size = Vec::with_capacity(m + netlist.num_pads());
    let mut pos = Vec::with_capacity(m + netlist.num_pads());
    for mac in &netlist.macros {
        size.push([mac.width, mac.height]);
        pos.push(placement.coords[mac.id]);
    }
    for (pad, &pp) in netlist.pads.iter().zip(netlist.pad_positions.iter()) {
        size.push([pad.width, pad.height]);
        pos.push(pp);
    }
    let net_degree = netlist
        .nets
        .iter()
        .map(|n| [n.pins.len() as f64, n.declared_degree() as f64])
        .collect();
    let net_hpwl = per_net_hpwl(netlist, placement)?;
    let mut edges = Vec::with_capacity(netlist.total_pins());
    for net in &netlist.nets {
        for pin in &net.pins {
            edges.push(GraphEdge { net: net.id, node: pin.owner, offset: pin.offset });
        }
    }
    Ok(HeteroGraph {
        num_movable: m,
        size,
        pos,
        net_degree,
        net_hpwl,
        edges,
        global: [netlist.canvas.width, netlist.canvas.height],
        timestep: t,
    })
}

/// Refresh the dynamic fields (positions, per-net HPWL, timestep) in place.
/// The result is identical to rebuilding the graph from scratch.
pub fn update_dynamic(
    graph: &mut HeteroGraph,
    netlist: &Netlist,
    placement: &Placement,
    t: usize,
) -> Result<(), CoreError> {
    check_graph_inputs(netlist, placement)?;
    if graph.num_movable != netlist.num_movable() || graph.num_nets() != netlist.nets.len() {
        return Err(CoreError::ShapeMismatch {
            expected: graph.num_movable,
            got: netlist.num_movable(),
            what: "graph/netlist pairing",
        });
    }
    for (i, &c) in placement.coords.iter().enumerate() {
        graph.pos[i] = c;
    }
    graph.net_hpwl = per_net_hpwl(netlist, placement)?;
    graph.timestep = t;
    Ok(())
}
