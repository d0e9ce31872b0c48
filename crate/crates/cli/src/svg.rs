//! Deterministic SVG 1.1 renderer for placements.
//!
//! The output is a pure function of the netlist, the placement, and the
//! options: no timestamps, no randomness, fixed float formatting, fixed
//! iteration order. Rendering the same inputs twice yields byte-identical
//! files, so snapshots are diffable in tests and reviews.
//!
//! Anatomy of the picture, back to front:
//!   1. the canvas outline,
//!   2. movable macros, filled by area quartile (light = small, dark = large),
//!   3. pads as small fixed-size markers,
//!   4. optional fly-lines: the K largest-HPWL nets drawn as centroid-to-pin
//!      stars, one `<g class="net">` per net,
//!   5. optional overlap highlights: one `class="overlap"` rectangle per
//!      overlapping macro pair, covering exactly the intersection,
//!   6. a text legend with exact HPWL, overlap area, config hash, and seed.
//!
//! All world coordinates are mapped to screen space in Rust (bottom-left
//! world origin, y up → SVG y down), so stroke widths and font sizes stay in
//! screen units and no SVG transforms are needed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use diffplace_core::netlist::{Netlist, OwnerKind, Placement};
use diffplace_core::objectives::{hpwl_exact, per_net_hpwl};

use crate::error::CliError;

/// Hard cap on fly-lines, regardless of what was requested: beyond this the
/// picture is unreadable on dense designs.
pub const MAX_FLY_LINES: usize = 200;

/// Side length of the square drawing area in pixels (the canvas is fitted
/// inside, preserving aspect ratio).
const DRAW_PX: f64 = 760.0;
const MARGIN_PX: f64 = 20.0;
const LEGEND_LINE_PX: f64 = 16.0;
const LEGEND_LINES: usize = 3;
const PAD_MARKER_PX: f64 = 5.0;

/// Quartile fills, smallest-area quartile first.
const QUARTILE_FILLS: [&str; 4] = ["#c6dbef", "#9ecae1", "#6baed6", "#3182bd"];

/// Rendering options. The config hash and seed are embedded in the output so
/// every picture can be traced back to the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    /// Number of fly-line nets requested; clamped to [`MAX_FLY_LINES`] and to
    /// the net count. Zero disables fly-lines.
    pub fly_lines: usize,
    /// Stroke each overlapping macro pair's intersection in a distinct class.
    pub highlight_overlaps: bool,
    pub config_hash: String,
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            fly_lines: 0,
            highlight_overlaps: false,
            config_hash: String::new(),
            seed: 0,
        }
    }
}

/// The rendered document plus the counts a caller may want to report.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderInfo {
    pub svg: String,
    /// Number of overlapping macro pairs highlighted (0 when highlighting is
    /// off). Equals the brute-force pair count by construction.
    pub highlighted_pairs: usize,
    /// Number of nets actually drawn as fly-lines after clamping.
    pub fly_lines_drawn: usize,
}

/// World→screen mapping: uniform scale, y axis flipped.
struct Frame {
    scale: f64,
    origin: [f64; 2],
    top: f64,
}

impl Frame {
    fn x(&self, wx: f64) -> f64 {
        MARGIN_PX + (wx - self.origin[0]) * self.scale
    }
    fn y(&self, wy: f64) -> f64 {
        MARGIN_PX + (self.top - wy) * self.scale
    }
    fn len(&self, w: f64) -> f64 {
        w * self.scale
    }
}

fn f3(v: f64) -> String {
    // Normalize negative zero so formatting is a pure function of value.
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.3}")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Area quartile (0..=3) of every movable macro: rank macros by (area, id)
/// ascending and cut the ranking into four equal parts.
fn area_quartiles(netlist: &Netlist) -> Vec<usize> {
    let n = netlist.macros.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let aa = netlist.macros[a].width * netlist.macros[a].height;
        let ab = netlist.macros[b].width * netlist.macros[b].height;
        aa.partial_cmp(&ab).unwrap().then(a.cmp(&b))
    });
    let mut quart = vec![0usize; n];
    for (rank, &id) in order.iter().enumerate() {
        quart[id] = (rank * 4 / n).min(3);
    }
    quart
}

/// All strictly overlapping movable pairs `(i, j)` with `i < j`, together
/// with the intersection rectangle `[x, y, w, h]` (world coordinates).
fn overlapping_pairs(netlist: &Netlist, placement: &Placement) -> Vec<(usize, usize, [f64; 4])> {
    let mut out = Vec::new();
    let n = netlist.macros.len();
    for i in 0..n {
        let (pi, mi) = (placement.coords[i], &netlist.macros[i]);
        for j in (i + 1)..n {
            let (pj, mj) = (placement.coords[j], &netlist.macros[j]);
            let x0 = pi[0].max(pj[0]);
            let y0 = pi[1].max(pj[1]);
            let x1 = (pi[0] + mi.width).min(pj[0] + mj.width);
            let y1 = (pi[1] + mi.height).min(pj[1] + mj.height);
            if x1 > x0 && y1 > y0 {
                out.push((i, j, [x0, y0, x1 - x0, y1 - y0]));
            }
        }
    }
    out
}

/// Nets to draw as fly-lines: ids of the `k` largest nets by exact HPWL,
/// descending, ties broken by ascending net id.
fn fly_line_nets(net_hpwl: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..net_hpwl.len()).collect();
    order.sort_by(|&a, &b| {
        net_hpwl[b].partial_cmp(&net_hpwl[a]).unwrap().then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Render `placement` to an SVG document. Byte output is deterministic in
/// the inputs and options.
pub fn render_svg(
    netlist: &Netlist,
    placement: &Placement,
    options: &RenderOptions,
) -> Result<RenderInfo, CliError> {
    netlist.validate()?;
    if placement.coords.len() != netlist.num_movable() {
        return Err(CliError::Data(format!(
            "render: placement has {} coordinates for {} movable macros",
            placement.coords.len(),
            netlist.num_movable()
        )));
    }
    if !placement.is_finite() {
        return Err(CliError::Data(
            "render: placement contains non-finite coordinates".to_string(),
        ));
    }

    let canvas = netlist.canvas;
    let frame = Frame {
        scale: DRAW_PX / canvas.width.max(canvas.height),
        origin: canvas.origin,
        top: canvas.origin[1] + canvas.height,
    };
    let canvas_px = [frame.len(canvas.width), frame.len(canvas.height)];
    let legend_px = LEGEND_LINES as f64 * LEGEND_LINE_PX + 8.0;
    let img_w = 2.0 * MARGIN_PX + canvas_px[0];
    let img_h = 2.0 * MARGIN_PX + canvas_px[1] + legend_px;

    let hpwl_per_net = per_net_hpwl(netlist, placement)?;
    let hpwl: f64 = hpwl_per_net.iter().sum();
    let pairs = overlapping_pairs(netlist, placement);
    let overlap_area: f64 = pairs.iter().map(|p| p.2[2] * p.2[3]).sum();
    let quartiles = area_quartiles(netlist);

    let k = options.fly_lines.min(MAX_FLY_LINES).min(netlist.nets.len());
    let fly_nets = fly_line_nets(&hpwl_per_net, k);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = f3(img_w),
        h = f3(img_h)
    );
    let _ = write!(
        s,
        "<desc>config {} seed {}</desc>\n",
        xml_escape(&options.config_hash),
        options.seed
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    // Canvas outline.
    let _ = write!(
        s,
        "<rect class=\"canvas\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
         fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\"/>\n",
        f3(frame.x(canvas.origin[0])),
        f3(frame.y(frame.top)),
        f3(canvas_px[0]),
        f3(canvas_px[1])
    );

    // Movable macros, filled by area quartile.
    for (i, m) in netlist.macros.iter().enumerate() {
        let bl = placement.coords[i];
        let _ = write!(
            s,
            "<rect class=\"macro q{q}\" x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" \
             fill=\"{fill}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            q = quartiles[i],
            x = f3(frame.x(bl[0])),
            y = f3(frame.y(bl[1] + m.height)),
            w = f3(frame.len(m.width)),
            h = f3(frame.len(m.height)),
            fill = QUARTILE_FILLS[quartiles[i]]
        );
    }

    // Pads: fixed-size markers centered at the pad anchor.
    for pos in netlist.pad_positions.iter() {
        let _ = write!(
            s,
            "<rect class=\"pad\" x=\"{x}\" y=\"{y}\" width=\"{d}\" height=\"{d}\" \
             fill=\"#d62728\"/>\n",
            x = f3(frame.x(pos[0]) - PAD_MARKER_PX / 2.0),
            y = f3(frame.y(pos[1]) - PAD_MARKER_PX / 2.0),
            d = f3(PAD_MARKER_PX)
        );
    }

    // Fly-lines: one group per selected net, centroid-to-pin star.
    for &net_id in &fly_nets {
        let net = &netlist.nets[net_id];
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(net.pins.len());
        for pin in &net.pins {
            match netlist.owner_kind(pin.owner) {
                OwnerKind::Movable | OwnerKind::Pad => {
                    let c = netlist.owner_center(placement, pin.owner).unwrap();
                    pts.push([c[0] + pin.offset[0], c[1] + pin.offset[1]]);
                }
                _ => {}
            }
        }
        if pts.len() < 2 {
            continue;
        }
        let inv = 1.0 / pts.len() as f64;
        let cx: f64 = pts.iter().map(|p| p[0]).sum::<f64>() * inv;
        let cy: f64 = pts.iter().map(|p| p[1]).sum::<f64>() * inv;
        let _ = write!(s, "<g class=\"net\" stroke=\"#555555\" stroke-width=\"0.6\" stroke-opacity=\"0.5\">\n");
        for p in &pts {
            let _ = write!(
                s,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>\n",
                f3(frame.x(cx)),
                f3(frame.y(cy)),
                f3(frame.x(p[0])),
                f3(frame.y(p[1]))
            );
        }
        s.push_str("</g>\n");
    }

    // Overlap highlights: the intersection rectangle of each overlapping pair.
    let highlighted_pairs = if options.highlight_overlaps {
        for (_, _, r) in &pairs {
            let _ = write!(
                s,
                "<rect class=\"overlap\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
                 fill=\"#d62728\" fill-opacity=\"0.35\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n",
                f3(frame.x(r[0])),
                f3(frame.y(r[1] + r[3])),
                f3(frame.len(r[2])),
                f3(frame.len(r[3]))
            );
        }
        pairs.len()
    } else {
        0
    };

    // Legend.
    let ty = MARGIN_PX + canvas_px[1] + MARGIN_PX / 2.0;
    let legend = [
        format!("HPWL {:.6e}  overlap {:.6e}", hpwl, overlap_area),
        format!(
            "config {}  seed {}",
            xml_escape(&options.config_hash),
            options.seed
        ),
        format!(
            "macros {}  pads {}  nets {}  fly-lines {}  overlap pairs {}",
            netlist.num_movable(),
            netlist.num_pads(),
            netlist.nets.len(),
            fly_nets.len(),
            pairs.len()
        ),
    ];
    for (i, line) in legend.iter().enumerate() {
        let _ = write!(
            s,
            "<text class=\"legend\" x=\"{}\" y=\"{}\" font-family=\"monospace\" \
             font-size=\"12\">{}</text>\n",
            f3(MARGIN_PX),
            f3(ty + (i + 1) as f64 * LEGEND_LINE_PX),
            line
        );
    }

    s.push_str("</svg>\n");

    // Cross-check the HPWL shown in the legend against the one-shot total.
    debug_assert_eq!(hpwl, hpwl_exact(netlist, placement)?);

    Ok(RenderInfo { svg: s, highlighted_pairs, fly_lines_drawn: fly_nets.len() })
}

/// Render and write to `path`.
pub fn write_svg(
    netlist: &Netlist,
    placement: &Placement,
    options: &RenderOptions,
    path: &Path,
) -> Result<RenderInfo, CliError> {
    let info = render_svg(netlist, placement, options)?;
    fs::write(path, info.svg.as_bytes()).map_err(|e| CliError::from_io(path, e))?;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffplace_core::netlist::{Canvas, Macro, Net, Pin};
    use proptest::prelude::*;

    fn simple_netlist(macros: &[(f64, f64)], canvas: f64) -> Netlist {
        Netlist {
            macros: macros
                .iter()
                .enumerate()
                .map(|(id, &(w, h))| Macro { id, width: w, height: h })
                .collect(),
            pads: vec![],
            pad_positions: vec![],
            cells: vec![],
            nets: vec![],
            canvas: Canvas { origin: [0.0, 0.0], width: canvas, height: canvas },
        }
    }

    #[test]
    fn single_macro_draws_one_rect_inside_the_frame() {
        let nl = simple_netlist(&[(10.0, 10.0)], 100.0);
        let pl = Placement { coords: vec![[0.0, 0.0]] };
        let opts = RenderOptions { config_hash: "deadbeef00112233".into(), seed: 7, ..Default::default() };
        let info = render_svg(&nl, &pl, &opts).unwrap();
        assert_eq!(info.svg.matches("class=\"macro").count(), 1);
        assert_eq!(info.svg.matches("class=\"canvas\"").count(), 1);
        assert!(info.svg.contains("deadbeef00112233"));
        assert!(info.svg.contains("seed 7"));
        assert!(info.svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\""));
        // Macro at world (0,0): bottom-left of the canvas, i.e. screen y =
        // margin + (canvas - height) * scale.
        assert!(info.svg.contains("<rect class=\"macro q0\" x=\"20.000\" y=\"704.000\" width=\"76.000\" height=\"76.000\""));
        assert_eq!(info.highlighted_pairs, 0);
        assert_eq!(info.fly_lines_drawn, 0);
    }

    #[test]
    fn same_inputs_render_byte_identical_files() {
        let mut nl = simple_netlist(&[(10.0, 4.0), (6.0, 12.0), (8.0, 8.0)], 50.0);
        nl.pads = vec![Macro { id: 3, width: 0.0, height: 0.0 }];
        nl.pad_positions = vec![[0.0, 25.0]];
        nl.nets = vec![
            Net { id: 0, pins: vec![Pin { owner: 0, offset: [0.0, 0.0] }, Pin { owner: 3, offset: [0.0, 0.0] }], total_degree: None },
            Net { id: 1, pins: vec![Pin { owner: 1, offset: [1.0, -1.0] }, Pin { owner: 2, offset: [0.0, 0.0] }], total_degree: None },
        ];
        let pl = Placement { coords: vec![[1.0, 2.0], [20.0, 30.0], [18.5, 29.0]] };
        let opts = RenderOptions { fly_lines: 10, highlight_overlaps: true, config_hash: "abc".into(), seed: 3 };
        let a = render_svg(&nl, &pl, &opts).unwrap();
        let b = render_svg(&nl, &pl, &opts).unwrap();
        assert_eq!(a.svg.as_bytes(), b.svg.as_bytes());

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.svg");
        let p2 = dir.path().join("b.svg");
        write_svg(&nl, &pl, &opts, &p1).unwrap();
        write_svg(&nl, &pl, &opts, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn fly_line_count_is_clamped_and_ordered_by_hpwl() {
        let mut nl = simple_netlist(&[(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)], 100.0);
        // Three 2-pin nets with distinct HPWLs.
        nl.nets = (0..3)
            .map(|id| Net {
                id,
                pins: vec![
                    Pin { owner: id, offset: [0.0, 0.0] },
                    Pin { owner: (id + 1) % 3, offset: [0.0, 0.0] },
                ],
                total_degree: None,
            })
            .collect();
        let pl = Placement { coords: vec![[0.0, 0.0], [10.0, 0.0], [50.0, 50.0]] };
        let opts = RenderOptions { fly_lines: 9999, config_hash: String::new(), seed: 0, ..Default::default() };
        let info = render_svg(&nl, &pl, &opts).unwrap();
        assert_eq!(info.fly_lines_drawn, 3);
        assert_eq!(info.svg.matches("<g class=\"net\"").count(), 3);

        let one = RenderOptions { fly_lines: 1, ..opts.clone() };
        let info1 = render_svg(&nl, &pl, &one).unwrap();
        assert_eq!(info1.fly_lines_drawn, 1);
        assert_eq!(info1.svg.matches("<g class=\"net\"").count(), 1);
    }

    #[test]
    fn requested_fly_lines_above_the_cap_are_limited() {
        let mut nl = simple_netlist(&[(1.0, 1.0), (1.0, 1.0)], 1000.0);
        nl.nets = (0..300)
            .map(|id| Net {
                id,
                pins: vec![
                    Pin { owner: 0, offset: [0.0, 0.0] },
                    Pin { owner: 1, offset: [0.0, 0.0] },
                ],
                total_degree: None,
            })
            .collect();
        let pl = Placement { coords: vec![[0.0, 0.0], [500.0, 400.0]] };
        let opts = RenderOptions { fly_lines: usize::MAX, ..Default::default() };
        let info = render_svg(&nl, &pl, &opts).unwrap();
        assert_eq!(info.fly_lines_drawn, MAX_FLY_LINES);
    }

    #[test]
    fn non_finite_or_misshapen_placements_are_rejected() {
        let nl = simple_netlist(&[(10.0, 10.0)], 100.0);
        let bad = Placement { coords: vec![[f64::NAN, 0.0]] };
        assert!(render_svg(&nl, &bad, &RenderOptions::default()).is_err());
        let short = Placement { coords: vec![] };
        assert!(render_svg(&nl, &short, &RenderOptions::default()).is_err());
    }

    /// Independent O(n^2) overlap-pair oracle.
    fn brute_force_pairs(sizes: &[(f64, f64)], coords: &[[f64; 2]]) -> usize {
        let mut count = 0;
        for i in 0..sizes.len() {
            for j in (i + 1)..sizes.len() {
                let dx = (coords[i][0] + sizes[i].0).min(coords[j][0] + sizes[j].0)
                    - coords[i][0].max(coords[j][0]);
                let dy = (coords[i][1] + sizes[i].1).min(coords[j][1] + sizes[j].1)
                    - coords[i][1].max(coords[j][1]);
                if dx > 0.0 && dy > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    proptest! {
        #[test]
        fn highlighted_pair_count_matches_brute_force(
            xs in proptest::collection::vec((0.0f64..80.0, 0.0f64..80.0), 8),
        ) {
            let sizes: Vec<(f64, f64)> = (0..8).map(|i| (4.0 + i as f64, 6.0)).collect();
            let nl = simple_netlist(&sizes, 100.0);
            let pl = Placement { coords: xs.iter().map(|&(x, y)| [x, y]).collect() };
            let opts = RenderOptions { highlight_overlaps: true, ..Default::default() };
            let info = render_svg(&nl, &pl, &opts).unwrap();
            let oracle = brute_force_pairs(&sizes, &pl.coords);
            prop_assert_eq!(info.highlighted_pairs, oracle);
            prop_assert_eq!(info.svg.matches("class=\"overlap\"").count(), oracle);
        }
    }
}
