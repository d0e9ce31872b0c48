//! Bookshelf placement-benchmark reader and writer.
//!
//! Handles the .aux/.nodes/.nets/.pl/.scl text family used by the academic
//! placement benchmarks. All parsers are whitespace-tolerant, treat lines
//! whose first non-blank character is `#` as comments, skip `UCLA` banner
//! lines, and return structured errors — never panics — on arbitrary input.
//!
//! Conventions applied while assembling a design:
//! - terminal nodes become zero-size pads anchored at the center of their
//!   declared rectangle, and their pin offsets are forced to zero;
//! - non-terminal nodes are movable macros, unless a .scl file is present
//!   and the node is no taller than the tallest row, in which case it is a
//!   standard cell (kept only until connectivity filtering);
//! - pin offsets are center-relative displacements, both on disk and in
//!   memory, so they pass through unchanged;
//! - the core region comes from a `# CoreRegion : x y w h` comment in the
//!   .pl file when present, else from the .scl row geometry, else from the
//!   bounding box of all declared rectangles at their .pl positions.
//!
//! The writer names nodes `o<id>` in positional-id order and prints every
//! coordinate with six decimals, so write-then-read reproduces a design
//! exactly whenever its values carry at most six decimals (see
//! [`quantize_netlist`]).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use diffplace_core::{Canvas, Macro, Net, Netlist, Pin, Placement};

use crate::error::CliError;

// ---------------------------------------------------------------------------
// Lexical helpers
// ---------------------------------------------------------------------------

fn syntax(file: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Syntax { file: file.to_string(), line, msg: msg.into() }
}

enum LineKind<'a> {
    Skip,
    Comment(&'a str),
    Data(&'a str),
}

fn classify(raw: &str) -> LineKind<'_> {
    let t = raw.trim();
    if t.is_empty() {
        LineKind::Skip
    } else if let Some(rest) = t.strip_prefix('#') {
        LineKind::Comment(rest)
    } else if t.starts_with("UCLA") {
        LineKind::Skip
    } else {
        LineKind::Data(t)
    }
}

/// Whitespace-separated tokens, with `:` always its own token even when
/// glued to a neighbour (`NumNodes:3` tokenizes like `NumNodes : 3`).
fn tokenize(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for raw in line.split_whitespace() {
        let mut rest = raw;
        while let Some(i) = rest.find(':') {
            if i > 0 {
                out.push(&rest[..i]);
            }
            out.push(":");
            rest = &rest[i + 1..];
        }
        if !rest.is_empty() {
            out.push(rest);
        }
    }
    out
}

fn parse_f64(file: &str, line: usize, what: &str, tok: &str) -> Result<f64, CliError> {
    tok.parse::<f64>()
        .map_err(|_| syntax(file, line, format!("{what}: expected a number, got \"{tok}\"")))
}

fn parse_usize(file: &str, line: usize, what: &str, tok: &str) -> Result<usize, CliError> {
    tok.parse::<usize>()
        .map_err(|_| syntax(file, line, format!("{what}: expected a count, got \"{tok}\"")))
}

// ---------------------------------------------------------------------------
// Per-file parsers (pure; fuzz-safe)
// ---------------------------------------------------------------------------

/// One node line of a .nodes file.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecl {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub terminal: bool,
    pub line: usize,
}

/// Parse a .nodes file body. `file` labels error messages only.
pub fn parse_nodes_str(text: &str, file: &str) -> Result<Vec<NodeDecl>, CliError> {
    let mut nodes: Vec<NodeDecl> = Vec::new();
    let mut declared_nodes: Option<(usize, usize)> = None;
    let mut declared_terminals: Option<(usize, usize)> = None;
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let LineKind::Data(data) = classify(raw) else { continue };
        let t = tokenize(data);
        if t.len() >= 3 && t[1] == ":" && (t[0] == "NumNodes" || t[0] == "NumTerminals") {
            let n = parse_usize(file, lineno, t[0], t[2])?;
            if t[0] == "NumNodes" {
                declared_nodes = Some((n, lineno));
            } else {
                declared_terminals = Some((n, lineno));
            }
            continue;
        }
        let terminal = match t.len() {
            3 => false,
            4 if t[3] == "terminal" || t[3] == "terminal_NI" => true,
            _ => return Err(syntax(file, lineno, format!("malformed node line: \"{data}\""))),
        };
        let width = parse_f64(file, lineno, "node width", t[1])?;
        let height = parse_f64(file, lineno, "node height", t[2])?;
        let name = t[0].to_string();
        if let Some(prev) = seen.insert(name.clone(), lineno) {
            return Err(syntax(
                file,
                lineno,
                format!("node \"{name}\" already declared on line {prev}"),
            ));
        }
        nodes.push(NodeDecl { name, width, height, terminal, line: lineno });
    }

    if let Some((n, line)) = declared_nodes {
        if n != nodes.len() {
            return Err(syntax(
                file,
                line,
                format!("NumNodes declares {n} nodes but the file lists {}", nodes.len()),
            ));
        }
    }
    if let Some((n, line)) = declared_terminals {
        let terms = nodes.iter().filter(|d| d.terminal).count();
        if n != terms {
            return Err(syntax(
                file,
                line,
                format!("NumTerminals declares {n} terminals but the file lists {terms}"),
            ));
        }
    }
    Ok(nodes)
}

/// One pin line of a .nets file.
#[derive(Debug, Clone, PartialEq)]
pub struct PinDecl {
    pub node: String,
    pub offset: [f64; 2],
    pub line: usize,
}

/// One net block of a .nets file.
#[derive(Debug, Clone, PartialEq)]
pub struct NetDecl {
    pub name: String,
    pub pins: Vec<PinDecl>,
    /// Pre-filter pin count, carried in a `# TotalDegree : n` comment.
    pub total_degree: Option<u32>,
    pub line: usize,
}

/// Parse a .nets file body.
pub fn parse_nets_str(text: &str, file: &str) -> Result<Vec<NetDecl>, CliError> {
    struct NetBuild {
        name: String,
        declared: usize,
        line: usize,
        pins: Vec<PinDecl>,
        total_degree: Option<u32>,
    }

    fn close(
        current: &mut Option<NetBuild>,
        nets: &mut Vec<NetDecl>,
        file: &str,
    ) -> Result<(), CliError> {
        if let Some(b) = current.take() {
            if b.pins.len() != b.declared {
                return Err(syntax(
                    file,
                    b.line,
                    format!(
                        "net \"{}\" declares degree {} but lists {} pins",
                        b.name,
                        b.declared,
                        b.pins.len()
                    ),
                ));
            }
            nets.push(NetDecl {
                name: b.name,
                pins: b.pins,
                total_degree: b.total_degree,
                line: b.line,
            });
        }
        Ok(())
    }

    let mut nets: Vec<NetDecl> = Vec::new();
    let mut current: Option<NetBuild> = None;
    let mut declared_nets: Option<(usize, usize)> = None;
    let mut declared_pins: Option<(usize, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let data = match classify(raw) {
            LineKind::Skip => continue,
            LineKind::Comment(c) => {
                // A structured comment carries the pre-filter degree; any
                // other comment is free-form and ignored.
                let t = tokenize(c);
                if t.len() == 3 && t[0] == "TotalDegree" && t[1] == ":" {
                    if let (Some(b), Ok(d)) = (current.as_mut(), t[2].parse::<u32>()) {
                        b.total_degree = Some(d);
                    }
                }
                continue;
            }
            LineKind::Data(d) => d,
        };
        let t = tokenize(data);
        if t.len() >= 3 && t[1] == ":" && (t[0] == "NumNets" || t[0] == "NumPins") {
            let n = parse_usize(file, lineno, t[0], t[2])?;
            if t[0] == "NumNets" {
                declared_nets = Some((n, lineno));
            } else {
                declared_pins = Some((n, lineno));
            }
            continue;
        }
        if t.first() == Some(&"NetDegree") {
            close(&mut current, &mut nets, file)?;
            if t.len() < 3 || t[1] != ":" {
                return Err(syntax(file, lineno, "malformed NetDegree line"));
            }
            let declared = parse_usize(file, lineno, "net degree", t[2])?;
            let name = t.get(3).map(|s| s.to_string()).unwrap_or_else(|| format!("net{}", nets.len()));
            if t.len() > 4 {
                return Err(syntax(file, lineno, "unexpected tokens after the net name"));
            }
            current =
                Some(NetBuild { name, declared, line: lineno, pins: Vec::new(), total_degree: None });
            continue;
        }
        let Some(b) = current.as_mut() else {
            return Err(syntax(file, lineno, "pin line before any NetDegree header"));
        };
        let (node, offset) = match t.as_slice() {
            [name] | [name, _] => (*name, [0.0, 0.0]),
            [name, ":", x, y] => (
                *name,
                [
                    parse_f64(file, lineno, "pin offset x", x)?,
                    parse_f64(file, lineno, "pin offset y", y)?,
                ],
            ),
            [name, _, ":", x, y] => (
                *name,
                [
                    parse_f64(file, lineno, "pin offset x", x)?,
                    parse_f64(file, lineno, "pin offset y", y)?,
                ],
            ),
            _ => return Err(syntax(file, lineno, format!("malformed pin line: \"{data}\""))),
        };
        b.pins.push(PinDecl { node: node.to_string(), offset, line: lineno });
    }
    close(&mut current, &mut nets, file)?;

    if let Some((n, line)) = declared_nets {
        if n != nets.len() {
            return Err(syntax(
                file,
                line,
                format!("NumNets declares {n} nets but the file lists {}", nets.len()),
            ));
        }
    }
    if let Some((n, line)) = declared_pins {
        let pins: usize = nets.iter().map(|x| x.pins.len()).sum();
        if n != pins {
            return Err(syntax(
                file,
                line,
                format!("NumPins declares {n} pins but the file lists {pins}"),
            ));
        }
    }
    Ok(nets)
}

/// One position line of a .pl file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlEntry {
    pub name: String,
    pub pos: [f64; 2],
    pub line: usize,
}

/// Parsed .pl file: node positions plus the optional core-region comment.
#[derive(Debug, Clone, PartialEq)]
pub struct PlFile {
    pub entries: Vec<PlEntry>,
    pub core_region: Option<Canvas>,
}

/// Parse a .pl file body.
pub fn parse_pl_str(text: &str, file: &str) -> Result<PlFile, CliError> {
    let mut entries: Vec<PlEntry> = Vec::new();
    let mut core_region = None;
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let data = match classify(raw) {
            LineKind::Skip => continue,
            LineKind::Comment(c) => {
                let t = tokenize(c);
                if t.len() == 6 && t[0] == "CoreRegion" && t[1] == ":" {
                    if let (Ok(x), Ok(y), Ok(w), Ok(h)) = (
                        t[2].parse::<f64>(),
                        t[3].parse::<f64>(),
                        t[4].parse::<f64>(),
                        t[5].parse::<f64>(),
                    ) {
                        core_region = Some(Canvas { origin: [x, y], width: w, height: h });
                    }
                }
                continue;
            }
            LineKind::Data(d) => d,
        };
        let t = tokenize(data);
        if t.len() < 3 {
            return Err(syntax(file, lineno, format!("malformed placement line: \"{data}\"")));
        }
        let x = parse_f64(file, lineno, "x coordinate", t[1])?;
        let y = parse_f64(file, lineno, "y coordinate", t[2])?;
        let name = t[0].to_string();
        if let Some(prev) = seen.insert(name.clone(), lineno) {
            return Err(syntax(
                file,
                lineno,
                format!("node \"{name}\" already placed on line {prev}"),
            ));
        }
        entries.push(PlEntry { name, pos: [x, y], line: lineno });
    }
    Ok(PlFile { entries, core_region })
}

/// One row block of a .scl file; only fields the assembler uses are kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SclRow {
    pub coordinate: f64,
    pub height: f64,
    pub site_width: f64,
    pub subrow_origin: f64,
    pub num_sites: f64,
}

/// Parse a .scl file body.
pub fn parse_scl_str(text: &str, file: &str) -> Result<Vec<SclRow>, CliError> {
    struct RowBuild {
        line: usize,
        coordinate: Option<f64>,
        height: Option<f64>,
        site_width: f64,
        subrow_origin: Option<f64>,
        num_sites: f64,
    }

    let mut rows: Vec<SclRow> = Vec::new();
    let mut current: Option<RowBuild> = None;
    let mut declared: Option<(usize, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let LineKind::Data(data) = classify(raw) else { continue };
        let t = tokenize(data);
        if t.len() >= 3 && t[0] == "NumRows" && t[1] == ":" {
            declared = Some((parse_usize(file, lineno, "NumRows", t[2])?, lineno));
            continue;
        }
        if t.first() == Some(&"CoreRow") {
            if current.is_some() {
                return Err(syntax(file, lineno, "CoreRow before the previous row's End"));
            }
            current = Some(RowBuild {
                line: lineno,
                coordinate: None,
                height: None,
                site_width: 1.0,
                subrow_origin: None,
                num_sites: 0.0,
            });
            continue;
        }
        if t.first() == Some(&"End") {
            let b = current
                .take()
                .ok_or_else(|| syntax(file, lineno, "End without a matching CoreRow"))?;
            let height = b.height.ok_or_else(|| syntax(file, b.line, "row is missing Height"))?;
            rows.push(SclRow {
                coordinate: b.coordinate.unwrap_or(0.0),
                height,
                site_width: b.site_width,
                subrow_origin: b.subrow_origin.unwrap_or(0.0),
                num_sites: b.num_sites,
            });
            continue;
        }
        let Some(b) = current.as_mut() else {
            return Err(syntax(
                file,
                lineno,
                format!("unexpected line outside a CoreRow block: \"{data}\""),
            ));
        };
        let mut i = 0;
        while i < t.len() {
            if i + 2 < t.len() && t[i + 1] == ":" {
                let (key, val) = (t[i], t[i + 2]);
                match key {
                    "Coordinate" => b.coordinate = Some(parse_f64(file, lineno, key, val)?),
                    "Height" => b.height = Some(parse_f64(file, lineno, key, val)?),
                    "Sitewidth" => b.site_width = parse_f64(file, lineno, key, val)?,
                    "SubrowOrigin" => b.subrow_origin = Some(parse_f64(file, lineno, key, val)?),
                    "NumSites" => b.num_sites = parse_f64(file, lineno, key, val)?,
                    _ => {}
                }
                i += 3;
            } else {
                i += 1;
            }
        }
    }
    if let Some(b) = current {
        return Err(syntax(file, b.line, "CoreRow block never closed with End"));
    }
    if let Some((n, line)) = declared {
        if n != rows.len() {
            return Err(syntax(
                file,
                line,
                format!("NumRows declares {n} rows but the file lists {}", rows.len()),
            ));
        }
    }
    Ok(rows)
}

/// File names referenced by a .aux file.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFiles {
    pub nodes: String,
    pub nets: String,
    pub pl: Option<String>,
    pub scl: Option<String>,
}

/// Parse a .aux file body: one line naming the family members.
pub fn parse_aux_str(text: &str, file: &str) -> Result<AuxFiles, CliError> {
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let LineKind::Data(data) = classify(raw) else { continue };
        let t = tokenize(data);
        let files: &[&str] = match t.iter().position(|&s| s == ":") {
            Some(pos) => &t[pos + 1..],
            None => &t[..],
        };
        let mut nodes = None;
        let mut nets = None;
        let mut pl = None;
        let mut scl = None;
        for &f in files {
            let Some((_, ext)) = f.rsplit_once('.') else { continue };
            let slot = match ext.to_ascii_lowercase().as_str() {
                "nodes" => &mut nodes,
                "nets" => &mut nets,
                "pl" => &mut pl,
                "scl" => &mut scl,
                // .wts, .route and friends are passed through untouched.
                _ => continue,
            };
            if slot.is_some() {
                return Err(syntax(file, lineno, format!("duplicate .{ext} reference")));
            }
            *slot = Some(f.to_string());
        }
        let nodes = nodes.ok_or_else(|| syntax(file, lineno, "no .nodes file referenced"))?;
        let nets = nets.ok_or_else(|| syntax(file, lineno, "no .nets file referenced"))?;
        return Ok(AuxFiles { nodes, nets, pl, scl });
    }
    Err(syntax(file, 1, "empty .aux file"))
}

// ---------------------------------------------------------------------------
// Assembly into the internal model
// ---------------------------------------------------------------------------

/// A parsed design: the netlist plus the node positions the .pl file carried.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDesign {
    pub netlist: Netlist,
    /// Movable-macro coordinates found in the .pl file, when one was given.
    pub seed_placement: Option<Placement>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Movable,
    Pad,
    Cell,
}

/// Combine parsed files into a validated [`Netlist`]. Movable macros get ids
/// `0..M` in declaration order, then pads, then standard cells.
pub fn assemble_design(
    nodes: &[NodeDecl],
    nets: &[NetDecl],
    pl: Option<&PlFile>,
    scl: Option<&[SclRow]>,
) -> Result<ParsedDesign, CliError> {
    let row_height = scl.and_then(|rows| rows.iter().map(|r| r.height).reduce(f64::max));

    let mut kinds = Vec::with_capacity(nodes.len());
    let (mut n_mov, mut n_pad, mut n_cell) = (0usize, 0usize, 0usize);
    for d in nodes {
        let k = if d.terminal {
            n_pad += 1;
            Kind::Pad
        } else if row_height.is_some_and(|h| d.height <= h) {
            n_cell += 1;
            Kind::Cell
        } else {
            n_mov += 1;
            Kind::Movable
        };
        kinds.push(k);
    }
    if n_mov == 0 {
        return Err(CliError::Data("design declares no movable macros".into()));
    }

    let mut ids = vec![0usize; nodes.len()];
    let (mut im, mut ip, mut ic) = (0, n_mov, n_mov + n_pad);
    for (i, k) in kinds.iter().enumerate() {
        let slot = match k {
            Kind::Movable => &mut im,
            Kind::Pad => &mut ip,
            Kind::Cell => &mut ic,
        };
        ids[i] = *slot;
        *slot += 1;
    }

    let mut by_name: HashMap<&str, usize> = HashMap::with_capacity(nodes.len());
    for (i, d) in nodes.iter().enumerate() {
        by_name.insert(d.name.as_str(), i);
    }

    let positions: Option<HashMap<&str, [f64; 2]>> =
        pl.map(|p| p.entries.iter().map(|e| (e.name.as_str(), e.pos)).collect());
    if let Some(p) = pl {
        for e in &p.entries {
            if !by_name.contains_key(e.name.as_str()) {
                return Err(CliError::Data(format!(
                    ".pl line {}: position for undeclared node \"{}\"",
                    e.line, e.name
                )));
            }
        }
    }

    let mut macros = Vec::with_capacity(n_mov);
    let mut pads = Vec::with_capacity(n_pad);
    let mut pad_positions = Vec::with_capacity(n_pad);
    let mut cells = Vec::with_capacity(n_cell);
    let mut seed = vec![[0.0f64; 2]; n_mov];
    for (i, d) in nodes.iter().enumerate() {
        let pos = positions.as_ref().and_then(|m| m.get(d.name.as_str()));
        match kinds[i] {
            Kind::Movable => {
                macros.push(Macro { id: ids[i], width: d.width, height: d.height });
                if let Some(p) = pos {
                    seed[ids[i]] = *p;
                }
            }
            Kind::Pad => {
                let p = pos.ok_or_else(|| {
                    CliError::Data(format!(
                        "terminal \"{}\" has no position in the .pl file",
                        d.name
                    ))
                })?;
                pads.push(Macro { id: ids[i], width: 0.0, height: 0.0 });
                pad_positions.push([p[0] + d.width / 2.0, p[1] + d.height / 2.0]);
            }
            Kind::Cell => cells.push(Macro { id: ids[i], width: d.width, height: d.height }),
        }
    }

    let (pad_lo, pad_hi) = (n_mov, n_mov + n_pad);
    let mut out_nets = Vec::with_capacity(nets.len());
    for (id, decl) in nets.iter().enumerate() {
        let mut pins = Vec::with_capacity(decl.pins.len());
        for p in &decl.pins {
            let &node_idx = by_name.get(p.node.as_str()).ok_or_else(|| {
                CliError::DanglingPinReference {
                    node: p.node.clone(),
                    net: decl.name.clone(),
                    line: p.line,
                }
            })?;
            let owner = ids[node_idx];
            let offset = if (pad_lo..pad_hi).contains(&owner) { [0.0, 0.0] } else { p.offset };
            pins.push(Pin { owner, offset });
        }
        out_nets.push(Net { id, pins, total_degree: decl.total_degree });
    }

    let canvas = resolve_canvas(nodes, pl, scl, positions.as_ref())?;
    let netlist = Netlist { macros, pads, pad_positions, cells, nets: out_nets, canvas };
    netlist.validate()?;
    let seed_placement = pl.map(|_| Placement { coords: seed });
    Ok(ParsedDesign { netlist, seed_placement })
}

fn resolve_canvas(
    nodes: &[NodeDecl],
    pl: Option<&PlFile>,
    scl: Option<&[SclRow]>,
    positions: Option<&HashMap<&str, [f64; 2]>>,
) -> Result<Canvas, CliError> {
    if let Some(c) = pl.and_then(|p| p.core_region) {
        return Ok(c);
    }
    if let Some(rows) = scl {
        if !rows.is_empty() {
            let x0 = rows.iter().map(|r| r.subrow_origin).fold(f64::INFINITY, f64::min);
            let x1 = rows
                .iter()
                .map(|r| r.subrow_origin + r.num_sites * r.site_width)
                .fold(f64::NEG_INFINITY, f64::max);
            let y0 = rows.iter().map(|r| r.coordinate).fold(f64::INFINITY, f64::min);
            let y1 =
                rows.iter().map(|r| r.coordinate + r.height).fold(f64::NEG_INFINITY, f64::max);
            if x1 > x0 && y1 > y0 {
                return Ok(Canvas { origin: [x0, y0], width: x1 - x0, height: y1 - y0 });
            }
        }
    }
    if let Some(posmap) = positions {
        let mut bb: Option<[f64; 4]> = None;
        for d in nodes {
            let Some(p) = posmap.get(d.name.as_str()) else { continue };
            // Terminals anchor at their center with zero extent; everything
            // else spans its declared rectangle.
            let (lo, hi) = if d.terminal {
                let c = [p[0] + d.width / 2.0, p[1] + d.height / 2.0];
                (c, c)
            } else {
                (*p, [p[0] + d.width, p[1] + d.height])
            };
            bb = Some(match bb {
                None => [lo[0], lo[1], hi[0], hi[1]],
                Some(b) => [b[0].min(lo[0]), b[1].min(lo[1]), b[2].max(hi[0]), b[3].max(hi[1])],
            });
        }
        if let Some([x0, y0, x1, y1]) = bb {
            if x1 > x0 && y1 > y0 {
                return Ok(Canvas { origin: [x0, y0], width: x1 - x0, height: y1 - y0 });
            }
        }
    }
    Err(CliError::Data(
        "cannot determine the core region: no CoreRegion comment, no usable .scl rows, \
         and no .pl positions to take a bounding box from"
            .into(),
    ))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::from_io(path, e))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn path_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

/// Read a design from a .aux file and the files it references.
pub fn parse_bookshelf(aux_path: &Path) -> Result<ParsedDesign, CliError> {
    let aux_text = read_text(aux_path)?;
    let aux = parse_aux_str(&aux_text, &path_label(aux_path))?;
    let dir = aux_path.parent().unwrap_or(Path::new(""));

    let nodes = parse_nodes_str(&read_text(&dir.join(&aux.nodes))?, &aux.nodes)?;
    let nets = parse_nets_str(&read_text(&dir.join(&aux.nets))?, &aux.nets)?;
    let pl = match &aux.pl {
        Some(f) => Some(parse_pl_str(&read_text(&dir.join(f))?, f)?),
        None => None,
    };
    let scl = match &aux.scl {
        Some(f) => Some(parse_scl_str(&read_text(&dir.join(f))?, f)?),
        None => None,
    };
    assemble_design(&nodes, &nets, pl.as_ref(), scl.as_deref())
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Round to the six-decimal precision the text format carries.
pub fn quantize6(x: f64) -> f64 {
    f6(x).parse().unwrap_or(x)
}

/// A copy of the netlist in the writer's canonical form: every float rounded
/// to six decimals and pad-owned pin offsets zeroed. Write-then-read is the
/// identity on netlists already in this form.
pub fn quantize_netlist(netlist: &Netlist) -> Netlist {
    let mut out = netlist.clone();
    let (pad_lo, pad_hi) = (out.macros.len(), out.macros.len() + out.pads.len());
    for m in out.macros.iter_mut().chain(out.cells.iter_mut()) {
        m.width = quantize6(m.width);
        m.height = quantize6(m.height);
    }
    for p in out.pads.iter_mut() {
        p.width = 0.0;
        p.height = 0.0;
    }
    for pos in out.pad_positions.iter_mut() {
        *pos = [quantize6(pos[0]), quantize6(pos[1])];
    }
    for net in out.nets.iter_mut() {
        for pin in net.pins.iter_mut() {
            pin.offset = if (pad_lo..pad_hi).contains(&pin.owner) {
                [0.0, 0.0]
            } else {
                [quantize6(pin.offset[0]), quantize6(pin.offset[1])]
            };
        }
    }
    out.canvas.origin = [quantize6(out.canvas.origin[0]), quantize6(out.canvas.origin[1])];
    out.canvas.width = quantize6(out.canvas.width);
    out.canvas.height = quantize6(out.canvas.height);
    out
}

/// Companion to [`quantize_netlist`] for placements.
pub fn quantize_placement(p: &Placement) -> Placement {
    Placement { coords: p.coords.iter().map(|c| [quantize6(c[0]), quantize6(c[1])]).collect() }
}

/// In-memory rendering of one design as Bookshelf text files.
#[derive(Debug, Clone, PartialEq)]
pub struct BookshelfText {
    pub aux: String,
    pub nodes: String,
    pub nets: String,
    pub pl: String,
    /// Present only when the design has standard cells; the single row's
    /// height separates cells (at or below it) from movable macros (above).
    pub scl: Option<String>,
}

/// Render a design to Bookshelf text without touching the filesystem.
pub fn bookshelf_text(
    netlist: &Netlist,
    placement: &Placement,
    name: &str,
) -> Result<BookshelfText, CliError> {
    netlist.validate()?;
    let (m, p, c) = (netlist.macros.len(), netlist.pads.len(), netlist.cells.len());
    if placement.coords.len() != m {
        return Err(CliError::Data(format!(
            "placement has {} rows but the design has {m} movable macros",
            placement.coords.len()
        )));
    }
    let row_height = netlist.cells.iter().map(|x| x.height).reduce(f64::max);
    if let Some(h) = row_height {
        let hq = quantize6(h);
        if let Some(short) = netlist.macros.iter().find(|mac| quantize6(mac.height) <= hq) {
            return Err(CliError::Data(format!(
                "macro {} is not taller than the standard-cell rows; the row-based text \
                 format cannot keep it movable",
                short.id
            )));
        }
    }

    let mut nodes = String::from("UCLA nodes 1.0\n\n");
    nodes.push_str(&format!("NumNodes : {}\nNumTerminals : {p}\n\n", m + p + c));
    for (i, mac) in netlist.macros.iter().enumerate() {
        nodes.push_str(&format!("   o{i}   {}   {}\n", f6(mac.width), f6(mac.height)));
    }
    for k in 0..p {
        nodes.push_str(&format!("   o{}   0.000000   0.000000   terminal\n", m + k));
    }
    for (j, cell) in netlist.cells.iter().enumerate() {
        nodes.push_str(&format!("   o{}   {}   {}\n", m + p + j, f6(cell.width), f6(cell.height)));
    }

    let mut nets = String::from("UCLA nets 1.0\n\n");
    nets.push_str(&format!(
        "NumNets : {}\nNumPins : {}\n\n",
        netlist.nets.len(),
        netlist.total_pins()
    ));
    for net in &netlist.nets {
        nets.push_str(&format!("NetDegree : {}   net{}\n", net.pins.len(), net.id));
        if let Some(d) = net.total_degree {
            nets.push_str(&format!("# TotalDegree : {d}\n"));
        }
        for pin in &net.pins {
            let off = if (m..m + p).contains(&pin.owner) { [0.0, 0.0] } else { pin.offset };
            nets.push_str(&format!(
                "   o{}   B : {} {}\n",
                pin.owner,
                f6(off[0]),
                f6(off[1])
            ));
        }
    }

    let cv = &netlist.canvas;
    let mut pl = String::from("UCLA pl 1.0\n");
    pl.push_str(&format!(
        "# CoreRegion : {} {} {} {}\n\n",
        f6(cv.origin[0]),
        f6(cv.origin[1]),
        f6(cv.width),
        f6(cv.height)
    ));
    for (i, xy) in placement.coords.iter().enumerate() {
        pl.push_str(&format!("o{i} {} {} : N\n", f6(xy[0]), f6(xy[1])));
    }
    for (k, pos) in netlist.pad_positions.iter().enumerate() {
        pl.push_str(&format!("o{} {} {} : N /FIXED\n", m + k, f6(pos[0]), f6(pos[1])));
    }
    for j in 0..c {
        pl.push_str(&format!("o{} 0.000000 0.000000 : N\n", m + p + j));
    }

    let scl = row_height.map(|h| {
        format!(
            "UCLA scl 1.0\n\nNumRows : 1\n\nCoreRow Horizontal\n  Coordinate   : {}\n  \
             Height       : {}\n  Sitewidth    : 1.000000\n  Sitespacing  : 1.000000\n  \
             Siteorient   : 1\n  Sitesymmetry : 1\n  SubrowOrigin : {}  NumSites : {}\nEnd\n",
            f6(cv.origin[1]),
            f6(quantize6(h)),
            f6(cv.origin[0]),
            f6(cv.width)
        )
    });

    let mut family = format!("{name}.nodes {name}.nets {name}.pl");
    if scl.is_some() {
        family.push_str(&format!(" {name}.scl"));
    }
    let aux = format!("RowBasedPlacement : {family}\n");

    Ok(BookshelfText { aux, nodes, nets, pl, scl })
}

/// Write a design as `<name>.aux/.nodes/.nets/.pl[/.scl]` under `dir` and
/// return the .aux path. The .aux file is written last, so a directory with
/// one is complete.
pub fn serialize_bookshelf(
    netlist: &Netlist,
    placement: &Placement,
    dir: &Path,
    name: &str,
) -> Result<PathBuf, CliError> {
    let text = bookshelf_text(netlist, placement, name)?;
    let write = |file: String, content: &str| -> Result<(), CliError> {
        let path = dir.join(file);
        fs::write(&path, content).map_err(|e| CliError::from_io(&path, e))
    };
    write(format!("{name}.nodes"), &text.nodes)?;
    write(format!("{name}.nets"), &text.nets)?;
    write(format!("{name}.pl"), &text.pl)?;
    if let Some(scl) = &text.scl {
        write(format!("{name}.scl"), scl)?;
    }
    let aux_path = dir.join(format!("{name}.aux"));
    fs::write(&aux_path, &text.aux).map_err(|e| CliError::from_io(&aux_path, e))?;
    Ok(aux_path)
}

/// Parse Bookshelf text already in memory (the writer's output shape).
pub fn parse_bookshelf_text(text: &BookshelfText) -> Result<ParsedDesign, CliError> {
    let nodes = parse_nodes_str(&text.nodes, "nodes")?;
    let nets = parse_nets_str(&text.nets, "nets")?;
    let pl = parse_pl_str(&text.pl, "pl")?;
    let scl = match &text.scl {
        Some(s) => Some(parse_scl_str(s, "scl")?),
        None => None,
    };
    assemble_design(&nodes, &nets, Some(&pl), scl.as_deref())
}

/// Messages for pins whose offset leaves the owner's rectangle. The format
/// tolerates these (a warning, never a rejection).
pub fn pin_offset_warnings(netlist: &Netlist) -> Vec<String> {
    let mut out = Vec::new();
    for net in &netlist.nets {
        for pin in &net.pins {
            if let Some([w, h]) = netlist.owner_dims(pin.owner) {
                if pin.offset[0].abs() > w / 2.0 + 1e-9 || pin.offset[1].abs() > h / 2.0 + 1e-9 {
                    out.push(format!(
                        "net {}: pin on node {} has offset ({}, {}) outside its {}x{} block",
                        net.id, pin.owner, pin.offset[0], pin.offset[1], w, h
                    ));
                }
            }
        }
    }
    out
}
