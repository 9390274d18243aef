//! Plain-text lattice and edge-list formats.
//!
//! Lattice: a header line `H W`, then `H` rows of `W` spins in `{-1, +1}`.
//! Graph: a header line `N`, then one `i j` pair per line (0-indexed, `i < j`).
//! Blank lines are ignored in both.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{GrfError, Result};
use crate::models::{SpinLattice, UndirectedGraph};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GrfError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| GrfError::io(path, e))
}

/// Non-blank lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_error(source: &str, line: usize, message: impl Into<String>) -> GrfError {
    GrfError::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_usizes(source: &str, line: usize, text: &str, expected: usize) -> Result<Vec<usize>> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expected {
        return Err(parse_error(source, line, format!("expected {expected} integers, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<usize>().map_err(|_| parse_error(source, line, format!("'{f}' is not a non-negative integer"))))
        .collect()
}

/// Parses lattice text; `source` names the input in error messages.
pub fn parse_lattice(text: &str, source: &str) -> Result<SpinLattice> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_error(source, 1, "missing 'H W' header"))?;
    let dims = parse_usizes(source, hline, header, 2)?;
    let (height, width) = (dims[0], dims[1]);
    if height == 0 || width == 0 {
        return Err(parse_error(source, hline, "lattice dimensions must be positive"));
    }
    let mut spins = Vec::with_capacity(height * width);
    let mut rows = 0;
    for (ln, line) in lines {
        if rows == height {
            return Err(parse_error(source, ln, format!("more than {height} rows")));
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != width {
            return Err(parse_error(source, ln, format!("expected {width} spins, found {}", row.len())));
        }
        for f in row {
            let s = match f {
                "1" | "+1" => 1,
                "-1" => -1,
                other => return Err(parse_error(source, ln, format!("'{other}' is not a spin (-1 or +1)"))),
            };
            spins.push(s);
        }
        rows += 1;
    }
    if rows != height {
        return Err(parse_error(source, text.lines().count().max(1), format!("expected {height} rows, found {rows}")));
    }
    SpinLattice::new(height, width, spins)
}

/// Parses an edge list. Self-loops, reversed pairs and duplicates are rejected at their line.
pub fn parse_graph(text: &str, source: &str) -> Result<UndirectedGraph> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| parse_error(source, 1, "missing node-count header"))?;
    let n = parse_usizes(source, hline, header, 1)?[0];
    if n == 0 {
        return Err(parse_error(source, hline, "graph needs at least one node"));
    }
    let mut graph = UndirectedGraph::empty(n);
    for (ln, line) in lines {
        let ij = parse_usizes(source, ln, line, 2)?;
        let (i, j) = (ij[0], ij[1]);
        if i == j {
            return Err(parse_error(source, ln, format!("self-loop at node {i}")));
        }
        if i > j {
            return Err(parse_error(source, ln, format!("pair ({i}, {j}) must be written with i < j")));
        }
        if j >= n {
            return Err(parse_error(source, ln, format!("node {j} out of range for {n} nodes")));
        }
        if graph.has_edge(i, j) {
            return Err(parse_error(source, ln, format!("duplicate edge ({i}, {j})")));
        }
        graph.set_edge(i, j, true);
    }
    Ok(graph)
}

pub fn format_lattice(lattice: &SpinLattice) -> String {
    let mut out = format!("{} {}\n", lattice.height(), lattice.width());
    for r in 0..lattice.height() {
        let row: Vec<String> = (0..lattice.width()).map(|c| lattice.get(r, c).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_graph(graph: &UndirectedGraph) -> String {
    let mut out = format!("{}\n", graph.n_nodes());
    for (i, j) in graph.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn load_lattice(path: &Path) -> Result<SpinLattice> {
    parse_lattice(&read(path)?, &path.display().to_string())
}

pub fn load_graph(path: &Path) -> Result<UndirectedGraph> {
    parse_graph(&read(path)?, &path.display().to_string())
}

pub fn write_lattice(path: &Path, lattice: &SpinLattice) -> Result<()> {
    write(path, &format_lattice(lattice))
}

pub fn write_graph(path: &Path, graph: &UndirectedGraph) -> Result<()> {
    write(path, &format_graph(graph))
}
