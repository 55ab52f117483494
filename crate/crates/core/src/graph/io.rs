//! Plain-text graph format.
//!
//! ```text
//! n <N> fx <F_x> fz <F_z>
//! <N lines of F_x whitespace-separated reals>
//! u v z_1 ... z_Fz          (one line per undirected edge, u < v)
//! ```
//!
//! Reals are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use super::AttributedGraph;
use crate::error::{Error, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_reals(line_no: usize, fields: &[&str], expect: usize) -> Result<Vec<f64>> {
    if fields.len() != expect {
        return Err(parse_err(line_no, format!("expected {expect} values, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| parse_err(line_no, format!("bad real {f:?}: {e}"))))
        .collect()
}

pub fn parse_graph(reader: impl BufRead) -> Result<AttributedGraph> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 6 || tok[0] != "n" || tok[2] != "fx" || tok[4] != "fz" {
        return Err(parse_err(hline, "header must read `n <N> fx <F_x> fz <F_z>`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(hline, format!("bad count {s:?}: {e}")));
    let (n, fx, fz) = (num(tok[1])?, num(tok[3])?, num(tok[5])?);

    let mut node_attrs = Vec::with_capacity(n * fx);
    for _ in 0..n {
        let (no, line) = lines.next().ok_or_else(|| parse_err(hline, "file ends inside node attribute block"))?;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        node_attrs.extend(parse_reals(no, &fields, fx)?);
    }

    let mut edges = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 + fz {
            return Err(parse_err(no, format!("edge line needs 2 ids and {fz} attributes")));
        }
        let u = fields[0].parse::<usize>().map_err(|e| parse_err(no, e.to_string()))?;
        let v = fields[1].parse::<usize>().map_err(|e| parse_err(no, e.to_string()))?;
        if u >= v {
            return Err(parse_err(no, format!("edge ({u}, {v}) must be listed with u < v")));
        }
        edges.push((u, v, parse_reals(no, &fields[2..], fz)?));
    }
    AttributedGraph::build(n, fx, fz, node_attrs, edges)
}

pub fn format_graph(g: &AttributedGraph) -> String {
    let mut out = String::new();
    writeln!(out, "n {} fx {} fz {}", g.n(), g.fx(), g.fz()).unwrap();
    for i in 0..g.n() {
        let row: Vec<String> = g.node_attrs(i).iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    for (id, &(u, v)) in g.edges().iter().enumerate() {
        write!(out, "{u} {v}").unwrap();
        for z in g.edge_attrs_by_id(id) {
            write!(out, " {z:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<AttributedGraph> {
    let file = std::fs::File::open(path)?;
    parse_graph(std::io::BufReader::new(file))
}

pub fn write_graph(g: &AttributedGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(format_graph(g).as_bytes())?;
    file.flush()?;
    Ok(())
}
