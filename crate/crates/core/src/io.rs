//! Plain-text instance format.
//!
//! ```text
//! # comment
//! n m k
//! t_0 t_1 ... t_{k-1}
//! u v w        (m lines)
//! ```
//!
//! Vertex ids are 0-based. Lines starting with `#` and blank lines are
//! ignored; LF and CRLF line endings are both accepted.

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{GraphError, Instance, VertexId, WeightedGraph};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unexpected end of input: {0}")]
    Truncated(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, expected: usize) -> Result<Vec<T>, ParseError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expected {
        return Err(syntax(line, format!("expected {expected} fields, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| syntax(line, format!("cannot parse `{f}`"))))
        .collect()
}

pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, header) = lines.next().ok_or(ParseError::Truncated("missing header"))?;
    let header: Vec<usize> = parse_fields(ln, header, 3)?;
    let (n, m, k) = (header[0], header[1], header[2]);

    let (ln, term_line) = lines.next().ok_or(ParseError::Truncated("missing terminal line"))?;
    let terminals: Vec<VertexId> = parse_fields(ln, term_line, k)?;

    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, line) = lines.next().ok_or(ParseError::Truncated("fewer edge lines than declared"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(syntax(ln, format!("expected `u v w`, found {} fields", fields.len())));
        }
        let u = fields[0].parse::<VertexId>().map_err(|_| syntax(ln, "bad vertex id"))?;
        let v = fields[1].parse::<VertexId>().map_err(|_| syntax(ln, "bad vertex id"))?;
        let w = fields[2].parse::<f64>().map_err(|_| syntax(ln, "bad weight"))?;
        edges.push((u, v, w));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(syntax(ln, "trailing data after the declared edges"));
    }
    let graph = WeightedGraph::new(n, edges)?;
    Ok(Instance::new(graph, terminals)?)
}

/// Canonical text form: edges sorted with `u < v`, weights in the shortest
/// decimal that parses back to the same `f64`.
pub fn write_instance(inst: &Instance) -> String {
    let g = inst.graph();
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", g.vertex_count(), g.edge_count(), inst.k());
    let terms: Vec<String> = inst.terminals().iter().map(|t| t.to_string()).collect();
    let _ = writeln!(out, "{}", terms.join(" "));
    for e in g.edges() {
        let _ = writeln!(out, "{} {} {}", e.u, e.v, e.weight);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_crlf() {
        let text = "# star\r\n4 3 3\r\n1 2 3\r\n\r\n0 1 1\r\n# mid\r\n0 2 1.5\r\n3 0 2\r\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.k(), 3);
        assert_eq!(inst.graph().edge_count(), 3);
        assert_eq!(inst.graph().edge_weight(0, 3), Some(2.0));
        assert_eq!(write_instance(&inst), "4 3 3\n1 2 3\n0 1 1\n0 2 1.5\n0 3 2\n");
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse_instance(""), Err(ParseError::Truncated(_))));
        assert!(matches!(parse_instance("2 1 2\n0 1\n0 1\n"), Err(ParseError::Syntax { line: 3, .. })));
        assert!(matches!(parse_instance("2 1 2\n0 1\n0 1 x\n"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_instance("2 1 2\n0 1\n0 1 1\n1 0 1\n"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_instance("2 1 2\n0 1\n0 1 -1\n"), Err(ParseError::Graph(_))));
        assert!(matches!(parse_instance("3 1 2\n0 1\n0 1 1\n"), Err(ParseError::Graph(GraphError::Disconnected { .. }))));
    }

    #[test]
    fn round_trips_awkward_floats() {
        let text = "3 2 2\n0 2\n0 1 0.1\n1 2 123456.789e-3\n";
        let inst = parse_instance(text).unwrap();
        let again = parse_instance(&write_instance(&inst)).unwrap();
        assert_eq!(inst, again);
    }
}
