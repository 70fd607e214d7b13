//! Text formats: graphs, Matrix Market operators, vectors and the
//! line-oriented exports of partitions, clusters and prolongations.
//!
//! Graph files start with a header `n d`, followed by `n` coordinate lines
//! when `d > 0`, then edge lines `i j w`. Optional sections `#capacity`
//! (one value per vertex), `#robin` (`i alpha g`) and `#dirichlet` (`i g`)
//! may follow. Blank lines and lines starting with `%` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{MsgrError, Result};
use crate::graph::{DirichletCondition, Edge, Point, RobinCondition, WeightedGraph};
use crate::sparse::{CooMatrix, SparseMatrix};

fn parse_err(line: usize, message: impl Into<String>) -> MsgrError {
    MsgrError::Parse { line, message: message.into() }
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

#[derive(PartialEq)]
enum Section {
    Edges,
    Capacity,
    Robin,
    Dirichlet,
}

pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty graph file"))?;
    let mut toks = header.split_whitespace();
    let n: usize = field(toks.next(), hl, "vertex count")?;
    let dim: usize = field(toks.next(), hl, "dimension")?;
    if dim > 3 {
        return Err(parse_err(hl, "dimension must be 0..=3"));
    }

    let mut coords: Vec<Point> = Vec::new();
    if dim > 0 {
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "missing coordinate lines"))?;
            let mut p = [0.0; 3];
            let mut toks = l.split_whitespace();
            for c in p.iter_mut().take(dim) {
                *c = field(toks.next(), ln, "coordinate")?;
            }
            coords.push(p);
        }
    }

    let mut section = Section::Edges;
    let (mut edges, mut capacity, mut robin, mut dirichlet) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ln, l) in lines {
        if let Some(name) = l.strip_prefix('#') {
            section = match name.trim() {
                "edges" => Section::Edges,
                "capacity" => Section::Capacity,
                "robin" => Section::Robin,
                "dirichlet" => Section::Dirichlet,
                other => return Err(parse_err(ln, format!("unknown section `{other}`"))),
            };
            continue;
        }
        let mut t = l.split_whitespace();
        match section {
            Section::Edges => edges.push(Edge {
                i: field(t.next(), ln, "edge endpoint")?,
                j: field(t.next(), ln, "edge endpoint")?,
                w: field(t.next(), ln, "edge weight")?,
            }),
            Section::Capacity => {
                for tok in t {
                    capacity.push(field(Some(tok), ln, "capacity")?);
                }
            }
            Section::Robin => robin.push(RobinCondition {
                vertex: field(t.next(), ln, "robin vertex")?,
                alpha: field(t.next(), ln, "robin alpha")?,
                value: field(t.next(), ln, "robin value")?,
            }),
            Section::Dirichlet => dirichlet.push(DirichletCondition {
                vertex: field(t.next(), ln, "dirichlet vertex")?,
                value: field(t.next(), ln, "dirichlet value")?,
            }),
        }
    }

    let mut g = WeightedGraph::new(n, edges)?;
    if dim > 0 {
        g = g.with_coords(dim, coords)?;
    }
    if !capacity.is_empty() {
        g = g.with_capacity(capacity)?;
    }
    g.with_robin(robin)?.with_dirichlet(dirichlet)
}

pub fn format_graph(g: &WeightedGraph) -> String {
    let mut s = String::new();
    let dim = if g.coords().is_some() { g.dim() } else { 0 };
    writeln!(s, "{} {}", g.n_vertices(), dim).unwrap();
    if let Some(coords) = g.coords() {
        for p in coords {
            let parts: Vec<String> = p[..dim].iter().map(|x| format!("{x:e}")).collect();
            writeln!(s, "{}", parts.join(" ")).unwrap();
        }
    }
    for e in g.edges() {
        writeln!(s, "{} {} {:e}", e.i, e.j, e.w).unwrap();
    }
    if let Some(c) = g.capacity() {
        s.push_str("#capacity\n");
        for x in c {
            writeln!(s, "{x:e}").unwrap();
        }
    }
    if !g.robin().is_empty() {
        s.push_str("#robin\n");
        for r in g.robin() {
            writeln!(s, "{} {:e} {:e}", r.vertex, r.alpha, r.value).unwrap();
        }
    }
    if !g.dirichlet().is_empty() {
        s.push_str("#dirichlet\n");
        for d in g.dirichlet() {
            writeln!(s, "{} {:e}", d.vertex, d.value).unwrap();
        }
    }
    s
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    parse_graph(&fs::read_to_string(path)?)
}

pub fn write_graph(path: impl AsRef<Path>, g: &WeightedGraph) -> Result<()> {
    Ok(fs::write(path, format_graph(g))?)
}

/// Reads a real coordinate Matrix Market file (`general` or `symmetric`).
pub fn parse_matrix_market(text: &str) -> Result<SparseMatrix> {
    let mut raw = text.lines().enumerate();
    let (_, banner) = raw.next().ok_or_else(|| parse_err(1, "empty matrix file"))?;
    let banner = banner.to_ascii_lowercase();
    let b: Vec<&str> = banner.split_whitespace().collect();
    if b.len() < 5 || b[0] != "%%matrixmarket" || b[1] != "matrix" || b[2] != "coordinate" {
        return Err(parse_err(1, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`"));
    }
    if !matches!(b[3], "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field `{}`", b[3])));
    }
    let symmetric = match b[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut lines = raw.map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (sl, size) = lines.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let mut t = size.split_whitespace();
    let rows: usize = field(t.next(), sl, "row count")?;
    let cols: usize = field(t.next(), sl, "column count")?;
    let nnz: usize = field(t.next(), sl, "entry count")?;

    let mut coo = CooMatrix::with_capacity(rows, cols, if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    for (ln, l) in lines {
        let mut t = l.split_whitespace();
        let i: usize = field(t.next(), ln, "row index")?;
        let j: usize = field(t.next(), ln, "column index")?;
        let v: f64 = field(t.next(), ln, "value")?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(ln, format!("entry ({i}, {j}) outside {rows}x{cols}")));
        }
        coo.push(i - 1, j - 1, v);
        if symmetric && i != j {
            coo.push(j - 1, i - 1, v);
        }
        count += 1;
    }
    if count != nnz {
        return Err(parse_err(sl, format!("expected {nnz} entries, found {count}")));
    }
    Ok(coo.to_csr())
}

pub fn format_matrix_market(a: &SparseMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(s, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz()).unwrap();
    for (i, j, v) in a.triplets() {
        writeln!(s, "{} {} {:e}", i + 1, j + 1, v).unwrap();
    }
    s
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

pub fn write_matrix_market(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    Ok(fs::write(path, format_matrix_market(a))?)
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    content_lines(text).map(|(ln, l)| field(Some(l), ln, "value")).collect()
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        writeln!(s, "{x:e}").unwrap();
    }
    s
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    Ok(fs::write(path, format_vector(v))?)
}

/// `vertex subdomain` per line.
pub fn format_partition(assignment: &[usize]) -> String {
    let mut s = String::new();
    for (v, k) in assignment.iter().enumerate() {
        writeln!(s, "{v} {k}").unwrap();
    }
    s
}

pub fn parse_partition(text: &str) -> Result<Vec<usize>> {
    let mut pairs = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut t = l.split_whitespace();
        let v: usize = field(t.next(), ln, "vertex")?;
        let k: usize = field(t.next(), ln, "subdomain")?;
        pairs.push((v, k));
    }
    pairs.sort_unstable();
    if pairs.iter().enumerate().any(|(i, &(v, _))| v != i) {
        return Err(parse_err(0, "partition must list every vertex exactly once"));
    }
    Ok(pairs.into_iter().map(|(_, k)| k).collect())
}

/// Time series as CSV rows `step,time,vertex,value`.
pub fn format_trajectory(times: &[f64], states: &[Vec<f64>]) -> String {
    let mut s = String::from("step,time,vertex,value\n");
    for (step, (t, u)) in times.iter().zip(states).enumerate() {
        for (v, x) in u.iter().enumerate() {
            writeln!(s, "{step},{t},{v},{x:e}").unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
% three vertices on a line
3 2
0 0
1 0
2 0
0 1 1.5
1 2 -0.5
#capacity
1 2 3
#robin
0 2.0 1.0
#dirichlet
2 0.5
";

    #[test]
    fn graph_round_trip() {
        let g = parse_graph(SAMPLE).unwrap();
        assert_eq!(g.n_vertices(), 3);
        assert_eq!(g.dim(), 2);
        assert_eq!(g.edges()[1].w, -0.5);
        assert_eq!(g.capacity().unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(g.robin()[0].alpha, 2.0);
        assert_eq!(g.dirichlet()[0].vertex, 2);
        let again = parse_graph(&format_graph(&g)).unwrap();
        assert_eq!(again.edges(), g.edges());
        assert_eq!(again.coords(), g.coords());
        assert_eq!(again.capacity(), g.capacity());
        assert_eq!(again.robin(), g.robin());
        assert_eq!(again.dirichlet(), g.dirichlet());
    }

    #[test]
    fn graph_without_coordinates() {
        let g = parse_graph("2 0\n0 1 3\n").unwrap();
        assert!(g.coords().is_none());
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn graph_errors_carry_line_numbers() {
        match parse_graph("2 0\n0 1 x\n") {
            Err(MsgrError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_graph("2 0\n#bogus\n").is_err());
        assert!(parse_graph("2 0\n0 5 1\n").is_err());
    }

    #[test]
    fn matrix_market_symmetric_expands() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 1\n";
        let a = parse_matrix_market(text).unwrap();
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
        let b = parse_matrix_market(&format_matrix_market(&a)).unwrap();
        assert_eq!(a.triplets().collect::<Vec<_>>(), b.triplets().collect::<Vec<_>>());
    }

    #[test]
    fn matrix_market_rejects_bad_input() {
        assert!(parse_matrix_market("%%MatrixMarket matrix array real general\n1 1\n1\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n").is_err());
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n").is_err());
    }

    #[test]
    fn vector_and_partition_round_trip() {
        let v = vec![1.0, -2.5e-7, 3.0];
        assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
        let p = vec![0, 2, 1, 1];
        assert_eq!(parse_partition(&format_partition(&p)).unwrap(), p);
        assert!(parse_partition("0 1\n2 1\n").is_err());
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let g = parse_graph(SAMPLE).unwrap();
        write_graph(dir.path().join("g.txt"), &g).unwrap();
        assert_eq!(read_graph(dir.path().join("g.txt")).unwrap().edges(), g.edges());
        write_vector(dir.path().join("v.txt"), &[1.0, 2.0]).unwrap();
        assert_eq!(read_vector(dir.path().join("v.txt")).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn trajectory_layout() {
        let s = format_trajectory(&[0.0, 0.5], &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "step,time,vertex,value");
        assert!(lines[4].starts_with("1,0.5,1,"));
    }
}
