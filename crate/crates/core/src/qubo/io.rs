//! Sparse coordinate interchange format.
//!
//! ```text
//! N <n> K1 <constant>
//! <i> <j> <coeff>      (i <= j, zero coefficients omitted)
//! ```
//!
//! Coefficients follow the upper-triangular 0/1 convention
//! `E(x) = sum_{i<=j} Q_ij x_i x_j + K1`: the diagonal carries
//! `Q_ii = A_ii + B_i` and off-diagonals carry `Q_ij = A_ij + A_ji`. Import
//! yields `A_ii = 0`, `B_i = Q_ii`, `A_ij = A_ji = Q_ij / 2`, an equivalent
//! QUBO whose re-export reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Qubo, QuboError, Result};
use crate::matrix::DenseMatrix;

pub fn write_qubo<W: Write>(q: &Qubo, mut out: W) -> std::io::Result<()> {
    let n = q.n();
    writeln!(out, "N {n} K1 {}", q.k1())?;
    for i in 0..n {
        let diag = q.a()[(i, i)] + q.b()[i];
        if diag != 0.0 {
            writeln!(out, "{i} {i} {diag}")?;
        }
        for j in (i + 1)..n {
            let off = q.a()[(i, j)] + q.a()[(j, i)];
            if off != 0.0 {
                writeln!(out, "{i} {j} {off}")?;
            }
        }
    }
    out.flush()
}

pub fn export_qubo(q: &Qubo, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| QuboError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    write_qubo(q, BufWriter::new(file)).map_err(io_err)
}

pub fn read_qubo<R: Read>(input: R) -> Result<Qubo> {
    let parse_err = |line: usize, reason: String| QuboError::Parse { line, reason };
    let mut lines = BufReader::new(input).lines().enumerate();
    let (n, k1) = loop {
        let Some((no, line)) = lines.next() else {
            return Err(parse_err(1, "missing header".into()));
        };
        let line = line.map_err(|e| parse_err(no + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["N", n, "K1", k1] => {
                let n: usize = n.parse().map_err(|_| parse_err(no + 1, format!("bad N {n:?}")))?;
                let k1: f64 = k1.parse().map_err(|_| parse_err(no + 1, format!("bad K1 {k1:?}")))?;
                break (n, k1);
            }
            _ => return Err(parse_err(no + 1, format!("expected `N <n> K1 <constant>`, got {line:?}"))),
        }
    };
    let mut a = DenseMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    let mut seen = std::collections::HashSet::new();
    for (no, line) in lines {
        let line = line.map_err(|e| parse_err(no + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [i, j, v] = parts.as_slice() else {
            return Err(parse_err(no + 1, format!("expected `i j coeff`, got {line:?}")));
        };
        let i: usize = i.parse().map_err(|_| parse_err(no + 1, format!("bad index {i:?}")))?;
        let j: usize = j.parse().map_err(|_| parse_err(no + 1, format!("bad index {j:?}")))?;
        let v: f64 = v.parse().map_err(|_| parse_err(no + 1, format!("bad coefficient {v:?}")))?;
        if i > j || j >= n {
            return Err(parse_err(no + 1, format!("index pair ({i}, {j}) must satisfy i <= j < {n}")));
        }
        if !seen.insert((i, j)) {
            return Err(parse_err(no + 1, format!("duplicate entry ({i}, {j})")));
        }
        if i == j {
            b[i] = v;
        } else {
            a[(i, j)] = v / 2.0;
            a[(j, i)] = v / 2.0;
        }
    }
    Qubo::new(a, b, k1)
}

pub fn import_qubo(path: impl AsRef<Path>) -> Result<Qubo> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| QuboError::Io { path: path.display().to_string(), source })?;
    read_qubo(file)
}
