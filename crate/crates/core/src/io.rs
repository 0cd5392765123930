//! Plain-text dataset files.
//!
//! The first line holds `d,n,has_oracle` (has_oracle is 0 or 1). Each of
//! the following n lines is `x_1,...,x_d,y`, extended by `t,g_1,...,g_d`
//! (generation parameter and unit tangent) when has_oracle is 1. Floats are
//! written in shortest round-trip form.

use crate::error::{Result, SvrError};
use crate::synthesis::Dataset;
use std::io::{BufRead, BufWriter, Write};

pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(out);
    let oracle = ds.oracle_t.is_some() && ds.oracle_tangent.is_some();
    writeln!(w, "{},{},{}", ds.d, ds.n(), u8::from(oracle))?;
    let mut line = String::new();
    for i in 0..ds.n() {
        line.clear();
        for v in ds.row(i) {
            push(&mut line, *v);
        }
        push(&mut line, ds.y[i]);
        if oracle {
            push(&mut line, ds.oracle_t.as_ref().unwrap()[i]);
            for v in &ds.oracle_tangent.as_ref().unwrap()[i * ds.d..(i + 1) * ds.d] {
                push(&mut line, *v);
            }
        }
        line.pop();
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn push(s: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(s, "{v:?},");
}

fn bad(line: usize, msg: impl Into<String>) -> SvrError {
    SvrError::Parse { line, msg: msg.into() }
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty dataset file"))??;
    let parts: Vec<&str> = header.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(bad(1, "header must be d,n,has_oracle"));
    }
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(1, format!("bad header field {s:?}")));
    let (d, n, flag) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if d == 0 || flag > 1 {
        return Err(bad(1, "d must be positive and has_oracle 0 or 1"));
    }
    let oracle = flag == 1;
    let width = if oracle { 2 * d + 2 } else { d + 1 };
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::new();
    let mut g = Vec::new();
    for i in 0..n {
        let lineno = i + 2;
        let text = lines.next().ok_or_else(|| bad(lineno, "fewer rows than declared"))??;
        let vals = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(lineno, format!("bad number {s:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != width {
            return Err(bad(lineno, format!("expected {width} fields, found {}", vals.len())));
        }
        x.extend_from_slice(&vals[..d]);
        y.push(vals[d]);
        if oracle {
            t.push(vals[d + 1]);
            g.extend_from_slice(&vals[d + 2..]);
        }
    }
    if let Some(extra) = lines.next() {
        if !extra?.trim().is_empty() {
            return Err(bad(n + 2, "more rows than declared"));
        }
    }
    Ok(Dataset {
        d,
        x,
        y,
        oracle_t: oracle.then_some(t),
        oracle_tangent: oracle.then_some(g),
        seed: 0,
    })
}
