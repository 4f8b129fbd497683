//! Plain-text parameter checkpoints.
//!
//! ```text
//! protonet-checkpoint 1
//! layers <L>
//! weight <layer> <rows> <cols>
//! <rows lines of <cols> space-separated values>
//! bias <layer> <len>
//! <one line of <len> space-separated values>
//! ...repeated for every layer in order
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so reading
//! a checkpoint back reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Layer, Network};

const MAGIC: &str = "protonet-checkpoint 1";

pub fn write_checkpoint<T: Scalar>(network: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render(network)).map_err(|e| Error::io(path, e))
}

fn join<T: Scalar>(values: impl Iterator<Item = T>) -> String {
    let mut line = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            line.push(' ');
        }
        write!(line, "{v}").expect("write to String");
    }
    line
}

pub(crate) fn render<T: Scalar>(network: &Network<T>) -> String {
    let mut out = format!("{MAGIC}\nlayers {}\n", network.layers.len());
    for (i, l) in network.layers.iter().enumerate() {
        let (rows, cols) = l.weight.dim();
        writeln!(out, "weight {i} {rows} {cols}").expect("write to String");
        for row in l.weight.outer_iter() {
            out.push_str(&join(row.iter().copied()));
            out.push('\n');
        }
        writeln!(out, "bias {i} {}", l.bias.len()).expect("write to String");
        out.push_str(&join(l.bias.iter().copied()));
        out.push('\n');
    }
    out
}

pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: u64,
}

impl<'a> Lines<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i as u64 + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn header(&mut self, keyword: &str, fields: usize) -> Result<Vec<usize>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}` record")));
        }
        let nums: Vec<usize> = parts
            .map(|p| p.parse::<usize>().map_err(|_| self.err(format!("bad integer `{p}`"))))
            .collect::<Result<_>>()?;
        if nums.len() != fields {
            return Err(self.err(format!("`{keyword}` record needs {fields} fields")));
        }
        Ok(nums)
    }

    fn values<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>> {
        let line = self.next()?;
        let vals: Vec<T> = line
            .split_whitespace()
            .map(|p| p.parse::<T>().map_err(|_| self.err(format!("bad number `{p}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}

pub(crate) fn parse<T: Scalar>(text: &str, path: &Path) -> Result<Network<T>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        line: 0,
    };
    if lines.next()?.trim() != MAGIC {
        return Err(lines.err("not a checkpoint file"));
    }
    let n = lines.header("layers", 1)?[0];
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let w = lines.header("weight", 3)?;
        if w[0] != i {
            return Err(lines.err(format!("expected layer {i}")));
        }
        let (rows, cols) = (w[1], w[2]);
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            flat.extend(lines.values::<T>(cols)?);
        }
        let b = lines.header("bias", 2)?;
        if b[0] != i || b[1] != rows {
            return Err(lines.err(format!("bias of layer {i} must have {rows} entries")));
        }
        let bias = Array1::from(lines.values::<T>(rows)?);
        layers.push(Layer {
            weight: Array2::from_shape_vec((rows, cols), flat).expect("counted"),
            bias,
        });
    }
    Network::new(layers)
}
