//! Plain-text kernel files.
//!
//! ```text
//! # 2D simple random walk
//! dim = 2
//! lazify = true
//! beta = 1.0
//!  1  0  0.25
//! -1  0  0.25
//!  0  1  0.25
//!  0 -1  0.25
//! ```
//!
//! Header keys are `dim` (required), `lazify`, `beta` and `symmetrize`; every
//! other non-comment line is `x1 .. xd weight`.

use std::fmt::Write as _;

use super::StepKernel;
use crate::error::{Error, Result};
use crate::lattice::Site;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub dim: usize,
    pub lazify: bool,
    pub beta: f64,
    pub symmetrize: bool,
    pub points: Vec<(Site, f64)>,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidKernel(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut lazify = false;
        let mut beta = 1.0;
        let mut symmetrize = false;
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "dim" => {
                        dim = Some(value.parse::<usize>().map_err(|_| {
                            Error::InvalidKernel(format!("dim: expected an integer, got {value:?}"))
                        })?)
                    }
                    "lazify" => lazify = parse_bool(key, value)?,
                    "symmetrize" => symmetrize = parse_bool(key, value)?,
                    "beta" => {
                        beta = value.parse::<f64>().map_err(|_| {
                            Error::InvalidKernel(format!("beta: expected a number, got {value:?}"))
                        })?
                    }
                    other => return Err(Error::InvalidKernel(format!("unknown header key {other:?}"))),
                }
            } else {
                rows.push((lineno + 1, line.split_whitespace().collect()));
            }
        }

        let dim = dim.ok_or_else(|| Error::InvalidKernel("missing header key `dim`".into()))?;
        let mut points = Vec::with_capacity(rows.len());
        for (lineno, fields) in rows {
            if fields.len() != dim + 1 {
                return Err(Error::InvalidKernel(format!(
                    "line {lineno}: expected {} fields, got {}",
                    dim + 1,
                    fields.len()
                )));
            }
            let coords = fields[..dim]
                .iter()
                .map(|f| f.parse::<i32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidKernel(format!("line {lineno}: bad coordinate")))?;
            let w = fields[dim]
                .parse::<f64>()
                .map_err(|_| Error::InvalidKernel(format!("line {lineno}: bad weight")))?;
            if coords.len() > crate::lattice::MAX_DIM {
                return Err(Error::InvalidKernel(format!("line {lineno}: dimension too large")));
            }
            points.push((Site::new(&coords), w));
        }
        Ok(KernelSpec { dim, lazify, beta, symmetrize, points })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dim = {}", self.dim).unwrap();
        writeln!(s, "lazify = {}", self.lazify).unwrap();
        writeln!(s, "beta = {}", self.beta).unwrap();
        if self.symmetrize {
            writeln!(s, "symmetrize = true").unwrap();
        }
        for (x, w) in &self.points {
            let coords: Vec<String> = x.coords(self.dim).iter().map(|c| c.to_string()).collect();
            writeln!(s, "{} {}", coords.join(" "), w).unwrap();
        }
        s
    }

    pub fn build(&self) -> Result<StepKernel> {
        StepKernel::build(&self.points, self.dim, self.lazify, self.beta, self.symmetrize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRW: &str = "# srw\ndim = 2\nlazify = true\nbeta = 1.0\n1 0 0.25\n-1 0 0.25\n0 1 0.25\n0 -1 0.25\n";

    #[test]
    fn parses_header_and_rows() {
        let spec = KernelSpec::parse(SRW).unwrap();
        assert_eq!(spec.dim, 2);
        assert!(spec.lazify);
        assert_eq!(spec.points.len(), 4);
        let k = spec.build().unwrap();
        assert_eq!(k.holding_prob(), 0.5);
        assert_eq!(KernelSpec::parse(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(KernelSpec::parse("1 0 0.5\n-1 0 0.5\n").is_err());
        assert!(KernelSpec::parse("dim = 2\n1 0\n").is_err());
        assert!(KernelSpec::parse("dim = 2\ncolour = red\n").is_err());
        assert!(KernelSpec::parse("dim = 2\nlazify = maybe\n").is_err());
        assert!(KernelSpec::parse("dim = 1\n1 x\n").is_err());
    }
}
