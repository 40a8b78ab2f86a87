//! Plain-text network checkpoints.
//!
//! Every float is stored as the 16-digit hex encoding of its IEEE-754 bit
//! pattern, so save followed by load reproduces the network bit for bit.
//! The format is line-oriented and self-describing:
//!
//! ```text
//! snn-checkpoint v1
//! seed 42
//! layers 2
//! layer 0
//! m 784
//! n 100
//! mu bfd999999999999a
//! ...
//! v_th <n hex words>
//! w_row 0 <m hex words>
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{LayerParams, Network};

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn push_floats(out: &mut String, key: &str, vals: &[f64]) {
    out.push_str(key);
    for v in vals {
        let _ = write!(out, " {}", hex(*v));
    }
    out.push('\n');
}

pub fn save(path: &Path, net: &Network, seed: u64) -> Result<()> {
    let mut out = String::new();
    out.push_str("snn-checkpoint v1\n");
    let _ = writeln!(out, "seed {seed}");
    let _ = writeln!(out, "layers {}", net.layers.len());
    for (l, p) in net.layers.iter().enumerate() {
        let _ = writeln!(out, "layer {l}");
        let _ = writeln!(out, "m {}", p.m);
        let _ = writeln!(out, "n {}", p.n);
        let _ = writeln!(out, "mu {}", hex(p.mu));
        let _ = writeln!(out, "sigma {}", hex(p.sigma));
        let _ = writeln!(out, "gamma {}", hex(p.gamma));
        let _ = writeln!(out, "tau_mp_us {}", hex(p.tau_mp_us));
        let _ = writeln!(out, "t_ref_us {}", p.t_ref_us);
        let _ = writeln!(out, "w_d0 {}", hex(p.w_d0));
        let _ = writeln!(out, "v_th_floor {}", hex(p.v_th_floor));
        push_floats(&mut out, "v_th", &p.v_th);
        for i in 0..p.n {
            push_floats(&mut out, &format!("w_row {i}"), p.row(i));
        }
    }
    out.push_str("end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.no += 1;
        self.inner
            .next()
            .ok_or_else(|| Error::format("checkpoint", format!("unexpected end of file at line {}", self.no)))
    }
}

fn parse_f64(tok: &str, what: &str, line: usize) -> Result<f64> {
    let bits = u64::from_str_radix(tok, 16)
        .map_err(|_| Error::format("checkpoint", format!("bad {what} float at line {line}: {tok:?}")))?;
    Ok(f64::from_bits(bits))
}

fn keyed<'a>(line: &'a str, key: &str, no: usize) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::format("checkpoint", format!("expected `{key} ...` at line {no}, got {line:?}")))
}

fn keyed_f64(lines: &mut Lines, key: &str) -> Result<f64> {
    let line = lines.next()?;
    let no = lines.no;
    parse_f64(keyed(line, key, no)?, key, no)
}

fn keyed_usize(lines: &mut Lines, key: &str) -> Result<usize> {
    let line = lines.next()?;
    let no = lines.no;
    keyed(line, key, no)?
        .parse()
        .map_err(|_| Error::format("checkpoint", format!("bad {key} at line {no}")))
}

fn float_list(lines: &mut Lines, key: &str, count: usize) -> Result<Vec<f64>> {
    let line = lines.next()?;
    let no = lines.no;
    let rest = keyed(line, key, no)?;
    let mut vals = Vec::with_capacity(count);
    for tok in rest.split_ascii_whitespace() {
        vals.push(parse_f64(tok, key, no)?);
    }
    if vals.len() != count {
        return Err(Error::format(
            "checkpoint",
            format!("{key} at line {no} has {} values, expected {count}", vals.len()),
        ));
    }
    Ok(vals)
}

pub fn load(path: &Path) -> Result<(Network, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines { inner: text.lines(), no: 0 };

    let header = lines.next()?;
    if header != "snn-checkpoint v1" {
        return Err(Error::format("checkpoint", format!("unrecognized header {header:?}")));
    }
    let seed = keyed_usize(&mut lines, "seed")? as u64;
    let layer_count = keyed_usize(&mut lines, "layers")?;
    if layer_count == 0 {
        return Err(Error::format("checkpoint", "zero layers".to_string()));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let idx = keyed_usize(&mut lines, "layer")?;
        if idx != l {
            return Err(Error::format("checkpoint", format!("layer {idx} out of order, expected {l}")));
        }
        let m = keyed_usize(&mut lines, "m")?;
        let n = keyed_usize(&mut lines, "n")?;
        if m == 0 || n == 0 {
            return Err(Error::format("checkpoint", format!("layer {l} has empty dimension")));
        }
        let mu = keyed_f64(&mut lines, "mu")?;
        let sigma = keyed_f64(&mut lines, "sigma")?;
        let gamma = keyed_f64(&mut lines, "gamma")?;
        let tau_mp_us = keyed_f64(&mut lines, "tau_mp_us")?;
        let t_ref_us = keyed_usize(&mut lines, "t_ref_us")? as u64;
        let w_d0 = keyed_f64(&mut lines, "w_d0")?;
        let v_th_floor = keyed_f64(&mut lines, "v_th_floor")?;
        let v_th = float_list(&mut lines, "v_th", n)?;
        let mut weights = Vec::with_capacity(n * m);
        for i in 0..n {
            let row = float_list(&mut lines, &format!("w_row {i}"), m)?;
            weights.extend_from_slice(&row);
        }
        layers.push(LayerParams {
            m,
            n,
            weights,
            v_th,
            mu,
            sigma,
            gamma,
            tau_mp_us,
            t_ref_us,
            w_d0,
            v_th_floor,
        });
    }
    let end = lines.next()?;
    if end != "end" {
        return Err(Error::format("checkpoint", format!("expected trailing `end`, got {end:?}")));
    }
    // Adjacent layers must chain.
    for w in layers.windows(2) {
        if w[0].n != w[1].m {
            return Err(Error::format(
                "checkpoint",
                format!("layer widths do not chain: {} outputs feed {} inputs", w[0].n, w[1].m),
            ));
        }
    }
    Ok((Network { layers }, seed))
}
