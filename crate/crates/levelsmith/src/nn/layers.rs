//! Layer library on top of the tape: dense, 2-D convolution, GRU cell.
//!
//! A layer owns only slice names; values live in the shared [`ParamVector`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamVector;
use super::tape::{NnError, NodeId, Tape};

/// Puts one registered slice onto the tape as a parameter leaf.
pub fn bind(tape: &mut Tape, pv: &ParamVector, name: &str) -> Result<NodeId, NnError> {
    let value = pv.to_array(name)?;
    let offset = pv.offset(name)?;
    Ok(tape.param(value, offset))
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> impl FnMut() -> f64 + '_ {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    move || rng.gen_range(-a..a)
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: String,
    pub b: String,
}

impl Dense {
    pub fn register(
        pv: &mut ParamVector,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Dense {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        pv.register(&w, &[in_dim, out_dim], glorot(rng, in_dim, out_dim));
        pv.register(&b, &[out_dim], || 0.0);
        Dense { w, b }
    }

    /// `x·W + b` for `x: [n, in_dim]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVector,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let w = bind(tape, pv, &self.w)?;
        let b = bind(tape, pv, &self.b)?;
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: String,
    pub b: String,
    pub pad: usize,
}

impl Conv2d {
    pub fn register(
        pv: &mut ParamVector,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        let fan_in = in_ch * k * k;
        let fan_out = out_ch * k * k;
        pv.register(&w, &[out_ch, in_ch, k, k], glorot(rng, fan_in, fan_out));
        pv.register(&b, &[out_ch], || 0.0);
        Conv2d { w, b, pad }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        pv: &ParamVector,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let w = bind(tape, pv, &self.w)?;
        let b = bind(tape, pv, &self.b)?;
        tape.conv2d(x, w, b, self.pad)
    }
}

/// Gated recurrent unit with per-gate weights:
/// r = σ(xW_r + hU_r + b_r), z = σ(xW_z + hU_z + b_z),
/// n = tanh(xW_n + b_n + r ⊙ (hU_n)), h' = (1 − z) ⊙ n + z ⊙ h.
#[derive(Clone, Debug)]
pub struct GruCell {
    names: [String; 9],
    pub hidden: usize,
}

impl GruCell {
    pub fn register(
        pv: &mut ParamVector,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> GruCell {
        let mut names: Vec<String> = Vec::with_capacity(9);
        for gate in ["r", "z", "n"] {
            let w = format!("{name}.w_{gate}");
            let u = format!("{name}.u_{gate}");
            let b = format!("{name}.b_{gate}");
            pv.register(&w, &[in_dim, hidden], glorot(rng, in_dim, hidden));
            pv.register(&u, &[hidden, hidden], glorot(rng, hidden, hidden));
            pv.register(&b, &[hidden], || 0.0);
            names.extend([w, u, b]);
        }
        GruCell { names: names.try_into().expect("nine gate slices"), hidden }
    }

    /// One step: `x [n, in_dim]`, `h [n, hidden]` → new hidden `[n, hidden]`.
    pub fn step(
        &self,
        tape: &mut Tape,
        pv: &ParamVector,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId, NnError> {
        let [wr, ur, br, wz, uz, bz, wn, un, bn] = &self.names;
        let gate = |tape: &mut Tape, w: &str, u: &str, b: &str| -> Result<NodeId, NnError> {
            let wv = bind(tape, pv, w)?;
            let uv = bind(tape, pv, u)?;
            let bv = bind(tape, pv, b)?;
            let xw = tape.matmul(x, wv)?;
            let hu = tape.matmul(h, uv)?;
            let s = tape.add(xw, hu)?;
            tape.add_bias(s, bv)
        };
        let r = gate(tape, wr, ur, br)?;
        let r = tape.sigmoid(r);
        let z = gate(tape, wz, uz, bz)?;
        let z = tape.sigmoid(z);

        let wnv = bind(tape, pv, wn)?;
        let unv = bind(tape, pv, un)?;
        let bnv = bind(tape, pv, bn)?;
        let xw = tape.matmul(x, wnv)?;
        let xwb = tape.add_bias(xw, bnv)?;
        let hu = tape.matmul(h, unv)?;
        let rhu = tape.mul(r, hu)?;
        let pre = tape.add(xwb, rhu)?;
        let n = tape.tanh(pre);

        let zn = tape.mul(z, n)?;
        let zh = tape.mul(z, h)?;
        let n_minus_zn = tape.sub(n, zn)?;
        tape.add(n_minus_zn, zh)
    }
}
