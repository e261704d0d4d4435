use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// A shared affine layer applied to every row.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Dense {
            w: store.add_glorot(format!("{name}.W"), &[d_in, d_out], d_in, d_out, rng)?,
            b: store.add_zeros(format!("{name}.b"), &[d_out])?,
            d_in,
            d_out,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        tape.linear(x, w, Some(b))
    }
}

/// Stack of dense layers, each followed by ReLU.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = d_in;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(store, &format!("{name}.mlp{i}"), d, w, rng)?);
            d = w;
        }
        Ok(Mlp { layers })
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map(|l| l.d_out).unwrap_or(0)
    }

    pub fn forward(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            let y = l.forward(tape, x)?;
            x = tape.relu(y);
        }
        Ok(x)
    }
}
