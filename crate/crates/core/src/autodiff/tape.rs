use super::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Gather { x: Var, idx: Vec<usize> },
    GroupMaxPool { x: Var, argmax: Vec<u32> },
    AxisConv2 { v: Var, w: Var, b: Option<Var> },
    Concat(Vec<Var>),
    Reshape(Var),
    WeightedGather { x: Var, idx: Vec<usize>, weights: Vec<f64>, k: usize },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Add(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and backward is a single reverse sweep. Parameters are read in place
/// from the borrowed store.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep.
pub struct Grads {
    per_node: Vec<Option<Tensor>>,
    params: Vec<(usize, ParamId)>,
}

impl Grads {
    /// Gradient with respect to a leaf or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.per_node.get(v.0).and_then(Option::as_ref)
    }

    pub fn param_grads(&self, n_params: usize) -> ParamGrads {
        let mut out = ParamGrads::empty(n_params);
        for &(node, id) in &self.params {
            if let Some(g) = &self.per_node[node] {
                match &mut out.grads[id.0] {
                    Some(acc) => acc.add_assign(g),
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        out
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => &self.store.get(*id).value,
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or constant.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Shared affine map over the last axis: `out[r] = x[r] · W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.rank() != 2 || xv.rank() < 1 || xv.channels() != wv.shape()[0] {
            return Err(Error::invalid(format!(
                "linear: input {:?} incompatible with weight {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let (din, dout) = (wv.shape()[0], wv.shape()[1]);
        let bv = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.numel() != dout {
                    return Err(Error::invalid(format!("linear: bias {:?} for {dout} outputs", bv.shape())));
                }
                Some(bv.data())
            }
            None => None,
        };
        let rows = xv.rows();
        let (xd, wd) = (xv.data(), wv.data());
        let mut out = vec![0.0; rows * dout];
        for r in 0..rows {
            let orow = &mut out[r * dout..(r + 1) * dout];
            let xrow = &xd[r * din..(r + 1) * din];
            for (i, &xi) in xrow.iter().enumerate() {
                let wrow = &wd[i * dout..(i + 1) * dout];
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += xi * w;
                }
            }
            if let Some(bd) = bv {
                for (o, b) in orow.iter_mut().zip(bd) {
                    *o += b;
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }))
    }

    /// Elementwise `max(0, x)`; the derivative at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Relu(x))
    }

    /// `out[j] = x[idx[j]]` along the leading axis.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(Error::invalid("gather_rows: scalar input"));
        }
        let n = xv.shape()[0];
        if idx.is_empty() {
            return Err(Error::invalid("gather_rows: empty index list"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("gather_rows: index {bad} out of range for {n} rows")));
        }
        let w = xv.numel() / n;
        let xd = xv.data();
        let mut out = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            out.extend_from_slice(&xd[i * w..(i + 1) * w]);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = idx.len();
        Ok(self.push(Tensor::new(shape, out)?, Op::Gather { x, idx: idx.to_vec() }))
    }

    /// Max over the middle axis of an `M×K×d` tensor. Ties keep the lowest `k`.
    pub fn group_max_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 3 {
            return Err(Error::invalid(format!("group_max_pool: expected M×K×d, got {:?}", xv.shape())));
        }
        let (m, k, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let xd = xv.data();
        let mut out = vec![f64::NEG_INFINITY; m * d];
        let mut argmax = vec![0u32; m * d];
        for g in 0..m {
            let orow = &mut out[g * d..(g + 1) * d];
            let arow = &mut argmax[g * d..(g + 1) * d];
            for slot in 0..k {
                let row = &xd[(g * k + slot) * d..(g * k + slot + 1) * d];
                for c in 0..d {
                    if row[c] > orow[c] {
                        orow[c] = row[c];
                        arow[c] = slot as u32;
                    }
                }
            }
        }
        Ok(self.push(Tensor::new(vec![m, d], out)?, Op::GroupMaxPool { x, argmax }))
    }

    /// Collapses an extent-2 axis with a full channel-mixing kernel:
    /// `out[n][0][r] = V[n][0][r]·W[0] + V[n][1][r]·W[1] + b`.
    ///
    /// `v` is `N×2×R×d_in`, `w` is `2×d_in×d_out`; output is `N×1×R×d_out`.
    pub fn axis_conv2(&mut self, v: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (vv, wv) = (self.value(v), self.value(w));
        if vv.rank() != 4 || vv.shape()[1] != 2 {
            return Err(Error::invalid(format!(
                "axis_conv2: collapsed axis must have extent 2, input is {:?}",
                vv.shape()
            )));
        }
        let (n, r, din) = (vv.shape()[0], vv.shape()[2], vv.shape()[3]);
        if wv.rank() != 3 || wv.shape()[0] != 2 || wv.shape()[1] != din {
            return Err(Error::invalid(format!(
                "axis_conv2: weight {:?} incompatible with input {:?}",
                wv.shape(),
                vv.shape()
            )));
        }
        let dout = wv.shape()[2];
        let bv = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.numel() != dout {
                    return Err(Error::invalid(format!("axis_conv2: bias {:?} for {dout} outputs", bv.shape())));
                }
                Some(bv.data())
            }
            None => None,
        };
        let (vd, wd) = (vv.data(), wv.data());
        let mut out = vec![0.0; n * r * dout];
        for p in 0..n {
            for s in 0..r {
                let orow = &mut out[(p * r + s) * dout..(p * r + s + 1) * dout];
                for a in 0..2 {
                    let base = ((p * 2 + a) * r + s) * din;
                    let vrow = &vd[base..base + din];
                    for (i, &vi) in vrow.iter().enumerate() {
                        let wrow = &wd[(a * din + i) * dout..(a * din + i + 1) * dout];
                        for (o, w) in orow.iter_mut().zip(wrow) {
                            *o += vi * w;
                        }
                    }
                }
                if let Some(bd) = bv {
                    for (o, b) in orow.iter_mut().zip(bd) {
                        *o += b;
                    }
                }
            }
        }
        Ok(self.push(Tensor::new(vec![n, 1, r, dout], out)?, Op::AxisConv2 { v, w, b }))
    }

    /// Concatenates along the last axis; all other extents must agree.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::invalid("concat_channels: no inputs"))?;
        let lead = self.value(*first).shape().split_last().map(|s| s.1.to_vec()).unwrap_or_default();
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.value(x).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::invalid(format!(
                    "concat_channels: leading extents {:?} vs {lead:?}",
                    s
                )));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(xs.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// `out[n] = Σ_j weights[n·k + j] · x[idx[n·k + j]]` over rows of an `M×d` input.
    pub fn weighted_gather(&mut self, x: Var, idx: &[usize], weights: &[f64], k: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::invalid(format!("weighted_gather: expected M×d, got {:?}", xv.shape())));
        }
        if k == 0 || idx.is_empty() || !idx.len().is_multiple_of(k) || idx.len() != weights.len() {
            return Err(Error::invalid("weighted_gather: index/weight lists must be non-empty multiples of k"));
        }
        let (m, d) = (xv.shape()[0], xv.shape()[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::invalid(format!("weighted_gather: index {bad} out of range for {m} rows")));
        }
        let n = idx.len() / k;
        let xd = xv.data();
        let mut out = vec![0.0; n * d];
        for p in 0..n {
            let orow = &mut out[p * d..(p + 1) * d];
            for j in 0..k {
                let (i, wt) = (idx[p * k + j], weights[p * k + j]);
                for (o, v) in orow.iter_mut().zip(&xd[i * d..(i + 1) * d]) {
                    *o += wt * v;
                }
            }
        }
        let op = Op::WeightedGather {
            x,
            idx: idx.to_vec(),
            weights: weights.to_vec(),
            k,
        };
        Ok(self.push(Tensor::new(vec![n, d], out)?, op))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.shape()[0] != labels.len() {
            return Err(Error::invalid(format!(
                "softmax_cross_entropy: logits {:?} for {} labels",
                lv.shape(),
                labels.len()
            )));
        }
        let (n, c) = (lv.shape()[0], lv.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::invalid(format!("softmax_cross_entropy: label {bad} out of range for {c} classes")));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut total = 0.0;
        for (row, &label) in lv.data().chunks_exact(c).zip(labels) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            total += lse - row[label];
            probs.extend(row.iter().map(|v| (v - mx).exp() / z));
        }
        let op = Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(total / n as f64), op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::invalid(format!("add: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Backward sweep from a one-element output.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::invalid(format!("backward: loss must be scalar, got {:?}", lv.shape())));
        }
        self.backward_with_seed(loss, Tensor::new(lv.shape().to_vec(), vec![1.0])?)
    }

    /// Backward sweep seeded with an arbitrary output cotangent.
    pub fn backward_with_seed(&self, out: Var, seed: Tensor) -> Result<Grads> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::invalid("backward: seed shape differs from output"));
        }
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(seed);
        let mut params = Vec::new();
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            match node.op {
                Op::Leaf => continue,
                Op::Param(id) => {
                    params.push((i, id));
                    continue;
                }
                _ => {}
            }
            let Some(go) = g[i].take() else { continue };
            self.pull_back(&node.op, &go, &mut g);
        }
        Ok(Grads { per_node: g, params })
    }

    fn pull_back(&self, op: &Op, go: &Tensor, g: &mut [Option<Tensor>]) {
        let god = go.data();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (din, dout) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.rows();
                let (xd, wd) = (xv.data(), wv.data());
                let wt = transpose(wd, din, dout);
                let gx = slot(g, *x, xv.shape());
                for r in 0..rows {
                    let grow = &god[r * dout..(r + 1) * dout];
                    let gxrow = &mut gx[r * din..(r + 1) * din];
                    for (o, &go) in grow.iter().enumerate() {
                        for (gxi, w) in gxrow.iter_mut().zip(&wt[o * din..(o + 1) * din]) {
                            *gxi += go * w;
                        }
                    }
                }
                let gw = slot(g, *w, wv.shape());
                for r in 0..rows {
                    let grow = &god[r * dout..(r + 1) * dout];
                    for (i, &xi) in xd[r * din..(r + 1) * din].iter().enumerate() {
                        for (gwio, go) in gw[i * dout..(i + 1) * dout].iter_mut().zip(grow) {
                            *gwio += xi * go;
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = slot(g, *b, self.value(*b).shape());
                    for grow in god.chunks_exact(dout) {
                        for (gbo, go) in gb.iter_mut().zip(grow) {
                            *gbo += go;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let xd = xv.data();
                let gx = slot(g, *x, xv.shape());
                for ((gxi, &xi), &goi) in gx.iter_mut().zip(xd).zip(god) {
                    if xi > 0.0 {
                        *gxi += goi;
                    }
                }
            }
            Op::Gather { x, idx } => {
                let xv = self.value(*x);
                let w = xv.numel() / xv.shape()[0];
                let gx = slot(g, *x, xv.shape());
                for (j, &i) in idx.iter().enumerate() {
                    for (a, b) in gx[i * w..(i + 1) * w].iter_mut().zip(&god[j * w..(j + 1) * w]) {
                        *a += b;
                    }
                }
            }
            Op::GroupMaxPool { x, argmax } => {
                let xv = self.value(*x);
                let (k, d) = (xv.shape()[1], xv.shape()[2]);
                let gx = slot(g, *x, xv.shape());
                for (e, (&s, &goe)) in argmax.iter().zip(god).enumerate() {
                    let (m, c) = (e / d, e % d);
                    gx[(m * k + s as usize) * d + c] += goe;
                }
            }
            Op::AxisConv2 { v, w, b } => {
                let (vv, wv) = (self.value(*v), self.value(*w));
                let (n, r, din) = (vv.shape()[0], vv.shape()[2], vv.shape()[3]);
                let dout = wv.shape()[2];
                let (vd, wd) = (vv.data(), wv.data());
                let wt = [
                    transpose(&wd[..din * dout], din, dout),
                    transpose(&wd[din * dout..], din, dout),
                ];
                let gv = slot(g, *v, vv.shape());
                for p in 0..n {
                    for s in 0..r {
                        let grow = &god[(p * r + s) * dout..(p * r + s + 1) * dout];
                        for (a, wt) in wt.iter().enumerate() {
                            let base = ((p * 2 + a) * r + s) * din;
                            let gvrow = &mut gv[base..base + din];
                            for (o, &go) in grow.iter().enumerate() {
                                for (x, w) in gvrow.iter_mut().zip(&wt[o * din..(o + 1) * din]) {
                                    *x += go * w;
                                }
                            }
                        }
                    }
                }
                let gw = slot(g, *w, wv.shape());
                for p in 0..n {
                    for s in 0..r {
                        let grow = &god[(p * r + s) * dout..(p * r + s + 1) * dout];
                        for a in 0..2 {
                            let base = ((p * 2 + a) * r + s) * din;
                            for i in 0..din {
                                let vi = vd[base + i];
                                let gwrow = &mut gw[(a * din + i) * dout..(a * din + i + 1) * dout];
                                for (x, y) in gwrow.iter_mut().zip(grow) {
                                    *x += vi * y;
                                }
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    let gb = slot(g, *b, self.value(*b).shape());
                    for grow in god.chunks_exact(dout) {
                        for (x, y) in gb.iter_mut().zip(grow) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Concat(xs) => {
                let widths: Vec<usize> = xs.iter().map(|x| self.value(*x).channels()).collect();
                let total: usize = widths.iter().sum();
                let rows = go.numel() / total;
                let mut off = 0;
                for (x, &w) in xs.iter().zip(&widths) {
                    let gx = slot(g, *x, self.value(*x).shape());
                    for r in 0..rows {
                        for (a, b) in gx[r * w..(r + 1) * w]
                            .iter_mut()
                            .zip(&god[r * total + off..r * total + off + w])
                        {
                            *a += b;
                        }
                    }
                    off += w;
                }
            }
            Op::Reshape(x) => {
                let gx = slot(g, *x, self.value(*x).shape());
                for (a, b) in gx.iter_mut().zip(god) {
                    *a += b;
                }
            }
            Op::WeightedGather { x, idx, weights, k } => {
                let xv = self.value(*x);
                let d = xv.shape()[1];
                let gx = slot(g, *x, xv.shape());
                for (e, (&i, &wt)) in idx.iter().zip(weights).enumerate() {
                    let p = e / k;
                    for (a, b) in gx[i * d..(i + 1) * d].iter_mut().zip(&god[p * d..(p + 1) * d]) {
                        *a += wt * b;
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let lv = self.value(*logits);
                let c = lv.shape()[1];
                let scale = god[0] / labels.len() as f64;
                let gl = slot(g, *logits, lv.shape());
                for (row, (prow, &label)) in gl.chunks_exact_mut(c).zip(probs.chunks_exact(c).zip(labels)) {
                    for (j, (a, p)) in row.iter_mut().zip(prow).enumerate() {
                        let t = if j == label { 1.0 } else { 0.0 };
                        *a += scale * (p - t);
                    }
                }
            }
            Op::Add(a, b) => {
                for x in [a, b] {
                    let gx = slot(g, *x, self.value(*x).shape());
                    for (p, q) in gx.iter_mut().zip(god) {
                        *p += q;
                    }
                }
            }
            Op::Sum(x) => {
                let gx = slot(g, *x, self.value(*x).shape());
                for p in gx.iter_mut() {
                    *p += god[0];
                }
            }
        }
    }

    /// Which leading-axis rows of `source` have a dependency path into `out`.
    ///
    /// A reverse sweep over the recorded graph that ignores value-dependent
    /// gating: a ReLU passes every element and a max pool reaches every slot
    /// of its group. A row is marked when some element of it reaches `out`.
    pub fn dependency_rows(&self, out: Var, source: Var) -> Vec<bool> {
        let mut m: Vec<Option<Vec<bool>>> = (0..self.nodes.len()).map(|_| None).collect();
        m[out.0] = Some(vec![true; self.value(out).numel()]);
        for i in (source.0 + 1..=out.0).rev() {
            let Some(mo) = m[i].take() else { continue };
            if !mo.iter().any(|&b| b) {
                continue;
            }
            self.pull_mask(&self.nodes[i].op, &mo, &mut m);
        }
        let sv = self.value(source);
        let rows = if sv.rank() == 0 { 1 } else { sv.shape()[0] };
        let w = sv.numel() / rows;
        match &m[source.0] {
            Some(mask) => mask.chunks_exact(w).map(|c| c.iter().any(|&b| b)).collect(),
            None => vec![false; rows],
        }
    }

    fn pull_mask(&self, op: &Op, mo: &[bool], m: &mut [Option<Vec<bool>>]) {
        let mark = |m: &mut [Option<Vec<bool>>], x: Var| -> usize {
            let n = self.value(x).numel();
            m[x.0].get_or_insert_with(|| vec![false; n]);
            x.0
        };
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let (din, dout) = (xv.channels(), self.value(*w).shape()[1]);
                let xi = mark(m, *x);
                let mx = m[xi].as_mut().unwrap();
                for (r, orow) in mo.chunks_exact(dout).enumerate() {
                    if orow.iter().any(|&v| v) {
                        mx[r * din..(r + 1) * din].fill(true);
                    }
                }
                let wi = mark(m, *w);
                m[wi].as_mut().unwrap().fill(true);
                if let Some(b) = b {
                    let bi = mark(m, *b);
                    m[bi].as_mut().unwrap().fill(true);
                }
            }
            Op::Relu(x) | Op::Reshape(x) => {
                let xi = mark(m, *x);
                for (a, &b) in m[xi].as_mut().unwrap().iter_mut().zip(mo) {
                    *a |= b;
                }
            }
            Op::Gather { x, idx } => {
                let xv = self.value(*x);
                let w = xv.numel() / xv.shape()[0];
                let xi = mark(m, *x);
                let mx = m[xi].as_mut().unwrap();
                for (j, &i) in idx.iter().enumerate() {
                    for (a, &b) in mx[i * w..(i + 1) * w].iter_mut().zip(&mo[j * w..(j + 1) * w]) {
                        *a |= b;
                    }
                }
            }
            Op::GroupMaxPool { x, .. } => {
                let xv = self.value(*x);
                let (k, d) = (xv.shape()[1], xv.shape()[2]);
                let xi = mark(m, *x);
                let mx = m[xi].as_mut().unwrap();
                for (e, &b) in mo.iter().enumerate() {
                    if b {
                        let (g, c) = (e / d, e % d);
                        for s in 0..k {
                            mx[(g * k + s) * d + c] = true;
                        }
                    }
                }
            }
            Op::AxisConv2 { v, w, b } => {
                let vv = self.value(*v);
                let (n, r, din) = (vv.shape()[0], vv.shape()[2], vv.shape()[3]);
                let dout = self.value(*w).shape()[2];
                let vi = mark(m, *v);
                let mv = m[vi].as_mut().unwrap();
                for p in 0..n {
                    for s in 0..r {
                        if mo[(p * r + s) * dout..(p * r + s + 1) * dout].iter().any(|&x| x) {
                            for a in 0..2 {
                                let base = ((p * 2 + a) * r + s) * din;
                                mv[base..base + din].fill(true);
                            }
                        }
                    }
                }
                let wi = mark(m, *w);
                m[wi].as_mut().unwrap().fill(true);
                if let Some(b) = b {
                    let bi = mark(m, *b);
                    m[bi].as_mut().unwrap().fill(true);
                }
            }
            Op::Concat(xs) => {
                let widths: Vec<usize> = xs.iter().map(|x| self.value(*x).channels()).collect();
                let total: usize = widths.iter().sum();
                let rows = mo.len() / total;
                let mut off = 0;
                for (x, &w) in xs.iter().zip(&widths) {
                    let xi = mark(m, *x);
                    let mx = m[xi].as_mut().unwrap();
                    for r in 0..rows {
                        for (a, &b) in mx[r * w..(r + 1) * w].iter_mut().zip(&mo[r * total + off..r * total + off + w]) {
                            *a |= b;
                        }
                    }
                    off += w;
                }
            }
            Op::WeightedGather { x, idx, k, .. } => {
                let d = self.value(*x).shape()[1];
                let xi = mark(m, *x);
                let mx = m[xi].as_mut().unwrap();
                for (e, &i) in idx.iter().enumerate() {
                    let p = e / k;
                    for (a, &b) in mx[i * d..(i + 1) * d].iter_mut().zip(&mo[p * d..(p + 1) * d]) {
                        *a |= b;
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits: x, .. } | Op::Sum(x) => {
                let xi = mark(m, *x);
                m[xi].as_mut().unwrap().fill(true);
            }
            Op::Add(a, b) => {
                for x in [a, b] {
                    let xi = mark(m, *x);
                    for (p, &q) in m[xi].as_mut().unwrap().iter_mut().zip(mo) {
                        *p |= q;
                    }
                }
            }
        }
    }
}

fn slot<'g>(g: &'g mut [Option<Tensor>], x: Var, shape: &[usize]) -> &'g mut [f64] {
    g[x.0].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

/// Row-major `rows × cols` to `cols × rows`.
fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}
