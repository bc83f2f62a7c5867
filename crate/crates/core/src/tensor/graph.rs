use crate::error::{Error, Result};

use super::Array;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    MatMul(Tensor, Tensor),
    Conv2d {
        input: Tensor,
        kernel: Tensor,
    },
    Relu(Tensor),
    Softmax(Tensor),
    Mean(Tensor),
    Transpose(Tensor),
    Reshape(Tensor),
    Concat {
        inputs: Vec<Tensor>,
        axis: usize,
    },
    Roll {
        input: Tensor,
        shift: isize,
        axis: usize,
    },
    Gather {
        input: Tensor,
        indices: Vec<usize>,
    },
    Scale(Tensor, f64),
}

#[derive(Debug)]
struct Node {
    value: Array,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of tensor operations.
///
/// Nodes are stored in creation order, which is already a topological order:
/// every op refers only to nodes created before it. `backward` walks the
/// record in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// (outer, axis length, inner) split of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Array) -> Tensor {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array) -> Tensor {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, t: Tensor) -> &Array {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        self.nodes[t.0].value.shape()
    }

    pub fn grad(&self, t: Tensor) -> Option<&[f64]> {
        self.nodes[t.0].grad.as_deref()
    }

    pub fn grad_array(&self, t: Tensor) -> Option<Array> {
        let node = &self.nodes[t.0];
        node.grad
            .as_ref()
            .map(|g| Array::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> Tensor {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn needs(&self, ts: &[Tensor]) -> bool {
        ts.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Tensor, b: Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Array::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a, b]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// `a[..., k] · b[k, m] -> [..., m]`: every leading index of `a` is a row.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape("matmul", format!("{:?} vs {:?}", sa, sb)));
        }
        let k = sb[0];
        let m = sb[1];
        let rows = numel(&sa) / k;
        let mut out = vec![0.0; rows * m];
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            rows,
            k,
            m,
        );
        let mut shape = sa;
        *shape.last_mut().unwrap() = m;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Array::new(shape, out)?, Op::MatMul(a, b), rg))
    }

    /// Stride-1 cross-correlation with zero "same" padding.
    ///
    /// `input` is `[batch, in_ch, h, w]`, `kernel` is `[out_ch, in_ch, kh, kw]`
    /// with odd `kh`, `kw`. Output is `[batch, out_ch, h, w]`.
    pub fn conv2d(&mut self, input: Tensor, kernel: Tensor) -> Result<Tensor> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 4
            || sk.len() != 4
            || si[1] != sk[1]
            || sk[2].is_multiple_of(2)
            || sk[3].is_multiple_of(2)
        {
            return Err(Error::shape("conv2d", format!("{:?} vs {:?}", si, sk)));
        }
        let dims = ConvDims::new(&si, &sk);
        let mut out = vec![0.0; dims.batch * dims.out_ch * dims.h * dims.w];
        dims.forward(
            self.value(input).data(),
            self.value(kernel).data(),
            &mut out,
        );
        let shape = vec![dims.batch, dims.out_ch, dims.h, dims.w];
        let rg = self.needs(&[input, kernel]);
        Ok(self.push(Array::new(shape, out)?, Op::Conv2d { input, kernel }, rg))
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Tensor) -> Result<Tensor> {
        let shape = self.shape(a).to_vec();
        let Some(&n) = shape.last() else {
            return Err(Error::shape("softmax", "rank-0 input"));
        };
        let mut out = self.value(a).data().to_vec();
        if n > 0 {
            for row in out.chunks_mut(n) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
            }
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Array::new(shape, out)?, Op::Softmax(a), rg))
    }

    /// Mean over every element; the result is a rank-0 scalar.
    pub fn mean(&mut self, a: Tensor) -> Result<Tensor> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::shape("mean", "empty input"));
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.needs(&[a]);
        Ok(self.push(Array::scalar(m), Op::Mean(a), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("transpose", format!("{:?}", shape)));
        }
        let r = shape[shape.len() - 2];
        let c = shape[shape.len() - 1];
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        for (block_in, block_out) in src.chunks(r * c).zip(out.chunks_mut(r * c)) {
            for i in 0..r {
                for j in 0..c {
                    block_out[j * r + i] = block_in[i * c + j];
                }
            }
        }
        let mut new_shape = shape;
        let n = new_shape.len();
        new_shape.swap(n - 2, n - 1);
        let rg = self.needs(&[a]);
        Ok(self.push(Array::new(new_shape, out)?, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Tensor, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.value(a).len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} vs {:?}", self.shape(a), shape),
            ));
        }
        let value = Array::new(shape.to_vec(), self.value(a).data().to_vec())?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, inputs: &[Tensor]) -> Result<Tensor> {
        let Some(&first) = inputs.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        let axis = self.shape(first).len().saturating_sub(1);
        self.concat_axis(inputs, axis)
    }

    /// Concatenation along an arbitrary axis.
    pub fn concat_axis(&mut self, inputs: &[Tensor], axis: usize) -> Result<Tensor> {
        let Some(&first) = inputs.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(
                "concat",
                format!("axis {} of {:?}", axis, base),
            ));
        }
        let mut total = 0;
        for &t in inputs {
            let s = self.shape(t);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", format!("{:?} vs {:?}", base, s)));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &t in inputs {
                let chunk = self.shape(t)[axis] * inner;
                out.extend_from_slice(&self.value(t).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.needs(inputs);
        Ok(self.push(
            Array::new(shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Circular shift along `axis`: `out[t] = in[(t - shift) mod n]`.
    pub fn roll(&mut self, a: Tensor, shift: isize, axis: usize) -> Result<Tensor> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "roll",
                format!("axis {} of {:?}", axis, shape),
            ));
        }
        let out = roll_data(self.value(a).data(), &shape, shift, axis);
        let rg = self.needs(&[a]);
        Ok(self.push(
            Array::new(shape, out)?,
            Op::Roll {
                input: a,
                shift,
                axis,
            },
            rg,
        ))
    }

    /// `out[i] = flat(a)[indices[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, a: Tensor, indices: Vec<usize>, shape: &[usize]) -> Result<Tensor> {
        let src = self.value(a).data();
        if numel(shape) != indices.len() {
            return Err(Error::shape(
                "gather",
                format!("{} indices vs output {:?}", indices.len(), shape),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape(
                "gather",
                format!("index {} out of bounds for {:?}", bad, self.shape(a)),
            ));
        }
        let out = indices.iter().map(|&i| src[i]).collect();
        let rg = self.needs(&[a]);
        Ok(self.push(
            Array::new(shape.to_vec(), out)?,
            Op::Gather { input: a, indices },
            rg,
        ))
    }

    pub fn scale(&mut self, a: Tensor, factor: f64) -> Tensor {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        if self.backward_done {
            return Err(Error::Accumulation);
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.adjoint(idx, &g);
            self.nodes[idx].grad = Some(g);
            for (t, c) in contributions {
                let node = &mut self.nodes[t.0];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(c),
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `idx` to each of its inputs.
    fn adjoint(&self, idx: usize, g: &[f64]) -> Vec<(Tensor, Vec<f64>)> {
        let mut out = Vec::new();
        let wants = |t: Tensor| self.nodes[t.0].requires_grad;
        let val = |t: Tensor| self.nodes[t.0].value.data();
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*b) {
                    out.push((*b, g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().map(|x| -x).collect()));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    out.push((*a, g.iter().zip(val(*b)).map(|(x, y)| x * y).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().zip(val(*a)).map(|(x, y)| x * y).collect()));
                }
            }
            Op::MatMul(a, b) => {
                let sb = self.nodes[b.0].value.shape();
                let (k, m) = (sb[0], sb[1]);
                let rows = self.nodes[a.0].value.len() / k;
                if wants(*a) {
                    // ga = g · bᵀ
                    let bv = val(*b);
                    let mut ga = vec![0.0; rows * k];
                    for r in 0..rows {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            ga[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    out.push((*a, ga));
                }
                if wants(*b) {
                    // gb = aᵀ · g
                    let av = val(*a);
                    let mut gb = vec![0.0; k * m];
                    for r in 0..rows {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let coef = av[r * k + p];
                            if coef == 0.0 {
                                continue;
                            }
                            let dst = &mut gb[p * m..(p + 1) * m];
                            dst.iter_mut().zip(grow).for_each(|(d, x)| *d += coef * x);
                        }
                    }
                    out.push((*b, gb));
                }
            }
            Op::Conv2d { input, kernel } => {
                let dims = ConvDims::new(
                    self.nodes[input.0].value.shape(),
                    self.nodes[kernel.0].value.shape(),
                );
                if wants(*input) {
                    out.push((*input, dims.grad_input(val(*kernel), g)));
                }
                if wants(*kernel) {
                    out.push((*kernel, dims.grad_kernel(val(*input), g)));
                }
            }
            Op::Relu(a) => {
                let grad = g
                    .iter()
                    .zip(val(*a))
                    .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                    .collect();
                out.push((*a, grad));
            }
            Op::Softmax(a) => {
                let y = self.nodes[idx].value.data();
                let n = *self.nodes[idx].value.shape().last().unwrap();
                let mut grad = vec![0.0; y.len()];
                if n > 0 {
                    for ((gr, yr), dst) in g.chunks(n).zip(y.chunks(n)).zip(grad.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((d, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                            *d = yi * (gi - dot);
                        }
                    }
                }
                out.push((*a, grad));
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len();
                out.push((*a, vec![g[0] / n as f64; n]));
            }
            Op::Transpose(a) => {
                let s = self.nodes[a.0].value.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                let mut grad = vec![0.0; g.len()];
                for (gb, dst) in g.chunks(r * c).zip(grad.chunks_mut(r * c)) {
                    for i in 0..r {
                        for j in 0..c {
                            dst[i * c + j] = gb[j * r + i];
                        }
                    }
                }
                out.push((*a, grad));
            }
            Op::Reshape(a) => out.push((*a, g.to_vec())),
            Op::Concat { inputs, axis } => {
                let shape = self.nodes[idx].value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &t in inputs {
                    let len = self.nodes[t.0].value.shape()[*axis];
                    if wants(t) {
                        let mut grad = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            grad.extend_from_slice(&g[start..start + len * inner]);
                        }
                        out.push((t, grad));
                    }
                    offset += len;
                }
            }
            Op::Roll { input, shift, axis } => {
                let shape = self.nodes[input.0].value.shape();
                out.push((*input, roll_data(g, shape, -shift, *axis)));
            }
            Op::Gather { input, indices } => {
                let mut grad = vec![0.0; self.nodes[input.0].value.len()];
                for (&i, x) in indices.iter().zip(g) {
                    grad[i] += x;
                }
                out.push((*input, grad));
            }
            Op::Scale(a, factor) => out.push((*a, g.iter().map(|x| x * factor).collect())),
        }
        out
    }
}

/// `out[rows, m] += a[rows, k] · b[k, m]`.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], rows: usize, k: usize, m: usize) {
    for r in 0..rows {
        let orow = &mut out[r * m..(r + 1) * m];
        for p in 0..k {
            let coef = a[r * k + p];
            if coef == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            orow.iter_mut().zip(brow).for_each(|(o, x)| *o += coef * x);
        }
    }
}

fn roll_data(src: &[f64], shape: &[usize], shift: isize, axis: usize) -> Vec<f64> {
    let (outer, n, inner) = split_axis(shape, axis);
    let mut out = vec![0.0; src.len()];
    if n == 0 {
        return out;
    }
    let s = shift.rem_euclid(n as isize) as usize;
    for o in 0..outer {
        let base = o * n * inner;
        for t in 0..n {
            let from = (t + n - s) % n;
            out[base + t * inner..base + (t + 1) * inner]
                .copy_from_slice(&src[base + from * inner..base + (from + 1) * inner]);
        }
    }
    out
}

struct ConvDims {
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

impl ConvDims {
    fn new(input: &[usize], kernel: &[usize]) -> Self {
        ConvDims {
            batch: input[0],
            in_ch: input[1],
            out_ch: kernel[0],
            h: input[2],
            w: input[3],
            kh: kernel[2],
            kw: kernel[3],
        }
    }

    /// Valid output range `[lo, hi)` along one axis for kernel tap `p`.
    fn span(len: usize, p: usize, radius: usize) -> (usize, usize) {
        let lo = radius.saturating_sub(p);
        let hi = (len + radius).saturating_sub(p).min(len);
        (lo, hi.max(lo))
    }

    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.batch * self.h * self.w
    }

    /// Patch matrix `[batch·h·w, in_ch·kh·kw]`; taps outside the grid are 0.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let (rh, rw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        let mut cols = vec![0.0; self.pixels() * patch];
        for b in 0..self.batch {
            for c in 0..self.in_ch {
                let xbase = (b * self.in_ch + c) * h * w;
                for p in 0..self.kh {
                    let (i_lo, i_hi) = Self::span(h, p, rh);
                    for q in 0..self.kw {
                        let (j_lo, j_hi) = Self::span(w, q, rw);
                        let col = (c * self.kh + p) * self.kw + q;
                        for i in i_lo..i_hi {
                            let src = xbase + (i + p - rh) * w + q;
                            let row = (b * h + i) * w;
                            for j in j_lo..j_hi {
                                cols[(row + j) * patch + col] = x[src + j - rw];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvDims::im2col`].
    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let (rh, rw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        let mut x = vec![0.0; self.batch * self.in_ch * h * w];
        for b in 0..self.batch {
            for c in 0..self.in_ch {
                let xbase = (b * self.in_ch + c) * h * w;
                for p in 0..self.kh {
                    let (i_lo, i_hi) = Self::span(h, p, rh);
                    for q in 0..self.kw {
                        let (j_lo, j_hi) = Self::span(w, q, rw);
                        let col = (c * self.kh + p) * self.kw + q;
                        for i in i_lo..i_hi {
                            let dst = xbase + (i + p - rh) * w + q;
                            let row = (b * h + i) * w;
                            for j in j_lo..j_hi {
                                x[dst + j - rw] += cols[(row + j) * patch + col];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// `[batch, ch, h·w]` to `[batch·h·w, ch]`.
    fn to_pixel_major(&self, y: &[f64], ch: usize) -> Vec<f64> {
        let hw = self.h * self.w;
        let mut out = vec![0.0; y.len()];
        for b in 0..self.batch {
            for o in 0..ch {
                let src = &y[(b * ch + o) * hw..(b * ch + o + 1) * hw];
                for (px, v) in src.iter().enumerate() {
                    out[(b * hw + px) * ch + o] = *v;
                }
            }
        }
        out
    }

    fn forward(&self, x: &[f64], k: &[f64], out: &mut [f64]) {
        let patch = self.patch();
        let cols = self.im2col(x);
        let mut kt = vec![0.0; patch * self.out_ch];
        for o in 0..self.out_ch {
            for r in 0..patch {
                kt[r * self.out_ch + o] = k[o * patch + r];
            }
        }
        let mut pm = vec![0.0; self.pixels() * self.out_ch];
        matmul_into(&cols, &kt, &mut pm, self.pixels(), patch, self.out_ch);
        let hw = self.h * self.w;
        for b in 0..self.batch {
            for px in 0..hw {
                let row = &pm[(b * hw + px) * self.out_ch..(b * hw + px + 1) * self.out_ch];
                for (o, v) in row.iter().enumerate() {
                    out[(b * self.out_ch + o) * hw + px] = *v;
                }
            }
        }
    }

    fn grad_input(&self, k: &[f64], g: &[f64]) -> Vec<f64> {
        let gp = self.to_pixel_major(g, self.out_ch);
        let mut dcols = vec![0.0; self.pixels() * self.patch()];
        matmul_into(&gp, k, &mut dcols, self.pixels(), self.out_ch, self.patch());
        self.col2im(&dcols)
    }

    fn grad_kernel(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let cols = self.im2col(x);
        let hw = self.h * self.w;
        // gᵀ as [out_ch, batch·h·w].
        let mut gt = vec![0.0; self.out_ch * self.pixels()];
        for b in 0..self.batch {
            for o in 0..self.out_ch {
                gt[o * self.pixels() + b * hw..o * self.pixels() + (b + 1) * hw].copy_from_slice(
                    &g[(b * self.out_ch + o) * hw..(b * self.out_ch + o + 1) * hw],
                );
            }
        }
        let mut gk = vec![0.0; self.out_ch * self.patch()];
        matmul_into(
            &gt,
            &cols,
            &mut gk,
            self.out_ch,
            self.pixels(),
            self.patch(),
        );
        gk
    }
}
