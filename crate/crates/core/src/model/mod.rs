//! The forecasting network.
//!
//! Input frames `X: [B, M, H, W]` pass through a multi-scale convolution stage
//! with a residual path (`V: [B, M, N]`), are gated elementwise by the optical
//! flow components and fused back to `N` features, embedded to `d_model`,
//! mixed along time by a lag-selection auto-correlation block, and decoded to
//! a predicted delay attractor `[B, L, M]`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::tensor::{Array, Graph, Tensor};

/// Which of the three ablatable components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub optical_attention: bool,
    pub inception: bool,
    pub autocorrelation: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components {
            optical_attention: true,
            inception: true,
            autocorrelation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input window length M.
    pub window: usize,
    /// Forecast horizon L.
    pub horizon: usize,
    pub height: usize,
    pub width: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub kernel_sizes: Vec<usize>,
    pub top_k: usize,
    pub seed: u64,
    pub components: Components,
}

/// `⌈ln M⌉`, at least 1.
pub fn default_top_k(window: usize) -> usize {
    ((window as f64).ln().ceil() as usize).clamp(1, window.max(1))
}

impl ModelConfig {
    pub fn new(window: usize, horizon: usize, height: usize, width: usize) -> Self {
        ModelConfig {
            window,
            horizon,
            height,
            width,
            d_model: 128,
            d_ff: 256,
            kernel_sizes: vec![1, 3, 5],
            top_k: default_top_k(window),
            seed: 0,
            components: Components::default(),
        }
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.horizon == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "window, horizon and grid sizes must be positive: {:?}",
                self
            )));
        }
        if self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("d_model and d_ff must be at least 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.window {
            return Err(Error::Config(format!(
                "top_k = {} must lie in [1, {}]",
                self.top_k, self.window
            )));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!(
                "kernel sizes must be odd and non-empty, got {:?}",
                self.kernel_sizes
            )));
        }
        Ok(())
    }
}

/// Weight and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub w: T,
    pub b: T,
}

/// Every learnable tensor of the model, generic over storage so the same
/// layout serves for values (`Array`), graph handles (`Tensor`) and optimizer
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    /// One convolution per kernel size: `[M, M, k, k]` and `[M]`.
    pub branches: Vec<Affine<T>>,
    /// `[M, M·branches, 1, 1]` and `[M]`.
    pub reducer: Affine<T>,
    /// `[2N, N]` and `[N]`.
    pub fusion: Affine<T>,
    /// `[N, d_model]` and `[d_model]`.
    pub encoder: Affine<T>,
    pub query: Affine<T>,
    pub key: Affine<T>,
    pub value: Affine<T>,
    /// `[d_model, d_ff]` then `[d_ff, d_model]`.
    pub ff1: Affine<T>,
    pub ff2: Affine<T>,
    /// `[d_model, L]` and `[L]`.
    pub head: Affine<T>,
}

pub type ModelParams = Weights<Array>;

impl<T> Weights<T> {
    fn layers(&self) -> Vec<&Affine<T>> {
        let mut out: Vec<&Affine<T>> = self.branches.iter().collect();
        out.extend([
            &self.reducer,
            &self.fusion,
            &self.encoder,
            &self.query,
            &self.key,
            &self.value,
            &self.ff1,
            &self.ff2,
            &self.head,
        ]);
        out
    }

    /// Layer names in declared order.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.branches.len())
            .map(|i| format!("branch{i}"))
            .collect();
        names.extend(
            [
                "reducer", "fusion", "encoder", "query", "key", "value", "ff1", "ff2", "head",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        names
    }

    /// Every tensor in declared order: each layer's weight, then its bias.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers().into_iter().flat_map(|a| [&a.w, &a.b])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        let mut layers: Vec<&mut Affine<T>> = self.branches.iter_mut().collect();
        layers.extend([
            &mut self.reducer,
            &mut self.fusion,
            &mut self.encoder,
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.ff1,
            &mut self.ff2,
            &mut self.head,
        ]);
        layers.into_iter().flat_map(|a| {
            let Affine { w, b } = a;
            [w, b]
        })
    }

    pub fn count(&self) -> usize {
        2 * (self.branches.len() + 9)
    }

    /// Rebuilds the same layout from items given in declared order.
    pub fn rebuild<U>(&self, items: impl IntoIterator<Item = U>) -> Result<Weights<U>> {
        let mut it = items.into_iter();
        let mut next = || -> Result<Affine<U>> {
            match (it.next(), it.next()) {
                (Some(w), Some(b)) => Ok(Affine { w, b }),
                _ => Err(Error::Invariant(
                    "too few tensors to rebuild weights".into(),
                )),
            }
        };
        let mut branches = Vec::with_capacity(self.branches.len());
        for _ in 0..self.branches.len() {
            branches.push(next()?);
        }
        Ok(Weights {
            branches,
            reducer: next()?,
            fusion: next()?,
            encoder: next()?,
            query: next()?,
            key: next()?,
            value: next()?,
            ff1: next()?,
            ff2: next()?,
            head: next()?,
        })
    }

    pub fn try_map<U>(&self, f: impl FnMut(&T) -> Result<U>) -> Result<Weights<U>> {
        let items = self.iter().map(f).collect::<Result<Vec<U>>>()?;
        self.rebuild(items)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Weights<U> {
        let items: Vec<U> = self.iter().map(f).collect();
        self.rebuild(items).expect("same layout")
    }
}

impl ModelParams {
    /// Shapes implied by `cfg`, in declared order.
    pub fn shapes(cfg: &ModelConfig) -> Vec<Vec<usize>> {
        let (m, n, d) = (cfg.window, cfg.cells(), cfg.d_model);
        let mut shapes = Vec::new();
        for &k in &cfg.kernel_sizes {
            shapes.push(vec![m, m, k, k]);
            shapes.push(vec![m]);
        }
        shapes.push(vec![m, m * cfg.kernel_sizes.len(), 1, 1]);
        shapes.push(vec![m]);
        let mut dense = |i: usize, o: usize| {
            shapes.push(vec![i, o]);
            shapes.push(vec![o]);
        };
        dense(2 * n, n);
        dense(n, d);
        dense(d, d);
        dense(d, d);
        dense(d, d);
        dense(d, cfg.d_ff);
        dense(cfg.d_ff, d);
        dense(d, cfg.horizon);
        shapes
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization, seeded by `cfg.seed`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let shapes = Self::shapes(cfg);
        let mut arrays = Vec::with_capacity(shapes.len());
        for pair in shapes.chunks(2) {
            let w_shape = &pair[0];
            // Dense weights are [in, out]; conv kernels are [out, in, kh, kw].
            let fan_in = if w_shape.len() == 4 {
                w_shape[1] * w_shape[2] * w_shape[3]
            } else {
                w_shape[0]
            };
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for shape in pair {
                let len: usize = shape.iter().product();
                let data = (0..len).map(|_| rng.gen_range(-bound..=bound)).collect();
                arrays.push(Array::new(shape.clone(), data)?);
            }
        }
        let template = Weights {
            branches: vec![Affine { w: (), b: () }; cfg.kernel_sizes.len()],
            reducer: Affine { w: (), b: () },
            fusion: Affine { w: (), b: () },
            encoder: Affine { w: (), b: () },
            query: Affine { w: (), b: () },
            key: Affine { w: (), b: () },
            value: Affine { w: (), b: () },
            ff1: Affine { w: (), b: () },
            ff2: Affine { w: (), b: () },
            head: Affine { w: (), b: () },
        };
        template.rebuild(arrays)
    }

    /// Checks every shape against `cfg` and every value for finiteness.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Self::shapes(cfg);
        if self.count() != expected.len() {
            return Err(Error::shape(
                "model params",
                format!("{} tensors, config needs {}", self.count(), expected.len()),
            ));
        }
        for ((a, want), name) in self.iter().zip(&expected).zip(
            self.layer_names()
                .iter()
                .flat_map(|n| [n.clone(), n.clone()]),
        ) {
            if a.shape() != want.as_slice() {
                return Err(Error::shape(
                    "model params",
                    format!("{}: {:?}, expected {:?}", name, a.shape(), want),
                ));
            }
            if !a.all_finite() {
                return Err(Error::Invariant(format!("non-finite values in {}", name)));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.iter().map(Array::len).sum()
    }

    /// Registers every array as a trainable leaf of `g`.
    pub fn to_graph(&self, g: &mut Graph) -> Weights<Tensor> {
        self.map(|a| g.param(a.clone()))
    }

    /// Registers every array as a constant of `g`.
    pub fn to_graph_constant(&self, g: &mut Graph) -> Weights<Tensor> {
        self.map(|a| g.constant(a.clone()))
    }
}

/// Elementwise flow gates `αx`, `αy`, each `[B, M, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGates {
    pub ax: Array,
    pub ay: Array,
}

impl FlowGates {
    /// Stacks one flow sequence per batch element.
    pub fn from_sequences(seqs: &[&FlowSequence], window: usize, cells: usize) -> Result<Self> {
        let mut ax = Vec::with_capacity(seqs.len() * window * cells);
        let mut ay = Vec::with_capacity(seqs.len() * window * cells);
        for s in seqs {
            if s.len() != window {
                return Err(Error::shape(
                    "optical_attention",
                    format!("flow sequence of length {}, window is {}", s.len(), window),
                ));
            }
            if s.flows.iter().any(|f| f.h * f.w != cells) {
                return Err(Error::shape(
                    "optical_attention",
                    format!("flow fields do not have {} cells", cells),
                ));
            }
            ax.extend(s.alpha_x());
            ay.extend(s.alpha_y());
        }
        let shape = vec![seqs.len(), window, cells];
        Ok(FlowGates {
            ax: Array::new(shape.clone(), ax)?,
            ay: Array::new(shape, ay)?,
        })
    }

    /// Constant gates, as used when flow guidance is ablated.
    pub fn uniform(batch: usize, window: usize, cells: usize, ax: f64, ay: f64) -> Self {
        FlowGates {
            ax: Array::full(&[batch, window, cells], ax),
            ay: Array::full(&[batch, window, cells], ay),
        }
    }

    pub fn batch(&self) -> usize {
        self.ax.shape()[0]
    }
}

fn expect_shape(g: &Graph, t: Tensor, op: &'static str, want: &[usize]) -> Result<()> {
    if g.shape(t) != want {
        return Err(Error::shape(
            op,
            format!("got {:?}, expected {:?}", g.shape(t), want),
        ));
    }
    Ok(())
}

fn batch_of(g: &Graph, x: Tensor, cfg: &ModelConfig) -> Result<usize> {
    let s = g.shape(x);
    if s.len() != 4 || s[1] != cfg.window || s[2] != cfg.height || s[3] != cfg.width {
        return Err(Error::shape(
            "forward",
            format!(
                "input {:?}, expected [B, {}, {}, {}]",
                s, cfg.window, cfg.height, cfg.width
            ),
        ));
    }
    Ok(s[0])
}

/// `V = (Inception(X) + X).reshape(B, M, N)`.
pub fn inception_forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &Weights<Tensor>,
    x: Tensor,
) -> Result<Tensor> {
    let b = batch_of(g, x, cfg)?;
    let shape = [b, cfg.window, cfg.cells()];
    if !cfg.components.inception {
        return g.reshape(x, &shape);
    }
    let xs = g.shape(x).to_vec();
    let mut outs = Vec::with_capacity(p.branches.len());
    for branch in &p.branches {
        let y = g.conv2d(x, branch.w)?;
        let bias = g.broadcast_channels(branch.b, &xs)?;
        outs.push(g.add(y, bias)?);
    }
    let cat = g.concat_axis(&outs, 1)?;
    let reduced = g.conv2d(cat, p.reducer.w)?;
    let bias = g.broadcast_channels(p.reducer.b, &xs)?;
    let reduced = g.add(reduced, bias)?;
    let sum = g.add(reduced, x)?;
    g.reshape(sum, &shape)
}

/// Flow-gated fusion: `linear(concat(αx ⊙ V, αy ⊙ V))`, `[B, M, N]`.
pub fn optical_attention(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &Weights<Tensor>,
    x: Tensor,
    gates: &FlowGates,
) -> Result<Tensor> {
    let v = inception_forward(g, cfg, p, x)?;
    let want = g.shape(v).to_vec();
    let (ax, ay) = if cfg.components.optical_attention {
        if gates.ax.shape() != want.as_slice() || gates.ay.shape() != want.as_slice() {
            return Err(Error::shape(
                "optical_attention",
                format!("gates {:?}, features {:?}", gates.ax.shape(), want),
            ));
        }
        (gates.ax.clone(), gates.ay.clone())
    } else {
        (Array::ones(&want), Array::ones(&want))
    };
    let ax = g.constant(ax);
    let ay = g.constant(ay);
    let xf = g.mul(ax, v)?;
    let yf = g.mul(ay, v)?;
    let integral = g.concat(&[xf, yf])?;
    g.linear(integral, p.fusion.w, p.fusion.b)
}

/// `Z = Õ · W_e + b_e`, `[B, M, d_model]`.
pub fn encode(g: &mut Graph, p: &Weights<Tensor>, o: Tensor) -> Result<Tensor> {
    g.linear(o, p.encoder.w, p.encoder.b)
}

/// Per-lag scores `R[b, τ] = mean_{t, c} q[b, t, c] · k[b, (t − τ) mod M, c]`.
pub fn autocorrelation_scores(g: &mut Graph, q: Tensor, k: Tensor) -> Result<Tensor> {
    let s = g.shape(q).to_vec();
    if s.len() != 3 || g.shape(k) != s.as_slice() {
        return Err(Error::shape(
            "autocorrelation_scores",
            format!("{:?} vs {:?}", s, g.shape(k)),
        ));
    }
    let (b, m, d) = (s[0], s[1], s[2]);
    // With G = q[b] · k[b]ᵀ, R[b, τ] is the mean of the wrapped diagonal
    // G[t, (t − τ) mod M], scaled by 1/d.
    let diagonals: Vec<usize> = (0..m)
        .flat_map(|tau| (0..m).map(move |t| t * m + (t + m - tau) % m))
        .collect();
    let averager = g.constant(Array::full(&[m, 1], 1.0 / (m * d) as f64));
    let mut rows = Vec::with_capacity(b);
    for bi in 0..b {
        let qb = batch_slice(g, q, bi)?;
        let kb = batch_slice(g, k, bi)?;
        let kt = g.transpose(kb)?;
        let gram = g.matmul(qb, kt)?;
        let diag = g.gather(gram, diagonals.clone(), &[m, m])?;
        let r = g.matmul(diag, averager)?;
        rows.push(g.reshape(r, &[1, m])?);
    }
    g.concat_axis(&rows, 0)
}

/// Element `index` of the leading axis as a tensor of rank one less.
fn batch_slice(g: &mut Graph, x: Tensor, index: usize) -> Result<Tensor> {
    let shape = g.shape(x)[1..].to_vec();
    let len: usize = shape.iter().product();
    g.gather(x, (index * len..(index + 1) * len).collect(), &shape)
}

/// The `top_k` lags of one score row, best first; ties go to the smaller lag.
pub fn top_lags(scores: &[f64], top_k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    order
}

fn feed_forward(g: &mut Graph, p: &Weights<Tensor>, z: Tensor) -> Result<Tensor> {
    let h = g.linear(z, p.ff1.w, p.ff1.b)?;
    let h = g.relu(h);
    g.linear(h, p.ff2.w, p.ff2.b)
}

/// Lag aggregation `Σ_{τ ∈ top_k} softmax(R)[τ] · roll(v, τ)`, plus residual
/// and a residual feed-forward pair.
pub fn autocorrelation_block(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &Weights<Tensor>,
    z: Tensor,
) -> Result<Tensor> {
    let s = g.shape(z).to_vec();
    if s.len() != 3 || s[1] != cfg.window || s[2] != cfg.d_model {
        return Err(Error::shape(
            "autocorrelation_block",
            format!("{:?}, expected [B, {}, {}]", s, cfg.window, cfg.d_model),
        ));
    }
    if !cfg.components.autocorrelation {
        let ff = feed_forward(g, p, z)?;
        return g.add(z, ff);
    }
    let (b, m, d) = (s[0], s[1], s[2]);
    let k_top = cfg.top_k;
    if k_top == 0 || k_top > m {
        return Err(Error::Config(format!(
            "top_k = {} must lie in [1, {}]",
            k_top, m
        )));
    }
    let q = g.linear(z, p.query.w, p.query.b)?;
    let k = g.linear(z, p.key.w, p.key.b)?;
    let v = g.linear(z, p.value.w, p.value.b)?;
    let r = autocorrelation_scores(g, q, k)?;

    let scores = g.value(r).data().to_vec();
    let selected: Vec<Vec<usize>> = scores.chunks(m).map(|row| top_lags(row, k_top)).collect();
    let picks = selected
        .iter()
        .enumerate()
        .flat_map(|(bi, lags)| lags.iter().map(move |&tau| bi * m + tau))
        .collect();
    let picked = g.gather(r, picks, &[b, k_top])?;
    let weights = g.softmax(picked)?;
    // A zero column lets batches that did not select a lag gather weight 0.
    let zero = g.constant(Array::zeros(&[b, 1]));
    let padded = g.concat(&[weights, zero])?;

    // agg[b] = A[b] · v[b] with A[b][t, s] = weight of lag (t − s) mod M.
    let mut parts = Vec::with_capacity(b);
    for (bi, lags) in selected.iter().enumerate() {
        let mut slot_of = vec![k_top; m];
        for (slot, &tau) in lags.iter().enumerate() {
            slot_of[tau] = slot;
        }
        let indices = (0..m)
            .flat_map(|t| (0..m).map(move |s| (t, s)))
            .map(|(t, s)| bi * (k_top + 1) + slot_of[(t + m - s) % m])
            .collect();
        let mix = g.gather(padded, indices, &[m, m])?;
        let vb = batch_slice(g, v, bi)?;
        let part = g.matmul(mix, vb)?;
        parts.push(g.reshape(part, &[1, m, d])?);
    }
    let agg = g.concat_axis(&parts, 0)?;
    let z1 = g.add(z, agg)?;
    let ff = feed_forward(g, p, z1)?;
    g.add(z1, ff)
}

/// Head `d_model → L` along the last axis, transposed to `[B, L, M]`.
pub fn decode(g: &mut Graph, p: &Weights<Tensor>, z: Tensor) -> Result<Tensor> {
    let y = g.linear(z, p.head.w, p.head.b)?;
    g.transpose(y)
}

/// Full network: `[B, M, H, W]` frames to `[B, L, M]` delay attractors.
pub fn forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    p: &Weights<Tensor>,
    x: Tensor,
    gates: &FlowGates,
) -> Result<Tensor> {
    let o = optical_attention(g, cfg, p, x, gates)?;
    let z = encode(g, p, o)?;
    expect_shape(g, z, "encode", &[g.shape(x)[0], cfg.window, cfg.d_model])?;
    let z = autocorrelation_block(g, cfg, p, z)?;
    decode(g, p, z)
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Model { config, params })
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, x: &Array, gates: &FlowGates) -> Result<Array> {
        let mut g = Graph::new();
        let p = self.params.to_graph_constant(&mut g);
        let xt = g.constant(x.clone());
        let out = forward(&mut g, &self.config, &p, xt, gates)?;
        Ok(g.value(out).clone())
    }
}
