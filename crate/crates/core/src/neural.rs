//! Small feed-forward networks with hand-written backprop, Adam/SGD, and the
//! policy heads used by the trainers.
//!
//! All parameters of a network live in one flat vector; gradients use the
//! same layout so optimizers work on plain slices.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Result, TdlError};
use crate::gaussian::DiagGaussian;
use crate::targets::compose_std;

const SMALL_GEMM: usize = 16_384;

/// Row-major `c = a * b + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m * k * n <= SMALL_GEMM {
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            if beta == 0.0 {
                row.fill(0.0);
            } else if beta != 1.0 {
                row.iter_mut().for_each(|v| *v *= beta);
            }
            for p in 0..k {
                let x = a[i * rsa + p * csa];
                for (j, v) in row.iter_mut().enumerate() {
                    *v += x * b[p * rsb + j * csb];
                }
            }
        }
        return;
    }
    // SAFETY: strides describe in-bounds views of the given slices; the
    // callers below derive them from the same shapes used to size the buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Tanh hidden layers, identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass.
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(TdlError::InvalidArgument(format!(
                "bad layer sizes {sizes:?}"
            )));
        }
        let n = Self::param_count(sizes);
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Uniform init in `+-1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            let (w, b) = net.layer_range(l);
            for p in &mut net.params[w.start..b.end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(TdlError::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let off: usize = Self::param_count(&self.sizes[..=l]);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        (off..off + i * o, off + i * o..off + i * o + o)
    }

    /// Multiplies the output layer's weights and biases by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let (w, b) = self.layer_range(self.num_layers() - 1);
        for p in &mut self.params[w.start..b.end] {
            *p *= factor;
        }
    }

    /// Sets every output bias to `value`.
    pub fn set_output_bias(&mut self, value: f64) {
        let (_, b) = self.layer_range(self.num_layers() - 1);
        for p in &mut self.params[b] {
            *p = value;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.acts.pop().unwrap())
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<ForwardCache> {
        if inputs.len() != batch * self.input_dim() {
            return Err(TdlError::DimensionMismatch {
                expected: batch * self.input_dim(),
                got: inputs.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(inputs.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_range(l);
            let bias = &self.params[b];
            let mut z: Vec<f64> = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            gemm(batch, i, o, &acts[l], (i, 1), &self.params[w], (o, 1), 1.0, &mut z);
            if l != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(ForwardCache { batch, acts })
    }

    /// Gradient of the parameters given `d loss / d output` for a cached pass.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64]) -> Vec<f64> {
        let batch = cache.batch;
        let mut grads = vec![0.0; self.params.len()];
        let mut dz = dout.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_range(l);
            let a = &cache.acts[l];
            // dW = a^T dz
            gemm(i, batch, o, a, (1, i), &dz, (o, 1), 0.0, &mut grads[w.clone()]);
            let db = &mut grads[b];
            for row in dz.chunks_exact(o) {
                for (g, v) in db.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if l > 0 {
                // da = dz W^T, then through tanh
                let mut da = vec![0.0; batch * i];
                gemm(batch, o, i, &dz, (o, 1), &self.params[w], (1, o), 0.0, &mut da);
                for (d, act) in da.iter_mut().zip(a) {
                    *d *= 1.0 - act * act;
                }
                dz = da;
            }
        }
        grads
    }

    /// Mean over the batch of the squared error summed over outputs, and its
    /// exact gradient.
    pub fn backward_mse(&self, inputs: &[f64], targets: &[f64], batch: usize) -> Result<(f64, Vec<f64>)> {
        if batch == 0 {
            return Err(TdlError::Empty("minibatch"));
        }
        if targets.len() != batch * self.output_dim() {
            return Err(TdlError::DimensionMismatch {
                expected: batch * self.output_dim(),
                got: targets.len(),
            });
        }
        let cache = self.forward_batch(inputs, batch)?;
        let (loss, dout) = mse_loss(cache.output(), targets, batch);
        Ok((loss, self.backward(&cache, &dout)))
    }
}

fn mse_loss(out: &[f64], targets: &[f64], batch: usize) -> (f64, Vec<f64>) {
    let inv = 1.0 / batch as f64;
    let mut loss = 0.0;
    let dout = out
        .iter()
        .zip(targets)
        .map(|(o, t)| {
            let r = o - t;
            loss += r * r;
            2.0 * r * inv
        })
        .collect();
    (loss * inv, dout)
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Sgd {
        lr: f64,
    },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let buf = match kind {
            OptimizerKind::Adam { .. } => num_params,
            OptimizerKind::Sgd { .. } => 0,
        };
        Optimizer {
            kind,
            m: vec![0.0; buf],
            v: vec![0.0; buf],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient shape mismatch");
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                assert_eq!(self.m.len(), params.len(), "optimizer sized for other params");
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

/// Gaussian policy: a mean network, an optional state-dependent log-std
/// network, and a state-independent log-std vector blended with exponent
/// `varphi`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHeads {
    pub mean_net: Mlp,
    pub logstd_net: Option<Mlp>,
    pub global_logstd: Vec<f64>,
    pub varphi: f64,
}

/// Gradients of a policy objective with respect to the head parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrads {
    pub mean: Vec<f64>,
    pub logstd_net: Option<Vec<f64>>,
    pub global_logstd: Vec<f64>,
}

impl PolicyGrads {
    pub fn norm(&self) -> f64 {
        let mut s: f64 = self.mean.iter().chain(&self.global_logstd).map(|v| v * v).sum();
        if let Some(g) = &self.logstd_net {
            s += g.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }
}

impl PolicyHeads {
    /// `hidden` lists hidden layer widths. The state-dependent head is only
    /// built when `varphi > 0`.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        sigma0: f64,
        varphi: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma0 > 0.0) {
            return Err(TdlError::InvalidArgument("sigma0 must be positive".into()));
        }
        let sizes = layer_sizes(state_dim, hidden, action_dim);
        let mut mean_net = Mlp::new(&sizes, rng)?;
        mean_net.scale_output_layer(0.01);
        let logstd_net = if varphi > 0.0 {
            let mut net = Mlp::new(&sizes, rng)?;
            net.scale_output_layer(0.01);
            net.set_output_bias(sigma0.ln());
            Some(net)
        } else {
            None
        };
        Ok(PolicyHeads {
            mean_net,
            logstd_net,
            global_logstd: vec![sigma0.ln(); action_dim],
            varphi,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.global_logstd.len()
    }

    pub fn global_std(&self) -> Vec<f64> {
        self.global_logstd.iter().map(|l| l.exp()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net.is_finite()
            && self.logstd_net.as_ref().is_none_or(Mlp::is_finite)
            && self.global_logstd.iter().all(|v| v.is_finite())
    }

    /// Weight of the state-independent component in log space.
    fn global_weight(&self) -> f64 {
        1.0 / (self.varphi + 1.0)
    }

    /// Means (row-major) and per-sample log-stds for a batch of states.
    fn batch_stats(&self, states: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let means = self.mean_net.forward_batch(states, batch)?.acts.pop().unwrap();
        let d = self.action_dim();
        let log_std = match &self.logstd_net {
            None => self.global_logstd.repeat(batch),
            Some(net) => {
                let local = net.forward_batch(states, batch)?.acts.pop().unwrap();
                let w = self.global_weight();
                local
                    .iter()
                    .enumerate()
                    .map(|(k, l)| w * self.global_logstd[k % d] + (1.0 - w) * l)
                    .collect()
            }
        };
        Ok((means, log_std))
    }

    pub fn dist(&self, state: &[f64]) -> Result<DiagGaussian> {
        Ok(self.dists(state, 1)?.pop().unwrap())
    }

    pub fn dists(&self, states: &[f64], batch: usize) -> Result<Vec<DiagGaussian>> {
        let (means, log_std) = self.batch_stats(states, batch)?;
        let d = self.action_dim();
        means
            .chunks_exact(d)
            .zip(log_std.chunks_exact(d))
            .map(|(m, l)| DiagGaussian::from_log_std(m.to_vec(), l))
            .collect()
    }

    /// Std of the blended head evaluated through [`compose_std`]; used to
    /// cross-check the log-space blend.
    pub fn composed_std(&self, state: &[f64]) -> Result<Vec<f64>> {
        let global = self.global_std();
        match &self.logstd_net {
            None => Ok(global),
            Some(net) => {
                let local: Vec<f64> = net.forward(state)?.iter().map(|l| l.exp()).collect();
                compose_std(&global, &local, self.varphi)
            }
        }
    }

    /// Gradient of `(1/M) sum_t c_t log N(a_t | mu(s_t), sigma(s_t))`.
    pub fn backward_weighted_logprob(
        &self,
        states: &[f64],
        actions: &[f64],
        coeffs: &[f64],
    ) -> Result<PolicyGrads> {
        self.backward_logprob_with_entropy(states, actions, coeffs, 0.0)
    }

    /// As [`Self::backward_weighted_logprob`] plus `entropy_coef` times the
    /// mean entropy.
    pub fn backward_logprob_with_entropy(
        &self,
        states: &[f64],
        actions: &[f64],
        coeffs: &[f64],
        entropy_coef: f64,
    ) -> Result<PolicyGrads> {
        let batch = coeffs.len();
        let d = self.action_dim();
        if batch == 0 {
            return Err(TdlError::Empty("minibatch"));
        }
        if actions.len() != batch * d {
            return Err(TdlError::DimensionMismatch {
                expected: batch * d,
                got: actions.len(),
            });
        }
        let mean_cache = self.mean_net.forward_batch(states, batch)?;
        let local_cache = match &self.logstd_net {
            Some(net) => Some(net.forward_batch(states, batch)?),
            None => None,
        };
        let w = self.global_weight();
        let inv = 1.0 / batch as f64;
        let mut d_mean = vec![0.0; batch * d];
        let mut d_logstd = vec![0.0; batch * d];
        let means = mean_cache.output();
        for b in 0..batch {
            for k in 0..d {
                let idx = b * d + k;
                let log_std = match &local_cache {
                    None => self.global_logstd[k],
                    Some(c) => w * self.global_logstd[k] + (1.0 - w) * c.output()[idx],
                };
                let var = (2.0 * log_std).exp();
                let r = actions[idx] - means[idx];
                d_mean[idx] = coeffs[b] * r / var * inv;
                d_logstd[idx] = (coeffs[b] * (r * r / var - 1.0) + entropy_coef) * inv;
            }
        }
        let mean = self.mean_net.backward(&mean_cache, &d_mean);
        let mut global = vec![0.0; d];
        let scale_global = if local_cache.is_some() { w } else { 1.0 };
        for (k, g) in d_logstd.iter().enumerate() {
            global[k % d] += scale_global * g;
        }
        let logstd_net = match (&self.logstd_net, &local_cache) {
            (Some(net), Some(cache)) => {
                let dl: Vec<f64> = d_logstd.iter().map(|g| (1.0 - w) * g).collect();
                Some(net.backward(cache, &dl))
            }
            _ => None,
        };
        Ok(PolicyGrads {
            mean,
            logstd_net,
            global_logstd: global,
        })
    }

    /// MSE of the state-dependent std `exp(net(s))` against per-sample target
    /// stds, and its gradient. `None` when the head is not built.
    pub fn backward_std_mse(
        &self,
        states: &[f64],
        targets: &[f64],
        batch: usize,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let Some(net) = &self.logstd_net else {
            return Ok(None);
        };
        let cache = net.forward_batch(states, batch)?;
        let inv = 1.0 / batch as f64;
        let mut loss = 0.0;
        let dout: Vec<f64> = cache
            .output()
            .iter()
            .zip(targets)
            .map(|(z, t)| {
                let s = z.exp();
                let r = s - t;
                loss += r * r;
                2.0 * r * s * inv
            })
            .collect();
        Ok(Some((loss * inv, net.backward(&cache, &dout))))
    }

    pub fn checkpoint_tensors(&self, prefix: &str) -> Vec<Tensor> {
        let mut out = vec![self.mean_net.to_tensor(&format!("{prefix}mean_net"))];
        if let Some(net) = &self.logstd_net {
            out.push(net.to_tensor(&format!("{prefix}logstd_net")));
        }
        out.push(Tensor::dense(
            &format!("{prefix}global_logstd"),
            self.global_logstd.clone(),
        ));
        out.push(Tensor::dense(&format!("{prefix}varphi"), vec![self.varphi]));
        out
    }

    pub fn from_checkpoint_tensors(tensors: &[Tensor], prefix: &str) -> Result<Self> {
        let find = |name: &str| {
            let full = format!("{prefix}{name}");
            tensors.iter().find(|t| t.name == full)
        };
        let missing = |n: &str| TdlError::Checkpoint(format!("missing tensor {prefix}{n}"));
        let mean_net = Mlp::from_tensor(find("mean_net").ok_or_else(|| missing("mean_net"))?)?;
        let logstd_net = find("logstd_net").map(Mlp::from_tensor).transpose()?;
        let global_logstd = find("global_logstd")
            .ok_or_else(|| missing("global_logstd"))?
            .data
            .clone();
        let varphi = find("varphi").ok_or_else(|| missing("varphi"))?.data[0];
        Ok(PolicyHeads {
            mean_net,
            logstd_net,
            global_logstd,
            varphi,
        })
    }
}

pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

// Checkpoint format, version 1, all integers and floats little-endian:
//
//   magic   b"TDLCKPT\0"
//   version u32
//   count   u32
//   count x { name_len u32, name utf-8, kind u8, ndim u32, dims u64 x ndim, data f64 x len }
//
// kind 0 is a dense array with len = prod(dims). kind 1 is an MLP: dims are its
// layer sizes and data is the flat parameter vector (per layer: weights
// in x out row-major, then biases).

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TDLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Dense = 0,
    Mlp = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn dense(name: &str, data: Vec<f64>) -> Self {
        Tensor {
            name: name.to_string(),
            kind: TensorKind::Dense,
            shape: vec![data.len()],
            data,
        }
    }
}

impl Mlp {
    pub fn to_tensor(&self, name: &str) -> Tensor {
        Tensor {
            name: name.to_string(),
            kind: TensorKind::Mlp,
            shape: self.sizes.clone(),
            data: self.params.clone(),
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.kind != TensorKind::Mlp {
            return Err(TdlError::Checkpoint(format!("{} is not an MLP tensor", t.name)));
        }
        Mlp::from_params(&t.shape, t.data.clone())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[Tensor]) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&[t.kind as u8])?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for d in &t.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<Tensor>> {
    let err = |m: &str| TdlError::Checkpoint(m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| err("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(err("bad magic"));
    }
    let read_u32 = |r: &mut R| -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|_| err("truncated"))?;
        Ok(u32::from_le_bytes(b))
    };
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(TdlError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| err("truncated name"))?;
        let name = String::from_utf8(name).map_err(|_| err("name is not utf-8"))?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind).map_err(|_| err("truncated kind"))?;
        let kind = match kind[0] {
            0 => TensorKind::Dense,
            1 => TensorKind::Mlp,
            k => return Err(TdlError::Checkpoint(format!("unknown tensor kind {k}"))),
        };
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| err("truncated shape"))?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let len = match kind {
            TensorKind::Dense => shape.iter().product(),
            TensorKind::Mlp => Mlp::param_count(&shape),
        };
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| err("truncated data"))?;
            data.push(f64::from_le_bytes(b));
        }
        tensors.push(Tensor {
            name,
            kind,
            shape,
            data,
        });
    }
    Ok(tensors)
}

pub fn save_checkpoint(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| TdlError::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), tensors).map_err(|e| TdlError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Tensor>> {
    let file = std::fs::File::open(path).map_err(|e| TdlError::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
