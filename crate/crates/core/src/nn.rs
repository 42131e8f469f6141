//! Feed-forward networks, parameter bookkeeping, Adam, and checkpoints.

use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::{stream, Stream};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter `{0}` has no gradient; run backward before the optimizer step")]
    MissingGrad(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Activation applied after an affine layer. The leaky slope is fixed at
/// 0.2 everywhere it is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Sigmoid,
    Tanh,
    Identity,
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Relu => t.relu(),
            Activation::LeakyRelu => t.leaky_relu(LEAKY_SLOPE),
            Activation::Sigmoid => t.sigmoid(),
            Activation::Tanh => t.tanh(),
            Activation::Identity => t.clone(),
        }
    }
}

/// One affine map: `weight` is `[in x out]`, `bias` is `[1 x out]`.
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// A fully connected network: a chain of affine layers with activations.
pub struct MlpNet {
    layers: Vec<(LinearLayer, Activation)>,
    in_dim: usize,
    out_dim: usize,
}

impl MlpNet {
    /// Build a network with the given layer widths. Weights are drawn
    /// uniformly from the fan-average interval
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases
    /// start at zero. Deterministic for a given seed.
    pub fn init(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<MlpNet, NnError> {
        let mut rng = stream(seed, Stream::GeneratorInit);
        MlpNet::init_with_rng(dims, hidden, output, &mut rng)
    }

    /// Same as [`MlpNet::init`] but draws from a caller-owned stream, so
    /// several networks can share one master seed without interfering.
    pub fn init_with_rng(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut impl Rng,
    ) -> Result<MlpNet, NnError> {
        if dims.len() < 2 {
            return Err(NnError::Dimension(format!(
                "network needs at least an input and an output extent, got {dims:?}"
            )));
        }
        if let Some(bad) = dims.iter().find(|&&d| d == 0) {
            return Err(NnError::Dimension(format!(
                "non-positive layer extent {bad} in {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (idx, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let weight = Tensor::from_data(fan_in, fan_out, w)?;
            weight.set_requires_grad(true);
            let bias = Tensor::zeros(1, fan_out);
            bias.set_requires_grad(true);
            let act = if idx + 2 == dims.len() { output } else { hidden };
            layers.push((LinearLayer { weight, bias }, act));
        }
        Ok(MlpNet {
            layers,
            in_dim: dims[0],
            out_dim: *dims.last().unwrap(),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[(LinearLayer, Activation)] {
        &self.layers
    }

    /// Run the network on a `[B x in]` batch, recording on the graph.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.cols() != self.in_dim {
            return Err(NnError::Dimension(format!(
                "input width {} does not match first layer width {}",
                x.cols(),
                self.in_dim
            )));
        }
        let mut h = x.clone();
        for (layer, act) in &self.layers {
            h = act.apply(&h.matmul(&layer.weight)?.add(&layer.bias)?);
        }
        Ok(h)
    }

    /// Named handles to every parameter, in stable order. The store shares
    /// the tensors; optimizer updates through it mutate the network.
    pub fn param_store(&self, prefix: &str) -> ParamStore {
        let mut store = ParamStore::new();
        for (i, (layer, _)) in self.layers.iter().enumerate() {
            store.push(format!("{prefix}.l{i}.weight"), layer.weight.clone());
            store.push(format!("{prefix}.l{i}.bias"), layer.bias.clone());
        }
        store
    }
}

/// Named, ordered collection of parameter tensors for one network.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore { entries: Vec::new() }
    }

    /// Append a parameter. Names must be unique.
    pub fn push(&mut self, name: String, tensor: Tensor) {
        assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
    }

    /// Absorb another store's entries, keeping order.
    pub fn extend(&mut self, other: ParamStore) {
        for (name, t) in other.entries {
            self.push(name, t);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    /// Freeze or unfreeze every parameter. Frozen parameters are skipped by
    /// backward in graphs built afterwards.
    pub fn set_trainable(&self, flag: bool) {
        for (_, t) in &self.entries {
            t.set_requires_grad(flag);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, t)| t.data().iter().all(|v| v.is_finite()))
    }

    /// Total number of scalar parameters.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameter values flattened in store order.
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.value_count());
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.data());
        }
        out
    }

    /// All gradients flattened in store order; zeros where a parameter
    /// received no gradient.
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.value_count());
        for (_, t) in &self.entries {
            match t.grad() {
                Some(g) => out.extend_from_slice(&g),
                None => out.extend(std::iter::repeat_n(0.0, t.len())),
            }
        }
        out
    }
}

/// Adam with bias correction; only `lr` and `beta1` vary per experiment,
/// `beta2` and `eps` keep their customary defaults.
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state with zero moments shaped like the store's parameters.
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, store: &ParamStore) -> AdamState {
        let m = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over every parameter of the store, then zero the grads.
/// Errors without touching anything if any parameter is missing a gradient.
pub fn adam_step(store: &ParamStore, state: &mut AdamState) -> Result<(), NnError> {
    if let Some((name, _)) = store.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(NnError::MissingGrad(name.to_string()));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    for (idx, (_, tensor)) in store.iter().enumerate() {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        tensor.with_data_and_grad(|data, grad| {
            let grad = grad.expect("checked above");
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
            }
        });
    }
    store.zero_grads();
    Ok(())
}

// ---- checkpoint container --------------------------------------------------
//
// Versioned binary layout, all integers little-endian:
//   magic            8 bytes  "DANCKPT1"
//   format version   u32
//   creation seed    u64
//   network name     u32 length + utf-8 bytes
//   parameter count  u32
//   per parameter:   u32 name length + utf-8 bytes,
//                    u64 rows, u64 cols,
//                    rows*cols f64 values (row-major, LE bit patterns)
// Round trips are bit-exact.

const CKPT_MAGIC: &[u8; 8] = b"DANCKPT1";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub network: String,
}

#[derive(Debug, Clone)]
pub struct CheckpointParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn write_checkpoint(store: &ParamStore, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&(meta.network.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.network.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (rows, cols) = t.shape();
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for v in t.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NnError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| NnError::Checkpoint("name is not valid utf-8".into()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(CheckpointMeta, Vec<CheckpointParam>), NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CKPT_MAGIC {
        return Err(NnError::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported format version {version}, expected {CKPT_VERSION}"
        )));
    }
    let seed = r.u64()?;
    let network = r.string()?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        params.push(CheckpointParam {
            name,
            rows,
            cols,
            data,
        });
    }
    Ok((CheckpointMeta { seed, network }, params))
}

/// Load checkpoint values into an existing store. Names, order and shapes
/// must all agree.
pub fn load_checkpoint(store: &ParamStore, bytes: &[u8]) -> Result<CheckpointMeta, NnError> {
    let (meta, params) = read_checkpoint(bytes)?;
    if params.len() != store.len() {
        return Err(NnError::Checkpoint(format!(
            "parameter count mismatch: checkpoint has {}, network has {}",
            params.len(),
            store.len()
        )));
    }
    for ((name, tensor), param) in store.iter().zip(&params) {
        if name != param.name {
            return Err(NnError::Checkpoint(format!(
                "parameter name mismatch: checkpoint `{}` vs network `{name}`",
                param.name
            )));
        }
        if tensor.shape() != (param.rows, param.cols) {
            return Err(NnError::Checkpoint(format!(
                "shape mismatch for `{name}`: checkpoint {}x{} vs network {}x{}",
                param.rows,
                param.cols,
                tensor.rows(),
                tensor.cols()
            )));
        }
    }
    for ((_, tensor), param) in store.iter().zip(&params) {
        tensor.set_data(&param.data);
    }
    Ok(meta)
}

pub fn save_checkpoint_file(
    store: &ParamStore,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), NnError> {
    fs::write(path, write_checkpoint(store, meta))?;
    Ok(())
}

pub fn load_checkpoint_file(store: &ParamStore, path: &Path) -> Result<CheckpointMeta, NnError> {
    let bytes = fs::read(path)?;
    load_checkpoint(store, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(seed: u64) -> MlpNet {
        MlpNet::init(&[2, 32, 1], Activation::Relu, Activation::Sigmoid, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = tiny_net(7);
        let b = tiny_net(7);
        for ((la, _), (lb, _)) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weight.to_vec(), lb.weight.to_vec());
            assert_eq!(la.bias.to_vec(), lb.bias.to_vec());
        }
    }

    #[test]
    fn distinct_seeds_differ() {
        let a = tiny_net(7);
        let b = tiny_net(8);
        assert_ne!(a.layers()[0].0.weight.to_vec(), b.layers()[0].0.weight.to_vec());
    }

    #[test]
    fn biases_start_at_zero() {
        let net = tiny_net(3);
        for (layer, _) in net.layers() {
            assert!(layer.bias.to_vec().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_bounds_follow_fan_average() {
        let net = tiny_net(11);
        let limits = [
            (6.0f64 / (2 + 32) as f64).sqrt(),
            (6.0f64 / (32 + 1) as f64).sqrt(),
        ];
        for ((layer, _), limit) in net.layers().iter().zip(limits) {
            let w = layer.weight.to_vec();
            assert!(w.iter().all(|v| v.abs() <= limit));
            // Draws should actually use the range, not hug zero.
            assert!(w.iter().any(|v| v.abs() > limit * 0.5));
        }
    }

    #[test]
    fn zero_weight_sigmoid_net_outputs_half() {
        let net = tiny_net(5);
        for (layer, _) in net.layers() {
            layer.weight.set_data(&vec![0.0; layer.weight.len()]);
        }
        let x = Tensor::from_rows(&[vec![3.7, -12.0]]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.to_vec(), vec![0.5]);
    }

    #[test]
    fn rejects_zero_extent_and_short_dims() {
        assert!(MlpNet::init(&[2, 0, 1], Activation::Relu, Activation::Identity, 1).is_err());
        assert!(MlpNet::init(&[2], Activation::Relu, Activation::Identity, 1).is_err());
    }

    #[test]
    fn single_affine_layer_hand_case() {
        let net = MlpNet::init(&[1, 1], Activation::Relu, Activation::Identity, 0).unwrap();
        net.layers()[0].0.weight.set_data(&[2.0]);
        net.layers()[0].0.bias.set_data(&[1.0]);
        let y = net.forward(&Tensor::from_rows(&[vec![3.0]]).unwrap()).unwrap();
        assert_eq!(y.to_vec(), vec![7.0]);
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let net = tiny_net(9);
        let row = vec![0.3, -1.1];
        let batch = Tensor::from_rows(&[row.clone(), row.clone(), row.clone()]).unwrap();
        let y = net.forward(&batch).unwrap().to_vec();
        assert_eq!(y[0], y[1]);
        assert_eq!(y[1], y[2]);
    }

    #[test]
    fn forward_width_mismatch_is_dimension_error() {
        let net = tiny_net(2);
        let x = Tensor::zeros(4, 3);
        assert!(matches!(net.forward(&x), Err(NnError::Dimension(_))));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = MlpNet::init(&[3, 8, 1], Activation::Tanh, Activation::Sigmoid, 13).unwrap();
        let mut vals = vec![0.3, -0.7, 1.2];
        let x = Tensor::from_data(1, 3, vals.clone()).unwrap();
        x.set_requires_grad(true);
        net.forward(&x).unwrap().sum().backward().unwrap();
        let ad = x.grad().unwrap();
        let h = 1e-5;
        for i in 0..vals.len() {
            let orig = vals[i];
            vals[i] = orig + h;
            let up = net
                .forward(&Tensor::from_data(1, 3, vals.clone()).unwrap())
                .unwrap()
                .sum()
                .item();
            vals[i] = orig - h;
            let down = net
                .forward(&Tensor::from_data(1, 3, vals.clone()).unwrap())
                .unwrap()
                .sum()
                .item();
            vals[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (ad[i] - fd).abs() / ad[i].abs().max(fd.abs()).max(1e-3) < 1e-4,
                "{} vs {}",
                ad[i],
                fd
            );
        }
    }

    #[test]
    fn forward_backward_leave_parameters_unchanged_until_step() {
        let net = tiny_net(21);
        let store = net.param_store("d");
        let before = store.flat_values();
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        net.forward(&x).unwrap().sum().backward().unwrap();
        assert_eq!(store.flat_values(), before);
        let mut adam = AdamState::new(1e-3, 0.9, 0.999, 1e-8, &store);
        adam_step(&store, &mut adam).unwrap();
        assert_ne!(store.flat_values(), before);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let net = tiny_net(1);
        let store = net.param_store("d");
        let before = store.flat_values();
        // Build a loss that reaches every parameter with weight zero.
        let x = Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let mut loss = net.forward(&x).unwrap().sum().mul_scalar(0.0);
        for (_, t) in store.iter().collect::<Vec<_>>() {
            loss = loss.add(&t.sum().mul_scalar(0.0)).unwrap();
        }
        loss.backward().unwrap();
        let mut adam = AdamState::new(0.1, 0.5, 0.999, 1e-8, &store);
        adam_step(&store, &mut adam).unwrap();
        assert_eq!(store.flat_values(), before);
    }

    #[test]
    fn adam_first_step_hand_evaluated() {
        // w = 0, grad = 1, lr = 0.1:
        //   m = 0.1, v = 0.001 (beta1=0.9, beta2=0.999)
        //   m_hat = 1, v_hat = 1 -> step = lr * 1 / (1 + eps) ~ 0.1
        let w = Tensor::scalar(0.0);
        w.set_requires_grad(true);
        let mut store = ParamStore::new();
        store.push("w".into(), w.clone());
        w.mul_scalar(1.0).backward().unwrap(); // grad = 1
        let mut adam = AdamState::new(0.1, 0.9, 0.999, 1e-8, &store);
        adam_step(&store, &mut adam).unwrap();
        let got = w.item();
        assert!((got + 0.1).abs() < 1e-8, "w = {got}");
    }

    #[test]
    fn adam_missing_grad_names_parameter() {
        let net = tiny_net(4);
        let store = net.param_store("gen");
        let mut adam = AdamState::new(1e-3, 0.9, 0.999, 1e-8, &store);
        let err = adam_step(&store, &mut adam).unwrap_err();
        assert!(err.to_string().contains("gen.l0.weight"), "{err}");
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize (w - 3)^2
        let w = Tensor::scalar(0.0);
        w.set_requires_grad(true);
        let mut store = ParamStore::new();
        store.push("w".into(), w.clone());
        let mut adam = AdamState::new(1e-2, 0.9, 0.999, 1e-8, &store);
        for _ in 0..5000 {
            let diff = w.add_scalar(-3.0);
            let loss = diff.mul(&diff).unwrap().sum();
            loss.backward().unwrap();
            adam_step(&store, &mut adam).unwrap();
        }
        assert!((w.item() - 3.0).abs() < 1e-2, "w = {}", w.item());
    }

    #[test]
    fn adam_opposite_gradients_move_opposite() {
        let run = |sign: f64| -> f64 {
            let w = Tensor::scalar(0.0);
            w.set_requires_grad(true);
            let mut store = ParamStore::new();
            store.push("w".into(), w.clone());
            let mut adam = AdamState::new(1e-2, 0.5, 0.999, 1e-8, &store);
            w.mul_scalar(sign * 1.7).backward().unwrap();
            adam_step(&store, &mut adam).unwrap();
            w.item()
        };
        let up = run(1.0);
        let down = run(-1.0);
        assert_eq!(up, -down);
        assert!(up != 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let net = MlpNet::init(&[3, 5, 2], Activation::Relu, Activation::Identity, 99).unwrap();
        let store = net.param_store("gen");
        let meta = CheckpointMeta {
            seed: 99,
            network: "generator".into(),
        };
        let before = store.flat_values();
        let bytes = write_checkpoint(&store, &meta);

        let other = MlpNet::init(&[3, 5, 2], Activation::Relu, Activation::Identity, 1).unwrap();
        let other_store = other.param_store("gen");
        let loaded_meta = load_checkpoint(&other_store, &bytes).unwrap();
        assert_eq!(loaded_meta, meta);
        let after = other_store.flat_values();
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        // And re-serialization is identical byte for byte.
        assert_eq!(bytes, write_checkpoint(&other_store, &meta));
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let net = MlpNet::init(&[3, 5, 2], Activation::Relu, Activation::Identity, 99).unwrap();
        let bytes = write_checkpoint(
            &net.param_store("gen"),
            &CheckpointMeta {
                seed: 0,
                network: "g".into(),
            },
        );
        let smaller = MlpNet::init(&[3, 4, 2], Activation::Relu, Activation::Identity, 1).unwrap();
        let err = load_checkpoint(&smaller.param_store("gen"), &bytes).unwrap_err();
        assert!(matches!(err, NnError::Checkpoint(_)));
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn param_store_rejects_duplicate_names() {
        let mut store = ParamStore::new();
        store.push("w".into(), Tensor::scalar(1.0));
        store.push("w".into(), Tensor::scalar(2.0));
    }
}
