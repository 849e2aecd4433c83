use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::TensorError;

/// Named parameters and their accumulated gradients, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: IndexMap<String, Tensor>,
    grads: IndexMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<(), TensorError> {
        if self.params.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        self.params.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// Adds the parameter gradients of a graph after its backward pass.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for (name, g) in graph.param_grads() {
            match self.grads.get_mut(&name) {
                Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                None => {
                    self.grads.insert(name, g);
                }
            }
        }
    }

    pub fn set_grad(&mut self, name: &str, g: Tensor) {
        self.grads.insert(name.to_string(), g);
    }
}

/// Xavier-uniform initialization.
pub fn xavier_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-a..a))
}

pub fn init_linear(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, din: usize, dout: usize) -> Result<(), TensorError> {
    store.insert(&format!("{name}.weight"), xavier_uniform(rng, &[din, dout], din, dout))?;
    store.insert(&format!("{name}.bias"), Tensor::zeros(&[dout]))
}

pub fn linear(g: &mut Graph, store: &ParameterStore, name: &str, x: Var) -> Result<Var, TensorError> {
    let w = g.param(store, &format!("{name}.weight"))?;
    let b = g.param(store, &format!("{name}.bias"))?;
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

pub fn init_conv(
    store: &mut ParameterStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) -> Result<(), TensorError> {
    let w = xavier_uniform(rng, &[cout, cin, k, k], cin * k * k, cout * k * k);
    store.insert(&format!("{name}.weight"), w)?;
    store.insert(&format!("{name}.bias"), Tensor::zeros(&[cout]))
}

pub fn conv(g: &mut Graph, store: &ParameterStore, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var, TensorError> {
    let w = g.param(store, &format!("{name}.weight"))?;
    let b = g.param(store, &format!("{name}.bias"))?;
    g.conv2d(x, w, b, stride, pad)
}

pub fn init_layer_norm(store: &mut ParameterStore, name: &str, n: usize) -> Result<(), TensorError> {
    store.insert(&format!("{name}.gamma"), Tensor::filled(&[n], 1.0))?;
    store.insert(&format!("{name}.beta"), Tensor::zeros(&[n]))
}

pub fn layer_norm(g: &mut Graph, store: &ParameterStore, name: &str, x: Var) -> Result<Var, TensorError> {
    let gamma = g.param(store, &format!("{name}.gamma"))?;
    let beta = g.param(store, &format!("{name}.beta"))?;
    g.layer_norm(x, gamma, beta)
}

/// Perceptron with ReLU between layers; `dims` lists layer widths
/// including input and output.
pub fn init_mlp(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, dims: &[usize]) -> Result<(), TensorError> {
    for (i, w) in dims.windows(2).enumerate() {
        init_linear(store, rng, &format!("{name}.{i}"), w[0], w[1])?;
    }
    Ok(())
}

pub fn mlp(g: &mut Graph, store: &ParameterStore, name: &str, layers: usize, mut x: Var) -> Result<Var, TensorError> {
    for i in 0..layers {
        x = linear(g, store, &format!("{name}.{i}"), x)?;
        if i + 1 < layers {
            x = g.relu(x);
        }
    }
    Ok(x)
}

pub fn init_attention(store: &mut ParameterStore, rng: &mut ChaCha8Rng, name: &str, dim: usize) -> Result<(), TensorError> {
    for p in ["q", "k", "v", "o"] {
        init_linear(store, rng, &format!("{name}.{p}"), dim, dim)?;
    }
    Ok(())
}

fn split_heads(g: &mut Graph, x: Var, heads: usize) -> Result<Var, TensorError> {
    let s = g.shape(x).to_vec();
    let (b, l, c) = (s[0], s[1], s[2]);
    let x = g.reshape(x, &[b, l, heads, c / heads])?;
    let x = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(x, &[b * heads, l, c / heads])
}

/// Multi-head scaled dot-product attention of `query [B, Lq, C]` over
/// `context [B, Lk, C]`, with input and output projections.
pub fn multi_head_attention(
    g: &mut Graph,
    store: &ParameterStore,
    name: &str,
    query: Var,
    context: Var,
    heads: usize,
) -> Result<Var, TensorError> {
    let (sq, sk) = (g.shape(query).to_vec(), g.shape(context).to_vec());
    if sq.len() != 3 || sk.len() != 3 || sq[0] != sk[0] || sq[2] != sk[2] || heads == 0 || sq[2] % heads != 0 {
        return Err(TensorError::ShapeMismatch(format!(
            "attention: query {sq:?}, context {sk:?}, {heads} heads"
        )));
    }
    let (b, lq, c) = (sq[0], sq[1], sq[2]);
    let q = linear(g, store, &format!("{name}.q"), query)?;
    let k = linear(g, store, &format!("{name}.k"), context)?;
    let v = linear(g, store, &format!("{name}.v"), context)?;
    let (q, k, v) = (split_heads(g, q, heads)?, split_heads(g, k, heads)?, split_heads(g, v, heads)?);
    let scores = g.bmm(q, k, false, true)?;
    let scores = g.affine(scores, 1.0 / ((c / heads) as f64).sqrt(), 0.0);
    let probs = g.softmax(scores);
    let out = g.bmm(probs, v, false, false)?;
    let out = g.reshape(out, &[b, heads, lq, c / heads])?;
    let out = g.permute(out, &[0, 2, 1, 3])?;
    let out = g.reshape(out, &[b, lq, c])?;
    linear(g, store, &format!("{name}.o"), out)
}
