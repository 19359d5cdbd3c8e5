use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{Float, Graph, Rng, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "none" => Ok(Activation::None),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer widths (input first) and one activation per affine layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("zero width in {widths:?}")));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers but {} activations",
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(Self {
            widths,
            activations,
        })
    }

    /// ReLU after every layer except the last, which is linear.
    pub fn relu_trunk(widths: Vec<usize>) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![Activation::Relu; n];
        if let Some(last) = acts.last_mut() {
            *last = Activation::None;
        }
        Self::new(widths, acts)
    }

    /// 784-500-500-2000 trunk with a `2 × latent` Gaussian head.
    pub fn mnist_encoder(latent_dim: usize) -> Self {
        Self::gaussian_encoder(784, &[500, 500, 2000], latent_dim)
    }

    /// Mirror of [`mnist_encoder`](Self::mnist_encoder) ending in 784 linear outputs.
    pub fn mnist_decoder(latent_dim: usize) -> Self {
        Self::decoder(latent_dim, &[2000, 500, 500], 784)
    }

    pub fn gaussian_encoder(input: usize, hidden: &[usize], latent_dim: usize) -> Self {
        let mut w = vec![input];
        w.extend_from_slice(hidden);
        w.push(2 * latent_dim);
        Self::relu_trunk(w).expect("valid widths")
    }

    pub fn decoder(latent_dim: usize, hidden: &[usize], output: usize) -> Self {
        let mut w = vec![latent_dim];
        w.extend_from_slice(hidden);
        w.push(output);
        Self::relu_trunk(w).expect("valid widths")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    /// `weight`/`bias` names in parameter order.
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.n_layers())
            .flat_map(|l| [format!("{prefix}.{l}.weight"), format!("{prefix}.{l}.bias")])
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.widths
            .windows(2)
            .flat_map(|w| [vec![w[0], w[1]], vec![w[1]]])
            .collect()
    }

    /// Inverse of `Display`: `784,500,10;relu,relu,none`.
    pub fn parse(s: &str) -> Result<Self> {
        let (w, a) = s
            .split_once(';')
            .ok_or_else(|| Error::Config(format!("bad MLP spec `{s}`")))?;
        let widths = w
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad width `{t}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let acts = a
            .split(',')
            .map(|t| Activation::parse(t.trim()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths, acts)
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.widths.iter().map(|v| v.to_string()).collect();
        let a: Vec<&str> = self.activations.iter().map(|a| a.tag()).collect();
        write!(f, "{};{}", w.join(","), a.join(","))
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Float> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Float> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every tensor as a tracked leaf, in order.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Registers every tensor as an untracked constant.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }
}

/// Fan-in scaled normal initialisation with zero biases.
///
/// Weights feeding a ReLU get std `sqrt(2 / fan_in)`, linear output layers
/// get `sqrt(1 / fan_in)`.
pub const INIT_SCHEME: &str = "fanin-normal-v1";

pub fn init_std(fan_in: usize, activation: Activation) -> f64 {
    let gain = match activation {
        Activation::Relu => 2.0,
        Activation::None => 1.0,
    };
    (gain / fan_in as f64).sqrt()
}

/// Appends freshly initialised parameters for `spec` under `prefix`.
pub fn init_params<T: Float>(
    spec: &MlpSpec,
    prefix: &str,
    rng: &mut Rng,
    params: &mut ParamSet<T>,
) -> Result<()> {
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = init_std(fan_in, spec.activations[l]);
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(std * rng.normal()))
            .collect();
        params.push(
            format!("{prefix}.{l}.weight"),
            Tensor::new(vec![fan_in, fan_out], data)?,
        )?;
        params.push(format!("{prefix}.{l}.bias"), Tensor::zeros(&[fan_out]))?;
    }
    Ok(())
}

/// An MLP bound to a contiguous run of parameters inside a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub prefix: String,
    offset: usize,
}

impl Mlp {
    /// Locates `spec`'s parameters under `prefix` and validates their shapes.
    pub fn locate<T: Float>(spec: MlpSpec, prefix: &str, params: &ParamSet<T>) -> Result<Self> {
        let first = format!("{prefix}.0.weight");
        let offset = params
            .index_of(&first)
            .ok_or_else(|| Error::ArrayMismatch {
                name: first.clone(),
                reason: "missing".into(),
            })?;
        for (k, (name, shape)) in spec
            .param_names(prefix)
            .iter()
            .zip(spec.param_shapes())
            .enumerate()
        {
            let idx = offset + k;
            if params.names().get(idx) != Some(name) {
                return Err(Error::ArrayMismatch {
                    name: name.clone(),
                    reason: "missing or out of order".into(),
                });
            }
            if params.tensors()[idx].shape() != shape.as_slice() {
                return Err(Error::ArrayMismatch {
                    name: name.clone(),
                    reason: format!(
                        "expected shape {shape:?}, found {:?}",
                        params.tensors()[idx].shape()
                    ),
                });
            }
        }
        Ok(Self {
            spec,
            prefix: prefix.to_string(),
            offset,
        })
    }

    pub fn n_params(&self) -> usize {
        2 * self.spec.n_layers()
    }

    /// Index range of this MLP's tensors in the owning [`ParamSet`].
    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_params()
    }

    /// Affine + activation composition on a `[batch, in]` input.
    ///
    /// `vars` is the full list returned by [`ParamSet::bind`].
    pub fn forward<T: Float>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Result<Var> {
        let in_dim = g.shape(x).last().copied().unwrap_or(0);
        if g.shape(x).len() != 2 || in_dim != self.spec.input_dim() {
            return Err(Error::Dimension(format!(
                "{}: expected input [batch, {}], got {:?}",
                self.prefix,
                self.spec.input_dim(),
                g.shape(x)
            )));
        }
        let mut h = x;
        for l in 0..self.spec.n_layers() {
            let w = vars[self.offset + 2 * l];
            let b = vars[self.offset + 2 * l + 1];
            let layer = |e: Error| match e {
                Error::Numeric(m) => Error::Numeric(format!("{} layer {l}: {m}", self.prefix)),
                other => other,
            };
            h = g.matmul(h, w).map_err(layer)?;
            h = g.add(h, b).map_err(layer)?;
            if self.spec.activations[l] == Activation::Relu {
                h = g.relu(h).map_err(layer)?;
            }
        }
        Ok(h)
    }

    /// Untracked forward pass that also returns the smallest `|pre-activation|`
    /// feeding any ReLU (infinity when there is none): the distance to the
    /// nearest kink.
    pub fn relu_margin<T: Float>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Result<(Tensor<T>, f64)> {
        let mut h = x.clone();
        let mut margin = f64::INFINITY;
        for l in 0..self.spec.n_layers() {
            let w = &params.tensors()[self.offset + 2 * l];
            let b = &params.tensors()[self.offset + 2 * l + 1];
            h = h.matmul(w)?;
            let cols = b.numel();
            for (k, v) in h.data_mut().iter_mut().enumerate() {
                *v += b.data()[k % cols];
            }
            if self.spec.activations[l] == Activation::Relu {
                for v in h.data_mut() {
                    margin = margin.min(v.as_f64().abs());
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        Ok((h, margin))
    }

    /// Untracked forward pass on plain tensors.
    pub fn forward_values<T: Float>(&self, params: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = params.bind_frozen(&mut g);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &vars, xv)?;
        Ok(g.value(out).clone())
    }
}

/// Diagonal Gaussian posterior `N(mu, diag(exp(logvar)))` as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior<T> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
}

/// Graph handles for a batch of Gaussian posteriors.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorVars {
    pub mu: Var,
    pub logvar: Var,
}

/// Runs a Gaussian encoder and splits its head into mean and log-variance.
pub fn encode<T: Float>(g: &mut Graph<T>, enc: &Mlp, vars: &[Var], x: Var) -> Result<PosteriorVars> {
    let out_dim = enc.spec.output_dim();
    if !out_dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "Gaussian encoder head must be even, got {out_dim}"
        )));
    }
    let h = enc.forward(g, vars, x)?;
    let d = out_dim / 2;
    let mu = g.slice_cols(h, 0, d)?;
    let logvar = g.slice_cols(h, d, out_dim)?;
    Ok(PosteriorVars { mu, logvar })
}

/// Untracked encode of a batch.
pub fn encode_values<T: Float>(
    enc: &Mlp,
    params: &ParamSet<T>,
    x: &Tensor<T>,
) -> Result<GaussianPosterior<T>> {
    let mut g = Graph::new();
    let vars = params.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let post = encode(&mut g, enc, &vars, xv)?;
    Ok(GaussianPosterior {
        mu: g.value(post.mu).clone(),
        logvar: g.value(post.logvar).clone(),
    })
}

/// `z = mu + exp(logvar / 2) ⊙ eps`, differentiable in `mu` and `logvar`.
pub fn reparameterize<T: Float>(g: &mut Graph<T>, post: PosteriorVars, eps: Var) -> Result<Var> {
    if g.shape(eps) != g.shape(post.mu) {
        return Err(Error::Dimension(format!(
            "noise shape {:?} does not match posterior {:?}",
            g.shape(eps),
            g.shape(post.mu)
        )));
    }
    let half = g.scale(post.logvar, 0.5)?;
    let std = g.exp(half)?;
    let noise = g.mul(std, eps)?;
    g.add(post.mu, noise)
}

/// Decoder mean; the final layer is linear and unclamped.
pub fn decode<T: Float>(g: &mut Graph<T>, dec: &Mlp, vars: &[Var], z: Var) -> Result<Var> {
    dec.forward(g, vars, z)
}
