use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::ModelConfig;
use super::net::Net;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::Real;

/// Index of a tensor inside a [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pid(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    /// Normal with the given deviation, redrawn outside two deviations.
    TruncNormal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Collects tensor declarations while a network layout is assembled.
#[derive(Debug, Default)]
pub(crate) struct Builder {
    pub specs: Vec<TensorSpec>,
    prefix: Vec<String>,
}

impl Builder {
    pub fn push(&mut self, scope: impl Into<String>) {
        self.prefix.push(scope.into());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Pid {
        let mut full = self.prefix.join(".");
        if !full.is_empty() {
            full.push('.');
        }
        full.push_str(name);
        self.specs.push(TensorSpec {
            name: full,
            shape: shape.to_vec(),
            init,
        });
        Pid(self.specs.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named weight tensors of a network together with the configuration that
/// determines their shapes.
#[derive(Debug, Clone)]
pub struct ModelParams<T = f32> {
    config: ModelConfig,
    tensors: Vec<Tensor<T>>,
    pub(crate) net: Net,
}

impl<T: Real> ModelParams<T> {
    /// Fresh initialization: truncated-normal projections, zero biases,
    /// unit normalization scales.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (net, specs) = Net::build(config);
        let mut rng = rng_from(seed, &[0x1417]);
        let tensors = specs
            .into_iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data = match s.init {
                    Init::Zeros => vec![T::ZERO; n],
                    Init::Ones => vec![T::ONE; n],
                    Init::TruncNormal(sigma) => {
                        (0..n).map(|_| T::from_f64(trunc_normal(&mut rng) * sigma)).collect()
                    }
                };
                Tensor {
                    name: s.name,
                    shape: s.shape,
                    data,
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
            net,
        })
    }

    /// All tensors set to zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        p.fill(T::ZERO);
        Ok(p)
    }

    /// Rebuilds parameters from named tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let (net, specs) = Net::build(config);
        if specs.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            let n: usize = t.shape.iter().product();
            if s.name != t.name || s.shape != t.shape || n != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, s.name, s.shape
                )));
            }
            if !t.data.iter().all(|v| v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {} has non-finite entries", t.name)));
            }
        }
        Ok(Self {
            config: config.clone(),
            tensors,
            net,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    #[inline]
    pub(crate) fn get(&self, id: Pid) -> &[T] {
        &self.tensors[id.0].data
    }

    pub fn fill(&mut self, v: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = v);
        }
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every entry to another float type.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
            net: self.net.clone(),
        }
    }

    /// Zeroed gradient buffers matching this layout.
    pub fn zero_grads(&self) -> Grads<T> {
        Grads(self.tensors.iter().map(|t| vec![T::ZERO; t.data.len()]).collect())
    }
}

/// Total number of scalar parameters.
pub fn count_params<T: Real>(params: &ModelParams<T>) -> usize {
    params.count()
}

/// Gradient buffers, one per tensor, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T>(pub Vec<Vec<T>>);

impl<T: Real> Grads<T> {
    #[inline]
    pub(crate) fn get_mut(&mut self, id: Pid) -> &mut [T] {
        &mut self.0[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|v| v.to_f64() * v.to_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn trunc_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= 2.0 {
            return x;
        }
    }
}
