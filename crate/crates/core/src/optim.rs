//! Named parameter collections and the Adam optimizer.

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Ordered, named collection of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        ModelParams {
            entries: Vec::new(),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// `self + scale · other`, entry by entry.
    pub fn add_scaled(&self, other: &Self, scale: T) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(ModelParams {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|((n, a), (_, b))| (n.clone(), a.zip_map(b, |x, y| x + scale * y).unwrap()))
                .collect(),
        })
    }

    pub fn scale(&self, factor: T) -> Self {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.scale(factor)))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Same names, same order, same shapes.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(shape_err!(
                "parameter sets differ in size: {} vs {}",
                self.entries.len(),
                other.entries.len()
            ));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(shape_err!("parameter name mismatch: `{na}` vs `{nb}`"));
            }
            if ta.shape() != tb.shape() {
                return Err(shape_err!(
                    "parameter `{na}` shape mismatch: {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: ModelParams<T>,
    pub second: ModelParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn for_params(params: &ModelParams<T>) -> Self {
        AdamState {
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Returns new params and state.
pub fn adam_step<T: Real>(
    params: &ModelParams<T>,
    grads: &ModelParams<T>,
    state: &AdamState<T>,
    config: &AdamConfig,
    t: u64,
) -> Result<(ModelParams<T>, AdamState<T>)> {
    if t == 0 {
        return Err(invalid!("adam step counter starts at 1"));
    }
    params.check_compatible(grads)?;
    params.check_compatible(&state.first)?;
    params.check_compatible(&state.second)?;

    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (lr, eps) = (T::lit(config.lr), T::lit(config.eps));
    let one = T::one();
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = one - b1.powi(exp);
    let c2 = one - b2.powi(exp);

    let mut new_params = ModelParams::new();
    let mut first = ModelParams::new();
    let mut second = ModelParams::new();
    for (((name, p), (_, g)), ((_, m), (_, v))) in params
        .entries
        .iter()
        .zip(&grads.entries)
        .zip(state.first.entries.iter().zip(&state.second.entries))
    {
        let n = p.len();
        let mut pd = Vec::with_capacity(n);
        let mut md = Vec::with_capacity(n);
        let mut vd = Vec::with_capacity(n);
        for i in 0..n {
            let gi = g.data()[i];
            let mi = b1 * m.data()[i] + (one - b1) * gi;
            let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            pd.push(p.data()[i] - lr * m_hat / (v_hat.sqrt() + eps));
            md.push(mi);
            vd.push(vi);
        }
        let shape = p.shape().to_vec();
        new_params.push(name.clone(), Tensor::from_parts(shape.clone(), pd));
        first.push(name.clone(), Tensor::from_parts(shape.clone(), md));
        second.push(name.clone(), Tensor::from_parts(shape, vd));
    }
    Ok((new_params, AdamState { first, second }))
}
