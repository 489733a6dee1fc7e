//! Parameter storage with deterministic, seeded initialization.

use crate::error::Result;
use crate::rng::derived_stream;
use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::cell::RefCell;
use std::collections::BTreeMap;

/// How a freshly created tensor is filled.
pub enum Init {
    Const(f64),
    /// Zero-mean normal with the given standard deviation (variance scaling).
    Normal(f64),
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
}

/// Owns every `Var` of a model under a stable name, so optimizers,
/// checkpoints, and parameter counts all see the same ordered set.
///
/// Creation order is deterministic (one RNG stream consumed in call order),
/// so the same seed always produces the same initial weights.
pub struct ParamStore {
    vars: RefCell<BTreeMap<String, (Var, bool)>>,
    order: RefCell<Vec<String>>,
    rng: RefCell<ChaCha8Rng>,
    pub dtype: DType,
    pub device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: RefCell::new(BTreeMap::new()),
            order: RefCell::new(Vec::new()),
            rng: RefCell::new(derived_stream(seed, 0)),
            dtype,
            device: Device::Cpu,
        }
    }

    fn insert(&self, name: &str, var: Var, trainable: bool) -> Var {
        let mut vars = self.vars.borrow_mut();
        assert!(
            !vars.contains_key(name),
            "duplicate parameter name '{name}'"
        );
        vars.insert(name.to_string(), (var.clone(), trainable));
        self.order.borrow_mut().push(name.to_string());
        var
    }

    /// Create a trainable parameter.
    pub fn var(&self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let n: usize = shape.iter().product();
        let mut rng = self.rng.borrow_mut();
        let data: Vec<f64> = match init {
            Init::Const(c) => vec![c; n],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("valid std");
                (0..n).map(|_| dist.sample(&mut *rng)).collect()
            }
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
        };
        drop(rng);
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        Ok(self.insert(name, Var::from_tensor(&t)?, true))
    }

    /// Create a non-trainable buffer (e.g. batch-norm running statistics).
    pub fn buffer(&self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let t = Tensor::from_vec(vec![value; n], shape, &self.device)?.to_dtype(self.dtype)?;
        Ok(self.insert(name, Var::from_tensor(&t)?, false))
    }

    /// Trainable parameters, in creation order (fed to the optimizer).
    pub fn trainable_vars(&self) -> Vec<Var> {
        let vars = self.vars.borrow();
        self.order
            .borrow()
            .iter()
            .filter_map(|name| {
                let (v, trainable) = &vars[name];
                trainable.then(|| v.clone())
            })
            .collect()
    }

    /// Number of trainable scalar parameters.
    pub fn trainable_count(&self) -> usize {
        self.vars
            .borrow()
            .values()
            .filter(|(_, t)| *t)
            .map(|(v, _)| v.as_tensor().elem_count())
            .sum()
    }

    /// Every named tensor (parameters and buffers), sorted by name.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.vars
            .borrow()
            .iter()
            .map(|(name, (v, _))| (name.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrite a named tensor in place (checkpoint restore).
    pub fn set_named(&self, name: &str, value: &Tensor) -> Result<()> {
        let vars = self.vars.borrow();
        let (var, _) = vars.get(name).ok_or_else(|| {
            crate::error::Error::InvalidState(format!("unknown parameter '{name}'"))
        })?;
        // Copy so the new value never aliases the variable's own storage.
        var.set(&value.to_dtype(self.dtype)?.copy()?)?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.borrow().get(name).map(|(v, _)| v.clone())
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.borrow().keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let a = ParamStore::new(7, DType::F32);
        let b = ParamStore::new(7, DType::F32);
        let va = a.var("w", &[4, 3], Init::Normal(0.1)).unwrap();
        let vb = b.var("w", &[4, 3], Init::Normal(0.1)).unwrap();
        let xa: Vec<f32> = va.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let xb: Vec<f32> = vb.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(xa, xb);
        assert!(xa.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn counts_exclude_buffers() {
        let s = ParamStore::new(0, DType::F32);
        s.var("w", &[2, 2], Init::Const(1.0)).unwrap();
        s.buffer("running", &[2], 0.0).unwrap();
        assert_eq!(s.trainable_count(), 4);
        assert_eq!(s.trainable_vars().len(), 1);
        assert_eq!(s.named_tensors().len(), 2);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_panic() {
        let s = ParamStore::new(0, DType::F32);
        s.var("w", &[1], Init::Const(0.0)).unwrap();
        s.var("w", &[1], Init::Const(0.0)).unwrap();
    }
}
