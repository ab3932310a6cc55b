use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Named, ordered collection of trainable variables for one network.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: &Device) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Registers a variable; returns a tensor handle sharing its storage.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<Tensor> {
        let name = name.into();
        if self.vars.contains_key(&name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let var = Var::from_tensor(&value.to_dtype(self.dtype)?)?;
        let handle = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(handle)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// SHA-256 over names and little-endian f64 values, in name order.
    pub fn checksum(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (name, var) in &self.vars {
            h.update(name.as_bytes());
            let vals = var
                .as_tensor()
                .to_dtype(DType::F64)?
                .flatten_all()?
                .to_vec1::<f64>()?;
            for v in vals {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn flatten(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for var in self.vars.values() {
            out.extend(
                var.as_tensor()
                    .to_dtype(DType::F64)?
                    .flatten_all()?
                    .to_vec1::<f64>()?,
            );
        }
        Ok(out)
    }

    pub fn to_tensors(&self, prefix: &str) -> HashMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (format!("{prefix}{k}"), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites every variable from `tensors[prefix + name]`; shapes must match
    /// and every variable must be present.
    pub fn assign_from(&self, tensors: &HashMap<String, Tensor>, prefix: &str, origin: &Path) -> Result<()> {
        for (name, var) in &self.vars {
            let key = format!("{prefix}{name}");
            let t = tensors.get(&key).ok_or_else(|| Error::Load {
                path: origin.to_path_buf(),
                message: format!("missing tensor `{key}`"),
            })?;
            if t.dims() != var.dims() {
                return Err(Error::Load {
                    path: origin.to_path_buf(),
                    message: format!(
                        "tensor `{key}` has shape {:?}, expected {:?}",
                        t.dims(),
                        var.dims()
                    ),
                });
            }
            var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    pub fn copy_from(&self, other: &ParamStore) -> Result<()> {
        for (name, var) in &self.vars {
            let src = other
                .get(name)
                .ok_or_else(|| Error::Config(format!("parameter `{name}` missing in source")))?;
            var.set(&src.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Gaussian(f64),
    /// Gaussian with std `sqrt(2 / fan_in)`.
    He,
    Zeros,
}

/// Registers layer parameters under a name prefix, drawing initial values
/// from a seeded generator.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Builder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn push(&mut self, name: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], init: Init, fan_in: usize) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Gaussian(std) => sample_normal(self.rng, std, n),
            Init::He => sample_normal(self.rng, (2.0 / fan_in.max(1) as f64).sqrt(), n),
        };
        let t = Tensor::from_vec(data, shape, self.store.device())?;
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.store.insert(full, t)
    }
}

fn sample_normal(rng: &mut ChaCha8Rng, std: f64, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(DType::F32, &Device::Cpu);
        let t = Tensor::zeros(2, DType::F32, &Device::Cpu).unwrap();
        s.insert("a", t.clone()).unwrap();
        assert!(s.insert("a", t).is_err());
    }

    #[test]
    fn handles_share_storage_with_vars() {
        let mut s = ParamStore::new(DType::F32, &Device::Cpu);
        let h = s
            .insert("w", Tensor::zeros(3, DType::F32, &Device::Cpu).unwrap())
            .unwrap();
        s.get("w")
            .unwrap()
            .set(&Tensor::ones(3, DType::F32, &Device::Cpu).unwrap())
            .unwrap();
        assert_eq!(h.to_vec1::<f32>().unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn gaussian_mean_within_three_standard_errors() {
        let mut s = ParamStore::new(DType::F64, &Device::Cpu);
        let mut rng = seeded_rng(11);
        let mut b = Builder::new(&mut s, &mut rng);
        b.tensor("w", &[64, 64, 4, 4], Init::Gaussian(0.02), 1).unwrap();
        let v = s.flatten().unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * 0.02 / n.sqrt(), "mean {mean}");
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 0.02).abs() < 0.001);
    }

    #[test]
    fn assign_checks_shapes_and_presence() {
        let mut s = ParamStore::new(DType::F32, &Device::Cpu);
        s.insert("w", Tensor::zeros((2, 2), DType::F32, &Device::Cpu).unwrap())
            .unwrap();
        let mut m = HashMap::new();
        let p = Path::new("mem");
        assert!(matches!(s.assign_from(&m, "", p), Err(Error::Load { .. })));
        m.insert("w".to_string(), Tensor::zeros(4, DType::F32, &Device::Cpu).unwrap());
        assert!(matches!(s.assign_from(&m, "", p), Err(Error::Load { .. })));
        m.insert("w".to_string(), Tensor::ones((2, 2), DType::F32, &Device::Cpu).unwrap());
        s.assign_from(&m, "", p).unwrap();
        assert_eq!(s.flatten().unwrap(), vec![1.0; 4]);
    }
}
