use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{DType, Float, Tensor, RNG_ALGORITHM};

use super::adam::AdamState;
use super::container::{Array, Container};
use super::mlp::{MlpSpec, ParamSet, INIT_SCHEME};
use super::model::{Architecture, Model};

/// Everything needed to evaluate a model or continue training it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T> {
    pub model: Model<T>,
    pub optimizer: Option<AdamState<T>>,
    pub seed: u64,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Flat config snapshot, in the config file's own key order.
    pub config: Vec<(String, String)>,
}

/// Element type stored in a tensor array, used to pick the load precision.
pub trait Storable: Float {
    fn wrap(t: Tensor<Self>) -> Array;
    fn unwrap(name: &str, a: &Array) -> Result<Tensor<Self>>;
}

impl Storable for f32 {
    fn wrap(t: Tensor<f32>) -> Array {
        Array::F32(t)
    }

    fn unwrap(name: &str, a: &Array) -> Result<Tensor<f32>> {
        match a {
            Array::F32(t) => Ok(t.clone()),
            other => Err(Error::ArrayMismatch {
                name: name.into(),
                reason: format!("expected f32, found {}", other.dtype_name()),
            }),
        }
    }
}

impl Storable for f64 {
    fn wrap(t: Tensor<f64>) -> Array {
        Array::F64(t)
    }

    fn unwrap(name: &str, a: &Array) -> Result<Tensor<f64>> {
        match a {
            Array::F64(t) => Ok(t.clone()),
            other => Err(Error::ArrayMismatch {
                name: name.into(),
                reason: format!("expected f64, found {}", other.dtype_name()),
            }),
        }
    }
}

impl<T: Storable> ModelCheckpoint<T> {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let arch = &self.model.arch;
        c.set_meta("kind", "checkpoint");
        c.set_meta("dtype", T::DTYPE.name());
        c.set_meta("rng", RNG_ALGORITHM);
        c.set_meta("init", INIT_SCHEME);
        c.set_meta("seed", self.seed);
        c.set_meta("epoch", self.epoch);
        c.set_meta("arch.encoder", &arch.encoder);
        c.set_meta(
            "arch.decoder",
            arch.decoder
                .as_ref()
                .map_or_else(|| "none".to_string(), ToString::to_string),
        );
        c.set_meta(
            "arch.class_table",
            arch.class_table.map_or_else(|| "none".into(), |n| n.to_string()),
        );
        if let Some(opt) = &self.optimizer {
            c.set_meta("adam.t", opt.t);
        }
        for (k, v) in &self.config {
            c.set_meta(format!("config.{k}"), v);
        }
        for (name, t) in self.model.params.iter() {
            c.push(format!("param.{name}"), T::wrap(t.clone()));
        }
        if let Some(opt) = &self.optimizer {
            for (name, (m, v)) in self
                .model
                .params
                .names()
                .iter()
                .zip(opt.m.iter().zip(&opt.v))
            {
                c.push(format!("adam.m.{name}"), T::wrap(m.clone()));
                c.push(format!("adam.v.{name}"), T::wrap(v.clone()));
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta("kind") != Some("checkpoint") {
            return Err(Error::Data("container is not a model checkpoint".into()));
        }
        let dtype = c.require_meta("dtype")?;
        if dtype != T::DTYPE.name() {
            return Err(Error::ArrayMismatch {
                name: "dtype".into(),
                reason: format!("checkpoint stores {dtype}, loader expects {}", T::DTYPE.name()),
            });
        }
        let rng = c.require_meta("rng")?;
        if rng != RNG_ALGORITHM {
            return Err(Error::Data(format!(
                "checkpoint uses rng `{rng}`, this build provides `{RNG_ALGORITHM}`"
            )));
        }
        let encoder = MlpSpec::parse(c.require_meta("arch.encoder")?)?;
        let decoder = match c.require_meta("arch.decoder")? {
            "none" => None,
            s => Some(MlpSpec::parse(s)?),
        };
        let class_table = match c.require_meta("arch.class_table")? {
            "none" => None,
            _ => Some(c.meta_parse("arch.class_table")?),
        };
        let arch = Architecture {
            encoder,
            decoder,
            class_table,
        };

        let mut params = ParamSet::new();
        for (name, array) in &c.arrays {
            if let Some(p) = name.strip_prefix("param.") {
                params.push(p, T::unwrap(name, array)?)?;
            }
        }
        let model = Model::from_params(arch, params)?;

        let optimizer = match c.meta("adam.t") {
            None => None,
            Some(_) => {
                let t = c.meta_parse("adam.t")?;
                let mut m = Vec::new();
                let mut v = Vec::new();
                for (name, p) in model.params.iter() {
                    for (slot, prefix) in [(&mut m, "adam.m."), (&mut v, "adam.v.")] {
                        let key = format!("{prefix}{name}");
                        let arr = T::unwrap(&key, c.array(&key)?)?;
                        if arr.shape() != p.shape() {
                            return Err(Error::ArrayMismatch {
                                name: key,
                                reason: format!(
                                    "moment shape {:?} differs from parameter {:?}",
                                    arr.shape(),
                                    p.shape()
                                ),
                            });
                        }
                        slot.push(arr);
                    }
                }
                Some(AdamState { t, m, v })
            }
        };

        let config = c
            .metadata
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect();

        Ok(Self {
            model,
            optimizer,
            seed: c.meta_parse("seed")?,
            epoch: c.meta_parse("epoch")?,
            config,
        })
    }
}

pub fn save_checkpoint<T: Storable>(path: &Path, ckpt: &ModelCheckpoint<T>) -> Result<()> {
    ckpt.to_container().write(path)
}

pub fn load_checkpoint<T: Storable>(path: &Path) -> Result<ModelCheckpoint<T>> {
    ModelCheckpoint::from_container(&Container::read(path)?)
}

/// Storage precision of a checkpoint file without loading its arrays twice.
pub fn checkpoint_dtype(c: &Container) -> Result<DType> {
    match c.require_meta("dtype")? {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        other => Err(Error::Data(format!("unknown checkpoint dtype `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn tiny() -> ModelCheckpoint<f32> {
        let arch = Architecture {
            encoder: MlpSpec::gaussian_encoder(6, &[5], 2),
            decoder: Some(MlpSpec::decoder(2, &[5], 6)),
            class_table: Some(4),
        };
        let model = Model::init(arch, &mut Rng::new(1)).unwrap();
        let mut opt = AdamState::zeros_like(&model.params);
        opt.t = 3;
        opt.m[0].data_mut()[0] = 0.5;
        ModelCheckpoint {
            model,
            optimizer: Some(opt),
            seed: 99,
            epoch: 2,
            config: vec![("loss".into(), "simvae".into()), ("lr".into(), "8e-5".into())],
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svae");
        let b = dir.path().join("b.svae");
        let ck = tiny();
        save_checkpoint(&a, &ck).unwrap();
        let back: ModelCheckpoint<f32> = load_checkpoint(&a).unwrap();
        assert_eq!(back, ck);
        save_checkpoint(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let c = tiny().to_container();
        let r = ModelCheckpoint::<f64>::from_container(&c);
        assert!(matches!(r, Err(Error::ArrayMismatch { .. })));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut c = tiny().to_container();
        for (name, a) in &mut c.arrays {
            if name == "param.enc.0.weight" {
                *a = Array::F32(Tensor::zeros(&[6, 4]));
            }
        }
        let r = ModelCheckpoint::<f32>::from_container(&c);
        assert!(matches!(r, Err(Error::ArrayMismatch { .. })), "{r:?}");
    }
}
