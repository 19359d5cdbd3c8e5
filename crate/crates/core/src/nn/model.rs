use crate::error::{Error, Result};
use crate::numerics::{Float, Rng, Tensor};

use super::mlp::{init_params, Mlp, MlpSpec, ParamSet};

/// Network shapes of a trainable model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder: MlpSpec,
    /// Absent for purely discriminative objectives.
    pub decoder: Option<MlpSpec>,
    /// Row count of the instance-discrimination class table, if any.
    pub class_table: Option<usize>,
}

impl Architecture {
    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim() / 2
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.encoder.output_dim().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "encoder head width {} is not 2 × latent_dim",
                self.encoder.output_dim()
            )));
        }
        if let Some(dec) = &self.decoder {
            if dec.input_dim() != self.latent_dim() {
                return Err(Error::Config(format!(
                    "decoder input {} does not match latent_dim {}",
                    dec.input_dim(),
                    self.latent_dim()
                )));
            }
            if dec.output_dim() != self.input_dim() {
                return Err(Error::Config(format!(
                    "decoder output {} does not match data dim {}",
                    dec.output_dim(),
                    self.input_dim()
                )));
            }
        }
        Ok(())
    }
}

pub const CLASS_TABLE: &str = "psi.table";

/// Parameters plus the layout needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub arch: Architecture,
    pub params: ParamSet<T>,
    pub encoder: Mlp,
    pub decoder: Option<Mlp>,
}

impl<T: Float> Model<T> {
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new();
        init_params(&arch.encoder, "enc", rng, &mut params)?;
        if let Some(dec) = &arch.decoder {
            init_params(dec, "dec", rng, &mut params)?;
        }
        if let Some(n) = arch.class_table {
            let d = arch.latent_dim();
            let std = (1.0 / d as f64).sqrt();
            let data = (0..n * d).map(|_| T::lit(std * rng.normal())).collect();
            params.push(CLASS_TABLE, Tensor::new(vec![n, d], data)?)?;
        }
        Self::from_params(arch, params)
    }

    pub fn from_params(arch: Architecture, params: ParamSet<T>) -> Result<Self> {
        arch.validate()?;
        let encoder = Mlp::locate(arch.encoder.clone(), "enc", &params)?;
        let decoder = match &arch.decoder {
            Some(d) => Some(Mlp::locate(d.clone(), "dec", &params)?),
            None => None,
        };
        if let Some(n) = arch.class_table {
            let t = params.get(CLASS_TABLE).ok_or_else(|| Error::ArrayMismatch {
                name: CLASS_TABLE.into(),
                reason: "missing".into(),
            })?;
            let want = [n, arch.latent_dim()];
            if t.shape() != want {
                return Err(Error::ArrayMismatch {
                    name: CLASS_TABLE.into(),
                    reason: format!("expected shape {want:?}, found {:?}", t.shape()),
                });
            }
        }
        Ok(Self {
            arch,
            params,
            encoder,
            decoder,
        })
    }

    pub fn decoder(&self) -> Result<&Mlp> {
        self.decoder
            .as_ref()
            .ok_or_else(|| Error::Config("model has no decoder".into()))
    }

    pub fn class_table_index(&self) -> Option<usize> {
        self.params.index_of(CLASS_TABLE)
    }
}
