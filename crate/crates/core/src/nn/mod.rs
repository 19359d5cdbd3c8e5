//! MLP encoders/decoders with Gaussian heads, Adam, and checkpoint files.

mod adam;
mod checkpoint;
pub mod container;
mod mlp;
mod model;

pub use adam::{adam_step, Adam, AdamHyper, AdamState};
pub use checkpoint::{checkpoint_dtype, load_checkpoint, save_checkpoint, ModelCheckpoint, Storable};
pub use mlp::{
    decode, encode, encode_values, init_params, init_std, reparameterize, Activation,
    GaussianPosterior, Mlp, MlpSpec, ParamSet, PosteriorVars, INIT_SCHEME,
};
pub use model::{Architecture, Model, CLASS_TABLE};
