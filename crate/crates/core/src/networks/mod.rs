//! Differentiable networks: the noise predictor, the autoencoder between
//! fields and latents, and the Fourier-layer surrogate.

mod autoencoder;
mod bundle;
mod embedding;
mod mlp;
mod score;
mod spectral;
mod train;

pub use autoencoder::{relative_reconstruction_errors, reconstruction_loss, train_autoencoder, Autoencoder, Bounds};
pub use bundle::{score_lipschitz_probe, ModelBundle};
pub use embedding::TimeEmbedding;
pub use mlp::{init_mlp_params, Activation, Mlp, MlpArch};
pub use score::{train_score, ScoreNet};
pub use spectral::{dft_matrices, retained_frequencies, SpectralArch, SpectralSurrogate, SurrogateHead};
pub use train::TrainConfig;
pub(crate) use train::fit;
