//! VAE and FactorVAE objectives with analytic gradients.

pub mod elbo;
pub mod factorvae;
pub mod likelihood;
pub mod spec;

pub use elbo::{elbo_backward, elbo_forward, elbo_loss, elbo_loss_with_noise, sample_noise, ElboPass, ElboStep};
pub use factorvae::{build_discriminator, factorvae_losses, permute_dims, FactorVaeStep};
pub use likelihood::{kl_to_standard_normal, nll, nll_with_grad, reparameterize, softplus};
pub use spec::{DiscriminatorSpec, FactorVaeSpec, Likelihood, LossReport, ObjectiveSpec, GAUSSIAN_VARIANCE};
