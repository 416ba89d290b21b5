//! Value-biased maximum likelihood estimation (VBMLE) for infinite-horizon discounted
//! linear mixture MDPs, together with certainty-equivalence and UCLK-style baselines,
//! exact planning, theoretical diagnostics and a seeded regret harness.

pub mod agents;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod likelihood;
pub mod mdp;
pub mod optim;
pub mod planning;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
pub use mdp::{generate_mixture_mdp, LinearMdp, MixtureSpec};
pub use simplex::{project_simplex, ParamVector};
