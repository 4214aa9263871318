// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod error;
pub mod gauss;
pub mod oracle;
pub mod ospa;
pub mod rfs;
pub mod transport;
pub mod sim;
pub mod tracker;
pub mod vmb;
pub mod vmmospa;

pub use error::{Error, Result};
pub use gauss::{Gaussian, LinearGaussianModel};
pub use rfs::{
    BernoulliGaussian, GaussianMixture, GlobalHypothesis, HypId, Hypothesis, IdGen, MultiBernoulliMixture, Track,
    TrackId,
};
pub use transport::{solve_assignment, solve_transport, solve_transport_auction, solve_transport_warm, TransportPlan, TransportProblem};
