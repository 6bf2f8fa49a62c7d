pub mod error;
pub mod model;
pub mod excessive;
pub mod fundamental;
pub mod oracle;
pub mod quad;
pub mod roots;
pub mod simulation;
pub mod solvers;
pub mod special;

pub use error::{Error, Result};
pub use model::{characteristic_roots, CharacteristicRoots, DriftSign, ModelParams, Payoff, PayoffKind};
