//! Risk concentration C(α) = VaR_α(X_1 + ... + X_n) / (n VaR_α(X_1)) for iid
//! heavy-tailed losses: first- and second-order asymptotics, Monte Carlo
//! curves and a numerical convolution reference.

pub mod cli;
pub mod error;
pub mod models;
pub mod monte_carlo;
pub mod oracle;
pub mod quadrature;
pub mod second_order;
pub mod special;

pub use error::{Error, Result};
pub use models::{LossModel, SecondOrderInfo};
pub use monte_carlo::{empirical_concentration, ConcentrationCurve, DenominatorMode, SimulationConfig};
pub use oracle::{convolve_tail, oracle_concentration, oracle_quantile, tail_ratio_diag, ConvolutionGrid, GridSpec};
pub use second_order::{c2, ApproxResult, AForm, Regime};
