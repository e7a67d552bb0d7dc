//! Time-varying joint degree of market efficiency.
//!
//! The pipeline loads price files, aligns them on common dates and takes
//! log returns ([`market_data`]), checks stationarity ([`unit_root`]), runs
//! constant-coefficient VAR diagnostics ([`var_base`]), estimates a VAR whose
//! coefficients follow random walks ([`tv_var`]), and turns each period's
//! coefficients into the efficiency degree ζ_t ([`efficiency`]) with
//! residual-bootstrap bands under the efficient-market null ([`bootstrap`]).

pub mod bootstrap;
pub mod efficiency;
pub mod error;
pub mod linalg;
pub mod market_data;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod synth;
pub mod tv_var;
pub mod unit_root;
pub mod var_base;

pub use error::{Error, ErrorClass, Result};
