pub mod linalg;
pub mod normal;
pub mod rng;
pub mod search;
pub mod sobol;
pub mod stats;

pub use linalg::{cholesky, dot, Cholesky, JitterPolicy, Matrix};
pub use normal::{normal_cdf, normal_log_pdf, normal_pdf, normal_sf, standardized_ei};
pub use rng::{mvn_sample, RngState};
pub use sobol::{sobol_points, Sobol};
pub use stats::empirical_cov;
