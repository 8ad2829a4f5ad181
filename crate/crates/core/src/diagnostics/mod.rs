//! Executable checks of the model assumptions, error functionals and
//! supporting estimates, plus recovered-versus-true scoring.

pub mod assignment;
pub mod hermite;
pub mod incoherence;
pub mod learnability;
pub mod metrics;

pub use assignment::{align_columns, hungarian, Alignment};
pub use hermite::{hermite_coeffs, hermite_tail_mc, hermite_values, kernel_floor_omega, HermiteExpansion, OmegaReport};
pub use incoherence::{check_incoherence, max_abs_corr, IncoherenceReport};
pub use learnability::estimate_alpha;
pub use metrics::{apply_alignment, e_inf, init_shift_bound, match_and_score, weight_errors, Metrics, WeightErrors, DEFAULT_N_EVAL};
