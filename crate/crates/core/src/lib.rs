//! Identification of planted shallow networks from black-box queries.
//!
//! A teacher `f(x) = Σ_k g(⟨w_k, x⟩ + τ_k)` is recovered in three stages:
//! the weights from the span of its Hessians ([`subspace`], [`spm`]), signs
//! and initial shifts from directional derivatives at the origin
//! ([`shift_init`]), and refined shifts by gradient descent on a least-squares
//! loss ([`refine`]). [`diagnostics`] scores the result and evaluates the
//! quantities that certify each stage; [`harness`] wires everything together.
//!
//! The numerical code is generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`.

pub mod activation;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod numdiff;
pub mod quadrature;
pub mod refine;
pub mod scalar;
pub mod seeds;
pub mod shift_init;
pub mod spm;
pub mod subspace;
pub mod teacher;

pub use error::{AcceptanceStats, Error, Result};
pub use scalar::Real;

pub type Activation = activation::Activation<f64>;
pub type TeacherNetwork = teacher::TeacherNetwork<f64>;
pub type StudentNetwork = teacher::StudentNetwork<f64>;
pub type ShiftLaw = teacher::ShiftLaw<f64>;
pub type FdConfig = numdiff::FdConfig<f64>;
pub type SubspaceProjector = subspace::SubspaceProjector<f64>;
pub type SpmConfig = spm::SpmConfig<f64>;
pub type InitResult = shift_init::InitResult<f64>;
pub type RefineConfig = refine::RefineConfig<f64>;
pub type PipelineConfig = harness::PipelineConfig;
