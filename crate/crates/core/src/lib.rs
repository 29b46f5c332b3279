//! Exact linear-optical simulation of recursive NOON ("cat") state generation.
//!
//! * [`fock`]: sparse multimode Fock states.
//! * [`optics`]: beam splitters, phase shifters and photon counting.
//! * [`catfactory`]: cat constructors, the doubling step and the memoryless cascade.
//! * [`analytics`]: exact rational closed forms and their asymptotics.
//! * [`protocol`]: Monte Carlo of the memory-pooled recursion.

pub mod analytics;
pub mod catfactory;
pub mod fock;
pub mod optics;
pub mod protocol;

pub use analytics::{AnalyticsError, ExactProbability, ScalingReport, Scheme};
pub use catfactory::{apply_tn, make_cat, CatError, CatSpec, CascadeModel, TnOutcome};
pub use fock::{Amplitude, FockError, FockState, Occupation};
pub use optics::{DetectionBranch, LossyAcceptResult, OpticsError};
pub use protocol::{MemoryPool, ProtocolConfig, ProtocolError, RunStatistics, Summary};
