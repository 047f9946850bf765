//! Models and estimators for real-time, sub-Poissonian atom-number
//! measurement with a dispersive dual-color homodyne probe.
//!
//! * [`physics`]: two-level dispersion/absorption and detection efficiency
//! * [`homodyne`]: beat-note synthesis, demodulation and Allan deviation
//! * [`dynamics`]: binomial-loss ground truth and noisy phase records
//! * [`bayes`]: the recursive grid filter over atom number
//! * [`calib`]: optical-pumping transients and their fit
//! * [`budget`]: closed-form variance, Fano and squeezing limits
//! * [`scenario`]: per-step quantities tying the pieces together

pub mod bayes;
pub mod budget;
pub mod calib;
pub mod dynamics;
pub mod error;
pub mod homodyne;
pub mod physics;
pub mod rng;
pub mod scenario;

pub use bayes::{
    fano, predict, run_filter, update, BayesFilter, DiscreteDistribution, FilterConfig, FilterOutput,
    StepEstimate,
};
pub use budget::{BudgetParams, SqueezeParams};
pub use calib::{CalibFit, PumpTransient};
pub use dynamics::{Trajectory, TrapParams};
pub use error::{Error, Result};
pub use homodyne::{AllanSeries, BeatTrace, HomodyneConfig, PhaseSample};
pub use physics::{CouplingParams, DetectionChain, ProbeConfig};
pub use scenario::{FilterRun, StepModel};
