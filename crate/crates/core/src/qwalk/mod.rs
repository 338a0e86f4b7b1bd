//! Finite-grid reversible chains and the spectra of their Szegedy walks.

mod chain;
mod mixing;
mod overlap;
mod spectrum;

pub use chain::{discretize_chain, reference_chains, DiscreteChain, GridConfig, Kernel};
pub use mixing::{mixing_time, worst_case_tv};
pub use overlap::{
    bhattacharyya, effective_gap_profile, gaussian_bhattacharyya, qsample_overlap, schedule_overlaps,
    stage_log_density, GapProfile, ModeOverlap,
};
pub use spectrum::{discriminant, walk_operator, walk_spectrum, write_spectrum_csv, WalkSpectrum, DENSE_LIMIT};
