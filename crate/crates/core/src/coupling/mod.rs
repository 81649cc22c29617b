//! Coupled dynamics: the second-class particle process, the basic coupling
//! of two copies, and the labeled coupling used for large `beta`.

mod basic;
mod labeled;
mod second_class;
mod stats;

pub use basic::{run_basic_coupling, BasicCouplingEngine, PairConfiguration};
pub use labeled::{run_labeled_coupling, LabeledCoupling, LabeledOutcome};
pub use second_class::{run_second_class, second_class_left_mass, SecondClassEngine, SecondClassState};
pub use stats::{
    micro_entropy_functional, micro_entropy_integrand, one_block_statistic, ordering_defect, trapezoid,
    young_measure_eval,
};
