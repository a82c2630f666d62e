//! Comparison machinery: interval bound propagation, exhaustive feasible-set
//! enumeration for tiny instances, and the discretized volume baseline.

pub mod enumerate;
pub mod interval;
pub mod volume;

pub use enumerate::{
    exact_history_enumeration, EnumerationConfig, ExactHistorySet, ExactSetOracle,
};
pub use interval::{
    interval_gru_step, interval_margin, interval_mlp, interval_rnn_step, interval_rnn_unroll,
    IntervalVector, RnnCellKind, RobustnessTask, UnrollResult,
};
pub use volume::{baseline_volume, default_resolution, volume_certificate, VolumeConfig, VolumeOutcome};
