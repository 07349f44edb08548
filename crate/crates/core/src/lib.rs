//! Lift-based watchdog privacy mechanism with subset merging.
//!
//! Given a joint distribution `p(s, x)` of a secret `S` and public data `X`,
//! symbols whose maximum absolute log-lift exceeds a budget `epsilon` are
//! high-risk. The classic watchdog merges all of them into one output
//! symbol; this crate instead partitions them with a greedy agglomerative
//! search so that each merged block is private on its own while keeping as
//! much resolution (mutual information `I(X;Y)`) as possible.
//!
//! All information quantities are in nats.

pub mod distribution;
pub mod experiment;
pub mod lift;
pub mod mechanism;
pub mod partition;

pub use distribution::{
    sample_random_joint, DistributionError, JointDistribution, JointSampler, Marginals,
};
pub use experiment::{run_sweep, ExperimentError, Method, SweepConfig, SweepResult};
pub use lift::{compute_lift_profile, risk_split, subset_omega, LiftError, LiftProfile, RiskSplit};
pub use mechanism::{
    build_channel, mutual_information, nmil, HighRiskPartition, MechanismError, OutputSymbol,
    SanitizationChannel,
};
pub use partition::{
    brute_force_optimal, greedy_refine, greedy_refine_with, is_refinement, FixupRange,
    GreedyOptions, GreedyTrace, OracleOutcome, PartitionError,
};

/// Serde helpers for values in `[-inf, +inf]`. Infinities and NaN are
/// written as the strings `"inf"`, `"-inf"` and `"NaN"`; JSON has no
/// literal for them.
pub mod ext_real {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else if value.is_nan() {
            serializer.serialize_str("NaN")
        } else if *value > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    struct Ext(f64);

    impl serde::Serialize for Ext {
        fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
            super::ext_real::serialize(&self.0, serializer)
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::Serializer;

        pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
            let mut seq = serializer.serialize_seq(Some(values.len()))?;
            for &v in values {
                seq.serialize_element(&super::Ext(v))?;
            }
            seq.end()
        }
    }

    pub mod option {
        use serde::Serializer;

        pub fn serialize<S: Serializer>(
            value: &Option<f64>,
            serializer: S,
        ) -> Result<S::Ok, S::Error> {
            match value {
                Some(v) => serializer.serialize_some(&super::Ext(*v)),
                None => serializer.serialize_none(),
            }
        }
    }
}
