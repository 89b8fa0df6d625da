use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

macro_rules! state_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn inf_norm(&self) -> f64 {
                self.0.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
            }

            /// Largest absolute entrywise difference.
            pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
                debug_assert_eq!(self.0.len(), other.len());
                self.0
                    .iter()
                    .zip(other)
                    .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

state_vector!(
    /// Per-state values of a policy (discounted reward).
    ValueVector
);
state_vector!(
    /// Per-state value increments applied by a reward transformation.
    DeltaVector
);
