//! A duotensor calculus engine for probabilistic circuit theories.
//!
//! Declare theories (classical or quantum) over typed systems, wire
//! operations into fragments and circuits, and compute circuit probabilities,
//! fragment duotensors, well-conditioned probability ratios, and
//! foliation-based evaluations.
//!
//! The pieces:
//!
//! * [`theory`]: system types, fiducial sets, hopping metrics, and the
//!   theory registry.
//! * [`duotensor`]: the multi-index algebra: recolouring through hopping
//!   metrics, contraction, linear combination, proportionality.
//! * [`circuit`]: operation instances, wires, fragments, circuits, wiring
//!   validation, port closure, and foliations.
//! * [`backends`]: the classical and quantum uploads, plus an independent
//!   brute-force probability oracle.
//! * [`engine`]: fragment compilation, contraction planning, circuit
//!   probabilities, ratio verdicts, and foliation evolution.
//! * [`dsl`]: the textual circuit notation and DOT export.
//!
//! ```
//! use duotensor::prelude::*;
//! use std::collections::BTreeMap;
//!
//! let mut theory = Theory::new();
//! theory
//!     .register_type("a", BackendKind::Classical, 2, FiducialSpec::Default)
//!     .unwrap();
//! theory
//!     .register_operation(
//!         "A",
//!         &[],
//!         &["a"],
//!         BTreeMap::from([(
//!             "heads".to_string(),
//!             OperationBody::Classical(
//!                 ClassicalOperation::new(
//!                     &[],
//!                     &["a".to_string()],
//!                     Mat { rows: 2, cols: 1, data: vec![0.5, 0.5] },
//!                 )
//!                 .unwrap(),
//!             ),
//!         )]),
//!     )
//!     .unwrap();
//! theory
//!     .register_operation(
//!         "B",
//!         &["a"],
//!         &[],
//!         BTreeMap::from([(
//!             "up".to_string(),
//!             OperationBody::Classical(
//!                 ClassicalOperation::new(
//!                     &["a".to_string()],
//!                     &[],
//!                     Mat { rows: 1, cols: 2, data: vec![1.0, 0.0] },
//!                 )
//!                 .unwrap(),
//!             ),
//!         )]),
//!     )
//!     .unwrap();
//!
//! // the simple circuit: a preparation wired into an effect
//! let fragment = dsl::parse_with_theory("A^{a1} B_{a1}", &theory).unwrap();
//! let circuit = Circuit::try_from(fragment).unwrap();
//! let p = engine::circuit_probability(&circuit, &theory).unwrap();
//! assert!((p - 0.5).abs() < 1e-12);
//! ```

pub mod backends;
pub mod circuit;
pub mod dsl;
pub mod duotensor;
pub mod engine;
pub mod error;
pub mod json;
pub mod linalg;
pub mod theory;

pub use error::{Error, Result};

/// The commonly used names in one import.
pub mod prelude {
    pub use crate::backends::{
        all_black, oracle_probability, ClassicalOperation, OperationBody, QuantumOperation,
    };
    pub use crate::circuit::{
        foliate, Circuit, Foliation, Fragment, OperationSpec, PortDirection, PortRef, Wire,
    };
    pub use crate::dsl;
    pub use crate::duotensor::{Color, Direction, Duotensor, IndexMeta, ProportionalityResult};
    pub use crate::engine::{
        self, circuit_probability, compile_fragment, evolve_foliation, plan_contraction,
        ratio_check, RatioVerdict,
    };
    pub use crate::error::{Error, Result};
    pub use crate::linalg::{CMat, Mat};
    pub use crate::theory::{
        BackendKind, CompositeType, FiducialData, FiducialSpec, FiducialTransform, HoppingMetric,
        SystemType, Theory,
    };
}
