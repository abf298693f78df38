//! System types, fiducial sets, hopping metrics, and the theory registry.
//!
//! A [`Theory`] owns the declared wire types together with one fiducial set
//! per type (used both for preparations and effects), the hopping metrics
//! computed from them, and the operations that circuits may reference. It is
//! immutable once built: [`Theory::change_fiducials`] returns a new theory
//! rather than mutating.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::backends::{ClassicalOperation, OperationBody, QuantumOperation};
use crate::circuit::OperationSpec;
use crate::duotensor::{Color, Direction, Duotensor};
use crate::error::{Error, Result};
use crate::linalg::{CMat, Mat};

/// Relative singular-value floor below which a fiducial set counts as
/// linearly dependent.
pub const INDEPENDENCE_FLOOR: f64 = 1e-9;
/// Condition-estimate ceiling above which a hopping metric counts as
/// singular.
pub const METRIC_CONDITION_CEILING: f64 = 1e12;
/// Eigenvalue floor used by positivity checks to absorb rounding.
pub const POSITIVITY_FLOOR: f64 = -1e-10;

/// Which physical theory a wire type belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Classical,
    Quantum,
}

/// A wire type: `k` fiducial elements over a `backend_dim`-dimensional
/// underlying state space (outcome count or Hilbert dimension).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemType {
    pub name: String,
    pub k: usize,
    pub backend_dim: usize,
    pub backend: BackendKind,
}

impl BackendKind {
    /// Fiducial-set size for a given underlying dimension.
    pub fn fiducial_count(self, backend_dim: usize) -> usize {
        match self {
            BackendKind::Classical => backend_dim,
            BackendKind::Quantum => backend_dim * backend_dim,
        }
    }
}

/// An ordered grouping of system types treated as a single type.
///
/// Flattening is plain list concatenation, so `(a.b).c` and `a.(b.c)` are the
/// same composite. Composite indices are little-endian over the factor list:
/// the first factor varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeType {
    pub factors: Vec<String>,
}

impl CompositeType {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(factors: I) -> Self {
        CompositeType {
            factors: factors.into_iter().map(Into::into).collect(),
        }
    }

    /// Concatenate two composites; associativity of this operation is what
    /// makes composite grouping unambiguous.
    pub fn concat(&self, other: &CompositeType) -> CompositeType {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        CompositeType { factors }
    }

    pub fn k(&self, theory: &Theory) -> Result<usize> {
        let mut prod = 1usize;
        for f in &self.factors {
            prod *= theory.system_type(f)?.k;
        }
        Ok(prod)
    }

    pub fn backend_dim(&self, theory: &Theory) -> Result<usize> {
        let mut prod = 1usize;
        for f in &self.factors {
            prod *= theory.system_type(f)?.backend_dim;
        }
        Ok(prod)
    }
}

/// Backend-native fiducial elements for one type.
#[derive(Debug, Clone, PartialEq)]
pub enum FiducialData {
    /// Probability vectors (preparations) and dual vectors (effects), each of
    /// length `backend_dim`.
    Classical {
        preparations: Vec<Vec<f64>>,
        effects: Vec<Vec<f64>>,
    },
    /// Hermitian operators on the type's Hilbert space.
    Quantum {
        preparations: Vec<CMat>,
        effects: Vec<CMat>,
    },
}

/// A validated fiducial set: `k` preparations and `k` effects for one type.
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialSet {
    pub type_name: String,
    pub data: FiducialData,
}

impl FiducialSet {
    pub fn len(&self) -> usize {
        match &self.data {
            FiducialData::Classical { preparations, .. } => preparations.len(),
            FiducialData::Quantum { preparations, .. } => preparations.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability of fiducial preparation `prep` followed by fiducial effect
    /// `effect` (classical dot product, quantum trace pairing).
    pub fn pairing(&self, effect: usize, prep: usize) -> f64 {
        match &self.data {
            FiducialData::Classical {
                preparations,
                effects,
            } => effects[effect]
                .iter()
                .zip(&preparations[prep])
                .map(|(r, p)| r * p)
                .sum(),
            FiducialData::Quantum {
                preparations,
                effects,
            } => effects[effect].matmul(&preparations[prep]).trace().re,
        }
    }
}

/// How to obtain fiducials when registering a type.
#[derive(Debug, Clone)]
pub enum FiducialSpec {
    /// Classical: point distributions and indicator effects. Quantum: the
    /// projectors `|j><j|` plus the `(|j>+|k>)` and `(|j>+i|k>)` rank-one
    /// operators, normalised to trace one.
    Default,
    Explicit(FiducialData),
}

/// Per-type hopping metric: the matrix of fiducial-circuit probabilities and
/// its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct HoppingMetric {
    pub type_name: String,
    /// `g_bb[i][j]` = probability of fiducial preparation `j` followed by
    /// fiducial effect `i`.
    pub g_bb: Mat,
    /// Matrix inverse of `g_bb`; may contain negative entries.
    pub g_ww: Mat,
    pub condition_estimate: f64,
}

/// An invertible change of fiducial sets for one type.
///
/// Orientation follows the transformation law: `effect_matrix` expresses the
/// previous fiducial effects as combinations of the new ones (`old effect i =
/// sum_j effect_matrix[i][j] * new effect j`), and `prep_matrix` expresses the
/// previous preparations as combinations of the new ones (`old prep j = sum_i
/// prep_matrix[i][j] * new prep i`; rows index the new set).
#[derive(Debug, Clone)]
pub struct FiducialTransform {
    pub type_name: String,
    pub effect_matrix: Mat,
    pub prep_matrix: Mat,
    effect_inverse: Mat,
    prep_inverse: Mat,
}

impl FiducialTransform {
    pub fn new(type_name: &str, effect_matrix: Mat, prep_matrix: Mat) -> Result<Self> {
        let singular = || Error::SingularTransform(type_name.to_string());
        let (effect_inverse, _) = effect_matrix.invert().ok_or_else(singular)?;
        let (prep_inverse, _) = prep_matrix.invert().ok_or_else(singular)?;
        let k = effect_matrix.rows;
        let check = |m: &Mat, inv: &Mat| m.matmul(inv).max_abs_diff(&Mat::identity(k)) <= 1e-10;
        if !check(&effect_matrix, &effect_inverse) || !check(&prep_matrix, &prep_inverse) {
            return Err(singular());
        }
        Ok(FiducialTransform {
            type_name: type_name.to_string(),
            effect_matrix,
            prep_matrix,
            effect_inverse,
            prep_inverse,
        })
    }

    pub fn identity(type_name: &str, k: usize) -> Self {
        FiducialTransform {
            type_name: type_name.to_string(),
            effect_matrix: Mat::identity(k),
            prep_matrix: Mat::identity(k),
            effect_inverse: Mat::identity(k),
            prep_inverse: Mat::identity(k),
        }
    }

    pub fn effect_inverse(&self) -> &Mat {
        &self.effect_inverse
    }

    pub fn prep_inverse(&self) -> &Mat {
        &self.prep_inverse
    }

    /// Re-express a duotensor in the transformed fiducial coordinates.
    ///
    /// Each index of the matching type contracts with the matrix its
    /// colour/direction dictates: white inputs with the effect matrix, black
    /// outputs with its inverse, white outputs with the preparation matrix,
    /// black inputs with its inverse. Indices of other types are untouched.
    pub fn apply(&self, t: &Duotensor) -> Result<Duotensor> {
        let mut out = t.clone();
        for meta in t.indices().to_vec() {
            if meta.type_name != self.type_name {
                continue;
            }
            let (matrix, output_style) = match (meta.direction, meta.color) {
                (Direction::Input, Color::White) => (&self.effect_matrix, false),
                (Direction::Input, Color::Black) => (&self.prep_inverse, false),
                (Direction::Output, Color::White) => (&self.prep_matrix, true),
                (Direction::Output, Color::Black) => (&self.effect_inverse, true),
            };
            out = out.contract_index_with_matrix(&meta.port_label, matrix, output_style)?;
        }
        Ok(out)
    }
}

/// An apparatus registered in a theory: port signature plus a body per
/// outcome label.
#[derive(Debug, Clone)]
pub struct OperationDef {
    pub apparatus_id: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub outcomes: BTreeMap<String, OperationBody>,
}

#[derive(Debug, Clone)]
struct TypeEntry {
    system: SystemType,
    fiducials: FiducialSet,
    metric: HoppingMetric,
}

/// Outcome label given to standard closure operations.
pub const CLOSURE_OUTCOME: &str = "std";

/// Apparatus id of the standard preparation that closes an open input.
pub fn closure_prep_id(type_name: &str) -> String {
    format!("!std_prep({type_name})")
}

/// Apparatus id of the standard effect that closes an open output.
pub fn closure_effect_id(type_name: &str) -> String {
    format!("!std_effect({type_name})")
}

/// A registry of system types, fiducial sets, hopping metrics, and
/// operations.
#[derive(Debug, Clone, Default)]
pub struct Theory {
    types: BTreeMap<String, TypeEntry>,
    operations: BTreeMap<String, OperationDef>,
}

impl Theory {
    pub fn new() -> Self {
        Theory::default()
    }

    /// Declare a wire type. `k` is fixed by the backend rule (`N` classical,
    /// `N^2` quantum); explicit fiducial lists must have exactly `k` elements,
    /// be linearly independent, and satisfy the backend's physicality
    /// constraints.
    pub fn register_type(
        &mut self,
        name: &str,
        backend: BackendKind,
        backend_dim: usize,
        fiducials: FiducialSpec,
    ) -> Result<&SystemType> {
        assert!(backend_dim >= 1, "backend_dim must be positive");
        if self.types.contains_key(name) {
            return Err(Error::DuplicateType(name.to_string()));
        }
        let k = backend.fiducial_count(backend_dim);
        let data = match fiducials {
            FiducialSpec::Default => default_fiducials(backend, backend_dim),
            FiducialSpec::Explicit(data) => data,
        };
        let set = FiducialSet {
            type_name: name.to_string(),
            data,
        };
        validate_fiducials(name, backend, backend_dim, k, &set, true)?;
        let metric = compute_metric(name, &set)?;
        let system = SystemType {
            name: name.to_string(),
            k,
            backend_dim,
            backend,
        };
        self.register_closures(&system)?;
        self.types.insert(
            name.to_string(),
            TypeEntry {
                system,
                fiducials: set,
                metric,
            },
        );
        Ok(&self.types[name].system)
    }

    fn register_closures(&mut self, system: &SystemType) -> Result<()> {
        let n = system.backend_dim;
        let (prep_body, effect_body) = match system.backend {
            BackendKind::Classical => {
                let prep = ClassicalOperation::new(
                    &[],
                    std::slice::from_ref(&system.name),
                    Mat {
                        rows: n,
                        cols: 1,
                        data: vec![1.0 / n as f64; n],
                    },
                )?;
                let effect = ClassicalOperation::new(
                    std::slice::from_ref(&system.name),
                    &[],
                    Mat {
                        rows: 1,
                        cols: n,
                        data: vec![1.0; n],
                    },
                )?;
                (
                    OperationBody::Classical(prep),
                    OperationBody::Classical(effect),
                )
            }
            BackendKind::Quantum => {
                let scale = 1.0 / (n as f64).sqrt();
                let prep_kraus: Vec<CMat> = (0..n)
                    .map(|i| {
                        let mut k = CMat::zeros(n, 1);
                        k[(i, 0)] = Complex64::new(scale, 0.0);
                        k
                    })
                    .collect();
                let effect_kraus: Vec<CMat> = (0..n)
                    .map(|i| {
                        let mut k = CMat::zeros(1, n);
                        k[(0, i)] = Complex64::new(1.0, 0.0);
                        k
                    })
                    .collect();
                let prep =
                    QuantumOperation::new(&[], std::slice::from_ref(&system.name), prep_kraus)?;
                let effect =
                    QuantumOperation::new(std::slice::from_ref(&system.name), &[], effect_kraus)?;
                (OperationBody::Quantum(prep), OperationBody::Quantum(effect))
            }
        };
        let prep_id = closure_prep_id(&system.name);
        let effect_id = closure_effect_id(&system.name);
        self.operations.insert(
            prep_id.clone(),
            OperationDef {
                apparatus_id: prep_id,
                inputs: vec![],
                outputs: vec![system.name.clone()],
                outcomes: BTreeMap::from([(CLOSURE_OUTCOME.to_string(), prep_body)]),
            },
        );
        self.operations.insert(
            effect_id.clone(),
            OperationDef {
                apparatus_id: effect_id,
                inputs: vec![system.name.clone()],
                outputs: vec![],
                outcomes: BTreeMap::from([(CLOSURE_OUTCOME.to_string(), effect_body)]),
            },
        );
        Ok(())
    }

    /// Replace the standard closure devices for a type.
    pub fn set_standard_closures(
        &mut self,
        type_name: &str,
        prep: OperationBody,
        effect: OperationBody,
    ) -> Result<()> {
        let system = self.system_type(type_name)?.clone();
        let ty = vec![type_name.to_string()];
        check_body_shape(&closure_prep_id(type_name), &[], &ty, self, &prep)?;
        check_body_shape(&closure_effect_id(type_name), &ty, &[], self, &effect)?;
        let prep_id = closure_prep_id(&system.name);
        self.operations
            .get_mut(&prep_id)
            .expect("closure registered with type")
            .outcomes
            .insert(CLOSURE_OUTCOME.to_string(), prep);
        let effect_id = closure_effect_id(&system.name);
        self.operations
            .get_mut(&effect_id)
            .expect("closure registered with type")
            .outcomes
            .insert(CLOSURE_OUTCOME.to_string(), effect);
        Ok(())
    }

    /// Register an apparatus with one body per outcome label.
    pub fn register_operation(
        &mut self,
        apparatus_id: &str,
        inputs: &[&str],
        outputs: &[&str],
        outcomes: BTreeMap<String, OperationBody>,
    ) -> Result<()> {
        if apparatus_id.starts_with('!') {
            return Err(Error::Malformed {
                what: "apparatus id",
                context: format!("`{apparatus_id}` uses the reserved closure prefix `!`"),
            });
        }
        if self.operations.contains_key(apparatus_id) {
            return Err(Error::DuplicateOperation(apparatus_id.to_string()));
        }
        let inputs: Vec<String> = inputs.iter().map(|s| s.to_string()).collect();
        let outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        for body in outcomes.values() {
            check_body_shape(apparatus_id, &inputs, &outputs, self, body)?;
        }
        self.operations.insert(
            apparatus_id.to_string(),
            OperationDef {
                apparatus_id: apparatus_id.to_string(),
                inputs,
                outputs,
                outcomes,
            },
        );
        Ok(())
    }

    pub fn system_type(&self, name: &str) -> Result<&SystemType> {
        self.types
            .get(name)
            .map(|e| &e.system)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn has_type(&self, name: &str) -> bool {
        self.types.contains_key(name)
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(|s| s.as_str())
    }

    pub fn fiducials(&self, name: &str) -> Result<&FiducialSet> {
        self.types
            .get(name)
            .map(|e| &e.fiducials)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    /// The cached hopping metric for a type (computed at registration).
    pub fn hopping_metric(&self, name: &str) -> Result<&HoppingMetric> {
        self.types
            .get(name)
            .map(|e| &e.metric)
            .ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn operation_def(&self, apparatus_id: &str) -> Result<&OperationDef> {
        self.operations
            .get(apparatus_id)
            .ok_or_else(|| Error::MissingOperation {
                apparatus: apparatus_id.to_string(),
                outcome: String::new(),
            })
    }

    pub fn operation_ids(&self) -> impl Iterator<Item = &str> {
        self.operations.keys().map(|s| s.as_str())
    }

    pub fn operation_body(&self, apparatus_id: &str, outcome: &str) -> Result<&OperationBody> {
        self.operations
            .get(apparatus_id)
            .and_then(|def| def.outcomes.get(outcome))
            .ok_or_else(|| Error::MissingOperation {
                apparatus: apparatus_id.to_string(),
                outcome: outcome.to_string(),
            })
    }

    /// Build the `OperationSpec` of one use of a registered apparatus.
    pub fn spec(&self, apparatus_id: &str, outcome: &str) -> Result<OperationSpec> {
        let def = self.operation_def(apparatus_id)?;
        if !def.outcomes.contains_key(outcome) {
            return Err(Error::MissingOperation {
                apparatus: apparatus_id.to_string(),
                outcome: outcome.to_string(),
            });
        }
        Ok(OperationSpec {
            apparatus_id: apparatus_id.to_string(),
            setting: String::new(),
            outcome_label: outcome.to_string(),
            input_types: def.inputs.clone(),
            output_types: def.outputs.clone(),
        })
    }

    /// A new theory whose fiducials for `transform.type_name` are the
    /// transformed sets. Operations are carried over unchanged; duotensors
    /// produced under the new theory relate to old ones by the transformation
    /// law, and circuit probabilities are invariant.
    ///
    /// Transformed fiducials are generally not physical (quantum positivity
    /// can break), so only linear independence is re-checked here.
    pub fn change_fiducials(&self, transform: &FiducialTransform) -> Result<Theory> {
        let entry = self
            .types
            .get(&transform.type_name)
            .ok_or_else(|| Error::UnknownType(transform.type_name.clone()))?;
        let k = entry.system.k;
        if transform.effect_matrix.rows != k || transform.prep_matrix.rows != k {
            return Err(Error::ShapeMismatch {
                apparatus: transform.type_name.clone(),
                context: format!(
                    "transform is {}x{}, type has k = {k}",
                    transform.effect_matrix.rows, transform.effect_matrix.cols
                ),
            });
        }
        // old = E . new  =>  new = E^-1 . old   (effects, stacked as rows)
        // old = new . P  =>  new_j = sum_i old_i P^-1[i][j]   (preparations)
        let data = match &entry.fiducials.data {
            FiducialData::Classical {
                preparations,
                effects,
            } => FiducialData::Classical {
                preparations: combine_vectors(preparations, transform.prep_inverse(), false),
                effects: combine_vectors(effects, &transform.effect_inverse, true),
            },
            FiducialData::Quantum {
                preparations,
                effects,
            } => FiducialData::Quantum {
                preparations: combine_operators(preparations, transform.prep_inverse(), false),
                effects: combine_operators(effects, &transform.effect_inverse, true),
            },
        };
        let set = FiducialSet {
            type_name: transform.type_name.clone(),
            data,
        };
        validate_fiducials(
            &transform.type_name,
            entry.system.backend,
            entry.system.backend_dim,
            k,
            &set,
            false,
        )?;
        let metric = compute_metric(&transform.type_name, &set)?;
        let mut out = self.clone();
        let e = out.types.get_mut(&transform.type_name).unwrap();
        e.fiducials = set;
        e.metric = metric;
        Ok(out)
    }
}

/// `rows_are_coeff_rows = true`: new_i = sum_j M[i][j] old_j (row combine).
/// `false`: new_j = sum_i old_i M[i][j] (column combine).
fn combine_vectors(old: &[Vec<f64>], m: &Mat, rows_are_coeff_rows: bool) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = old[0].len();
    (0..k)
        .map(|new_idx| {
            let mut v = vec![0.0; dim];
            for (old_idx, o) in old.iter().enumerate() {
                let c = if rows_are_coeff_rows {
                    m[(new_idx, old_idx)]
                } else {
                    m[(old_idx, new_idx)]
                };
                for (t, s) in v.iter_mut().zip(o) {
                    *t += c * s;
                }
            }
            v
        })
        .collect()
}

fn combine_operators(old: &[CMat], m: &Mat, rows_are_coeff_rows: bool) -> Vec<CMat> {
    let k = old.len();
    (0..k)
        .map(|new_idx| {
            let mut acc = CMat::zeros(old[0].rows, old[0].cols);
            for (old_idx, o) in old.iter().enumerate() {
                let c = if rows_are_coeff_rows {
                    m[(new_idx, old_idx)]
                } else {
                    m[(old_idx, new_idx)]
                };
                acc = acc.add(&o.scale(Complex64::new(c, 0.0)));
            }
            acc
        })
        .collect()
}

fn check_body_shape(
    apparatus_id: &str,
    inputs: &[String],
    outputs: &[String],
    theory: &Theory,
    body: &OperationBody,
) -> Result<()> {
    let mut backend = None;
    let mut dim_in = 1usize;
    let mut dim_out = 1usize;
    for (types, dim) in [(inputs, &mut dim_in), (outputs, &mut dim_out)] {
        for t in types {
            let sys = theory.system_type(t)?;
            match backend {
                None => backend = Some(sys.backend),
                Some(b) if b == sys.backend => {}
                Some(_) => {
                    return Err(Error::MixedBackend {
                        apparatus: apparatus_id.to_string(),
                    })
                }
            }
            *dim *= sys.backend_dim;
        }
    }
    let body_backend = match body {
        OperationBody::Classical(_) => BackendKind::Classical,
        OperationBody::Quantum(_) => BackendKind::Quantum,
    };
    if let Some(b) = backend {
        if b != body_backend {
            return Err(Error::MixedBackend {
                apparatus: apparatus_id.to_string(),
            });
        }
    }
    let (rows, cols) = match body {
        OperationBody::Classical(op) => (op.z.rows, op.z.cols),
        OperationBody::Quantum(op) => op
            .kraus
            .first()
            .map(|k| (k.rows, k.cols))
            .unwrap_or((dim_out, dim_in)),
    };
    if rows != dim_out || cols != dim_in {
        return Err(Error::ShapeMismatch {
            apparatus: apparatus_id.to_string(),
            context: format!("body is {rows}x{cols}, ports require {dim_out}x{dim_in}"),
        });
    }
    Ok(())
}

fn default_fiducials(backend: BackendKind, n: usize) -> FiducialData {
    match backend {
        BackendKind::Classical => {
            let basis: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut v = vec![0.0; n];
                    v[i] = 1.0;
                    v
                })
                .collect();
            FiducialData::Classical {
                preparations: basis.clone(),
                effects: basis,
            }
        }
        BackendKind::Quantum => {
            let mut ops = Vec::with_capacity(n * n);
            for j in 0..n {
                let mut p = CMat::zeros(n, n);
                p[(j, j)] = Complex64::new(1.0, 0.0);
                ops.push(p);
            }
            // 1/2 (|j> + |k>)(<j| + <k|) for j < k
            for j in 0..n {
                for k in j + 1..n {
                    let mut p = CMat::zeros(n, n);
                    p[(j, j)] = Complex64::new(0.5, 0.0);
                    p[(k, k)] = Complex64::new(0.5, 0.0);
                    p[(j, k)] = Complex64::new(0.5, 0.0);
                    p[(k, j)] = Complex64::new(0.5, 0.0);
                    ops.push(p);
                }
            }
            // 1/2 (|j> + i|k>)(<j| - i<k|) for j < k
            for j in 0..n {
                for k in j + 1..n {
                    let mut p = CMat::zeros(n, n);
                    p[(j, j)] = Complex64::new(0.5, 0.0);
                    p[(k, k)] = Complex64::new(0.5, 0.0);
                    p[(j, k)] = Complex64::new(0.0, -0.5);
                    p[(k, j)] = Complex64::new(0.0, 0.5);
                    ops.push(p);
                }
            }
            FiducialData::Quantum {
                preparations: ops.clone(),
                effects: ops,
            }
        }
    }
}

fn validate_fiducials(
    type_name: &str,
    backend: BackendKind,
    backend_dim: usize,
    k: usize,
    set: &FiducialSet,
    check_physicality: bool,
) -> Result<()> {
    let count_err = |role: &'static str, got: usize| Error::FiducialCount {
        type_name: type_name.to_string(),
        role,
        expected: k,
        got,
    };
    match (&set.data, backend) {
        (
            FiducialData::Classical {
                preparations,
                effects,
            },
            BackendKind::Classical,
        ) => {
            if preparations.len() != k {
                return Err(count_err("preparation", preparations.len()));
            }
            if effects.len() != k {
                return Err(count_err("effect", effects.len()));
            }
            for (role, list) in [("preparation", preparations), ("effect", effects)] {
                for (index, v) in list.iter().enumerate() {
                    if v.len() != backend_dim {
                        return Err(Error::ShapeMismatch {
                            apparatus: type_name.to_string(),
                            context: format!(
                                "{role} {index} has {} entries, expected {backend_dim}",
                                v.len()
                            ),
                        });
                    }
                    if !check_physicality {
                        continue;
                    }
                    let unphysical = |constraint| Error::UnphysicalFiducial {
                        type_name: type_name.to_string(),
                        role,
                        index,
                        constraint,
                    };
                    if v.iter().any(|x| *x < POSITIVITY_FLOOR) {
                        return Err(unphysical("nonnegative_entries"));
                    }
                    match role {
                        "preparation" => {
                            if v.iter().sum::<f64>() > 1.0 - POSITIVITY_FLOOR {
                                return Err(unphysical("subnormalized"));
                            }
                        }
                        _ => {
                            if v.iter().any(|x| *x > 1.0 - POSITIVITY_FLOOR) {
                                return Err(unphysical("entries_in_unit_interval"));
                            }
                        }
                    }
                }
                let m = Mat::from_rows(list);
                let ratio = m.singular_value_ratio();
                if ratio <= INDEPENDENCE_FLOOR {
                    return Err(Error::DependentFiducials {
                        type_name: type_name.to_string(),
                        role,
                        ratio,
                    });
                }
            }
        }
        (
            FiducialData::Quantum {
                preparations,
                effects,
            },
            BackendKind::Quantum,
        ) => {
            if preparations.len() != k {
                return Err(count_err("preparation", preparations.len()));
            }
            if effects.len() != k {
                return Err(count_err("effect", effects.len()));
            }
            for (role, list) in [("preparation", preparations), ("effect", effects)] {
                for (index, p) in list.iter().enumerate() {
                    let unphysical = |constraint| Error::UnphysicalFiducial {
                        type_name: type_name.to_string(),
                        role,
                        index,
                        constraint,
                    };
                    if p.rows != backend_dim || p.cols != backend_dim {
                        return Err(Error::ShapeMismatch {
                            apparatus: type_name.to_string(),
                            context: format!(
                                "{role} {index} is {}x{}, expected {backend_dim}x{backend_dim}",
                                p.rows, p.cols
                            ),
                        });
                    }
                    if !p.is_hermitian(1e-12) {
                        return Err(unphysical("hermitian"));
                    }
                    if !check_physicality {
                        continue;
                    }
                    if p.hermitian_min_eigenvalue() < POSITIVITY_FLOOR {
                        return Err(unphysical("positive"));
                    }
                    match role {
                        "preparation" => {
                            if p.trace().re > 1.0 - POSITIVITY_FLOOR {
                                return Err(unphysical("trace_at_most_one"));
                            }
                        }
                        _ => {
                            let mut rem = CMat::identity(backend_dim);
                            rem = rem.add(&p.scale(Complex64::new(-1.0, 0.0)));
                            if rem.hermitian_min_eigenvalue() < POSITIVITY_FLOOR {
                                return Err(unphysical("below_identity"));
                            }
                        }
                    }
                }
                let m = Mat::from_rows(&list.iter().map(|p| p.to_real_vec()).collect::<Vec<_>>());
                let ratio = m.singular_value_ratio();
                if ratio <= INDEPENDENCE_FLOOR {
                    return Err(Error::DependentFiducials {
                        type_name: type_name.to_string(),
                        role,
                        ratio,
                    });
                }
            }
        }
        _ => {
            return Err(Error::Malformed {
                what: "fiducial set",
                context: format!("fiducial data does not match the {backend:?} backend"),
            })
        }
    }
    Ok(())
}

fn compute_metric(type_name: &str, set: &FiducialSet) -> Result<HoppingMetric> {
    let k = set.len();
    let mut g_bb = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g_bb[(i, j)] = set.pairing(i, j);
        }
    }
    let inverted = g_bb.invert();
    let (g_ww, condition_estimate) = match inverted {
        Some((inv, cond)) if cond <= METRIC_CONDITION_CEILING => (inv, cond),
        Some((_, cond)) => {
            return Err(Error::SingularMetric {
                type_name: type_name.to_string(),
                condition: cond,
            })
        }
        None => {
            return Err(Error::SingularMetric {
                type_name: type_name.to_string(),
                condition: f64::INFINITY,
            })
        }
    };
    let dev = g_bb.matmul(&g_ww).max_abs_diff(&Mat::identity(k));
    if dev > 1e-10 {
        return Err(Error::SingularMetric {
            type_name: type_name.to_string(),
            condition: condition_estimate,
        });
    }
    Ok(HoppingMetric {
        type_name: type_name.to_string(),
        g_bb,
        g_ww,
        condition_estimate,
    })
}
