//! The two shipped theory uploads: classical probability theory and
//! finite-dimensional quantum theory.
//!
//! Each backend supplies operation bodies (transition matrices or Kraus
//! sets), builds the all-black duotensor of an operation (entries are the
//! fiducial probabilities), and provides [`oracle_probability`]: an
//! independent circuit evaluation that never touches duotensors, used to
//! cross-check the contraction engine.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use crate::circuit::{Circuit, Fragment, OperationSpec, PortRef, Wire};
use crate::duotensor::{index, Color, Direction, Duotensor, IndexMeta};
use crate::error::{Error, Result};
use crate::linalg::{kron_ff_vec, CMat, Mat};
use crate::theory::{BackendKind, FiducialData, Theory, POSITIVITY_FLOOR};

/// Joint-assignment cap for the classical enumeration oracle.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// A classical operation: a transition matrix with nonnegative entries whose
/// columns sum to at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalOperation {
    pub input_types: Vec<String>,
    pub output_types: Vec<String>,
    /// Shape (product of output dims) x (product of input dims); composite
    /// indices are little-endian over the listed type order.
    pub z: Mat,
}

impl ClassicalOperation {
    pub fn new(input_types: &[String], output_types: &[String], z: Mat) -> Result<Self> {
        for (r, row) in (0..z.rows).map(|r| (r, z.row(r))) {
            for (c, v) in row.iter().enumerate() {
                if *v < POSITIVITY_FLOOR {
                    return Err(Error::UnphysicalZ {
                        apparatus: String::new(),
                        context: format!("entry ({r},{c}) = {v} is negative"),
                    });
                }
            }
        }
        for c in 0..z.cols {
            let sum: f64 = (0..z.rows).map(|r| z[(r, c)]).sum();
            if sum > 1.0 - POSITIVITY_FLOOR {
                return Err(Error::UnphysicalZ {
                    apparatus: String::new(),
                    context: format!("column {c} sums to {sum} > 1"),
                });
            }
        }
        Ok(ClassicalOperation {
            input_types: input_types.to_vec(),
            output_types: output_types.to_vec(),
            z,
        })
    }
}

/// A quantum operation: a trace-non-increasing Kraus set.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOperation {
    pub input_types: Vec<String>,
    pub output_types: Vec<String>,
    /// Matrices of shape (product of output dims) x (product of input dims);
    /// the empty list is the zero map.
    pub kraus: Vec<CMat>,
}

impl QuantumOperation {
    pub fn new(input_types: &[String], output_types: &[String], kraus: Vec<CMat>) -> Result<Self> {
        if let Some(first) = kraus.first() {
            if kraus
                .iter()
                .any(|k| k.rows != first.rows || k.cols != first.cols)
            {
                return Err(Error::ShapeMismatch {
                    apparatus: String::new(),
                    context: "Kraus matrices have differing shapes".to_string(),
                });
            }
            let dim_in = first.cols;
            let mut s = CMat::zeros(dim_in, dim_in);
            for k in &kraus {
                s = s.add(&k.adjoint().matmul(k));
            }
            let mut excess_matrix = CMat::identity(dim_in);
            excess_matrix = excess_matrix.add(&s.scale(Complex64::new(-1.0, 0.0)));
            let min_eig = excess_matrix.hermitian_min_eigenvalue();
            if min_eig < POSITIVITY_FLOOR {
                return Err(Error::TraceIncreasing {
                    apparatus: String::new(),
                    excess: -min_eig,
                });
            }
        }
        Ok(QuantumOperation {
            input_types: input_types.to_vec(),
            output_types: output_types.to_vec(),
            kraus,
        })
    }

    /// Apply the channel to a density operator.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let dim_out = self.kraus.first().map(|k| k.rows).unwrap_or(0);
        let mut out = CMat::zeros(dim_out.max(1), dim_out.max(1));
        for k in &self.kraus {
            out = out.add(&k.matmul(rho).matmul(&k.adjoint()));
        }
        out
    }
}

/// A registered operation body, one per outcome label.
#[derive(Debug, Clone, PartialEq)]
pub enum OperationBody {
    Classical(ClassicalOperation),
    Quantum(QuantumOperation),
}

impl OperationBody {
    pub fn backend(&self) -> BackendKind {
        match self {
            OperationBody::Classical(_) => BackendKind::Classical,
            OperationBody::Quantum(_) => BackendKind::Quantum,
        }
    }
}

/// Little-endian flat index (first coordinate varies fastest).
fn le_flat(coords: &[usize], dims: &[usize]) -> usize {
    coords
        .iter()
        .zip(dims)
        .rev()
        .fold(0usize, |acc, (c, d)| acc * d + c)
}

/// All `k`-tuples over `dims`, little-endian order.
fn le_tuples(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut coords = vec![0usize; dims.len()];
        for (c, d) in coords.iter_mut().zip(dims) {
            *c = flat % d;
            flat /= d;
        }
        out.push(coords);
    }
    out
}

fn all_black_indices(
    spec_inputs: &[String],
    spec_outputs: &[String],
    theory: &Theory,
) -> Result<Vec<IndexMeta>> {
    let mut indices = Vec::new();
    for (slot, t) in spec_inputs.iter().enumerate() {
        let k = theory.system_type(t)?.k;
        indices.push(index(
            &format!("in{slot}"),
            Direction::Input,
            t,
            Color::Black,
            k,
        ));
    }
    for (slot, t) in spec_outputs.iter().enumerate() {
        let k = theory.system_type(t)?.k;
        indices.push(index(
            &format!("out{slot}"),
            Direction::Output,
            t,
            Color::Black,
            k,
        ));
    }
    Ok(indices)
}

/// Composite fiducial preparations over a type list, little-endian, one
/// vector per fiducial multi-index (classical backend).
fn composite_classical(theory: &Theory, types: &[String], preps: bool) -> Result<Vec<Vec<f64>>> {
    let ks: Vec<usize> = types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.k))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for tuple in le_tuples(&ks) {
        let mut acc = vec![1.0];
        for (t, &fi) in types.iter().zip(&tuple) {
            let set = theory.fiducials(t)?;
            let FiducialData::Classical {
                preparations,
                effects,
            } = &set.data
            else {
                return Err(Error::MixedBackend {
                    apparatus: t.clone(),
                });
            };
            let v = if preps {
                &preparations[fi]
            } else {
                &effects[fi]
            };
            acc = kron_ff_vec(&acc, v);
        }
        out.push(acc);
    }
    Ok(out)
}

fn composite_quantum(theory: &Theory, types: &[String], preps: bool) -> Result<Vec<CMat>> {
    let ks: Vec<usize> = types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.k))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for tuple in le_tuples(&ks) {
        let mut acc = CMat::identity(1);
        for (t, &fi) in types.iter().zip(&tuple) {
            let set = theory.fiducials(t)?;
            let FiducialData::Quantum {
                preparations,
                effects,
            } = &set.data
            else {
                return Err(Error::MixedBackend {
                    apparatus: t.clone(),
                });
            };
            let op = if preps {
                &preparations[fi]
            } else {
                &effects[fi]
            };
            acc = acc.kron_ff(op);
        }
        out.push(acc);
    }
    Ok(out)
}

/// All-black duotensor of a classical operation: entry at (input fiducials
/// j.., output fiducials i..) is `r_i . Z p_j` over composite fiducials.
pub fn classical_all_black(op: &ClassicalOperation, theory: &Theory) -> Result<Duotensor> {
    let indices = all_black_indices(&op.input_types, &op.output_types, theory)?;
    let dim_in: usize = op
        .input_types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.backend_dim))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    let dim_out: usize = op
        .output_types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.backend_dim))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    if op.z.rows != dim_out || op.z.cols != dim_in {
        return Err(Error::ShapeMismatch {
            apparatus: String::new(),
            context: format!(
                "Z is {}x{}, ports require {dim_out}x{dim_in}",
                op.z.rows, op.z.cols
            ),
        });
    }
    let preps = composite_classical(theory, &op.input_types, true)?;
    let effects = composite_classical(theory, &op.output_types, false)?;
    let zp: Vec<Vec<f64>> = preps
        .iter()
        .map(|p| {
            (0..op.z.rows)
                .map(|r| op.z.row(r).iter().zip(p).map(|(z, x)| z * x).sum())
                .collect()
        })
        .collect();
    let in_ks: Vec<usize> = op
        .input_types
        .iter()
        .map(|t| theory.system_type(t).unwrap().k)
        .collect();
    let out_ks: Vec<usize> = op
        .output_types
        .iter()
        .map(|t| theory.system_type(t).unwrap().k)
        .collect();
    let mut values = Vec::with_capacity(preps.len() * effects.len());
    // duotensor layout is row-major over [inputs.., outputs..]
    for jt in row_major_tuples(&in_ks) {
        let j = le_flat(&jt, &in_ks);
        for it in row_major_tuples(&out_ks) {
            let i = le_flat(&it, &out_ks);
            let v: f64 = effects[i].iter().zip(&zp[j]).map(|(r, x)| r * x).sum();
            values.push(v);
        }
    }
    Duotensor::new(indices, values)
}

/// All-black duotensor of a quantum operation: entry is
/// `Trace(E_i . sum_k K P_j K^dagger)` over composite fiducials. Imaginary
/// residue beyond 1e-12 of the magnitude is clamped away.
pub fn quantum_all_black(op: &QuantumOperation, theory: &Theory) -> Result<Duotensor> {
    let indices = all_black_indices(&op.input_types, &op.output_types, theory)?;
    let dim_in: usize = op
        .input_types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.backend_dim))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    let dim_out: usize = op
        .output_types
        .iter()
        .map(|t| theory.system_type(t).map(|s| s.backend_dim))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    if let Some(first) = op.kraus.first() {
        if first.rows != dim_out || first.cols != dim_in {
            return Err(Error::ShapeMismatch {
                apparatus: String::new(),
                context: format!(
                    "Kraus matrices are {}x{}, ports require {dim_out}x{dim_in}",
                    first.rows, first.cols
                ),
            });
        }
    }
    let preps = composite_quantum(theory, &op.input_types, true)?;
    let effects = composite_quantum(theory, &op.output_types, false)?;
    let mapped: Vec<CMat> = preps
        .iter()
        .map(|p| {
            if op.kraus.is_empty() {
                CMat::zeros(dim_out, dim_out)
            } else {
                let mut acc = CMat::zeros(dim_out, dim_out);
                for k in &op.kraus {
                    acc = acc.add(&k.matmul(p).matmul(&k.adjoint()));
                }
                acc
            }
        })
        .collect();
    let in_ks: Vec<usize> = op
        .input_types
        .iter()
        .map(|t| theory.system_type(t).unwrap().k)
        .collect();
    let out_ks: Vec<usize> = op
        .output_types
        .iter()
        .map(|t| theory.system_type(t).unwrap().k)
        .collect();
    let mut values = Vec::with_capacity(mapped.len() * effects.len());
    for jt in row_major_tuples(&in_ks) {
        let j = le_flat(&jt, &in_ks);
        for it in row_major_tuples(&out_ks) {
            let i = le_flat(&it, &out_ks);
            let tr = effects[i].matmul(&mapped[j]).trace();
            debug_assert!(tr.im.abs() <= 1e-12 * tr.re.abs().max(1.0));
            values.push(tr.re);
        }
    }
    Duotensor::new(indices, values)
}

/// Row-major tuple enumeration (last coordinate fastest), matching duotensor
/// value layout.
fn row_major_tuples(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut coords = vec![0usize; dims.len()];
        let mut rem = flat;
        for i in (0..dims.len()).rev() {
            coords[i] = rem % dims[i];
            rem /= dims[i];
        }
        out.push(coords);
    }
    out
}

/// All-black duotensor of a registered operation, dispatched by backend.
pub fn all_black(theory: &Theory, spec: &OperationSpec) -> Result<Duotensor> {
    let body = theory.operation_body(&spec.apparatus_id, &spec.outcome_label)?;
    match body {
        OperationBody::Classical(op) => classical_all_black(op, theory),
        OperationBody::Quantum(op) => quantum_all_black(op, theory),
    }
}

/// Circuit probability computed without duotensors.
///
/// Classical components are evaluated by exact summation over all joint
/// assignments of underlying states to wires; quantum components by composing
/// superoperators along a topological order with identity padding. Disjoint
/// components multiply.
pub fn oracle_probability(circuit: &Circuit, theory: &Theory) -> Result<f64> {
    let fragment = circuit.fragment();
    let mut prob = 1.0;
    for component in connected_components(fragment) {
        let backend = component_backend(&component, theory)?;
        let p = match backend {
            BackendKind::Classical => classical_enumeration(&component, theory)?,
            BackendKind::Quantum => quantum_superoperator_composition(&component, theory)?,
        };
        prob *= p;
    }
    Ok(prob)
}

fn connected_components(fragment: &Fragment) -> Vec<Fragment> {
    let ids: Vec<&String> = fragment.instances.keys().collect();
    let mut parent: BTreeMap<&str, &str> = ids.iter().map(|s| (s.as_str(), s.as_str())).collect();
    fn find<'a>(parent: &mut BTreeMap<&'a str, &'a str>, mut x: &'a str) -> &'a str {
        while parent[x] != x {
            let up = parent[parent[x]];
            parent.insert(x, up);
            x = up;
        }
        x
    }
    for w in &fragment.wires {
        let a = find(&mut parent, w.from.instance.as_str());
        let b = find(&mut parent, w.to.instance.as_str());
        if a != b {
            parent.insert(a, b);
        }
    }
    let mut groups: BTreeMap<&str, Fragment> = BTreeMap::new();
    for id in &ids {
        let root = find(&mut parent, id.as_str());
        groups
            .entry(root)
            .or_default()
            .instances
            .insert((*id).clone(), fragment.instances[*id].clone());
    }
    for w in &fragment.wires {
        let root = find(&mut parent, w.from.instance.as_str());
        groups
            .get_mut(root)
            .expect("component")
            .wires
            .push(w.clone());
    }
    groups.into_values().collect()
}

fn component_backend(component: &Fragment, theory: &Theory) -> Result<BackendKind> {
    for spec in component.instances.values() {
        if let Some(t) = spec.input_types.first().or(spec.output_types.first()) {
            return Ok(theory.system_type(t)?.backend);
        }
    }
    // portless component: backend comes from the body
    let spec = component.instances.values().next().expect("nonempty");
    Ok(theory
        .operation_body(&spec.apparatus_id, &spec.outcome_label)?
        .backend())
}

fn classical_enumeration(component: &Fragment, theory: &Theory) -> Result<f64> {
    let wires = &component.wires;
    let wire_dims: Vec<usize> = wires
        .iter()
        .map(|w| {
            let spec = &component.instances[&w.from.instance];
            theory
                .system_type(&spec.output_types[w.from.slot])
                .map(|s| s.backend_dim)
        })
        .collect::<Result<_>>()?;
    let total: u128 = wire_dims.iter().map(|&d| d as u128).product();
    if total > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            size: total,
            cap: ENUMERATION_CAP,
        });
    }
    // per instance: wire ids feeding each input slot / leaving each output slot
    struct Node<'a> {
        z: &'a Mat,
        in_wires: Vec<usize>,
        in_dims: Vec<usize>,
        out_wires: Vec<usize>,
        out_dims: Vec<usize>,
    }
    let mut nodes = Vec::new();
    for (id, spec) in &component.instances {
        let body = theory.operation_body(&spec.apparatus_id, &spec.outcome_label)?;
        let OperationBody::Classical(op) = body else {
            return Err(Error::MixedBackend {
                apparatus: spec.apparatus_id.clone(),
            });
        };
        let mut in_wires = Vec::new();
        for slot in 0..spec.input_types.len() {
            let port = PortRef::new(id, slot);
            let w = wires
                .iter()
                .position(|w| w.to == port)
                .ok_or_else(|| Error::InvalidCircuit(format!("open input {id}:{slot}")))?;
            in_wires.push(w);
        }
        let mut out_wires = Vec::new();
        for slot in 0..spec.output_types.len() {
            let port = PortRef::new(id, slot);
            let w = wires
                .iter()
                .position(|w| w.from == port)
                .ok_or_else(|| Error::InvalidCircuit(format!("open output {id}:{slot}")))?;
            out_wires.push(w);
        }
        let in_dims: Vec<usize> = in_wires.iter().map(|&w| wire_dims[w]).collect();
        let out_dims: Vec<usize> = out_wires.iter().map(|&w| wire_dims[w]).collect();
        nodes.push(Node {
            z: &op.z,
            in_wires,
            in_dims,
            out_wires,
            out_dims,
        });
    }
    let mut sum = 0.0;
    let mut states = vec![0usize; wires.len()];
    let total = total as usize;
    for flat in 0..total.max(1) {
        let mut rem = flat;
        for (s, d) in states.iter_mut().zip(&wire_dims) {
            *s = rem % d;
            rem /= d;
        }
        let mut term = 1.0;
        for node in &nodes {
            let in_states: Vec<usize> = node.in_wires.iter().map(|&w| states[w]).collect();
            let out_states: Vec<usize> = node.out_wires.iter().map(|&w| states[w]).collect();
            let col = le_flat(&in_states, &node.in_dims);
            let row = le_flat(&out_states, &node.out_dims);
            term *= node.z[(row, col)];
            if term == 0.0 {
                break;
            }
        }
        sum += term;
    }
    Ok(sum)
}

/// Conjugate a density operator by a frontier permutation. `perm[new] = old`;
/// composite indices are little-endian over the frontier list.
fn permute_density(rho: &CMat, old_dims: &[usize], perm: &[usize]) -> CMat {
    let n = old_dims.len();
    let mut old_strides = vec![1usize; n];
    for i in 1..n {
        old_strides[i] = old_strides[i - 1] * old_dims[i - 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| old_dims[p]).collect();
    let total: usize = old_dims.iter().product();
    let map_index = |mut flat: usize| -> usize {
        let mut coords = vec![0usize; n];
        for (c, d) in coords.iter_mut().zip(&new_dims) {
            *c = flat % d;
            flat /= d;
        }
        coords
            .iter()
            .zip(perm)
            .map(|(c, &p)| c * old_strides[p])
            .sum()
    };
    let row_map: Vec<usize> = (0..total).map(map_index).collect();
    let mut out = CMat::zeros(total, total);
    for i in 0..total {
        for j in 0..total {
            out[(i, j)] = rho[(row_map[i], row_map[j])];
        }
    }
    out
}

fn quantum_superoperator_composition(component: &Fragment, theory: &Theory) -> Result<f64> {
    let layers = component.topo_layers()?;
    let order: Vec<String> = layers.into_iter().flatten().collect();
    let mut frontier: Vec<usize> = Vec::new(); // wire indices
    let mut state = CMat::identity(1);
    let wire_dim = |w: &Wire| -> Result<usize> {
        let spec = &component.instances[&w.from.instance];
        Ok(theory
            .system_type(&spec.output_types[w.from.slot])?
            .backend_dim)
    };
    for id in &order {
        let spec = &component.instances[id];
        let body = theory.operation_body(&spec.apparatus_id, &spec.outcome_label)?;
        let OperationBody::Quantum(op) = body else {
            return Err(Error::MixedBackend {
                apparatus: spec.apparatus_id.clone(),
            });
        };
        let mut in_wires = Vec::new();
        for slot in 0..spec.input_types.len() {
            let port = PortRef::new(id, slot);
            let w = component
                .wires
                .iter()
                .position(|w| w.to == port)
                .ok_or_else(|| Error::InvalidCircuit(format!("open input {id}:{slot}")))?;
            in_wires.push(w);
        }
        // permute consumed wires to the front, preserving the rest
        let rest: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|w| !in_wires.contains(w))
            .collect();
        let old_dims: Vec<usize> = frontier
            .iter()
            .map(|&w| wire_dim(&component.wires[w]))
            .collect::<Result<_>>()?;
        let perm: Vec<usize> = in_wires
            .iter()
            .chain(rest.iter())
            .map(|w| {
                frontier
                    .iter()
                    .position(|x| x == w)
                    .expect("wire in frontier")
            })
            .collect();
        state = permute_density(&state, &old_dims, &perm);
        let dim_rest: usize = rest
            .iter()
            .map(|&w| wire_dim(&component.wires[w]).unwrap())
            .product();
        let dim_out: usize = spec
            .output_types
            .iter()
            .map(|t| theory.system_type(t).map(|s| s.backend_dim))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .product();
        let identity_rest = CMat::identity(dim_rest);
        let mut new_state = CMat::zeros(dim_out * dim_rest, dim_out * dim_rest);
        if op.kraus.is_empty() {
            state = new_state;
        } else {
            for k in &op.kraus {
                let m = k.kron_ff(&identity_rest);
                new_state = new_state.add(&m.matmul(&state).matmul(&m.adjoint()));
            }
            state = new_state;
        }
        let mut out_wires = Vec::new();
        for slot in 0..spec.output_types.len() {
            let port = PortRef::new(id, slot);
            let w = component
                .wires
                .iter()
                .position(|w| w.from == port)
                .ok_or_else(|| Error::InvalidCircuit(format!("open output {id}:{slot}")))?;
            out_wires.push(w);
        }
        frontier = out_wires.into_iter().chain(rest).collect();
    }
    debug_assert!(frontier.is_empty());
    debug_assert_eq!(state.rows, 1);
    Ok(state[(0, 0)].re)
}

/// True when the spec refers to one of the theory's standard closure devices.
pub fn is_closure_spec(spec: &OperationSpec) -> bool {
    spec.apparatus_id.starts_with("!std_")
}

/// The wire types appearing in a fragment, each with its backend.
pub fn fragment_backends(fragment: &Fragment, theory: &Theory) -> Result<BTreeSet<BackendKind>> {
    let mut kinds = BTreeSet::new();
    for spec in fragment.instances.values() {
        for t in spec.input_types.iter().chain(&spec.output_types) {
            kinds.insert(theory.system_type(t)?.backend);
        }
    }
    Ok(kinds)
}
