//! Shared generators and independent oracles for the integration suites.

#![allow(dead_code)]

use std::collections::BTreeMap;

use duotensor::backends::oracle_probability;
use duotensor::linalg::{CMat, Mat};
use duotensor::prelude::*;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random transition matrix: nonnegative entries, column sums in [0.2, 1].
pub fn random_z(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for c in 0..cols {
        let col: Vec<f64> = (0..rows).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let sum: f64 = col.iter().sum();
        let scale = rng.gen_range(0.2..1.0) / sum;
        for r in 0..rows {
            m[(r, c)] = col[r] * scale;
        }
    }
    m
}

/// Random trace-non-increasing Kraus set (1 to 3 operators).
pub fn random_kraus(rng: &mut ChaCha8Rng, dim_out: usize, dim_in: usize) -> Vec<CMat> {
    let count = rng.gen_range(1..=3);
    let mut kraus: Vec<CMat> = (0..count)
        .map(|_| {
            let mut k = CMat::zeros(dim_out, dim_in);
            for v in k.data.iter_mut() {
                *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            k
        })
        .collect();
    // scale so that sum K^dag K is below the identity: the Frobenius norm of
    // the sum bounds its largest eigenvalue
    let mut s = CMat::zeros(dim_in, dim_in);
    for k in &kraus {
        s = s.add(&k.adjoint().matmul(k));
    }
    let frob: f64 = s.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = rng.gen_range(0.3..1.0);
    let scale = (target / frob.max(1e-12)).sqrt();
    for k in kraus.iter_mut() {
        *k = k.scale(Complex64::new(scale, 0.0));
    }
    kraus
}

/// Generate a random closed circuit into an existing theory. Types named
/// `{prefix}t*` are registered on first use; every instance gets its own
/// apparatus `{prefix}op*` with a single `o` outcome.
#[allow(clippy::too_many_arguments)]
pub fn random_circuit_into(
    theory: &mut Theory,
    rng: &mut ChaCha8Rng,
    backend: BackendKind,
    prefix: &str,
    max_ops: usize,
    n_types: usize,
    dims: std::ops::RangeInclusive<usize>,
    max_wires: usize,
) -> Circuit {
    let type_names: Vec<String> = (0..n_types).map(|i| format!("{prefix}t{i}")).collect();
    for name in &type_names {
        let dim = rng.gen_range(dims.clone());
        theory
            .register_type(name, backend, dim, FiducialSpec::Default)
            .expect("fresh type");
    }
    let n_ops = rng.gen_range(2..=max_ops.max(2));
    let mut fragment = Fragment::new();
    let mut dangling: Vec<(String, PortRef)> = Vec::new();
    let mut wires_made = 0usize;
    for i in 0..n_ops {
        let last = i + 1 == n_ops;
        let take = if dangling.is_empty() {
            0
        } else if last {
            dangling.len().min(3)
        } else {
            rng.gen_range(0..=dangling.len().min(2))
        };
        let mut consumed = Vec::new();
        for _ in 0..take {
            let at = rng.gen_range(0..dangling.len());
            consumed.push(dangling.swap_remove(at));
        }
        let room = max_wires.saturating_sub(wires_made + dangling.len());
        let produce = if last {
            0
        } else if consumed.is_empty() {
            rng.gen_range(1..=2usize.min(room.max(1)))
        } else {
            rng.gen_range(0..=2usize.min(room))
        };
        let produced: Vec<String> = (0..produce)
            .map(|_| type_names[rng.gen_range(0..type_names.len())].clone())
            .collect();
        wires_made += produce;
        let apparatus = format!("{prefix}op{i}");
        let input_types: Vec<String> = consumed.iter().map(|(t, _)| t.clone()).collect();
        let output_types = produced.clone();
        register_random_op(
            theory,
            rng,
            backend,
            &apparatus,
            &input_types,
            &output_types,
        );
        let spec = theory.spec(&apparatus, "o").unwrap();
        let id = fragment.add_instance(spec);
        for (slot, (_, from)) in consumed.iter().enumerate() {
            fragment
                .add_wire(from.clone(), PortRef::new(&id, slot))
                .expect("topological construction cannot make cycles");
        }
        for (slot, t) in produced.iter().enumerate() {
            dangling.push((t.clone(), PortRef::new(&id, slot)));
        }
    }
    // close whatever is left with per-instance random effects
    for (n, (t, from)) in dangling.into_iter().enumerate() {
        let apparatus = format!("{prefix}close{n}");
        register_random_op(
            theory,
            rng,
            backend,
            &apparatus,
            &[t],
            &Vec::<String>::new(),
        );
        let spec = theory.spec(&apparatus, "o").unwrap();
        let id = fragment.add_instance(spec);
        fragment
            .add_wire(from, PortRef::new(&id, 0))
            .expect("closing an open output");
    }
    Circuit::try_from(fragment).expect("generator closes every port")
}

pub fn register_random_op(
    theory: &mut Theory,
    rng: &mut ChaCha8Rng,
    backend: BackendKind,
    apparatus: &str,
    inputs: &[impl AsRef<str>],
    outputs: &[impl AsRef<str>],
) {
    let dim_of = |types: &[&str]| -> usize {
        types
            .iter()
            .map(|t| theory.system_type(t).unwrap().backend_dim)
            .product()
    };
    let inputs: Vec<&str> = inputs.iter().map(|s| s.as_ref()).collect();
    let outputs: Vec<&str> = outputs.iter().map(|s| s.as_ref()).collect();
    let dim_in = dim_of(&inputs);
    let dim_out = dim_of(&outputs);
    let owned_in: Vec<String> = inputs.iter().map(|s| s.to_string()).collect();
    let owned_out: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
    let body = match backend {
        BackendKind::Classical => OperationBody::Classical(
            ClassicalOperation::new(&owned_in, &owned_out, random_z(rng, dim_out, dim_in)).unwrap(),
        ),
        BackendKind::Quantum => OperationBody::Quantum(
            QuantumOperation::new(&owned_in, &owned_out, random_kraus(rng, dim_out, dim_in))
                .unwrap(),
        ),
    };
    theory
        .register_operation(
            apparatus,
            &inputs,
            &outputs,
            BTreeMap::from([("o".to_string(), body)]),
        )
        .expect("fresh apparatus");
}

pub fn random_circuit(
    rng: &mut ChaCha8Rng,
    backend: BackendKind,
    max_ops: usize,
    n_types: usize,
    dims: std::ops::RangeInclusive<usize>,
    max_wires: usize,
) -> (Theory, Circuit) {
    let mut theory = Theory::new();
    let circuit = random_circuit_into(
        &mut theory,
        rng,
        backend,
        "",
        max_ops,
        n_types,
        dims,
        max_wires,
    );
    (theory, circuit)
}

/// Left-to-right contraction plan over sorted instance ids.
pub fn ltr_plan(fragment: &Fragment) -> duotensor::engine::ContractionPlan {
    use duotensor::engine::{ContractionPlan, PlanStep};
    let ids: Vec<String> = fragment.instances.keys().cloned().collect();
    let mut steps = Vec::new();
    if ids.len() > 1 {
        let mut acc = ids[0].clone();
        for id in &ids[1..] {
            let merged = format!("({acc} {id})");
            steps.push(PlanStep {
                left: acc.clone(),
                right: id.clone(),
                result_size: 0,
            });
            acc = merged;
        }
    }
    ContractionPlan { steps }
}

/// Uniformly random pairwise contraction plan.
pub fn random_plan(
    fragment: &Fragment,
    rng: &mut ChaCha8Rng,
) -> duotensor::engine::ContractionPlan {
    use duotensor::engine::{ContractionPlan, PlanStep};
    let mut nodes: Vec<String> = fragment.instances.keys().cloned().collect();
    let mut steps = Vec::new();
    while nodes.len() > 1 {
        let i = rng.gen_range(0..nodes.len());
        let left = nodes.swap_remove(i);
        let j = rng.gen_range(0..nodes.len());
        let right = nodes.swap_remove(j);
        let merged = format!("({left} {right})");
        steps.push(PlanStep {
            left,
            right,
            result_size: 0,
        });
        nodes.push(merged);
    }
    ContractionPlan { steps }
}

/// Outcome of the completion-sampling ratio oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum CompletionVerdict {
    /// Empirical ratios with relative spread below 1e-6: well conditioned
    /// with the mean ratio.
    Stable(f64),
    /// Ratios move with the completion: not well conditioned.
    Varying,
}

/// Decide well-conditioning empirically: complete both fragments with the
/// same `trials` random completing fragments (one joint preparation feeding
/// every open input and one joint effect absorbing every open output, so
/// completions are correlated/entangled where possible), evaluate both
/// circuits with the backend oracle, and look at the spread of the ratios.
pub fn completion_ratio_oracle(
    e_i: &Fragment,
    e_j: &Fragment,
    theory: &Theory,
    backend: BackendKind,
    rng: &mut ChaCha8Rng,
    trials: usize,
) -> CompletionVerdict {
    let open_inputs = e_i.open_inputs();
    let open_outputs = e_i.open_outputs();
    let input_types: Vec<String> = open_inputs
        .iter()
        .map(|p| e_i.instances[&p.instance].input_types[p.slot].clone())
        .collect();
    let output_types: Vec<String> = open_outputs
        .iter()
        .map(|p| e_i.instances[&p.instance].output_types[p.slot].clone())
        .collect();
    let mut ratios = Vec::new();
    for trial in 0..trials {
        let mut t = theory.clone();
        if !input_types.is_empty() {
            register_random_op(
                &mut t,
                rng,
                backend,
                &format!("comp_prep{trial}"),
                &Vec::<String>::new(),
                &input_types,
            );
        }
        if !output_types.is_empty() {
            register_random_op(
                &mut t,
                rng,
                backend,
                &format!("comp_eff{trial}"),
                &output_types,
                &Vec::<String>::new(),
            );
        }
        let complete = |frag: &Fragment| -> Circuit {
            let mut f = frag.clone();
            if !input_types.is_empty() {
                let spec = t.spec(&format!("comp_prep{trial}"), "o").unwrap();
                let prep = f.add_instance(spec);
                for (slot, port) in open_inputs.iter().enumerate() {
                    f.add_wire(PortRef::new(&prep, slot), port.clone()).unwrap();
                }
            }
            if !output_types.is_empty() {
                let spec = t.spec(&format!("comp_eff{trial}"), "o").unwrap();
                let eff = f.add_instance(spec);
                for (slot, port) in open_outputs.iter().enumerate() {
                    f.add_wire(port.clone(), PortRef::new(&eff, slot)).unwrap();
                }
            }
            Circuit::try_from(f).expect("completion closes the fragment")
        };
        let p_i = oracle_probability(&complete(e_i), &t).unwrap();
        let p_j = oracle_probability(&complete(e_j), &t).unwrap();
        if p_j.abs() < 1e-12 {
            continue;
        }
        ratios.push(p_i / p_j);
    }
    assert!(
        ratios.len() * 2 >= trials,
        "too many degenerate completions to decide"
    );
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    if (hi - lo).abs() <= 1e-6 * mean.abs().max(1e-12) {
        CompletionVerdict::Stable(mean)
    } else {
        CompletionVerdict::Varying
    }
}

/// Independent synchronicity check: transitive closure over instances by
/// repeated squaring of the adjacency relation, then pairwise wire tests.
pub fn synchronous_by_transitive_closure(circuit: &Circuit, foliation: &Foliation) -> bool {
    let f = circuit.fragment();
    let ids: Vec<&String> = f.instances.keys().collect();
    let pos: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let n = ids.len();
    let mut reach = vec![false; n * n];
    for w in &f.wires {
        reach[pos[w.from.instance.as_str()] * n + pos[w.to.instance.as_str()]] = true;
    }
    // Floyd-Warshall closure
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    for surface in &foliation.hypersurfaces {
        let wires: Vec<&Wire> = surface.iter().map(|&i| &f.wires[i]).collect();
        for a in &wires {
            for b in &wires {
                if a.from == b.from && a.to == b.to {
                    continue;
                }
                let ai = pos[a.to.instance.as_str()];
                let bj = pos[b.from.instance.as_str()];
                if ai == bj || reach[ai * n + bj] {
                    return false;
                }
            }
        }
    }
    true
}

/// Random theory-free wiring for notation round-trip tests: a DAG with one
/// fixed signature per apparatus name, forward-only wires, some open ports,
/// and occasional closure devices.
pub fn random_wiring(rng: &mut ChaCha8Rng) -> Fragment {
    use duotensor::theory::{closure_effect_id, closure_prep_id, CLOSURE_OUTCOME};
    let types = ["a", "b", "c"];
    let apparatuses = ["A", "B", "C", "D", "E"];
    // one signature per apparatus, so repeated uses stay consistent
    let signatures: BTreeMap<&str, (Vec<String>, Vec<String>)> = apparatuses
        .iter()
        .map(|name| {
            let n_in = rng.gen_range(0..=2);
            let n_out = rng.gen_range(0..=2);
            let mk = |n: usize, rng: &mut ChaCha8Rng| {
                (0..n)
                    .map(|_| types[rng.gen_range(0..types.len())].to_string())
                    .collect::<Vec<_>>()
            };
            let ins = mk(n_in, rng);
            let outs = mk(n_out, rng);
            (*name, (ins, outs))
        })
        .collect();
    let n = rng.gen_range(1..=6);
    let mut f = Fragment::new();
    let mut created: Vec<String> = Vec::new();
    for _ in 0..n {
        let apparatus = apparatuses[rng.gen_range(0..apparatuses.len())];
        let (ins, outs) = signatures[apparatus].clone();
        let id = f.add_instance(OperationSpec {
            apparatus_id: apparatus.to_string(),
            setting: String::new(),
            outcome_label: if rng.gen_bool(0.3) {
                "x".to_string()
            } else {
                String::new()
            },
            input_types: ins,
            output_types: outs,
        });
        // wire some inputs to dangling outputs of earlier instances
        let input_types = f.instances[&id].input_types.clone();
        for (slot, t) in input_types.iter().enumerate() {
            if !rng.gen_bool(0.7) {
                continue;
            }
            let mut choices = Vec::new();
            for earlier in &created {
                for (oslot, ot) in f.instances[earlier].output_types.iter().enumerate() {
                    let port = PortRef::new(earlier, oslot);
                    if ot == t && f.wire_from(&port).is_none() {
                        choices.push(port);
                    }
                }
            }
            if !choices.is_empty() {
                let from = choices[rng.gen_range(0..choices.len())].clone();
                f.add_wire(from, PortRef::new(&id, slot)).unwrap();
            }
        }
        created.push(id);
    }
    // close a few remaining open ports with standard devices
    for port in f.open_inputs() {
        if rng.gen_bool(0.25) {
            let t = f.instances[&port.instance].input_types[port.slot].clone();
            let id = f.add_instance(OperationSpec {
                apparatus_id: closure_prep_id(&t),
                setting: String::new(),
                outcome_label: CLOSURE_OUTCOME.to_string(),
                input_types: vec![],
                output_types: vec![t],
            });
            f.add_wire(PortRef::new(&id, 0), port).unwrap();
        }
    }
    for port in f.open_outputs() {
        if rng.gen_bool(0.25) {
            let t = f.instances[&port.instance].output_types[port.slot].clone();
            let id = f.add_instance(OperationSpec {
                apparatus_id: closure_effect_id(&t),
                setting: String::new(),
                outcome_label: CLOSURE_OUTCOME.to_string(),
                input_types: vec![t],
                output_types: vec![],
            });
            f.add_wire(port, PortRef::new(&id, 0)).unwrap();
        }
    }
    f
}
