//! Evaluation: compile fragments to duotensors, choose a contraction order,
//! compute circuit probabilities, decide well-conditioned ratios, and run
//! foliation-based state evolution.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::backends::all_black;
use crate::circuit::{Circuit, Foliation, Fragment, PortRef, Wire};
use crate::duotensor::{index, Color, Direction, Duotensor, ProportionalityResult};
use crate::error::{Error, Result};
use crate::theory::Theory;

/// Default relative tolerance for proportionality in [`ratio_check`].
pub const DEFAULT_RATIO_TOL: f64 = 1e-8;

/// One pairwise contraction in a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStep {
    pub left: String,
    pub right: String,
    /// Number of entries of the intermediate produced by this step.
    pub result_size: usize,
}

/// A deterministic, replayable pairwise contraction order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ContractionPlan {
    pub steps: Vec<PlanStep>,
}

impl ContractionPlan {
    /// Sum of intermediate sizes, used to compare plans.
    pub fn total_cost(&self) -> usize {
        self.steps.iter().map(|s| s.result_size).sum()
    }
}

/// An open port of a fragment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OpenPort {
    pub instance: String,
    pub direction: Direction,
    pub slot: usize,
}

/// A fragment compiled down to a single duotensor in standard-form colouring.
#[derive(Debug, Clone)]
pub struct CompiledFragment {
    pub duotensor: Duotensor,
    /// Bijection from the fragment's open ports onto the duotensor's index
    /// labels.
    pub port_map: BTreeMap<OpenPort, String>,
    pub provenance: ContractionPlan,
}

/// Result of evaluating a circuit along a foliation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoliationEvaluation {
    pub probability: f64,
    /// Number of identity deltas inserted for wires crossing more than one
    /// hypersurface.
    pub padding_count: usize,
}

/// Verdict of a well-conditioned probability-ratio test.
#[derive(Debug, Clone, PartialEq)]
pub enum RatioVerdict {
    WellConditioned(f64),
    NotWellConditioned,
    Undefined(String),
}

fn in_label(instance: &str, slot: usize) -> String {
    format!("{instance}.in{slot}")
}

fn out_label(instance: &str, slot: usize) -> String {
    format!("{instance}.out{slot}")
}

/// Greedy pairwise contraction order.
///
/// At every step the connected pair with the smallest resulting intermediate
/// (product of remaining index dimensions) is contracted, ties broken
/// lexicographically by node-name pair; disconnected pairs are considered
/// only when no linked pair remains.
pub fn plan_contraction(fragment: &Fragment, theory: &Theory) -> Result<ContractionPlan> {
    // node name -> set of (label, dim); wires as label pairs
    let mut node_labels: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (id, spec) in &fragment.instances {
        let mut labels = BTreeMap::new();
        for (slot, t) in spec.input_types.iter().enumerate() {
            labels.insert(in_label(id, slot), theory.system_type(t)?.k);
        }
        for (slot, t) in spec.output_types.iter().enumerate() {
            labels.insert(out_label(id, slot), theory.system_type(t)?.k);
        }
        node_labels.insert(id.clone(), labels);
    }
    let mut links: Vec<(String, String)> = fragment
        .wires
        .iter()
        .map(|w| {
            (
                out_label(&w.from.instance, w.from.slot),
                in_label(&w.to.instance, w.to.slot),
            )
        })
        .collect();
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for (node, labels) in &node_labels {
        for label in labels.keys() {
            owner.insert(label.clone(), node.clone());
        }
    }
    let mut steps = Vec::new();
    while node_labels.len() > 1 {
        // candidate pairs that share at least one link
        let mut linked_pairs: BTreeSet<(String, String)> = BTreeSet::new();
        for (la, lb) in &links {
            let a = owner[la].clone();
            let b = owner[lb].clone();
            if a != b {
                let (x, y) = if a < b { (a, b) } else { (b, a) };
                linked_pairs.insert((x, y));
            }
        }
        let candidates: Vec<(String, String)> = if linked_pairs.is_empty() {
            let names: Vec<&String> = node_labels.keys().collect();
            let mut pairs = Vec::new();
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    pairs.push((names[i].clone(), names[j].clone()));
                }
            }
            pairs
        } else {
            linked_pairs.into_iter().collect()
        };
        let result_size = |a: &str, b: &str| -> usize {
            let mut labels: BTreeMap<&String, usize> = BTreeMap::new();
            labels.extend(node_labels[a].iter().map(|(l, d)| (l, *d)));
            labels.extend(node_labels[b].iter().map(|(l, d)| (l, *d)));
            for (la, lb) in &links {
                let oa = &owner[la];
                let ob = &owner[lb];
                if (oa == a && ob == b) || (oa == b && ob == a) {
                    labels.remove(la);
                    labels.remove(lb);
                }
            }
            labels.values().product::<usize>().max(1)
        };
        let (left, right) = candidates
            .into_iter()
            .min_by(|p, q| {
                result_size(&p.0, &p.1)
                    .cmp(&result_size(&q.0, &q.1))
                    .then_with(|| p.cmp(q))
            })
            .expect("at least two nodes remain");
        let size = result_size(&left, &right);
        let merged = format!("({left} {right})");
        let mut labels = node_labels.remove(&left).unwrap();
        labels.extend(node_labels.remove(&right).unwrap());
        links.retain(|(la, lb)| {
            let contracted = {
                let oa = &owner[la];
                let ob = &owner[lb];
                (oa == &left || oa == &right) && (ob == &left || ob == &right)
            };
            if contracted {
                labels.remove(la);
                labels.remove(lb);
            }
            !contracted
        });
        for label in labels.keys() {
            owner.insert(label.clone(), merged.clone());
        }
        node_labels.insert(merged.clone(), labels);
        steps.push(PlanStep {
            left,
            right,
            result_size: size,
        });
    }
    Ok(ContractionPlan { steps })
}

/// Contract a fragment into a single standard-form duotensor following an
/// explicit plan. Exposed so that order-independence can be tested
/// externally; [`compile_fragment`] uses the greedy plan.
pub fn compile_fragment_with_plan(
    fragment: &Fragment,
    theory: &Theory,
    plan: &ContractionPlan,
) -> Result<CompiledFragment> {
    let report = fragment.validate();
    if !report.is_valid() {
        return Err(Error::ValidationFailed(format!(
            "{} wiring violation(s)",
            report.violations.len()
        )));
    }
    let mut nodes: BTreeMap<String, Duotensor> = BTreeMap::new();
    for (id, spec) in &fragment.instances {
        let mut t = all_black(theory, spec)?.to_standard_form(theory)?;
        for (slot, _) in spec.input_types.iter().enumerate() {
            t = t.rename_port(&format!("in{slot}"), &in_label(id, slot))?;
        }
        for (slot, _) in spec.output_types.iter().enumerate() {
            t = t.rename_port(&format!("out{slot}"), &out_label(id, slot))?;
        }
        nodes.insert(id.clone(), t);
    }
    let mut remaining_links: Vec<(String, String)> = fragment
        .wires
        .iter()
        .map(|w| {
            (
                out_label(&w.from.instance, w.from.slot),
                in_label(&w.to.instance, w.to.slot),
            )
        })
        .collect();
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for (name, t) in &nodes {
        for m in t.indices() {
            owner.insert(m.port_label.clone(), name.clone());
        }
    }
    for step in &plan.steps {
        let left = nodes.remove(&step.left).ok_or_else(|| Error::Malformed {
            what: "contraction plan",
            context: format!("unknown node `{}`", step.left),
        })?;
        let right = nodes.remove(&step.right).ok_or_else(|| Error::Malformed {
            what: "contraction plan",
            context: format!("unknown node `{}`", step.right),
        })?;
        let merged_name = format!("({} {})", step.left, step.right);
        let mut step_links: Vec<(String, String)> = Vec::new();
        remaining_links.retain(|(la, lb)| {
            let oa = &owner[la];
            let ob = &owner[lb];
            let internal =
                (oa == &step.left || oa == &step.right) && (ob == &step.left || ob == &step.right);
            if internal {
                // orient so the first label belongs to `left`
                if oa == &step.left {
                    step_links.push((la.clone(), lb.clone()));
                } else {
                    step_links.push((lb.clone(), la.clone()));
                }
            }
            !internal
        });
        let merged = left.contract(&right, &step_links)?;
        for m in merged.indices() {
            owner.insert(m.port_label.clone(), merged_name.clone());
        }
        nodes.insert(merged_name, merged);
    }
    let mut result = match nodes.len() {
        0 => Duotensor::scalar(1.0),
        1 => nodes.into_values().next().unwrap(),
        n => {
            return Err(Error::Malformed {
                what: "contraction plan",
                context: format!("plan leaves {n} nodes uncontracted"),
            })
        }
    };
    result = result.sorted_by_label();
    let mut port_map = BTreeMap::new();
    for p in fragment.open_inputs() {
        port_map.insert(
            OpenPort {
                instance: p.instance.clone(),
                direction: Direction::Input,
                slot: p.slot,
            },
            in_label(&p.instance, p.slot),
        );
    }
    for p in fragment.open_outputs() {
        port_map.insert(
            OpenPort {
                instance: p.instance.clone(),
                direction: Direction::Output,
                slot: p.slot,
            },
            out_label(&p.instance, p.slot),
        );
    }
    Ok(CompiledFragment {
        duotensor: result,
        port_map,
        provenance: plan.clone(),
    })
}

/// Compile a fragment: contract the per-instance duotensors over all internal
/// wires. The result is in standard-form colouring with indices sorted by
/// label, so it depends only on the fragment itself.
pub fn compile_fragment(fragment: &Fragment, theory: &Theory) -> Result<CompiledFragment> {
    let plan = plan_contraction(fragment, theory)?;
    compile_fragment_with_plan(fragment, theory, &plan)
}

/// Probability of a circuit by duotensor contraction.
pub fn circuit_probability(circuit: &Circuit, theory: &Theory) -> Result<f64> {
    let compiled = compile_fragment(circuit.fragment(), theory)?;
    compiled
        .duotensor
        .as_scalar()
        .ok_or_else(|| Error::InvalidCircuit("compiled circuit is not a scalar".to_string()))
}

/// Clamp a probability into [0, 1] for reporting.
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

/// Structural check that two fragments are the same experiment: identical
/// instances, settings, port signatures, and wiring, differing at most in
/// outcome labels.
fn same_experiment(a: &Fragment, b: &Fragment) -> std::result::Result<(), String> {
    if a.instances.len() != b.instances.len() {
        return Err(format!(
            "{} instances vs {}",
            a.instances.len(),
            b.instances.len()
        ));
    }
    for (id, sa) in &a.instances {
        let Some(sb) = b.instances.get(id) else {
            return Err(format!("instance `{id}` missing from one fragment"));
        };
        if sa.apparatus_id != sb.apparatus_id {
            return Err(format!("instance `{id}` uses different apparatuses"));
        }
        if sa.setting != sb.setting {
            return Err(format!("instance `{id}` uses different settings"));
        }
        if sa.input_types != sb.input_types || sa.output_types != sb.output_types {
            return Err(format!("instance `{id}` has different port signatures"));
        }
    }
    let key = |w: &Wire| {
        (
            w.from.instance.clone(),
            w.from.slot,
            w.to.instance.clone(),
            w.to.slot,
        )
    };
    let mut wa: Vec<_> = a.wires.iter().map(key).collect();
    let mut wb: Vec<_> = b.wires.iter().map(key).collect();
    wa.sort();
    wb.sort();
    if wa != wb {
        return Err("wiring differs".to_string());
    }
    Ok(())
}

/// Decide whether the probability ratio of two same-experiment fragments is
/// well conditioned, by duotensor proportionality.
pub fn ratio_check(
    e_i: &Fragment,
    e_j: &Fragment,
    theory: &Theory,
    rel_tol: f64,
) -> Result<RatioVerdict> {
    same_experiment(e_i, e_j).map_err(Error::NotSameExperiment)?;
    let ci = compile_fragment(e_i, theory)?;
    let cj = compile_fragment(e_j, theory)?;
    Ok(
        match ci.duotensor.proportionality(&cj.duotensor, rel_tol)? {
            ProportionalityResult::Proportional(k) => RatioVerdict::WellConditioned(k),
            ProportionalityResult::NotProportional => RatioVerdict::NotWellConditioned,
            ProportionalityResult::ZeroDenominator => {
                RatioVerdict::Undefined("zero denominator".to_string())
            }
            ProportionalityResult::BothZero => RatioVerdict::Undefined("both zero".to_string()),
        },
    )
}

/// Evaluate a circuit by evolving a state across the hypersurfaces of a
/// foliation, padding with identity deltas for wires that cross more than
/// one hypersurface.
pub fn evolve_foliation(
    circuit: &Circuit,
    foliation: &Foliation,
    theory: &Theory,
) -> Result<FoliationEvaluation> {
    if !foliation.is_complete(circuit) {
        return Err(Error::IncompatibleFoliation(
            "not every wire is covered by a hypersurface".to_string(),
        ));
    }
    if !foliation.is_synchronous(circuit) {
        return Err(Error::IncompatibleFoliation(
            "a hypersurface contains causally ordered wires".to_string(),
        ));
    }
    let fragment = circuit.fragment();
    let layers = foliation.layers(circuit)?;
    let wire_label = |w: usize| format!("w{w}");
    let wire_type = |w: &Wire| -> Result<(String, usize)> {
        let spec = &fragment.instances[&w.from.instance];
        let t = spec.output_types[w.from.slot].clone();
        let k = theory.system_type(&t)?.k;
        Ok((t, k))
    };
    // cuts: the foliation's hypersurfaces plus the final empty cut
    let mut cuts: Vec<BTreeSet<usize>> = foliation.hypersurfaces.clone();
    cuts.push(BTreeSet::new());
    let mut cur: BTreeSet<usize> = BTreeSet::new();
    let mut state = Duotensor::scalar(1.0);
    let mut padding_count = 0usize;
    for (advancing, target) in layers.iter().zip(&cuts) {
        let mut consumed: BTreeSet<usize> = BTreeSet::new();
        // layer transformation: advancing operations in evolution colouring,
        // with the produced wires temporarily suffixed to keep labels unique
        let mut transform = Duotensor::scalar(1.0);
        for id in advancing {
            let spec = &fragment.instances[id];
            let mut t = all_black(theory, spec)?.to_evolution_form(theory)?;
            for slot in 0..spec.input_types.len() {
                let w = fragment.wire_to(&PortRef::new(id, slot)).expect("wired");
                consumed.insert(w);
                t = t.rename_port(&format!("in{slot}"), &wire_label(w))?;
            }
            for slot in 0..spec.output_types.len() {
                let w = fragment.wire_from(&PortRef::new(id, slot)).expect("wired");
                t = t.rename_port(&format!("out{slot}"), &format!("{}.next", wire_label(w)))?;
            }
            transform = transform.outer(&t)?;
        }
        // identity deltas for wires that cross both this cut and the previous
        for &w in cur.difference(&consumed) {
            let (t, k) = wire_type(&fragment.wires[w])?;
            let mut values = vec![0.0; k * k];
            for i in 0..k {
                values[i * k + i] = 1.0;
            }
            let delta = Duotensor::new(
                vec![
                    index(&wire_label(w), Direction::Input, &t, Color::White, k),
                    index(
                        &format!("{}.next", wire_label(w)),
                        Direction::Output,
                        &t,
                        Color::Black,
                        k,
                    ),
                ],
                values,
            )?;
            transform = transform.outer(&delta)?;
            padding_count += 1;
        }
        let links: Vec<(String, String)> = cur
            .iter()
            .map(|&w| (wire_label(w), wire_label(w)))
            .collect();
        state = state.contract(&transform, &links)?;
        for &w in target {
            state = state.rename_port(&format!("{}.next", wire_label(w)), &wire_label(w))?;
        }
        cur = target.clone();
    }
    let probability = state.as_scalar().ok_or_else(|| {
        Error::IncompatibleFoliation("evolution did not end in a scalar".to_string())
    })?;
    Ok(FoliationEvaluation {
        probability,
        padding_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{oracle_probability, ClassicalOperation, OperationBody};
    use crate::circuit::foliate;
    use crate::dsl;
    use crate::linalg::Mat;
    use crate::theory::{BackendKind, FiducialSpec};

    fn classical_op(inputs: &[&str], outputs: &[&str], z: Mat) -> OperationBody {
        OperationBody::Classical(
            ClassicalOperation::new(
                &inputs.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                &outputs.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                z,
            )
            .unwrap(),
        )
    }

    fn coin_theory() -> Theory {
        let mut t = Theory::new();
        t.register_type("a", BackendKind::Classical, 2, FiducialSpec::Default)
            .unwrap();
        t.register_operation(
            "Coin",
            &[],
            &["a"],
            BTreeMap::from([(
                "flip".to_string(),
                classical_op(
                    &[],
                    &["a"],
                    Mat {
                        rows: 2,
                        cols: 1,
                        data: vec![0.5, 0.5],
                    },
                ),
            )]),
        )
        .unwrap();
        t.register_operation(
            "Head",
            &["a"],
            &[],
            BTreeMap::from([
                (
                    "yes".to_string(),
                    classical_op(
                        &["a"],
                        &[],
                        Mat {
                            rows: 1,
                            cols: 2,
                            data: vec![1.0, 0.0],
                        },
                    ),
                ),
                (
                    "any".to_string(),
                    classical_op(
                        &["a"],
                        &[],
                        Mat {
                            rows: 1,
                            cols: 2,
                            data: vec![1.0, 1.0],
                        },
                    ),
                ),
            ]),
        )
        .unwrap();
        t.register_operation(
            "Flip",
            &["a"],
            &["a"],
            BTreeMap::from([(
                "go".to_string(),
                classical_op(
                    &["a"],
                    &["a"],
                    Mat::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]),
                ),
            )]),
        )
        .unwrap();
        t
    }

    /// Theory for the six-operation circuit: seven classical types, one
    /// operation per box with a deterministic-ish stochastic body.
    fn six_op_theory() -> Theory {
        let mut t = Theory::new();
        for name in ["a", "b", "c", "d", "e", "f", "g"] {
            t.register_type(name, BackendKind::Classical, 2, FiducialSpec::Default)
                .unwrap();
        }
        let z12 = |data: Vec<f64>| Mat {
            rows: 4,
            cols: 1,
            data,
        };
        t.register_operation(
            "A",
            &[],
            &["a", "b"],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(&[], &["a", "b"], z12(vec![0.4, 0.1, 0.3, 0.2])),
            )]),
        )
        .unwrap();
        t.register_operation(
            "B",
            &[],
            &["c", "d"],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(&[], &["c", "d"], z12(vec![0.25, 0.25, 0.25, 0.25])),
            )]),
        )
        .unwrap();
        t.register_operation(
            "C",
            &["b", "c"],
            &["e"],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(
                    &["b", "c"],
                    &["e"],
                    Mat::from_rows(&[vec![0.9, 0.5, 0.3, 0.1], vec![0.1, 0.5, 0.7, 0.9]]),
                ),
            )]),
        )
        .unwrap();
        t.register_operation(
            "D",
            &["a"],
            &["f"],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(
                    &["a"],
                    &["f"],
                    Mat::from_rows(&[vec![0.8, 0.3], vec![0.2, 0.7]]),
                ),
            )]),
        )
        .unwrap();
        t.register_operation(
            "E",
            &["e", "d"],
            &["g"],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(
                    &["e", "d"],
                    &["g"],
                    Mat::from_rows(&[vec![0.6, 0.4, 0.2, 0.8], vec![0.4, 0.6, 0.8, 0.2]]),
                ),
            )]),
        )
        .unwrap();
        t.register_operation(
            "F",
            &["f", "g"],
            &[],
            BTreeMap::from([(
                "x".to_string(),
                classical_op(
                    &["f", "g"],
                    &[],
                    Mat {
                        rows: 1,
                        cols: 4,
                        data: vec![1.0, 0.4, 0.7, 0.2],
                    },
                ),
            )]),
        )
        .unwrap();
        t
    }

    #[test]
    fn single_operation_compiles_to_its_standard_form() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Flip_{a1}^{a2}", &theory).unwrap();
        let compiled = compile_fragment(&f, &theory).unwrap();
        assert_eq!(compiled.duotensor.rank(), 2);
        assert!(compiled.provenance.steps.is_empty());
        assert_eq!(compiled.port_map.len(), 2);
        // classical default metrics are the identity, so standard form keeps
        // the Z entries: sorted labels are [Flip#1.in0, Flip#1.out0]
        assert!((compiled.duotensor.get(&[0, 0]) - 0.9).abs() < 1e-12);
        assert!((compiled.duotensor.get(&[1, 0]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn coin_circuit_probability_matches_oracle() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Coin^{a1} Head[yes]_{a1}", &theory).unwrap();
        let c = Circuit::try_from(f).unwrap();
        let p = circuit_probability(&c, &theory).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let oracle = oracle_probability(&c, &theory).unwrap();
        assert!((p - oracle).abs() < 1e-12);
    }

    #[test]
    fn six_op_circuit_three_paths_agree_and_padding_is_two() {
        let theory = six_op_theory();
        let f = dsl::parse_with_theory(
            "A^{a1 b2} B^{c3 d4} C_{b2 c3}^{e5} D_{a1}^{f6} E_{e5 d4}^{g7} F_{f6 g7}",
            &theory,
        )
        .unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        let contraction = circuit_probability(&circuit, &theory).unwrap();
        let oracle = oracle_probability(&circuit, &theory).unwrap();
        assert!((contraction - oracle).abs() < 1e-9);
        let fol = foliate(&circuit).unwrap();
        let eval = evolve_foliation(&circuit, &fol, &theory).unwrap();
        assert!((eval.probability - contraction).abs() < 1e-9);
        assert_eq!(eval.padding_count, 2);
    }

    #[test]
    fn trivial_circuit_needs_no_padding() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Coin^{a1} Head[yes]_{a1}", &theory).unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        let fol = foliate(&circuit).unwrap();
        let eval = evolve_foliation(&circuit, &fol, &theory).unwrap();
        assert!((eval.probability - 0.5).abs() < 1e-12);
        assert_eq!(eval.padding_count, 0);
    }

    #[test]
    fn incompatible_foliation_is_rejectedloudly() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Coin^{a1} Flip_{a1}^{a2} Head[yes]_{a2}", &theory).unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        // missing coverage of wire 1
        let incomplete = Foliation {
            hypersurfaces: vec![BTreeSet::from([0usize])],
        };
        assert!(matches!(
            evolve_foliation(&circuit, &incomplete, &theory),
            Err(Error::IncompatibleFoliation(_))
        ));
        // non-synchronous surface
        let askew = Foliation {
            hypersurfaces: vec![BTreeSet::from([0usize, 1])],
        };
        assert!(matches!(
            evolve_foliation(&circuit, &askew, &theory),
            Err(Error::IncompatibleFoliation(_))
        ));
    }

    #[test]
    fn ratio_of_a_fragment_with_itself_is_one() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Flip_{a1}^{a2}", &theory).unwrap();
        match ratio_check(&f, &f, &theory, DEFAULT_RATIO_TOL).unwrap() {
            RatioVerdict::WellConditioned(k) => assert!((k - 1.0).abs() < 1e-12),
            other => panic!("expected well conditioned, got {other:?}"),
        }
    }

    #[test]
    fn different_wiring_is_not_the_same_experiment() {
        let theory = coin_theory();
        let f = dsl::parse_with_theory("Coin^{a1} Head[yes]_{a1}", &theory).unwrap();
        let g = dsl::parse_with_theory("Coin^{a1} Flip_{a1}^{a2} Head[yes]_{a2}", &theory).unwrap();
        assert!(matches!(
            ratio_check(&f, &g, &theory, DEFAULT_RATIO_TOL),
            Err(Error::NotSameExperiment(_))
        ));
    }

    #[test]
    fn outcome_ratio_of_coin_circuit() {
        let theory = coin_theory();
        let yes = dsl::parse_with_theory("Coin^{a1} Head[yes]_{a1}", &theory).unwrap();
        let any = dsl::parse_with_theory("Coin^{a1} Head[any]_{a1}", &theory).unwrap();
        match ratio_check(&yes, &any, &theory, DEFAULT_RATIO_TOL).unwrap() {
            RatioVerdict::WellConditioned(k) => assert!((k - 0.5).abs() < 1e-12),
            other => panic!("expected well conditioned, got {other:?}"),
        }
    }

    #[test]
    fn chain_plan_contracts_cheapest_pair_first() {
        let mut theory = Theory::new();
        theory
            .register_type("s", BackendKind::Classical, 2, FiducialSpec::Default)
            .unwrap();
        theory
            .register_type("big", BackendKind::Classical, 5, FiducialSpec::Default)
            .unwrap();
        theory
            .register_operation(
                "P",
                &[],
                &["s"],
                BTreeMap::from([(
                    "x".to_string(),
                    classical_op(
                        &[],
                        &["s"],
                        Mat {
                            rows: 2,
                            cols: 1,
                            data: vec![0.5, 0.5],
                        },
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "Up",
                &["s"],
                &["big"],
                BTreeMap::from([(
                    "x".to_string(),
                    classical_op(
                        &["s"],
                        &["big"],
                        Mat {
                            rows: 5,
                            cols: 2,
                            data: vec![0.2; 10],
                        },
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "Sink",
                &["big"],
                &[],
                BTreeMap::from([(
                    "x".to_string(),
                    classical_op(
                        &["big"],
                        &[],
                        Mat {
                            rows: 1,
                            cols: 5,
                            data: vec![1.0; 5],
                        },
                    ),
                )]),
            )
            .unwrap();
        let f = dsl::parse_with_theory("P^{s1} Up_{s1}^{big2} Sink_{big2}", &theory).unwrap();
        let plan = plan_contraction(&f, &theory).unwrap();
        // contracting P with Up leaves a 5-entry intermediate, Up with Sink a
        // 2-entry one; greedy must take (Sink, Up) first
        assert_eq!(plan.steps[0].result_size, 2);
        assert!(plan.steps[0].left.starts_with("Sink") || plan.steps[0].right.starts_with("Sink"));
    }

    #[test]
    fn star_plan_folds_leaves_in_lexicographic_order() {
        let mut theory = Theory::new();
        theory
            .register_type("s", BackendKind::Classical, 2, FiducialSpec::Default)
            .unwrap();
        theory
            .register_operation(
                "Hub",
                &["s", "s", "s"],
                &[],
                BTreeMap::from([(
                    "x".to_string(),
                    classical_op(
                        &["s", "s", "s"],
                        &[],
                        Mat {
                            rows: 1,
                            cols: 8,
                            data: vec![0.1; 8],
                        },
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "Leaf",
                &[],
                &["s"],
                BTreeMap::from([(
                    "x".to_string(),
                    classical_op(
                        &[],
                        &["s"],
                        Mat {
                            rows: 2,
                            cols: 1,
                            data: vec![0.5, 0.5],
                        },
                    ),
                )]),
            )
            .unwrap();
        let f = dsl::parse_with_theory("Hub_{s1 s2 s3} Leaf^{s1} Leaf^{s2} Leaf^{s3}", &theory)
            .unwrap();
        let plan = plan_contraction(&f, &theory).unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.steps[0].left, "Hub#1");
        assert_eq!(plan.steps[0].right, "Leaf#1");
        assert_eq!(plan.steps[1].right, "Leaf#2");
        assert_eq!(plan.steps[2].right, "Leaf#3");
    }

    #[test]
    fn closing_an_identity_channel_has_probability_one() {
        // uniform standard preparation into an identity channel into the
        // all-ones standard effect
        let mut theory = Theory::new();
        theory
            .register_type("a", BackendKind::Classical, 2, FiducialSpec::Default)
            .unwrap();
        theory
            .register_operation(
                "Wire",
                &["a"],
                &["a"],
                BTreeMap::from([(
                    "go".to_string(),
                    classical_op(&["a"], &["a"], Mat::identity(2)),
                )]),
            )
            .unwrap();
        let f = dsl::parse_with_theory("Wire_{!a1}^{!a2}", &theory).unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        let p = circuit_probability(&circuit, &theory).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let o = oracle_probability(&circuit, &theory).unwrap();
        assert!((o - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_outcome_family_normalizes_to_one() {
        // normalized preparation, stochastic channel, all-outcomes effect
        let mut theory = Theory::new();
        theory
            .register_type("a", BackendKind::Classical, 3, FiducialSpec::Default)
            .unwrap();
        theory
            .register_operation(
                "P",
                &[],
                &["a"],
                BTreeMap::from([(
                    "all".to_string(),
                    classical_op(
                        &[],
                        &["a"],
                        Mat {
                            rows: 3,
                            cols: 1,
                            data: vec![0.2, 0.5, 0.3],
                        },
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "S",
                &["a"],
                &["a"],
                BTreeMap::from([(
                    "all".to_string(),
                    classical_op(
                        &["a"],
                        &["a"],
                        Mat::from_rows(&[
                            vec![0.1, 0.3, 0.5],
                            vec![0.6, 0.4, 0.25],
                            vec![0.3, 0.3, 0.25],
                        ]),
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "E",
                &["a"],
                &[],
                BTreeMap::from([(
                    "all".to_string(),
                    classical_op(
                        &["a"],
                        &[],
                        Mat {
                            rows: 1,
                            cols: 3,
                            data: vec![1.0; 3],
                        },
                    ),
                )]),
            )
            .unwrap();
        let f = dsl::parse_with_theory("P^{a1} S_{a1}^{a2} E_{a2}", &theory).unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        let p = circuit_probability(&circuit, &theory).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_fragment_compiles_to_unit_scalar() {
        let theory = coin_theory();
        let f = Fragment::new();
        let compiled = compile_fragment(&f, &theory).unwrap();
        assert_eq!(compiled.duotensor.as_scalar(), Some(1.0));
    }
}
