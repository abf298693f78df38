//! Operation instances, wires, fragments, circuits, and foliations.
//!
//! A fragment is a DAG of operation instances with typed ports. The three
//! wiring rules are enforced: at most one wire per port, matching types at
//! both ends, and no directed cycles. A circuit is a fragment with no open
//! ports left over.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theory::{closure_effect_id, closure_prep_id, Theory, CLOSURE_OUTCOME};

/// One use of an apparatus: setting, outcome set label, and port signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub apparatus_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub setting: String,
    pub outcome_label: String,
    pub input_types: Vec<String>,
    pub output_types: Vec<String>,
}

/// A port on an instance, identified by slot position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRef {
    pub instance: String,
    pub slot: usize,
}

impl PortRef {
    pub fn new(instance: &str, slot: usize) -> Self {
        PortRef {
            instance: instance.to_string(),
            slot,
        }
    }
}

/// A directed wire from an output port to an input port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub from: PortRef,
    pub to: PortRef,
}

/// An open port together with its direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PortDirection {
    Input,
    Output,
}

/// Operations wired together, possibly with open ports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Fragment {
    pub instances: BTreeMap<String, OperationSpec>,
    pub wires: Vec<Wire>,
}

/// One rule violation found by [`Fragment::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WiringViolation {
    /// More than one wire touches the same port.
    OneWire { port: String },
    /// Wire endpoints disagree on type.
    TypeMatching {
        wire: usize,
        from_type: String,
        to_type: String,
    },
    /// Tracing forward along wires returns to the same operation.
    NoClosedLoops { cycle: Vec<String> },
    /// A wire references a missing instance or an out-of-range slot.
    Dangling { wire: usize, port: String },
}

/// Report-style output of validation; empty means valid.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<WiringViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Fragment {
    pub fn new() -> Self {
        Fragment::default()
    }

    /// Add an instance under a fresh auto-numbered id `apparatus#n`.
    pub fn add_instance(&mut self, spec: OperationSpec) -> String {
        let mut n = 1;
        loop {
            let id = format!("{}#{n}", spec.apparatus_id);
            if !self.instances.contains_key(&id) {
                self.instances.insert(id.clone(), spec);
                return id;
            }
            n += 1;
        }
    }

    /// Add an instance under an explicit id.
    pub fn add_instance_with_id(&mut self, id: &str, spec: OperationSpec) -> Result<()> {
        if self.instances.contains_key(id) {
            return Err(Error::DuplicateInstance(id.to_string()));
        }
        self.instances.insert(id.to_string(), spec);
        Ok(())
    }

    /// Wire an output port into an input port, enforcing the wiring rules.
    pub fn add_wire(&mut self, from: PortRef, to: PortRef) -> Result<()> {
        let from_type = self.port_type(&from, PortDirection::Output)?.to_string();
        let to_type = self.port_type(&to, PortDirection::Input)?.to_string();
        if from_type != to_type {
            return Err(Error::TypeMismatch {
                context: format!(
                    "wire {}:{} ({from_type}) -> {}:{} ({to_type})",
                    from.instance, from.slot, to.instance, to.slot
                ),
            });
        }
        if self.wires.iter().any(|w| w.from == from) {
            return Err(Error::PortTaken {
                port: format!("{}:out{}", from.instance, from.slot),
            });
        }
        if self.wires.iter().any(|w| w.to == to) {
            return Err(Error::PortTaken {
                port: format!("{}:in{}", to.instance, to.slot),
            });
        }
        self.wires.push(Wire { from, to });
        if let Some(cycle) = self.find_cycle() {
            self.wires.pop();
            return Err(Error::CycleCreated(cycle));
        }
        Ok(())
    }

    fn port_type(&self, port: &PortRef, direction: PortDirection) -> Result<&str> {
        let spec = self
            .instances
            .get(&port.instance)
            .ok_or_else(|| Error::UnknownInstance(port.instance.clone()))?;
        let types = match direction {
            PortDirection::Input => &spec.input_types,
            PortDirection::Output => &spec.output_types,
        };
        types.get(port.slot).map(|s| s.as_str()).ok_or_else(|| {
            Error::UnknownInstance(format!("{}:{:?}{}", port.instance, direction, port.slot))
        })
    }

    /// Open input ports, in (instance, slot) order.
    pub fn open_inputs(&self) -> Vec<PortRef> {
        let wired: BTreeSet<&PortRef> = self.wires.iter().map(|w| &w.to).collect();
        let mut out = Vec::new();
        for (id, spec) in &self.instances {
            for slot in 0..spec.input_types.len() {
                let port = PortRef::new(id, slot);
                if !wired.contains(&port) {
                    out.push(port);
                }
            }
        }
        out
    }

    /// Open output ports, in (instance, slot) order.
    pub fn open_outputs(&self) -> Vec<PortRef> {
        let wired: BTreeSet<&PortRef> = self.wires.iter().map(|w| &w.from).collect();
        let mut out = Vec::new();
        for (id, spec) in &self.instances {
            for slot in 0..spec.output_types.len() {
                let port = PortRef::new(id, slot);
                if !wired.contains(&port) {
                    out.push(port);
                }
            }
        }
        out
    }

    /// Check the three wiring rules and structural sanity, reporting every
    /// violation rather than stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut seen_from: BTreeMap<&PortRef, usize> = BTreeMap::new();
        let mut seen_to: BTreeMap<&PortRef, usize> = BTreeMap::new();
        for (i, w) in self.wires.iter().enumerate() {
            *seen_from.entry(&w.from).or_insert(0) += 1;
            *seen_to.entry(&w.to).or_insert(0) += 1;
            let from_type = self.port_type(&w.from, PortDirection::Output);
            let to_type = self.port_type(&w.to, PortDirection::Input);
            match (from_type, to_type) {
                (Ok(f), Ok(t)) => {
                    if f != t {
                        violations.push(WiringViolation::TypeMatching {
                            wire: i,
                            from_type: f.to_string(),
                            to_type: t.to_string(),
                        });
                    }
                }
                (f, t) => {
                    if f.is_err() {
                        violations.push(WiringViolation::Dangling {
                            wire: i,
                            port: format!("{}:out{}", w.from.instance, w.from.slot),
                        });
                    }
                    if t.is_err() {
                        violations.push(WiringViolation::Dangling {
                            wire: i,
                            port: format!("{}:in{}", w.to.instance, w.to.slot),
                        });
                    }
                }
            }
        }
        for (port, n) in seen_from {
            if n > 1 {
                violations.push(WiringViolation::OneWire {
                    port: format!("{}:out{}", port.instance, port.slot),
                });
            }
        }
        for (port, n) in seen_to {
            if n > 1 {
                violations.push(WiringViolation::OneWire {
                    port: format!("{}:in{}", port.instance, port.slot),
                });
            }
        }
        if let Some(cycle) = self.find_cycle() {
            violations.push(WiringViolation::NoClosedLoops { cycle });
        }
        ValidationReport { violations }
    }

    /// Successor map over instances implied by the wires.
    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for id in self.instances.keys() {
            succ.entry(id).or_default();
        }
        for w in &self.wires {
            succ.entry(w.from.instance.as_str())
                .or_default()
                .insert(w.to.instance.as_str());
        }
        succ
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        let succ = self.successors();
        let mut state: BTreeMap<&str, u8> = BTreeMap::new(); // 0 unseen, 1 active, 2 done
        let mut stack: Vec<&str> = Vec::new();
        fn visit<'a>(
            node: &'a str,
            succ: &BTreeMap<&'a str, BTreeSet<&'a str>>,
            state: &mut BTreeMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            match state.get(node).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|n| *n == node).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        stack[start..].iter().map(|s| s.to_string()).collect();
                    cycle.push(node.to_string());
                    return Some(cycle);
                }
                2 => return None,
                _ => {}
            }
            state.insert(node, 1);
            stack.push(node);
            if let Some(next) = succ.get(node) {
                for n in next {
                    if let Some(c) = visit(n, succ, state, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            state.insert(node, 2);
            None
        }
        for node in self.instances.keys() {
            if let Some(c) = visit(node.as_str(), &succ, &mut state, &mut stack) {
                return Some(c);
            }
        }
        None
    }

    /// Kahn layers of the instance DAG (each layer sorted by id).
    pub fn topo_layers(&self) -> Result<Vec<Vec<String>>> {
        let mut indegree: BTreeMap<String, usize> =
            self.instances.keys().map(|k| (k.clone(), 0)).collect();
        for w in &self.wires {
            *indegree.entry(w.to.instance.clone()).or_insert(0) += 1;
        }
        let mut layers: Vec<Vec<String>> = Vec::new();
        let mut frontier: Vec<String> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| k.clone())
            .collect();
        let mut remaining = self.instances.len();
        while !frontier.is_empty() {
            frontier.sort_unstable();
            remaining -= frontier.len();
            let in_layer: BTreeSet<&String> = frontier.iter().collect();
            let mut next: Vec<String> = Vec::new();
            for w in &self.wires {
                if in_layer.contains(&w.from.instance) {
                    let d = indegree.get_mut(&w.to.instance).expect("known instance");
                    *d -= 1;
                    if *d == 0 && !next.contains(&w.to.instance) {
                        next.push(w.to.instance.clone());
                    }
                }
            }
            layers.push(frontier);
            frontier = next;
        }
        if remaining > 0 {
            return Err(Error::CycleError(self.find_cycle().unwrap_or_default()));
        }
        Ok(layers)
    }

    /// Merge two instance-disjoint fragments, then wire the given links
    /// (each link is output port -> input port across the two).
    pub fn compose(&self, other: &Fragment, links: &[(PortRef, PortRef)]) -> Result<Fragment> {
        let mut merged = self.clone();
        for (id, spec) in &other.instances {
            if merged.instances.contains_key(id) {
                return Err(Error::DuplicateInstance(id.clone()));
            }
            merged.instances.insert(id.clone(), spec.clone());
        }
        merged.wires.extend(other.wires.iter().cloned());
        for (from, to) in links {
            merged.add_wire(from.clone(), to.clone())?;
        }
        Ok(merged)
    }

    /// Close the listed open ports with the theory's standard devices.
    pub fn close_ports(
        &self,
        theory: &Theory,
        closures: &[(PortRef, PortDirection)],
    ) -> Result<Fragment> {
        let mut out = self.clone();
        let open_in: BTreeSet<PortRef> = self.open_inputs().into_iter().collect();
        let open_out: BTreeSet<PortRef> = self.open_outputs().into_iter().collect();
        for (port, direction) in closures {
            match direction {
                PortDirection::Input => {
                    if !open_in.contains(port) {
                        return Err(Error::PortNotOpen {
                            port: format!("{}:in{}", port.instance, port.slot),
                        });
                    }
                    let ty = out.port_type(port, PortDirection::Input)?.to_string();
                    let spec = theory.spec(&closure_prep_id(&ty), CLOSURE_OUTCOME)?;
                    let id = out.add_instance(spec);
                    out.add_wire(PortRef::new(&id, 0), port.clone())?;
                }
                PortDirection::Output => {
                    if !open_out.contains(port) {
                        return Err(Error::PortNotOpen {
                            port: format!("{}:out{}", port.instance, port.slot),
                        });
                    }
                    let ty = out.port_type(port, PortDirection::Output)?.to_string();
                    let spec = theory.spec(&closure_effect_id(&ty), CLOSURE_OUTCOME)?;
                    let id = out.add_instance(spec);
                    out.add_wire(port.clone(), PortRef::new(&id, 0))?;
                }
            }
        }
        Ok(out)
    }

    /// Close every open port, turning the fragment into a circuit.
    pub fn close_all_ports(&self, theory: &Theory) -> Result<Circuit> {
        let mut closures: Vec<(PortRef, PortDirection)> = Vec::new();
        for p in self.open_inputs() {
            closures.push((p, PortDirection::Input));
        }
        for p in self.open_outputs() {
            closures.push((p, PortDirection::Output));
        }
        Circuit::try_from(self.close_ports(theory, &closures)?)
    }

    /// Wire index lookup by endpoints.
    pub fn wire_index(&self, from: &PortRef, to: &PortRef) -> Option<usize> {
        self.wires
            .iter()
            .position(|w| &w.from == from && &w.to == to)
    }

    /// Index of the wire entering an input port, if wired.
    pub fn wire_to(&self, port: &PortRef) -> Option<usize> {
        self.wires.iter().position(|w| &w.to == port)
    }

    /// Index of the wire leaving an output port, if wired.
    pub fn wire_from(&self, port: &PortRef) -> Option<usize> {
        self.wires.iter().position(|w| &w.from == port)
    }
}

/// A fragment with no open ports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Fragment", into = "Fragment")]
pub struct Circuit(Fragment);

impl TryFrom<Fragment> for Circuit {
    type Error = Error;
    fn try_from(f: Fragment) -> Result<Circuit> {
        let report = f.validate();
        if !report.is_valid() {
            return Err(Error::InvalidCircuit(format!(
                "{} wiring violation(s)",
                report.violations.len()
            )));
        }
        let open_in = f.open_inputs();
        let open_out = f.open_outputs();
        if !open_in.is_empty() || !open_out.is_empty() {
            return Err(Error::InvalidCircuit(format!(
                "{} open input(s) and {} open output(s) left over",
                open_in.len(),
                open_out.len()
            )));
        }
        Ok(Circuit(f))
    }
}

impl From<Circuit> for Fragment {
    fn from(c: Circuit) -> Fragment {
        c.0
    }
}

impl Circuit {
    pub fn fragment(&self) -> &Fragment {
        &self.0
    }
}

/// An ordered cover of a circuit's wires by synchronous hypersurfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Foliation {
    /// Wire indices crossed by each successive hypersurface.
    pub hypersurfaces: Vec<BTreeSet<usize>>,
}

/// Build a complete foliation by topological layering: hypersurface `t_n` is
/// the set of wires crossing the cut after the first `n` Kahn layers.
pub fn foliate(circuit: &Circuit) -> Result<Foliation> {
    let f = circuit.fragment();
    let layers = f.topo_layers()?;
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut hypersurfaces = Vec::new();
    for layer in layers.iter().take(layers.len().saturating_sub(1)) {
        for id in layer {
            done.insert(id.as_str());
        }
        let cut: BTreeSet<usize> = f
            .wires
            .iter()
            .enumerate()
            .filter(|(_, w)| {
                done.contains(w.from.instance.as_str()) && !done.contains(w.to.instance.as_str())
            })
            .map(|(i, _)| i)
            .collect();
        hypersurfaces.push(cut);
    }
    Ok(Foliation { hypersurfaces })
}

impl Foliation {
    /// The operations advanced past between consecutive cuts, including the
    /// final step onto the empty cut. Fails when the hypersurfaces cannot be
    /// realised as successive frontiers of the circuit.
    pub fn layers(&self, circuit: &Circuit) -> Result<Vec<Vec<String>>> {
        let f = circuit.fragment();
        let mut cuts = self.hypersurfaces.clone();
        cuts.push(BTreeSet::new());
        let mut done: BTreeSet<String> = BTreeSet::new();
        let mut cur: BTreeSet<usize> = BTreeSet::new();
        let mut layers = Vec::new();
        for target in &cuts {
            let mut advancing: Vec<String> = Vec::new();
            for (id, spec) in &f.instances {
                if done.contains(id) {
                    continue;
                }
                let inputs_ok = (0..spec.input_types.len()).all(|s| {
                    f.wire_to(&PortRef::new(id, s))
                        .map(|w| cur.contains(&w))
                        .unwrap_or(false)
                });
                let outputs_ok = (0..spec.output_types.len()).all(|s| {
                    f.wire_from(&PortRef::new(id, s))
                        .map(|w| target.contains(&w))
                        .unwrap_or(false)
                });
                if inputs_ok && outputs_ok {
                    advancing.push(id.clone());
                }
            }
            if advancing.is_empty() && done.len() < f.instances.len() {
                return Err(Error::IncompatibleFoliation(
                    "no operation can advance between consecutive hypersurfaces".to_string(),
                ));
            }
            let mut consumed: BTreeSet<usize> = BTreeSet::new();
            let mut produced: BTreeSet<usize> = BTreeSet::new();
            for id in &advancing {
                let spec = &f.instances[id];
                for s in 0..spec.input_types.len() {
                    consumed.insert(f.wire_to(&PortRef::new(id, s)).expect("circuit is closed"));
                }
                for s in 0..spec.output_types.len() {
                    produced.insert(
                        f.wire_from(&PortRef::new(id, s))
                            .expect("circuit is closed"),
                    );
                }
            }
            let persisting: BTreeSet<usize> = cur.difference(&consumed).copied().collect();
            let next: BTreeSet<usize> = produced.union(&persisting).copied().collect();
            if &next != target {
                return Err(Error::IncompatibleFoliation(format!(
                    "advancing past {advancing:?} reaches cut {next:?}, foliation expects {target:?}"
                )));
            }
            done.extend(advancing.iter().cloned());
            layers.push(advancing);
            cur = target.clone();
        }
        if done.len() != f.instances.len() {
            return Err(Error::IncompatibleFoliation(
                "some operations are never advanced past".to_string(),
            ));
        }
        Ok(layers)
    }

    /// Every wire appears in at least one hypersurface.
    pub fn is_complete(&self, circuit: &Circuit) -> bool {
        let covered: BTreeSet<usize> = self.hypersurfaces.iter().flatten().copied().collect();
        (0..circuit.fragment().wires.len()).all(|i| covered.contains(&i))
    }

    /// No wire in a hypersurface is reachable from another in the same set by
    /// tracing forward through the circuit.
    pub fn is_synchronous(&self, circuit: &Circuit) -> bool {
        let f = circuit.fragment();
        let succ = {
            let mut succ: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for w in &f.wires {
                succ.entry(w.from.instance.as_str())
                    .or_default()
                    .insert(w.to.instance.as_str());
            }
            succ
        };
        // transitive reachability between instances
        let reach = |from: &str, to: &str| -> bool {
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([from]);
            while let Some(n) = queue.pop_front() {
                if n == to {
                    return true;
                }
                if let Some(next) = succ.get(n) {
                    for m in next {
                        if seen.insert(*m) {
                            queue.push_back(m);
                        }
                    }
                }
            }
            false
        };
        for surface in &self.hypersurfaces {
            let wires: Vec<&Wire> = surface.iter().map(|&i| &f.wires[i]).collect();
            for a in &wires {
                for b in &wires {
                    if a.from == b.from && a.to == b.to {
                        continue;
                    }
                    // wire b is reachable from wire a if b's source is the
                    // same as or downstream of a's target
                    if a.to.instance == b.from.instance || reach(&a.to.instance, &b.from.instance) {
                        return false;
                    }
                }
            }
        }
        true
    }
}
