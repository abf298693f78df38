//! Textual circuit notation.
//!
//! Terms are apparatus names with subscript index groups for inputs and
//! superscript groups for outputs, wired by repeated labels:
//!
//! ```
//! let circuit = duotensor::dsl::parse("A^{a1 c2 a3} B_{a1 a4}^{b6} C_{c2 a3}^{a4 d5} D_{b6 d5}")
//!     .unwrap();
//! assert!(circuit.validate().is_valid());
//! assert_eq!(circuit.wires.len(), 6);
//! ```
//!
//! A label is one or more letters (the wire type) followed by digits (an
//! arbitrary disambiguator with no physical meaning). Each label may appear
//! once as a superscript (the producing end) and once as a subscript (the
//! consuming end); labels used once are open ports. `A[i]` selects an outcome
//! label. `!a1` closes the port with the theory's standard device, standing
//! in for the underline/overline of handwritten notation. `#` starts a
//! comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::circuit::{Circuit, Foliation, Fragment, OperationSpec, PortRef, Wire};
use crate::error::{Error, Result};
use crate::theory::{closure_effect_id, closure_prep_id, Theory, CLOSURE_OUTCOME};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Caret,
    Underscore,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Bang,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    chars.next();
                    bump(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            '^' | '_' | '{' | '}' | '[' | ']' | '!' => {
                chars.next();
                bump(c, &mut line, &mut col);
                let token = match c {
                    '^' => Token::Caret,
                    '_' => Token::Underscore,
                    '{' => Token::LBrace,
                    '}' => Token::RBrace,
                    '[' => Token::LBracket,
                    ']' => Token::RBracket,
                    _ => Token::Bang,
                };
                out.push(Spanned {
                    token,
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_alphanumeric() => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() {
                        word.push(c);
                        chars.next();
                        bump(c, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Spanned {
                    token: Token::Ident(word),
                    line: tline,
                    col: tcol,
                });
            }
            other => {
                return Err(Error::LexError {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(out)
}

/// Split a label into its type letters and disambiguating digits.
fn split_label(label: &str, line: usize, col: usize) -> Result<(String, String)> {
    let letters: String = label
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    let digits: String = label.chars().skip(letters.len()).collect();
    if letters.is_empty() || digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::LexError {
            line,
            col,
            message: format!("`{label}` is not a letters-then-digits index label"),
        });
    }
    Ok((letters, digits))
}

#[derive(Debug, Clone)]
struct IndexItem {
    label: String,
    type_name: String,
    closed: bool,
}

#[derive(Debug, Clone)]
struct Term {
    apparatus: String,
    outcome: String,
    inputs: Vec<IndexItem>,
    outputs: Vec<IndexItem>,
}

/// A parsed source file: the term list plus the fragment it denotes.
#[derive(Debug, Clone)]
pub struct DslDocument {
    pub source: String,
    pub fragment: Fragment,
}

fn parse_terms(tokens: &[Spanned]) -> Result<Vec<Term>> {
    let mut terms = Vec::new();
    let mut pos = 0usize;
    let err = |t: &Spanned, message: String| Error::LexError {
        line: t.line,
        col: t.col,
        message,
    };
    while pos < tokens.len() {
        let head = &tokens[pos];
        let Token::Ident(name) = &head.token else {
            return Err(err(head, "expected an operation name".to_string()));
        };
        if name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return Err(err(
                head,
                format!("operation name `{name}` starts with a digit"),
            ));
        }
        pos += 1;
        let mut term = Term {
            apparatus: name.clone(),
            outcome: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        if pos < tokens.len() && tokens[pos].token == Token::LBracket {
            pos += 1;
            let Some(t) = tokens.get(pos) else {
                return Err(err(&tokens[pos - 1], "unclosed `[`".to_string()));
            };
            let Token::Ident(outcome) = &t.token else {
                return Err(err(t, "expected an outcome label".to_string()));
            };
            term.outcome = outcome.clone();
            pos += 1;
            match tokens.get(pos) {
                Some(t) if t.token == Token::RBracket => pos += 1,
                other => {
                    let at = other.unwrap_or(&tokens[pos - 1]);
                    return Err(err(at, "expected `]`".to_string()));
                }
            }
        }
        while pos < tokens.len()
            && (tokens[pos].token == Token::Caret || tokens[pos].token == Token::Underscore)
        {
            let is_output = tokens[pos].token == Token::Caret;
            pos += 1;
            let mut items = Vec::new();
            let braced = matches!(tokens.get(pos), Some(t) if t.token == Token::LBrace);
            if braced {
                pos += 1;
            }
            loop {
                let closed = matches!(tokens.get(pos), Some(t) if t.token == Token::Bang);
                if closed {
                    pos += 1;
                }
                match tokens.get(pos) {
                    Some(
                        t @ Spanned {
                            token: Token::Ident(label),
                            ..
                        },
                    ) => {
                        let (type_name, _) = split_label(label, t.line, t.col)?;
                        items.push(IndexItem {
                            label: label.clone(),
                            type_name,
                            closed,
                        });
                        pos += 1;
                    }
                    other => {
                        let at = other.or_else(|| tokens.last()).unwrap_or(head);
                        return Err(err(at, "expected an index label".to_string()));
                    }
                }
                if !braced {
                    break;
                }
                match tokens.get(pos) {
                    Some(t) if t.token == Token::RBrace => {
                        pos += 1;
                        break;
                    }
                    Some(t) if t.token == Token::Bang || matches!(&t.token, Token::Ident(_)) => {}
                    other => {
                        let at = other.or_else(|| tokens.last()).unwrap_or(head);
                        return Err(err(at, "expected an index label or `}`".to_string()));
                    }
                }
            }
            if is_output {
                term.outputs.extend(items);
            } else {
                term.inputs.extend(items);
            }
        }
        terms.push(term);
    }
    Ok(terms)
}

/// Parse source text into a fragment.
///
/// Port signatures are derived from the index letters; two terms naming the
/// same apparatus must agree on the signature. Outcome labels are taken
/// verbatim (empty when omitted); see [`parse_with_theory`] for resolution
/// against a theory.
pub fn parse(src: &str) -> Result<Fragment> {
    parse_impl(src, None)
}

/// Parse and bind against a theory: apparatus ids must be registered, port
/// types must match the declaration, and an omitted outcome resolves to the
/// apparatus' single outcome when it is unique.
pub fn parse_with_theory(src: &str, theory: &Theory) -> Result<Fragment> {
    parse_impl(src, Some(theory))
}

fn parse_impl(src: &str, theory: Option<&Theory>) -> Result<Fragment> {
    let tokens = lex(src)?;
    let terms = parse_terms(&tokens)?;

    // intra-document signature consistency
    let mut signatures: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for term in &terms {
        let sig = (
            term.inputs
                .iter()
                .map(|i| i.type_name.as_str())
                .collect::<Vec<_>>(),
            term.outputs
                .iter()
                .map(|i| i.type_name.as_str())
                .collect::<Vec<_>>(),
        );
        match signatures.get(term.apparatus.as_str()) {
            None => {
                signatures.insert(&term.apparatus, sig);
            }
            Some(prev) if *prev == sig => {}
            Some(prev) => {
                return Err(Error::TypeClash {
                    apparatus: term.apparatus.clone(),
                    context: format!(
                        "used with signature {:?}->{:?} and {:?}->{:?}",
                        prev.0, prev.1, sig.0, sig.1
                    ),
                });
            }
        }
    }

    // label usage bookkeeping
    #[derive(Default)]
    struct Usage {
        producers: usize,
        consumers: usize,
        closed: usize,
        type_name: String,
    }
    let mut usage: BTreeMap<&str, Usage> = BTreeMap::new();
    for term in &terms {
        for (items, is_output) in [(&term.inputs, false), (&term.outputs, true)] {
            for item in items {
                let u = usage.entry(&item.label).or_default();
                if u.type_name.is_empty() {
                    u.type_name = item.type_name.clone();
                }
                if item.closed {
                    u.closed += 1;
                } else if is_output {
                    u.producers += 1;
                } else {
                    u.consumers += 1;
                }
            }
        }
    }
    for (label, u) in &usage {
        if u.producers > 1 {
            return Err(Error::DuplicateProducer {
                label: label.to_string(),
            });
        }
        if u.producers + u.consumers + u.closed > 2 {
            return Err(Error::TripleUse {
                label: label.to_string(),
            });
        }
        if u.closed > 0 && u.producers + u.consumers + u.closed > 1 {
            return Err(Error::Malformed {
                what: "index usage",
                context: format!("closed label `{label}` is also used elsewhere"),
            });
        }
        if u.consumers > 1 {
            return Err(Error::Malformed {
                what: "index usage",
                context: format!("label `{label}` is consumed (subscripted) more than once"),
            });
        }
    }

    let mut fragment = Fragment::new();
    let mut producer_port: BTreeMap<&str, PortRef> = BTreeMap::new();
    let mut consumer_port: BTreeMap<&str, PortRef> = BTreeMap::new();
    let mut closures: Vec<(PortRef, bool, String)> = Vec::new(); // port, is_input, type
    for term in &terms {
        let input_types: Vec<String> = term.inputs.iter().map(|i| i.type_name.clone()).collect();
        let output_types: Vec<String> = term.outputs.iter().map(|i| i.type_name.clone()).collect();
        let mut outcome = term.outcome.clone();
        if let Some(theory) = theory {
            let def = theory.operation_def(&term.apparatus)?;
            if def.inputs != input_types || def.outputs != output_types {
                return Err(Error::TypeClash {
                    apparatus: term.apparatus.clone(),
                    context: format!(
                        "term signature {:?}->{:?} does not match declaration {:?}->{:?}",
                        input_types, output_types, def.inputs, def.outputs
                    ),
                });
            }
            if outcome.is_empty() {
                if def.outcomes.len() == 1 {
                    outcome = def.outcomes.keys().next().unwrap().clone();
                } else {
                    return Err(Error::MissingOperation {
                        apparatus: term.apparatus.clone(),
                        outcome: "(unspecified, apparatus has several outcomes)".to_string(),
                    });
                }
            } else if !def.outcomes.contains_key(&outcome) {
                return Err(Error::MissingOperation {
                    apparatus: term.apparatus.clone(),
                    outcome,
                });
            }
        }
        let id = fragment.add_instance(OperationSpec {
            apparatus_id: term.apparatus.clone(),
            setting: String::new(),
            outcome_label: outcome,
            input_types,
            output_types,
        });
        for (slot, item) in term.inputs.iter().enumerate() {
            let port = PortRef::new(&id, slot);
            if item.closed {
                closures.push((port, true, item.type_name.clone()));
            } else {
                consumer_port.insert(&item.label, port);
            }
        }
        for (slot, item) in term.outputs.iter().enumerate() {
            let port = PortRef::new(&id, slot);
            if item.closed {
                closures.push((port, false, item.type_name.clone()));
            } else {
                producer_port.insert(&item.label, port);
            }
        }
    }
    for (label, from) in &producer_port {
        if let Some(to) = consumer_port.get(label) {
            fragment.wires.push(Wire {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
    for (port, is_input, type_name) in closures {
        let (apparatus, wire) = if is_input {
            (closure_prep_id(&type_name), false)
        } else {
            (closure_effect_id(&type_name), true)
        };
        let spec = OperationSpec {
            apparatus_id: apparatus,
            setting: String::new(),
            outcome_label: CLOSURE_OUTCOME.to_string(),
            input_types: if wire {
                vec![type_name.clone()]
            } else {
                vec![]
            },
            output_types: if wire {
                vec![]
            } else {
                vec![type_name.clone()]
            },
        };
        let id = fragment.add_instance(spec);
        if wire {
            fragment.wires.push(Wire {
                from: port,
                to: PortRef::new(&id, 0),
            });
        } else {
            fragment.wires.push(Wire {
                from: PortRef::new(&id, 0),
                to: port,
            });
        }
    }
    let report = fragment.validate();
    for v in &report.violations {
        if let crate::circuit::WiringViolation::NoClosedLoops { cycle } = v {
            return Err(Error::CycleError(cycle.clone()));
        }
    }
    if !report.is_valid() {
        return Err(Error::ValidationFailed(format!(
            "{} wiring violation(s)",
            report.violations.len()
        )));
    }
    Ok(fragment)
}

fn numeric_suffix(id: &str) -> (String, u64) {
    match id.rsplit_once('#') {
        Some((stem, n)) => match n.parse::<u64>() {
            Ok(v) => (stem.to_string(), v),
            Err(_) => (id.to_string(), 0),
        },
        None => (id.to_string(), 0),
    }
}

/// Canonical instance order: topological layer, then apparatus, outcome, and
/// instance number. Closure instances are skipped (they render as markers).
fn canonical_order(fragment: &Fragment) -> Result<Vec<String>> {
    let layers = fragment.topo_layers()?;
    let mut order = Vec::new();
    for layer in layers {
        let mut ids: Vec<String> = layer
            .into_iter()
            .filter(|id| !fragment.instances[id].apparatus_id.starts_with('!'))
            .collect();
        ids.sort_by_key(|id| {
            let spec = &fragment.instances[id];
            (
                spec.apparatus_id.clone(),
                spec.outcome_label.clone(),
                numeric_suffix(id),
            )
        });
        order.extend(ids);
    }
    Ok(order)
}

/// Render a fragment as canonical source text.
///
/// Terms are emitted in topological-then-lexicographic order with freshly
/// numbered labels, so `parse(format(f))` reproduces the wiring graph up to
/// instance renaming and `format` is a fixed point of the round trip.
pub fn format(fragment: &Fragment) -> Result<String> {
    let report = fragment.validate();
    if !report.is_valid() {
        return Err(Error::ValidationFailed(format!(
            "{} wiring violation(s)",
            report.violations.len()
        )));
    }
    let order = canonical_order(fragment)?;
    let mut counters: BTreeMap<String, u64> = BTreeMap::new();
    let fresh = |type_name: &str, counters: &mut BTreeMap<String, u64>| -> String {
        let c = counters.entry(type_name.to_string()).or_insert(0);
        *c += 1;
        format!("{type_name}{c}")
    };
    // labels keyed by the wire's producing port
    let mut by_out_port: BTreeMap<PortRef, String> = BTreeMap::new();
    let is_closure = |id: &str| fragment.instances[id].apparatus_id.starts_with('!');
    let mut rendered = Vec::new();
    for id in &order {
        let spec = &fragment.instances[id];
        let mut term = spec.apparatus_id.clone();
        if !spec.outcome_label.is_empty() {
            let _ = write!(term, "[{}]", spec.outcome_label);
        }
        let mut inputs = Vec::new();
        for (slot, t) in spec.input_types.iter().enumerate() {
            let port = PortRef::new(id, slot);
            match fragment.wire_to(&port) {
                Some(w) => {
                    let wire = &fragment.wires[w];
                    if is_closure(&wire.from.instance) {
                        inputs.push(format!("!{}", fresh(t, &mut counters)));
                    } else {
                        let label = by_out_port
                            .get(&wire.from)
                            .cloned()
                            .expect("producer rendered before consumer");
                        inputs.push(label);
                    }
                }
                None => {
                    inputs.push(fresh(t, &mut counters));
                }
            }
        }
        let mut outputs = Vec::new();
        for (slot, t) in spec.output_types.iter().enumerate() {
            let port = PortRef::new(id, slot);
            match fragment.wire_from(&port) {
                Some(w) => {
                    let wire = &fragment.wires[w];
                    if is_closure(&wire.to.instance) {
                        outputs.push(format!("!{}", fresh(t, &mut counters)));
                    } else {
                        let label = fresh(t, &mut counters);
                        by_out_port.insert(port, label.clone());
                        outputs.push(label);
                    }
                }
                None => {
                    let label = fresh(t, &mut counters);
                    by_out_port.insert(port, label.clone());
                    outputs.push(label);
                }
            }
        }
        if !inputs.is_empty() {
            let _ = write!(term, "_{{{}}}", inputs.join(" "));
        }
        if !outputs.is_empty() {
            let _ = write!(term, "^{{{}}}", outputs.join(" "));
        }
        rendered.push(term);
    }
    Ok(rendered.join(" "))
}

/// DOT digraph of the wiring: one box per instance, typed edges, open ports
/// as point pseudo-nodes with dashed edges.
pub fn export_dot(fragment: &Fragment) -> String {
    export_dot_inner(fragment, None)
}

/// DOT digraph grouping operations into ranks that match the foliation's
/// hypersurface layers.
pub fn export_dot_foliated(circuit: &Circuit, foliation: &Foliation) -> Result<String> {
    let layers = foliation.layers(circuit)?;
    Ok(export_dot_inner(circuit.fragment(), Some(&layers)))
}

fn export_dot_inner(fragment: &Fragment, layers: Option<&[Vec<String>]>) -> String {
    let mut out = String::new();
    out.push_str("digraph fragment {\n");
    out.push_str("  rankdir=BT;\n  node [shape=box];\n");
    for (id, spec) in &fragment.instances {
        let label = if spec.outcome_label.is_empty() {
            spec.apparatus_id.clone()
        } else {
            format!("{}[{}]", spec.apparatus_id, spec.outcome_label)
        };
        let _ = writeln!(out, "  \"{id}\" [label=\"{label}\"];");
    }
    if let Some(layers) = layers {
        for layer in layers {
            if layer.is_empty() {
                continue;
            }
            let members = layer
                .iter()
                .map(|id| format!("\"{id}\""))
                .collect::<Vec<_>>()
                .join("; ");
            let _ = writeln!(out, "  {{ rank=same; {members}; }}");
        }
    }
    for w in &fragment.wires {
        let t = &fragment.instances[&w.from.instance].output_types[w.from.slot];
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{t}\"];",
            w.from.instance, w.to.instance
        );
    }
    for (n, p) in fragment.open_inputs().iter().enumerate() {
        let t = &fragment.instances[&p.instance].input_types[p.slot];
        let _ = writeln!(out, "  \"%in{n}\" [shape=point];");
        let _ = writeln!(
            out,
            "  \"%in{n}\" -> \"{}\" [style=dashed, label=\"{t}\"];",
            p.instance
        );
    }
    for (n, p) in fragment.open_outputs().iter().enumerate() {
        let t = &fragment.instances[&p.instance].output_types[p.slot];
        let _ = writeln!(out, "  \"%out{n}\" [shape=point];");
        let _ = writeln!(
            out,
            "  \"{}\" -> \"%out{n}\" [style=dashed, label=\"{t}\"];",
            p.instance
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ClassicalOperation, OperationBody};
    use crate::circuit::Circuit;
    use crate::linalg::Mat;
    use crate::theory::BackendKind;

    #[test]
    fn four_op_circuit_parses_with_six_wires() {
        let f = parse("A^{a1 c2 a3} B_{a1 a4}^{b6} C_{c2 a3}^{a4 d5} D_{b6 d5}").unwrap();
        assert_eq!(f.instances.len(), 4);
        assert_eq!(f.wires.len(), 6);
        assert!(f.open_inputs().is_empty() && f.open_outputs().is_empty());
        let spec = &f.instances["C#1"];
        assert_eq!(spec.input_types, vec!["c", "a"]);
        assert_eq!(spec.output_types, vec!["a", "d"]);
    }

    #[test]
    fn simple_circuit_parses() {
        let f = parse("A^{a1} B_{a1}").unwrap();
        assert_eq!(f.instances.len(), 2);
        assert_eq!(f.wires.len(), 1);
        assert!(Circuit::try_from(f).is_ok());
    }

    #[test]
    fn two_cycle_is_a_cycle_error() {
        let err = parse("A_{a1}^{a2} B_{a2}^{a1}").unwrap_err();
        assert!(matches!(err, Error::CycleError(_)));
    }

    #[test]
    fn duplicate_producer_and_triple_use() {
        assert!(matches!(
            parse("A^{a1} B^{a1} C_{a1}").unwrap_err(),
            Error::DuplicateProducer { .. }
        ));
        assert!(matches!(
            parse("A^{a1} B_{a1} C_{a1 a1}").unwrap_err(),
            Error::TripleUse { .. }
        ));
    }

    #[test]
    fn signature_conflict_is_a_type_clash() {
        let err = parse("A^{a1} B_{a1} A^{b2} C_{b2}").unwrap_err();
        assert!(matches!(err, Error::TypeClash { .. }));
    }

    #[test]
    fn lex_errors_carry_positions() {
        let err = parse("A^{a1}\nB_{a1} $").unwrap_err();
        match err {
            Error::LexError { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 8);
            }
            other => panic!("expected lex error, got {other:?}"),
        }
        // malformed label
        assert!(matches!(
            parse("A^{1a}").unwrap_err(),
            Error::LexError { .. }
        ));
    }

    #[test]
    fn comments_and_repeated_apparatus_use() {
        let f = parse("# the same apparatus twice\nA^{a1} E_{a1} A^{a2} E_{a2}").unwrap();
        assert_eq!(f.instances.len(), 4);
        assert!(f.instances.contains_key("A#1"));
        assert!(f.instances.contains_key("A#2"));
    }

    #[test]
    fn closure_markers_create_standard_devices() {
        let f = parse("W_{!a1}^{!a2}").unwrap();
        assert_eq!(f.instances.len(), 3);
        assert!(f
            .instances
            .values()
            .any(|s| s.apparatus_id == closure_prep_id("a")));
        assert!(f
            .instances
            .values()
            .any(|s| s.apparatus_id == closure_effect_id("a")));
        assert!(Circuit::try_from(f).is_ok());
    }

    #[test]
    fn bare_groups_without_braces() {
        let f = parse("A^a1 B_a1").unwrap();
        assert_eq!(f.wires.len(), 1);
        let g = parse("W_!a1^!a2").unwrap();
        assert_eq!(g.instances.len(), 3);
    }

    #[test]
    fn outcome_suffixes_are_kept() {
        let f = parse("A[up]^{a1} B[down]_{a1}").unwrap();
        let outcomes: Vec<&str> = f
            .instances
            .values()
            .map(|s| s.outcome_label.as_str())
            .collect();
        assert!(outcomes.contains(&"up") && outcomes.contains(&"down"));
    }

    #[test]
    fn theory_binding_resolves_single_outcomes_and_rejects_unknown() {
        let mut theory = Theory::new();
        theory
            .register_type(
                "a",
                BackendKind::Classical,
                2,
                crate::theory::FiducialSpec::Default,
            )
            .unwrap();
        theory
            .register_operation(
                "P",
                &[],
                &["a"],
                std::collections::BTreeMap::from([(
                    "only".to_string(),
                    OperationBody::Classical(
                        ClassicalOperation::new(
                            &[],
                            &["a".to_string()],
                            Mat {
                                rows: 2,
                                cols: 1,
                                data: vec![0.5, 0.5],
                            },
                        )
                        .unwrap(),
                    ),
                )]),
            )
            .unwrap();
        theory
            .register_operation(
                "E",
                &["a"],
                &[],
                std::collections::BTreeMap::from([(
                    "e".to_string(),
                    OperationBody::Classical(
                        ClassicalOperation::new(
                            &["a".to_string()],
                            &[],
                            Mat {
                                rows: 1,
                                cols: 2,
                                data: vec![1.0, 0.0],
                            },
                        )
                        .unwrap(),
                    ),
                )]),
            )
            .unwrap();
        let f = parse_with_theory("P^{a1} E_{a1}", &theory).unwrap();
        assert_eq!(f.instances["P#1"].outcome_label, "only");
        assert!(matches!(
            parse_with_theory("P[nope]^{a1} E_{a1}", &theory),
            Err(Error::MissingOperation { .. })
        ));
        assert!(matches!(
            parse_with_theory("P_{a1}^{a2} E_{a2} Q^{a1}", &theory),
            Err(Error::TypeClash { .. } | Error::MissingOperation { .. })
        ));
    }

    #[test]
    fn format_round_trips_the_four_op_circuit() {
        let f = parse("A^{a1 c2 a3} B_{a1 a4}^{b6} C_{c2 a3}^{a4 d5} D_{b6 d5}").unwrap();
        let text = format(&f).unwrap();
        let g = parse(&text).unwrap();
        assert_eq!(format(&g).unwrap(), text);
        // wire multiset over apparatus-level endpoints is preserved
        let key = |fr: &Fragment| {
            let mut k: Vec<(String, usize, String, usize)> = fr
                .wires
                .iter()
                .map(|w| {
                    (
                        fr.instances[&w.from.instance].apparatus_id.clone(),
                        w.from.slot,
                        fr.instances[&w.to.instance].apparatus_id.clone(),
                        w.to.slot,
                    )
                })
                .collect();
            k.sort();
            k
        };
        assert_eq!(key(&f), key(&g));
    }

    #[test]
    fn format_renders_open_ports_once_and_closures_with_bangs() {
        let f = parse("W_{a1 !a2}^{b3}").unwrap();
        let text = format(&f).unwrap();
        assert!(text.contains('!'));
        let g = parse(&text).unwrap();
        assert_eq!(format(&g).unwrap(), text);
        assert_eq!(g.open_inputs().len(), 1);
        assert_eq!(g.open_outputs().len(), 1);
        assert_eq!(g.instances.len(), 2); // W plus the closure prep
    }

    #[test]
    fn dot_export_of_the_simple_circuit() {
        let f = parse("A^{a1} B_{a1}").unwrap();
        let dot = export_dot(&f);
        assert!(dot.contains("\"A#1\" [label=\"A\"]"));
        assert!(dot.contains("\"A#1\" -> \"B#1\" [label=\"a\"]"));
        assert_eq!(dot.matches(" -> ").count(), 1);
    }

    #[test]
    fn dot_export_marks_open_ports() {
        let f = parse("C_{a1 b2}").unwrap();
        let dot = export_dot(&f);
        assert_eq!(dot.matches("shape=point").count(), 2);
        assert_eq!(dot.matches("style=dashed").count(), 2);
    }

    #[test]
    fn dot_export_with_foliation_ranks() {
        let f = parse("A^{a1 b2} B^{c3 d4} C_{b2 c3}^{e5} D_{a1}^{f6} E_{e5 d4}^{g7} F_{f6 g7}")
            .unwrap();
        let circuit = Circuit::try_from(f).unwrap();
        let fol = crate::circuit::foliate(&circuit).unwrap();
        let dot = export_dot_foliated(&circuit, &fol).unwrap();
        assert_eq!(dot.matches("rank=same").count(), 4);
    }
}
