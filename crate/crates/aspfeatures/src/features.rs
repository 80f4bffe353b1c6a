//! Static structural features of a ground program.
//!
//! Columns follow the usual static feature listing. Values that depend on
//! a solver's preprocessing (equivalences, created bodies, constraints after
//! translation, free and assigned variables) are not computed and carry
//! `None`, written as `?`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::smodels::{GroundProgram, RuleKind, FALSE_ATOM};

pub const MISSING: &str = "?";

pub const FEATURE_NAMES: [&str; 38] = [
    "tight",
    "problem_variables",
    "free_problem_variables",
    "assigned_problem_variables",
    "constraints",
    "constraints_per_variable",
    "created_bodies",
    "program_atoms",
    "sccs",
    "nodes_positive_badg",
    "rules",
    "normal_rules",
    "frac_normal_rules",
    "cardinality_rules",
    "frac_cardinality_rules",
    "choice_rules",
    "frac_choice_rules",
    "weight_rules",
    "frac_weight_rules",
    "frac_negative_body_rules",
    "frac_positive_body_rules",
    "frac_unary_rules",
    "frac_binary_rules",
    "frac_ternary_rules",
    "frac_integrity_constraints",
    "equivalences",
    "atom_atom_equivalences",
    "frac_atom_atom_equivalences",
    "body_body_equivalences",
    "frac_body_body_equivalences",
    "other_equivalences",
    "frac_other_equivalences",
    "binary_constraints",
    "frac_binary_constraints",
    "ternary_constraints",
    "frac_ternary_constraints",
    "other_constraints",
    "frac_other_constraints",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StaticFeatureVector {
    pub values: [Option<f64>; 38],
}

impl StaticFeatureVector {
    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Option<f64>)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.values.iter().copied())
    }
}

/// Positive body-atom dependency graph over atom ids other than the false
/// atom: an edge runs from every positive body atom to every head.
struct Badg {
    nodes: Vec<u32>,
    adj: Vec<Vec<usize>>,
    self_loop: bool,
}

impl Badg {
    fn build(program: &GroundProgram) -> Badg {
        let mut ids = BTreeSet::new();
        for r in &program.rules {
            ids.extend(r.heads.iter().chain(&r.positive).copied().filter(|&a| a != FALSE_ATOM));
        }
        let nodes: Vec<u32> = ids.into_iter().collect();
        let index = |a: u32| nodes.binary_search(&a).expect("collected above");
        let mut adj = vec![Vec::new(); nodes.len()];
        let mut self_loop = false;
        for r in &program.rules {
            for &b in r.positive.iter().filter(|&&b| b != FALSE_ATOM) {
                for &h in r.heads.iter().filter(|&&h| h != FALSE_ATOM) {
                    self_loop |= b == h;
                    adj[index(b)].push(index(h));
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        Badg { nodes, adj, self_loop }
    }

    /// Sizes of the strongly connected components (iterative Tarjan).
    fn scc_sizes(&self) -> Vec<usize> {
        const UNSEEN: usize = usize::MAX;
        let n = self.nodes.len();
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut sizes = Vec::new();
        let mut next = 0;
        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            // (node, next edge to look at)
            let mut calls = vec![(root, 0usize)];
            index[root] = next;
            low[root] = next;
            next += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut e)) = calls.last_mut() {
                if let Some(&w) = self.adj[v].get(*e) {
                    *e += 1;
                    if index[w] == UNSEEN {
                        index[w] = next;
                        low[w] = next;
                        next += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        calls.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                calls.pop();
                if let Some(&(parent, _)) = calls.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut size = 0;
                    loop {
                        let w = stack.pop().expect("v is on the stack");
                        on_stack[w] = false;
                        size += 1;
                        if w == v {
                            break;
                        }
                    }
                    sizes.push(size);
                }
            }
        }
        sizes
    }
}

fn frac(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

pub fn compute_static_features(program: &GroundProgram) -> StaticFeatureVector {
    let rules = &program.rules;
    let n = rules.len();
    let count = |f: &dyn Fn(&crate::smodels::Rule) -> bool| rules.iter().filter(|r| f(r)).count();

    let mut in_rules = BTreeSet::new();
    for r in rules {
        in_rules.extend(r.heads.iter().chain(&r.negative).chain(&r.positive).copied());
    }
    let mut all_atoms = in_rules.clone();
    all_atoms.extend(program.symbols.iter().map(|(a, _)| *a));
    all_atoms.extend(program.compute_positive.iter().chain(&program.compute_negative).copied());
    in_rules.remove(&FALSE_ATOM);
    all_atoms.remove(&FALSE_ATOM);

    let graph = Badg::build(program);
    let sccs = graph.scc_sizes();
    let tight = !graph.self_loop && sccs.iter().all(|&s| s < 2);

    let normal = count(&|r| r.kind == RuleKind::Normal);
    let card = count(&|r| matches!(r.kind, RuleKind::Cardinality { .. }));
    let choice = count(&|r| r.kind == RuleKind::Choice);
    let weight = count(&|r| matches!(r.kind, RuleKind::Weight { .. }));

    let c = |v: usize| Some(v as f64);
    let f = |v: usize| Some(frac(v, n));
    let values = [
        Some(if tight { 1.0 } else { 0.0 }),
        c(in_rules.len()),
        None,
        None,
        None,
        None,
        None,
        c(all_atoms.len()),
        c(sccs.len()),
        c(graph.nodes.len()),
        c(n),
        c(normal),
        f(normal),
        c(card),
        f(card),
        c(choice),
        f(choice),
        c(weight),
        f(weight),
        f(count(&|r| !r.negative.is_empty())),
        f(count(&|r| !r.positive.is_empty())),
        f(count(&|r| r.body_len() == 1)),
        f(count(&|r| r.body_len() == 2)),
        f(count(&|r| r.body_len() == 3)),
        f(count(&|r| r.is_integrity_constraint())),
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
    ];
    StaticFeatureVector { values }
}

/// Header line of a features file holding these columns.
pub fn features_header() -> String {
    let mut out = String::from("instance");
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out
}

/// One features-file row, without trailing newline.
pub fn emit_features(instance: &str, vector: &StaticFeatureVector) -> String {
    let mut out = String::from(instance);
    for v in &vector.values {
        out.push(',');
        match v {
            Some(x) => {
                let _ = write!(out, "{x}");
            }
            None => out.push_str(MISSING),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smodels::parse_smodels;

    fn features(rules: &str) -> StaticFeatureVector {
        compute_static_features(&parse_smodels(&format!("{rules}0\n0\nB+\n0\nB-\n1\n0\n1\n")).unwrap())
    }

    #[test]
    fn type_fractions() {
        let v = features("1 2 0 0\n1 3 1 0 2\n3 1 4 0 0\n");
        assert_eq!(v.get("frac_normal_rules"), Some(Some(2.0 / 3.0)));
        assert_eq!(v.get("frac_choice_rules"), Some(Some(1.0 / 3.0)));
        assert_eq!(v.get("tight"), Some(Some(1.0)));
    }

    #[test]
    fn two_cycle_is_not_tight() {
        // a :- b.  b :- a.
        let v = features("1 2 1 0 3\n1 3 1 0 2\n");
        assert_eq!(v.get("sccs"), Some(Some(1.0)));
        assert_eq!(v.get("nodes_positive_badg"), Some(Some(2.0)));
        assert_eq!(v.get("tight"), Some(Some(0.0)));
    }

    #[test]
    fn acyclic_sccs_equal_nodes() {
        let v = features("1 2 1 0 3\n1 3 1 0 4\n1 5 2 1 2 4\n");
        assert_eq!(v.get("tight"), Some(Some(1.0)));
        assert_eq!(v.get("sccs"), v.get("nodes_positive_badg"));
        assert_eq!(v.get("sccs"), Some(Some(4.0)));
    }

    #[test]
    fn self_loop_is_not_tight() {
        let v = features("1 2 1 0 2\n");
        assert_eq!(v.get("tight"), Some(Some(0.0)));
        assert_eq!(v.get("sccs"), Some(Some(1.0)));
    }

    #[test]
    fn emit_markers() {
        let v = features("1 2 0 0\n");
        let row = emit_features("p", &v);
        let cells: Vec<&str> = row.split(',').collect();
        let header = features_header();
        let names: Vec<&str> = header.split(',').collect();
        assert_eq!(cells.len(), names.len());
        let at = |n: &str| cells[names.iter().position(|x| *x == n).unwrap()];
        assert_eq!(at("tight"), "1");
        assert_eq!(at("equivalences"), "?");
        assert_eq!(at("constraints_per_variable"), "?");
        assert_eq!(at("rules"), "1");
    }

    #[test]
    fn empty_program() {
        let v = features("");
        assert_eq!(v.get("rules"), Some(Some(0.0)));
        assert_eq!(v.get("frac_normal_rules"), Some(Some(0.0)));
        assert_eq!(v.get("tight"), Some(Some(1.0)));
    }

    #[test]
    fn long_chain_does_not_recurse() {
        let rules: String = (2..20_002).map(|a| format!("1 {} 1 0 {}\n", a + 1, a)).collect();
        let v = features(&format!("{rules}1 2 1 0 20002\n"));
        assert_eq!(v.get("sccs"), Some(Some(1.0)));
        assert_eq!(v.get("tight"), Some(Some(0.0)));
    }
}
