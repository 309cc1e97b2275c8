//! CNF/DNF rule sets read directly off a network.
//!
//! Each live second-layer neuron becomes one [`Rule`]: its live first-layer
//! inputs are the clauses and their connected (possibly negated) input bits
//! are the literals. [`predict_with_rules`] reproduces the network logits
//! bit for bit because both sides accumulate `bias`, dead-neuron constants and
//! rule contributions in the same order.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::binarize::BinarizerModel;
use crate::data::GroundTruthRule;
use crate::network::{argmax, Network, Op};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Literal {
    pub bit: usize,
    pub negated: bool,
}

impl Literal {
    #[inline]
    pub fn value(self, bits: &[i8]) -> i8 {
        if self.negated {
            -bits[self.bit]
        } else {
            bits[self.bit]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Clause {
    pub op: Op,
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn evaluate(&self, bits: &[i8]) -> i8 {
        self.op.apply(self.literals.iter().map(|l| l.value(bits)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum RuleForm {
    /// AND of OR-clauses.
    Cnf,
    /// OR of AND-clauses.
    Dnf,
}

impl RuleForm {
    pub fn outer(self) -> Op {
        match self {
            RuleForm::Cnf => Op::And,
            RuleForm::Dnf => Op::Or,
        }
    }

    pub fn inner(self) -> Op {
        self.outer().dual()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleForm::Cnf => "CNF",
            RuleForm::Dnf => "DNF",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Rule {
    /// Second-layer neuron index.
    pub id: usize,
    pub form: RuleForm,
    pub clauses: Vec<Clause>,
    /// Contribution to each class logit when the rule is true (negated when false).
    pub scores: Vec<f64>,
}

impl Rule {
    /// `+1` when the rule holds, `-1` otherwise.
    pub fn evaluate(&self, bits: &[i8]) -> i8 {
        self.form.outer().apply(self.clauses.iter().map(|c| c.evaluate(bits)))
    }

    /// Total literal count across clauses.
    pub fn length(&self) -> usize {
        self.clauses.iter().map(|c| c.literals.len()).sum()
    }

    /// Checks that every clause carries the operator its form requires.
    pub fn is_well_formed(&self) -> bool {
        !self.clauses.is_empty()
            && self.clauses.iter().all(|c| !c.literals.is_empty() && c.op == self.form.inner())
    }

    pub fn max_abs_score(&self) -> f64 {
        self.scores.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Class favoured when the rule fires.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.scores)
    }

    /// Pretty expression using a literal renderer.
    pub fn render_with(&self, mut literal: impl FnMut(Literal) -> String) -> String {
        let outer = self.form.outer().symbol();
        let multi = self.clauses.len() > 1;
        let mut out = String::new();
        for (ci, clause) in self.clauses.iter().enumerate() {
            if ci > 0 {
                let _ = write!(out, " {outer} ");
            }
            let paren = multi && clause.literals.len() > 1;
            if paren {
                out.push('(');
            }
            for (li, &lit) in clause.literals.iter().enumerate() {
                if li > 0 {
                    let _ = write!(out, " {} ", clause.op.symbol());
                }
                out.push_str(&literal(lit));
            }
            if paren {
                out.push(')');
            }
        }
        out
    }

    pub fn render(&self, binarizer: &BinarizerModel) -> String {
        self.render_with(|l| {
            binarizer
                .literal_description(l.bit, l.negated)
                .unwrap_or_else(|_| alloc::format!("{}b{}", if l.negated { "¬" } else { "" }, l.bit))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    /// Head bias plus the constant contribution of dead second-layer neurons.
    pub bias: Vec<f64>,
    /// Binarized input width `D`.
    pub width: usize,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn predict(&self, bits: &[i8]) -> usize {
        argmax(&predict_with_rules(self, bits))
    }

    pub fn avg_length(&self) -> f64 {
        if self.rules.is_empty() {
            return 0.0;
        }
        self.rules.iter().map(Rule::length).sum::<usize>() as f64 / self.rules.len() as f64
    }
}

/// Reads the rule set off the network's current binary view.
pub fn extract_rules(net: &Network) -> RuleSet {
    let view = net.binary_view();
    let classes = net.classes();
    let mut rules = Vec::new();
    for i in (0..net.k2()).filter(|&i| view.live2[i]) {
        let form = match view.op2[i] {
            Op::And => RuleForm::Cnf,
            Op::Or => RuleForm::Dnf,
        };
        let clauses = view
            .inputs2(i)
            .iter()
            .map(|&j| {
                let (inputs, negs) = view.inputs1(j as usize);
                Clause {
                    op: view.op1[j as usize],
                    literals: inputs
                        .iter()
                        .zip(negs)
                        .map(|(&d, &s)| Literal { bit: d as usize, negated: s < 0 })
                        .collect(),
                }
            })
            .collect();
        let scores = (0..classes).map(|k| net.head.scores.get(i, k)).collect();
        rules.push(Rule { id: i, form, clauses, scores });
    }
    RuleSet { rules, bias: view.base_logits, width: net.inputs() }
}

pub fn evaluate_rule(rule: &Rule, bits: &[i8]) -> i8 {
    rule.evaluate(bits)
}

/// `ŷ_k = bias_k + Σ_i z_i · s_{i,k}` with `z_i = ±1`.
pub fn predict_with_rules(rs: &RuleSet, bits: &[i8]) -> Vec<f64> {
    let mut logits = rs.bias.clone();
    for rule in &rs.rules {
        let z = f64::from(rule.evaluate(bits));
        for (l, s) in logits.iter_mut().zip(&rule.scores) {
            *l += z * s;
        }
    }
    logits
}

fn literal_key(l: &Literal) -> (usize, bool) {
    (l.bit, l.negated)
}

fn is_subset(a: &[Literal], b: &[Literal]) -> bool {
    a.iter().all(|l| b.contains(l))
}

fn canonicalize(rule: &mut Rule) {
    for c in &mut rule.clauses {
        c.literals.sort_by_key(literal_key);
        c.literals.dedup();
    }
    // absorption: a clause that contains a sibling clause is redundant under either form
    let mut keep = vec![true; rule.clauses.len()];
    for i in 0..rule.clauses.len() {
        for j in 0..rule.clauses.len() {
            if i == j || !keep[j] {
                continue;
            }
            let (a, b) = (&rule.clauses[j].literals, &rule.clauses[i].literals);
            if is_subset(a, b) && (a.len() < b.len() || j < i) {
                keep[i] = false;
                break;
            }
        }
    }
    let mut k = keep.into_iter();
    rule.clauses.retain(|_| k.next().unwrap());
    rule.clauses.sort_by(|a, b| a.literals.iter().map(literal_key).cmp(b.literals.iter().map(literal_key)));

    // all-unit-clause rules are really a single clause of the outer operator
    if rule.clauses.iter().all(|c| c.literals.len() == 1) {
        let mut literals: Vec<Literal> = rule.clauses.iter().map(|c| c.literals[0]).collect();
        literals.sort_by_key(literal_key);
        let (form, op) = if literals.len() == 1 {
            (RuleForm::Dnf, Op::And)
        } else {
            match rule.form {
                RuleForm::Cnf => (RuleForm::Dnf, Op::And),
                RuleForm::Dnf => (RuleForm::Cnf, Op::Or),
            }
        };
        rule.form = form;
        rule.clauses = vec![Clause { op, literals }];
    }
}

/// Sorts and dedupes literals, applies clause absorption and merges
/// identical rules by summing their scores. The decision function is preserved; rule order is
/// the order of first appearance.
pub fn simplify(rs: &RuleSet) -> RuleSet {
    let mut out: Vec<Rule> = Vec::with_capacity(rs.rules.len());
    for rule in &rs.rules {
        let mut r = rule.clone();
        canonicalize(&mut r);
        match out.iter_mut().find(|o| o.form == r.form && o.clauses == r.clauses) {
            Some(o) => {
                for (a, b) in o.scores.iter_mut().zip(&r.scores) {
                    *a += b;
                }
            }
            None => out.push(r),
        }
    }
    RuleSet { rules: out, bias: rs.bias.clone(), width: rs.width }
}

/// Largest variable count [`truth_table_equivalent`] will enumerate.
pub const MAX_ENUMERATION_VARS: usize = 20;

/// Whether the rule set's argmax class matches the ground-truth label on
/// every one of the `2^var_count` assignments. Bit `v` of the rule set is variable `v`.
pub fn truth_table_equivalent(rs: &RuleSet, truth: &GroundTruthRule, var_count: usize) -> Result<bool> {
    if var_count > MAX_ENUMERATION_VARS {
        return Err(Error::TooManyVariables(var_count));
    }
    if rs.width != var_count {
        return Err(Error::Shape(alloc::format!(
            "rule set reads {} bits but {var_count} variables were given",
            rs.width
        )));
    }
    if truth.var_count() > var_count {
        return Err(Error::VariableOutOfRange { var: truth.var_count() - 1, var_count });
    }
    let mut bits = vec![-1i8; var_count];
    for assignment in 0u32..(1u32 << var_count) {
        for (v, b) in bits.iter_mut().enumerate() {
            *b = if assignment >> v & 1 == 1 { 1 } else { -1 };
        }
        if rs.predict(&bits) != truth.evaluate(&bits) as usize {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Table report: one line per rule with its class supports and coverage.
///
/// Rules whose largest `|score|` is below `tau` are left out of the table.
/// `coverage_rows` are binarized training rows; coverage is the fraction of
/// them on which the rule holds, shown as `-` without rows.
pub fn render(
    rs: &RuleSet,
    binarizer: &BinarizerModel,
    class_names: &[String],
    coverage_rows: Option<&[Vec<i8>]>,
    tau: f64,
) -> String {
    let mut order: Vec<&Rule> = rs.rules.iter().filter(|r| r.max_abs_score() >= tau).collect();
    order.sort_by(|a, b| b.max_abs_score().total_cmp(&a.max_abs_score()).then(a.id.cmp(&b.id)));
    let pruned = rs.rules.len() - order.len();

    let mut out = String::new();
    let _ = writeln!(out, "# {} rules shown, {pruned} pruned below tau = {tau}", order.len());
    out.push_str("Rule");
    for name in class_names {
        let _ = write!(out, "\tSupport_{name}");
    }
    out.push_str("\tCoverage\tForm\tLength\tExpression\n");
    for rule in order {
        let _ = write!(out, "r{}", rule.id);
        for s in &rule.scores {
            let _ = write!(out, "\t{s:.4}");
        }
        match coverage_rows {
            Some(rows) if !rows.is_empty() => {
                let _ = write!(out, "\t{:.4}", crate::metrics::rule_coverage(rule, rows));
            }
            _ => out.push_str("\t-"),
        }
        let _ = writeln!(out, "\t{}\t{}\t{}", rule.form.as_str(), rule.length(), rule.render(binarizer));
    }
    out.push_str("bias");
    for b in &rs.bias {
        let _ = write!(out, "\t{b:.4}");
    }
    out.push('\n');
    out
}
