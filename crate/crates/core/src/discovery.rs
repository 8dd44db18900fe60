//! From trained model to symbolic equations.
//!
//! Each product unit is one generalized monomial; its effective coefficient
//! folds the log-domain bias into the output coefficient, `c_k·exp(b_k)`.
//! Near-duplicate monomials are merged (exponents averaged, coefficients
//! summed), negligible ones pruned, and the survivors matched one-to-one
//! against the ground-truth terms of a benchmark system.

use crate::complex::ComplexScalar;
use crate::dynamics::System;
use crate::network::ProductUnitModel;
use serde::{Deserialize, Serialize};

/// One monomial: `coefficient · Π_i x_i^{exponents[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: ComplexScalar,
    pub exponents: Vec<ComplexScalar>,
}

/// Thresholds for merging, pruning, and rendering.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct MergeConfig {
    /// Two terms merge when every exponent differs by at most this much;
    /// the same bound decides coefficient/exponent matches against truth.
    pub epsilon: f64,
    /// Terms with |coefficient| below this are excluded from counting.
    pub delta: f64,
    /// Decimal places used when rounding parameters for display and for
    /// prediction-horizon evaluation.
    pub rounding_decimals: u32,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            delta: 1e-3,
            rounding_decimals: 3,
        }
    }
}

/// Outcome of matching predicted terms against ground truth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatchReport {
    pub correct_count: usize,
    pub erroneous_count: usize,
    pub per_equation: Vec<EquationMatch>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EquationMatch {
    pub correct: usize,
    pub erroneous: usize,
    /// Indices of ground-truth terms no prediction matched.
    pub unmatched_truth: Vec<usize>,
}

impl MatchReport {
    /// Full recovery: every truth term matched, nothing spurious left.
    pub fn is_exact(&self, total_truth_terms: usize) -> bool {
        self.correct_count == total_truth_terms
            && self.erroneous_count == 0
            && self.per_equation.iter().all(|e| e.unmatched_truth.is_empty())
    }
}

/// One term per product unit for the given output, with the bias folded
/// into the coefficient.
pub fn extract_terms(model: &ProductUnitModel, output_index: usize) -> Vec<Term> {
    assert!(output_index < model.n_outputs(), "output index out of range");
    (0..model.n_units())
        .map(|k| Term {
            coefficient: model.coefficient(output_index, k) * model.log_bias(k).exp(),
            exponents: model.exponent_row(k).to_vec(),
        })
        .collect()
}

/// All outputs at once, in equation order.
pub fn extract_all_terms(model: &ProductUnitModel) -> Vec<Vec<Term>> {
    (0..model.n_outputs())
        .map(|v| extract_terms(model, v))
        .collect()
}

/// Largest componentwise exponent distance, or None if some component
/// exceeds `epsilon` (the pair does not qualify for merging).
fn merge_distance(a: &Term, b: &Term, epsilon: f64) -> Option<f64> {
    let mut worst = 0.0f64;
    for (wa, wb) in a.exponents.iter().zip(&b.exponents) {
        let d = (wa - wb).norm();
        if d > epsilon {
            return None;
        }
        worst = worst.max(d);
    }
    Some(worst)
}

/// Merge near-duplicate monomials: repeatedly take the closest qualifying
/// pair, average its exponents, and sum its coefficients, until no pair
/// qualifies. Closest-first ordering makes the result independent of the
/// input order for well-separated clusters.
pub fn merge_terms(terms: &[Term], config: &MergeConfig) -> Vec<Term> {
    let mut terms: Vec<Term> = terms.to_vec();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..terms.len() {
            for k in (j + 1)..terms.len() {
                if let Some(d) = merge_distance(&terms[j], &terms[k], config.epsilon) {
                    if best.map_or(true, |(_, _, bd)| d < bd) {
                        best = Some((j, k, d));
                    }
                }
            }
        }
        let Some((j, k, _)) = best else {
            return terms;
        };
        let second = terms.remove(k);
        let first = &mut terms[j];
        first.coefficient += second.coefficient;
        for (wj, wk) in first.exponents.iter_mut().zip(&second.exponents) {
            *wj = (*wj + wk) / 2.0;
        }
    }
}

/// Keep terms with `|coefficient| >= delta` (boundary inclusive).
pub fn prune_terms(terms: &[Term], delta: f64) -> Vec<Term> {
    terms
        .iter()
        .filter(|t| t.coefficient.norm() >= delta)
        .cloned()
        .collect()
}

fn match_distance(pred: &Term, truth: &Term, epsilon: f64) -> Option<f64> {
    let dc = (pred.coefficient - truth.coefficient).norm();
    if dc > epsilon {
        return None;
    }
    let de = merge_distance(pred, truth, epsilon)?;
    Some(dc.max(de))
}

/// Greedy one-to-one assignment per equation: closest qualifying
/// (predicted, truth) pairs are matched first; every surviving predicted
/// term that finds no partner is erroneous.
pub fn match_against_truth(
    predicted: &[Vec<Term>],
    truth: &[Vec<Term>],
    epsilon: f64,
) -> MatchReport {
    assert_eq!(
        predicted.len(),
        truth.len(),
        "equation counts must agree for matching"
    );
    let mut report = MatchReport {
        correct_count: 0,
        erroneous_count: 0,
        per_equation: Vec::with_capacity(truth.len()),
    };
    for (preds, truths) in predicted.iter().zip(truth) {
        let mut pred_free: Vec<bool> = vec![true; preds.len()];
        let mut truth_free: Vec<bool> = vec![true; truths.len()];
        let mut correct = 0usize;
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for (pi, p) in preds.iter().enumerate() {
                if !pred_free[pi] {
                    continue;
                }
                for (ti, t) in truths.iter().enumerate() {
                    if !truth_free[ti] {
                        continue;
                    }
                    if let Some(d) = match_distance(p, t, epsilon) {
                        if best.map_or(true, |(_, _, bd)| d < bd) {
                            best = Some((pi, ti, d));
                        }
                    }
                }
            }
            let Some((pi, ti, _)) = best else { break };
            pred_free[pi] = false;
            truth_free[ti] = false;
            correct += 1;
        }
        let erroneous = pred_free.iter().filter(|&&free| free).count();
        let unmatched_truth = truth_free
            .iter()
            .enumerate()
            .filter_map(|(i, &free)| free.then_some(i))
            .collect();
        report.correct_count += correct;
        report.erroneous_count += erroneous;
        report.per_equation.push(EquationMatch {
            correct,
            erroneous,
            unmatched_truth,
        });
    }
    report
}

/// Ground-truth term lists for a built-in system, one list per equation.
pub fn truth_terms(system: System) -> Vec<Vec<Term>> {
    let model = system.truth_model();
    extract_all_terms(&model)
        .into_iter()
        .map(|terms| prune_terms(&terms, f64::MIN_POSITIVE))
        .collect()
}

/// Round half away from zero to `decimals` places. Negative zeros are
/// normalized so displays never show "-0.000".
pub fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn format_signed(v: f64, decimals: u32) -> String {
    format!("{:.*}", decimals as usize, v)
}

/// Exponent display: integers render bare, fractions with trailing zeros
/// trimmed.
fn format_exponent(v: f64, decimals: u32) -> String {
    let rounded = round_to(v, decimals);
    if rounded == rounded.trunc() {
        format!("{}", rounded as i64)
    } else {
        let mut s = format!("{:.*}", decimals as usize, rounded);
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
        s
    }
}

fn render_term(term: &Term, variables: &[&str], decimals: u32) -> String {
    let re = round_to(term.coefficient.re, decimals);
    let im = round_to(term.coefficient.im, decimals);
    let coef = if im == 0.0 {
        format_signed(re, decimals)
    } else {
        format!(
            "({}{}{}i)",
            format_signed(re, decimals),
            if im >= 0.0 { "+" } else { "-" },
            format_signed(im.abs(), decimals)
        )
    };
    let mut out = coef;
    for (w, name) in term.exponents.iter().zip(variables) {
        let wre = round_to(w.re, decimals);
        let wim = round_to(w.im, decimals);
        if wim != 0.0 {
            out.push_str(&format!(
                "*{}^({}{}{}i)",
                name,
                format_exponent(wre, decimals),
                if wim >= 0.0 { "+" } else { "-" },
                format_exponent(wim.abs(), decimals)
            ));
        } else if wre == 0.0 {
            continue;
        } else if wre == 1.0 {
            out.push_str(&format!("*{name}"));
        } else {
            out.push_str(&format!("*{}^{}", name, format_exponent(wre, decimals)));
        }
    }
    out
}

/// Render equations as text, one line per output:
/// `d<var>/dt = <terms>`. Coefficients keep the configured number of
/// decimals; exponents within rounding distance of integers render as
/// integers; imaginary parts below half an ulp of the rounding vanish.
pub fn render_equations(
    per_equation: &[Vec<Term>],
    variables: &[&str],
    rounding_decimals: u32,
) -> String {
    let mut out = String::new();
    for (v, terms) in per_equation.iter().enumerate() {
        let lhs = variables.get(v).copied().unwrap_or("?");
        out.push_str(&format!("d{lhs}/dt = "));
        if terms.is_empty() {
            out.push('0');
        } else {
            for (i, term) in terms.iter().enumerate() {
                let rendered = render_term(term, variables, rounding_decimals);
                if i == 0 {
                    out.push_str(&rendered);
                } else if let Some(stripped) = rendered.strip_prefix('-') {
                    out.push_str(" - ");
                    out.push_str(stripped);
                } else {
                    out.push_str(" + ");
                    out.push_str(&rendered);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Discovery pipeline on a trained model: extract, merge, prune each
/// equation's terms.
pub fn discover_terms(model: &ProductUnitModel, config: &MergeConfig) -> Vec<Vec<Term>> {
    extract_all_terms(model)
        .iter()
        .map(|terms| prune_terms(&merge_terms(terms, config), config.delta))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ALL_SYSTEMS;
    use proptest::prelude::*;

    fn c(re: f64) -> ComplexScalar {
        ComplexScalar::new(re, 0.0)
    }

    fn term(coef: f64, exps: &[f64]) -> Term {
        Term {
            coefficient: c(coef),
            exponents: exps.iter().map(|&e| c(e)).collect(),
        }
    }

    #[test]
    fn extraction_folds_bias_into_coefficient() {
        let model = ProductUnitModel::from_parts(
            3,
            2,
            1,
            vec![
                c(2.0),
                c(3.0),
                c(0.0),
                c(1.0),
                c(0.0),
                ComplexScalar::new(0.1, 0.0),
            ],
            vec![c(0.0), ComplexScalar::new(2.0f64.ln(), 0.0)],
            vec![c(5.0), c(0.5)],
        )
        .unwrap();
        let terms = extract_terms(&model, 0);
        assert!((terms[0].coefficient - c(5.0)).norm() < 1e-12);
        assert!((terms[1].coefficient - c(1.0)).norm() < 1e-12);
        assert_eq!(terms[1].exponents[2], ComplexScalar::new(0.1, 0.0));
    }

    #[test]
    fn merge_pair_averages_exponents_and_sums_coefficients() {
        let terms = vec![
            term(3.0, &[2.0, 3.0, 0.0]),
            term(2.0, &[2.05, 2.95, 0.01]),
        ];
        let merged = merge_terms(&terms, &MergeConfig::default());
        assert_eq!(merged.len(), 1);
        assert!((merged[0].coefficient - c(5.0)).norm() < 1e-12);
        assert!((merged[0].exponents[0] - c(2.025)).norm() < 1e-12);
        assert!((merged[0].exponents[1] - c(2.975)).norm() < 1e-12);
        assert!((merged[0].exponents[2] - c(0.005)).norm() < 1e-12);
    }

    #[test]
    fn merge_requires_every_exponent_close() {
        let terms = vec![term(3.0, &[2.0, 3.0, 0.0]), term(2.0, &[2.0, 3.2, 0.0])];
        let merged = merge_terms(&terms, &MergeConfig::default());
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn merge_is_idempotent() {
        let terms = vec![
            term(1.0, &[1.0, 0.0]),
            term(2.0, &[1.04, 0.02]),
            term(-0.5, &[0.0, 2.0]),
        ];
        let once = merge_terms(&terms, &MergeConfig::default());
        let twice = merge_terms(&once, &MergeConfig::default());
        assert_eq!(once, twice);
    }

    #[test]
    fn prune_boundary_is_inclusive() {
        let terms = vec![
            term(1e-4, &[1.0]),
            term(1e-3, &[2.0]),
            term(0.5, &[3.0]),
        ];
        let kept = prune_terms(&terms, 1e-3);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].exponents[0], c(2.0));
        assert!(prune_terms(&[], 1e-3).is_empty());
    }

    #[test]
    fn match_accepts_within_epsilon() {
        let predicted = vec![vec![Term {
            coefficient: c(9.95),
            exponents: vec![c(1.02), c(-0.03), c(0.01)],
        }]];
        let truth = vec![vec![term(10.0, &[1.0, 0.0, 0.0])]];
        let report = match_against_truth(&predicted, &truth, 0.1);
        assert_eq!(report.correct_count, 1);
        assert_eq!(report.erroneous_count, 0);
    }

    #[test]
    fn match_rejects_coefficient_gap() {
        let predicted = vec![vec![term(10.2, &[1.0, 0.0, 0.0])]];
        let truth = vec![vec![term(10.0, &[1.0, 0.0, 0.0])]];
        let report = match_against_truth(&predicted, &truth, 0.1);
        assert_eq!(report.correct_count, 0);
        assert_eq!(report.erroneous_count, 1);
        assert_eq!(report.per_equation[0].unmatched_truth, vec![0]);
    }

    #[test]
    fn exact_lorenz63_matches_seven_terms() {
        let truth = truth_terms(System::Lorenz63);
        let model = System::Lorenz63.truth_model();
        let predicted = discover_terms(&model, &MergeConfig::default());
        let report = match_against_truth(&predicted, &truth, 0.1);
        assert_eq!(report.correct_count, 7);
        assert_eq!(report.erroneous_count, 0);
        assert!(report.is_exact(7));
    }

    #[test]
    fn truth_matches_itself_for_every_system() {
        for system in ALL_SYSTEMS {
            let truth = truth_terms(system);
            let total: usize = truth.iter().map(Vec::len).sum();
            let report = match_against_truth(&truth, &truth, 0.1);
            assert_eq!(report.correct_count, total, "{}", system.name());
            assert_eq!(report.erroneous_count, 0);
            assert!(report.is_exact(total));
        }
    }

    #[test]
    fn truth_term_counts() {
        let counts: Vec<usize> = ALL_SYSTEMS
            .iter()
            .map(|s| truth_terms(*s).iter().map(Vec::len).sum())
            .collect();
        // lorenz63, lorenz84, four_wing, lorenz_fract
        assert_eq!(counts, vec![7, 11, 7, 7]);
    }

    #[test]
    fn render_rounding_rules() {
        let eq = vec![Term {
            coefficient: c(-2.6670001),
            exponents: vec![c(0.0), c(0.0), c(1.0)],
        }];
        let text = render_equations(&[eq], &["x", "y", "z"], 3);
        assert_eq!(text, "dx/dt = -2.667*z\n");

        let eq = vec![Term {
            coefficient: ComplexScalar::new(1.0, 0.0001),
            exponents: vec![c(1.0), c(1.0), c(0.0)],
        }];
        let text = render_equations(&[eq], &["x", "y", "z"], 3);
        assert_eq!(text, "dx/dt = 1.000*x*y\n");

        let eq = vec![term(-3.0, &[0.0, 0.0, 0.5])];
        let text = render_equations(&[eq], &["x", "y", "z"], 3);
        assert_eq!(text, "dx/dt = -3.000*z^0.5\n");

        let text = render_equations(&[vec![]], &["x"], 3);
        assert_eq!(text, "dx/dt = 0\n");
    }

    #[test]
    fn render_joins_with_signs() {
        let eq = vec![term(1.0, &[1.0, 1.0, 0.0]), term(-2.667, &[0.0, 0.0, 1.0])];
        let text = render_equations(&[eq], &["x", "y", "z"], 3);
        assert_eq!(text, "dx/dt = 1.000*x*y - 2.667*z\n");
    }

    proptest! {
        // Mutually mergeable triples collapse to one term whose parameters
        // do not depend on the order the terms were listed in.
        #[test]
        fn merge_triple_is_order_independent(
            base in -2.0f64..2.0,
            d1 in -0.02f64..0.02,
            d2 in -0.02f64..0.02,
            coefs in proptest::array::uniform3(-3.0f64..3.0),
        ) {
            let t0 = term(coefs[0], &[base, 1.0]);
            let t1 = term(coefs[1], &[base + d1, 1.0 + d1 / 2.0]);
            let t2 = term(coefs[2], &[base + d2, 1.0 - d2 / 2.0]);
            let orders: Vec<Vec<Term>> = vec![
                vec![t0.clone(), t1.clone(), t2.clone()],
                vec![t1.clone(), t2.clone(), t0.clone()],
                vec![t2.clone(), t0.clone(), t1.clone()],
                vec![t2.clone(), t1.clone(), t0.clone()],
                vec![t1.clone(), t0.clone(), t2.clone()],
                vec![t0.clone(), t2.clone(), t1.clone()],
            ];
            let results: Vec<Vec<Term>> = orders
                .iter()
                .map(|ts| merge_terms(ts, &MergeConfig::default()))
                .collect();
            for r in &results {
                prop_assert_eq!(r.len(), 1);
                prop_assert!((r[0].coefficient - results[0][0].coefficient).norm() < 1e-12);
                for (a, b) in r[0].exponents.iter().zip(&results[0][0].exponents) {
                    prop_assert!((a - b).norm() < 1e-12);
                }
            }
        }

        // Coefficient mass is conserved by merging.
        #[test]
        fn merge_conserves_coefficient_sum(
            n in 1usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let terms: Vec<Term> = (0..n)
                .map(|_| {
                    term(
                        rng.random_range(-5.0..5.0),
                        &[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                    )
                })
                .collect();
            let merged = merge_terms(&terms, &MergeConfig::default());
            let before: ComplexScalar = terms.iter().map(|t| t.coefficient).sum();
            let after: ComplexScalar = merged.iter().map(|t| t.coefficient).sum();
            prop_assert!((before - after).norm() < 1e-9);
        }
    }
}
