//! Expansion of a parsed formula into a flat, validated `ModelSpec`.

use std::collections::BTreeMap;

use super::parser::{Ast, AstItem, Sign};
use super::{ComponentKind, FamilyKind, FormulaError, ModelSpec, TermComponent, TermSpec};
use crate::data::ColumnType;

fn expand_atom(
    item: &AstItem,
    schema: &BTreeMap<String, ColumnType>,
    parent: usize,
) -> Result<Vec<(usize, TermComponent)>, FormulaError> {
    match item {
        AstItem::One => Ok(vec![]),
        AstItem::Raw(name) => {
            let ty = schema
                .get(name)
                .ok_or_else(|| FormulaError::UnknownColumn(name.clone()))?;
            Ok(match ty {
                ColumnType::Numeric => vec![
                    (
                        parent,
                        TermComponent {
                            kind: ComponentKind::Lin {
                                degree: super::DEFAULT_LIN_DEGREE,
                            },
                            covariates: vec![name.clone()],
                        },
                    ),
                    (
                        parent,
                        TermComponent {
                            kind: ComponentKind::Sm {
                                n_basis: super::DEFAULT_SM_BASIS,
                                degree: super::DEFAULT_SM_DEGREE,
                                penalty_order: super::DEFAULT_SM_PENALTY_ORDER,
                            },
                            covariates: vec![name.clone()],
                        },
                    ),
                ],
                ColumnType::Factor => vec![(
                    parent,
                    TermComponent {
                        kind: ComponentKind::Fct,
                        covariates: vec![name.clone()],
                    },
                )],
            })
        }
        AstItem::Wrapped(w) => {
            let component = w.component();
            validate_component(&component, schema)?;
            Ok(vec![(parent, component)])
        }
        other => Err(FormulaError::Syntax {
            offset: 0,
            message: format!("unsupported nesting in interaction: {other:?}"),
        }),
    }
}

fn validate_component(
    c: &TermComponent,
    schema: &BTreeMap<String, ColumnType>,
) -> Result<(), FormulaError> {
    let expected = match c.kind {
        ComponentKind::Lin { .. } | ComponentKind::Sm { .. } | ComponentKind::Srf { .. } => {
            Some(ColumnType::Numeric)
        }
        ComponentKind::Fct | ComponentKind::Rnd | ComponentKind::Mrf => Some(ColumnType::Factor),
        ComponentKind::U => None,
    };
    for cov in &c.covariates {
        let ty = schema
            .get(cov)
            .ok_or_else(|| FormulaError::UnknownColumn(cov.clone()))?;
        if let Some(expected) = expected {
            if *ty != expected {
                return Err(FormulaError::WrapperTypeMismatch {
                    wrapper: c.kind.wrapper_name(),
                    covariate: cov.clone(),
                    expected: match expected {
                        ColumnType::Numeric => "numeric",
                        ColumnType::Factor => "factor",
                    },
                    actual: match ty {
                        ColumnType::Numeric => "numeric",
                        ColumnType::Factor => "factor",
                    },
                });
            }
        }
    }
    Ok(())
}

/// Expand one additive item into terms. Same-parent pairs inside a `^2`
/// group (e.g. `lin(x):sm(x)`) are dropped and their labels recorded.
/// `for_removal` skips the distinct-covariate check so that a `- a:b` item
/// may name any label, including auto-removed self pairs.
fn expand_item(
    item: &AstItem,
    schema: &BTreeMap<String, ColumnType>,
    next_parent: usize,
    for_removal: bool,
) -> Result<(Vec<TermSpec>, Vec<String>, usize), FormulaError> {
    match item {
        AstItem::One => Ok((vec![], vec![], next_parent)),
        AstItem::Raw(_) | AstItem::Wrapped(_) => {
            let comps = expand_atom(item, schema, next_parent)?;
            let terms = comps
                .into_iter()
                .map(|(_, c)| TermSpec::main(c))
                .collect();
            Ok((terms, vec![], next_parent + 1))
        }
        AstItem::Interaction(atoms) => {
            // Explicit `a:b`: every atom contributes its expanded components
            // and the cross product over atoms forms the interaction terms.
            let mut per_atom: Vec<Vec<TermComponent>> = Vec::new();
            let mut parent = next_parent;
            for atom in atoms {
                let comps = expand_atom(atom, schema, parent)?;
                parent += 1;
                if comps.is_empty() {
                    return Err(FormulaError::Syntax {
                        offset: 0,
                        message: "'1' cannot take part in an interaction".to_string(),
                    });
                }
                per_atom.push(comps.into_iter().map(|(_, c)| c).collect());
            }
            let mut combos: Vec<Vec<TermComponent>> = vec![vec![]];
            for comps in &per_atom {
                let mut grown = Vec::new();
                for combo in &combos {
                    for c in comps {
                        let mut next = combo.clone();
                        next.push(c.clone());
                        grown.push(next);
                    }
                }
                combos = grown;
            }
            let mut terms = Vec::new();
            for combo in combos {
                let term = TermSpec::interaction(combo);
                if !for_removal {
                    check_distinct_covariates(&term)?;
                }
                terms.push(term);
            }
            Ok((terms, vec![], parent))
        }
        AstItem::Group { items, power } => {
            let mut components: Vec<(usize, TermComponent)> = Vec::new();
            let mut removed_labels: Vec<String> = Vec::new();
            let mut parent = next_parent;
            for (sign, sub) in items {
                match sign {
                    Sign::Plus => {
                        let comps = expand_atom(sub, schema, parent)?;
                        parent += 1;
                        components.extend(comps);
                    }
                    Sign::Minus => {
                        let comps = expand_atom(sub, schema, parent)?;
                        parent += 1;
                        for (_, c) in comps {
                            let label = c.label();
                            components.retain(|(_, existing)| existing.label() != label);
                            removed_labels.push(label);
                        }
                    }
                }
            }
            let mut terms: Vec<TermSpec> = components
                .iter()
                .map(|(_, c)| TermSpec::main(c.clone()))
                .collect();
            if *power == 2 {
                for i in 0..components.len() {
                    for j in (i + 1)..components.len() {
                        let (pi, ci) = &components[i];
                        let (pj, cj) = &components[j];
                        let term = TermSpec::interaction(vec![ci.clone(), cj.clone()]);
                        if pi == pj {
                            // Same-parent pairs like lin(x):sm(x) are removed.
                            removed_labels.push(term.label);
                        } else {
                            if !for_removal {
                                check_distinct_covariates(&term)?;
                            }
                            terms.push(term);
                        }
                    }
                }
            }
            Ok((terms, removed_labels, parent))
        }
    }
}

fn check_distinct_covariates(term: &TermSpec) -> Result<(), FormulaError> {
    let mut seen = Vec::new();
    for cov in term.covariates() {
        if seen.contains(&cov) {
            return Err(FormulaError::DuplicateCovariate {
                label: term.label.clone(),
                covariate: cov.to_string(),
            });
        }
        seen.push(cov);
    }
    Ok(())
}

/// Expand a parsed formula against the data schema. Raw covariates are typed
/// from the schema, `^2` groups become mains plus pairwise interactions,
/// main effects are ordered before interactions, and a global intercept term
/// is always prepended.
pub fn expand_terms(
    ast: &Ast,
    schema: &BTreeMap<String, ColumnType>,
    family: FamilyKind,
) -> Result<ModelSpec, FormulaError> {
    let mut terms: Vec<TermSpec> = vec![TermSpec::intercept()];
    let mut removed: Vec<String> = Vec::new();
    let mut parent = 0usize;
    for (sign, item) in &ast.items {
        let (new_terms, new_removed, next_parent) =
            expand_item(item, schema, parent, matches!(sign, Sign::Minus))?;
        parent = next_parent;
        match sign {
            Sign::Plus => {
                terms.extend(new_terms);
                removed.extend(new_removed);
            }
            Sign::Minus => {
                for t in new_terms {
                    terms.retain(|existing| existing.label != t.label);
                    removed.push(t.label);
                }
                removed.extend(new_removed);
            }
        }
    }
    // Main effects first, interactions after, both in order of appearance.
    let mut ordered: Vec<TermSpec> = Vec::with_capacity(terms.len());
    for t in terms.iter().filter(|t| t.interaction_order == 1) {
        ordered.push(t.clone());
    }
    for t in terms.iter().filter(|t| t.interaction_order > 1) {
        ordered.push(t.clone());
    }
    // Deduplicate by label, keeping first occurrence, then drop removals.
    let mut final_terms: Vec<TermSpec> = Vec::new();
    for t in ordered {
        if removed.contains(&t.label) {
            continue;
        }
        if final_terms.iter().all(|e| e.label != t.label) {
            final_terms.push(t);
        }
    }
    { let mut seen = Vec::new(); removed.retain(|l| if seen.contains(l) { false } else { seen.push(l.clone()); true }); }
    if final_terms.iter().all(|t| t.is_intercept()) && ast.items.iter().all(|(_, i)| !matches!(i, AstItem::One)) {
        return Err(FormulaError::NoTerms);
    }
    Ok(ModelSpec {
        response: ast.response.clone(),
        family,
        terms: final_terms,
        removed_terms: removed,
    })
}
