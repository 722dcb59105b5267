use std::collections::BTreeMap;

use super::*;
use crate::data::ColumnType;

fn schema(pairs: &[(&str, ColumnType)]) -> BTreeMap<String, ColumnType> {
    pairs
        .iter()
        .map(|(name, ty)| (name.to_string(), *ty))
        .collect()
}

/// Schema of the artificial-data example: sm1, sm2, lin1-3, noise1-3 numeric;
/// f (3 levels) and noise4 (4 levels) factors.
fn example_schema() -> BTreeMap<String, ColumnType> {
    schema(&[
        ("sm1", ColumnType::Numeric),
        ("sm2", ColumnType::Numeric),
        ("f", ColumnType::Factor),
        ("lin1", ColumnType::Numeric),
        ("lin2", ColumnType::Numeric),
        ("lin3", ColumnType::Numeric),
        ("noise1", ColumnType::Numeric),
        ("noise2", ColumnType::Numeric),
        ("noise3", ColumnType::Numeric),
        ("noise4", ColumnType::Factor),
    ])
}

const EXAMPLE_FORMULA: &str =
    "y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + lin3 + noise1 + noise2 + noise3 + noise4";

#[test]
fn parse_single_wrapped_term() {
    let ast = parse_formula("y ~ lin(x)").unwrap();
    assert_eq!(ast.response, "y");
    assert_eq!(ast.items.len(), 1);
    match &ast.items[0] {
        (Sign::Plus, AstItem::Wrapped(w)) => {
            assert_eq!(w.wrapper, Wrapper::Lin);
            assert_eq!(w.covariates, vec!["x".to_string()]);
        }
        other => panic!("unexpected item {other:?}"),
    }
}

#[test]
fn parse_group_with_pairwise_flag() {
    let ast = parse_formula("y ~ (sm1 + sm2 + f + lin1)^2 + lin2").unwrap();
    assert_eq!(ast.items.len(), 2);
    match &ast.items[0] {
        (Sign::Plus, AstItem::Group { items, power }) => {
            assert_eq!(items.len(), 4);
            assert_eq!(*power, 2);
        }
        other => panic!("unexpected item {other:?}"),
    }
    assert!(matches!(&ast.items[1], (Sign::Plus, AstItem::Raw(r)) if r == "lin2"));
}

#[test]
fn trailing_operator_is_syntax_error() {
    let err = parse_formula("y ~ x +").unwrap_err();
    match err {
        FormulaError::Syntax { offset, .. } => assert_eq!(offset, 7),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn two_tildes_rejected() {
    assert_eq!(
        parse_formula("y ~ x ~ z").unwrap_err(),
        FormulaError::DuplicateResponse
    );
}

#[test]
fn star_rejected_with_hint() {
    let err = parse_formula("y ~ a * b").unwrap_err();
    assert!(matches!(err, FormulaError::StarUnsupported { .. }));
    assert!(err.to_string().contains(":"));
}

#[test]
fn unknown_wrapper_rejected() {
    let err = parse_formula("y ~ spl(x)").unwrap_err();
    assert!(matches!(err, FormulaError::UnknownWrapper { .. }));
}

#[test]
fn higher_powers_unsupported() {
    let err = parse_formula("y ~ (a + b)^3").unwrap_err();
    assert!(matches!(err, FormulaError::PowerUnsupported { power: 3, .. }));
}

#[test]
fn wrapper_arguments_resolved() {
    let ast = parse_formula("y ~ sm(x, k=12, degree=2, order=1)").unwrap();
    match &ast.items[0].1 {
        AstItem::Wrapped(w) => assert_eq!(
            w.kind,
            ComponentKind::Sm {
                n_basis: 12,
                degree: 2,
                penalty_order: 1
            }
        ),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn raw_covariates_expand_by_type() {
    let ast = parse_formula("y ~ x + f").unwrap();
    let s = schema(&[("x", ColumnType::Numeric), ("f", ColumnType::Factor)]);
    let spec = expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap();
    let labels: Vec<&str> = spec.terms.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(labels, vec!["u", "lin(x)", "sm(x)", "fct(f)"]);
}

#[test]
fn numeric_pair_group_expands_to_eight_components() {
    let ast = parse_formula("y ~ (x + z)^2").unwrap();
    let s = schema(&[("x", ColumnType::Numeric), ("z", ColumnType::Numeric)]);
    let spec = expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap();
    let labels: Vec<&str> = spec.terms.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(
        labels,
        vec![
            "u",
            "lin(x)",
            "sm(x)",
            "lin(z)",
            "sm(z)",
            "lin(x):lin(z)",
            "lin(x):sm(z)",
            "sm(x):lin(z)",
            "sm(x):sm(z)"
        ]
    );
    assert!(spec.removed_terms.contains(&"lin(x):sm(x)".to_string()));
    assert!(spec.removed_terms.contains(&"lin(z):sm(z)".to_string()));
}

#[test]
fn example_formula_expands_to_37_terms() {
    let ast = parse_formula(EXAMPLE_FORMULA).unwrap();
    let spec = expand_terms(&ast, &example_schema(), FamilyKind::Gaussian).unwrap();
    assert_eq!(spec.terms.len(), 37);
    // Self pairs of the group members are auto-removed.
    for label in ["lin(sm1):sm(sm1)", "lin(sm2):sm(sm2)", "lin(lin1):sm(lin1)"] {
        assert!(
            spec.removed_terms.contains(&label.to_string()),
            "missing removal {label}"
        );
        assert!(spec.term(label).is_none());
    }
    // Main effects come before interactions, in order of appearance.
    let labels: Vec<&str> = spec.terms.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(
        &labels[..19],
        &[
            "u",
            "lin(sm1)",
            "sm(sm1)",
            "lin(sm2)",
            "sm(sm2)",
            "fct(f)",
            "lin(lin1)",
            "sm(lin1)",
            "lin(lin2)",
            "sm(lin2)",
            "lin(lin3)",
            "sm(lin3)",
            "lin(noise1)",
            "sm(noise1)",
            "lin(noise2)",
            "sm(noise2)",
            "lin(noise3)",
            "sm(noise3)",
            "fct(noise4)",
        ]
    );
    assert_eq!(labels[19], "lin(sm1):lin(sm2)");
    assert_eq!(labels[36], "fct(f):sm(lin1)");
    // All interactions combine exactly two distinct parents.
    assert!(spec.terms[19..]
        .iter()
        .all(|t| t.interaction_order == 2));
}

#[test]
fn explicit_removal_recorded() {
    let ast = parse_formula("y ~ x + f - sm(x)").unwrap();
    let s = schema(&[("x", ColumnType::Numeric), ("f", ColumnType::Factor)]);
    let spec = expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap();
    let labels: Vec<&str> = spec.terms.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(labels, vec!["u", "lin(x)", "fct(f)"]);
    assert_eq!(spec.removed_terms, vec!["sm(x)".to_string()]);
}

#[test]
fn missing_column_and_type_mismatch() {
    let ast = parse_formula("y ~ q").unwrap();
    let s = schema(&[("x", ColumnType::Numeric)]);
    assert!(matches!(
        expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap_err(),
        FormulaError::UnknownColumn(_)
    ));

    let ast = parse_formula("y ~ sm(f)").unwrap();
    let s = schema(&[("f", ColumnType::Factor)]);
    assert!(matches!(
        expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap_err(),
        FormulaError::WrapperTypeMismatch { .. }
    ));
}

#[test]
fn self_interaction_rejected() {
    let ast = parse_formula("y ~ lin(x):sm(x)").unwrap();
    let s = schema(&[("x", ColumnType::Numeric)]);
    assert!(matches!(
        expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap_err(),
        FormulaError::DuplicateCovariate { .. }
    ));
}

#[test]
fn intercept_only_model_allowed() {
    let ast = parse_formula("y ~ 1").unwrap();
    let spec = expand_terms(&ast, &BTreeMap::new(), FamilyKind::Gaussian).unwrap();
    assert_eq!(spec.terms.len(), 1);
    assert!(spec.terms[0].is_intercept());
}

#[test]
fn render_roundtrip_is_identity() {
    for formula in [
        EXAMPLE_FORMULA,
        "y ~ x + f",
        "y ~ sm(x, k=12) + fct(f) + sm(x, k=12):fct(f)",
        "y ~ (x + z)^2",
        "y ~ x + f - sm(x)",
    ] {
        let ast = parse_formula(formula).unwrap();
        let mut s = example_schema();
        s.extend(schema(&[
            ("x", ColumnType::Numeric),
            ("z", ColumnType::Numeric),
        ]));
        let spec = expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap();
        let rendered = spec.render();
        let reparsed = parse_formula(&rendered).unwrap();
        let respec = expand_terms(&reparsed, &s, FamilyKind::Gaussian).unwrap();
        assert_eq!(spec, respec, "round-trip failed for '{formula}'");
    }
}

#[test]
fn expansion_is_deterministic() {
    let ast = parse_formula(EXAMPLE_FORMULA).unwrap();
    let a = expand_terms(&ast, &example_schema(), FamilyKind::Gaussian).unwrap();
    let b = expand_terms(&ast, &example_schema(), FamilyKind::Gaussian).unwrap();
    assert_eq!(a, b);
}

#[test]
fn group_interaction_count_matches_pair_formula() {
    // For a ^2 group with g expanded components, the interaction count is
    // the number of unordered pairs from distinct parents.
    let ast = parse_formula("y ~ (x + z + f)^2").unwrap();
    let s = schema(&[
        ("x", ColumnType::Numeric),
        ("z", ColumnType::Numeric),
        ("f", ColumnType::Factor),
    ]);
    let spec = expand_terms(&ast, &s, FamilyKind::Gaussian).unwrap();
    // components: lin(x), sm(x), lin(z), sm(z), fct(f); pairs:
    // C(5,2)=10 minus 2 same-parent pairs = 8.
    let n_inter = spec.terms.iter().filter(|t| t.interaction_order > 1).count();
    assert_eq!(n_inter, 8);
}
