//! Two-sensor system small enough to decide every rung by brute force over
//! a grid of alterations.

mod common;

use common::{atlas_from, everywhere, external, rect};
use shs_core::adm::{consistent, ClusterAtlas};
use shs_core::cir::abs_ratio_limit;
use shs_core::dcm::{DecisionTreeModel, Dcm, TreeNode};
use shs_core::solve::{BackendDescriptor, SearchBudget};
use shs_core::threat::{
    default_ladder, escalate, falsify, find_attack, resiliency, sensor_frequency, validate_attack, AttackOutcome,
    AttackerCapability, EscalationOutcome, RungVerdict, ThreatContext, ThreatError,
};

const BASELINE: [f64; 2] = [100.0, 50.0];
const GRID: usize = 200;

/// Label 1 iff x > 108.
fn tree() -> Dcm {
    let root = TreeNode::split(0, 108.0, TreeNode::leaf(0), TreeNode::leaf(1));
    Dcm::DecisionTree(DecisionTreeModel::new(2, 2, root).unwrap())
}

fn atlas() -> ClusterAtlas {
    atlas_from(2, 2, |j, _, _| {
        if j == 1 {
            vec![rect(105.0, 52.0, 120.0, 60.0)]
        } else {
            vec![everywhere()]
        }
    })
}

/// Any grid point strictly inside the alteration box reaching label 1.
fn grid_feasible(dcm: &Dcm, atlas: &ClusterAtlas, cap: AttackerCapability) -> bool {
    let axis = |s: usize| -> Vec<f64> {
        let l = abs_ratio_limit(cap.threshold, BASELINE[s]);
        (0..=GRID)
            .map(|i| -l + 2.0 * l * i as f64 / GRID as f64)
            .filter(|d| d.abs() < l)
            .chain([0.0])
            .collect()
    };
    let (dx, dy) = (axis(0), axis(1));
    dx.iter().any(|&a| {
        dy.iter().any(|&b| {
            let touched = usize::from(a != 0.0) + usize::from(b != 0.0);
            let p = [BASELINE[0] + a, BASELINE[1] + b];
            touched <= cap.max_sensors && dcm.predict(&p).unwrap() == 1 && consistent(&p, 1, atlas).unwrap()
        })
    })
}

#[test]
fn grid_oracle_shape() {
    let (dcm, atlas) = (tree(), atlas());
    let ladder = default_ladder(2);
    let feasible: Vec<bool> = ladder.iter().map(|&c| grid_feasible(&dcm, &atlas, c)).collect();
    // Both sensors must move, and x needs more than 8%.
    let expected: Vec<bool> = ladder.iter().map(|c| c.max_sensors == 2 && c.threshold > 0.08).collect();
    assert_eq!(feasible, expected);
}

#[test]
fn every_rung_matches_the_grid() {
    let Some(backend) = external() else { return };
    let (dcm, atlas) = (tree(), atlas());
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    for cap in default_ladder(2) {
        let solver = match find_attack(ctx, &BASELINE, 0, 1, cap).unwrap() {
            AttackOutcome::Feasible { vector } => {
                assert!(validate_attack(&vector, &dcm, &atlas));
                let (x, y) = (vector.altered[0], vector.altered[1]);
                assert!(x > 108.0 && (105.0..=120.0).contains(&x) && (52.0..=60.0).contains(&y));
                true
            }
            AttackOutcome::Infeasible => false,
            AttackOutcome::Unknown { reason } => panic!("{cap:?}: {reason}"),
        };
        assert_eq!(solver, grid_feasible(&dcm, &atlas, cap), "{cap:?}");
    }
}

#[test]
fn escalation_returns_the_minimal_grid_rung() {
    let Some(backend) = external() else { return };
    let (dcm, atlas) = (tree(), atlas());
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let ladder = default_ladder(2);
    let minimal = ladder.iter().position(|&c| grid_feasible(&dcm, &atlas, c)).unwrap();
    let esc = escalate(ctx, &BASELINE, 0, 1, &ladder).unwrap();
    let EscalationOutcome::Feasible { rung, capability, vector } = esc.outcome else {
        panic!("expected a feasible rung")
    };
    assert_eq!(rung, minimal);
    assert_eq!(capability, ladder[minimal]);
    assert!(validate_attack(&vector, &dcm, &atlas));
    assert!(esc.rungs[..rung]
        .iter()
        .all(|v| matches!(v, RungVerdict::Unsat | RungVerdict::ImpliedUnsat)));
    assert!(esc.rungs[rung + 1..].iter().all(|v| *v == RungVerdict::NotRun));
    assert_eq!(sensor_frequency([&vector], 2), vec![1, 1]);
}

#[test]
fn all_unsat_ladder_is_infeasible() {
    let Some(backend) = external() else { return };
    let (dcm, atlas) = (tree(), atlas());
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let ladder: Vec<AttackerCapability> = [0.05, 0.3].iter().map(|&t| AttackerCapability::new(1, t).unwrap()).collect();
    let esc = escalate(ctx, &BASELINE, 0, 1, &ladder).unwrap();
    assert_eq!(esc.outcome, EscalationOutcome::Infeasible);
}

#[test]
fn zero_sensors_is_unsat() {
    let Some(backend) = external() else { return };
    let (dcm, atlas) = (tree(), atlas());
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let cap = AttackerCapability::new(0, 0.3).unwrap();
    assert_eq!(find_attack(ctx, &BASELINE, 0, 1, cap).unwrap(), AttackOutcome::Infeasible);
}

#[test]
fn resiliency_survives_random_falsification() {
    let Some(backend) = external() else { return };
    let (dcm, atlas) = (tree(), atlas());
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let rep = resiliency(ctx, &BASELINE, 0, 1, 1, 0.3).unwrap();
    assert_eq!(rep.r, 1);
    assert!(rep.first_feasible.is_some());
    let at_r = AttackerCapability::new(1, 0.3).unwrap();
    assert!(falsify(ctx, &BASELINE, 0, 1, at_r, 10_000, 7).is_none());
    // The falsifier does find attacks once two sensors are allowed.
    let beyond = AttackerCapability::new(2, 0.3).unwrap();
    assert!(falsify(ctx, &BASELINE, 0, 1, beyond, 10_000, 7).is_some());
}

#[test]
fn resiliency_rejects_incomplete_backend() {
    let (dcm, atlas) = (tree(), atlas());
    let backend = BackendDescriptor::builtin(SearchBudget::default(), 3);
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    assert!(matches!(
        resiliency(ctx, &BASELINE, 0, 1, 1, 0.3),
        Err(ThreatError::IncompleteBackend(_))
    ));
}

#[test]
fn builtin_finds_wide_attacks_and_never_claims_unsat() {
    let (dcm, atlas) = (tree(), atlas());
    let backend = BackendDescriptor::builtin(SearchBudget::default(), 11);
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let wide = AttackerCapability::new(2, 0.3).unwrap();
    let AttackOutcome::Feasible { vector } = find_attack(ctx, &BASELINE, 0, 1, wide).unwrap() else {
        panic!("builtin search should find the wide attack")
    };
    assert!(validate_attack(&vector, &dcm, &atlas));
    let narrow = AttackerCapability::new(1, 0.3).unwrap();
    assert!(matches!(
        find_attack(ctx, &BASELINE, 0, 1, narrow).unwrap(),
        AttackOutcome::Unknown { .. }
    ));
}

#[test]
fn corrupted_witnesses_are_rejected() {
    let (dcm, atlas) = (tree(), atlas());
    let backend = BackendDescriptor::builtin(SearchBudget::default(), 11);
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let cap = AttackerCapability::new(2, 0.3).unwrap();
    let AttackOutcome::Feasible { vector } = find_attack(ctx, &BASELINE, 0, 1, cap).unwrap() else {
        panic!("expected a witness")
    };
    let mut zeroed = vector.clone();
    zeroed.deltas[1] = 0.0;
    assert!(!validate_attack(&zeroed, &dcm, &atlas));

    let mut too_far = vector.clone();
    too_far.altered[0] = BASELINE[0] * 1.35;
    too_far.deltas[0] = too_far.altered[0] - BASELINE[0];
    assert!(!validate_attack(&too_far, &dcm, &atlas));

    let mut over_budget = vector.clone();
    over_budget.capability = AttackerCapability::new(1, 0.3).unwrap();
    assert!(!validate_attack(&over_budget, &dcm, &atlas));

    let mut wrong_goal = vector;
    wrong_goal.target = 0;
    assert!(!validate_attack(&wrong_goal, &dcm, &atlas));
}

#[test]
fn same_source_and_target_is_rejected() {
    let (dcm, atlas) = (tree(), atlas());
    let backend = BackendDescriptor::builtin(SearchBudget::default(), 0);
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let cap = AttackerCapability::new(1, 0.3).unwrap();
    assert!(find_attack(ctx, &BASELINE, 0, 0, cap).is_err());
}
