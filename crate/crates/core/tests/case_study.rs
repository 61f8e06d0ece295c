//! Four-sensor cholesterol-to-blood-pressure scenario: a classifier alone
//! can be fooled through two sensors, but pairwise relationship boxes push
//! the cost to all four.

mod common;

use common::{atlas_from, everywhere, external, rect};
use shs_core::adm::{consistent, ClusterAtlas};
use shs_core::dcm::{DecisionTreeModel, Dcm, TreeNode};
use shs_core::threat::{
    find_attack, resiliency, validate_attack, AttackOutcome, AttackVector, AttackerCapability, RungVerdict,
    ThreatContext,
};

const HR: usize = 0;
const SYS: usize = 1;
const DIA: usize = 2;
const O2: usize = 3;
const CHOLESTEROL: usize = 0;
const BLOOD_PRESSURE: usize = 1;

const BASELINE: [f64; 4] = [122.94, 75.98, 153.56, 93.2];
const DT_ONLY: [f64; 4] = [122.94, 73.46, 153.56, 98.5];
const COMBINED: [f64; 4] = [120.332, 81.855, 149.67, 98.5];
const THRESHOLD: f64 = 0.08;

/// Blood pressure iff oxygen > 95 and systolic outside (74, 80].
fn tree() -> Dcm {
    let sys_band = TreeNode::split(
        SYS,
        74.0,
        TreeNode::leaf(BLOOD_PRESSURE),
        TreeNode::split(SYS, 80.0, TreeNode::leaf(CHOLESTEROL), TreeNode::leaf(BLOOD_PRESSURE)),
    );
    let root = TreeNode::split(O2, 95.0, TreeNode::leaf(CHOLESTEROL), sys_band);
    Dcm::DecisionTree(DecisionTreeModel::new(4, 2, root).unwrap())
}

fn unconstrained() -> ClusterAtlas {
    atlas_from(4, 2, |_, _, _| vec![everywhere()])
}

/// Blood-pressure patients cluster at lower heart rate and diastolic, and
/// higher systolic and oxygen, than this baseline.
fn relationships() -> ClusterAtlas {
    atlas_from(4, 2, |j, a, b| match (j, a, b) {
        (BLOOD_PRESSURE, HR, DIA) => vec![rect(118.0, 148.0, 121.5, 151.0)],
        (BLOOD_PRESSURE, SYS, O2) => vec![rect(80.0, 97.0, 84.0, 100.0)],
        _ => vec![everywhere()],
    })
}

fn vector(altered: [f64; 4], m: usize) -> AttackVector {
    let deltas: Vec<f64> = (0..4).map(|s| altered[s] - BASELINE[s]).collect();
    AttackVector {
        baseline: BASELINE.to_vec(),
        altered: (0..4).map(|s| BASELINE[s] + deltas[s]).collect(),
        deltas,
        source: CHOLESTEROL,
        target: BLOOD_PRESSURE,
        capability: AttackerCapability::new(m, THRESHOLD).unwrap(),
        backend: "fixture".into(),
    }
}

#[test]
fn documented_alterations_in_percent() {
    let pct = |s: usize| 100.0 * (COMBINED[s] - BASELINE[s]).abs() / BASELINE[s];
    assert!((pct(HR) - 2.12).abs() < 0.01);
    assert!((pct(DIA) - 2.53).abs() < 0.01);
    assert!((pct(O2) - 5.68).abs() < 0.01);
    // Systolic moves the furthest, just under the 8% threshold.
    assert!((pct(SYS) - 7.73).abs() < 0.01);
}

#[test]
fn documented_vectors_validate_only_under_their_model() {
    let dcm = tree();
    assert_eq!(dcm.predict(&BASELINE).unwrap(), CHOLESTEROL);
    let loose = unconstrained();
    let strict = relationships();
    assert!(consistent(&BASELINE, CHOLESTEROL, &strict).unwrap());

    let dt_only = vector(DT_ONLY, 2);
    assert_eq!(dt_only.touched(), vec![SYS, O2]);
    assert!(validate_attack(&dt_only, &dcm, &loose));
    assert!(!validate_attack(&dt_only, &dcm, &strict));

    let combined = vector(COMBINED, 4);
    assert_eq!(combined.touched().len(), 4);
    assert!(validate_attack(&combined, &dcm, &strict));
    assert!(!validate_attack(&vector(COMBINED, 3), &dcm, &strict));
}

fn verdicts(atlas: &ClusterAtlas) -> Option<Vec<bool>> {
    let backend = external()?;
    let dcm = tree();
    let ctx = ThreatContext::new(&dcm, atlas, &backend);
    Some(
        (1..=4)
            .map(|m| {
                let cap = AttackerCapability::new(m, THRESHOLD).unwrap();
                match find_attack(ctx, &BASELINE, CHOLESTEROL, BLOOD_PRESSURE, cap).unwrap() {
                    AttackOutcome::Feasible { vector } => {
                        assert!(validate_attack(&vector, &dcm, atlas));
                        assert!(vector.touched().len() <= m);
                        true
                    }
                    AttackOutcome::Infeasible => false,
                    AttackOutcome::Unknown { reason } => panic!("unresolved at m = {m}: {reason}"),
                }
            })
            .collect(),
    )
}

#[test]
fn classifier_alone_falls_to_two_sensors() {
    if let Some(v) = verdicts(&unconstrained()) {
        assert_eq!(v, vec![false, true, true, true]);
    }
}

#[test]
fn relationships_raise_the_cost_to_four_sensors() {
    if let Some(v) = verdicts(&relationships()) {
        assert_eq!(v, vec![false, false, false, true]);
    }
}

#[test]
fn goal_is_three_resilient_under_relationships() {
    let Some(backend) = external() else { return };
    let dcm = tree();
    let atlas = relationships();
    let ctx = ThreatContext::new(&dcm, &atlas, &backend);
    let rep = resiliency(ctx, &BASELINE, CHOLESTEROL, BLOOD_PRESSURE, 3, THRESHOLD).unwrap();
    assert_eq!(rep.r, 3);
    let verdicts: Vec<RungVerdict> = rep.certificates.iter().map(|c| c.verdict).collect();
    assert_eq!(verdicts, vec![RungVerdict::Unsat; 3].into_iter().chain([RungVerdict::Sat]).collect::<Vec<_>>());
    assert!(rep.first_feasible.is_some());
}
