mod common;

use adn_grid::{apply_adjustment, check_radial, AdjustmentRequest, BranchRef, RadialTree};
use proptest::prelude::*;

#[test]
fn shipped_cases_are_trees() {
    for name in common::SHIPPED {
        let case = common::load(name);
        let report = check_radial(&case);
        assert!(report.is_tree, "{name}: {report:?}");
        assert_eq!(case.in_service_branch_count(), case.buses().len() - 1);
    }
}

#[test]
fn opening_a_branch_leaves_one_island() {
    let case = common::load("valley33");
    let out = apply_adjustment(
        &case,
        &AdjustmentRequest::EquipmentSwitching {
            branch: BranchRef::Endpoints(7, 8),
            in_service: false,
        },
    )
    .unwrap();
    let report = check_radial(&out);
    assert!(!report.is_tree);
    assert_eq!(report.islands.len(), 1);
    assert!(report.loops.is_empty());
    assert_eq!(report.islands[0], (8..=18).collect::<Vec<u32>>());
}

#[test]
fn closing_a_tie_creates_one_loop() {
    let case = common::load("valley33");
    let k = case.find_branch(8, 21).unwrap();
    let out = apply_adjustment(
        &case,
        &AdjustmentRequest::EquipmentSwitching {
            branch: BranchRef::Endpoints(8, 21),
            in_service: true,
        },
    )
    .unwrap();
    let report = check_radial(&out);
    assert!(!report.is_tree);
    assert!(report.islands.is_empty());
    assert_eq!(report.loops.len(), 1);
    assert!(report.loops[0].contains(&k));
    assert!(RadialTree::build(&out).is_err());
}

proptest! {
    #[test]
    fn any_single_opening_of_a_tree_islands(seed in 0u64..5000, n in 3usize..40, pick in 0usize..1000) {
        let case = common::random_tree(seed, n);
        prop_assert_eq!(case.in_service_branch_count(), n - 1);
        let k = pick % case.branches().len();
        let out = apply_adjustment(&case, &AdjustmentRequest::EquipmentSwitching {
            branch: BranchRef::Index(k + 1),
            in_service: false,
        }).unwrap();
        let report = check_radial(&out);
        prop_assert_eq!(report.islands.len(), 1);
        prop_assert!(report.loops.is_empty());
    }

    #[test]
    fn connected_radial_has_n_minus_one_branches(seed in 0u64..5000, n in 2usize..60) {
        let case = common::random_tree(seed, n);
        let report = check_radial(&case);
        prop_assert!(report.is_tree);
        prop_assert_eq!(case.in_service_branch_count(), case.buses().len() - 1);
    }
}
