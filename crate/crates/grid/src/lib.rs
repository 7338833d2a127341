//! Distribution network modelling: MATPOWER-style cases, deterministic
//! adjustments, radial power flow and DER dispatch.

pub mod adjust;
pub mod case;
pub mod dispatch;
pub mod matpower;
pub mod powerflow;
pub mod topology;

pub use adjust::{
    apply_adjustment, AdjustError, AdjustmentRequest, BranchRef, BranchSwitch, LoadChange,
};
pub use case::{
    Branch, Bus, BusId, BusKind, FieldDiff, GenCost, GenKind, Generator, GridCase, ValidationError,
};
pub use dispatch::{
    evaluate_strategy, solve_dispatch, DispatchError, DispatchProblem, DispatchStrategy, Objective,
    StepEvaluation,
};
pub use matpower::{parse_case, serialize_case, CaseError};
pub use powerflow::{
    detect_violations, solve_power_flow, InjectionProfile, PowerFlowError, PowerFlowResult,
    PowerPair, ViolationReport,
};
pub use topology::{check_radial, NotRadial, RadialTree, RadialityReport};
