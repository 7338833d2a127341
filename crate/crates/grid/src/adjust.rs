//! Deterministic case adjustments: load variation, switching, new PV and
//! multi-branch reconfiguration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, GenKind, Generator, GridCase, ValidationError};
use crate::topology::{check_radial, RadialityReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum LoadChange {
    /// Multiply demand by this factor.
    Scale(f64),
    /// Add this many MW of active demand (negative to reduce).
    DeltaMw(f64),
}

/// A branch named by its endpoints (either orientation) or by its 1-based
/// row in the branch table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRef {
    Endpoints(BusId, BusId),
    Index(usize),
}

impl BranchRef {
    pub fn resolve(&self, case: &GridCase) -> Result<usize, AdjustError> {
        match *self {
            BranchRef::Endpoints(a, b) => case
                .find_branch(a, b)
                .ok_or_else(|| AdjustError::TargetNotFound(format!("branch {a}-{b}"))),
            BranchRef::Index(i) if i >= 1 && i <= case.branches().len() => Ok(i - 1),
            BranchRef::Index(i) => Err(AdjustError::TargetNotFound(format!("branch #{i}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSwitch {
    pub branch: BranchRef,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjustmentRequest {
    LoadVariation { bus: BusId, change: LoadChange },
    EquipmentSwitching { branch: BranchRef, in_service: bool },
    NewPv { bus: BusId, capacity_mw: f64 },
    TopologyReconfiguration { switches: Vec<BranchSwitch> },
}

impl AdjustmentRequest {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AdjustmentRequest::LoadVariation { .. } => "load_variation",
            AdjustmentRequest::EquipmentSwitching { .. } => "equipment_switching",
            AdjustmentRequest::NewPv { .. } => "new_pv",
            AdjustmentRequest::TopologyReconfiguration { .. } => "topology_reconfiguration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdjustError {
    #[error("target not found: {0}")]
    TargetNotFound(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("reconfiguration breaks radiality ({} island(s), {} loop(s))", .0.islands.len(), .0.loops.len())]
    RadialityBroken(RadialityReport),
}

impl From<ValidationError> for AdjustError {
    fn from(e: ValidationError) -> Self {
        AdjustError::InvalidParameter(e.to_string())
    }
}

/// Applies `req` to a copy of `case`. Only the fields implied by the request
/// kind change.
pub fn apply_adjustment(case: &GridCase, req: &AdjustmentRequest) -> Result<GridCase, AdjustError> {
    match req {
        AdjustmentRequest::LoadVariation { bus, change } => {
            let idx = case
                .bus_index(*bus)
                .ok_or_else(|| AdjustError::TargetNotFound(format!("bus {bus}")))?;
            let mut buses = case.buses().to_vec();
            let b = &mut buses[idx];
            match *change {
                LoadChange::Scale(f) => {
                    if !(f.is_finite() && f >= 0.0) {
                        return Err(AdjustError::InvalidParameter(format!(
                            "scale factor must be non-negative, got {f}"
                        )));
                    }
                    b.p_demand *= f;
                    b.q_demand *= f;
                }
                LoadChange::DeltaMw(d) => {
                    if !d.is_finite() {
                        return Err(AdjustError::InvalidParameter(
                            "load delta is not finite".into(),
                        ));
                    }
                    let p = b.p_demand + d;
                    if p < 0.0 {
                        return Err(AdjustError::InvalidParameter(format!(
                            "bus {bus} demand would become negative ({p} MW)"
                        )));
                    }
                    if b.p_demand != 0.0 {
                        b.q_demand *= p / b.p_demand;
                    }
                    b.p_demand = p;
                }
            }
            Ok(case.with_parts(buses, case.branches().to_vec(), case.generators().to_vec())?)
        }
        AdjustmentRequest::EquipmentSwitching { branch, in_service } => {
            let k = branch.resolve(case)?;
            let mut branches = case.branches().to_vec();
            branches[k].in_service = *in_service;
            Ok(case.with_parts(case.buses().to_vec(), branches, case.generators().to_vec())?)
        }
        AdjustmentRequest::NewPv { bus, capacity_mw } => {
            if case.bus(*bus).is_none() {
                return Err(AdjustError::TargetNotFound(format!("bus {bus}")));
            }
            if !(capacity_mw.is_finite() && *capacity_mw > 0.0) {
                return Err(AdjustError::InvalidParameter(format!(
                    "PV capacity must be positive, got {capacity_mw} MW"
                )));
            }
            let mut gens = case.generators().to_vec();
            gens.push(Generator {
                p_set: *capacity_mw,
                p_max: *capacity_mw,
                ..Generator::new(*bus, GenKind::Pv)
            });
            Ok(case.with_parts(case.buses().to_vec(), case.branches().to_vec(), gens)?)
        }
        AdjustmentRequest::TopologyReconfiguration { switches } => {
            if switches.is_empty() {
                return Err(AdjustError::InvalidParameter(
                    "reconfiguration lists no branches".into(),
                ));
            }
            let mut resolved: Vec<(usize, bool)> = Vec::with_capacity(switches.len());
            for s in switches {
                let k = s.branch.resolve(case)?;
                if let Some(&(_, prev)) = resolved.iter().find(|(j, _)| *j == k) {
                    if prev != s.in_service {
                        return Err(AdjustError::InvalidParameter(format!(
                            "branch {} is both opened and closed",
                            case.branches()[k].label()
                        )));
                    }
                    continue;
                }
                resolved.push((k, s.in_service));
            }
            let mut branches = case.branches().to_vec();
            for (k, status) in resolved {
                branches[k].in_service = status;
            }
            let out =
                case.with_parts(case.buses().to_vec(), branches, case.generators().to_vec())?;
            let report = check_radial(&out);
            if !report.is_tree {
                return Err(AdjustError::RadialityBroken(report));
            }
            Ok(out)
        }
    }
}
