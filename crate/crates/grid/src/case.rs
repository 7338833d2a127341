//! Network case model: buses, branches and generators in MATPOWER units.
//!
//! A [`GridCase`] can only be obtained through [`GridCase::new`] (or the
//! parser, which calls it), so every value in circulation satisfies the
//! structural invariants checked by [`GridCase::validate`]. Cases are
//! immutable; adjustments return new cases.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bus identifier as it appears in the case tables.
pub type BusId = u32;

/// Relative tolerance used by [`GridCase::diff`] on real-valued fields.
pub const REAL_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Active demand, MW.
    pub p_demand: f64,
    /// Reactive demand, MVAr.
    pub q_demand: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// Thermal limit in MVA; zero means unlimited.
    pub rate: f64,
    pub in_service: bool,
}

impl Branch {
    /// True when the branch joins `a` and `b` in either orientation.
    pub fn connects(&self, a: BusId, b: BusId) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.from_bus, self.to_bus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Slack,
    /// Micro gas turbine.
    Mgt,
    Pv,
    /// Energy storage system.
    Ess,
    /// Static VAR compensator.
    Svc,
}

impl GenKind {
    /// Numeric code used in the extended generator column.
    pub fn code(self) -> u8 {
        match self {
            GenKind::Slack => 1,
            GenKind::Mgt => 2,
            GenKind::Pv => 3,
            GenKind::Ess => 4,
            GenKind::Svc => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => GenKind::Slack,
            2 => GenKind::Mgt,
            3 => GenKind::Pv,
            4 => GenKind::Ess,
            5 => GenKind::Svc,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GenKind::Slack => "slack",
            GenKind::Mgt => "mgt",
            GenKind::Pv => "pv",
            GenKind::Ess => "ess",
            GenKind::Svc => "svc",
        }
    }
}

impl fmt::Display for GenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Quadratic production cost `c2·P² + c1·P + c0` with P in MW, per hour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl GenCost {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }

    pub fn derivative(&self, p_mw: f64) -> f64 {
        2.0 * self.c2 * p_mw + self.c1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub kind: GenKind,
    pub p_set: f64,
    pub q_set: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage setpoint, only meaningful for the slack unit.
    pub v_set: f64,
    pub in_service: bool,
    pub cost: GenCost,
    /// Storage energy capacity, MWh (ess only).
    pub soc_capacity: f64,
    /// Initial stored energy, MWh (ess only).
    pub soc_init: f64,
    /// One-way conversion efficiency (ess only).
    pub efficiency: f64,
}

impl Generator {
    /// A non-storage unit with zeroed storage fields.
    pub fn new(bus: BusId, kind: GenKind) -> Self {
        Generator {
            bus,
            kind,
            p_set: 0.0,
            q_set: 0.0,
            p_min: 0.0,
            p_max: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            v_set: 1.0,
            in_service: true,
            cost: GenCost::default(),
            soc_capacity: 0.0,
            soc_init: 0.0,
            efficiency: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("base MVA must be positive and finite, got {0}")]
    BaseMva(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("bus id must be positive")]
    ZeroBusId,
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("{what} refers to unknown bus {bus}")]
    UnknownBus { what: String, bus: BusId },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("bus {0}: v_min must be below v_max")]
    VoltageBounds(BusId),
    #[error("branch {0} connects a bus to itself")]
    SelfLoop(String),
    #[error("branch {0} has negative resistance")]
    NegativeResistance(String),
    #[error("in-service branch {0} has zero reactance")]
    ZeroReactance(String),
    #[error("negative thermal rating on branch {0}")]
    NegativeRate(String),
    #[error("generator {index} ({kind}): {detail}")]
    Generator {
        index: usize,
        kind: GenKind,
        detail: String,
    },
    #[error("unsupported feature: {0}")]
    Unsupported(String),
}

/// One field that differs between two cases, named by a path such as
/// `bus[5].p_demand` or `branch[7-8].in_service`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: String,
    pub left: String,
    pub right: String,
}

impl fmt::Display for FieldDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.field, self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CaseParts")]
pub struct GridCase {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
}

/// Unvalidated mirror of [`GridCase`] used for deserialization.
#[derive(Deserialize)]
struct CaseParts {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
}

impl TryFrom<CaseParts> for GridCase {
    type Error = ValidationError;

    fn try_from(p: CaseParts) -> Result<Self, Self::Error> {
        GridCase::new(p.name, p.base_mva, p.buses, p.branches, p.generators)
    }
}

impl GridCase {
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, ValidationError> {
        let case = GridCase {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_bus(&self) -> &Bus {
        // validate() guarantees exactly one
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Index of the first branch joining `a` and `b`, in either orientation.
    pub fn find_branch(&self, a: BusId, b: BusId) -> Option<usize> {
        self.branches.iter().position(|br| br.connects(a, b))
    }

    pub fn in_service_branch_count(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Voltage magnitude imposed at the slack bus: the setpoint of the first
    /// in-service slack unit, 1.0 p.u. when there is none.
    pub fn slack_voltage(&self) -> f64 {
        let slack = self.slack_bus().id;
        self.generators
            .iter()
            .find(|g| g.in_service && g.kind == GenKind::Slack && g.bus == slack)
            .map(|g| g.v_set)
            .unwrap_or(1.0)
    }

    pub fn total_demand(&self) -> (f64, f64) {
        self.buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.p_demand, q + b.q_demand))
    }

    pub(crate) fn with_parts(
        &self,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, ValidationError> {
        GridCase::new(
            self.name.clone(),
            self.base_mva,
            buses,
            branches,
            generators,
        )
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        GridCase {
            name: name.into(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(ValidationError::BaseMva(self.base_mva));
        }
        let mut ids = BTreeSet::new();
        let mut slack = 0;
        for bus in &self.buses {
            if bus.id == 0 {
                return Err(ValidationError::ZeroBusId);
            }
            if !ids.insert(bus.id) {
                return Err(ValidationError::DuplicateBus(bus.id));
            }
            for (label, v) in [
                ("p_demand", bus.p_demand),
                ("q_demand", bus.q_demand),
                ("v_min", bus.v_min),
                ("v_max", bus.v_max),
                ("base_kv", bus.base_kv),
            ] {
                if !v.is_finite() {
                    return Err(ValidationError::NonFinite(format!(
                        "bus {} {label}",
                        bus.id
                    )));
                }
            }
            // MATPOWER slack buses commonly carry Vmin = Vmax = 1.
            let bounds_ok = match bus.kind {
                BusKind::Slack => bus.v_min <= bus.v_max,
                BusKind::Pq => bus.v_min < bus.v_max,
            };
            if !bounds_ok {
                return Err(ValidationError::VoltageBounds(bus.id));
            }
            if bus.kind == BusKind::Slack {
                slack += 1;
            }
        }
        if slack != 1 {
            return Err(ValidationError::SlackCount(slack));
        }
        for br in &self.branches {
            let label = br.label();
            for bus in [br.from_bus, br.to_bus] {
                if !ids.contains(&bus) {
                    return Err(ValidationError::UnknownBus {
                        what: format!("branch {label}"),
                        bus,
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(ValidationError::SelfLoop(label));
            }
            for (field, v) in [("r", br.r), ("x", br.x), ("b", br.b), ("rate", br.rate)] {
                if !v.is_finite() {
                    return Err(ValidationError::NonFinite(format!(
                        "branch {label} {field}"
                    )));
                }
            }
            if br.r < 0.0 {
                return Err(ValidationError::NegativeResistance(label));
            }
            if br.in_service && br.x == 0.0 {
                return Err(ValidationError::ZeroReactance(label));
            }
            if br.rate < 0.0 {
                return Err(ValidationError::NegativeRate(label));
            }
        }
        for (index, g) in self.generators.iter().enumerate() {
            let fail = |detail: String| ValidationError::Generator {
                index,
                kind: g.kind,
                detail,
            };
            if !ids.contains(&g.bus) {
                return Err(ValidationError::UnknownBus {
                    what: format!("generator {index}"),
                    bus: g.bus,
                });
            }
            for (field, v) in [
                ("p_set", g.p_set),
                ("q_set", g.q_set),
                ("p_min", g.p_min),
                ("p_max", g.p_max),
                ("q_min", g.q_min),
                ("q_max", g.q_max),
                ("v_set", g.v_set),
                ("c2", g.cost.c2),
                ("c1", g.cost.c1),
                ("c0", g.cost.c0),
                ("soc_capacity", g.soc_capacity),
                ("soc_init", g.soc_init),
                ("efficiency", g.efficiency),
            ] {
                if !v.is_finite() {
                    return Err(ValidationError::NonFinite(format!(
                        "generator {index} {field}"
                    )));
                }
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(fail("limits are inverted".into()));
            }
            if g.in_service
                && !(g.p_min <= g.p_set
                    && g.p_set <= g.p_max
                    && g.q_min <= g.q_set
                    && g.q_set <= g.q_max)
            {
                return Err(fail("setpoint outside its limits".into()));
            }
            match g.kind {
                GenKind::Slack if g.bus != self.slack_bus_id_unchecked() => {
                    return Err(fail("slack unit must sit at the slack bus".into()));
                }
                GenKind::Svc if g.p_min != 0.0 || g.p_max != 0.0 => {
                    return Err(fail("svc must have p_min = p_max = 0".into()));
                }
                GenKind::Pv if g.p_min < 0.0 => {
                    return Err(fail("pv cannot absorb active power".into()));
                }
                GenKind::Ess => {
                    if !(g.soc_capacity >= 0.0 && g.soc_init >= 0.0 && g.soc_init <= g.soc_capacity)
                    {
                        return Err(fail("soc_init must lie in [0, soc_capacity]".into()));
                    }
                    if !(g.efficiency > 0.0 && g.efficiency <= 1.0) {
                        return Err(fail("efficiency must lie in (0, 1]".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn slack_bus_id_unchecked(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .unwrap_or(0)
    }

    /// Field-level differences: integer and boolean fields compare exactly,
    /// reals within [`REAL_RELATIVE_TOLERANCE`].
    pub fn diff(&self, other: &GridCase) -> Vec<FieldDiff> {
        let mut out = Vec::new();
        let mut real = |field: String, a: f64, b: f64| {
            if !reals_match(a, b) {
                out.push(FieldDiff {
                    field,
                    left: a.to_string(),
                    right: b.to_string(),
                });
            }
        };
        real("base_mva".into(), self.base_mva, other.base_mva);
        let mut exact = Vec::new();
        let mut check = |field: String, a: String, b: String| {
            if a != b {
                exact.push(FieldDiff {
                    field,
                    left: a,
                    right: b,
                });
            }
        };
        check(
            "buses.len".into(),
            self.buses.len().to_string(),
            other.buses.len().to_string(),
        );
        check(
            "branches.len".into(),
            self.branches.len().to_string(),
            other.branches.len().to_string(),
        );
        check(
            "generators.len".into(),
            self.generators.len().to_string(),
            other.generators.len().to_string(),
        );
        for (a, b) in self.buses.iter().zip(&other.buses) {
            let p = format!("bus[{}]", a.id);
            check(format!("{p}.id"), a.id.to_string(), b.id.to_string());
            check(
                format!("{p}.kind"),
                format!("{:?}", a.kind),
                format!("{:?}", b.kind),
            );
        }
        for (a, b) in self.branches.iter().zip(&other.branches) {
            let p = format!("branch[{}]", a.label());
            check(
                format!("{p}.from_bus"),
                a.from_bus.to_string(),
                b.from_bus.to_string(),
            );
            check(
                format!("{p}.to_bus"),
                a.to_bus.to_string(),
                b.to_bus.to_string(),
            );
            check(
                format!("{p}.in_service"),
                a.in_service.to_string(),
                b.in_service.to_string(),
            );
        }
        for (i, (a, b)) in self.generators.iter().zip(&other.generators).enumerate() {
            let p = format!("gen[{i}]");
            check(format!("{p}.bus"), a.bus.to_string(), b.bus.to_string());
            check(format!("{p}.kind"), a.kind.to_string(), b.kind.to_string());
            check(
                format!("{p}.in_service"),
                a.in_service.to_string(),
                b.in_service.to_string(),
            );
        }
        for (a, b) in self.buses.iter().zip(&other.buses) {
            let p = format!("bus[{}]", a.id);
            real(format!("{p}.p_demand"), a.p_demand, b.p_demand);
            real(format!("{p}.q_demand"), a.q_demand, b.q_demand);
            real(format!("{p}.v_min"), a.v_min, b.v_min);
            real(format!("{p}.v_max"), a.v_max, b.v_max);
            real(format!("{p}.base_kv"), a.base_kv, b.base_kv);
        }
        for (a, b) in self.branches.iter().zip(&other.branches) {
            let p = format!("branch[{}]", a.label());
            real(format!("{p}.r"), a.r, b.r);
            real(format!("{p}.x"), a.x, b.x);
            real(format!("{p}.b"), a.b, b.b);
            real(format!("{p}.rate"), a.rate, b.rate);
        }
        for (i, (a, b)) in self.generators.iter().zip(&other.generators).enumerate() {
            let p = format!("gen[{i}]");
            for (field, x, y) in [
                ("p_set", a.p_set, b.p_set),
                ("q_set", a.q_set, b.q_set),
                ("p_min", a.p_min, b.p_min),
                ("p_max", a.p_max, b.p_max),
                ("q_min", a.q_min, b.q_min),
                ("q_max", a.q_max, b.q_max),
                ("v_set", a.v_set, b.v_set),
                ("cost.c2", a.cost.c2, b.cost.c2),
                ("cost.c1", a.cost.c1, b.cost.c1),
                ("cost.c0", a.cost.c0, b.cost.c0),
                ("soc_capacity", a.soc_capacity, b.soc_capacity),
                ("soc_init", a.soc_init, b.soc_init),
                ("efficiency", a.efficiency, b.efficiency),
            ] {
                real(format!("{p}.{field}"), x, y);
            }
        }
        exact.extend(out);
        exact
    }

    /// Case equality used by verification: exact integers, relative 1e-9 reals.
    pub fn approx_eq(&self, other: &GridCase) -> bool {
        self.name == other.name && self.diff(other).is_empty()
    }
}

pub(crate) fn reals_match(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= REAL_RELATIVE_TOLERANCE * a.abs().max(b.abs())
}
