//! DSM manifests: what each model exposes to the Planner and the command
//! schema its Translator must honour.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DsmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    District,
    Date,
    /// Record holding a network model, or a district name.
    Case,
    /// Record holding a PV/load profile.
    Profile,
    /// Any prior record.
    Record,
    Integer,
    Number,
    Text,
    Objective,
    Statistic,
}

impl ArgType {
    pub fn as_str(self) -> &'static str {
        match self {
            ArgType::District => "district",
            ArgType::Date => "date",
            ArgType::Case => "case",
            ArgType::Profile => "profile",
            ArgType::Record => "record",
            ArgType::Integer => "integer",
            ArgType::Number => "number",
            ArgType::Text => "text",
            ArgType::Objective => "objective",
            ArgType::Statistic => "statistic",
        }
    }

    /// Types whose value is a reference to a prior record.
    pub fn takes_reference(self) -> bool {
        matches!(self, ArgType::Case | ArgType::Profile | ArgType::Record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ArgType,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub args: Vec<ArgSpec>,
}

impl CommandSpec {
    pub fn arg(&self, name: &str) -> Option<&ArgSpec> {
        self.args.iter().find(|a| a.name == name)
    }

    /// One-line signature such as `simulate(case: case, profile?: profile)`.
    pub fn signature(&self) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                format!(
                    "{}{}: {}",
                    a.name,
                    if a.required { "" } else { "?" },
                    a.ty.as_str()
                )
            })
            .collect();
        format!("{}({})", self.name, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmManifest {
    pub name: String,
    pub functionality: String,
    #[serde(default)]
    pub applicability: String,
    pub commands: Vec<CommandSpec>,
}

impl DsmManifest {
    pub fn parse(text: &str) -> Result<Self, DsmError> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| DsmError::BadManifest(e.to_string()))?;
        if m.commands.is_empty() {
            return Err(DsmError::BadManifest(format!("{}: empty command schema", m.name)));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, DsmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DsmError::BadManifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn command(&self, name: &str) -> Option<&CommandSpec> {
        self.commands.iter().find(|c| c.name == name)
    }

    /// Text block describing this DSM in the Planner prompt.
    pub fn describe(&self) -> String {
        let mut out = format!("### {}\n{}\n", self.name, self.functionality);
        if !self.applicability.is_empty() {
            out.push_str(&format!("Applicable: {}\n", self.applicability));
        }
        for c in &self.commands {
            out.push_str(&format!("- {}\n", c.signature()));
        }
        out
    }
}

pub const STANDARD_MANIFESTS: [&str; 6] = [
    include_str!("../../../../data/dsms/data_tool.json"),
    include_str!("../../../../data/dsms/model_tool.json"),
    include_str!("../../../../data/dsms/simulation_tool.json"),
    include_str!("../../../../data/dsms/optimization_tool.json"),
    include_str!("../../../../data/dsms/result_organization_tool.json"),
    include_str!("../../../../data/dsms/model_adjustment.json"),
];
