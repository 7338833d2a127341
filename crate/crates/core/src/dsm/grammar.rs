//! Deterministic grammar mapping adjustment instructions to
//! [`AdjustmentRequest`]s, and the canonical phrasing used to render them.
//!
//! Supported phrasings (case-insensitive, optional leading "please" and
//! trailing period):
//!
//! - `increase|raise|decrease|reduce|lower the load|demand at|of|on bus N by X %|percent|MW|kW`
//! - `scale|multiply the load at bus N by [a factor of] F`
//! - `open|close|disconnect|connect|switch off|switch on [the] branch|line A-B` (also
//!   `between bus A and bus B`, or `branch K` for the K-th table row)
//! - `install|add|connect|build|place a X MW|kW PV|photovoltaic|solar [unit] at bus N`
//! - `install a PV [unit] at bus N with [a] capacity|rating [of] X MW|kW`
//! - `reconfigure the network by <switch clause> and <switch clause> ...`

use std::sync::OnceLock;

use adn_grid::{AdjustmentRequest, BranchRef, BranchSwitch, LoadChange};
use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instruction is outside the supported grammar: {0}")]
pub struct UnparseableInstruction(pub String);

const NUM: &str = r"(\d+(?:\.\d+)?)";

struct Patterns {
    load: Regex,
    scale: Regex,
    switch_pair: Regex,
    switch_index: Regex,
    pv_size_first: Regex,
    pv_size_last: Regex,
    reconfigure: Regex,
    clause_split: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let verb_switch = r"(open(?:ing)?|close|closing|disconnect(?:ing)?|connect(?:ing)?|switch(?:ing)?\s+off|switch(?:ing)?\s+on)";
        let branch = r"(?:the\s+)?(?:branch|line|switch)";
        let pv = r"(?:pv|photovoltaic|solar)(?:\s+(?:unit|system|array|plant|generator))?";
        let re = |s: String| Regex::new(&format!("(?i)^{s}$")).unwrap();
        Patterns {
            load: re(format!(
                r"(increase|raise|decrease|reduce|lower)\s+(?:the\s+)?(?:load|demand)\s+(?:at|of|on)\s+bus\s+(\d+)\s+by\s+{NUM}\s*(%|percent|mw|kw)"
            )),
            scale: re(format!(
                r"(?:scale|multiply)\s+(?:the\s+)?(?:load|demand)\s+(?:at|of|on)\s+bus\s+(\d+)\s+by\s+(?:a\s+factor\s+of\s+)?{NUM}"
            )),
            switch_pair: re(format!(
                r"{verb_switch}\s+{branch}\s+(?:between\s+)?(?:bus\s+)?(\d+)\s*(?:-|and|to)\s*(?:bus\s+)?(\d+)"
            )),
            switch_index: re(format!(
                r"{verb_switch}\s+{branch}\s+(?:number\s+|no\.\s*|#)?(\d+)"
            )),
            pv_size_first: re(format!(
                r"(?:install|add|connect|build|place)\s+(?:an?\s+)?(?:new\s+)?{NUM}\s*(mw|kw)\s+{pv}\s+(?:at|on|to)\s+bus\s+(\d+)"
            )),
            pv_size_last: re(format!(
                r"(?:install|add|connect|build|place)\s+(?:an?\s+)?(?:new\s+)?{pv}\s+(?:at|on|to)\s+bus\s+(\d+)\s+with\s+(?:an?\s+)?(?:capacity|rating)\s+(?:of\s+)?{NUM}\s*(mw|kw)"
            )),
            reconfigure: re(
                r"reconfigure\s+(?:the\s+)?(?:network|feeder|grid|topology)\s+by\s+(.+)".to_string(),
            ),
            clause_split: Regex::new(r"(?i)\s*(?:,\s*and\s+|,\s*|;\s*|\s+and\s+)").unwrap(),
        }
    })
}

fn normalize(text: &str) -> String {
    let t = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let t = t.trim_end_matches(['.', '!']).trim();
    let lower = t.to_lowercase();
    match lower.strip_prefix("please ") {
        Some(_) => t[7..].to_string(),
        None => t.to_string(),
    }
}

fn mw(value: &str, unit: &str) -> f64 {
    let v: f64 = value.parse().unwrap();
    if unit.eq_ignore_ascii_case("kw") {
        v / 1000.0
    } else {
        v
    }
}

fn switch_state(verb: &str) -> bool {
    let v = verb.to_lowercase();
    !(v.starts_with("open") || v.starts_with("disconnect") || v.ends_with("off"))
}

fn parse_switch(clause: &str) -> Option<BranchSwitch> {
    let p = patterns();
    if let Some(c) = p.switch_pair.captures(clause) {
        return Some(BranchSwitch {
            branch: BranchRef::Endpoints(c[2].parse().ok()?, c[3].parse().ok()?),
            in_service: switch_state(&c[1]),
        });
    }
    let c = p.switch_index.captures(clause)?;
    Some(BranchSwitch {
        branch: BranchRef::Index(c[2].parse().ok()?),
        in_service: switch_state(&c[1]),
    })
}

pub fn parse_instruction(text: &str) -> Result<AdjustmentRequest, UnparseableInstruction> {
    let t = normalize(text);
    let p = patterns();
    let fail = || UnparseableInstruction(text.to_string());
    if let Some(c) = p.load.captures(&t) {
        let bus = c[2].parse().map_err(|_| fail())?;
        let up = matches!(c[1].to_lowercase().as_str(), "increase" | "raise");
        let sign = if up { 1.0 } else { -1.0 };
        let amount: f64 = c[3].parse().map_err(|_| fail())?;
        let change = match c[4].to_lowercase().as_str() {
            "%" | "percent" => LoadChange::Scale(1.0 + sign * amount / 100.0),
            unit => LoadChange::DeltaMw(sign * mw(&c[3], unit)),
        };
        return Ok(AdjustmentRequest::LoadVariation { bus, change });
    }
    if let Some(c) = p.scale.captures(&t) {
        return Ok(AdjustmentRequest::LoadVariation {
            bus: c[1].parse().map_err(|_| fail())?,
            change: LoadChange::Scale(c[2].parse().map_err(|_| fail())?),
        });
    }
    if let Some(c) = p.pv_size_first.captures(&t) {
        return Ok(AdjustmentRequest::NewPv {
            bus: c[3].parse().map_err(|_| fail())?,
            capacity_mw: mw(&c[1], &c[2]),
        });
    }
    if let Some(c) = p.pv_size_last.captures(&t) {
        return Ok(AdjustmentRequest::NewPv {
            bus: c[1].parse().map_err(|_| fail())?,
            capacity_mw: mw(&c[2], &c[3]),
        });
    }
    if let Some(c) = p.reconfigure.captures(&t) {
        let switches = p
            .clause_split
            .split(c[1].trim())
            .map(parse_switch)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(fail)?;
        if switches.is_empty() {
            return Err(fail());
        }
        return Ok(AdjustmentRequest::TopologyReconfiguration { switches });
    }
    if let Some(sw) = parse_switch(&t) {
        return Ok(AdjustmentRequest::EquipmentSwitching {
            branch: sw.branch,
            in_service: sw.in_service,
        });
    }
    Err(fail())
}

fn branch_text(b: &BranchRef) -> String {
    match b {
        BranchRef::Endpoints(a, b) => format!("branch {a}-{b}"),
        BranchRef::Index(i) => format!("branch {i}"),
    }
}

fn switch_text(sw: &BranchSwitch, gerund: bool) -> String {
    let verb = match (sw.in_service, gerund) {
        (true, false) => "close",
        (false, false) => "open",
        (true, true) => "closing",
        (false, true) => "opening",
    };
    format!("{verb} {}", branch_text(&sw.branch))
}

/// Formats a number with at most `digits` decimals and no trailing zeros.
pub fn trim_number(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Canonical instruction text for a request. Scale factors render as a
/// percent change rounded to 0.1%, so parsing the rendering may differ from
/// the original factor by that rounding.
pub fn render_instruction(req: &AdjustmentRequest) -> String {
    match req {
        AdjustmentRequest::LoadVariation { bus, change } => match *change {
            LoadChange::Scale(f) => {
                let pct = (f - 1.0) * 100.0;
                let verb = if pct >= 0.0 { "increase" } else { "decrease" };
                format!("{verb} the load at bus {bus} by {}%", trim_number(pct.abs(), 1))
            }
            LoadChange::DeltaMw(d) => {
                let verb = if d >= 0.0 { "increase" } else { "decrease" };
                format!("{verb} the load at bus {bus} by {} MW", trim_number(d.abs(), 4))
            }
        },
        AdjustmentRequest::EquipmentSwitching { branch, in_service } => switch_text(
            &BranchSwitch {
                branch: *branch,
                in_service: *in_service,
            },
            false,
        ),
        AdjustmentRequest::NewPv { bus, capacity_mw } => {
            format!("install a {} MW PV at bus {bus}", trim_number(*capacity_mw, 4))
        }
        AdjustmentRequest::TopologyReconfiguration { switches } => {
            let clauses: Vec<String> = switches.iter().map(|s| switch_text(s, true)).collect();
            format!("reconfigure the network by {}", clauses.join(" and "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrasings() {
        let cases = [
            ("Please increase the load at bus 5 by 20%.", "increase the load at bus 5 by 20%"),
            ("raise the demand of bus 5 by 20 percent", "increase the load at bus 5 by 20%"),
            ("lower the load at bus 5 by 30 kW", "decrease the load at bus 5 by 0.03 MW"),
            ("disconnect the line between bus 7 and bus 8", "open branch 7-8"),
            ("switch on branch 33", "close branch 33"),
            ("add a new 500 kW solar array at bus 12", "install a 0.5 MW PV at bus 12"),
            ("install a PV unit at bus 12 with a capacity of 0.5 MW", "install a 0.5 MW PV at bus 12"),
            (
                "reconfigure the feeder by closing branch 8-21, and opening the line 7-8",
                "reconfigure the network by closing branch 8-21 and opening branch 7-8",
            ),
        ];
        for (text, canon) in cases {
            let req = parse_instruction(text).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(render_instruction(&req), canon, "{text}");
            assert_eq!(parse_instruction(canon).unwrap(), req);
        }
    }

    #[test]
    fn out_of_grammar() {
        for t in ["make the grid nicer", "increase the load", "open branch", ""] {
            assert!(parse_instruction(t).is_err(), "{t}");
        }
    }
}
