//! Reader and writer for the MATPOWER case subset used by the tools.
//!
//! Accepted statements: `function mpc = NAME`, `mpc.version = '2';`,
//! `mpc.baseMVA = N;` and the `bus`, `gen`, `branch` and `gencost` matrices.
//! Other `mpc.FIELD = [...]` or `{...}` blocks are skipped. Anything else
//! (MATLAB code, unit conversions) is a syntax error: values are taken
//! verbatim from the tables, so cases must already be in per-unit / MW.
//!
//! Generator rows carry 10 or 21 standard columns, optionally followed by
//! four extension columns `kind soc_capacity soc_init efficiency` (giving
//! 14 or 25 columns). The writer always emits the 14-column form.

use std::fmt::Write as _;

use thiserror::Error;

use crate::case::{
    Branch, Bus, BusId, BusKind, GenCost, GenKind, Generator, GridCase, ValidationError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid case: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Sym(char),
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, CaseError> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            if c == '%' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let starts_number = c.is_ascii_digit()
                || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
                || ((c == '-' || c == '+')
                    && chars
                        .get(i + 1)
                        .is_some_and(|d| d.is_ascii_digit() || *d == '.'));
            if starts_number {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| syntax(line, column, format!("malformed number `{s}`")))?;
                out.push(Token {
                    tok: Tok::Number(v),
                    line,
                    column,
                });
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Ident(s),
                    line,
                    column,
                });
                continue;
            }
            if c == '\'' || c == '"' {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| syntax(line, column, "unterminated string"))?;
                let s: String = chars[i + 1..i + 1 + end].iter().collect();
                out.push(Token {
                    tok: Tok::Str(s),
                    line,
                    column,
                });
                i += end + 2;
                continue;
            }
            if "=[]{};.,()".contains(c) {
                out.push(Token {
                    tok: Tok::Sym(c),
                    line,
                    column,
                });
                i += 1;
                continue;
            }
            return Err(syntax(line, column, format!("unexpected character `{c}`")));
        }
        out.push(Token {
            tok: Tok::Newline,
            line,
            column: chars.len() + 1,
        });
    }
    Ok(out)
}

struct Matrix {
    rows: Vec<Vec<f64>>,
    /// Source line of each row's first value.
    row_lines: Vec<usize>,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eof_error(&self) -> CaseError {
        let (line, column) = self
            .toks
            .last()
            .map(|t| (t.line, t.column))
            .unwrap_or((1, 1));
        syntax(line, column, "unexpected end of input")
    }

    fn expect_sym(&mut self, c: char) -> Result<Token, CaseError> {
        match self.next() {
            Some(t) if t.tok == Tok::Sym(c) => Ok(t),
            Some(t) => Err(syntax(t.line, t.column, format!("expected `{c}`"))),
            None => Err(self.eof_error()),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Token), CaseError> {
        match self.next() {
            Some(t) => match &t.tok {
                Tok::Ident(s) => Ok((s.clone(), t.clone())),
                _ => Err(syntax(t.line, t.column, "expected an identifier")),
            },
            None => Err(self.eof_error()),
        }
    }

    fn matrix(&mut self, open: &Token, close: char) -> Result<Matrix, CaseError> {
        let mut rows = Vec::new();
        let mut row_lines = Vec::new();
        let mut row = Vec::new();
        loop {
            let t = self.next().ok_or_else(|| self.eof_error())?;
            if matches!(t.tok, Tok::Number(_) | Tok::Ident(_)) && row.is_empty() {
                row_lines.push(t.line);
            }
            match t.tok {
                Tok::Number(v) => row.push(v),
                Tok::Ident(ref s) if close == ']' => {
                    let v = match s.to_ascii_lowercase().as_str() {
                        "inf" => f64::INFINITY,
                        "nan" => f64::NAN,
                        _ => {
                            return Err(syntax(
                                t.line,
                                t.column,
                                format!("unexpected `{s}` in matrix"),
                            ))
                        }
                    };
                    row.push(v);
                }
                Tok::Sym(';') | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::Sym(',') => {}
                Tok::Sym(c) if c == close => {
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(Matrix {
                        rows,
                        row_lines,
                        line: open.line,
                        column: open.column,
                    });
                }
                _ if close == '}' => {}
                _ => return Err(syntax(t.line, t.column, "unexpected token in matrix")),
            }
        }
    }
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<(f64, usize, usize)>,
    bus: Option<Matrix>,
    gen: Option<Matrix>,
    branch: Option<Matrix>,
    gencost: Option<Matrix>,
}

/// Parses MATPOWER case text into a validated [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut raw = RawCase::default();
    while let Some(t) = p.next() {
        match &t.tok {
            Tok::Newline | Tok::Sym(';') => continue,
            Tok::Ident(kw) if kw == "function" => {
                let (mpc, at) = p.expect_ident()?;
                if mpc != "mpc" {
                    return Err(syntax(at.line, at.column, "expected `mpc`"));
                }
                p.expect_sym('=')?;
                let (name, _) = p.expect_ident()?;
                raw.name = Some(name);
            }
            Tok::Ident(kw) if kw == "mpc" => {
                p.expect_sym('.')?;
                let (field, at) = p.expect_ident()?;
                p.expect_sym('=')?;
                let value = p.next().ok_or_else(|| p.eof_error())?;
                match (&value.tok, field.as_str()) {
                    (Tok::Number(v), "baseMVA") => raw.base_mva = Some((*v, at.line, at.column)),
                    (Tok::Str(_), "version") => {}
                    (Tok::Sym('['), name) => {
                        let m = p.matrix(&value, ']')?;
                        let slot = match name {
                            "bus" => &mut raw.bus,
                            "gen" => &mut raw.gen,
                            "branch" => &mut raw.branch,
                            "gencost" => &mut raw.gencost,
                            _ => continue,
                        };
                        if slot.is_some() {
                            return Err(syntax(
                                at.line,
                                at.column,
                                format!("duplicate `mpc.{name}`"),
                            ));
                        }
                        *slot = Some(m);
                    }
                    (Tok::Sym('{'), _) => {
                        p.matrix(&value, '}')?;
                    }
                    _ => {
                        return Err(syntax(
                            value.line,
                            value.column,
                            format!("unsupported value for `mpc.{field}`"),
                        ))
                    }
                }
            }
            _ => {
                return Err(syntax(
                    t.line,
                    t.column,
                    "unsupported statement (only mpc.* assignments are accepted)",
                ))
            }
        }
        if let Some(t) = p.peek() {
            if !matches!(t.tok, Tok::Newline | Tok::Sym(';')) {
                return Err(syntax(t.line, t.column, "expected end of statement"));
            }
        }
    }
    build(raw, text)
}

fn missing(text: &str, what: &str) -> CaseError {
    syntax(
        text.lines().count().max(1),
        1,
        format!("missing `mpc.{what}`"),
    )
}

fn int_field(v: f64, m: &Matrix, row: usize, what: &str) -> Result<u32, CaseError> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(syntax(
            m.row_lines[row],
            1,
            format!("{what} must be a non-negative integer, got {v}"),
        ));
    }
    Ok(v as u32)
}

fn status_field(v: f64, m: &Matrix, row: usize) -> Result<bool, CaseError> {
    match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(syntax(
            m.row_lines[row],
            1,
            format!("status must be 0 or 1, got {v}"),
        )),
    }
}

fn build(raw: RawCase, text: &str) -> Result<GridCase, CaseError> {
    let name = raw.name.unwrap_or_else(|| "case".to_string());
    let (base_mva, _, _) = raw.base_mva.ok_or_else(|| missing(text, "baseMVA"))?;
    let bus_m = raw.bus.ok_or_else(|| missing(text, "bus"))?;
    let gen_m = raw.gen.ok_or_else(|| missing(text, "gen"))?;
    let branch_m = raw.branch.ok_or_else(|| missing(text, "branch"))?;

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for (i, r) in bus_m.rows.iter().enumerate() {
        if r.len() < 13 {
            return Err(syntax(
                bus_m.row_lines[i],
                1,
                "bus rows need at least 13 columns",
            ));
        }
        let id = int_field(r[0], &bus_m, i, "bus id")?;
        let kind = match r[1] {
            1.0 => BusKind::Pq,
            3.0 => BusKind::Slack,
            2.0 => {
                return Err(ValidationError::Unsupported(format!(
                    "bus {id} is a voltage-controlled (type 2) bus"
                ))
                .into())
            }
            t => return Err(ValidationError::Unsupported(format!("bus {id} has type {t}")).into()),
        };
        if r[4] != 0.0 || r[5] != 0.0 {
            return Err(
                ValidationError::Unsupported(format!("bus {id} has a shunt element")).into(),
            );
        }
        buses.push(Bus {
            id,
            kind,
            p_demand: r[2],
            q_demand: r[3],
            base_kv: r[9],
            v_max: r[11],
            v_min: r[12],
        });
    }
    let slack_bus: Option<BusId> = buses
        .iter()
        .find(|b| b.kind == BusKind::Slack)
        .map(|b| b.id);

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for (i, r) in branch_m.rows.iter().enumerate() {
        if r.len() < 11 {
            return Err(syntax(
                branch_m.row_lines[i],
                1,
                "branch rows need at least 11 columns",
            ));
        }
        let from_bus = int_field(r[0], &branch_m, i, "from bus")?;
        let to_bus = int_field(r[1], &branch_m, i, "to bus")?;
        if !(r[8] == 0.0 || r[8] == 1.0) || r[9] != 0.0 {
            return Err(ValidationError::Unsupported(format!(
                "branch {from_bus}-{to_bus} is a transformer with tap or shift"
            ))
            .into());
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            r: r[2],
            x: r[3],
            b: r[4],
            rate: r[5],
            in_service: status_field(r[10], &branch_m, i)?,
        });
    }

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for (i, r) in gen_m.rows.iter().enumerate() {
        let extended = match r.len() {
            10 | 21 => None,
            14 | 25 => Some(&r[r.len() - 4..]),
            n => {
                return Err(syntax(
                    gen_m.row_lines[i],
                    1,
                    format!("generator rows must have 10, 14, 21 or 25 columns, got {n}"),
                ))
            }
        };
        let bus = int_field(r[0], &gen_m, i, "generator bus")?;
        let (p_min, p_max) = (r[9], r[8]);
        let kind = match extended {
            Some(ext) => {
                let code = int_field(ext[0], &gen_m, i, "generator kind")?;
                u8::try_from(code)
                    .ok()
                    .and_then(GenKind::from_code)
                    .ok_or_else(|| {
                        syntax(
                            gen_m.row_lines[i],
                            1,
                            format!("unknown generator kind code {code}"),
                        )
                    })?
            }
            None if Some(bus) == slack_bus => GenKind::Slack,
            None if p_min == 0.0 && p_max == 0.0 => GenKind::Svc,
            None => GenKind::Mgt,
        };
        let (soc_capacity, soc_init, efficiency) = extended
            .map(|e| (e[1], e[2], e[3]))
            .unwrap_or((0.0, 0.0, 1.0));
        generators.push(Generator {
            bus,
            kind,
            p_set: r[1],
            q_set: r[2],
            q_max: r[3],
            q_min: r[4],
            v_set: r[5],
            in_service: status_field(r[7], &gen_m, i)?,
            p_max,
            p_min,
            cost: GenCost::default(),
            soc_capacity,
            soc_init,
            efficiency,
        });
    }

    if let Some(cost_m) = raw.gencost {
        if cost_m.rows.len() != generators.len() {
            return Err(syntax(
                cost_m.line,
                cost_m.column,
                format!(
                    "gencost has {} rows for {} generators",
                    cost_m.rows.len(),
                    generators.len()
                ),
            ));
        }
        for (i, r) in cost_m.rows.iter().enumerate() {
            let line = cost_m.row_lines[i];
            if r.len() < 4 || r[0] != 2.0 {
                return Err(syntax(
                    line,
                    1,
                    "only polynomial (model 2) costs are supported",
                ));
            }
            let n = int_field(r[3], &cost_m, i, "cost term count")? as usize;
            if n > 3 {
                return Err(syntax(
                    line,
                    1,
                    "cost polynomials above degree 2 are not supported",
                ));
            }
            if r.len() < 4 + n {
                return Err(syntax(line, 1, "gencost row shorter than its term count"));
            }
            let mut coeffs = [0.0; 3];
            coeffs[3 - n..].copy_from_slice(&r[4..4 + n]);
            generators[i].cost = GenCost {
                c2: coeffs[0],
                c1: coeffs[1],
                c0: coeffs[2],
            };
        }
    }

    Ok(GridCase::new(name, base_mva, buses, branches, generators)?)
}

/// Shortest decimal that parses back to the identical `f64`.
fn num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Writes the case in the canonical table layout; `parse_case` of the
/// output reproduces every field bit-for-bit.
pub fn serialize_case(case: &GridCase) -> String {
    let mut s = String::new();
    let base = case.base_mva();
    let _ = writeln!(s, "function mpc = {}", case.name());
    s.push_str("\nmpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {};", num(base));

    s.push_str("\n%% bus data\n");
    s.push_str("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    s.push_str("mpc.bus = [\n");
    for b in case.buses() {
        let kind = match b.kind {
            BusKind::Slack => 3,
            BusKind::Pq => 1,
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t1\t0\t{}\t1\t{}\t{};",
            b.id,
            kind,
            num(b.p_demand),
            num(b.q_demand),
            num(b.base_kv),
            num(b.v_max),
            num(b.v_min)
        );
    }
    s.push_str("];\n");

    s.push_str("\n%% generator data\n");
    s.push_str(
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tkind\tsoc_cap\tsoc_init\teff\n",
    );
    s.push_str("mpc.gen = [\n");
    for g in case.generators() {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus,
            num(g.p_set),
            num(g.q_set),
            num(g.q_max),
            num(g.q_min),
            num(g.v_set),
            num(base),
            u8::from(g.in_service),
            num(g.p_max),
            num(g.p_min),
            g.kind.code(),
            num(g.soc_capacity),
            num(g.soc_init),
            num(g.efficiency)
        );
    }
    s.push_str("];\n");

    s.push_str("\n%% branch data\n");
    s.push_str(
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n",
    );
    s.push_str("mpc.branch = [\n");
    for br in case.branches() {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            num(br.r),
            num(br.x),
            num(br.b),
            num(br.rate),
            u8::from(br.in_service)
        );
    }
    s.push_str("];\n");

    s.push_str("\n%% generator cost data\n");
    s.push_str("%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n");
    s.push_str("mpc.gencost = [\n");
    for g in case.generators() {
        let _ = writeln!(
            s,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            num(g.cost.c2),
            num(g.cost.c1),
            num(g.cost.c0)
        );
    }
    s.push_str("];\n");
    s
}
