//! Reader for version-2 matrix-style case files (`mpc.bus`, `mpc.gen`,
//! `mpc.branch` tables).
//!
//! Honored columns: bus 1–13, gen 1–8, branch 1–13. Extra columns and
//! unknown tables are skipped with a warning. A zero base kV is replaced by
//! 1.0 so the per-bus invariant holds.

use std::collections::BTreeSet;

use log::warn;

use super::{Branch, Bus, BusKind, Generator, Network, Zone};
use crate::error::{Error, Result};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 13;
const BRANCH_MIN_COLS: usize = 11;

struct Row {
    line: usize,
    values: Vec<f64>,
}

struct Table {
    name: String,
    line: usize,
    rows: Vec<Row>,
}

pub fn parse_standard_case(text: &str) -> Result<Network> {
    let (net, warnings) = parse_standard_case_with_warnings(text)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(net)
}

/// Parse and return the non-fatal notes alongside the network.
pub fn parse_standard_case_with_warnings(text: &str) -> Result<(Network, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut name = String::from("case");
    let mut base_mva = None;
    let mut version = None;
    let mut tables: Vec<Table> = Vec::new();

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, n)) = rest.split_once('=') {
                name = n.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(syntax(lineno, format!("unexpected statement `{line}`")));
        };
        let key = lhs.trim();
        let Some(field) = key.strip_prefix("mpc.") else {
            return Err(syntax(lineno, format!("expected `mpc.<field>`, found `{key}`")));
        };
        let rhs = rhs.trim();
        if rhs.starts_with('[') {
            let (rows, next) = read_matrix(&lines, i - 1, rhs, lineno)?;
            i = next;
            tables.push(Table {
                name: field.to_string(),
                line: lineno,
                rows,
            });
        } else if rhs.starts_with('{') {
            // cell arrays (bus names etc.) are skipped
            let mut depth_line = rhs.to_string();
            while !depth_line.contains('}') {
                if i >= lines.len() {
                    return Err(syntax(lineno, "unterminated cell array".into()));
                }
                depth_line = strip_comment(lines[i]).to_string();
                i += 1;
            }
            warnings.push(format!("line {lineno}: ignoring `mpc.{field}`"));
        } else {
            let value = rhs.trim_end_matches(';').trim();
            match field {
                "baseMVA" => {
                    base_mva = Some(parse_number(value).ok_or_else(|| {
                        syntax(lineno, format!("invalid baseMVA `{value}`"))
                    })?)
                }
                "version" => version = Some(value.trim_matches(|c| c == '\'' || c == '"').to_string()),
                _ => warnings.push(format!("line {lineno}: ignoring `mpc.{field}`")),
            }
        }
    }

    match version.as_deref() {
        Some("2") => {}
        Some(v) => return Err(syntax(1, format!("unsupported case format version `{v}`"))),
        None => warnings.push("no mpc.version given; assuming version 2".into()),
    }
    let mva_base = base_mva.ok_or_else(|| syntax(lines.len(), "missing mpc.baseMVA".into()))?;

    let take = |tables: &[Table], name: &str| -> Result<usize> {
        tables
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| syntax(lines.len(), format!("missing mpc.{name} table")))
    };
    let bus_t = &tables[take(&tables, "bus")?];
    let gen_t = &tables[take(&tables, "gen")?];
    let branch_t = &tables[take(&tables, "branch")?];
    for t in &tables {
        if !matches!(t.name.as_str(), "bus" | "gen" | "branch" | "gencost") {
            warnings.push(format!("line {}: ignoring table `mpc.{}`", t.line, t.name));
        }
    }

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    let mut zero_kv = 0usize;
    let mut wide = false;
    for row in &bus_t.rows {
        let v = &row.values;
        check_width(row, BUS_COLS, "bus")?;
        wide |= v.len() > BUS_COLS;
        let id = bus_id(v[0], row.line)?;
        let kind = match v[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => {
                return Err(syntax(
                    row.line,
                    format!("bus {id} is typed isolated (4), which is not supported"),
                ))
            }
            t => return Err(syntax(row.line, format!("bus {id} has unknown type {t}"))),
        };
        let mut base_kv = v[9];
        if base_kv <= 0.0 {
            base_kv = 1.0;
            zero_kv += 1;
        }
        let zone = if v[10] >= 1.0 { v[10] as u32 } else { 1 };
        buses.push(Bus {
            id,
            kind,
            v_mag: v[7],
            v_ang: v[8].to_radians(),
            base_kv,
            zone,
            p_load: v[2],
            q_load: v[3],
            g_shunt: v[4] / mva_base,
            b_shunt: v[5] / mva_base,
            v_min: v[12],
            v_max: v[11],
        });
    }
    if wide {
        warnings.push(format!("bus table: columns beyond {BUS_COLS} ignored"));
    }
    if zero_kv > 0 {
        warnings.push(format!("{zero_kv} bus(es) with zero base kV set to 1.0"));
    }

    let mut generators = Vec::with_capacity(gen_t.rows.len());
    wide = false;
    for row in &gen_t.rows {
        check_width(row, GEN_COLS, "gen")?;
        let v = &row.values;
        wide |= v.len() > GEN_COLS;
        generators.push(Generator {
            bus: bus_id(v[0], row.line)?,
            p_set: v[1],
            v_set: v[5],
            q_min: v[4],
            q_max: v[3],
            in_service: v[7] > 0.0,
            fictitious: false,
        });
    }
    if wide {
        warnings.push(format!("gen table: columns beyond {GEN_COLS} ignored"));
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    wide = false;
    for row in &branch_t.rows {
        check_width(row, BRANCH_MIN_COLS, "branch")?;
        let v = &row.values;
        wide |= v.len() > BRANCH_COLS;
        branches.push(Branch {
            from_bus: bus_id(v[0], row.line)?,
            to_bus: bus_id(v[1], row.line)?,
            r: v[2],
            x: v[3],
            b: v[4],
            rating: v[5],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
        });
    }
    if wide {
        warnings.push(format!("branch table: columns beyond {BRANCH_COLS} ignored"));
    }

    // a pv bus with no in-service unit behaves as pq
    for b in buses.iter_mut().filter(|b| b.kind == BusKind::Pv) {
        if !generators.iter().any(|g| g.in_service && g.bus == b.id) {
            warnings.push(format!("bus {} is typed pv without an in-service generator; treated as pq", b.id));
            b.kind = BusKind::Pq;
        }
    }

    let zone_ids: BTreeSet<u32> = buses.iter().map(|b| b.zone).collect();
    let zones = zone_ids
        .into_iter()
        .map(|id| Zone {
            id,
            label: format!("zone {id}"),
        })
        .collect();

    let net = Network {
        name,
        mva_base,
        buses,
        generators,
        branches,
        hvdc_links: Vec::new(),
        zones,
    };
    net.ensure_valid()?;
    Ok((net, warnings))
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn syntax(line: usize, message: String) -> Error {
    Error::Syntax { line, message }
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

fn bus_id(v: f64, line: usize) -> Result<u32> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(syntax(line, format!("`{v}` is not a valid bus number")))
    }
}

fn check_width(row: &Row, min: usize, table: &str) -> Result<()> {
    if row.values.len() < min {
        return Err(syntax(
            row.line,
            format!(
                "{table} row has {} columns, expected at least {min}",
                row.values.len()
            ),
        ));
    }
    Ok(())
}

/// Read a `[ ... ];` matrix starting at `start` whose first line content after
/// `=` is `first`. Returns the rows and the index of the next unread line.
fn read_matrix(
    lines: &[&str],
    start: usize,
    first: &str,
    first_lineno: usize,
) -> Result<(Vec<Row>, usize)> {
    let mut rows = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut current_line = first_lineno;
    let mut idx = start;
    let mut text = first.trim_start_matches('[').to_string();
    loop {
        let lineno = idx + 1;
        let (body, closed) = match text.find(']') {
            Some(p) => (&text[..p], true),
            None => (text.as_str(), false),
        };
        for (k, segment) in body.split(';').enumerate() {
            if k > 0 && !current.is_empty() {
                rows.push(Row {
                    line: current_line,
                    values: std::mem::take(&mut current),
                });
            }
            for tok in segment
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
            {
                if tok == "..." {
                    continue;
                }
                let v = parse_number(tok)
                    .ok_or_else(|| syntax(lineno, format!("invalid number `{tok}`")))?;
                if current.is_empty() {
                    current_line = lineno;
                }
                current.push(v);
            }
        }
        // a newline also terminates a row unless continued with `...`
        if !current.is_empty() && !body.trim_end().ends_with("...") {
            rows.push(Row {
                line: current_line,
                values: std::mem::take(&mut current),
            });
        }
        idx += 1;
        if closed {
            return Ok((rows, idx));
        }
        if idx >= lines.len() {
            return Err(syntax(first_lineno, "unterminated matrix".into()));
        }
        text = strip_comment(lines[idx]).to_string();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";

    #[test]
    fn minimal_case() {
        let net = parse_standard_case(TWO_BUS).unwrap();
        assert_eq!(net.name, "two");
        assert_eq!(net.buses.len(), 2);
        assert_eq!(net.branches.len(), 1);
        assert_eq!(net.generators.len(), 1);
        assert_eq!(net.buses[1].p_load, 50.0);
        assert_eq!(net.branches[0].tap, 1.0);
        assert_eq!(net.zones.len(), 1);
    }

    #[test]
    fn undeclared_bus_is_named() {
        let text = TWO_BUS.replace("\t1\t2\t0\t0.1", "\t1\t99\t0\t0.1");
        let err = parse_standard_case(&text).unwrap_err();
        assert!(matches!(err, Error::UndeclaredBus { bus: 99, .. }), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = TWO_BUS.replace("\t2\t1\t50", "\t2\t1\tfifty");
        match parse_standard_case(&text).unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 6),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_impedance_and_missing_slack() {
        let text = TWO_BUS.replace("\t0\t0.1\t0", "\t0\t0\t0");
        assert!(matches!(
            parse_standard_case(&text),
            Err(Error::ZeroImpedance { branch: 1, .. })
        ));
        let text = TWO_BUS.replace("\t1\t3\t0", "\t1\t2\t0");
        assert_eq!(parse_standard_case(&text), Err(Error::NoSlack));
    }

    #[test]
    fn extra_columns_warn() {
        let text = TWO_BUS.replace("\t1\t100\t1;", "\t1\t100\t1\t250\t0;");
        let (_, w) = parse_standard_case_with_warnings(&text).unwrap();
        assert!(w.iter().any(|m| m.contains("gen table")));
    }

    #[test]
    fn comma_separated_rows_and_inline_close() {
        let text = TWO_BUS
            .replace("mpc.gen = [\n", "mpc.gen = [")
            .replace("\t1\t0\t0\t300\t-300\t1\t100\t1;\n];", "1, 0, 0, 300, -300, 1, 100, 1];");
        let net = parse_standard_case(&text).unwrap();
        assert_eq!(net.generators[0].q_max, 300.0);
    }
}
