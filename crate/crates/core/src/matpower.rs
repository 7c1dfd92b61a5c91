//! Conversion of MATPOWER case files into grids.
//!
//! Only the parts the DC model uses are read: bus real demand, in-service
//! generators with their maximum output and linear cost coefficient, and
//! in-service branches with reactance and long-term rating. Because every
//! node has a single kind, a bus with both generation and demand becomes a
//! generator node plus a load node `"<bus>_load"` joined by a stiff,
//! unconstrained line. Parallel branches are merged.

use std::collections::BTreeMap;

use crate::grid::{Grid, GridError, GridMeta, Line, Node, NodeKind};

/// Reactance of the internal line tying a split bus together, per unit.
pub const SPLIT_REACTANCE: f64 = 1e-4;

/// A renewable plant attached to an existing bus through a dedicated line.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableSite {
    pub bus: i64,
    pub mean_mw: f64,
    pub x: f64,
    pub fbar: f64,
}

fn parse_err(msg: impl Into<String>) -> GridError {
    GridError::Parse(msg.into())
}

/// Rows of the matrix assigned to `mpc.<name>`.
fn matrix(text: &str, name: &str) -> Result<Option<Vec<Vec<f64>>>, GridError> {
    let key = format!("mpc.{name}");
    let Some(start) = text.find(&key) else {
        return Ok(None);
    };
    let rest = &text[start + key.len()..];
    let open = rest
        .find('[')
        .ok_or_else(|| parse_err(format!("{key}: missing '['")))?;
    let close = rest[open..]
        .find(']')
        .ok_or_else(|| parse_err(format!("{key}: missing ']'")))?;
    let body = &rest[open + 1..open + close];
    let mut rows = Vec::new();
    for line in body.lines() {
        let line = line.split('%').next().unwrap_or("");
        for chunk in line.split(';') {
            let vals: Result<Vec<f64>, _> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            let vals = vals.map_err(|e| parse_err(format!("{key}: {e}")))?;
            if !vals.is_empty() {
                rows.push(vals);
            }
        }
    }
    Ok(Some(rows))
}

fn column(row: &[f64], k: usize, what: &str) -> Result<f64, GridError> {
    row.get(k)
        .copied()
        .ok_or_else(|| parse_err(format!("{what} row has only {} columns", row.len())))
}

/// Parses MATPOWER case text into a grid with capacity-proportional droop.
pub fn convert_matpower(text: &str, name: &str, renewables: &[RenewableSite]) -> Result<Grid, GridError> {
    let bus = matrix(text, "bus")?.ok_or_else(|| parse_err("no mpc.bus matrix"))?;
    let gen = matrix(text, "gen")?.ok_or_else(|| parse_err("no mpc.gen matrix"))?;
    let branch = matrix(text, "branch")?.ok_or_else(|| parse_err("no mpc.branch matrix"))?;
    let gencost = matrix(text, "gencost")?;
    let base_mva = text
        .find("mpc.baseMVA")
        .and_then(|i| {
            let rest = &text[i..];
            let eq = rest.find('=')?;
            let end = rest.find(';')?;
            rest[eq + 1..end].trim().parse::<f64>().ok()
        })
        .unwrap_or(100.0);

    // bus id -> (demand MW, generator capacity, capacity-weighted cost)
    let mut buses: BTreeMap<i64, (f64, f64, f64)> = BTreeMap::new();
    for row in &bus {
        let id = column(row, 0, "bus")? as i64;
        let pd = column(row, 2, "bus")?;
        if pd < 0.0 {
            return Err(parse_err(format!("bus {id} has negative demand {pd}")));
        }
        buses.insert(id, (pd, 0.0, 0.0));
    }
    for (k, row) in gen.iter().enumerate() {
        let id = column(row, 0, "gen")? as i64;
        let status = column(row, 7, "gen")?;
        let pmax = column(row, 8, "gen")?.max(0.0);
        if status <= 0.0 {
            continue;
        }
        let cost = match &gencost {
            Some(rows) => rows.get(k).map_or(0.0, |c| linear_cost(c)),
            None => 0.0,
        };
        let entry = buses
            .get_mut(&id)
            .ok_or_else(|| parse_err(format!("generator at unknown bus {id}")))?;
        entry.1 += pmax;
        entry.2 += pmax * cost;
    }

    let total_capacity: f64 = buses.values().map(|b| b.1).sum();
    let unlimited = 10.0 * total_capacity.max(1.0);
    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut bus_node = BTreeMap::new();
    for (&id, &(pd, cap, weighted)) in &buses {
        let has_gen = cap > 0.0;
        let idx = nodes.len();
        bus_node.insert(id, idx);
        if has_gen {
            nodes.push(Node {
                id: id.to_string(),
                kind: NodeKind::Generator,
                p0: 0.0,
                pbar: cap,
                cost: weighted / cap,
                alpha: 0.0,
            });
            if pd > 0.0 {
                nodes.push(Node {
                    id: format!("{id}_load"),
                    kind: NodeKind::Load,
                    p0: -pd,
                    pbar: 0.0,
                    cost: 0.0,
                    alpha: 0.0,
                });
                lines.push(Line {
                    from: idx,
                    to: idx + 1,
                    x: SPLIT_REACTANCE,
                    fbar: unlimited,
                });
            }
        } else {
            nodes.push(Node {
                id: id.to_string(),
                kind: NodeKind::Load,
                p0: -pd,
                pbar: 0.0,
                cost: 0.0,
                alpha: 0.0,
            });
        }
    }

    // Merge parallel branches: admittances and ratings add.
    let mut merged: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for row in &branch {
        let f = column(row, 0, "branch")? as i64;
        let t = column(row, 1, "branch")? as i64;
        let x = column(row, 3, "branch")?;
        let rate = column(row, 5, "branch")?;
        let status = row.get(10).copied().unwrap_or(1.0);
        if status <= 0.0 {
            continue;
        }
        if !(x > 0.0) {
            return Err(parse_err(format!("branch {f}-{t} has reactance {x}")));
        }
        let a = *bus_node
            .get(&f)
            .ok_or_else(|| parse_err(format!("branch from unknown bus {f}")))?;
        let b = *bus_node
            .get(&t)
            .ok_or_else(|| parse_err(format!("branch to unknown bus {t}")))?;
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        let e = merged.entry(key).or_insert((0.0, 0.0));
        e.0 += 1.0 / x;
        e.1 += if rate > 0.0 { rate } else { unlimited };
    }
    for ((a, b), (y, fbar)) in merged {
        lines.push(Line {
            from: a,
            to: b,
            x: 1.0 / y,
            fbar,
        });
    }

    for (k, site) in renewables.iter().enumerate() {
        let at = *bus_node
            .get(&site.bus)
            .ok_or_else(|| parse_err(format!("renewable at unknown bus {}", site.bus)))?;
        let idx = nodes.len();
        nodes.push(Node {
            id: format!("R{}", k + 1),
            kind: NodeKind::Renewable,
            p0: site.mean_mw,
            pbar: 0.0,
            cost: 0.0,
            alpha: 0.0,
        });
        lines.push(Line {
            from: idx,
            to: at,
            x: site.x,
            fbar: site.fbar,
        });
    }

    let meta = GridMeta {
        name: name.to_string(),
        base_mva,
    };
    Grid::new(meta, nodes, lines, false)
}

/// Linear coefficient of a polynomial cost row; 0 for piecewise-linear rows.
fn linear_cost(row: &[f64]) -> f64 {
    let model = row.first().copied().unwrap_or(0.0);
    let n = row.get(3).copied().unwrap_or(0.0) as usize;
    if model != 2.0 || n < 2 || row.len() < 4 + n {
        return 0.0;
    }
    row[4 + n - 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = r#"
function mpc = case4
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	135	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	135	1	1.1	0.9;
	3	2	30	0	0	0	1	1	0	135	1	1.1	0.9;
	4	1	40	5	0	0	1	1	0	135	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	150	0;
	3	0	0	300	-300	1	100	1	80	0;
];
mpc.branch = [
	1	2	0.01	0.10	0	100	0	0	0	0	1;
	1	2	0.01	0.10	0	100	0	0	0	0	1;
	2	3	0.01	0.20	0	0	0	0	0	0	1;
	3	4	0.01	0.20	0	60	0	0	0	0	1;
	1	4	0.01	0.25	0	60	0	0	0	0	1;
];
mpc.gencost = [
	2	0	0	3	0.01	12	0;
	2	0	0	2	25	0;
];
"#;

    #[test]
    fn converts_small_case() {
        let g = convert_matpower(CASE, "case4", &[RenewableSite { bus: 4, mean_mw: 20.0, x: 0.1, fbar: 100.0 }]).unwrap();
        // 4 buses, bus 3 split, one renewable.
        assert_eq!(g.n(), 6);
        let three = g.index_of("3").unwrap();
        assert_eq!(g.node(three).kind, NodeKind::Generator);
        assert_eq!(g.node(three).cost, 25.0);
        assert_eq!(g.node(g.index_of("1").unwrap()).cost, 12.0);
        assert_eq!(g.node(g.index_of("3_load").unwrap()).p0, -30.0);
        // Parallel 1-2 branches merge to half the reactance and double rating.
        let (a, b) = (g.index_of("1").unwrap(), g.index_of("2").unwrap());
        let l = g.lines().iter().find(|l| (l.from, l.to) == (a.min(b), a.max(b))).unwrap();
        assert!((l.x - 0.05).abs() < 1e-15 && l.fbar == 200.0);
        assert_eq!(g.renewables().len(), 1);
        assert!((g.alpha().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_matrix_is_parse_error() {
        assert!(matches!(
            convert_matpower("mpc.bus = [1 1 0 0];", "x", &[]),
            Err(GridError::Parse(_))
        ));
    }
}
