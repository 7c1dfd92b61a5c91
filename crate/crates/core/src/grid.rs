//! Grid data model, its JSON file format, and validation.
//!
//! A [`Grid`] is immutable once validated. Node ids from the file are kept as
//! strings and mapped to dense indices `0..n` in file order; every other module
//! works with those indices.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ alpha = 1` accepted from a file before renormalization.
const ALPHA_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Load,
    Generator,
    Renewable,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Load => write!(f, "load"),
            NodeKind::Generator => write!(f, "generator"),
            NodeKind::Renewable => write!(f, "renewable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Fixed injection in MW: negative consumption for loads, mean output for
    /// renewables. Carried but unused for generators.
    pub p0: f64,
    /// Generator capacity in MW.
    pub pbar: f64,
    /// Generator cost in $/MW.
    pub cost: f64,
    /// Droop share; zero for every non-generator.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Reactance, strictly positive.
    pub x: f64,
    /// Thermal capacity in MW.
    pub fbar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationError {
    Empty,
    DuplicateNodeId(String),
    UnknownNode { line: usize, id: String },
    SelfLoop(String),
    DuplicateLine(String, String),
    NonPositiveReactance { from: String, to: String },
    NegativeLineCapacity { from: String, to: String },
    NegativeGenCapacity(String),
    PositiveLoad(String),
    NonFinite { id: String, field: &'static str },
    AlphaOnNonGenerator(String),
    NegativeAlpha(String),
    AlphaSum(f64),
    NoGenerators,
    Disconnected { components: usize },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationError::*;
        match self {
            Empty => write!(f, "grid has no nodes"),
            DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            UnknownNode { line, id } => write!(f, "line {line} references unknown node {id}"),
            SelfLoop(id) => write!(f, "self loop at node {id}"),
            DuplicateLine(a, b) => write!(f, "duplicate line ({a}, {b})"),
            NonPositiveReactance { from, to } => {
                write!(f, "negative or zero reactance on line ({from}, {to})")
            }
            NegativeLineCapacity { from, to } => {
                write!(f, "negative capacity on line ({from}, {to})")
            }
            NegativeGenCapacity(id) => write!(f, "negative generator capacity at node {id}"),
            PositiveLoad(id) => write!(f, "load at node {id} must be a non-positive injection"),
            NonFinite { id, field } => write!(f, "non-finite {field} at {id}"),
            AlphaOnNonGenerator(id) => write!(f, "nonzero alpha on non-generator node {id}"),
            NegativeAlpha(id) => write!(f, "negative alpha at node {id}"),
            AlphaSum(s) => write!(f, "alpha sum ≠ 1 (got {s})"),
            NoGenerators => write!(f, "no generator with positive capacity"),
            Disconnected { components } => {
                write!(f, "grid is disconnected ({components} components)")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot parse grid: {0}")]
    Parse(String),
    #[error("invalid grid: {0}")]
    Validation(ValidationError),
}

impl From<ValidationError> for GridError {
    fn from(e: ValidationError) -> Self {
        GridError::Validation(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
}

fn default_base_mva() -> f64 {
    100.0
}

impl Default for GridMeta {
    fn default() -> Self {
        GridMeta {
            name: String::new(),
            base_mva: default_base_mva(),
        }
    }
}

/// A validated transmission grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    meta: GridMeta,
    nodes: Vec<Node>,
    lines: Vec<Line>,
    generators: Vec<usize>,
    loads: Vec<usize>,
    renewables: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Grid {
    /// Validates and builds a grid. When `alpha_given` is false the droop
    /// shares are derived from generator capacities.
    pub fn new(
        meta: GridMeta,
        nodes: Vec<Node>,
        lines: Vec<Line>,
        alpha_given: bool,
    ) -> Result<Grid, GridError> {
        if nodes.is_empty() {
            return Err(ValidationError::Empty.into());
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(ValidationError::DuplicateNodeId(node.id.clone()).into());
            }
        }
        let mut grid = Grid {
            meta,
            nodes,
            lines,
            generators: Vec::new(),
            loads: Vec::new(),
            renewables: Vec::new(),
            index,
        };
        for (i, node) in grid.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Generator => grid.generators.push(i),
                NodeKind::Load => grid.loads.push(i),
                NodeKind::Renewable => grid.renewables.push(i),
            }
        }
        grid.validate_nodes()?;
        grid.validate_lines()?;
        if alpha_given {
            grid.validate_alpha()?;
        } else {
            grid = default_alpha(&grid)?;
        }
        grid.check_connected()?;
        Ok(grid)
    }

    fn validate_nodes(&self) -> Result<(), ValidationError> {
        for node in &self.nodes {
            for (field, v) in [
                ("p0", node.p0),
                ("pbar", node.pbar),
                ("cost", node.cost),
                ("alpha", node.alpha),
            ] {
                if !v.is_finite() {
                    return Err(ValidationError::NonFinite {
                        id: node.id.clone(),
                        field,
                    });
                }
            }
            match node.kind {
                NodeKind::Generator if node.pbar < 0.0 => {
                    return Err(ValidationError::NegativeGenCapacity(node.id.clone()))
                }
                NodeKind::Load if node.p0 > 0.0 => {
                    return Err(ValidationError::PositiveLoad(node.id.clone()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_lines(&self) -> Result<(), ValidationError> {
        let mut seen = BTreeSet::new();
        for line in &self.lines {
            let (a, b) = (&self.nodes[line.from].id, &self.nodes[line.to].id);
            if line.from == line.to {
                return Err(ValidationError::SelfLoop(a.clone()));
            }
            if !line.x.is_finite() || !line.fbar.is_finite() {
                return Err(ValidationError::NonFinite {
                    id: format!("line ({a}, {b})"),
                    field: "x/fbar",
                });
            }
            if line.x <= 0.0 {
                return Err(ValidationError::NonPositiveReactance {
                    from: a.clone(),
                    to: b.clone(),
                });
            }
            if line.fbar < 0.0 {
                return Err(ValidationError::NegativeLineCapacity {
                    from: a.clone(),
                    to: b.clone(),
                });
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            if !seen.insert(key) {
                return Err(ValidationError::DuplicateLine(a.clone(), b.clone()));
            }
        }
        Ok(())
    }

    fn validate_alpha(&mut self) -> Result<(), ValidationError> {
        let mut sum = 0.0;
        for node in &self.nodes {
            if node.alpha < 0.0 {
                return Err(ValidationError::NegativeAlpha(node.id.clone()));
            }
            if node.kind != NodeKind::Generator && node.alpha != 0.0 {
                return Err(ValidationError::AlphaOnNonGenerator(node.id.clone()));
            }
            sum += node.alpha;
        }
        if self.generators.is_empty() {
            return Err(ValidationError::NoGenerators);
        }
        if (sum - 1.0).abs() > ALPHA_SUM_TOL {
            return Err(ValidationError::AlphaSum(sum));
        }
        for node in &mut self.nodes {
            node.alpha /= sum;
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<(), ValidationError> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut comp = vec![usize::MAX; n];
        let mut components = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = components;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = components;
                        queue.push_back(v);
                    }
                }
            }
            components += 1;
        }
        if components > 1 {
            return Err(ValidationError::Disconnected { components });
        }
        Ok(())
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn renewables(&self) -> &[usize] {
        &self.renewables
    }

    /// Dense index for a file node id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.nodes[i].id
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.alpha).collect()
    }

    /// Total load in MW as a positive number.
    pub fn total_load(&self) -> f64 {
        self.loads.iter().map(|&i| -self.nodes[i].p0).sum()
    }

    /// Renewable mean outputs as a full-length vector, zero elsewhere.
    pub fn renewable_mean(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        for &i in &self.renewables {
            v[i] = self.nodes[i].p0;
        }
        v
    }

    pub fn from_json_str(s: &str) -> Result<Grid, GridError> {
        let file: GridFile = serde_json::from_str(s).map_err(|e| GridError::Parse(e.to_string()))?;
        file.into_grid()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GridFile::from(self)).expect("grid serializes")
    }
}

/// Reads and validates a grid file.
pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GridError::Parse(format!("{}: {e}", path.display())))?;
    Grid::from_json_str(&text)
}

/// Returns a copy of `grid` with droop shares proportional to generator
/// capacity.
pub fn default_alpha(grid: &Grid) -> Result<Grid, GridError> {
    let total: f64 = grid.generators.iter().map(|&g| grid.nodes[g].pbar).sum();
    if !(total > 0.0) {
        return Err(ValidationError::NoGenerators.into());
    }
    let mut out = grid.clone();
    for node in &mut out.nodes {
        node.alpha = match node.kind {
            NodeKind::Generator => node.pbar / total,
            _ => 0.0,
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Int(i64),
    Str(String),
}

impl IdRepr {
    fn into_string(self) -> String {
        match self {
            IdRepr::Int(i) => i.to_string(),
            IdRepr::Str(s) => s,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: IdRepr,
    kind: NodeKind,
    #[serde(default)]
    p0: f64,
    #[serde(default)]
    pbar: f64,
    #[serde(default)]
    cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: IdRepr,
    to: IdRepr,
    x: f64,
    fbar: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    meta: GridMeta,
    nodes: Vec<NodeRecord>,
    lines: Vec<LineRecord>,
}

impl GridFile {
    fn into_grid(self) -> Result<Grid, GridError> {
        let alpha_given = self.nodes.iter().any(|n| n.alpha.is_some());
        let nodes: Vec<Node> = self
            .nodes
            .into_iter()
            .map(|r| Node {
                id: r.id.into_string(),
                kind: r.kind,
                p0: r.p0,
                pbar: r.pbar,
                cost: r.cost,
                alpha: r.alpha.unwrap_or(0.0),
            })
            .collect();
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut lines = Vec::with_capacity(self.lines.len());
        for (k, r) in self.lines.into_iter().enumerate() {
            let lookup = |id: IdRepr| {
                let id = id.into_string();
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or(ValidationError::UnknownNode { line: k, id })
            };
            let from = lookup(r.from)?;
            let to = lookup(r.to)?;
            lines.push(Line {
                from,
                to,
                x: r.x,
                fbar: r.fbar,
            });
        }
        Grid::new(self.meta, nodes, lines, alpha_given)
    }
}

impl From<&Grid> for GridFile {
    fn from(g: &Grid) -> Self {
        GridFile {
            meta: g.meta.clone(),
            nodes: g
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: IdRepr::Str(n.id.clone()),
                    kind: n.kind,
                    p0: n.p0,
                    pbar: n.pbar,
                    cost: n.cost,
                    alpha: Some(n.alpha),
                })
                .collect(),
            lines: g
                .lines
                .iter()
                .map(|l| LineRecord {
                    from: IdRepr::Str(g.nodes[l.from].id.clone()),
                    to: IdRepr::Str(g.nodes[l.to].id.clone()),
                    x: l.x,
                    fbar: l.fbar,
                })
                .collect(),
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("two_node", include_str!("../grids/two_node.json")),
    ("triangle3", include_str!("../grids/triangle3.json")),
    ("merit2", include_str!("../grids/merit2.json")),
    ("merit2_congested", include_str!("../grids/merit2_congested.json")),
    ("toy3_congested", include_str!("../grids/toy3_congested.json")),
    ("star5", include_str!("../grids/star5.json")),
    ("ring10", include_str!("../grids/ring10.json")),
];

/// Names of the grids shipped with the crate.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

/// Loads one of the grids shipped with the crate.
pub fn bundled(name: &str) -> Option<Grid> {
    let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name)?;
    Some(Grid::from_json_str(text).expect("bundled grid is valid"))
}
