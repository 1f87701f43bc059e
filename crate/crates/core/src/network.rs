//! Network topology, cell parameters, fundamental diagrams and routing.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{invalid, Error, Result};

/// Volumes this far outside their box are treated as rounding noise and clamped.
pub const VOLUME_TOL: f64 = 1e-9;

/// Upper bound on the inflow a cell can accept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Supply {
    Finite(f64),
    /// Sources accept any inflow.
    Unbounded,
}

impl Supply {
    pub fn value(self) -> f64 {
        match self {
            Supply::Finite(v) => v,
            Supply::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Supply::Unbounded)
    }
}

/// How the demand control acts on a source (on-ramp) cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SourceActuation {
    /// `min{d(x), α·C}`: the control meters the ramp capacity.
    #[default]
    RampMeter,
    /// `min{α·d(x), C}`: the control scales the demand like on any other cell.
    SpeedScaling,
}

/// Piecewise-affine (triangular/trapezoidal) fundamental diagram in per-step units.
#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalDiagram {
    /// `v·τ/L`, per step.
    pub demand_slope: f64,
    /// `w·τ/L`, per step.
    pub supply_slope: f64,
    /// Jam volume, vehicles.
    pub jam_volume: f64,
    /// Capacity per step, veh/step. Constant-extended past its end.
    pub capacity: Vec<f64>,
    pub is_source: bool,
}

impl FundamentalDiagram {
    pub fn capacity_at(&self, t: usize) -> f64 {
        match self.capacity.len() {
            0 => f64::INFINITY,
            n => self.capacity[t.min(n - 1)],
        }
    }

    fn check_volume(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x < -VOLUME_TOL {
            return invalid(format!("volume {x} is negative or not finite"));
        }
        Ok(x.max(0.0))
    }

    /// Uncontrolled demand `d(x) = slope·x` (no capacity cap).
    pub fn raw_demand(&self, x: f64) -> f64 {
        self.demand_slope * x
    }

    /// Controlled demand `d̄(x, α)` with ramp metering on sources.
    pub fn demand(&self, x: f64, alpha: f64, t: usize) -> Result<f64> {
        self.demand_with(x, alpha, t, SourceActuation::RampMeter)
    }

    pub fn demand_with(&self, x: f64, alpha: f64, t: usize, mode: SourceActuation) -> Result<f64> {
        let x = self.check_volume(x)?;
        if !(0.0..=1.0).contains(&alpha) {
            return invalid(format!("control {alpha} outside [0,1]"));
        }
        let cap = self.capacity_at(t);
        let d = self.raw_demand(x);
        Ok(if self.is_source && mode == SourceActuation::RampMeter {
            d.min(alpha * cap)
        } else {
            (alpha * d).min(cap)
        })
    }

    pub fn supply(&self, x: f64, t: usize) -> Result<Supply> {
        let x = self.check_volume(x)?;
        if self.is_source {
            return Ok(Supply::Unbounded);
        }
        if x > self.jam_volume + VOLUME_TOL {
            return invalid(format!("volume {x} exceeds jam volume {}", self.jam_volume));
        }
        let room = (self.jam_volume - x).max(0.0);
        Ok(Supply::Finite((self.supply_slope * room).min(self.capacity_at(t))))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: u32,
    /// Free-flow speed, length/time.
    pub v: f64,
    /// Congestion wave speed, length/time.
    pub w: f64,
    /// Cell length.
    pub length: f64,
    pub lanes: u32,
    pub diagram: FundamentalDiagram,
}

impl Cell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        v: f64,
        w: f64,
        length: f64,
        lanes: u32,
        jam: f64,
        capacity: Vec<f64>,
        tau: f64,
    ) -> Cell {
        Cell {
            id,
            v,
            w,
            length,
            lanes,
            diagram: FundamentalDiagram {
                demand_slope: v * tau / length,
                supply_slope: w * tau / length,
                jam_volume: jam,
                capacity,
                is_source: false,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JunctionKind {
    Ordinary,
    Merge,
    Diverge,
    /// Several incoming and several outgoing cells.
    General,
}

impl fmt::Display for JunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JunctionKind::Ordinary => "ordinary",
            JunctionKind::Merge => "merge",
            JunctionKind::Diverge => "diverge",
            JunctionKind::General => "general",
        };
        f.write_str(s)
    }
}

/// An internal node: the cells whose head it is and the cells whose tail it is.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Junction {
    pub upstream: Vec<usize>,
    pub downstream: Vec<usize>,
}

impl Junction {
    pub fn kind(&self) -> JunctionKind {
        match (self.upstream.len() > 1, self.downstream.len() > 1) {
            (false, false) => JunctionKind::Ordinary,
            (true, false) => JunctionKind::Merge,
            (false, true) => JunctionKind::Diverge,
            (true, true) => JunctionKind::General,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub cells: Vec<Cell>,
    /// Adjacent pairs `(i, j)` as cell indices.
    pub edges: Vec<(usize, usize)>,
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
    pub out_edges: Vec<Vec<usize>>,
    pub in_edges: Vec<Vec<usize>>,
    pub junctions: Vec<Junction>,
    /// Merge priorities keyed by the downstream cell: `(upstream, p)`.
    pub priorities: BTreeMap<usize, Vec<(usize, f64)>>,
    index: BTreeMap<u32, usize>,
}

impl Network {
    /// Builds a network from cells and id-based adjacency. Only referential
    /// errors (unknown or duplicate ids) fail here; everything else is left
    /// to [`validate`].
    pub fn new(
        mut cells: Vec<Cell>,
        adjacency: &[(u32, u32)],
        sources: &[u32],
        sinks: &[u32],
    ) -> Result<Network> {
        let mut index = BTreeMap::new();
        for (k, c) in cells.iter().enumerate() {
            if index.insert(c.id, k).is_some() {
                return invalid(format!("duplicate cell id {}", c.id));
            }
        }
        let lookup = |id: u32| -> Result<usize> {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("unknown cell id {id}")))
        };
        let mut edges = Vec::with_capacity(adjacency.len());
        for &(a, b) in adjacency {
            let e = (lookup(a)?, lookup(b)?);
            if edges.contains(&e) {
                return invalid(format!("duplicate adjacency ({a},{b})"));
            }
            edges.push(e);
        }
        let sources = sources.iter().map(|&s| lookup(s)).collect::<Result<Vec<_>>>()?;
        let sinks = sinks.iter().map(|&s| lookup(s)).collect::<Result<Vec<_>>>()?;
        for &s in &sources {
            cells[s].diagram.is_source = true;
        }
        let n = cells.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            out_edges[i].push(e);
            in_edges[j].push(e);
        }
        let junctions = derive_junctions(n, &edges);
        Ok(Network {
            cells,
            edges,
            sources,
            sinks,
            out_edges,
            in_edges,
            junctions,
            priorities: BTreeMap::new(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id(&self, i: usize) -> u32 {
        self.cells[i].id
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.out_edges[i].iter().copied().find(|&e| self.edges[e].1 == j)
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.cells[i].diagram.is_source
    }

    pub fn is_sink(&self, i: usize) -> bool {
        self.sinks.contains(&i)
    }

    /// Sets merge priorities for the merge feeding `downstream`.
    pub fn set_priorities(&mut self, downstream: u32, p: &[(u32, f64)]) -> Result<()> {
        let j = self
            .index_of(downstream)
            .ok_or_else(|| Error::Invalid(format!("unknown cell id {downstream}")))?;
        let mut entries = Vec::with_capacity(p.len());
        for &(up, w) in p {
            let i = self
                .index_of(up)
                .ok_or_else(|| Error::Invalid(format!("unknown cell id {up}")))?;
            entries.push((i, w));
        }
        self.priorities.insert(j, entries);
        Ok(())
    }
}

fn derive_junctions(n: usize, edges: &[(usize, usize)]) -> Vec<Junction> {
    // Union-find over cell heads (0..n) and cell tails (n..2n).
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Junction> = BTreeMap::new();
    for &(i, j) in edges {
        let r = find(&mut parent, i);
        let g = groups.entry(r).or_insert(Junction { upstream: vec![], downstream: vec![] });
        if !g.upstream.contains(&i) {
            g.upstream.push(i);
        }
        if !g.downstream.contains(&j) {
            g.downstream.push(j);
        }
    }
    groups
        .into_values()
        .map(|mut g| {
            g.upstream.sort_unstable();
            g.downstream.sort_unstable();
            g
        })
        .collect()
}

/// One entry per internal node, in a deterministic order.
pub fn classify_junctions(network: &Network) -> Vec<(Junction, JunctionKind)> {
    network.junctions.iter().map(|j| (j.clone(), j.kind())).collect()
}

/// Per-step turning ratios keyed by cell-index pairs. Each series is
/// constant-extended past its last entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoutingSchedule {
    pub ratios: BTreeMap<(usize, usize), Vec<f64>>,
}

impl RoutingSchedule {
    pub fn constant(entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        RoutingSchedule {
            ratios: entries.into_iter().map(|(k, r)| (k, vec![r])).collect(),
        }
    }

    /// `R_ij(t)`. Pairs with no entry default to 1 when `i` has a single
    /// downstream cell, 0 otherwise.
    pub fn ratio(&self, network: &Network, e: usize, t: usize) -> f64 {
        let (i, j) = network.edges[e];
        match self.ratios.get(&(i, j)) {
            Some(s) if !s.is_empty() => s[t.min(s.len() - 1)],
            _ if network.out_edges[i].len() == 1 => 1.0,
            _ => 0.0,
        }
    }

    /// Ratios of every edge at step `t`, indexed like `network.edges`.
    pub fn at(&self, network: &Network, t: usize) -> Vec<f64> {
        (0..network.edges.len()).map(|e| self.ratio(network, e, t)).collect()
    }

    fn span(&self) -> usize {
        self.ratios.values().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub network: Network,
    pub horizon: usize,
    /// Sampling period, time units per step.
    pub tau: f64,
    pub x0: Vec<f64>,
    /// Per-cell inflow series, veh/step, zero-extended past its end.
    pub inflow: Vec<Vec<f64>>,
    pub routing: Option<RoutingSchedule>,
    pub comment: String,
}

impl Scenario {
    pub fn inflow_at(&self, i: usize, t: usize) -> f64 {
        self.inflow.get(i).and_then(|s| s.get(t)).copied().unwrap_or(0.0)
    }

    pub fn inflow_vec(&self, t: usize) -> Vec<f64> {
        (0..self.network.len()).map(|i| self.inflow_at(i, t)).collect()
    }

    /// The exogenous routing, or the trivial one when every non-sink has a
    /// single downstream cell.
    pub fn routing_or_trivial(&self) -> Result<RoutingSchedule> {
        if let Some(r) = &self.routing {
            return Ok(r.clone());
        }
        if self.network.out_edges.iter().any(|o| o.len() > 1) {
            return Err(Error::Config("scenario has diverges but no routing schedule".into()));
        }
        Ok(RoutingSchedule::default())
    }

    /// A copy with every inflow shifted by `delta` on the given source, for all steps.
    pub fn with_inflow_offset(&self, source: usize, delta: f64) -> Scenario {
        let mut s = self.clone();
        let series = &mut s.inflow[source];
        series.resize(self.horizon.max(series.len()), 0.0);
        for v in series.iter_mut() {
            *v = (*v + delta).max(0.0);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub code: &'static str,
    pub cell: Option<u32>,
    pub step: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.code)?;
        if let Some(c) = self.cell {
            write!(f, " cell {c}")?;
        }
        if let Some(t) = self.step {
            write!(f, " step {t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub cfl_ratio: f64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            return Ok(());
        }
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        Err(Error::Config(lines.join("; ")))
    }

    fn push(&mut self, code: &'static str, cell: Option<u32>, step: Option<usize>, detail: String) {
        self.violations.push(Violation { code, cell, step, detail });
    }
}

const ROW_SUM_TOL: f64 = 1e-9;

/// Checks every structural invariant of the network and scenario.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let net = &scenario.network;
    let mut rep = ValidationReport::default();

    for c in &net.cells {
        let id = Some(c.id);
        let fd = &c.diagram;
        if !(c.v > 0.0 && c.w > 0.0 && c.length > 0.0) {
            rep.push("cell-params", id, None, format!("v={}, w={}, L={} must be positive", c.v, c.w, c.length));
        }
        if c.lanes < 1 {
            rep.push("cell-lanes", id, None, "lane count must be at least 1".into());
        }
        if !(fd.jam_volume > 0.0) {
            rep.push("jam", id, None, format!("jam volume {} must be positive", fd.jam_volume));
        }
        if fd.capacity.is_empty() {
            rep.push("capacity", id, None, "capacity schedule is empty".into());
        }
        for (t, &cap) in fd.capacity.iter().enumerate() {
            if !(cap >= 0.0) {
                rep.push("capacity", id, Some(t), format!("capacity {cap} is negative"));
            }
        }
    }

    for &(i, j) in &net.edges {
        if net.is_sink(i) {
            rep.push("sink-downstream", Some(net.id(i)), None, format!("sink has downstream cell {}", net.id(j)));
        }
        if net.is_source(j) {
            rep.push("source-upstream", Some(net.id(j)), None, format!("source has upstream cell {}", net.id(i)));
        }
        if i == j {
            rep.push("self-loop", Some(net.id(i)), None, "cell adjacent to itself".into());
        }
    }
    for junction in &net.junctions {
        for &i in &junction.upstream {
            for &j in &junction.downstream {
                if net.edge_index(i, j).is_none() {
                    rep.push(
                        "adjacency",
                        Some(net.id(i)),
                        None,
                        format!("head of {} meets tail of {} but the pair is not adjacent", net.id(i), net.id(j)),
                    );
                }
            }
        }
    }
    for i in 0..net.len() {
        if net.out_edges[i].is_empty() && !net.is_sink(i) {
            rep.push("dead-end", Some(net.id(i)), None, "non-sink cell has no downstream cell".into());
        }
        if net.in_edges[i].is_empty() && !net.is_source(i) {
            rep.push("unreachable", Some(net.id(i)), None, "non-source cell has no upstream cell".into());
        }
    }
    for (&j, entries) in &net.priorities {
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if entries.iter().any(|e| e.1 < 0.0) || (total - 1.0).abs() > ROW_SUM_TOL {
            rep.push("priority", Some(net.id(j)), None, format!("merge priorities must be nonnegative and sum to 1 (sum {total})"));
        }
        for &(i, _) in entries {
            if net.edge_index(i, j).is_none() {
                rep.push("priority", Some(net.id(j)), None, format!("priority given for non-adjacent cell {}", net.id(i)));
            }
        }
    }

    if let Some(r) = &scenario.routing {
        for (&(i, j), series) in &r.ratios {
            if net.edge_index(i, j).is_none() {
                if series.iter().any(|&v| v != 0.0) {
                    rep.push("routing-support", Some(net.id(i)), None, format!("nonzero ratio toward non-adjacent cell {}", net.id(j)));
                }
                continue;
            }
            for (t, &v) in series.iter().enumerate() {
                if !(v >= 0.0) {
                    rep.push("routing-negative", Some(net.id(i)), Some(t), format!("ratio toward {} is {v}", net.id(j)));
                }
            }
        }
        let steps = scenario.horizon.max(r.span()).max(1);
        for i in 0..net.len() {
            if net.is_sink(i) || net.out_edges[i].is_empty() {
                continue;
            }
            for t in 0..steps {
                let sum: f64 = net.out_edges[i].iter().map(|&e| r.ratio(net, e, t)).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    rep.push("routing-row-sum", Some(net.id(i)), Some(t), format!("turning ratios sum to {sum}"));
                }
            }
        }
    } else if net.out_edges.iter().any(|o| o.len() > 1) {
        rep.push("routing-missing", None, None, "diverging cells need a routing schedule".into());
    }

    if scenario.x0.len() != net.len() {
        rep.push("x0-shape", None, None, format!("{} initial volumes for {} cells", scenario.x0.len(), net.len()));
    }
    for (i, &x) in scenario.x0.iter().enumerate().take(net.len()) {
        let c = &net.cells[i];
        if !(x >= 0.0) {
            rep.push("x0-negative", Some(c.id), None, format!("initial volume {x}"));
        } else if !c.diagram.is_source && x > c.diagram.jam_volume {
            rep.push("x0-jam", Some(c.id), None, format!("initial volume {x} exceeds jam {}", c.diagram.jam_volume));
        }
    }
    if scenario.inflow.len() != net.len() {
        rep.push("inflow-shape", None, None, format!("{} inflow series for {} cells", scenario.inflow.len(), net.len()));
    }
    for (i, series) in scenario.inflow.iter().enumerate().take(net.len()) {
        for (t, &l) in series.iter().enumerate() {
            if !(l >= 0.0) {
                rep.push("inflow-negative", Some(net.id(i)), Some(t), format!("inflow {l}"));
            } else if l > 0.0 && !net.is_source(i) {
                rep.push("inflow-non-source", Some(net.id(i)), Some(t), format!("inflow {l} on a non-source"));
            }
        }
    }

    if !(scenario.tau > 0.0) {
        rep.push("tau", None, None, format!("sampling period {} must be positive", scenario.tau));
    }
    let vmax = net.cells.iter().map(|c| c.v).fold(0.0, f64::max);
    let lmin = net.cells.iter().map(|c| c.length).fold(f64::INFINITY, f64::min);
    rep.cfl_ratio = scenario.tau * vmax / lmin;
    if rep.cfl_ratio > 1.0 + 1e-12 {
        rep.push("cfl", None, None, format!("tau*max(v)/min(L) = {} exceeds 1", rep.cfl_ratio));
    }
    rep
}

/// Whether all cells share the same demand slope (within `tol`).
pub fn uniform_demand_slope(network: &Network, tol: f64) -> Option<f64> {
    let first = network.cells.first()?.diagram.demand_slope;
    network
        .cells
        .iter()
        .all(|c| (c.diagram.demand_slope - first).abs() <= tol)
        .then_some(first)
}
