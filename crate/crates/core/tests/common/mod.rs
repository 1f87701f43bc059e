//! Shared fixtures: hand-built scenarios and a seeded random scenario generator.
#![allow(dead_code)]

use ctmopt::network::{Cell, Network, RoutingSchedule, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU: f64 = 10.0;

/// Cell with per-step slopes `dslope`/`sslope` (length 500, τ = 10).
pub fn cell(id: u32, dslope: f64, sslope: f64, jam: f64, cap: Vec<f64>) -> Cell {
    Cell::new(id, dslope * 50.0, sslope * 50.0, 500.0, 1, jam, cap, TAU)
}

/// Unit-slope cell with jam 10 and capacity 6.
pub fn unit(id: u32) -> Cell {
    cell(id, 1.0, 1.0, 10.0, vec![6.0])
}

pub fn scenario(
    cells: Vec<Cell>,
    adjacency: &[(u32, u32)],
    sources: &[u32],
    sinks: &[u32],
    horizon: usize,
    inflow: Vec<Vec<f64>>,
    routing: Option<Vec<((u32, u32), f64)>>,
) -> Scenario {
    let network = Network::new(cells, adjacency, sources, sinks).expect("network builds");
    let n = network.len();
    let routing = routing.map(|r| {
        RoutingSchedule::constant(
            r.into_iter()
                .map(|((a, b), v)| ((network.index_of(a).unwrap(), network.index_of(b).unwrap()), v)),
        )
    });
    let mut flows = inflow;
    flows.resize(n, Vec::new());
    Scenario { network, horizon, tau: TAU, x0: vec![0.0; n], inflow: flows, routing, comment: String::new() }
}

/// Source 1 → 2 → … → n (sink), unit cells.
pub fn chain(n: u32, horizon: usize, inflow: Vec<f64>) -> Scenario {
    let cells = (1..=n).map(unit).collect();
    let adj: Vec<(u32, u32)> = (1..n).map(|i| (i, i + 1)).collect();
    scenario(cells, &adj, &[1], &[n], horizon, vec![inflow], None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Chain,
    /// 1 → 2, 2 → {3, 4}, {3, 4} → 5.
    Diamond,
    /// Sources 1 and 2 merge into 3 → 4.
    Merge,
}

#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub max_cells: u32,
    pub max_horizon: usize,
    pub max_inflow: f64,
    /// Upper bound on initial volume as a fraction of jam.
    pub max_fill: f64,
    pub capacity_drops: bool,
    /// Upper bound on free-flow and congestion wave speeds [ft/s].
    pub max_speed: f64,
    pub shapes: &'static [Shape],
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_cells: 5,
            max_horizon: 12,
            max_inflow: 10.0,
            max_fill: 0.9,
            capacity_drops: true,
            max_speed: 50.0,
            shapes: &[Shape::Chain, Shape::Diamond, Shape::Merge],
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cell(r: &mut ChaCha8Rng, id: u32, horizon: usize, o: &GenOptions) -> Cell {
    let lanes = r.gen_range(1..=2u32);
    let v = r.gen_range(15.0..=o.max_speed);
    let w = r.gen_range(15.0..=o.max_speed);
    let jam = 10.0 * lanes as f64 * r.gen_range(0.8..1.2);
    let base = 6.0 * lanes as f64 * r.gen_range(0.5..1.0);
    let cap = if o.capacity_drops && r.gen_bool(0.3) {
        (0..horizon).map(|_| if r.gen_bool(0.2) { base * r.gen_range(0.0..0.5) } else { base }).collect()
    } else {
        vec![base]
    };
    Cell::new(id, v, w, 500.0, lanes, jam, cap, TAU)
}

/// Cell count, adjacency, sources and sinks by id.
type Topology = (u32, Vec<(u32, u32)>, Vec<u32>, Vec<u32>);

/// Random valid scenario. Every cell satisfies the CFL condition and a
/// routing schedule is always attached (empty when there is no diverge).
pub fn random_scenario(r: &mut ChaCha8Rng, o: &GenOptions) -> Scenario {
    let shape = o.shapes[r.gen_range(0..o.shapes.len())];
    let horizon = r.gen_range(1..=o.max_horizon);
    let (n, adj, sources, sinks): Topology = match shape {
        Shape::Chain => {
            let n = r.gen_range(2..=o.max_cells.max(2));
            (n, (1..n).map(|i| (i, i + 1)).collect(), vec![1], vec![n])
        }
        Shape::Diamond => (5, vec![(1, 2), (2, 3), (2, 4), (3, 5), (4, 5)], vec![1], vec![5]),
        Shape::Merge => (4, vec![(1, 3), (2, 3), (3, 4)], vec![1, 2], vec![4]),
    };
    let cells: Vec<Cell> = (1..=n).map(|id| random_cell(r, id, horizon, o)).collect();
    let mut inflow = vec![Vec::new(); n as usize];
    for &s in &sources {
        inflow[(s - 1) as usize] = (0..horizon).map(|_| r.gen_range(0.0..=o.max_inflow)).collect();
    }
    let routing = Some(if shape == Shape::Diamond {
        let p = (r.gen_range(1..=9) as f64) / 10.0;
        vec![((2, 3), p), ((2, 4), 1.0 - p)]
    } else {
        Vec::new()
    });
    let mut s = scenario(cells, &adj, &sources, &sinks, horizon, inflow, routing);
    for i in 0..s.network.len() {
        let jam = s.network.cells[i].diagram.jam_volume;
        s.x0[i] = if s.network.is_source(i) {
            r.gen_range(0.0..=o.max_inflow)
        } else {
            r.gen_range(0.0..=o.max_fill * jam)
        };
    }
    s
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
