//! Scenario files: a JSON document describing cells, topology, routing,
//! inflows and initial volumes.
//!
//! ```json
//! {
//!   "units": {"time": "s", "length": "ft", "volume": "veh", "flow": "veh/step"},
//!   "comment": "free text",
//!   "tau": 10, "T": 25,
//!   "cells": [{"id": 1, "v": 50, "w": 50, "L": 500, "lanes": 2, "jam": 20, "capacity": [12]}],
//!   "adjacency": [[1, 2]],
//!   "sources": [1], "sinks": [2],
//!   "routing": {"2,3": [0.5]},
//!   "inflow": {"1": [0, 8, 16, 8]},
//!   "x0": [0, 0],
//!   "merge_priorities": {"7": {"4": 0.5, "6": 0.5}}
//! }
//! ```
//!
//! Inflow series shorter than `T` are zero-extended; capacity and routing
//! series are constant-extended.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Cell, Network, RoutingSchedule, Scenario};

const REQUIRED_UNITS: [&str; 3] = ["time", "length", "volume"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellFile {
    pub id: u32,
    pub v: f64,
    pub w: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub lanes: u32,
    pub jam: f64,
    pub capacity: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub units: BTreeMap<String, String>,
    #[serde(default)]
    pub comment: String,
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub cells: Vec<CellFile>,
    pub adjacency: Vec<(u32, u32)>,
    pub sources: Vec<u32>,
    pub sinks: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    pub inflow: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub merge_priorities: BTreeMap<String, BTreeMap<String, f64>>,
}

fn parse_id(s: &str) -> Result<u32> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{s}' is not a cell id")))
}

fn parse_pair(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("routing key '{s}' must look like \"i,j\"")))?;
    Ok((parse_id(a)?, parse_id(b)?))
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        for key in REQUIRED_UNITS {
            if !self.units.contains_key(key) {
                return Err(Error::Config(format!("units header lacks '{key}'")));
            }
        }
        let cells = self
            .cells
            .iter()
            .map(|c| Cell::new(c.id, c.v, c.w, c.length, c.lanes, c.jam, c.capacity.clone(), self.tau))
            .collect();
        let mut network = Network::new(cells, &self.adjacency, &self.sources, &self.sinks)
            .map_err(|e| Error::Config(e.to_string()))?;
        for (down, entries) in &self.merge_priorities {
            let p = entries
                .iter()
                .map(|(k, &v)| Ok((parse_id(k)?, v)))
                .collect::<Result<Vec<_>>>()?;
            network
                .set_priorities(parse_id(down)?, &p)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        let idx = |id: u32| {
            network
                .index_of(id)
                .ok_or_else(|| Error::Config(format!("unknown cell id {id}")))
        };
        let routing = match &self.routing {
            None => None,
            Some(map) => {
                let mut ratios = BTreeMap::new();
                for (k, series) in map {
                    let (a, b) = parse_pair(k)?;
                    ratios.insert((idx(a)?, idx(b)?), series.clone());
                }
                Some(RoutingSchedule { ratios })
            }
        };
        let mut inflow = vec![Vec::new(); network.len()];
        for (k, series) in &self.inflow {
            inflow[idx(parse_id(k)?)?] = series.clone();
        }
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; network.len()]);
        Ok(Scenario {
            network,
            horizon: self.horizon,
            tau: self.tau,
            x0,
            inflow,
            routing,
            comment: self.comment,
        })
    }

    pub fn from_scenario(s: &Scenario) -> ScenarioFile {
        let net = &s.network;
        let tau = s.tau;
        let cells = net
            .cells
            .iter()
            .map(|c| CellFile {
                id: c.id,
                v: c.v,
                w: c.w,
                length: c.length,
                lanes: c.lanes,
                jam: c.diagram.jam_volume,
                capacity: c.diagram.capacity.clone(),
            })
            .collect();
        let routing = s.routing.as_ref().map(|r| {
            r.ratios
                .iter()
                .map(|(&(i, j), v)| (format!("{},{}", net.id(i), net.id(j)), v.clone()))
                .collect()
        });
        let inflow = s
            .inflow
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(i, v)| (net.id(i).to_string(), v.clone()))
            .collect();
        let merge_priorities = net
            .priorities
            .iter()
            .map(|(&j, p)| {
                (
                    net.id(j).to_string(),
                    p.iter().map(|&(i, w)| (net.id(i).to_string(), w)).collect(),
                )
            })
            .collect();
        ScenarioFile {
            units: default_units(),
            comment: s.comment.clone(),
            tau,
            horizon: s.horizon,
            cells,
            adjacency: net.edges.iter().map(|&(i, j)| (net.id(i), net.id(j))).collect(),
            sources: net.sources.iter().map(|&i| net.id(i)).collect(),
            sinks: net.sinks.iter().map(|&i| net.id(i)).collect(),
            routing,
            inflow,
            x0: Some(s.x0.clone()),
            merge_priorities,
        }
    }
}

pub fn default_units() -> BTreeMap<String, String> {
    [
        ("time", "s"),
        ("length", "ft"),
        ("volume", "veh"),
        ("flow", "veh/step"),
        ("speed", "ft/s"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn scenario_to_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serializes")
}
