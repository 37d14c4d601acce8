use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use super::config::NetworkConfig;
use super::SimError;
use crate::incident::Direction;

pub type CellId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub name: String,
    pub direction: Direction,
    /// Cells in driving order.
    pub cells: Vec<CellId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub cells: Vec<CellId>,
}

/// A named cross street resolving to the cells of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub road: String,
    pub direction: Direction,
    pub name: String,
    pub region: String,
}

/// Sensed cells, their downstream adjacency, and planted regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct RoadNetwork {
    cells: Vec<String>,
    adjacency: Vec<Vec<CellId>>,
    roads: Vec<Road>,
    regions: Vec<Region>,
    landmarks: Vec<Landmark>,
    index: HashMap<String, CellId>,
}

/// On-disk form keyed by cell identifier.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    cells: Vec<String>,
    adjacency: BTreeMap<String, Vec<String>>,
    roads: Vec<NamedCells>,
    regions: Vec<NamedCells>,
    landmarks: Vec<Landmark>,
}

#[derive(Serialize, Deserialize)]
struct NamedCells {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Direction>,
    cells: Vec<String>,
}

impl From<RoadNetwork> for NetworkFile {
    fn from(n: RoadNetwork) -> Self {
        let name = |c: &CellId| n.cells[*c].clone();
        NetworkFile {
            adjacency: n
                .adjacency
                .iter()
                .enumerate()
                .map(|(c, next)| (n.cells[c].clone(), next.iter().map(name).collect()))
                .collect(),
            roads: n
                .roads
                .iter()
                .map(|r| NamedCells {
                    name: r.name.clone(),
                    direction: Some(r.direction),
                    cells: r.cells.iter().map(name).collect(),
                })
                .collect(),
            regions: n
                .regions
                .iter()
                .map(|r| NamedCells {
                    name: r.name.clone(),
                    direction: None,
                    cells: r.cells.iter().map(name).collect(),
                })
                .collect(),
            landmarks: n.landmarks.clone(),
            cells: n.cells.clone(),
        }
    }
}

impl TryFrom<NetworkFile> for RoadNetwork {
    type Error = SimError;

    fn try_from(f: NetworkFile) -> Result<Self, SimError> {
        let index: HashMap<String, CellId> = f.cells.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let look = |id: &String| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| SimError::Network(format!("unknown cell {id}")))
        };
        let mut adjacency = vec![Vec::new(); f.cells.len()];
        for (from, to) in &f.adjacency {
            adjacency[look(from)?] = to.iter().map(look).collect::<Result<_, _>>()?;
        }
        let roads = f
            .roads
            .iter()
            .map(|r| {
                Ok(Road {
                    name: r.name.clone(),
                    direction: r.direction.unwrap_or_default(),
                    cells: r.cells.iter().map(look).collect::<Result<_, SimError>>()?,
                })
            })
            .collect::<Result<_, SimError>>()?;
        let regions = f
            .regions
            .iter()
            .map(|r| {
                Ok(Region {
                    name: r.name.clone(),
                    cells: r.cells.iter().map(look).collect::<Result<_, SimError>>()?,
                })
            })
            .collect::<Result<_, SimError>>()?;
        RoadNetwork::new(f.cells, adjacency, roads, regions, f.landmarks)
    }
}

const LANDMARK_POOL: &[&str] = &[
    "I-90", "NE-8TH", "SR-520", "NE-124TH", "MERCER", "SENECA", "NE-45TH", "NE-85TH", "COAL-CREEK", "SR-167",
    "PARK", "NE-195TH",
];

impl RoadNetwork {
    pub fn new(
        cells: Vec<String>,
        adjacency: Vec<Vec<CellId>>,
        roads: Vec<Road>,
        regions: Vec<Region>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, SimError> {
        let mut index = HashMap::new();
        for (i, c) in cells.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(SimError::Network(format!("duplicate cell {c}")));
            }
        }
        if adjacency.len() != cells.len() {
            return Err(SimError::Network("adjacency length mismatch".into()));
        }
        for (c, next) in adjacency.iter().enumerate() {
            if next.iter().any(|&n| n == c || n >= cells.len()) {
                return Err(SimError::Network(format!("bad adjacency at {}", cells[c])));
            }
        }
        let net = RoadNetwork {
            cells,
            adjacency,
            roads,
            regions,
            landmarks,
            index,
        };
        for r in &net.regions {
            if r.cells.is_empty() || !net.is_connected(&r.cells) {
                return Err(SimError::Network(format!("region {} is empty or disconnected", r.name)));
            }
        }
        for l in &net.landmarks {
            if net.region(&l.region).is_none() {
                return Err(SimError::Network(format!("landmark {} names unknown region", l.name)));
            }
        }
        Ok(net)
    }

    /// Lays out each road as gap, region, gap, region, ..., gap.
    pub fn from_config(cfg: &NetworkConfig) -> Result<Self, SimError> {
        let mut cells = Vec::new();
        let mut adjacency: Vec<Vec<CellId>> = Vec::new();
        let mut roads = Vec::new();
        let mut regions = Vec::new();
        let mut landmarks = Vec::new();
        let mut pool = 0usize;
        for road in &cfg.roads {
            let tag: String = road.name.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
            let dir = road.direction.code().unwrap_or("XX");
            let mut road_cells = Vec::new();
            let push = |cells: &mut Vec<String>, road_cells: &mut Vec<CellId>| {
                let id = cells.len();
                cells.push(format!("{tag}{dir}-{:02}", road_cells.len()));
                road_cells.push(id);
                id
            };
            for _ in 0..cfg.gap_cells {
                push(&mut cells, &mut road_cells);
            }
            for (k, name) in road.regions.iter().enumerate() {
                let rc: Vec<CellId> = (0..cfg.cells_per_region)
                    .map(|_| push(&mut cells, &mut road_cells))
                    .collect();
                regions.push(Region {
                    name: name.clone(),
                    cells: rc,
                });
                let landmark = road.landmarks.get(k).cloned().unwrap_or_else(|| {
                    let l = LANDMARK_POOL
                        .get(pool)
                        .map_or_else(|| format!("XING-{pool}"), |s| s.to_string());
                    pool += 1;
                    l
                });
                landmarks.push(Landmark {
                    road: road.name.clone(),
                    direction: road.direction,
                    name: landmark,
                    region: name.clone(),
                });
                for _ in 0..cfg.gap_cells {
                    push(&mut cells, &mut road_cells);
                }
            }
            adjacency.resize(cells.len(), Vec::new());
            for w in road_cells.windows(2) {
                adjacency[w[0]].push(w[1]);
            }
            roads.push(Road {
                name: road.name.clone(),
                direction: road.direction,
                cells: road_cells,
            });
        }
        RoadNetwork::new(cells, adjacency, roads, regions, landmarks)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cells
    }

    pub fn cell_id(&self, c: CellId) -> &str {
        &self.cells[c]
    }

    pub fn cell_index(&self, id: &str) -> Option<CellId> {
        self.index.get(id).copied()
    }

    pub fn downstream(&self, c: CellId) -> &[CellId] {
        &self.adjacency[c]
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// Static lookup of the cells an incident location refers to.
    pub fn resolve_landmark(&self, road: &str, direction: Direction, landmark: &str) -> Option<&[CellId]> {
        self.landmarks
            .iter()
            .find(|l| l.road == road && l.direction == direction && l.name == landmark)
            .and_then(|l| self.region(&l.region))
            .map(|r| r.cells.as_slice())
    }

    pub fn landmark_for_region(&self, region: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.region == region)
    }

    /// Adjacency ignoring direction.
    pub fn neighbors(&self, c: CellId) -> Vec<CellId> {
        let mut out: Vec<CellId> = self.adjacency[c].clone();
        for (o, next) in self.adjacency.iter().enumerate() {
            if next.contains(&c) && !out.contains(&o) {
                out.push(o);
            }
        }
        out
    }

    pub fn is_connected(&self, cells: &[CellId]) -> bool {
        let Some(&first) = cells.first() else {
            return true;
        };
        let mut seen = vec![first];
        let mut stack = vec![first];
        while let Some(c) = stack.pop() {
            for n in self.neighbors(c) {
                if cells.contains(&n) && !seen.contains(&n) {
                    seen.push(n);
                    stack.push(n);
                }
            }
        }
        seen.len() == cells.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        serde_json::from_str(s).map_err(|e| SimError::Network(e.to_string()))
    }
}
