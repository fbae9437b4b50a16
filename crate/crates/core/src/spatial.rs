//! Spatial side data: district adjacency with derived path distances, and
//! airport locations with district-to-airport road distances.

use ndarray::Array2;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::panel::UnitIndex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Airport {
    pub id: String,
    pub region: String,
}

/// Adjacency, hop-count path distances, and airport distances for one unit
/// index. Path distances come from BFS on the adjacency graph; unreachable
/// pairs are +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialStructure {
    unit_ids: Vec<String>,
    adjacency: Array2<bool>,
    path_distance: Array2<f64>,
    airports: Vec<Airport>,
    airport_region: Vec<usize>,
    /// unit x airport distance in kilometres.
    airport_km: Array2<f64>,
    /// Airport indices serving each region, in airport order.
    airports_of_region: Vec<Vec<usize>>,
}

impl SpatialStructure {
    /// Build from a symmetric adjacency matrix; airports may be empty for
    /// purely autoregressive models.
    pub fn from_adjacency(
        units: &UnitIndex,
        adjacency: Array2<bool>,
        airports: Vec<Airport>,
        airport_km: Array2<f64>,
    ) -> Result<Self> {
        let p = units.len();
        if adjacency.nrows() != p || adjacency.ncols() != p {
            return Err(Error::invalid(format!(
                "adjacency is {}x{}, expected {p}x{p}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..p {
            if adjacency[(i, i)] {
                return Err(Error::invalid(format!(
                    "district {} is marked adjacent to itself",
                    units.district_id(i)
                )));
            }
            for j in 0..p {
                if adjacency[(i, j)] != adjacency[(j, i)] {
                    return Err(Error::invalid(format!(
                        "adjacency must be symmetric, differs for {} and {}",
                        units.district_id(i),
                        units.district_id(j)
                    )));
                }
            }
        }
        if airport_km.nrows() != p || airport_km.ncols() != airports.len() {
            return Err(Error::invalid(format!(
                "airport distance matrix is {}x{}, expected {p}x{}",
                airport_km.nrows(),
                airport_km.ncols(),
                airports.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &airports {
            if !seen.insert(a.id.clone()) {
                return Err(Error::invalid(format!("duplicate airport id {}", a.id)));
            }
        }
        for v in airport_km.iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::invalid(
                    "airport distances must be finite and nonnegative",
                ));
            }
        }
        let mut airport_region = Vec::with_capacity(airports.len());
        let mut airports_of_region = vec![Vec::new(); units.n_regions()];
        for (k, a) in airports.iter().enumerate() {
            let r = units
                .regions()
                .iter()
                .position(|reg| *reg == a.region)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "airport {} assigned to unknown region {}",
                        a.id, a.region
                    ))
                })?;
            airport_region.push(r);
            airports_of_region[r].push(k);
        }
        let path_distance = bfs_hops(&adjacency);
        Ok(SpatialStructure {
            unit_ids: units.districts().iter().map(|d| d.id.clone()).collect(),
            adjacency,
            path_distance,
            airports,
            airport_region,
            airport_km,
            airports_of_region,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn adjacency(&self) -> &Array2<bool> {
        &self.adjacency
    }

    /// Hop counts between units; +inf when unreachable.
    pub fn path_distance(&self) -> &Array2<f64> {
        &self.path_distance
    }

    pub fn airports(&self) -> &[Airport] {
        &self.airports
    }

    pub fn airport_region(&self, airport: usize) -> usize {
        self.airport_region[airport]
    }

    pub fn airport_km(&self) -> &Array2<f64> {
        &self.airport_km
    }

    pub fn airports_of_region(&self, region: usize) -> &[usize] {
        &self.airports_of_region[region]
    }

    pub fn airport_position(&self, airport_id: &str) -> Option<usize> {
        self.airports.iter().position(|a| a.id == airport_id)
    }
}

fn bfs_hops(adjacency: &Array2<bool>) -> Array2<f64> {
    let p = adjacency.nrows();
    let mut dist = Array2::from_elem((p, p), f64::INFINITY);
    let mut queue = VecDeque::new();
    for start in 0..p {
        dist[(start, start)] = 0.0;
        queue.clear();
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            let next = dist[(start, v)] + 1.0;
            for w in 0..p {
                if adjacency[(v, w)] && dist[(start, w)].is_infinite() {
                    dist[(start, w)] = next;
                    queue.push_back(w);
                }
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::District;

    fn units(n: usize) -> UnitIndex {
        UnitIndex::new(
            (0..n)
                .map(|i| District {
                    id: format!("d{i}"),
                    region: "r".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn adj_from_edges(n: usize, edges: &[(usize, usize)]) -> Array2<bool> {
        let mut a = Array2::from_elem((n, n), false);
        for &(i, j) in edges {
            a[(i, j)] = true;
            a[(j, i)] = true;
        }
        a
    }

    #[test]
    fn path_distance_counts_hops_on_a_path_graph() {
        let u = units(4);
        let adj = adj_from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let s = SpatialStructure::from_adjacency(&u, adj, vec![], Array2::zeros((4, 0))).unwrap();
        let o = s.path_distance();
        assert_eq!(o[(0, 0)], 0.0);
        assert_eq!(o[(0, 1)], 1.0);
        assert_eq!(o[(0, 2)], 2.0);
        assert_eq!(o[(0, 3)], 3.0);
        assert_eq!(o[(3, 0)], 3.0);
        // adjacency holds exactly where hop count is 1
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.adjacency()[(i, j)], o[(i, j)] == 1.0);
            }
        }
    }

    #[test]
    fn disconnected_pairs_get_infinite_distance() {
        let u = units(3);
        let adj = adj_from_edges(3, &[(0, 1)]);
        let s = SpatialStructure::from_adjacency(&u, adj, vec![], Array2::zeros((3, 0))).unwrap();
        assert!(s.path_distance()[(0, 2)].is_infinite());
        assert_eq!(s.path_distance()[(2, 2)], 0.0);
    }

    #[test]
    fn rejects_asymmetric_or_self_adjacency() {
        let u = units(2);
        let mut a = Array2::from_elem((2, 2), false);
        a[(0, 1)] = true;
        assert!(SpatialStructure::from_adjacency(&u, a, vec![], Array2::zeros((2, 0))).is_err());
        let mut b = Array2::from_elem((2, 2), false);
        b[(0, 0)] = true;
        assert!(SpatialStructure::from_adjacency(&u, b, vec![], Array2::zeros((2, 0))).is_err());
    }

    #[test]
    fn airports_map_to_known_regions() {
        let u = units(2);
        let adj = adj_from_edges(2, &[(0, 1)]);
        let airports = vec![Airport {
            id: "AAA".into(),
            region: "nowhere".into(),
        }];
        let err = SpatialStructure::from_adjacency(&u, adj.clone(), airports, Array2::zeros((2, 1)))
            .unwrap_err();
        assert!(err.to_string().contains("unknown region"));
        let ok = SpatialStructure::from_adjacency(
            &u,
            adj,
            vec![Airport {
                id: "AAA".into(),
                region: "r".into(),
            }],
            Array2::from_elem((2, 1), 12.5),
        )
        .unwrap();
        assert_eq!(ok.airports_of_region(0), &[0]);
    }
}
