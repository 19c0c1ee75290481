use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular grid on the probability simplex over `n` states: beliefs whose
/// coordinates are multiples of `δ = 1/resolution`.
/// How a belief between nodes is read off the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Nearest node.
    Nearest,
    /// Convex combination of the vertices of the enclosing cell of the
    /// Freudenthal triangulation.
    #[default]
    Barycentric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridShape", try_from = "GridShape")]
pub struct SimplexGrid {
    pub n_states: usize,
    pub resolution: usize,
    pub projection: Projection,
    /// Integer compositions of `resolution`, in lexicographic order.
    pub nodes: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
}

/// Serialized form: the nodes are regenerated on load.
#[derive(Serialize, Deserialize)]
struct GridShape {
    n_states: usize,
    resolution: usize,
    #[serde(default)]
    projection: Projection,
}

impl From<SimplexGrid> for GridShape {
    fn from(g: SimplexGrid) -> Self {
        Self {
            n_states: g.n_states,
            resolution: g.resolution,
            projection: g.projection,
        }
    }
}

impl TryFrom<GridShape> for SimplexGrid {
    type Error = Error;

    fn try_from(s: GridShape) -> Result<Self> {
        Ok(SimplexGrid::new(s.n_states, s.resolution)?.with_projection(s.projection))
    }
}

const MAX_NODES: usize = 2_000_000;

fn count(n: usize, r: usize) -> Option<usize> {
    // binomial(r + n - 1, n - 1)
    let mut c: u128 = 1;
    for i in 0..(n - 1) {
        c = c * (r + n - 1 - i) as u128 / (i + 1) as u128;
        if c > MAX_NODES as u128 {
            return None;
        }
    }
    Some(c as usize)
}

impl SimplexGrid {
    pub fn new(n_states: usize, resolution: usize) -> Result<Self> {
        if n_states == 0 || resolution == 0 {
            return Err(Error::invalid("simplex grid needs n_states >= 1 and resolution >= 1"));
        }
        if count(n_states, resolution).is_none() {
            return Err(Error::invalid(format!("simplex grid would exceed {MAX_NODES} nodes")));
        }
        let mut nodes = Vec::new();
        let mut cur = vec![0u32; n_states];
        compositions(&mut cur, 0, resolution as u32, &mut nodes);
        let lookup = nodes.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        Ok(Self {
            n_states,
            resolution,
            projection: Projection::default(),
            nodes,
            lookup,
        })
    }

    /// Grid with mesh `δ`, rounded to the nearest `1/N`.
    pub fn with_mesh(n_states: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("mesh must lie in (0, 1]"));
        }
        Self::new(n_states, (1.0 / delta).round() as usize)
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mesh(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn belief(&self, k: usize) -> Vec<f64> {
        let r = self.resolution as f64;
        self.nodes[k].iter().map(|&c| c as f64 / r).collect()
    }

    pub fn index_of(&self, composition: &[u32]) -> Option<usize> {
        self.lookup.get(composition).copied()
    }

    /// Nearest node by largest-remainder rounding of `z·N` (ties to the lower
    /// state index).
    pub fn project(&self, z: &[f64]) -> usize {
        let r = self.resolution;
        let scaled: Vec<f64> = z.iter().map(|v| v.max(0.0) * r as f64).collect();
        let total: f64 = scaled.iter().sum();
        let scaled: Vec<f64> = if total > 0.0 {
            scaled.iter().map(|v| v * r as f64 / total).collect()
        } else {
            vec![r as f64 / z.len() as f64; z.len()]
        };
        let mut c: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let used: u32 = c.iter().sum();
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by(|&i, &j| {
            let (ri, rj) = (scaled[i] - scaled[i].floor(), scaled[j] - scaled[j].floor());
            rj.partial_cmp(&ri).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
        });
        let mut left = (r as u32).saturating_sub(used);
        for &i in order.iter().cycle().take(left as usize * 2 + z.len()) {
            if left == 0 {
                break;
            }
            c[i] += 1;
            left -= 1;
        }
        self.lookup[&c]
    }
}

impl SimplexGrid {
    /// Nodes and weights representing `z` under the grid's projection rule.
    pub fn represent(&self, z: &[f64]) -> Vec<(usize, f64)> {
        match self.projection {
            Projection::Nearest => vec![(self.project(z), 1.0)],
            Projection::Barycentric => self.barycentric(z),
        }
    }

    /// Freudenthal interpolation in cumulative coordinates
    /// `c_i = N Σ_{j ≥ i} z_j`: the enclosing cell has vertices
    /// `⌊c⌋ + e_{p_1} + … + e_{p_k}` with `p` ordering the fractional parts
    /// decreasingly.
    pub fn barycentric(&self, z: &[f64]) -> Vec<(usize, f64)> {
        let n = self.n_states;
        let r = self.resolution as f64;
        let total: f64 = z.iter().map(|v| v.max(0.0)).sum();
        let mut c = vec![0.0; n + 1];
        for i in (0..n).rev() {
            c[i] = c[i + 1] + z[i].max(0.0) / total * r;
        }
        c[0] = r;
        for v in &mut c {
            if (*v - v.round()).abs() < 1e-9 {
                *v = v.round();
            }
        }
        let base: Vec<i64> = c.iter().map(|v| v.floor() as i64).collect();
        let frac: Vec<f64> = c.iter().zip(&base).map(|(v, b)| (v - *b as f64).clamp(0.0, 1.0)).collect();
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&i, &j| frac[j].partial_cmp(&frac[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
        let mut out = Vec::with_capacity(n);
        let mut vertex = base.clone();
        let mut prev = 1.0;
        for k in 0..=order.len() {
            let next = if k < order.len() { frac[order[k]] } else { 0.0 };
            let w = prev - next;
            if w > 0.0 {
                let comp: Vec<u32> = (0..n).map(|i| (vertex[i] - vertex[i + 1]).max(0) as u32).collect();
                match self.index_of(&comp) {
                    Some(idx) => out.push((idx, w)),
                    // rounding pushed the vertex off the simplex
                    None => out.push((self.project(z), w)),
                }
            }
            if k < order.len() {
                vertex[order[k]] += 1;
                prev = next;
            }
        }
        out
    }
}

fn compositions(cur: &mut Vec<u32>, i: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.clone());
        return;
    }
    for v in 0..=left {
        cur[i] = v;
        compositions(cur, i + 1, left - v, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        assert_eq!(SimplexGrid::new(2, 200).unwrap().len(), 201);
        assert_eq!(SimplexGrid::new(3, 4).unwrap().len(), 15);
        assert_eq!(SimplexGrid::new(1, 7).unwrap().len(), 1);
    }

    #[test]
    fn projection_is_exact_on_nodes_and_close_elsewhere() {
        let g = SimplexGrid::new(3, 10).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.project(&g.belief(k)), k);
        }
        let z = [0.333, 0.333, 0.334];
        let b = g.belief(g.project(&z));
        let l1: f64 = b.iter().zip(&z).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 3.0 / 10.0);
        assert_eq!(b.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn barycentric_reproduces_the_belief() {
        let g = SimplexGrid::new(3, 7).unwrap();
        for z in [[0.2, 0.5, 0.3], [0.0, 0.01, 0.99], [1.0, 0.0, 0.0], [0.123, 0.456, 0.421]] {
            let rep = g.barycentric(&z);
            let wsum: f64 = rep.iter().map(|(_, w)| w).sum();
            assert!((wsum - 1.0).abs() < 1e-12);
            for i in 0..3 {
                let zi: f64 = rep.iter().map(|(k, w)| w * g.belief(*k)[i]).sum();
                assert!((zi - z[i]).abs() < 1e-12, "{z:?} {rep:?}");
            }
        }
        for k in 0..g.len() {
            assert_eq!(g.barycentric(&g.belief(k)), vec![(k, 1.0)]);
        }
    }
}
