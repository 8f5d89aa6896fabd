//! Friends-of-friends halo finding on periodic particle sets, plus the
//! halo-abundance gate.
//!
//! Two particles are friends when their minimum-image distance is at most
//! the linking length; halos are connected components with at least
//! `n_min` members. Halo ids are assigned in order of each halo's
//! smallest particle index, so the labeling is independent of traversal
//! order.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::datamodel::ParticleSet;
use crate::error::{Error, Result};

pub const DEFAULT_N_MIN: usize = 10;
pub const DEFAULT_HALO_TOL: f64 = 0.02;

/// Conventional linking length: 0.2 of the mean inter-particle spacing.
pub fn default_linking_length(box_length: f64, n_particles: usize) -> f64 {
    0.2 * box_length / (n_particles as f64).cbrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Halo {
    /// 1-based id; 0 in `assignments` means unassigned.
    pub id: u32,
    pub count: usize,
    /// Member particle indices, ascending.
    pub members: Vec<usize>,
    /// Center of mass, wrapped into the box (computed via minimum-image
    /// displacements from the smallest-index member, so it is seam-safe).
    pub com: [f64; 3],
    /// Member with the most in-halo neighbors within the linking length
    /// (ties fall to the lowest index).
    pub most_connected: usize,
    /// Member with the lowest potential energy under softened 1/r
    /// pairwise attraction (ties fall to the lowest index).
    pub most_bound: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaloCatalog {
    pub box_length: f64,
    pub particle_mass: f64,
    pub linking_length: f64,
    pub n_min: usize,
    /// Halo id per particle; 0 = not in any halo.
    pub assignments: Vec<u32>,
    pub halos: Vec<Halo>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Linked-cell acceleration grid. Cell width is at least the linking
/// length, so 27 neighboring cells cover every possible friend.
struct CellGrid {
    ncell: usize,
    head: Vec<usize>,
    next: Vec<usize>,
    cell_of: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl CellGrid {
    fn build(set: &ParticleSet, linking_length: f64) -> Self {
        // Cap the cell count to bound memory; any ncell below
        // box/linking_length keeps the neighborhood property.
        let ncell = ((set.box_length / linking_length) as usize).clamp(1, 128);
        let n = set.len();
        let mut head = vec![NONE; ncell * ncell * ncell];
        let mut next = vec![NONE; n];
        let mut cell_of = vec![0usize; n];
        for i in 0..n {
            let c = Self::cell_index(set, i, ncell);
            cell_of[i] = c;
            next[i] = head[c];
            head[c] = i;
        }
        CellGrid { ncell, head, next, cell_of }
    }

    fn cell_index(set: &ParticleSet, i: usize, ncell: usize) -> usize {
        let mut c = 0usize;
        for axis in 0..3 {
            let x = set.pos[axis][i] as f64;
            let a = ((x / set.box_length) * ncell as f64) as usize;
            c = c * ncell + a.min(ncell - 1);
        }
        c
    }

    /// The (up to) 27 cells around `cell`, deduplicated when the grid is
    /// so coarse that wrapped offsets collide.
    fn neighbors<'a>(&self, cell: usize, buf: &'a mut [usize; 27]) -> &'a [usize] {
        let nc = self.ncell;
        let c2 = cell % nc;
        let c1 = (cell / nc) % nc;
        let c0 = cell / (nc * nc);
        let mut len = 0;
        for da in 0..3 {
            let a = (c0 + nc + da - 1) % nc;
            for db in 0..3 {
                let b = (c1 + nc + db - 1) % nc;
                for dc in 0..3 {
                    let c = (c2 + nc + dc - 1) % nc;
                    buf[len] = (a * nc + b) * nc + c;
                    len += 1;
                }
            }
        }
        if nc < 3 {
            let out = &mut buf[..len];
            out.sort_unstable();
            let mut uniq = 0;
            for t in 0..out.len() {
                if t == 0 || out[t] != out[uniq - 1] {
                    out[uniq] = out[t];
                    uniq += 1;
                }
            }
            len = uniq;
        }
        &buf[..len]
    }
}

#[inline]
fn position(set: &ParticleSet, i: usize) -> [f64; 3] {
    [set.pos[0][i] as f64, set.pos[1][i] as f64, set.pos[2][i] as f64]
}

#[inline]
fn min_image_d2(p: [f64; 3], q: [f64; 3], box_length: f64) -> f64 {
    let mut sum = 0.0;
    for a in 0..3 {
        let mut d = (p[a] - q[a]).abs();
        if d > box_length / 2.0 {
            d = box_length - d;
        }
        sum += d * d;
    }
    sum
}

pub fn fof_halos(set: &ParticleSet, linking_length: f64, n_min: usize) -> Result<HaloCatalog> {
    if !(linking_length.is_finite() && linking_length > 0.0) {
        return Err(Error::Domain(format!("linking length must be positive, got {linking_length}")));
    }
    if linking_length >= set.box_length / 2.0 {
        return Err(Error::Domain(format!(
            "linking length {linking_length} must be below half the box ({})",
            set.box_length / 2.0
        )));
    }
    if n_min == 0 {
        return Err(Error::Config("minimum halo size must be at least 1".into()));
    }
    let n = set.len();
    let ll2 = linking_length * linking_length;
    let grid = CellGrid::build(set, linking_length);
    let mut uf = UnionFind::new(n);
    let mut buf = [0usize; 27];
    for i in 0..n {
        let pi = position(set, i);
        for &cell in grid.neighbors(grid.cell_of[i], &mut buf) {
            let mut j = grid.head[cell];
            while j != NONE {
                if j < i && min_image_d2(pi, position(set, j), set.box_length) <= ll2 {
                    uf.union(i, j);
                }
                j = grid.next[j];
            }
        }
    }

    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> =
        by_root.into_values().filter(|g| g.len() >= n_min).collect();
    groups.sort_by_key(|g| g[0]);

    let mut assignments = vec![0u32; n];
    for (t, group) in groups.iter().enumerate() {
        for &m in group {
            assignments[m] = (t + 1) as u32;
        }
    }
    let halos = groups
        .into_iter()
        .enumerate()
        .map(|(t, members)| {
            let id = (t + 1) as u32;
            Halo {
                id,
                count: members.len(),
                com: center_of_mass(set, &members),
                most_connected: most_connected(set, &grid, &assignments, id, &members, ll2),
                most_bound: most_bound(set, &members, linking_length),
                members,
            }
        })
        .collect();
    Ok(HaloCatalog {
        box_length: set.box_length,
        particle_mass: set.particle_mass,
        linking_length,
        n_min,
        assignments,
        halos,
    })
}

fn center_of_mass(set: &ParticleSet, members: &[usize]) -> [f64; 3] {
    let refp = position(set, members[0]);
    let mut com = [0.0f64; 3];
    for axis in 0..3 {
        let mut sum = 0.0;
        for &m in members {
            let mut d = set.pos[axis][m] as f64 - refp[axis];
            if d > set.box_length / 2.0 {
                d -= set.box_length;
            } else if d < -set.box_length / 2.0 {
                d += set.box_length;
            }
            sum += d;
        }
        com[axis] = (refp[axis] + sum / members.len() as f64).rem_euclid(set.box_length);
    }
    com
}

fn most_connected(
    set: &ParticleSet,
    grid: &CellGrid,
    assignments: &[u32],
    id: u32,
    members: &[usize],
    ll2: f64,
) -> usize {
    let mut best = (0usize, members[0]);
    let mut buf = [0usize; 27];
    for &m in members {
        let pm = position(set, m);
        let mut count = 0usize;
        for &cell in grid.neighbors(grid.cell_of[m], &mut buf) {
            let mut j = grid.head[cell];
            while j != NONE {
                if j != m
                    && assignments[j] == id
                    && min_image_d2(pm, position(set, j), set.box_length) <= ll2
                {
                    count += 1;
                }
                j = grid.next[j];
            }
        }
        if count > best.0 {
            best = (count, m);
        }
    }
    best.1
}

fn most_bound(set: &ParticleSet, members: &[usize], linking_length: f64) -> usize {
    let softening = 0.01 * linking_length;
    let mut phi = vec![0.0f64; members.len()];
    for a in 0..members.len() {
        let pa = position(set, members[a]);
        for b in a + 1..members.len() {
            let r = min_image_d2(pa, position(set, members[b]), set.box_length).sqrt();
            let w = set.particle_mass / r.max(softening);
            phi[a] -= w;
            phi[b] -= w;
        }
    }
    let mut best = 0usize;
    for t in 1..members.len() {
        if phi[t] < phi[best] {
            best = t;
        }
    }
    members[best]
}

/// Count halos per mass bin. `bin_edges` must be strictly increasing;
/// halos outside the edges are ignored.
pub fn halo_mass_function(catalog: &HaloCatalog, bin_edges: &[f64]) -> Result<Vec<u64>> {
    validate_edges(bin_edges)?;
    let mut counts = vec![0u64; bin_edges.len() - 1];
    for halo in &catalog.halos {
        let mass = halo.count as f64 * catalog.particle_mass;
        if mass < bin_edges[0] || mass >= *bin_edges.last().unwrap() {
            continue;
        }
        let bin = bin_edges.partition_point(|&e| e <= mass) - 1;
        counts[bin] += 1;
    }
    Ok(counts)
}

fn validate_edges(bin_edges: &[f64]) -> Result<()> {
    if bin_edges.len() < 2 {
        return Err(Error::Config("need at least two mass bin edges".into()));
    }
    if bin_edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("mass bin edges must be finite".into()));
    }
    if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("mass bin edges must increase: {bin_edges:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaloBin {
    pub lo: f64,
    pub hi: f64,
    pub orig: u64,
    pub recon: u64,
    pub ratio: f64,
}

/// Outcome of the halo-abundance gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaloGate {
    pub tol: f64,
    pub bins: Vec<HaloBin>,
    /// Bins with no halos in the original, excluded from the verdict.
    pub excluded_empty: usize,
    pub pass: bool,
}

/// Compare per-bin halo counts. Passes when every bin that is populated
/// in the original has `recon/orig` within `[1 - tol, 1 + tol]`.
pub fn halo_count_ratio(
    bin_edges: &[f64],
    orig: &[u64],
    recon: &[u64],
    tol: f64,
) -> Result<HaloGate> {
    validate_edges(bin_edges)?;
    if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("halo tolerance must be in (0, 1), got {tol}")));
    }
    if orig.len() != bin_edges.len() - 1 || recon.len() != orig.len() {
        return Err(Error::DimsMismatch {
            left: vec![orig.len(), recon.len()],
            right: vec![bin_edges.len() - 1],
        });
    }
    let mut bins = Vec::new();
    let mut excluded_empty = 0usize;
    let mut pass = true;
    for (t, (&o, &r)) in orig.iter().zip(recon).enumerate() {
        if o == 0 {
            excluded_empty += 1;
            continue;
        }
        let ratio = r as f64 / o as f64;
        if (ratio - 1.0).abs() > tol {
            pass = false;
        }
        bins.push(HaloBin { lo: bin_edges[t], hi: bin_edges[t + 1], orig: o, recon: r, ratio });
    }
    Ok(HaloGate { tol, bins, excluded_empty, pass })
}
