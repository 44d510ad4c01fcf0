//! Path grouping under one-sided angle separation.
//!
//! When the AoAs are separated, every receive support `M_l` holds a single
//! path, so after per-antenna delay compensation the link is a flat MIMO
//! channel. Paths whose transmit supports overlap are grouped and each group
//! gets its own small eigenmode transmission. The AoD-separated case is the
//! mirror image with transmit-side delay pre-compensation.

use thiserror::Error;

use crate::array_geometry::LensArrayConfig;
use crate::channel_model::PathSet;
use crate::numerics::{significant_power_gains, singular_values, water_filled_rate, ComplexMatrix, NumericsError};
use crate::selection::{support_sets, SupportSets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupingError {
    #[error("neither the AoAs nor the AoDs are sufficiently separated")]
    NotSeparated,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Separation {
    Both,
    AoaSeparated,
    AodSeparated,
    Neither,
}

impl Separation {
    /// Side whose supports hold one path each, if any. `Both` uses the AoA side.
    pub fn separated_side(self) -> Option<Side> {
        match self {
            Self::Both | Self::AoaSeparated => Some(Side::Receive),
            Self::AodSeparated => Some(Side::Transmit),
            Self::Neither => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Receive,
    Transmit,
}

fn pairwise_disjoint(sets: &[Vec<i64>]) -> bool {
    sets.iter()
        .enumerate()
        .all(|(i, a)| sets[i + 1..].iter().all(|b| !overlaps(a, b)))
}

/// A side is separated when its supports are pairwise disjoint. A pairwise
/// gap `|phi_l - phi_l'| > 2 delta / D` is sufficient; disjointness also
/// admits gaps of exactly `2 delta / D` between exactly focused paths.
pub fn check_separation(paths: &PathSet, tx: &LensArrayConfig, rx: &LensArrayConfig, delta: u32) -> Separation {
    separation_of(&support_sets(paths, tx, rx, delta))
}

pub fn separation_of(sets: &SupportSets) -> Separation {
    match (pairwise_disjoint(&sets.rx), pairwise_disjoint(&sets.tx)) {
        (true, true) => Separation::Both,
        (true, false) => Separation::AoaSeparated,
        (false, true) => Separation::AodSeparated,
        (false, false) => Separation::Neither,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    /// Path indices per group, each sorted; groups ordered by first path.
    pub groups: Vec<Vec<usize>>,
    /// `M̄_g`, sorted element indices.
    pub rx_subsets: Vec<Vec<i64>>,
    /// `Q̄_g`, sorted element indices.
    pub tx_subsets: Vec<Vec<i64>>,
    /// The separated side (the other side is grouped).
    pub separated: Side,
}

impl GroupPartition {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn overlaps(a: &[i64], b: &[i64]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

fn merged(sets: &[Vec<i64>], members: &[usize]) -> Vec<i64> {
    let mut all: Vec<i64> = members.iter().flat_map(|&l| sets[l].iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Connected components of the support-overlap graph on the side opposite
/// to the separated one.
pub fn group_paths(sets: &SupportSets, separation: Separation) -> Result<GroupPartition, GroupingError> {
    let separated = separation.separated_side().ok_or(GroupingError::NotSeparated)?;
    let grouped = match separated {
        Side::Receive => &sets.tx,
        Side::Transmit => &sets.rx,
    };
    let n = grouped.len();
    let mut dsu = DisjointSets::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if overlaps(&grouped[i], &grouped[j]) {
                dsu.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for l in 0..n {
        let root = dsu.find(l);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(l);
    }
    Ok(GroupPartition {
        rx_subsets: groups.iter().map(|g| merged(&sets.rx, g)).collect(),
        tx_subsets: groups.iter().map(|g| merged(&sets.tx, g)).collect(),
        groups,
        separated,
    })
}

fn response(cfg: &LensArrayConfig, indices: &[i64], spatial: f64) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(indices.len(), indices.iter().map(|&m| cfg.element_response(m, spatial)))
}

/// Channel over `rows x cols` (element indices) after delay compensation on
/// the separated side: row `m` (or column `q`) carries only the path whose
/// support on that side contains it. Rows/columns outside every support are zero.
fn compensated(
    paths: &PathSet,
    sets: &SupportSets,
    separated: Side,
    tx: &LensArrayConfig,
    rx: &LensArrayConfig,
    rows: &[i64],
    cols: &[i64],
) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(rows.len(), cols.len());
    for (l, p) in paths.paths().iter().enumerate() {
        let mut ar = response(rx, rows, p.aoa);
        let mut at = response(tx, cols, p.aod);
        match separated {
            Side::Receive => ar.iter_mut().zip(rows).for_each(|(v, m)| {
                if sets.rx[l].binary_search(m).is_err() {
                    *v = 0.0;
                }
            }),
            Side::Transmit => at.iter_mut().zip(cols).for_each(|(v, q)| {
                if sets.tx[l].binary_search(q).is_err() {
                    *v = 0.0;
                }
            }),
        }
        for (i, a) in ar.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in at.iter().enumerate() {
                h[(i, j)] += p.gain * (a * b);
            }
        }
    }
    h
}

/// Delay-compensated flat channel `H_S` over `M_S x Q_S`.
pub fn compensated_channel(
    paths: &PathSet,
    sets: &SupportSets,
    separated: Side,
    tx: &LensArrayConfig,
    rx: &LensArrayConfig,
) -> ComplexMatrix {
    compensated(paths, sets, separated, tx, rx, &sets.rx_union, &sets.tx_union)
}

/// Per-group channels `H̄_g` over `M̄_g x Q̄_g`; each is the matching diagonal
/// block of [`compensated_channel`].
pub fn group_channels(
    paths: &PathSet,
    sets: &SupportSets,
    partition: &GroupPartition,
    tx: &LensArrayConfig,
    rx: &LensArrayConfig,
) -> Vec<ComplexMatrix> {
    (0..partition.len())
        .map(|g| {
            compensated(
                paths,
                sets,
                partition.separated,
                tx,
                rx,
                &partition.rx_subsets[g],
                &partition.tx_subsets[g],
            )
        })
        .collect()
}

/// Eigenmode transmission over all groups with one water-filling across the
/// pooled eigen-gains, bps/Hz.
pub fn grouped_capacity(channels: &[ComplexMatrix], power: f64, noise: f64) -> Result<f64, GroupingError> {
    let mut gains = Vec::new();
    for h in channels {
        gains.extend(significant_power_gains(&singular_values(h)?));
    }
    if gains.is_empty() {
        return Ok(0.0);
    }
    Ok(water_filled_rate(&gains, power, noise)?)
}
