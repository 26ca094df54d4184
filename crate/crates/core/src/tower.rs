//! End towers: finite truncations of the inverse system of unbounded
//! complementary components over a compact exhaustion.
//!
//! A tower records, per exhaustion level, the finite set of
//! unbounded-at-window components and the bonding surjection of each level
//! onto the previous one. Towers are compared up to bond-preserving,
//! label-independent isomorphism via a canonical code, can be mapped along
//! certified vertex maps, merged at a pair of pointed threads, and realized
//! by a rooted tree with the same layered structure.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::exhaust::{complement_components, ExhaustError, Exhaustion};
use crate::graph::{GraphGenerator, TowerTreeData, VertexId};

#[derive(Debug, Error)]
pub enum TowerError {
    #[error("depth out of range")]
    DepthOutOfRange,
    #[error("bad level or component indices")]
    BadIndices,
    #[error("towers have different depths")]
    DepthMismatch,
    #[error("prefix is not coherent with the tower bonds")]
    IncoherentPrefix,
    #[error("map is not proper at window scale: {0}")]
    NotProper(String),
    #[error("tower level became empty after normalization")]
    EmptyLevelAfterNormalization,
    #[error("tower carries no component vertex data")]
    MissingComponentData,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Exhaust(#[from] ExhaustError),
}

/// Where a tower came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Built from a graph exhaustion inside a window of the recorded radius.
    GraphDerived { window_radius: u32 },
    /// Imported from the `tower v1` format or built directly from level data.
    Imported,
    /// Merge of two towers at a pair of pointed threads.
    Quotient,
    /// Tower of a tree realization.
    RealizedTree,
    /// Result of eventual-image normalization. `stable` records whether the
    /// pruned level sets already agreed with the ones computed one level
    /// earlier, i.e. whether the finite data had visibly stabilized.
    Normalized { stable: bool },
}

/// A coherent thread of component indices through the first `depth` levels.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EndPrefix {
    pub thread: Vec<usize>,
}

impl EndPrefix {
    pub fn depth(&self) -> usize {
        self.thread.len()
    }
}

/// Finite truncation of the inverse system of unbounded complementary
/// components: per-level component ids and bonding maps.
#[derive(Debug, Clone)]
pub struct EndTower {
    /// Per level, component ids in increasing order. For graph-derived
    /// towers the id is the canonical representative vertex.
    levels: Vec<Vec<u64>>,
    /// `bonds[i][c]` is the index in level `i` of the parent of component
    /// `c` of level `i + 1`. Length is `depth - 1`.
    bonds: Vec<Vec<usize>>,
    /// Component vertex sets per level, present for graph-derived towers.
    comps: Option<Vec<Vec<BTreeSet<VertexId>>>>,
    provenance: Provenance,
}

/// Report on the visible end count of a tower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndsReport {
    /// Number of components at the deepest level; a lower bound for the
    /// number of ends.
    pub count_at_depth: usize,
    /// Heuristic: all bonds in the trailing half of the levels are
    /// bijections. A cofinal condition cannot be decided from a truncation.
    pub stabilized: bool,
    pub stabilized_count: Option<usize>,
}

/// Containment relation between two basic open sets of the end space,
/// each given as (level index, component index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicOpenRelation {
    Disjoint,
    /// The first set strictly contains the second.
    Contains,
    /// The first set is strictly contained in the second.
    Contained,
    Equal,
}

impl EndTower {
    /// Build the tower of an exhaustion: level `i` lists the
    /// unbounded-at-window components of the complement of the `i`-th
    /// compactum, and each component bonds to the unique component of the
    /// previous level containing it.
    pub fn build(exh: &Exhaustion) -> Result<EndTower, TowerError> {
        let window = exh.window();
        let mut levels: Vec<Vec<u64>> = Vec::with_capacity(exh.depth());
        let mut comps: Vec<Vec<BTreeSet<VertexId>>> = Vec::with_capacity(exh.depth());
        let mut bonds: Vec<Vec<usize>> = Vec::new();
        let mut prev_lookup: BTreeMap<VertexId, usize> = BTreeMap::new();
        for (i, k) in exh.levels().iter().enumerate() {
            let decomp = complement_components(window, k)?;
            let mut ids = Vec::new();
            let mut sets = Vec::new();
            let mut bond = Vec::new();
            let mut lookup = BTreeMap::new();
            for c in decomp.unbounded() {
                let idx = ids.len();
                ids.push(c.rep.0);
                if i > 0 {
                    // the component lies inside a unique previous-level
                    // component; locate it by any vertex
                    let parent = *prev_lookup
                        .get(&c.rep)
                        .expect("nested component has a parent");
                    bond.push(parent);
                }
                for &v in &c.vertices {
                    lookup.insert(v, idx);
                }
                sets.push(c.vertices.clone());
            }
            levels.push(ids);
            comps.push(sets);
            if i > 0 {
                bonds.push(bond);
            }
            prev_lookup = lookup;
        }
        let tower = EndTower {
            levels,
            bonds,
            comps: Some(comps),
            provenance: Provenance::GraphDerived {
                window_radius: window.radius(),
            },
        };
        debug_assert!(tower.bonds_surjective());
        Ok(tower)
    }

    /// Assemble a tower from per-level component vertex sets of a nested
    /// exhaustion. Components are sorted by their minimum vertex, and each
    /// component bonds to the unique component of the previous level
    /// containing it.
    pub(crate) fn from_component_sets(
        levels_in: Vec<Vec<BTreeSet<VertexId>>>,
        window_radius: u32,
    ) -> Result<EndTower, TowerError> {
        let mut levels = Vec::with_capacity(levels_in.len());
        let mut comps: Vec<Vec<BTreeSet<VertexId>>> = Vec::with_capacity(levels_in.len());
        let mut bonds = Vec::new();
        for (i, mut level) in levels_in.into_iter().enumerate() {
            if level.iter().any(BTreeSet::is_empty) {
                return Err(TowerError::BadIndices);
            }
            level.sort_by_key(|s| *s.iter().next().unwrap());
            let ids: Vec<u64> = level.iter().map(|s| s.iter().next().unwrap().0).collect();
            if i > 0 {
                let prev = &comps[i - 1];
                let mut bond = Vec::with_capacity(level.len());
                for s in &level {
                    let rep = s.iter().next().unwrap();
                    let parent = prev
                        .iter()
                        .position(|p| p.contains(rep))
                        .ok_or(TowerError::BadIndices)?;
                    bond.push(parent);
                }
                bonds.push(bond);
            }
            levels.push(ids);
            comps.push(level);
        }
        Ok(EndTower {
            levels,
            bonds,
            comps: Some(comps),
            provenance: Provenance::GraphDerived { window_radius },
        })
    }

    /// Assemble a tower from explicit level sizes and bonds. Component ids
    /// are the indices within each level.
    pub fn from_level_data(
        sizes: &[usize],
        bonds: Vec<Vec<usize>>,
    ) -> Result<EndTower, TowerError> {
        if sizes.is_empty() && !bonds.is_empty() {
            return Err(TowerError::BadIndices);
        }
        if !sizes.is_empty() && bonds.len() != sizes.len() - 1 {
            return Err(TowerError::BadIndices);
        }
        for (i, bond) in bonds.iter().enumerate() {
            if bond.len() != sizes[i + 1] {
                return Err(TowerError::BadIndices);
            }
            if bond.iter().any(|&p| p >= sizes[i]) {
                return Err(TowerError::BadIndices);
            }
        }
        Ok(EndTower {
            levels: sizes.iter().map(|&s| (0..s as u64).collect()).collect(),
            bonds,
            comps: None,
            provenance: Provenance::Imported,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level_size(&self, i: usize) -> usize {
        self.levels[i].len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn level_ids(&self, i: usize) -> &[u64] {
        &self.levels[i]
    }

    /// Parent index at level `i` of component `c` at level `i + 1`.
    pub fn bond(&self, i: usize, c: usize) -> usize {
        self.bonds[i][c]
    }

    pub fn bonds(&self) -> &[Vec<usize>] {
        &self.bonds
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Component vertex sets, present on graph-derived towers.
    pub fn component_vertices(&self, level: usize, c: usize) -> Option<&BTreeSet<VertexId>> {
        self.comps.as_ref().map(|l| &l[level][c])
    }

    pub fn has_component_data(&self) -> bool {
        self.comps.is_some()
    }

    /// Index of the component of `level` containing `v`, if any.
    pub fn component_of(&self, level: usize, v: VertexId) -> Option<usize> {
        let comps = self.comps.as_ref()?;
        comps[level].iter().position(|s| s.contains(&v))
    }

    pub fn bonds_surjective(&self) -> bool {
        for (i, bond) in self.bonds.iter().enumerate() {
            let mut hit = vec![false; self.levels[i].len()];
            for &p in bond {
                hit[p] = true;
            }
            if hit.iter().any(|h| !h) {
                return false;
            }
        }
        true
    }

    /// Compose bonds downward: the ancestor at `to_level` of component `c`
    /// at `from_level` (levels are 0-based, `to_level <= from_level`).
    pub fn ancestor(&self, from_level: usize, c: usize, to_level: usize) -> usize {
        let mut idx = c;
        let mut lvl = from_level;
        while lvl > to_level {
            idx = self.bonds[lvl - 1][idx];
            lvl -= 1;
        }
        idx
    }

    /// End count report with the trailing-half stabilization heuristic.
    pub fn ends_report(&self) -> EndsReport {
        let n = self.depth();
        let count = if n == 0 { 0 } else { self.levels[n - 1].len() };
        let bond_bijective = |i: usize| {
            let seen: BTreeSet<usize> = self.bonds[i].iter().copied().collect();
            self.bonds[i].len() == self.levels[i].len() && seen.len() == self.bonds[i].len()
        };
        let stabilized = if count == 0 {
            true
        } else if n < 2 {
            false
        } else {
            // all bonds across the trailing half of the levels are bijections
            let from = (n - 1) / 2;
            (from..n - 1).all(bond_bijective)
        };
        EndsReport {
            count_at_depth: count,
            stabilized,
            stabilized_count: stabilized.then_some(count),
        }
    }

    /// All coherent threads of depth `k`, one per component of level `k - 1`,
    /// in lexicographic order.
    pub fn enumerate_prefixes(&self, k: usize) -> Result<Vec<EndPrefix>, TowerError> {
        if k > self.depth() {
            return Err(TowerError::DepthOutOfRange);
        }
        if k == 0 {
            return Ok(vec![EndPrefix { thread: Vec::new() }]);
        }
        let mut out: Vec<EndPrefix> = (0..self.levels[k - 1].len())
            .map(|c| {
                let mut thread = vec![0usize; k];
                thread[k - 1] = c;
                for lvl in (0..k - 1).rev() {
                    thread[lvl] = self.bonds[lvl][thread[lvl + 1]];
                }
                EndPrefix { thread }
            })
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn check_prefix(&self, p: &EndPrefix) -> Result<(), TowerError> {
        if p.depth() > self.depth() {
            return Err(TowerError::DepthOutOfRange);
        }
        for (lvl, &c) in p.thread.iter().enumerate() {
            if c >= self.levels[lvl].len() {
                return Err(TowerError::BadIndices);
            }
            if lvl > 0 && self.bonds[lvl - 1][c] != p.thread[lvl - 1] {
                return Err(TowerError::IncoherentPrefix);
            }
        }
        Ok(())
    }

    /// Containment relation of the basic open sets determined by
    /// (level, component) pairs, decided purely from bond composition.
    pub fn basic_open_relation(
        &self,
        a: (usize, usize),
        b: (usize, usize),
    ) -> Result<BasicOpenRelation, TowerError> {
        for &(lvl, c) in [&a, &b] {
            if lvl >= self.depth() || c >= self.levels[lvl].len() {
                return Err(TowerError::BadIndices);
            }
        }
        let rel = if a.0 == b.0 {
            if a.1 == b.1 {
                BasicOpenRelation::Equal
            } else {
                BasicOpenRelation::Disjoint
            }
        } else if a.0 < b.0 {
            if self.ancestor(b.0, b.1, a.0) == a.1 {
                BasicOpenRelation::Contains
            } else {
                BasicOpenRelation::Disjoint
            }
        } else if self.ancestor(a.0, a.1, b.0) == b.1 {
            BasicOpenRelation::Contained
        } else {
            BasicOpenRelation::Disjoint
        };
        Ok(rel)
    }

    /// Label-independent canonical code of the layered fiber tree. Two
    /// towers have equal codes exactly when there are bond-preserving
    /// bijections between their levels.
    pub fn canonical_code(&self) -> String {
        let n = self.depth();
        let mut below: Vec<String> = self
            .levels
            .last()
            .map(|l| vec!["()".to_string(); l.len()])
            .unwrap_or_default();
        for i in (0..n.saturating_sub(1)).rev() {
            let mut grouped: Vec<Vec<&str>> = vec![Vec::new(); self.levels[i].len()];
            for (c, code) in below.iter().enumerate() {
                grouped[self.bonds[i][c]].push(code);
            }
            below = grouped
                .into_iter()
                .map(|mut children| {
                    children.sort_unstable();
                    let mut s = String::from("(");
                    for ch in children {
                        s.push_str(ch);
                    }
                    s.push(')');
                    s
                })
                .collect();
        }
        below.sort_unstable();
        let mut out = format!("t{n}:");
        for code in below {
            out.push_str(&code);
        }
        out
    }

    /// Subsample the tower at strictly increasing level indices, composing
    /// bonds across the skipped levels.
    pub fn subsample(&self, indices: &[usize]) -> Result<EndTower, TowerError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= self.depth()) {
            return Err(TowerError::BadIndices);
        }
        let levels: Vec<Vec<u64>> = indices.iter().map(|&i| self.levels[i].clone()).collect();
        let mut bonds = Vec::new();
        for w in indices.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            bonds.push(
                (0..self.levels[hi].len())
                    .map(|c| self.ancestor(hi, c, lo))
                    .collect(),
            );
        }
        Ok(EndTower {
            levels,
            bonds,
            comps: self
                .comps
                .as_ref()
                .map(|cs| indices.iter().map(|&i| cs[i].clone()).collect()),
            provenance: self.provenance.clone(),
        })
    }

    /// Serialize in the `tower v1` format (levels are 1-based there).
    pub fn to_tower_v1(&self) -> String {
        let mut out = String::from("tower v1\n");
        for (i, level) in self.levels.iter().enumerate() {
            out.push_str(&format!("level {} {}\n", i + 1, level.len()));
        }
        for (i, bond) in self.bonds.iter().enumerate() {
            for (c, &p) in bond.iter().enumerate() {
                out.push_str(&format!("bond {} {} {}\n", i + 1, c, p));
            }
        }
        out
    }

    /// Parse the `tower v1` format. Bonds may be non-surjective; such towers
    /// are normalized by [`tree_realization`].
    pub fn parse_tower_v1(text: &str) -> Result<EndTower, TowerError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "tower v1" => {}
            Some((i, _)) => {
                return Err(TowerError::Parse {
                    line: i + 1,
                    msg: "expected header `tower v1`".into(),
                })
            }
            None => {
                return Err(TowerError::Parse {
                    line: 1,
                    msg: "empty input".into(),
                })
            }
        }
        let mut sizes: Vec<usize> = Vec::new();
        let mut bond_entries: Vec<(usize, usize, usize, usize)> = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            let parse = |t: &str| -> Result<usize, TowerError> {
                t.parse().map_err(|_| TowerError::Parse {
                    line,
                    msg: format!("bad number `{t}`"),
                })
            };
            match toks.as_slice() {
                ["level", i, s] => {
                    let i = parse(i)?;
                    if i != sizes.len() + 1 {
                        return Err(TowerError::Parse {
                            line,
                            msg: format!("expected level {}", sizes.len() + 1),
                        });
                    }
                    sizes.push(parse(s)?);
                }
                ["bond", i, c, p] => {
                    bond_entries.push((parse(i)?, parse(c)?, parse(p)?, line));
                }
                _ => {
                    return Err(TowerError::Parse {
                        line,
                        msg: "expected `level <i> <size>` or `bond <i> <child> <parent>`".into(),
                    })
                }
            }
        }
        // a bond line `bond i c p` maps child c of level i+1 to parent p of level i
        let mut bonds: Vec<Vec<Option<usize>>> =
            sizes.iter().skip(1).map(|&s| vec![None; s]).collect();
        for (i, c, p, line) in bond_entries {
            if i == 0 || i >= sizes.len() || c >= sizes[i] || p >= sizes[i - 1] {
                return Err(TowerError::Parse {
                    line,
                    msg: "bond indices out of range".into(),
                });
            }
            if bonds[i - 1][c].replace(p).is_some() {
                return Err(TowerError::Parse {
                    line,
                    msg: "duplicate bond for a child".into(),
                });
            }
        }
        let mut resolved = Vec::with_capacity(bonds.len());
        for (i, bond) in bonds.into_iter().enumerate() {
            let mut out = Vec::with_capacity(bond.len());
            for (c, p) in bond.into_iter().enumerate() {
                out.push(p.ok_or_else(|| TowerError::Parse {
                    line: 1,
                    msg: format!("missing bond for child {c} of level {}", i + 2),
                })?);
            }
            resolved.push(out);
        }
        EndTower::from_level_data(&sizes, resolved)
    }
}

/// Per-level map between two towers of equal depth, commuting with bonds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerMap {
    /// `levels[i][c]` is the target component index of source component `c`.
    pub levels: Vec<Vec<usize>>,
}

impl TowerMap {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn identity(tower: &EndTower) -> TowerMap {
        TowerMap {
            levels: tower
                .level_sizes()
                .iter()
                .map(|&s| (0..s).collect())
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.iter().enumerate().all(|(i, &j)| i == j))
    }

    pub fn is_injective(&self) -> bool {
        self.levels.iter().all(|l| {
            let set: BTreeSet<_> = l.iter().collect();
            set.len() == l.len()
        })
    }

    pub fn is_bijective(&self, target: &EndTower) -> bool {
        self.is_injective()
            && self
                .levels
                .iter()
                .enumerate()
                .all(|(i, l)| l.len() == target.level_size(i))
    }

    /// Composition: first `self` (X -> Y), then `other` (Y -> Z).
    pub fn then(&self, other: &TowerMap) -> Result<TowerMap, TowerError> {
        if self.depth() != other.depth() {
            return Err(TowerError::DepthMismatch);
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().map(|&c| b[c]).collect())
            .collect();
        Ok(TowerMap { levels })
    }

    /// Image of a prefix under the map.
    pub fn apply(&self, p: &EndPrefix) -> EndPrefix {
        EndPrefix {
            thread: p
                .thread
                .iter()
                .enumerate()
                .map(|(lvl, &c)| self.levels[lvl][c])
                .collect(),
        }
    }
}

/// Compute the tower map induced by a vertex map between two graph-derived
/// towers of equal depth.
///
/// The source tower must come from the pullback of the target's exhaustion:
/// level for level, the image of each source component must lie in a single
/// unbounded target component. A component whose image meets no unbounded
/// target component yields [`TowerError::NotProper`] with a certificate.
pub fn induced_tower_map(
    source: &EndTower,
    target: &EndTower,
    vertex_map: &BTreeMap<VertexId, VertexId>,
) -> Result<TowerMap, TowerError> {
    if source.depth() != target.depth() {
        return Err(TowerError::DepthMismatch);
    }
    if !source.has_component_data() || !target.has_component_data() {
        return Err(TowerError::MissingComponentData);
    }
    let mut levels = Vec::with_capacity(source.depth());
    for lvl in 0..source.depth() {
        let mut m = Vec::with_capacity(source.level_size(lvl));
        for c in 0..source.level_size(lvl) {
            let verts = source.component_vertices(lvl, c).unwrap();
            let mut image_comp: Option<usize> = None;
            for &v in verts {
                let Some(&w) = vertex_map.get(&v) else {
                    return Err(TowerError::NotProper(format!(
                        "vertex {v} of source component ({lvl},{c}) is unmapped"
                    )));
                };
                match target.component_of(lvl, w) {
                    Some(t) => {
                        if *image_comp.get_or_insert(t) != t {
                            return Err(TowerError::NotProper(format!(
                                "image of source component ({lvl},{c}) splits across target components"
                            )));
                        }
                    }
                    None => {
                        return Err(TowerError::NotProper(format!(
                            "image vertex {w} of source component ({lvl},{c}) lies in no unbounded target component"
                        )));
                    }
                }
            }
            let Some(t) = image_comp else {
                return Err(TowerError::NotProper(format!(
                    "source component ({lvl},{c}) is empty"
                )));
            };
            m.push(t);
        }
        levels.push(m);
    }
    // commutation with bonds
    for i in 0..source.depth().saturating_sub(1) {
        for c in 0..source.level_size(i + 1) {
            let down_then_map = levels[i][source.bond(i, c)];
            let map_then_down = target.bond(i, levels[i + 1][c]);
            if down_then_map != map_then_down {
                return Err(TowerError::NotProper(format!(
                    "bond square does not commute at level {i}, component {c}"
                )));
            }
        }
    }
    Ok(TowerMap { levels })
}

/// Merge two towers of equal depth at a pair of full-depth pointed threads.
///
/// Level by level, the two pointed components are identified and everything
/// else is kept disjoint, so each merged level has size
/// `|left| + |right| - 1`. In each level the merged component comes first,
/// then the remaining left components, then the remaining right components.
pub fn quotient_tower(
    left: &EndTower,
    left_end: &EndPrefix,
    right: &EndTower,
    right_end: &EndPrefix,
) -> Result<EndTower, TowerError> {
    if left.depth() != right.depth() {
        return Err(TowerError::DepthMismatch);
    }
    let n = left.depth();
    if left_end.depth() != n || right_end.depth() != n {
        return Err(TowerError::DepthMismatch);
    }
    left.check_prefix(left_end)?;
    right.check_prefix(right_end)?;

    // per level: new index of a left / right component
    let mut left_pos: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut right_pos: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut sizes = Vec::with_capacity(n);
    for lvl in 0..n {
        let (ls, rs) = (left.level_size(lvl), right.level_size(lvl));
        let mut lp = vec![0usize; ls];
        let mut rp = vec![0usize; rs];
        let mut next = 1usize; // 0 is the merged component
        for (c, slot) in lp.iter_mut().enumerate() {
            if c == left_end.thread[lvl] {
                *slot = 0;
            } else {
                *slot = next;
                next += 1;
            }
        }
        for (c, slot) in rp.iter_mut().enumerate() {
            if c == right_end.thread[lvl] {
                *slot = 0;
            } else {
                *slot = next;
                next += 1;
            }
        }
        sizes.push(next);
        left_pos.push(lp);
        right_pos.push(rp);
    }
    let mut bonds = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let mut bond = vec![0usize; sizes[i + 1]];
        for c in 0..left.level_size(i + 1) {
            bond[left_pos[i + 1][c]] = left_pos[i][left.bond(i, c)];
        }
        for c in 0..right.level_size(i + 1) {
            bond[right_pos[i + 1][c]] = right_pos[i][right.bond(i, c)];
        }
        bonds.push(bond);
    }
    Ok(EndTower {
        levels: sizes.iter().map(|&s| (0..s as u64).collect()).collect(),
        bonds,
        comps: None,
        provenance: Provenance::Quotient,
    })
}

/// Eventual-image normalization: drop every component without a descendant
/// at the deepest level and restrict bonds accordingly. The resulting bonds
/// are surjective.
pub fn normalize_tower(t: &EndTower) -> Result<EndTower, TowerError> {
    let n = t.depth();
    if n == 0 {
        return Ok(EndTower {
            levels: Vec::new(),
            bonds: Vec::new(),
            comps: None,
            provenance: Provenance::Normalized { stable: true },
        });
    }
    let alive = alive_sets(t, n - 1);
    if alive.iter().any(|a| a.is_empty()) {
        return Err(TowerError::EmptyLevelAfterNormalization);
    }
    // stability of the finite data: pruning from the next-to-last level
    // yields the same alive sets above it
    let stable = if n >= 2 {
        let shallow = alive_sets(t, n - 2);
        (0..n - 1).all(|i| alive[i] == shallow[i])
    } else {
        true
    };
    let mut new_index: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    for (lvl, a) in alive.iter().enumerate() {
        let mut map = BTreeMap::new();
        for (new, &old) in a.iter().enumerate() {
            map.insert(old, new);
        }
        levels.push(
            a.iter()
                .map(|&old| t.levels[lvl][old])
                .collect::<Vec<u64>>(),
        );
        new_index.push(map);
    }
    let mut bonds = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        bonds.push(
            alive[i + 1]
                .iter()
                .map(|&old| new_index[i][&t.bonds[i][old]])
                .collect(),
        );
    }
    let out = EndTower {
        levels,
        bonds,
        comps: None,
        provenance: Provenance::Normalized { stable },
    };
    debug_assert!(out.bonds_surjective());
    Ok(out)
}

/// Per level, the sorted component indices that have a descendant at
/// `from_level`.
fn alive_sets(t: &EndTower, from_level: usize) -> Vec<Vec<usize>> {
    let n = t.depth();
    let mut alive: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    alive[from_level] = (0..t.level_size(from_level)).collect();
    for lvl in (1..=from_level).rev() {
        let current: Vec<usize> = alive[lvl].iter().copied().collect();
        for c in current {
            alive[lvl - 1].insert(t.bonds[lvl - 1][c]);
        }
    }
    // levels beyond from_level keep everything (only used when pruning from
    // the deepest level, where this loop is empty)
    for (lvl, a) in alive.iter_mut().enumerate().skip(from_level + 1) {
        *a = (0..t.levels[lvl].len()).collect();
    }
    alive.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Realize a tower by a rooted, locally finite tree: after eventual-image
/// normalization, the tree has the root at level 0, one vertex per component
/// at each level wired to its bond image, and an infinite tail below every
/// deepest-level vertex. Returns the tree generator, its canonical level
/// exhaustion, and the tower of the tree, whose canonical code equals the
/// code of the normalized input.
pub fn tree_realization(
    t: &EndTower,
) -> Result<(GraphGenerator, Exhaustion, EndTower), TowerError> {
    let normalized = normalize_tower(t)?;
    let n = normalized.depth();
    if n == 0 {
        return Err(TowerError::EmptyLevelAfterNormalization);
    }
    let sizes = normalized.level_sizes();
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n);
    parents.push(Vec::new());
    for i in 0..n - 1 {
        parents.push(normalized.bonds[i].clone());
    }
    let data = Arc::new(TowerTreeData::new(sizes, parents));
    let gen = GraphGenerator::realized_tree(data);
    let exh = crate::exhaust::efficient_exhaustion(&gen, n, n as u32 + 2)?;
    let mut tower = EndTower::build(&exh)?;
    tower.provenance = Provenance::RealizedTree;
    debug_assert_eq!(tower.canonical_code(), normalized.canonical_code());
    Ok((gen, exh, tower))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exhaust::efficient_exhaustion;
    use crate::graph::GraphGenerator;

    fn tower_of(gen: &GraphGenerator, depth: usize, window: u32) -> EndTower {
        let exh = efficient_exhaustion(gen, depth, window).unwrap();
        EndTower::build(&exh).unwrap()
    }

    #[test]
    fn line_tower_is_two_threads() {
        let t = tower_of(&GraphGenerator::line(), 4, 10);
        assert_eq!(t.level_sizes(), vec![2, 2, 2, 2]);
        assert!(t.bonds_surjective());
        for bond in t.bonds() {
            let mut sorted = bond.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), bond.len(), "bonds are bijections");
        }
        let r = t.ends_report();
        assert_eq!(r.count_at_depth, 2);
        assert!(r.stabilized);
        assert_eq!(r.stabilized_count, Some(2));
    }

    #[test]
    fn grid_tower_is_one_thread() {
        let t = tower_of(&GraphGenerator::grid(2).unwrap(), 4, 8);
        assert_eq!(t.level_sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn regular_tree_tower_sizes() {
        let t = tower_of(&GraphGenerator::regular_tree(4).unwrap(), 4, 7);
        assert_eq!(t.level_sizes(), vec![4, 12, 36, 108]);
        assert!(t.bonds_surjective());
        assert!(!t.ends_report().stabilized);
    }

    #[test]
    fn comb_tower_grows_by_one() {
        let t = tower_of(&GraphGenerator::comb(), 5, 12);
        assert_eq!(t.level_sizes(), vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn compact_window_has_empty_tower() {
        let g = crate::graph::parse_edge_list("lfgraph v1\ne 0 1\ne 1 2\n").unwrap();
        let t = tower_of(&g, 3, 8);
        assert_eq!(t.level_sizes(), vec![0, 0, 0]);
        let r = t.ends_report();
        assert_eq!(r.count_at_depth, 0);
        assert!(r.stabilized);
    }

    #[test]
    fn prefixes_enumerate_one_thread_per_component() {
        let t = tower_of(&GraphGenerator::line(), 4, 10);
        let ps = t.enumerate_prefixes(3).unwrap();
        assert_eq!(ps.len(), 2);
        for p in &ps {
            t.check_prefix(p).unwrap();
        }
        assert_eq!(
            t.enumerate_prefixes(0).unwrap(),
            vec![EndPrefix { thread: vec![] }]
        );
        assert!(matches!(
            t.enumerate_prefixes(9).unwrap_err(),
            TowerError::DepthOutOfRange
        ));

        let comb = tower_of(&GraphGenerator::comb(), 3, 8);
        assert_eq!(
            comb.enumerate_prefixes(3).unwrap().len(),
            comb.level_size(2)
        );
    }

    #[test]
    fn basic_open_relation_cases() {
        let t = tower_of(&GraphGenerator::line(), 3, 8);
        assert_eq!(
            t.basic_open_relation((0, 0), (0, 0)).unwrap(),
            BasicOpenRelation::Equal
        );
        // which deeper component descends from (0,0)?
        let child_of_0 = (0..t.level_size(1)).find(|&c| t.bond(0, c) == 0).unwrap();
        let other = 1 - child_of_0;
        assert_eq!(
            t.basic_open_relation((0, 0), (1, child_of_0)).unwrap(),
            BasicOpenRelation::Contains
        );
        assert_eq!(
            t.basic_open_relation((1, child_of_0), (0, 0)).unwrap(),
            BasicOpenRelation::Contained
        );
        assert_eq!(
            t.basic_open_relation((0, 0), (1, other)).unwrap(),
            BasicOpenRelation::Disjoint
        );
        assert!(matches!(
            t.basic_open_relation((0, 0), (5, 0)).unwrap_err(),
            TowerError::BadIndices
        ));
    }

    #[test]
    fn distinct_prefixes_separate_at_first_difference() {
        let t = tower_of(&GraphGenerator::regular_tree(3).unwrap(), 4, 7);
        let ps = t.enumerate_prefixes(4).unwrap();
        for a in &ps {
            for b in &ps {
                if a == b {
                    continue;
                }
                let lvl = (0..4).find(|&l| a.thread[l] != b.thread[l]).unwrap();
                let rel = t
                    .basic_open_relation((lvl, a.thread[lvl]), (lvl, b.thread[lvl]))
                    .unwrap();
                assert_eq!(rel, BasicOpenRelation::Disjoint);
            }
        }
    }

    #[test]
    fn canonical_code_ignores_labels_and_sees_structure() {
        let line = tower_of(&GraphGenerator::line(), 4, 10);
        let grid = tower_of(&GraphGenerator::grid(2).unwrap(), 4, 8);
        assert_ne!(line.canonical_code(), grid.canonical_code());

        // same tower from a different basepoint
        let shifted = GraphGenerator::line()
            .with_basepoint(crate::graph::VertexId(10))
            .unwrap();
        let line2 = tower_of(&shifted, 4, 10);
        assert_eq!(line.canonical_code(), line2.canonical_code());

        // a relabeled copy: reverse component order at each level
        let n = line.depth();
        let sizes = line.level_sizes();
        let bonds: Vec<Vec<usize>> = (0..n - 1)
            .map(|i| {
                let (s_hi, s_lo) = (sizes[i + 1], sizes[i]);
                (0..s_hi)
                    .map(|c| s_lo - 1 - line.bond(i, s_hi - 1 - c))
                    .collect()
            })
            .collect();
        let relabeled = EndTower::from_level_data(&sizes, bonds).unwrap();
        assert_eq!(line.canonical_code(), relabeled.canonical_code());
    }

    #[test]
    fn basic_open_relation_matches_vertex_containment() {
        let t = tower_of(&GraphGenerator::comb(), 4, 10);
        for i in 0..t.depth() {
            for c in 0..t.level_size(i) {
                for j in 0..t.depth() {
                    for d in 0..t.level_size(j) {
                        let a = t.component_vertices(i, c).unwrap();
                        let b = t.component_vertices(j, d).unwrap();
                        let expected = if a == b {
                            BasicOpenRelation::Equal
                        } else if b.is_subset(a) {
                            BasicOpenRelation::Contains
                        } else if a.is_subset(b) {
                            BasicOpenRelation::Contained
                        } else {
                            BasicOpenRelation::Disjoint
                        };
                        assert_eq!(
                            t.basic_open_relation((i, c), (j, d)).unwrap(),
                            expected,
                            "({i},{c}) vs ({j},{d})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn canonical_code_distinguishes_fiber_profiles() {
        // same level sizes, different fiber multisets
        let a = EndTower::from_level_data(&[2, 4], vec![vec![0, 0, 0, 1]]).unwrap();
        let b = EndTower::from_level_data(&[2, 4], vec![vec![0, 0, 1, 1]]).unwrap();
        assert_ne!(a.canonical_code(), b.canonical_code());
        // same fiber multisets in a different order are isomorphic
        let c = EndTower::from_level_data(&[2, 4], vec![vec![1, 1, 1, 0]]).unwrap();
        assert_eq!(a.canonical_code(), c.canonical_code());
    }

    #[test]
    fn four_valent_trees_have_isomorphic_towers() {
        let a = tower_of(&GraphGenerator::regular_tree(4).unwrap(), 3, 6);
        let b = tower_of(&GraphGenerator::free_group(2).unwrap(), 3, 6);
        assert_eq!(a.canonical_code(), b.canonical_code());
    }

    #[test]
    fn subsample_matches_rebuilt_tower() {
        let g = GraphGenerator::comb();
        let exh = efficient_exhaustion(&g, 6, 12).unwrap();
        let t = EndTower::build(&exh).unwrap();
        let picked = [0usize, 2, 4];
        let sub = t.subsample(&picked).unwrap();
        let rebuilt = EndTower::build(&exh.subsequence(&picked).unwrap()).unwrap();
        assert_eq!(sub.level_sizes(), rebuilt.level_sizes());
        assert_eq!(sub.bonds, rebuilt.bonds);
        assert_eq!(sub.canonical_code(), rebuilt.canonical_code());
    }

    #[test]
    fn tower_v1_roundtrip() {
        let t = tower_of(&GraphGenerator::comb(), 4, 10);
        let text = t.to_tower_v1();
        let parsed = EndTower::parse_tower_v1(&text).unwrap();
        assert_eq!(parsed.level_sizes(), t.level_sizes());
        assert_eq!(parsed.bonds, t.bonds);
        assert_eq!(parsed.to_tower_v1(), text, "export is bit-stable");
        assert_eq!(parsed.canonical_code(), t.canonical_code());

        assert!(matches!(
            EndTower::parse_tower_v1("nope\n").unwrap_err(),
            TowerError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            EndTower::parse_tower_v1("tower v1\nlevel 1 2\nlevel 2 1\nbond 1 0 5\n").unwrap_err(),
            TowerError::Parse { .. }
        ));
    }

    #[test]
    fn quotient_of_two_lines_has_three_threads() {
        let t = tower_of(&GraphGenerator::line(), 4, 10);
        let ps = t.enumerate_prefixes(4).unwrap();
        let merged = quotient_tower(&t, &ps[1], &t, &ps[0]).unwrap();
        assert_eq!(merged.level_sizes(), vec![3, 3, 3, 3]);
        assert!(merged.bonds_surjective());

        let grid = tower_of(&GraphGenerator::grid(2).unwrap(), 4, 8);
        let gp = grid.enumerate_prefixes(4).unwrap();
        let gg = quotient_tower(&grid, &gp[0], &grid, &gp[0]).unwrap();
        assert_eq!(gg.level_sizes(), vec![1, 1, 1, 1]);

        let tree = tower_of(&GraphGenerator::regular_tree(4).unwrap(), 4, 7);
        let tp = tree.enumerate_prefixes(4).unwrap();
        let tl = quotient_tower(&tree, &tp[0], &t, &ps[0]).unwrap();
        let expect: Vec<usize> = (0..4).map(|i| 4 * 3usize.pow(i) + 1).collect();
        assert_eq!(tl.level_sizes(), expect);
    }

    #[test]
    fn quotient_depth_mismatch_is_rejected() {
        let a = tower_of(&GraphGenerator::line(), 4, 10);
        let b = tower_of(&GraphGenerator::line(), 3, 10);
        let pa = a.enumerate_prefixes(4).unwrap();
        let pb = b.enumerate_prefixes(3).unwrap();
        assert!(matches!(
            quotient_tower(&a, &pa[0], &b, &pb[0]).unwrap_err(),
            TowerError::DepthMismatch
        ));
    }

    #[test]
    fn normalization_prunes_dead_components() {
        // two levels: level 1 = {a, b}, level 2 = {x}, bond x -> a.
        // b has no descendant and is pruned.
        let t = EndTower::from_level_data(&[2, 1], vec![vec![0]]).unwrap();
        let n = normalize_tower(&t).unwrap();
        assert_eq!(n.level_sizes(), vec![1, 1]);
        assert_eq!(n.provenance(), &Provenance::Normalized { stable: false });
        // a surjective tower is already normal and stable
        let s = EndTower::from_level_data(&[1, 2], vec![vec![0, 0]]).unwrap();
        let ns = normalize_tower(&s).unwrap();
        assert_eq!(ns.level_sizes(), vec![1, 2]);
        assert_eq!(ns.provenance(), &Provenance::Normalized { stable: true });
    }

    #[test]
    fn cantor_tower_realizes_to_binary_tree() {
        // levels {0,1}^i for i = 1..=4 with prefix-truncation bonds
        let sizes: Vec<usize> = (1..=4).map(|i| 1 << i).collect();
        let bonds: Vec<Vec<usize>> = (1..4)
            .map(|i| (0..1usize << (i + 1)).map(|c| c >> 1).collect())
            .collect();
        let t = EndTower::from_level_data(&sizes, bonds).unwrap();
        let (gen, _exh, tower) = tree_realization(&t).unwrap();
        assert_eq!(
            tower.canonical_code(),
            normalize_tower(&t).unwrap().canonical_code()
        );
        // the realized graph is the binary tree: compare with the builtin
        let builtin = tower_of(&GraphGenerator::binary_tree(), 4, 7);
        assert_eq!(builtin.level_sizes(), vec![2, 4, 8, 16]);
        assert_eq!(tower.canonical_code(), builtin.canonical_code());
        assert_eq!(gen.degree_bound(), 3);
    }

    #[test]
    fn one_point_tower_realizes_to_a_half_line() {
        let t = EndTower::from_level_data(&[1, 1, 1], vec![vec![0], vec![0]]).unwrap();
        let (gen, _exh, tower) = tree_realization(&t).unwrap();
        assert_eq!(tower.level_sizes(), vec![1, 1, 1]);
        assert_eq!(gen.degree_bound(), 2);
        let half = tower_of(&GraphGenerator::halfline(), 3, 8);
        assert_eq!(tower.canonical_code(), half.canonical_code());
    }

    #[test]
    fn realization_round_trips_graph_towers() {
        for g in [
            GraphGenerator::line(),
            GraphGenerator::comb(),
            GraphGenerator::regular_tree(3).unwrap(),
        ] {
            let t = tower_of(&g, 4, 9);
            let (_, _, realized) = tree_realization(&t).unwrap();
            assert_eq!(
                realized.canonical_code(),
                normalize_tower(&t).unwrap().canonical_code(),
                "{}",
                g.family_name()
            );
        }
    }

    mod random_towers {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        /// Random tower with surjective bonds: each parent receives at
        /// least one child, the rest attach arbitrarily.
        pub(super) fn random_tower(rng: &mut ChaCha8Rng) -> EndTower {
            let depth = rng.gen_range(1..=4);
            let mut sizes = Vec::with_capacity(depth);
            let mut prev = rng.gen_range(1..=3usize);
            for _ in 0..depth {
                sizes.push(prev);
                prev += rng.gen_range(0..=3);
            }
            let mut bonds = Vec::new();
            for i in 1..depth {
                let (hi, lo) = (sizes[i], sizes[i - 1]);
                let mut bond: Vec<usize> = (0..hi)
                    .map(|c| if c < lo { c } else { rng.gen_range(0..lo) })
                    .collect();
                // shuffle children so surjectivity is not positional
                for c in (1..hi).rev() {
                    let swap = rng.gen_range(0..=c);
                    bond.swap(c, swap);
                }
                bonds.push(bond);
            }
            EndTower::from_level_data(&sizes, bonds).unwrap()
        }

        fn relabel(t: &EndTower, rng: &mut ChaCha8Rng) -> EndTower {
            let sizes = t.level_sizes();
            let perms: Vec<Vec<usize>> = sizes
                .iter()
                .map(|&s| {
                    let mut p: Vec<usize> = (0..s).collect();
                    for i in (1..s).rev() {
                        let j = rng.gen_range(0..=i);
                        p.swap(i, j);
                    }
                    p
                })
                .collect();
            let bonds: Vec<Vec<usize>> = (0..t.depth() - 1)
                .map(|i| {
                    let mut bond = vec![0usize; sizes[i + 1]];
                    for c in 0..sizes[i + 1] {
                        bond[perms[i + 1][c]] = perms[i][t.bond(i, c)];
                    }
                    bond
                })
                .collect();
            EndTower::from_level_data(&sizes, bonds).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn structural_invariants_hold(seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_tower(&mut rng);
                prop_assert!(t.bonds_surjective());

                // canonical codes ignore labels
                let shuffled = relabel(&t, &mut rng);
                prop_assert_eq!(t.canonical_code(), shuffled.canonical_code());

                // serialization round-trips bit-exactly
                let text = t.to_tower_v1();
                let back = EndTower::parse_tower_v1(&text).unwrap();
                prop_assert_eq!(back.to_tower_v1(), text);
                prop_assert_eq!(back.canonical_code(), t.canonical_code());

                // normalization of a surjective tower changes nothing
                let norm = normalize_tower(&t).unwrap();
                prop_assert_eq!(norm.level_sizes(), t.level_sizes());
                prop_assert_eq!(norm.canonical_code(), t.canonical_code());

                // realization reproduces the layered structure
                let (_, _, realized) = tree_realization(&t).unwrap();
                prop_assert_eq!(realized.canonical_code(), t.canonical_code());

                // quotients at random threads obey the size arithmetic
                let s = random_tower(&mut rng);
                if s.depth() == t.depth() {
                    let tp = &t.enumerate_prefixes(t.depth()).unwrap();
                    let sp = &s.enumerate_prefixes(s.depth()).unwrap();
                    let te = &tp[rng.gen_range(0..tp.len())];
                    let se = &sp[rng.gen_range(0..sp.len())];
                    let q = quotient_tower(&t, te, &s, se).unwrap();
                    prop_assert!(q.bonds_surjective());
                    for i in 0..q.depth() {
                        prop_assert_eq!(
                            q.level_size(i),
                            t.level_size(i) + s.level_size(i) - 1
                        );
                    }
                }

                // every prefix is coherent and separates from the others
                let prefixes = t.enumerate_prefixes(t.depth()).unwrap();
                prop_assert_eq!(prefixes.len(), t.level_size(t.depth() - 1));
                for p in &prefixes {
                    t.check_prefix(p).unwrap();
                }
            }
        }
    }

    #[test]
    fn identity_vertex_map_induces_identity() {
        let g = GraphGenerator::comb();
        let exh = efficient_exhaustion(&g, 4, 10).unwrap();
        let t = EndTower::build(&exh).unwrap();
        let id_map: BTreeMap<_, _> = exh.window().vertices().map(|v| (v, v)).collect();
        let m = induced_tower_map(&t, &t, &id_map).unwrap();
        assert!(m.is_identity());
    }
}
