//! Embedded proper rays, retractions onto a baseray, and end-tree
//! embeddings.
//!
//! A ray is an embedded path from the basepoint to the window boundary with
//! exit certificates: it meets each exhaustion level in an initial segment.
//! Along shortest paths this is automatic for filled-ball exhaustions, since
//! leaving a level can never be undone without re-entering the ball that
//! seeded it. A retraction assigns ray parameters to all window vertices via
//! frontier values, and an end-tree embedding realizes the whole tower by an
//! embedded subtree with one branch vertex per component.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::exhaust::{check_ray_in_window, ExhaustError, Exhaustion};
use crate::graph::{Ball, VertexId};
use crate::tower::{induced_tower_map, EndPrefix, EndTower, TowerError, TowerMap};

#[derive(Debug, Error)]
pub enum RayError {
    #[error("window too small: radius of at least {required} is needed")]
    WindowTooSmall { required: u32 },
    #[error("ray is not proper within the window")]
    RayNotProperInWindow,
    #[error("exhaustion is not ray-efficient for this ray")]
    NotRayEfficient,
    #[error("embedded tree does not inject on ends: {0}")]
    NonInjectiveEndMap(String),
    #[error("the window graph has no ends to point to")]
    NoEnds,
    #[error("prefix must have full tower depth")]
    PrefixDepth,
    #[error("tree embedding is degenerate: {0}")]
    EmbeddingDegenerate(String),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Exhaust(#[from] ExhaustError),
}

/// Embedded path from the basepoint to the window boundary, with per-level
/// exit indices: the ray meets level `i` exactly in `vertices[..=exit[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ray {
    vertices: Vec<VertexId>,
    exit_indices: Vec<usize>,
}

impl Ray {
    /// Certify a vertex path against an exhaustion: embedded, adjacent,
    /// ending on the window boundary, and meeting every level in an initial
    /// segment.
    pub fn certify(exh: &Exhaustion, vertices: Vec<VertexId>) -> Result<Ray, RayError> {
        check_ray_in_window(exh.window(), &vertices).map_err(|_| RayError::RayNotProperInWindow)?;
        let exit_indices = initial_segment_cuts(exh, &vertices)?;
        Ok(Ray {
            vertices,
            exit_indices,
        })
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Index after which the ray stays outside level `i`.
    pub fn exit_index(&self, i: usize) -> usize {
        self.exit_indices[i]
    }

    pub fn exit_indices(&self) -> &[usize] {
        &self.exit_indices
    }

    pub fn to_ray_v1(&self) -> String {
        let ids: Vec<String> = self.vertices.iter().map(|v| v.0.to_string()).collect();
        format!("ray v1\n{}\n", ids.join(" "))
    }

    /// Parse the `ray v1` format and certify the path against `exh`.
    pub fn parse_ray_v1(text: &str, exh: &Exhaustion) -> Result<Ray, RayError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "ray v1" => {}
            _ => return Err(RayError::RayNotProperInWindow),
        }
        let mut vertices = Vec::new();
        for line in lines {
            for tok in line.split_whitespace() {
                let id: u64 = tok.parse().map_err(|_| RayError::RayNotProperInWindow)?;
                vertices.push(VertexId(id));
            }
        }
        Ray::certify(exh, vertices)
    }
}

/// Exit index per level, verifying the initial-segment property.
fn initial_segment_cuts(exh: &Exhaustion, ray: &[VertexId]) -> Result<Vec<usize>, RayError> {
    let mut cuts = Vec::with_capacity(exh.depth());
    for k in exh.levels() {
        let inside: Vec<usize> = ray
            .iter()
            .enumerate()
            .filter(|(_, v)| k.contains(**v))
            .map(|(t, _)| t)
            .collect();
        if inside.is_empty() {
            return Err(RayError::NotRayEfficient);
        }
        let cut = *inside.last().unwrap();
        if inside.len() != cut + 1 {
            return Err(RayError::NotRayEfficient);
        }
        if cut + 1 >= ray.len() {
            // the ray must leave every level
            return Err(RayError::RayNotProperInWindow);
        }
        cuts.push(cut);
    }
    Ok(cuts)
}

/// Construct an embedded proper ray pointing to the given full-depth end
/// prefix: the shortest path from the basepoint to the smallest boundary
/// vertex of the prefix's deepest component.
pub fn find_ray(exh: &Exhaustion, tower: &EndTower, prefix: &EndPrefix) -> Result<Ray, RayError> {
    if exh.depth() == 0 || tower.depth() != exh.depth() {
        return Err(RayError::PrefixDepth);
    }
    if prefix.depth() != tower.depth() {
        return Err(RayError::PrefixDepth);
    }
    tower.check_prefix(prefix)?;
    let window = exh.window();
    let deepest = tower
        .component_vertices(tower.depth() - 1, *prefix.thread.last().unwrap())
        .ok_or(TowerError::MissingComponentData)?;
    let target = deepest
        .iter()
        .copied()
        .find(|v| window.boundary_sphere().contains(v))
        .ok_or(RayError::NoEnds)?;
    let path = shortest_path(window, window.center(), target)
        .ok_or_else(|| RayError::EmbeddingDegenerate("target unreachable".into()))?;
    let ray = Ray::certify(exh, path)?;
    debug_assert_eq!(&points_to(&ray, exh, tower)?, prefix);
    Ok(ray)
}

/// Deterministic shortest path via breadth-first parents with sorted
/// neighbor order.
fn shortest_path(window: &Ball, from: VertexId, to: VertexId) -> Option<Vec<VertexId>> {
    let mut parent: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    parent.insert(from, from);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in window.neighbors_in(v) {
            if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(w) {
                e.insert(v);
                queue.push_back(w);
            }
        }
    }
    if !parent.contains_key(&to) {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// The end prefix a ray points to: per level, the component containing the
/// ray tail beyond its exit index.
pub fn points_to(ray: &Ray, exh: &Exhaustion, tower: &EndTower) -> Result<EndPrefix, RayError> {
    if tower.depth() != exh.depth() {
        return Err(RayError::PrefixDepth);
    }
    let cuts = initial_segment_cuts(exh, ray.vertices())?;
    let mut thread = Vec::with_capacity(tower.depth());
    for (i, &cut) in cuts.iter().enumerate() {
        let first_tail = ray.vertices()[cut + 1];
        let comp = tower
            .component_of(i, first_tail)
            .ok_or(RayError::RayNotProperInWindow)?;
        for &v in &ray.vertices()[cut + 1..] {
            if tower.component_of(i, v) != Some(comp) {
                return Err(RayError::RayNotProperInWindow);
            }
        }
        thread.push(comp);
    }
    let prefix = EndPrefix { thread };
    tower.check_prefix(&prefix)?;
    Ok(prefix)
}

/// Proper retraction data onto a ray: every window vertex gets a ray
/// parameter; ray vertices get their own index, other vertices get the
/// frontier value of the first level containing them.
#[derive(Debug, Clone)]
pub struct Retraction {
    values: BTreeMap<VertexId, u64>,
    /// Per level, the first ray index on the level's frontier.
    a: Vec<u64>,
    /// Per level, the last ray index inside the level.
    b: Vec<u64>,
    /// Largest jump of values along a window edge, as observed.
    max_edge_stretch: u64,
}

impl Retraction {
    pub fn value(&self, v: VertexId) -> Option<u64> {
        self.values.get(&v).copied()
    }

    pub fn values(&self) -> &BTreeMap<VertexId, u64> {
        &self.values
    }

    pub fn frontier_entry(&self, i: usize) -> u64 {
        self.a[i]
    }

    pub fn ray_cut(&self, i: usize) -> u64 {
        self.b[i]
    }

    pub fn frontier_entries(&self) -> &[u64] {
        &self.a
    }

    pub fn ray_cuts(&self) -> &[u64] {
        &self.b
    }

    pub fn max_edge_stretch(&self) -> u64 {
        self.max_edge_stretch
    }
}

/// Build the retraction onto `ray` for a ray-efficient exhaustion.
pub fn build_retraction(exh: &Exhaustion, ray: &Ray) -> Result<Retraction, RayError> {
    let window = exh.window();
    let cuts = initial_segment_cuts(exh, ray.vertices()).map_err(|_| RayError::NotRayEfficient)?;
    let n = exh.depth();
    if n == 0 {
        return Err(RayError::NotRayEfficient);
    }
    let ray_index: BTreeMap<VertexId, u64> = ray
        .vertices()
        .iter()
        .enumerate()
        .map(|(t, &v)| (v, t as u64))
        .collect();

    // frontier entry parameters: first ray index on each level's frontier
    let mut a = Vec::with_capacity(n);
    for (i, k) in exh.levels().iter().enumerate() {
        let entry = ray.vertices()[..=cuts[i]]
            .iter()
            .enumerate()
            .find(|(_, v)| window.neighbors_in(**v).iter().any(|w| !k.contains(*w)))
            .map(|(t, _)| t as u64)
            .ok_or(RayError::NotRayEfficient)?;
        a.push(entry);
    }
    let b: Vec<u64> = cuts.iter().map(|&c| c as u64).collect();
    for i in 0..n {
        if a[i] > b[i] || (i + 1 < n && b[i] >= a[i + 1]) {
            return Err(RayError::NotRayEfficient);
        }
    }

    let beyond = b[n - 1] + 1;
    let mut values = BTreeMap::new();
    for v in window.vertices() {
        let val = match ray_index.get(&v) {
            Some(&t) => t,
            None => match exh.level_of(v) {
                Some(i) => a[i],
                None => beyond,
            },
        };
        values.insert(v, val);
    }
    let mut max_edge_stretch = 0u64;
    for (u, v) in window.edges() {
        let d = values[&u].abs_diff(values[&v]);
        max_edge_stretch = max_edge_stretch.max(d);
    }
    Ok(Retraction {
        values,
        a,
        b,
        max_edge_stretch,
    })
}

/// Embedded tree realizing the tower inside the graph: one branch vertex per
/// component per level, connecting paths routed inside the parent component
/// and spliced to be internally disjoint, plus an escape path to the window
/// boundary below every deepest branch.
#[derive(Debug, Clone)]
pub struct TreeEmbedding {
    root: VertexId,
    adj: BTreeMap<VertexId, Vec<VertexId>>,
    /// Designated branch vertex per (level, graph component), when the tree
    /// was built from a tower.
    branch: Option<Vec<Vec<VertexId>>>,
    tower: EndTower,
    map: TowerMap,
}

impl TreeEmbedding {
    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.adj.keys().copied()
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        self.adj.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&v, ns)| ns.iter().filter(move |&&w| v < w).map(move |&w| (v, w)))
    }

    /// Tower of the embedded tree itself.
    pub fn tree_tower(&self) -> &EndTower {
        &self.tower
    }

    /// Induced map from the tree tower to the ambient graph tower.
    pub fn tower_map(&self) -> &TowerMap {
        &self.map
    }

    pub fn branch_vertices(&self) -> Option<&Vec<Vec<VertexId>>> {
        self.branch.as_ref()
    }

    /// Interpret an embedded subtree of the window as a tree embedding:
    /// compute the tree's own tower (components of the subtree outside each
    /// level, classified at the window boundary) and the induced map into
    /// the graph tower. No injectivity is required here.
    pub fn from_subtree(
        exh: &Exhaustion,
        graph_tower: &EndTower,
        root: VertexId,
        edges: &[(VertexId, VertexId)],
    ) -> Result<TreeEmbedding, RayError> {
        let window = exh.window();
        let mut adj: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        adj.entry(root).or_default();
        for &(u, v) in edges {
            if !window.contains(u) || !window.contains(v) {
                return Err(RayError::EmbeddingDegenerate(format!(
                    "edge ({u},{v}) leaves the window"
                )));
            }
            if !window.neighbors_in(u).contains(&v) {
                return Err(RayError::EmbeddingDegenerate(format!(
                    "({u},{v}) is not a graph edge"
                )));
            }
            adj.entry(u).or_default().push(v);
            adj.entry(v).or_default().push(u);
        }
        for ns in adj.values_mut() {
            ns.sort_unstable();
            ns.dedup();
        }
        let vert_count = adj.len();
        let edge_count = adj.values().map(Vec::len).sum::<usize>() / 2;
        if edge_count + 1 != vert_count {
            return Err(RayError::EmbeddingDegenerate(
                "subgraph is not a tree".into(),
            ));
        }
        // connectivity from the root
        let mut seen = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in adj.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        if seen.len() != vert_count {
            return Err(RayError::EmbeddingDegenerate(
                "subtree is not connected".into(),
            ));
        }

        // components of the subtree outside each level
        let mut level_sets = Vec::with_capacity(exh.depth());
        for k in exh.levels() {
            let mut remaining: BTreeSet<VertexId> =
                adj.keys().copied().filter(|&v| !k.contains(v)).collect();
            let mut comps = Vec::new();
            while let Some(&start) = remaining.iter().next() {
                let mut comp = BTreeSet::from([start]);
                remaining.remove(&start);
                let mut queue = VecDeque::from([start]);
                let mut unbounded = window.boundary_sphere().contains(&start);
                while let Some(v) = queue.pop_front() {
                    for &w in &adj[&v] {
                        if remaining.remove(&w) {
                            comp.insert(w);
                            if window.boundary_sphere().contains(&w) {
                                unbounded = true;
                            }
                            queue.push_back(w);
                        }
                    }
                }
                if unbounded {
                    comps.push(comp);
                }
            }
            level_sets.push(comps);
        }
        let tower = EndTower::from_component_sets(level_sets, window.radius())?;
        let identity: BTreeMap<VertexId, VertexId> = adj.keys().map(|&v| (v, v)).collect();
        let map = induced_tower_map(&tower, graph_tower, &identity)?;
        Ok(TreeEmbedding {
            root,
            adj,
            branch: None,
            tower,
            map,
        })
    }
}

/// Build the canonical end-tree embedding of a graph tower: branch vertices
/// are the canonical component representatives, connecting paths run inside
/// the parent component, and the induced tower map is bijective level by
/// level.
pub fn embed_end_tree(exh: &Exhaustion, tower: &EndTower) -> Result<TreeEmbedding, RayError> {
    let window = exh.window();
    let n = exh.depth();
    if n == 0 || tower.level_size(n - 1) == 0 {
        return Err(RayError::NoEnds);
    }
    if tower.depth() != n {
        return Err(RayError::PrefixDepth);
    }
    let root = window.center();
    let mut tree_verts: BTreeSet<VertexId> = BTreeSet::from([root]);
    let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
    let mut branch: Vec<Vec<VertexId>> = Vec::with_capacity(n);

    let attach = |path: Vec<VertexId>,
                  tree_verts: &mut BTreeSet<VertexId>,
                  edges: &mut Vec<(VertexId, VertexId)>| {
        let last_known = path
            .iter()
            .rposition(|v| tree_verts.contains(v))
            .expect("path starts inside the tree");
        for k in last_known..path.len() - 1 {
            edges.push((path[k], path[k + 1]));
            tree_verts.insert(path[k + 1]);
        }
    };

    for lvl in 0..n {
        let mut here = Vec::with_capacity(tower.level_size(lvl));
        for c in 0..tower.level_size(lvl) {
            let comp = tower
                .component_vertices(lvl, c)
                .ok_or(TowerError::MissingComponentData)?;
            let target = VertexId(tower.level_ids(lvl)[c]);
            debug_assert!(comp.contains(&target));
            let path = if lvl == 0 {
                shortest_path(window, root, target)
            } else {
                let parent = tower.bond(lvl - 1, c);
                let anchor = branch[lvl - 1][parent];
                let parent_comp = tower.component_vertices(lvl - 1, parent).unwrap();
                path_within(window, parent_comp, anchor, target)
            }
            .ok_or_else(|| {
                RayError::EmbeddingDegenerate(format!("no route to component ({lvl},{c})"))
            })?;
            attach(path, &mut tree_verts, &mut edges);
            here.push(target);
        }
        branch.push(here);
    }
    // escape paths from the deepest branches to the window boundary
    for (c, &anchor) in branch[n - 1].clone().iter().enumerate() {
        let comp = tower.component_vertices(n - 1, c).unwrap();
        let exit = comp
            .iter()
            .copied()
            .find(|v| window.boundary_sphere().contains(v))
            .ok_or(RayError::NoEnds)?;
        let path = path_within(window, comp, anchor, exit).ok_or_else(|| {
            RayError::EmbeddingDegenerate(format!("no escape from component ({},{c})", n - 1))
        })?;
        attach(path, &mut tree_verts, &mut edges);
    }

    let mut emb = TreeEmbedding::from_subtree(exh, tower, root, &edges)?;
    emb.branch = Some(branch);
    if !emb.map.is_bijective(tower) {
        return Err(RayError::EmbeddingDegenerate(
            "induced tower map is not bijective".into(),
        ));
    }
    Ok(emb)
}

/// Shortest path between two vertices of a fixed component, breadth-first
/// with sorted neighbor order.
fn path_within(
    window: &Ball,
    comp: &BTreeSet<VertexId>,
    from: VertexId,
    to: VertexId,
) -> Option<Vec<VertexId>> {
    let mut parent: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    parent.insert(from, from);
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in window.neighbors_in(v) {
            if comp.contains(&w) && !parent.contains_key(&w) {
                parent.insert(w, v);
                queue.push_back(w);
            }
        }
    }
    if !parent.contains_key(&to) {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Retraction of the window onto an embedded tree.
#[derive(Debug, Clone)]
pub struct TreeRetraction {
    values: BTreeMap<VertexId, VertexId>,
    composite: TowerMap,
}

impl TreeRetraction {
    /// Tree vertex assigned to a window vertex.
    pub fn value(&self, v: VertexId) -> Option<VertexId> {
        self.values.get(&v).copied()
    }

    pub fn values(&self) -> &BTreeMap<VertexId, VertexId> {
        &self.values
    }

    /// Tree-to-tree composite of the embedding map followed by the
    /// retraction's induced map; the identity by construction.
    pub fn composite(&self) -> &TowerMap {
        &self.composite
    }
}

/// Retract the window onto an embedded tree at the end level.
///
/// Requires the embedding's tower map to be injective level by level;
/// otherwise two distinct tree ends would have to factor through one graph
/// end and no retraction can exist.
pub fn tree_retraction(
    exh: &Exhaustion,
    graph_tower: &EndTower,
    emb: &TreeEmbedding,
) -> Result<TreeRetraction, RayError> {
    let n = exh.depth();
    if n == 0 {
        return Err(RayError::NoEnds);
    }
    if !emb.map.is_injective() {
        return Err(RayError::NonInjectiveEndMap(
            "two tree components land in one graph component".into(),
        ));
    }
    // per level: graph component -> tree component, where defined
    let mut preimage: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(n);
    for lvl in 0..n {
        let mut m = BTreeMap::new();
        for (c, &u) in emb.map.levels[lvl].iter().enumerate() {
            m.insert(u, c);
        }
        preimage.push(m);
    }
    // target tree vertex for a graph component, climbing to the nearest
    // branched ancestor
    let target = |mut lvl: usize, mut u: usize| -> VertexId {
        loop {
            if let Some(&c) = preimage[lvl].get(&u) {
                return match emb.branch.as_ref() {
                    Some(branch) => branch[lvl][u],
                    None => *emb
                        .tower
                        .component_vertices(lvl, c)
                        .unwrap()
                        .iter()
                        .next()
                        .unwrap(),
                };
            }
            if lvl == 0 {
                return emb.root;
            }
            u = graph_tower.bond(lvl - 1, u);
            lvl -= 1;
        }
    };

    let window = exh.window();
    let mut values = BTreeMap::new();
    for v in window.vertices() {
        let t = match exh.level_of(v) {
            Some(0) => emb.root,
            Some(i) => {
                let u = graph_tower
                    .component_of(i - 1, v)
                    .expect("vertex outside a level lies in a component");
                target(i - 1, u)
            }
            None => {
                let u = graph_tower
                    .component_of(n - 1, v)
                    .expect("vertex outside all levels lies in a deepest component");
                target(n - 1, u)
            }
        };
        values.insert(v, t);
    }

    // verify the end-level identity: embedding then retraction fixes every
    // tree component
    let mut composite_levels = Vec::with_capacity(n);
    for lvl in 0..n {
        let mut row = Vec::with_capacity(emb.tower.level_size(lvl));
        for c in 0..emb.tower.level_size(lvl) {
            let u = emb.map.levels[lvl][c];
            let t = target(lvl, u);
            let back = emb.tower.component_of(lvl, t).ok_or_else(|| {
                RayError::EmbeddingDegenerate(format!(
                    "retraction target of component ({lvl},{u}) misses the tree tower"
                ))
            })?;
            row.push(back);
        }
        composite_levels.push(row);
    }
    let composite = TowerMap {
        levels: composite_levels,
    };
    if !composite.is_identity() {
        return Err(RayError::EmbeddingDegenerate(
            "embedding followed by retraction is not the identity on tree ends".into(),
        ));
    }
    Ok(TreeRetraction { values, composite })
}
