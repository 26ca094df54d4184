//! Connected, locally finite graphs given implicitly by a neighbor rule.
//!
//! A [`GraphGenerator`] pairs a vertex universe with a deterministic,
//! sorted neighbor enumeration and a basepoint. Vertices are encoded as
//! canonical nonnegative integers per family, so that ids are stable across
//! repeated materializations. All downstream computations happen inside a
//! [`Ball`]: the finite induced subgraph of all vertices within a given
//! distance of the basepoint, with exact distance labels.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Vertex handle, unique and stable within one generator.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u64);

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Default cap on the number of vertices a single ball may contain.
pub const DEFAULT_VERTEX_BUDGET: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("vertex budget exceeded: ball would contain more than {limit} vertices")]
    BudgetExceeded { limit: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("input graph is not connected")]
    DisconnectedInput,
    #[error("input graph is not simple: line {line}")]
    NonSimpleInput { line: usize },
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

// ---------------------------------------------------------------------------
// Integer encodings
// ---------------------------------------------------------------------------

/// Zigzag encoding of a signed integer: 0, -1, 1, -2, 2, ... -> 0, 1, 2, 3, 4, ...
fn zigzag(n: i64) -> u64 {
    if n >= 0 {
        (n as u64) << 1
    } else {
        (((-(n + 1)) as u64) << 1) | 1
    }
}

fn unzigzag(z: u64) -> i64 {
    if z & 1 == 0 {
        (z >> 1) as i64
    } else {
        -((z >> 1) as i64) - 1
    }
}

/// Bits available per coordinate when interleaving `dim` coordinates in a u64.
fn morton_bits(dim: u32) -> u32 {
    64 / dim
}

/// Interleave `coords` bitwise into a single id. Fails if a coordinate does
/// not fit in its bit budget; balls within the vertex budget never get close.
fn morton_encode(coords: &[u64], dim: u32) -> Option<u64> {
    debug_assert_eq!(coords.len(), dim as usize);
    if dim == 1 {
        return Some(coords[0]);
    }
    let bits = morton_bits(dim);
    let mut id: u64 = 0;
    for (j, &c) in coords.iter().enumerate() {
        if c >= 1u64 << bits {
            return None;
        }
        for b in 0..bits {
            if (c >> b) & 1 == 1 {
                id |= 1u64 << (b * dim + j as u32);
            }
        }
    }
    Some(id)
}

fn morton_decode(id: u64, dim: u32) -> Option<Vec<u64>> {
    if dim == 1 {
        return Some(vec![id]);
    }
    let bits = morton_bits(dim);
    if bits * dim < 64 && id >= 1u64 << (bits * dim) {
        return None;
    }
    let mut coords = vec![0u64; dim as usize];
    for j in 0..dim {
        for b in 0..bits {
            if (id >> (b * dim + j)) & 1 == 1 {
                coords[j as usize] |= 1u64 << b;
            }
        }
    }
    Some(coords)
}

// ---------------------------------------------------------------------------
// Rooted tree indexing (d-regular tree)
// ---------------------------------------------------------------------------
//
// Vertices are numbered level by level: the root is 0, level l >= 1 holds
// d*(d-1)^(l-1) vertices in left-to-right order.

struct TreeIndex {
    degree: u64,
}

impl TreeIndex {
    /// (level, offset within level) of a vertex id. Every u64 id is valid.
    fn locate(&self, v: u64) -> (u32, u64) {
        if v == 0 {
            return (0, 0);
        }
        let mut start: u128 = 1;
        let mut size: u128 = self.degree as u128;
        let mut level = 1u32;
        loop {
            if (v as u128) < start + size {
                return (level, (v as u128 - start) as u64);
            }
            start += size;
            size *= (self.degree - 1) as u128;
            level += 1;
        }
    }

    fn level_start(&self, level: u32) -> u128 {
        if level == 0 {
            return 0;
        }
        let mut start: u128 = 1;
        let mut size: u128 = self.degree as u128;
        for _ in 1..level {
            start += size;
            size *= (self.degree - 1) as u128;
        }
        start
    }

    fn parent(&self, v: u64) -> Option<u64> {
        let (level, off) = self.locate(v);
        match level {
            0 => None,
            1 => Some(0),
            _ => {
                let p = self.level_start(level - 1) + (off / (self.degree - 1)) as u128;
                Some(p as u64)
            }
        }
    }

    fn children(&self, v: u64) -> Option<Vec<u64>> {
        let (level, off) = self.locate(v);
        let (start, fan) = if level == 0 {
            (self.level_start(1), self.degree)
        } else {
            (
                self.level_start(level + 1) + (off as u128) * ((self.degree - 1) as u128),
                self.degree - 1,
            )
        };
        let mut out = Vec::with_capacity(fan as usize);
        for j in 0..fan {
            let c = start + j as u128;
            if c > u64::MAX as u128 {
                return None;
            }
            out.push(c as u64);
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Free group words in length-lex order
// ---------------------------------------------------------------------------
//
// Letters 0..2k-1: letter 2j is the j-th generator, 2j+1 its inverse. A word
// is reduced when no letter is followed by its inverse. Ids enumerate reduced
// words by length, then lexicographically: the empty word is 0.

struct WordIndex {
    rank: u64,
}

impl WordIndex {
    fn alphabet(&self) -> u64 {
        2 * self.rank
    }

    fn inverse(letter: u64) -> u64 {
        letter ^ 1
    }

    fn count(&self, len: u32) -> u128 {
        if len == 0 {
            1
        } else {
            (self.alphabet() as u128) * ((self.alphabet() - 1) as u128).pow(len - 1)
        }
    }

    fn word_of(&self, id: u64) -> Vec<u64> {
        let mut start: u128 = 0;
        let mut len = 0u32;
        loop {
            let c = self.count(len);
            if (id as u128) < start + c {
                break;
            }
            start += c;
            len += 1;
        }
        let mut offset = id as u128 - start;
        let mut word = Vec::with_capacity(len as usize);
        for pos in 0..len {
            let remaining = len - pos - 1;
            let fan = if pos == 0 {
                self.alphabet()
            } else {
                self.alphabet() - 1
            } as u128;
            let tail = if remaining == 0 {
                1u128
            } else {
                ((self.alphabet() - 1) as u128).pow(remaining)
            };
            let digit = (offset / tail) as u64;
            debug_assert!((digit as u128) < fan);
            offset %= tail;
            let letter = if pos == 0 {
                digit
            } else {
                // digits skip the inverse of the previous letter
                let prev_inv = Self::inverse(*word.last().unwrap());
                if digit >= prev_inv {
                    digit + 1
                } else {
                    digit
                }
            };
            word.push(letter);
        }
        word
    }

    fn id_of(&self, word: &[u64]) -> Option<u64> {
        let len = word.len() as u32;
        let mut start: u128 = 0;
        for l in 0..len {
            start += self.count(l);
        }
        let mut offset: u128 = 0;
        for (pos, &letter) in word.iter().enumerate() {
            let remaining = len as usize - pos - 1;
            let digit = if pos == 0 {
                letter
            } else {
                let prev_inv = Self::inverse(word[pos - 1]);
                debug_assert_ne!(letter, prev_inv);
                if letter > prev_inv {
                    letter - 1
                } else {
                    letter
                }
            };
            let tail = ((self.alphabet() - 1) as u128).pow(remaining as u32);
            offset += (digit as u128) * tail;
        }
        let id = start + offset;
        if id > u64::MAX as u128 {
            None
        } else {
            Some(id as u64)
        }
    }
}

// ---------------------------------------------------------------------------
// Explicit (finite) graphs and the lfgraph v1 format
// ---------------------------------------------------------------------------

/// A finite graph materialized from an edge list.
#[derive(Debug)]
pub struct ExplicitGraph {
    adj: BTreeMap<u64, Vec<u64>>,
    base: u64,
    degree_bound: u32,
}

impl ExplicitGraph {
    pub fn base(&self) -> VertexId {
        VertexId(self.base)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }
}

/// Parse the `lfgraph v1` text format.
///
/// First line `lfgraph v1`; then optional `v <id>` and `base <id>` lines and
/// `e <u> <v>` edge lines. Duplicate edges and loops are rejected; the graph
/// must be connected. The basepoint is the smallest vertex id unless a
/// `base` line is present.
pub fn parse_edge_list(text: &str) -> Result<GraphGenerator, GraphError> {
    let mut lines = text.lines().enumerate();
    let header = lines.next();
    match header {
        Some((_, h)) if h.trim() == "lfgraph v1" => {}
        Some((i, _)) => {
            return Err(GraphError::Parse {
                line: i + 1,
                msg: "expected header `lfgraph v1`".into(),
            })
        }
        None => {
            return Err(GraphError::Parse {
                line: 1,
                msg: "empty input".into(),
            })
        }
    }

    let mut vertices: BTreeSet<u64> = BTreeSet::new();
    let mut edges: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut base: Option<u64> = None;

    let parse_id = |tok: &str, line: usize| -> Result<u64, GraphError> {
        tok.parse::<u64>().map_err(|_| GraphError::Parse {
            line,
            msg: format!("bad vertex id `{tok}`"),
        })
    };

    for (idx, raw) in lines {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("v") => {
                let (Some(a), None) = (tok.next(), tok.next()) else {
                    return Err(GraphError::Parse {
                        line,
                        msg: "expected `v <id>`".into(),
                    });
                };
                vertices.insert(parse_id(a, line)?);
            }
            Some("base") => {
                let (Some(a), None) = (tok.next(), tok.next()) else {
                    return Err(GraphError::Parse {
                        line,
                        msg: "expected `base <id>`".into(),
                    });
                };
                if base.is_some() {
                    return Err(GraphError::Parse {
                        line,
                        msg: "duplicate `base` line".into(),
                    });
                }
                base = Some(parse_id(a, line)?);
            }
            Some("e") => {
                let (Some(a), Some(b), None) = (tok.next(), tok.next(), tok.next()) else {
                    return Err(GraphError::Parse {
                        line,
                        msg: "expected `e <u> <v>`".into(),
                    });
                };
                let u = parse_id(a, line)?;
                let v = parse_id(b, line)?;
                if u == v {
                    return Err(GraphError::NonSimpleInput { line });
                }
                let key = (u.min(v), u.max(v));
                if !edges.insert(key) {
                    return Err(GraphError::NonSimpleInput { line });
                }
                vertices.insert(u);
                vertices.insert(v);
            }
            Some(other) => {
                return Err(GraphError::Parse {
                    line,
                    msg: format!("unknown directive `{other}`"),
                })
            }
            None => unreachable!(),
        }
    }

    if vertices.is_empty() {
        return Err(GraphError::Parse {
            line: 1,
            msg: "graph has no vertices".into(),
        });
    }

    let mut adj: BTreeMap<u64, Vec<u64>> = vertices.iter().map(|&v| (v, Vec::new())).collect();
    for &(u, v) in &edges {
        adj.get_mut(&u).unwrap().push(v);
        adj.get_mut(&v).unwrap().push(u);
    }
    for nbrs in adj.values_mut() {
        nbrs.sort_unstable();
    }

    // connectivity
    let start = *vertices.iter().next().unwrap();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(start);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[&v] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    if seen.len() != vertices.len() {
        return Err(GraphError::DisconnectedInput);
    }

    let base = match base {
        Some(b) => {
            if !vertices.contains(&b) {
                return Err(GraphError::Parse {
                    line: 1,
                    msg: format!("basepoint {b} is not a vertex"),
                });
            }
            b
        }
        None => *vertices.iter().next().unwrap(),
    };
    let degree_bound = adj.values().map(|n| n.len()).max().unwrap_or(0) as u32;

    let explicit = ExplicitGraph {
        adj,
        base,
        degree_bound,
    };
    Ok(GraphGenerator {
        family: Family::EdgeList(Arc::new(explicit)),
        base: VertexId(base),
    })
}

// ---------------------------------------------------------------------------
// End-sum gluing data (constructed by the endsum module)
// ---------------------------------------------------------------------------

/// Gluing recipe for the wedge of two generators along a ray in each:
/// `left_ray[k]` is identified with `right_ray[k]` for every k. Left ids map
/// to even ids, right ids to odd ids; shared ray vertices use the left id.
#[derive(Debug)]
pub struct EndSumData {
    pub(crate) left: GraphGenerator,
    pub(crate) right: GraphGenerator,
    pub(crate) left_ray: Vec<u64>,
    pub(crate) right_ray: Vec<u64>,
    left_pos: BTreeMap<u64, usize>,
    right_pos: BTreeMap<u64, usize>,
}

impl EndSumData {
    pub(crate) fn new(
        left: GraphGenerator,
        right: GraphGenerator,
        left_ray: Vec<u64>,
        right_ray: Vec<u64>,
    ) -> Self {
        let left_pos = left_ray.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let right_pos = right_ray.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        EndSumData {
            left,
            right,
            left_ray,
            right_ray,
            left_pos,
            right_pos,
        }
    }

    pub(crate) fn encode_left(&self, raw: u64) -> u64 {
        raw << 1
    }

    pub(crate) fn encode_right(&self, raw: u64) -> u64 {
        match self.right_pos.get(&raw) {
            Some(&k) => self.left_ray[k] << 1,
            None => (raw << 1) | 1,
        }
    }

    fn neighbors(&self, v: u64) -> Result<Vec<u64>, GraphError> {
        let mut out: BTreeSet<u64> = BTreeSet::new();
        if v & 1 == 0 {
            let raw = v >> 1;
            for n in self.left.neighbors(VertexId(raw))? {
                out.insert(self.encode_left(n.0));
            }
            if let Some(&k) = self.left_pos.get(&raw) {
                for n in self.right.neighbors(VertexId(self.right_ray[k]))? {
                    out.insert(self.encode_right(n.0));
                }
            }
        } else {
            let raw = v >> 1;
            if self.right_pos.contains_key(&raw) {
                // shared vertices are canonically even-encoded
                return Err(GraphError::UnknownVertex(VertexId(v)));
            }
            for n in self.right.neighbors(VertexId(raw))? {
                out.insert(self.encode_right(n.0));
            }
        }
        Ok(out.into_iter().collect())
    }

    fn contains(&self, v: u64) -> bool {
        if v & 1 == 0 {
            self.left.contains(VertexId(v >> 1))
        } else {
            self.right.contains(VertexId(v >> 1)) && !self.right_pos.contains_key(&(v >> 1))
        }
    }

    fn base(&self) -> u64 {
        self.encode_left(self.left_ray[0])
    }
}

// ---------------------------------------------------------------------------
// Realized layered trees (constructed by the tower module)
// ---------------------------------------------------------------------------

/// A rooted, locally finite tree realizing a layered fiber structure: the root
/// is level 0, level i holds `sizes[i-1]` vertices wired to their parents, and
/// every last-level vertex continues downward along an infinite tail.
#[derive(Debug)]
pub struct TowerTreeData {
    /// Per level, parent index in the previous level (empty Vec for level 1).
    pub(crate) parents: Vec<Vec<usize>>,
    pub(crate) sizes: Vec<usize>,
    children: Vec<Vec<Vec<usize>>>,
    offsets: Vec<u64>,
    inner_total: u64,
}

impl TowerTreeData {
    pub(crate) fn new(sizes: Vec<usize>, parents: Vec<Vec<usize>>) -> Self {
        assert_eq!(sizes.len(), parents.len());
        assert!(!sizes.is_empty());
        let depth = sizes.len();
        let mut offsets = Vec::with_capacity(depth + 1);
        let mut acc = 1u64;
        for &s in &sizes {
            offsets.push(acc);
            acc += s as u64;
        }
        offsets.push(acc);
        let mut children: Vec<Vec<Vec<usize>>> = sizes
            .iter()
            .take(depth - 1)
            .map(|&s| vec![Vec::new(); s])
            .collect();
        for i in 1..depth {
            for (c, &p) in parents[i].iter().enumerate() {
                children[i - 1][p].push(c);
            }
        }
        TowerTreeData {
            parents,
            sizes,
            children,
            offsets,
            inner_total: acc,
        }
    }

    fn depth(&self) -> usize {
        self.sizes.len()
    }

    /// Region of a vertex id: root, inner (level, index), or tail (steps, index).
    fn locate(&self, v: u64) -> TreeVertex {
        if v == 0 {
            return TreeVertex::Root;
        }
        if v < self.inner_total {
            let mut level = 0;
            while self.offsets[level + 1] <= v {
                level += 1;
            }
            return TreeVertex::Inner(level, (v - self.offsets[level]) as usize);
        }
        let last = *self.sizes.last().unwrap() as u64;
        let off = v - self.inner_total;
        TreeVertex::Tail((off / last) as usize + 1, (off % last) as usize)
    }

    fn id_inner(&self, level: usize, idx: usize) -> u64 {
        self.offsets[level] + idx as u64
    }

    fn id_tail(&self, step: usize, idx: usize) -> u64 {
        self.inner_total + (step as u64 - 1) * (*self.sizes.last().unwrap() as u64) + idx as u64
    }

    fn neighbors(&self, v: u64) -> Vec<u64> {
        let depth = self.depth();
        let mut out = Vec::new();
        match self.locate(v) {
            TreeVertex::Root => {
                for idx in 0..self.sizes[0] {
                    out.push(self.id_inner(0, idx));
                }
            }
            TreeVertex::Inner(level, idx) => {
                if level == 0 {
                    out.push(0);
                } else {
                    out.push(self.id_inner(level - 1, self.parents[level][idx]));
                }
                if level + 1 < depth {
                    for &c in &self.children[level][idx] {
                        out.push(self.id_inner(level + 1, c));
                    }
                } else {
                    out.push(self.id_tail(1, idx));
                }
            }
            TreeVertex::Tail(step, idx) => {
                if step == 1 {
                    out.push(self.id_inner(depth - 1, idx));
                } else {
                    out.push(self.id_tail(step - 1, idx));
                }
                out.push(self.id_tail(step + 1, idx));
            }
        }
        out.sort_unstable();
        out
    }

    fn degree_bound(&self) -> u32 {
        let mut fan = self.sizes[0];
        for lvl in &self.children {
            for c in lvl {
                fan = fan.max(c.len());
            }
        }
        (fan + 1) as u32
    }
}

enum TreeVertex {
    Root,
    Inner(usize, usize),
    Tail(usize, usize),
}

// ---------------------------------------------------------------------------
// Generator families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Family {
    /// The integers with consecutive edges (ids zigzag-encoded).
    Line,
    /// The nonnegative integers with consecutive edges.
    HalfLine,
    /// The lattice of the given dimension with axis edges.
    Grid { dim: u32 },
    /// The infinite tree in which every vertex has the given degree.
    RegularTree { degree: u32 },
    /// Cayley graph of the free group of the given rank (a 2k-regular tree).
    FreeGroup { rank: u32 },
    /// Rooted tree: the root and every other vertex have two children.
    BinaryTree,
    /// Half-line spine with an infinite tooth ray at every spine vertex.
    Comb,
    /// A finite graph parsed from an edge list.
    EdgeList(Arc<ExplicitGraph>),
    /// Two generators glued vertexwise along a ray in each.
    EndSum(Arc<EndSumData>),
    /// Rooted tree realizing a layered fiber structure.
    RealizedTree(Arc<TowerTreeData>),
}

/// Implicit connected, locally finite graph: family + basepoint.
#[derive(Debug, Clone)]
pub struct GraphGenerator {
    family: Family,
    base: VertexId,
}

impl GraphGenerator {
    pub fn line() -> Self {
        GraphGenerator {
            family: Family::Line,
            base: VertexId(zigzag(0)),
        }
    }

    pub fn halfline() -> Self {
        GraphGenerator {
            family: Family::HalfLine,
            base: VertexId(0),
        }
    }

    pub fn grid(dim: u32) -> Result<Self, GraphError> {
        if !(1..=6).contains(&dim) {
            return Err(GraphError::BadParams(format!(
                "grid dimension must be 1..=6, got {dim}"
            )));
        }
        let origin = morton_encode(&vec![zigzag(0); dim as usize], dim).unwrap();
        Ok(GraphGenerator {
            family: Family::Grid { dim },
            base: VertexId(origin),
        })
    }

    pub fn regular_tree(degree: u32) -> Result<Self, GraphError> {
        if degree < 2 {
            return Err(GraphError::BadParams(format!(
                "regular tree degree must be >= 2, got {degree}"
            )));
        }
        Ok(GraphGenerator {
            family: Family::RegularTree { degree },
            base: VertexId(0),
        })
    }

    pub fn free_group(rank: u32) -> Result<Self, GraphError> {
        if !(1..=16).contains(&rank) {
            return Err(GraphError::BadParams(format!(
                "free group rank must be 1..=16, got {rank}"
            )));
        }
        Ok(GraphGenerator {
            family: Family::FreeGroup { rank },
            base: VertexId(0),
        })
    }

    pub fn binary_tree() -> Self {
        GraphGenerator {
            family: Family::BinaryTree,
            base: VertexId(0),
        }
    }

    pub fn comb() -> Self {
        GraphGenerator {
            family: Family::Comb,
            base: VertexId(0),
        }
    }

    pub(crate) fn end_sum(data: Arc<EndSumData>) -> Self {
        let base = data.base();
        GraphGenerator {
            family: Family::EndSum(data),
            base: VertexId(base),
        }
    }

    pub(crate) fn realized_tree(data: Arc<TowerTreeData>) -> Self {
        GraphGenerator {
            family: Family::RealizedTree(data),
            base: VertexId(0),
        }
    }

    pub(crate) fn end_sum_data(&self) -> Option<&EndSumData> {
        match &self.family {
            Family::EndSum(d) => Some(d),
            _ => None,
        }
    }

    /// Same family, rebased at the given vertex.
    pub fn with_basepoint(&self, base: VertexId) -> Result<Self, GraphError> {
        if !self.contains(base) {
            return Err(GraphError::UnknownVertex(base));
        }
        Ok(GraphGenerator {
            family: self.family.clone(),
            base,
        })
    }

    pub fn family_name(&self) -> String {
        match &self.family {
            Family::Line => "line".into(),
            Family::HalfLine => "halfline".into(),
            Family::Grid { dim } => format!("grid({dim})"),
            Family::RegularTree { degree } => format!("regular_tree({degree})"),
            Family::FreeGroup { rank } => format!("free_group({rank})"),
            Family::BinaryTree => "binary_tree".into(),
            Family::Comb => "comb".into(),
            Family::EdgeList(_) => "edge_list".into(),
            Family::EndSum(_) => "end_sum".into(),
            Family::RealizedTree(_) => "realized_tree".into(),
        }
    }

    pub fn basepoint(&self) -> VertexId {
        self.base
    }

    pub fn degree_bound(&self) -> u32 {
        match &self.family {
            Family::Line | Family::HalfLine => 2,
            Family::Grid { dim } => 2 * dim,
            Family::RegularTree { degree } => *degree,
            Family::FreeGroup { rank } => 2 * rank,
            Family::BinaryTree | Family::Comb => 3,
            Family::EdgeList(g) => g.degree_bound,
            Family::EndSum(d) => d.left.degree_bound() + d.right.degree_bound(),
            Family::RealizedTree(t) => t.degree_bound(),
        }
    }

    /// Whether `v` belongs to the generator's vertex universe.
    pub fn contains(&self, v: VertexId) -> bool {
        match &self.family {
            Family::Line | Family::HalfLine | Family::BinaryTree | Family::Comb => {
                self.neighbors_raw(v).is_ok()
            }
            Family::Grid { .. } | Family::RegularTree { .. } | Family::FreeGroup { .. } => {
                self.neighbors_raw(v).is_ok()
            }
            Family::EdgeList(g) => g.adj.contains_key(&v.0),
            Family::EndSum(d) => d.contains(v.0),
            Family::RealizedTree(_) => true,
        }
    }

    /// Sorted, deterministic neighbor enumeration.
    pub fn neighbors(&self, v: VertexId) -> Result<Vec<VertexId>, GraphError> {
        self.neighbors_raw(v)
    }

    fn neighbors_raw(&self, v: VertexId) -> Result<Vec<VertexId>, GraphError> {
        let unknown = || GraphError::UnknownVertex(v);
        let ids: Vec<u64> = match &self.family {
            Family::Line => {
                let n = unzigzag(v.0);
                // keep the universe one step away from i64 extremes
                if n == i64::MAX || n == i64::MIN {
                    return Err(unknown());
                }
                vec![zigzag(n - 1), zigzag(n + 1)]
            }
            Family::HalfLine => {
                if v.0 == 0 {
                    vec![1]
                } else if v.0 == u64::MAX {
                    return Err(unknown());
                } else {
                    vec![v.0 - 1, v.0 + 1]
                }
            }
            Family::Grid { dim } => {
                let zz = morton_decode(v.0, *dim).ok_or_else(unknown)?;
                let coords: Vec<i64> = zz.iter().map(|&z| unzigzag(z)).collect();
                let mut out = Vec::with_capacity(2 * *dim as usize);
                for axis in 0..*dim as usize {
                    for delta in [-1i64, 1] {
                        let mut c = coords.clone();
                        c[axis] += delta;
                        let zz: Vec<u64> = c.iter().map(|&x| zigzag(x)).collect();
                        out.push(morton_encode(&zz, *dim).ok_or_else(unknown)?);
                    }
                }
                out
            }
            Family::RegularTree { degree } => {
                let idx = TreeIndex {
                    degree: *degree as u64,
                };
                let mut out = Vec::new();
                if let Some(p) = idx.parent(v.0) {
                    out.push(p);
                }
                out.extend(idx.children(v.0).ok_or_else(unknown)?);
                out
            }
            Family::FreeGroup { rank } => {
                let idx = WordIndex { rank: *rank as u64 };
                let word = idx.word_of(v.0);
                let mut out = Vec::new();
                for letter in 0..idx.alphabet() {
                    if let Some(&last) = word.last() {
                        if letter == WordIndex::inverse(last) {
                            let mut w = word.clone();
                            w.pop();
                            out.push(idx.id_of(&w).ok_or_else(unknown)?);
                            continue;
                        }
                    }
                    let mut w = word.clone();
                    w.push(letter);
                    out.push(idx.id_of(&w).ok_or_else(unknown)?);
                }
                out
            }
            Family::BinaryTree => {
                let mut out = Vec::new();
                if v.0 > 0 {
                    out.push((v.0 - 1) >> 1);
                }
                let c = v.0.checked_mul(2).and_then(|x| x.checked_add(2));
                match c {
                    Some(hi) => {
                        out.push(hi - 1);
                        out.push(hi);
                    }
                    None => return Err(unknown()),
                }
                out
            }
            Family::Comb => {
                let c = morton_decode(v.0, 2).unwrap();
                let (i, j) = (c[0], c[1]);
                let enc = |i: u64, j: u64| morton_encode(&[i, j], 2).ok_or_else(unknown);
                let mut out = Vec::new();
                if j == 0 {
                    if i > 0 {
                        out.push(enc(i - 1, 0)?);
                    }
                    out.push(enc(i + 1, 0)?);
                    out.push(enc(i, 1)?);
                } else {
                    out.push(enc(i, j - 1)?);
                    out.push(enc(i, j + 1)?);
                }
                out
            }
            Family::EdgeList(g) => g.adj.get(&v.0).ok_or_else(unknown)?.clone(),
            Family::EndSum(d) => d.neighbors(v.0)?,
            Family::RealizedTree(t) => t.neighbors(v.0),
        };
        let mut out: Vec<VertexId> = ids.into_iter().map(VertexId).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Materialize the ball of the given radius around the basepoint.
    pub fn materialize_ball(&self, radius: u32) -> Result<Ball, GraphError> {
        self.materialize_ball_with_budget(radius, DEFAULT_VERTEX_BUDGET)
    }

    pub fn materialize_ball_with_budget(
        &self,
        radius: u32,
        budget: usize,
    ) -> Result<Ball, GraphError> {
        if !self.contains(self.base) {
            return Err(GraphError::UnknownVertex(self.base));
        }
        let mut dist: BTreeMap<VertexId, u32> = BTreeMap::new();
        dist.insert(self.base, 0);
        let mut frontier = vec![self.base];
        let mut d = 0u32;
        while d < radius && !frontier.is_empty() {
            let mut next = Vec::new();
            for v in frontier {
                for w in self.neighbors(v)? {
                    if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                        e.insert(d + 1);
                        if dist.len() > budget {
                            return Err(GraphError::BudgetExceeded { limit: budget });
                        }
                        next.push(w);
                    }
                }
            }
            frontier = next;
            d += 1;
        }

        let mut adj: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        for &v in dist.keys() {
            let nbrs: Vec<VertexId> = self
                .neighbors(v)?
                .into_iter()
                .filter(|w| dist.contains_key(w))
                .collect();
            adj.insert(v, nbrs);
        }
        let sphere: BTreeSet<VertexId> = dist
            .iter()
            .filter(|&(_, &d)| d == radius)
            .map(|(&v, _)| v)
            .collect();
        Ok(Ball {
            center: self.base,
            radius,
            dist,
            adj,
            sphere,
        })
    }
}

// ---------------------------------------------------------------------------
// Balls
// ---------------------------------------------------------------------------

/// Finite window: all vertices within `radius` of `center`, the induced
/// edges, true distance labels, and the boundary sphere.
#[derive(Debug, Clone)]
pub struct Ball {
    center: VertexId,
    radius: u32,
    dist: BTreeMap<VertexId, u32>,
    adj: BTreeMap<VertexId, Vec<VertexId>>,
    sphere: BTreeSet<VertexId>,
}

impl Ball {
    pub fn center(&self) -> VertexId {
        self.center
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.dist.contains_key(&v)
    }

    pub fn dist(&self, v: VertexId) -> Option<u32> {
        self.dist.get(&v).copied()
    }

    /// Neighbors of `v` inside the ball, sorted.
    pub fn neighbors_in(&self, v: VertexId) -> &[VertexId] {
        self.adj.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.dist.keys().copied()
    }

    pub fn boundary_sphere(&self) -> &BTreeSet<VertexId> {
        &self.sphere
    }

    /// A window is compact-at-window when nothing sticks out of it.
    pub fn is_compact_at_window(&self) -> bool {
        self.sphere.is_empty()
    }

    /// Undirected edges, each reported once with the smaller endpoint first.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&v, ns)| ns.iter().filter(move |&&w| v < w).map(move |&w| (v, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Vertices at distance <= r from the center.
    pub fn sub_ball(&self, r: u32) -> BTreeSet<VertexId> {
        self.dist
            .iter()
            .filter(|&(_, &d)| d <= r)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Serialize the window in the `lfgraph v1` format.
    pub fn to_graph_v1(&self) -> String {
        let mut out = String::from("lfgraph v1\n");
        out.push_str(&format!("base {}\n", self.center.0));
        for v in self.dist.keys() {
            out.push_str(&format!("v {}\n", v.0));
        }
        for (u, v) in self.edges() {
            out.push_str(&format!("e {} {}\n", u.0, v.0));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
