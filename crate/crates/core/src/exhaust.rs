//! Compact exhaustions with nesting and efficiency certificates.
//!
//! A compactum is a finite set of vertices regarded as a full induced
//! subgraph. Relative to a window, the complement of a compactum decomposes
//! into components; a component is *unbounded-at-window* exactly when it
//! meets the window's boundary sphere. The *bounded filling* of a compactum
//! absorbs every bounded component, after which the complement has only
//! unbounded components. Exhaustion levels are nested so that the closed
//! neighborhood of each level lies inside the next.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::graph::{Ball, GraphError, GraphGenerator, VertexId};

#[derive(Debug, Error)]
pub enum ExhaustError {
    #[error("compactum is not contained in the window")]
    CompactumOutsideWindow,
    #[error("compactum touches the window boundary sphere")]
    CompactumTouchesWindowBoundary,
    #[error("compactum is empty")]
    EmptyCompactum,
    #[error("window too small: radius of at least {required} is needed")]
    WindowTooSmall { required: u32 },
    #[error("levels {level} and {next} are not interior-nested", next = level + 1)]
    NotNested { level: usize },
    #[error("ray is not proper within the window")]
    RayNotProperInWindow,
    #[error("bad level indices")]
    BadIndices,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Finite vertex set regarded as a full induced subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compactum(BTreeSet<VertexId>);

impl Compactum {
    pub fn new(vertices: impl IntoIterator<Item = VertexId>) -> Self {
        Compactum(vertices.into_iter().collect())
    }

    pub fn vertices(&self) -> &BTreeSet<VertexId> {
        &self.0
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether the compactum is connected inside the window.
    pub fn is_connected_in(&self, window: &Ball) -> bool {
        let Some(&start) = self.0.iter().next() else {
            return false;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in window.neighbors_in(v) {
                if self.0.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == self.0.len()
    }
}

/// One component of the complement of a compactum inside a window.
#[derive(Debug, Clone)]
pub struct Component {
    /// Canonical representative: the minimum vertex id in the component.
    pub rep: VertexId,
    pub vertices: BTreeSet<VertexId>,
    /// True when the component meets the window's boundary sphere.
    pub unbounded: bool,
}

/// All components of `window - compactum`, ordered by canonical representative.
#[derive(Debug, Clone)]
pub struct ComplementDecomposition {
    pub components: Vec<Component>,
}

impl ComplementDecomposition {
    pub fn unbounded(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.unbounded)
    }

    pub fn bounded(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| !c.unbounded)
    }

    pub fn unbounded_count(&self) -> usize {
        self.unbounded().count()
    }
}

fn check_compactum(window: &Ball, k: &Compactum) -> Result<(), ExhaustError> {
    if k.is_empty() {
        return Err(ExhaustError::EmptyCompactum);
    }
    for &v in k.vertices() {
        if !window.contains(v) {
            return Err(ExhaustError::CompactumOutsideWindow);
        }
        if window.boundary_sphere().contains(&v) {
            return Err(ExhaustError::CompactumTouchesWindowBoundary);
        }
    }
    Ok(())
}

/// Decompose `window - k` into components and classify each as bounded or
/// unbounded-at-window.
pub fn complement_components(
    window: &Ball,
    k: &Compactum,
) -> Result<ComplementDecomposition, ExhaustError> {
    check_compactum(window, k)?;
    let mut assigned: BTreeSet<VertexId> = BTreeSet::new();
    let mut components = Vec::new();
    for start in window.vertices() {
        if k.contains(start) || assigned.contains(&start) {
            continue;
        }
        let mut verts = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        assigned.insert(start);
        let mut unbounded = window.boundary_sphere().contains(&start);
        while let Some(v) = queue.pop_front() {
            for &w in window.neighbors_in(v) {
                if !k.contains(w) && assigned.insert(w) {
                    verts.insert(w);
                    if window.boundary_sphere().contains(&w) {
                        unbounded = true;
                    }
                    queue.push_back(w);
                }
            }
        }
        let rep = *verts.iter().next().unwrap();
        components.push(Component {
            rep,
            vertices: verts,
            unbounded,
        });
    }
    components.sort_by_key(|c| c.rep);
    Ok(ComplementDecomposition { components })
}

/// The compactum together with every bounded component of its complement.
pub fn bounded_filling(window: &Ball, k: &Compactum) -> Result<Compactum, ExhaustError> {
    let decomp = complement_components(window, k)?;
    let mut verts = k.vertices().clone();
    for c in decomp.bounded() {
        verts.extend(c.vertices.iter().copied());
    }
    Ok(Compactum(verts))
}

/// Nested compacta inside a shared window, with per-level connectivity and
/// efficiency certificates.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    window: Ball,
    levels: Vec<Compactum>,
    connected: Vec<bool>,
    efficient: Vec<bool>,
    /// For ray-efficient exhaustions: per level, the last ray index inside it.
    ray_cuts: Option<Vec<usize>>,
}

impl Exhaustion {
    /// Validate an explicit list of levels against a window.
    ///
    /// Checks that every level is a nonempty compactum away from the window
    /// boundary and that the closed neighborhood of each level is contained
    /// in the next. Connectivity and efficiency flags are computed, not
    /// assumed.
    pub fn from_compacta(window: Ball, levels: Vec<Compactum>) -> Result<Self, ExhaustError> {
        let mut connected = Vec::with_capacity(levels.len());
        let mut efficient = Vec::with_capacity(levels.len());
        for (i, k) in levels.iter().enumerate() {
            check_compactum(&window, k)?;
            if let Some(next) = levels.get(i + 1) {
                for &v in k.vertices() {
                    if !next.contains(v) {
                        return Err(ExhaustError::NotNested { level: i });
                    }
                    for &w in window.neighbors_in(v) {
                        if !next.contains(w) {
                            return Err(ExhaustError::NotNested { level: i });
                        }
                    }
                }
            }
            let conn = k.is_connected_in(&window);
            let decomp = complement_components(&window, k)?;
            let eff = conn && decomp.bounded().next().is_none();
            connected.push(conn);
            efficient.push(eff);
        }
        Ok(Exhaustion {
            window,
            levels,
            connected,
            efficient,
            ray_cuts: None,
        })
    }

    pub fn window(&self) -> &Ball {
        &self.window
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Compactum] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &Compactum {
        &self.levels[i]
    }

    pub fn is_connected(&self, i: usize) -> bool {
        self.connected[i]
    }

    pub fn is_efficient_level(&self, i: usize) -> bool {
        self.efficient[i]
    }

    /// Whether every level is an efficient compactum.
    pub fn is_efficient(&self) -> bool {
        self.efficient.iter().all(|&e| e)
    }

    /// Last ray index inside each level, when built around a ray.
    pub fn ray_cuts(&self) -> Option<&[usize]> {
        self.ray_cuts.as_deref()
    }

    /// Level of a vertex: the first level containing it, if any.
    pub fn level_of(&self, v: VertexId) -> Option<usize> {
        self.levels.iter().position(|k| k.contains(v))
    }

    /// Pick out the levels at the given strictly increasing indices.
    pub fn subsequence(&self, indices: &[usize]) -> Result<Exhaustion, ExhaustError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= self.depth()) {
            return Err(ExhaustError::BadIndices);
        }
        Ok(Exhaustion {
            window: self.window.clone(),
            levels: indices.iter().map(|&i| self.levels[i].clone()).collect(),
            connected: indices.iter().map(|&i| self.connected[i]).collect(),
            efficient: indices.iter().map(|&i| self.efficient[i]).collect(),
            ray_cuts: self
                .ray_cuts
                .as_ref()
                .map(|cuts| indices.iter().map(|&i| cuts[i]).collect()),
        })
    }
}

/// Build the standard efficient exhaustion: bounded fillings of balls of
/// radii 0, stride, 2*stride, ... around the basepoint.
pub fn efficient_exhaustion(
    gen: &GraphGenerator,
    depth: usize,
    window_radius: u32,
) -> Result<Exhaustion, ExhaustError> {
    efficient_exhaustion_with_stride(gen, depth, window_radius, 1)
}

pub fn efficient_exhaustion_with_stride(
    gen: &GraphGenerator,
    depth: usize,
    window_radius: u32,
    stride: u32,
) -> Result<Exhaustion, ExhaustError> {
    efficient_exhaustion_in(gen.materialize_ball(window_radius)?, depth, stride)
}

/// Same as [`efficient_exhaustion_with_stride`] with an already materialized
/// window.
pub fn efficient_exhaustion_in(
    window: Ball,
    depth: usize,
    stride: u32,
) -> Result<Exhaustion, ExhaustError> {
    assert!(stride >= 1, "stride must be positive");
    let window_radius = window.radius();
    if depth == 0 {
        return Ok(Exhaustion {
            window,
            levels: Vec::new(),
            connected: Vec::new(),
            efficient: Vec::new(),
            ray_cuts: None,
        });
    }
    let top_radius = (depth as u32 - 1) * stride;
    if window_radius < top_radius + 2 {
        return Err(ExhaustError::WindowTooSmall {
            required: top_radius + 2,
        });
    }
    let mut levels = Vec::with_capacity(depth);
    for i in 0..depth {
        let r = i as u32 * stride;
        let ball = Compactum(window.sub_ball(r));
        levels.push(bounded_filling(&window, &ball)?);
    }
    let exh = Exhaustion::from_compacta(window, levels)?;
    debug_assert!(exh.is_efficient());
    Ok(exh)
}

/// Build an efficient exhaustion adapted to an embedded proper ray: every
/// level meets the ray in an initial segment, and the cut indices are
/// recorded and strictly increasing.
///
/// The ray must be an embedded path of window vertices whose last vertex
/// lies on the window boundary sphere.
pub fn ray_efficient_exhaustion(
    gen: &GraphGenerator,
    ray: &[VertexId],
    depth: usize,
    window_radius: u32,
) -> Result<Exhaustion, ExhaustError> {
    ray_efficient_exhaustion_in(gen.materialize_ball(window_radius)?, ray, depth)
}

/// Same as [`ray_efficient_exhaustion`] with an already materialized window.
pub fn ray_efficient_exhaustion_in(
    window: Ball,
    ray: &[VertexId],
    depth: usize,
) -> Result<Exhaustion, ExhaustError> {
    let window_radius = window.radius();
    check_ray_in_window(&window, ray)?;
    if depth == 0 {
        return Ok(Exhaustion {
            window,
            levels: Vec::new(),
            connected: Vec::new(),
            efficient: Vec::new(),
            ray_cuts: None,
        });
    }

    let mut levels: Vec<Compactum> = Vec::with_capacity(depth);
    let mut cuts: Vec<usize> = Vec::with_capacity(depth);
    let mut rho = window.dist(ray[0]).unwrap();
    for _ in 0..depth {
        if rho + 2 > window_radius {
            return Err(ExhaustError::WindowTooSmall { required: rho + 2 });
        }
        let ball = window.sub_ball(rho);
        let cut = ray
            .iter()
            .rposition(|v| ball.contains(v))
            .expect("ray starts inside the first level ball");
        let mut core = ball;
        core.extend(ray[..=cut].iter().copied());
        let filled = bounded_filling(&window, &Compactum(core))?;
        // the filling may not swallow any later ray vertex
        let cut = {
            let c = ray.iter().rposition(|v| filled.contains(*v)).unwrap();
            debug_assert!(ray[..=c].iter().all(|v| filled.contains(*v)));
            c
        };
        let max_dist = filled
            .vertices()
            .iter()
            .map(|&v| window.dist(v).unwrap())
            .max()
            .unwrap();
        levels.push(filled);
        cuts.push(cut);
        rho = max_dist + 1;
    }
    debug_assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    let mut exh = Exhaustion::from_compacta(window, levels)?;
    if !exh.is_efficient() {
        return Err(ExhaustError::RayNotProperInWindow);
    }
    exh.ray_cuts = Some(cuts);
    Ok(exh)
}

/// Check that `ray` is an embedded path of window vertices ending on the
/// window boundary sphere.
pub(crate) fn check_ray_in_window(window: &Ball, ray: &[VertexId]) -> Result<(), ExhaustError> {
    if ray.is_empty() {
        return Err(ExhaustError::RayNotProperInWindow);
    }
    let mut seen = BTreeSet::new();
    for &v in ray {
        if !window.contains(v) || !seen.insert(v) {
            return Err(ExhaustError::RayNotProperInWindow);
        }
    }
    for pair in ray.windows(2) {
        if !window.neighbors_in(pair[0]).contains(&pair[1]) {
            return Err(ExhaustError::RayNotProperInWindow);
        }
    }
    if !window.boundary_sphere().contains(ray.last().unwrap()) {
        return Err(ExhaustError::RayNotProperInWindow);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphGenerator;

    fn line_window(r: u32) -> Ball {
        GraphGenerator::line().materialize_ball(r).unwrap()
    }

    #[test]
    fn line_origin_splits_in_two() {
        let w = line_window(5);
        let k = Compactum::new([w.center()]);
        let d = complement_components(&w, &k).unwrap();
        assert_eq!(d.unbounded_count(), 2);
        assert_eq!(d.components.len(), 2);
    }

    #[test]
    fn grid_ball_complement_is_connected() {
        let g = GraphGenerator::grid(2).unwrap();
        let w = g.materialize_ball(6).unwrap();
        let k = Compactum(w.sub_ball(2));
        let d = complement_components(&w, &k).unwrap();
        assert_eq!(d.unbounded_count(), 1);
        assert_eq!(d.components.len(), 1);
    }

    #[test]
    fn tree_complement_components_count() {
        // removing the ball of radius 1 of the 4-regular tree leaves one
        // component per vertex at distance 2
        let g = GraphGenerator::regular_tree(4).unwrap();
        let w = g.materialize_ball(5).unwrap();
        let k = Compactum(w.sub_ball(1));
        let d = complement_components(&w, &k).unwrap();
        assert_eq!(d.unbounded_count(), 12);
        // removing just the root leaves one component per subtree
        let k0 = Compactum(w.sub_ball(0));
        assert_eq!(complement_components(&w, &k0).unwrap().unbounded_count(), 4);
    }

    #[test]
    fn compactum_on_boundary_is_rejected() {
        let w = line_window(3);
        let sphere_vertex = *w.boundary_sphere().iter().next().unwrap();
        let k = Compactum::new([sphere_vertex]);
        assert!(matches!(
            complement_components(&w, &k).unwrap_err(),
            ExhaustError::CompactumTouchesWindowBoundary
        ));
    }

    #[test]
    fn filling_absorbs_a_gap_on_the_line() {
        use crate::graph::VertexId;
        // integers -2 and 2 (ids 3 and 4) leave the gap {-1, 0, 1} bounded
        let w = line_window(8);
        let k = Compactum::new([VertexId(3), VertexId(4)]);
        let filled = bounded_filling(&w, &k).unwrap();
        let expect = Compactum::new([0, 1, 2, 3, 4].map(VertexId));
        assert_eq!(filled, expect);
        // idempotent
        let again = bounded_filling(&w, &filled).unwrap();
        assert_eq!(again, filled);
    }

    #[test]
    fn filling_keeps_unbounded_teeth_and_absorbs_finite_stubs() {
        use crate::graph::VertexId;
        // comb teeth escape every window, so nothing is absorbed there
        let g = GraphGenerator::comb();
        let w = g.materialize_ball(7).unwrap();
        let spine: Vec<_> = (0..=3u64)
            .map(|i| {
                // spine vertex (i, 0) in the comb encoding
                let mut id = 0u64;
                for b in 0..32 {
                    if (i >> b) & 1 == 1 {
                        id |= 1 << (2 * b);
                    }
                }
                VertexId(id)
            })
            .collect();
        let k = Compactum::new(spine);
        let filled = bounded_filling(&w, &k).unwrap();
        assert_eq!(filled.len(), k.len(), "infinite teeth are never absorbed");

        // a comb-like finite graph: spine 0-1-...-5 with a short tooth at 1
        let text = "lfgraph v1\ne 0 1\ne 1 2\ne 2 3\ne 3 4\ne 4 5\ne 1 10\ne 10 11\n";
        let fin = crate::graph::parse_edge_list(text).unwrap();
        let w = fin.materialize_ball(5).unwrap(); // window cuts at distance 5
        let k = Compactum::new([0, 1, 2, 3].map(VertexId));
        let filled = bounded_filling(&w, &k).unwrap();
        // the tooth 10-11 sits fully inside the window and gets absorbed
        assert!(filled.contains(VertexId(10)));
        assert!(filled.contains(VertexId(11)));
        // the spine continuation reaches the window boundary and survives
        assert!(!filled.contains(VertexId(4)));
    }

    #[test]
    fn efficient_exhaustion_on_the_line() {
        let g = GraphGenerator::line();
        let exh = efficient_exhaustion(&g, 3, 10).unwrap();
        assert_eq!(exh.depth(), 3);
        for (i, k) in exh.levels().iter().enumerate() {
            assert_eq!(k.len(), 2 * i + 1);
            assert!(exh.is_connected(i));
            assert!(exh.is_efficient_level(i));
        }
    }

    #[test]
    fn efficient_exhaustion_window_bound_is_exact() {
        let g = GraphGenerator::line();
        assert!(efficient_exhaustion(&g, 4, 5).is_ok());
        let err = efficient_exhaustion(&g, 4, 4).unwrap_err();
        assert!(matches!(err, ExhaustError::WindowTooSmall { required: 5 }));
    }

    #[test]
    fn depth_zero_has_no_levels() {
        let g = GraphGenerator::grid(2).unwrap();
        let exh = efficient_exhaustion(&g, 0, 4).unwrap();
        assert_eq!(exh.depth(), 0);
        assert!(exh.is_efficient());
    }

    #[test]
    fn interior_nesting_holds() {
        let g = GraphGenerator::comb();
        let exh = efficient_exhaustion(&g, 5, 12).unwrap();
        for i in 0..exh.depth() - 1 {
            for &v in exh.level(i).vertices() {
                assert!(exh.level(i + 1).contains(v));
                for &w in exh.window().neighbors_in(v) {
                    assert!(exh.level(i + 1).contains(w));
                }
            }
        }
    }

    #[test]
    fn monotonicity_of_unbounded_counts() {
        for g in [
            GraphGenerator::line(),
            GraphGenerator::grid(2).unwrap(),
            GraphGenerator::regular_tree(3).unwrap(),
            GraphGenerator::comb(),
        ] {
            let exh = efficient_exhaustion(&g, 5, 9).unwrap();
            let mut prev = 0usize;
            for k in exh.levels() {
                let n = complement_components(exh.window(), k)
                    .unwrap()
                    .unbounded_count();
                assert!(n >= prev, "{}", g.family_name());
                prev = n;
            }
        }
    }

    #[test]
    fn classification_is_stable_under_window_growth() {
        for g in [
            GraphGenerator::line(),
            GraphGenerator::halfline(),
            GraphGenerator::grid(2).unwrap(),
            GraphGenerator::regular_tree(4).unwrap(),
            GraphGenerator::free_group(2).unwrap(),
            GraphGenerator::binary_tree(),
            GraphGenerator::comb(),
        ] {
            let w1 = g.materialize_ball(7).unwrap();
            let w2 = g.materialize_ball(9).unwrap();
            let k = Compactum(w1.sub_ball(2));
            let d1 = complement_components(&w1, &k).unwrap();
            let d2 = complement_components(&w2, &k).unwrap();
            let reps1: Vec<_> = d1.unbounded().map(|c| c.rep).collect();
            let reps2: Vec<_> = d2.unbounded().map(|c| c.rep).collect();
            assert_eq!(reps1, reps2, "{}", g.family_name());
            assert_eq!(d1.components.len(), d2.components.len());
        }
    }

    #[test]
    fn subsequence_preserves_structure() {
        let g = GraphGenerator::line();
        let exh = efficient_exhaustion(&g, 6, 10).unwrap();
        let same = exh.subsequence(&[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(same.levels(), exh.levels());
        let thin = exh.subsequence(&[0, 2, 4]).unwrap();
        assert_eq!(thin.depth(), 3);
        assert!(thin.is_efficient());
        // still interior-nested
        for i in 0..thin.depth() - 1 {
            for &v in thin.level(i).vertices() {
                for &w in thin.window().neighbors_in(v) {
                    assert!(thin.level(i + 1).contains(w));
                }
            }
        }
        assert!(matches!(
            exh.subsequence(&[2, 1]).unwrap_err(),
            ExhaustError::BadIndices
        ));
    }

    #[test]
    fn halfline_ray_exhaustion_is_initial_segments() {
        use crate::graph::VertexId;
        let g = GraphGenerator::halfline();
        let ray: Vec<_> = (0..=10).map(VertexId).collect();
        let exh = ray_efficient_exhaustion(&g, &ray, 4, 10).unwrap();
        let cuts = exh.ray_cuts().unwrap().to_vec();
        assert!(cuts.windows(2).all(|p| p[0] < p[1]));
        for (i, k) in exh.levels().iter().enumerate() {
            let expect: BTreeSet<_> = (0..=cuts[i] as u64).map(VertexId).collect();
            assert_eq!(
                k.vertices(),
                &expect,
                "level {i} must be an initial segment"
            );
        }
    }

    #[test]
    fn line_ray_exhaustion_cuts_are_recorded() {
        use crate::graph::VertexId;
        let g = GraphGenerator::line();
        // the ray 0, 1, 2, ... in the zigzag encoding
        let ray: Vec<_> = (0..=9u64).map(|n| VertexId(n << 1)).collect();
        let exh = ray_efficient_exhaustion(&g, &ray, 3, 9).unwrap();
        assert!(exh.is_efficient());
        let cuts = exh.ray_cuts().unwrap();
        for (i, k) in exh.levels().iter().enumerate() {
            for (t, v) in ray.iter().enumerate() {
                assert_eq!(k.contains(*v), t <= cuts[i]);
            }
        }
    }

    #[test]
    fn broken_rays_are_rejected() {
        use crate::graph::VertexId;
        let g = GraphGenerator::line();
        // not ending on the sphere
        let short: Vec<_> = (0..=3u64).map(|n| VertexId(n << 1)).collect();
        assert!(matches!(
            ray_efficient_exhaustion(&g, &short, 2, 9).unwrap_err(),
            ExhaustError::RayNotProperInWindow
        ));
        assert!(matches!(
            ray_efficient_exhaustion(&g, &[], 2, 9).unwrap_err(),
            ExhaustError::RayNotProperInWindow
        ));
    }
}
