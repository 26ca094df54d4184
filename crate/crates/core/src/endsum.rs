//! End sums of two ray-based graphs with verified end arithmetic.
//!
//! The sum of two ray-based graphs identifies the two rays vertex by vertex.
//! At the end level this glues the two pointed ends together and keeps
//! everything else disjoint, so the visible end count is additive minus one,
//! the glued tower is isomorphic to the quotient of the two towers at their
//! pointed threads, and reduced ranks add up.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::exhaust::{
    bounded_filling, check_ray_in_window, efficient_exhaustion, efficient_exhaustion_with_stride,
    Compactum, ExhaustError, Exhaustion,
};
use crate::graph::{EndSumData, GraphError, GraphGenerator, VertexId};
use crate::h0e::{H0Algebra, H0Error};
use crate::rays::{points_to, Ray, RayError};
use crate::tower::{quotient_tower, EndPrefix, EndTower, TowerError};

#[derive(Debug, Error)]
pub enum EndSumError {
    #[error("ray is not proper within its window")]
    RayNotProperInWindow,
    #[error(
        "aligned exhaustions are not interior-nested; minimal working stride is {minimal_stride}"
    )]
    AlignmentFailure { minimal_stride: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Exhaust(#[from] ExhaustError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    H0(#[from] H0Error),
}

/// Two ray-based generators to be summed, plus the common truncation scale.
#[derive(Debug, Clone)]
pub struct EndSumSpec {
    left: GraphGenerator,
    left_ray: Vec<VertexId>,
    right: GraphGenerator,
    right_ray: Vec<VertexId>,
    depth: usize,
    window_radius: u32,
}

impl EndSumSpec {
    /// Validate both rays against their windows at the common radius.
    pub fn new(
        left: GraphGenerator,
        left_ray: Vec<VertexId>,
        right: GraphGenerator,
        right_ray: Vec<VertexId>,
        depth: usize,
        window_radius: u32,
    ) -> Result<Self, EndSumError> {
        let lw = left.materialize_ball(window_radius)?;
        check_ray_in_window(&lw, &left_ray).map_err(|_| EndSumError::RayNotProperInWindow)?;
        let rw = right.materialize_ball(window_radius)?;
        check_ray_in_window(&rw, &right_ray).map_err(|_| EndSumError::RayNotProperInWindow)?;
        Ok(EndSumSpec {
            left,
            left_ray,
            right,
            right_ray,
            depth,
            window_radius,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn window_radius(&self) -> u32 {
        self.window_radius
    }
}

/// The glued graph: left and right vertex universes kept apart except along
/// the identified rays. Left ids map to even ids, right ids to odd ids, and
/// shared ray vertices take the left encoding.
pub fn end_sum_graph(spec: &EndSumSpec) -> Result<GraphGenerator, EndSumError> {
    let data = EndSumData::new(
        spec.left.clone(),
        spec.right.clone(),
        spec.left_ray.iter().map(|v| v.0).collect(),
        spec.right_ray.iter().map(|v| v.0).collect(),
    );
    Ok(GraphGenerator::end_sum(Arc::new(data)))
}

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRow {
    pub left: usize,
    pub right: usize,
    pub sum: usize,
    pub predicted: usize,
}

impl LevelRow {
    pub fn matches(&self) -> bool {
        self.sum == self.predicted
    }
}

/// Verification report: level-size arithmetic, tower isomorphy with the
/// quotient, and reduced-rank additivity.
#[derive(Debug, Clone)]
pub struct EndSumReport {
    pub rows: Vec<LevelRow>,
    pub codes_equal: bool,
    pub reduced_left: usize,
    pub reduced_right: usize,
    pub reduced_sum: usize,
    pub sum_tower: EndTower,
    pub quotient: EndTower,
}

impl EndSumReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(LevelRow::matches)
            && self.codes_equal
            && self.reduced_sum == self.reduced_left + self.reduced_right
    }
}

impl fmt::Display for EndSumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "level {}: {} = {}+{}-1 {}",
                i + 1,
                row.sum,
                row.left,
                row.right,
                if row.matches() { "OK" } else { "MISMATCH" }
            )?;
        }
        writeln!(
            f,
            "code equality: {}",
            if self.codes_equal { "OK" } else { "MISMATCH" }
        )?;
        writeln!(
            f,
            "reduced rank additivity: {} = {}+{} {}",
            self.reduced_sum,
            self.reduced_left,
            self.reduced_right,
            if self.reduced_sum == self.reduced_left + self.reduced_right {
                "OK"
            } else {
                "MISMATCH"
            }
        )
    }
}

struct Summand {
    exh: Exhaustion,
    tower: EndTower,
    prefix: EndPrefix,
}

/// The summand's tower plus the end its ray points to. A window-proper ray
/// that fails to meet the levels in initial segments is an alignment
/// problem, not a properness one.
fn build_summand(
    spec: &EndSumSpec,
    gen: &GraphGenerator,
    ray: &[VertexId],
) -> Result<Summand, EndSumError> {
    let exh = efficient_exhaustion(gen, spec.depth, spec.window_radius)?;
    let tower = EndTower::build(&exh)?;
    let ray = Ray::certify(&exh, ray.to_vec()).map_err(|_| alignment_failure(spec))?;
    let prefix = points_to(&ray, &exh, &tower)?;
    Ok(Summand { exh, tower, prefix })
}

/// Build the glued graph's tower over the aligned exhaustion (unions of the
/// pushed-forward levels, bounded-filled) and verify it against the
/// predicted quotient tower.
pub fn verify_end_sum(spec: &EndSumSpec) -> Result<EndSumReport, EndSumError> {
    let left = build_summand(spec, &spec.left, &spec.left_ray)?;
    let right = build_summand(spec, &spec.right, &spec.right_ray)?;

    let glued = end_sum_graph(spec)?;
    let data = match glued.end_sum_data() {
        Some(d) => d,
        None => unreachable!("end_sum_graph returns an end-sum generator"),
    };
    let window = glued.materialize_ball(spec.window_radius)?;

    // aligned levels: images of both levels, unioned and filled
    let mut levels = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        let mut verts: Vec<VertexId> = left
            .exh
            .level(i)
            .vertices()
            .iter()
            .map(|v| VertexId(data.encode_left(v.0)))
            .collect();
        verts.extend(
            right
                .exh
                .level(i)
                .vertices()
                .iter()
                .map(|v| VertexId(data.encode_right(v.0))),
        );
        if verts
            .iter()
            .any(|v| !window.contains(*v) || window.boundary_sphere().contains(v))
        {
            return Err(alignment_failure(spec));
        }
        levels.push(bounded_filling(&window, &Compactum::new(verts))?);
    }
    let sum_exh = match Exhaustion::from_compacta(window, levels) {
        Ok(e) => e,
        Err(ExhaustError::NotNested { .. }) => return Err(alignment_failure(spec)),
        Err(e) => return Err(e.into()),
    };
    let sum_tower = EndTower::build(&sum_exh)?;

    // the glued ray is the image of the left ray
    let sum_ray_verts: Vec<VertexId> = spec
        .left_ray
        .iter()
        .map(|v| VertexId(data.encode_left(v.0)))
        .collect();
    let sum_ray = Ray::certify(&sum_exh, sum_ray_verts).map_err(|_| alignment_failure(spec))?;
    let sum_prefix = points_to(&sum_ray, &sum_exh, &sum_tower)?;

    let quotient = quotient_tower(&left.tower, &left.prefix, &right.tower, &right.prefix)?;

    let rows = (0..spec.depth)
        .map(|i| LevelRow {
            left: left.tower.level_size(i),
            right: right.tower.level_size(i),
            sum: sum_tower.level_size(i),
            predicted: left.tower.level_size(i) + right.tower.level_size(i) - 1,
        })
        .collect();
    let codes_equal = sum_tower.canonical_code() == quotient.canonical_code();

    let reduced_left = H0Algebra::new(&left.tower)?
        .reduced_basis(&left.prefix)?
        .len();
    let reduced_right = H0Algebra::new(&right.tower)?
        .reduced_basis(&right.prefix)?
        .len();
    let reduced_sum = H0Algebra::new(&sum_tower)?
        .reduced_basis(&sum_prefix)?
        .len();

    Ok(EndSumReport {
        rows,
        codes_equal,
        reduced_left,
        reduced_right,
        reduced_sum,
        sum_tower,
        quotient,
    })
}

/// Find the smallest stride for which both strided exhaustions align, for
/// the error report.
fn alignment_failure(spec: &EndSumSpec) -> EndSumError {
    for stride in 2..=spec.window_radius.max(2) {
        let fits = |gen: &GraphGenerator| {
            efficient_exhaustion_with_stride(gen, spec.depth, spec.window_radius, stride).is_ok()
        };
        if fits(&spec.left) && fits(&spec.right) {
            return EndSumError::AlignmentFailure {
                minimal_stride: stride,
            };
        }
    }
    EndSumError::AlignmentFailure {
        minimal_stride: spec.window_radius,
    }
}
