//! `ends`: compute end invariants of connected, locally finite graphs.
//!
//! Exit codes: 0 on success, 1 on a domain error (one `ERR:<Name>` line on
//! stderr), 2 on a usage error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_traits::Signed;

use ends_core::endsum::{verify_end_sum, EndSumError, EndSumSpec};
use ends_core::exhaust::{
    efficient_exhaustion, ray_efficient_exhaustion, ExhaustError, Exhaustion,
};
use ends_core::graph::{parse_edge_list, GraphError, GraphGenerator};
use ends_core::h0e::{det_bareiss, H0Algebra, H0Error, RepresentativeRule};
use ends_core::rays::{build_retraction, embed_end_tree, find_ray, Ray, RayError};
use ends_core::tower::{normalize_tower, tree_realization, EndPrefix, EndTower, TowerError};

#[derive(Parser)]
#[command(
    name = "ends",
    about = "End invariants of connected, locally finite graphs",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a window and emit it in the lfgraph v1 format.
    Gen {
        #[command(flatten)]
        source: Source,
        /// Window radius.
        #[arg(long)]
        window: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the end tower and print its level sizes table.
    Tower {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
        /// Write the tower in the tower v1 format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the visible end count and the stabilization heuristic.
    Ends {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
    },
    /// Dimension-zero end cohomology: rank and explicit bases.
    H0 {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
        /// Coefficients: `z` or `fp:<p>`.
        #[arg(long, default_value = "z")]
        coeff: String,
        /// List the basis elements.
        #[arg(long)]
        basis: bool,
        /// Use the reduced (ray-based) basis; requires --end.
        #[arg(long)]
        reduced: bool,
        /// End thread as a comma list of component indices per level.
        #[arg(long)]
        end: Option<String>,
    },
    /// Find an embedded proper ray pointing to a given end.
    Ray {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
        #[arg(long)]
        end: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the proper retraction onto a ray.
    Retract {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
        /// End thread to point the ray at.
        #[arg(long)]
        end: Option<String>,
        /// Load the ray from a `ray v1` file instead.
        #[arg(long)]
        ray: Option<PathBuf>,
    },
    /// Embed an end tree realizing the tower and retract onto it.
    Tree {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scale: Scale,
        /// Write the embedded tree in DOT format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Realize an imported tower by a rooted tree.
    Realize {
        /// Tower file in the tower v1 format.
        #[arg(long)]
        tower: PathBuf,
        /// Write the realized tree's tower in the tower v1 format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Glue two ray-based graphs and verify the end arithmetic.
    Endsum {
        /// Left summand: family name, optionally `name:k=v,...`.
        #[arg(long)]
        left: String,
        /// Right summand: family name, optionally `name:k=v,...`.
        #[arg(long)]
        right: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        window: Option<u32>,
        /// End thread for the left summand (defaults to the first).
        #[arg(long)]
        left_end: Option<String>,
        /// End thread for the right summand (defaults to the first).
        #[arg(long)]
        right_end: Option<String>,
    },
    /// Emit a tower as a DOT digraph (unary chains collapsed).
    Dot {
        #[command(flatten)]
        source: Source,
        /// Read a tower v1 file instead of building from a family.
        #[arg(long)]
        tower: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        window: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Builtin family: line, halfline, grid, regular_tree, free_group,
    /// binary_tree, comb.
    #[arg(long)]
    family: Option<String>,
    /// Family parameters, e.g. `d=2` or `k=2`.
    #[arg(long)]
    params: Option<String>,
    /// Graph file in the lfgraph v1 format.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct Scale {
    /// Number of exhaustion levels.
    #[arg(long)]
    depth: usize,
    /// Window radius; defaults to `3 * depth + 2`.
    #[arg(long)]
    window: Option<u32>,
}

impl Scale {
    fn window_radius(&self) -> u32 {
        self.window.unwrap_or(3 * self.depth as u32 + 2)
    }
}

enum AppError {
    Usage(String),
    Domain { code: &'static str, msg: String },
}

impl AppError {
    fn domain(code: &'static str, msg: impl Into<String>) -> Self {
        AppError::Domain {
            code,
            msg: msg.into(),
        }
    }
}

impl From<GraphError> for AppError {
    fn from(e: GraphError) -> Self {
        let code = match &e {
            GraphError::UnknownVertex(_) => "UnknownVertex",
            GraphError::BudgetExceeded { .. } => "BudgetExceeded",
            GraphError::Parse { .. } => "ParseError",
            GraphError::DisconnectedInput => "DisconnectedInput",
            GraphError::NonSimpleInput { .. } => "NonSimpleInput",
            GraphError::BadParams(_) => "BadParams",
        };
        AppError::domain(code, e.to_string())
    }
}

impl From<ExhaustError> for AppError {
    fn from(e: ExhaustError) -> Self {
        let code = match &e {
            ExhaustError::CompactumOutsideWindow => "CompactumOutsideWindow",
            ExhaustError::CompactumTouchesWindowBoundary => "CompactumTouchesWindowBoundary",
            ExhaustError::EmptyCompactum => "EmptyCompactum",
            ExhaustError::WindowTooSmall { .. } => "WindowTooSmall",
            ExhaustError::NotNested { .. } => "NotNested",
            ExhaustError::RayNotProperInWindow => "RayNotProperInWindow",
            ExhaustError::BadIndices => "BadIndices",
            ExhaustError::Graph(g) => return AppError::from_graph_ref(g, e.to_string()),
        };
        AppError::domain(code, e.to_string())
    }
}

impl AppError {
    fn from_graph_ref(g: &GraphError, msg: String) -> AppError {
        let code = match g {
            GraphError::UnknownVertex(_) => "UnknownVertex",
            GraphError::BudgetExceeded { .. } => "BudgetExceeded",
            GraphError::Parse { .. } => "ParseError",
            GraphError::DisconnectedInput => "DisconnectedInput",
            GraphError::NonSimpleInput { .. } => "NonSimpleInput",
            GraphError::BadParams(_) => "BadParams",
        };
        AppError::domain(code, msg)
    }
}

impl From<TowerError> for AppError {
    fn from(e: TowerError) -> Self {
        let code = match &e {
            TowerError::DepthOutOfRange => "DepthOutOfRange",
            TowerError::BadIndices => "BadIndices",
            TowerError::DepthMismatch => "DepthMismatch",
            TowerError::IncoherentPrefix => "IncoherentPrefix",
            TowerError::NotProper(_) => "NotProper",
            TowerError::EmptyLevelAfterNormalization => "EmptyLevelAfterNormalization",
            TowerError::MissingComponentData => "MissingComponentData",
            TowerError::Parse { .. } => "ParseError",
            TowerError::Exhaust(inner) => return AppError::from(inner_clone(inner)),
        };
        AppError::domain(code, e.to_string())
    }
}

// ExhaustError is not Clone; rebuild the few cases we forward
fn inner_clone(e: &ExhaustError) -> ExhaustError {
    match e {
        ExhaustError::CompactumOutsideWindow => ExhaustError::CompactumOutsideWindow,
        ExhaustError::CompactumTouchesWindowBoundary => {
            ExhaustError::CompactumTouchesWindowBoundary
        }
        ExhaustError::EmptyCompactum => ExhaustError::EmptyCompactum,
        ExhaustError::WindowTooSmall { required } => ExhaustError::WindowTooSmall {
            required: *required,
        },
        ExhaustError::NotNested { level } => ExhaustError::NotNested { level: *level },
        ExhaustError::RayNotProperInWindow => ExhaustError::RayNotProperInWindow,
        ExhaustError::BadIndices => ExhaustError::BadIndices,
        ExhaustError::Graph(g) => ExhaustError::Graph(match g {
            GraphError::UnknownVertex(v) => GraphError::UnknownVertex(*v),
            GraphError::BudgetExceeded { limit } => GraphError::BudgetExceeded { limit: *limit },
            GraphError::Parse { line, msg } => GraphError::Parse {
                line: *line,
                msg: msg.clone(),
            },
            GraphError::DisconnectedInput => GraphError::DisconnectedInput,
            GraphError::NonSimpleInput { line } => GraphError::NonSimpleInput { line: *line },
            GraphError::BadParams(s) => GraphError::BadParams(s.clone()),
        }),
    }
}

impl From<RayError> for AppError {
    fn from(e: RayError) -> Self {
        let code = match &e {
            RayError::WindowTooSmall { .. } => "WindowTooSmall",
            RayError::RayNotProperInWindow => "RayNotProperInWindow",
            RayError::NotRayEfficient => "NotRayEfficient",
            RayError::NonInjectiveEndMap(_) => "NonInjectiveEndMap",
            RayError::NoEnds => "NoEnds",
            RayError::PrefixDepth => "PrefixDepth",
            RayError::EmbeddingDegenerate(_) => "EmbeddingDegenerate",
            RayError::Tower(t) => {
                return AppError::domain(
                    match t {
                        TowerError::IncoherentPrefix => "IncoherentPrefix",
                        TowerError::BadIndices => "BadIndices",
                        _ => "TowerError",
                    },
                    e.to_string(),
                )
            }
            RayError::Exhaust(inner) => return AppError::from(inner_clone(inner)),
        };
        AppError::domain(code, e.to_string())
    }
}

impl From<H0Error> for AppError {
    fn from(e: H0Error) -> Self {
        let code = match &e {
            H0Error::DepthOutOfRange => "DepthOutOfRange",
            H0Error::TowerMismatch => "TowerMismatch",
            H0Error::PrefixTooShallow => "PrefixTooShallow",
            H0Error::IncoherentPrefix => "IncoherentPrefix",
            H0Error::BadCochain => "BadCochain",
            H0Error::NonSurjectiveBonds => "NonSurjectiveBonds",
            H0Error::NotPrime(_) => "NotPrime",
            H0Error::Parse { .. } => "ParseError",
            H0Error::Tower(_) => "TowerError",
        };
        AppError::domain(code, e.to_string())
    }
}

impl From<EndSumError> for AppError {
    fn from(e: EndSumError) -> Self {
        match e {
            EndSumError::RayNotProperInWindow => {
                AppError::domain("RayNotProperInWindow", "ray is not proper within its window")
            }
            EndSumError::AlignmentFailure { minimal_stride } => AppError::domain(
                "AlignmentFailure",
                format!("aligned exhaustions are not interior-nested; minimal working stride is {minimal_stride}"),
            ),
            EndSumError::Graph(g) => g.into(),
            EndSumError::Exhaust(x) => x.into(),
            EndSumError::Tower(t) => t.into(),
            EndSumError::Ray(r) => r.into(),
            EndSumError::H0(h) => h.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `ends --help` for usage");
            ExitCode::from(2)
        }
        Err(AppError::Domain { code, msg }) => {
            eprintln!("ERR:{code}: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_params(params: Option<&str>) -> Result<Vec<(String, u32)>, AppError> {
    let mut out = Vec::new();
    let Some(params) = params else {
        return Ok(out);
    };
    for item in params.split(',').filter(|s| !s.is_empty()) {
        let Some((k, v)) = item.split_once('=') else {
            return Err(AppError::Usage(format!(
                "bad parameter `{item}`; expected k=v"
            )));
        };
        let v: u32 = v
            .parse()
            .map_err(|_| AppError::Usage(format!("bad parameter value in `{item}`")))?;
        out.push((k.to_string(), v));
    }
    Ok(out)
}

fn family_from(name: &str, params: Option<&str>) -> Result<GraphGenerator, AppError> {
    let params = parse_params(params)?;
    let get = |key: &str, default: u32| -> u32 {
        params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    };
    let gen = match name {
        "line" => GraphGenerator::line(),
        "halfline" => GraphGenerator::halfline(),
        "grid" => GraphGenerator::grid(get("d", 2))?,
        "regular_tree" => GraphGenerator::regular_tree(get("d", 3))?,
        "free_group" => GraphGenerator::free_group(get("k", 2))?,
        "binary_tree" => GraphGenerator::binary_tree(),
        "comb" => GraphGenerator::comb(),
        other => {
            return Err(AppError::Usage(format!(
                "unknown family `{other}`; expected one of line, halfline, grid, regular_tree, free_group, binary_tree, comb"
            )))
        }
    };
    Ok(gen)
}

impl Source {
    fn resolve(&self) -> Result<GraphGenerator, AppError> {
        match (&self.family, &self.graph) {
            (Some(name), None) => family_from(name, self.params.as_deref()),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?;
                Ok(parse_edge_list(&text)?)
            }
            (Some(_), Some(_)) => Err(AppError::Usage(
                "give either --family or --graph, not both".into(),
            )),
            (None, None) => Err(AppError::Usage(
                "one of --family or --graph is required".into(),
            )),
        }
    }
}

/// `fam` or `fam:k=v,...` for the endsum summands.
fn summand_from(spec: &str) -> Result<GraphGenerator, AppError> {
    match spec.split_once(':') {
        Some((name, params)) => family_from(name, Some(params)),
        None => family_from(spec, None),
    }
}

fn parse_end(tower: &EndTower, text: &str) -> Result<EndPrefix, AppError> {
    let thread: Result<Vec<usize>, _> = text.split(',').map(str::parse).collect();
    let thread =
        thread.map_err(|_| AppError::Usage(format!("bad --end `{text}`; expected e.g. 0,1,0")))?;
    let prefix = EndPrefix { thread };
    tower.check_prefix(&prefix)?;
    if prefix.depth() != tower.depth() {
        return Err(AppError::Usage(format!(
            "--end must list one component per level ({} expected)",
            tower.depth()
        )));
    }
    Ok(prefix)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| AppError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build(source: &Source, scale: &Scale) -> Result<(Exhaustion, EndTower), AppError> {
    let gen = source.resolve()?;
    let exh = efficient_exhaustion(&gen, scale.depth, scale.window_radius())?;
    let tower = EndTower::build(&exh)?;
    Ok((exh, tower))
}

fn run(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Gen {
            source,
            window,
            out,
        } => {
            let gen = source.resolve()?;
            let ball = gen.materialize_ball(window)?;
            emit(out.as_ref(), &ball.to_graph_v1())
        }
        Command::Tower { source, scale, out } => {
            let (_, tower) = build(&source, &scale)?;
            let sizes: Vec<String> = tower.level_sizes().iter().map(usize::to_string).collect();
            println!("sizes: {}", sizes.join(" "));
            let report = tower.ends_report();
            match report.stabilized_count {
                Some(c) if report.stabilized => println!("stabilized: yes (count {c})"),
                _ => println!("stabilized: no"),
            }
            if let Some(path) = out {
                emit(Some(&path), &tower.to_tower_v1())?;
            }
            Ok(())
        }
        Command::Ends { source, scale } => {
            let (_, tower) = build(&source, &scale)?;
            let report = tower.ends_report();
            println!(
                "count at depth {}: {}",
                tower.depth(),
                report.count_at_depth
            );
            println!(
                "stabilized: {}",
                if report.stabilized { "yes" } else { "no" }
            );
            if let Some(c) = report.stabilized_count {
                println!("stabilized count: {c}");
            }
            Ok(())
        }
        Command::H0 {
            source,
            scale,
            coeff,
            basis: list_basis,
            reduced,
            end,
        } => {
            let (_, tower) = build(&source, &scale)?;
            let modulus = match coeff.as_str() {
                "z" => None,
                other => match other.strip_prefix("fp:") {
                    Some(p) => Some(p.parse::<u64>().map_err(|_| {
                        AppError::Usage(format!("bad --coeff `{other}`; expected z or fp:<p>"))
                    })?),
                    None => {
                        return Err(AppError::Usage(format!(
                            "bad --coeff `{other}`; expected z or fp:<p>"
                        )))
                    }
                },
            };
            let alg = match modulus {
                None => H0Algebra::new(&tower)?,
                Some(p) => H0Algebra::with_modulus(&tower, p)?,
            };
            let n = tower.depth();
            println!("rank at depth {}: {}", n, tower.level_size(n - 1));
            let b = alg.basis(RepresentativeRule::MinId)?;
            println!("basis size: {}", b.len());
            let matrix = {
                let mut m = alg.basis_matrix(&b, n - 1)?;
                m.reverse();
                m
            };
            let det = det_bareiss(matrix);
            println!(
                "basis det at depth {}: {}",
                n,
                if det.is_negative() { "-1" } else { "+1" }
            );
            if list_basis {
                for &(level, comp) in &b.elements {
                    println!("element: level {} comp {}", level + 1, comp);
                }
            }
            if reduced {
                let Some(end) = end else {
                    return Err(AppError::Usage("--reduced requires --end".into()));
                };
                let prefix = parse_end(&tower, &end)?;
                let rb = alg.reduced_basis(&prefix)?;
                println!("reduced basis size: {}", rb.len());
            }
            Ok(())
        }
        Command::Ray {
            source,
            scale,
            end,
            out,
        } => {
            let (exh, tower) = build(&source, &scale)?;
            let prefix = parse_end(&tower, &end)?;
            let ray = find_ray(&exh, &tower, &prefix)?;
            emit(out.as_ref(), &ray.to_ray_v1())
        }
        Command::Retract {
            source,
            scale,
            end,
            ray,
        } => {
            let gen = source.resolve()?;
            let exh = efficient_exhaustion(&gen, scale.depth, scale.window_radius())?;
            let vertices = match (end, ray) {
                (Some(end), None) => {
                    let tower = EndTower::build(&exh)?;
                    let prefix = parse_end(&tower, &end)?;
                    find_ray(&exh, &tower, &prefix)?.vertices().to_vec()
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        AppError::Usage(format!("cannot read {}: {e}", path.display()))
                    })?;
                    parse_ray_file(&text)?
                }
                _ => return Err(AppError::Usage("give exactly one of --end or --ray".into())),
            };
            let rexh =
                ray_efficient_exhaustion(&gen, &vertices, scale.depth, scale.window_radius())?;
            let ray = Ray::certify(&rexh, vertices)?;
            let retraction = build_retraction(&rexh, &ray)?;
            println!("ray length: {}", ray.len());
            for i in 0..rexh.depth() {
                println!(
                    "level {}: a={} b={}",
                    i + 1,
                    retraction.frontier_entry(i),
                    retraction.ray_cut(i)
                );
            }
            let fixed = ray
                .vertices()
                .iter()
                .enumerate()
                .all(|(t, &v)| retraction.value(v) == Some(t as u64));
            println!(
                "rho(r(t)) = t: {} ({} indices)",
                if fixed { "OK" } else { "MISMATCH" },
                ray.len()
            );
            println!("max edge stretch: {}", retraction.max_edge_stretch());
            Ok(())
        }
        Command::Tree { source, scale, out } => {
            let (exh, tower) = build(&source, &scale)?;
            let emb = embed_end_tree(&exh, &tower)?;
            let branch = emb
                .branch_vertices()
                .expect("embedded trees carry branches");
            let counts: Vec<String> = branch.iter().map(|l| l.len().to_string()).collect();
            println!("branch vertices per level: {}", counts.join(" "));
            println!(
                "tower map bijective: {}",
                if emb.tower_map().is_bijective(&tower) {
                    "yes"
                } else {
                    "no"
                }
            );
            let retr = ends_core::rays::tree_retraction(&exh, &tower, &emb)?;
            println!(
                "end-level retraction: {}",
                if retr.composite().is_identity() {
                    "OK"
                } else {
                    "MISMATCH"
                }
            );
            if let Some(path) = out {
                emit(Some(&path), &tree_dot(&emb))?;
            }
            Ok(())
        }
        Command::Realize { tower, out } => {
            let text = fs::read_to_string(&tower)
                .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", tower.display())))?;
            let imported = EndTower::parse_tower_v1(&text)?;
            let normalized = normalize_tower(&imported)?;
            let (gen, _exh, realized) = tree_realization(&imported)?;
            let sizes: Vec<String> = normalized
                .level_sizes()
                .iter()
                .map(usize::to_string)
                .collect();
            println!("normalized sizes: {}", sizes.join(" "));
            println!("tree degree bound: {}", gen.degree_bound());
            println!(
                "code match: {}",
                if realized.canonical_code() == normalized.canonical_code() {
                    "OK"
                } else {
                    "MISMATCH"
                }
            );
            if let Some(path) = out {
                emit(Some(&path), &realized.to_tower_v1())?;
            }
            Ok(())
        }
        Command::Endsum {
            left,
            right,
            depth,
            window,
            left_end,
            right_end,
        } => {
            let window = window.unwrap_or(3 * depth as u32 + 2);
            let left_gen = summand_from(&left)?;
            let right_gen = summand_from(&right)?;
            let ray_for =
                |gen: &GraphGenerator, end: Option<&String>| -> Result<Vec<_>, AppError> {
                    let exh = efficient_exhaustion(gen, depth, window)?;
                    let t = EndTower::build(&exh)?;
                    let prefix = match end {
                        Some(e) => parse_end(&t, e)?,
                        None => t
                            .enumerate_prefixes(depth)?
                            .into_iter()
                            .next()
                            .ok_or_else(|| AppError::domain("NoEnds", "summand has no ends"))?,
                    };
                    let ray = find_ray(&exh, &t, &prefix)?;
                    Ok(ray.vertices().to_vec())
                };
            let left_ray = ray_for(&left_gen, left_end.as_ref())?;
            let right_ray = ray_for(&right_gen, right_end.as_ref())?;
            let spec = EndSumSpec::new(left_gen, left_ray, right_gen, right_ray, depth, window)?;
            let report = verify_end_sum(&spec)?;
            print!("{report}");
            println!(
                "all checks: {}",
                if report.all_match() { "OK" } else { "MISMATCH" }
            );
            Ok(())
        }
        Command::Dot {
            source,
            tower,
            depth,
            window,
            out,
        } => {
            let t = match (&tower, &source.family, &source.graph) {
                (Some(path), None, None) => {
                    let text = fs::read_to_string(path).map_err(|e| {
                        AppError::Usage(format!("cannot read {}: {e}", path.display()))
                    })?;
                    EndTower::parse_tower_v1(&text)?
                }
                (None, _, _) => {
                    let depth = depth.ok_or_else(|| {
                        AppError::Usage("--depth is required with --family".into())
                    })?;
                    let scale = Scale { depth, window };
                    build(&source, &scale)?.1
                }
                _ => {
                    return Err(AppError::Usage(
                        "give either --tower or a graph source".into(),
                    ))
                }
            };
            if t.depth() == 0 || t.level_size(t.depth() - 1) == 0 {
                return Err(AppError::domain("EmptyTower", "tower has no components"));
            }
            emit(out.as_ref(), &tower_dot(&t))
        }
    }
}

/// Read the vertex list of a `ray v1` file; the path itself is certified
/// later against the exhaustion built around it.
fn parse_ray_file(text: &str) -> Result<Vec<ends_core::graph::VertexId>, AppError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "ray v1" => {}
        _ => return Err(AppError::Usage("ray file must start with `ray v1`".into())),
    }
    let mut vertices = Vec::new();
    for line in lines {
        for tok in line.split_whitespace() {
            let id: u64 = tok
                .parse()
                .map_err(|_| AppError::Usage(format!("bad vertex id `{tok}` in ray file")))?;
            vertices.push(ends_core::graph::VertexId(id));
        }
    }
    Ok(vertices)
}

/// DOT digraph of a tower's layered fiber tree. Maximal unary chains are
/// collapsed into their topmost node; node names are `L<level>_<index>`
/// with 1-based levels, plus a root.
fn tower_dot(t: &EndTower) -> String {
    let n = t.depth();
    // a component is absorbed when it is the only child of its parent
    let mut child_count: Vec<Vec<usize>> = (0..n.saturating_sub(1))
        .map(|i| vec![0usize; t.level_size(i)])
        .collect();
    for i in 0..n.saturating_sub(1) {
        for c in 0..t.level_size(i + 1) {
            child_count[i][t.bond(i, c)] += 1;
        }
    }
    let absorbed = |level: usize, comp: usize| -> bool {
        level > 0 && child_count[level - 1][t.bond(level - 1, comp)] == 1
    };
    // walk a chain up to its visible top
    let chain_top = |mut level: usize, mut comp: usize| -> (usize, usize) {
        while absorbed(level, comp) {
            comp = t.bond(level - 1, comp);
            level -= 1;
        }
        (level, comp)
    };
    let mut out = String::from("digraph tower {\n");
    out.push_str("  root;\n");
    let mut edges = Vec::new();
    for level in 0..n {
        for comp in 0..t.level_size(level) {
            if absorbed(level, comp) {
                continue;
            }
            out.push_str(&format!("  L{}_{comp};\n", level + 1));
            let parent = if level == 0 {
                "root".to_string()
            } else {
                let (pl, pc) = chain_top(level - 1, t.bond(level - 1, comp));
                format!("L{}_{pc}", pl + 1)
            };
            edges.push(format!("  {parent} -> L{}_{comp};\n", level + 1));
        }
    }
    for e in edges {
        out.push_str(&e);
    }
    out.push_str("}\n");
    out
}

/// DOT graph of an embedded tree: nodes are graph vertex ids.
fn tree_dot(emb: &ends_core::rays::TreeEmbedding) -> String {
    let mut out = String::from("digraph tree {\n");
    out.push_str(&format!("  v{} [shape=box];\n", emb.root()));
    for (u, v) in emb.edges() {
        out.push_str(&format!("  v{u} -> v{v};\n"));
    }
    out.push_str("}\n");
    out
}
