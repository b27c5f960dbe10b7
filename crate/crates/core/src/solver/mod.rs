//! Nested branch-and-bound search.
//!
//! The outer loop expands translation cuboids widest-first. For every child
//! cuboid a rotation search at the cuboid centre raises the incumbent, local
//! PnP refinement is tried when the centre looks promising, and a relaxed
//! rotation search over the whole cuboid yields its upper bound. Search stops
//! once no live cuboid can beat the incumbent.

mod cache;
mod rbb;

pub use cache::{node_count, NodeKey, RotationCache, MAX_CACHE_DEPTH};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bounds::{objective, BoundMode, ProblemInstance, DEFAULT_PSI_R_CELLS};
use crate::domain::{Cuboid, TranslationDomain};
use crate::error::{Error, Result};
use crate::estimators::{extract_correspondences, refine_pnp, Correspondence};
use crate::geometry::{Pose, RotationVec, Vec3};
use crate::scalar::Real;
use rbb::{PointTable, RotationSearch, SearchKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub bound_mode: BoundMode,
    /// Minimum camera-to-point distance; `None` uses the domain's value.
    pub zeta: Option<T>,
    pub threads: usize,
    pub guess_verify: bool,
    /// Rotation-octree levels whose bearing data is cached.
    pub precompute_depth: usize,
    /// Wall-clock budget in seconds.
    pub time_budget: Option<f64>,
    /// Local PnP refinement at promising translation centres.
    pub refine: bool,
    /// Grid cells per face edge for the tight rotation uncertainty angle.
    pub psi_r_cells: usize,
    /// Rotation-octree levels that use the tight rotation uncertainty angle;
    /// deeper cubes use the sphere bound.
    pub tight_rotation_levels: u8,
    /// Rotation cubes at this octree level are not split further.
    pub max_rotation_level: u8,
    /// Translation cuboids narrower than this are not split further; if one
    /// still could beat the incumbent the result is not certified.
    pub min_translation_half_width: T,
    /// Record a trace sample at least every this many outer iterations.
    pub trace_stride: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            bound_mode: BoundMode::Gamma,
            zeta: None,
            threads: 1,
            guess_verify: false,
            precompute_depth: 5,
            time_budget: None,
            refine: true,
            psi_r_cells: DEFAULT_PSI_R_CELLS,
            tight_rotation_levels: 4,
            max_rotation_level: 20,
            min_translation_half_width: T::lit(1e-6),
            trace_stride: 64,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.precompute_depth > MAX_CACHE_DEPTH {
            return bad(&format!("precompute_depth must be at most {MAX_CACHE_DEPTH}"));
        }
        if self.psi_r_cells == 0 {
            return bad("psi_r_cells must be positive");
        }
        if self.zeta.is_some_and(|z| !(z > T::zero())) {
            return bad("zeta must be positive");
        }
        if self.time_budget.is_some_and(|b| !(b >= 0.0) || !b.is_finite()) {
            return bad("time_budget must be a non-negative number of seconds");
        }
        if !(self.min_translation_half_width >= T::zero()) {
            return bad("min_translation_half_width must be non-negative");
        }
        if self.max_rotation_level > 30 {
            return bad("max_rotation_level must be at most 30");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    /// Seconds since the solve started.
    pub wall_time: f64,
    pub lower: usize,
    pub upper: usize,
    /// Live translation measure as a fraction of the initial domain.
    pub remaining_volume: f64,
    pub queue_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub translation_cuboids: u64,
    pub rotation_nodes: u64,
    pub rotation_searches: u64,
    pub refinements: u64,
    pub guess_rounds: u64,
    /// Cuboids left at the width floor with a bound above the incumbent.
    pub unresolved: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution<T> {
    pub nu_star: usize,
    pub pose: Pose<T>,
    pub correspondences: Vec<Correspondence>,
    /// The search finished by bound, not by budget.
    pub optimal: bool,
    pub trace: Vec<TraceSample>,
    pub stats: SolveStats,
}

impl<T: Real> Solution<T> {
    pub(crate) fn unoptimised(nu_star: usize, pose: Pose<T>, correspondences: Vec<Correspondence>) -> Self {
        Self {
            nu_star,
            pose,
            correspondences,
            optimal: false,
            trace: Vec::new(),
            stats: SolveStats::default(),
        }
    }
}

/// Refine when the best centre value is more than half the incumbent.
pub fn pnp_trigger(nu_lower: usize, nu_star: usize) -> bool {
    nu_star < 2 * nu_lower
}

/// Cache of rotated bearings and rotation uncertainty angles for the top
/// `depth` levels of the rotation octree.
pub fn precompute_rotation_cache<T: Real>(
    bearings: &[crate::geometry::Bearing<T>],
    depth: usize,
    mode: BoundMode,
) -> RotationCache<T> {
    let cache = RotationCache::new(bearings, depth, mode, DEFAULT_PSI_R_CELLS, depth as u8);
    cache.precompute();
    cache
}

/// Rotation search at a fixed translation (`ct = None`) or over a
/// translation cuboid. Returns the best value found above `nu_best` (or
/// `nu_best`) and a rotation attaining it; for the relaxed search the value
/// is an upper bound for `ct` and the rotation is the best relaxed centre.
pub fn rbb<T: Real>(
    inst: &ProblemInstance<T>,
    t0: Vec3<T>,
    ct: Option<&Cuboid<T>>,
    nu_best: usize,
    cfg: &SolverConfig<T>,
) -> (usize, RotationVec<T>) {
    let cache = new_cache(inst, cfg);
    let search = RotationSearch {
        cache: &cache,
        inst,
        max_level: cfg.max_rotation_level,
        deadline: deadline(cfg),
    };
    match ct {
        None => {
            let table = PointTable::exact(t0, &inst.points, inst.theta);
            let out = search.run(&table, t0, nu_best, SearchKind::Lower);
            (out.value, out.rotation.unwrap_or(out.best_seen_rotation))
        }
        Some(ct) => {
            let table = PointTable::relaxed(ct, &inst.points, inst.theta, cfg.bound_mode);
            let out = search.run(&table, ct.center, nu_best, SearchKind::Relaxed);
            (out.value, out.best_seen_rotation)
        }
    }
}

fn new_cache<T: Real>(inst: &ProblemInstance<T>, cfg: &SolverConfig<T>) -> RotationCache<T> {
    RotationCache::new(
        &inst.bearings,
        cfg.precompute_depth,
        cfg.bound_mode,
        cfg.psi_r_cells,
        cfg.tight_rotation_levels,
    )
}

fn deadline<T>(cfg: &SolverConfig<T>) -> Option<Instant> {
    cfg.time_budget
        .map(|b| Instant::now() + Duration::from_secs_f64(b.min(1e9)))
}

/// Globally optimal pose search. With `guess_verify` set this delegates to
/// [`guess_and_verify`].
pub fn gopac_solve<T: Real>(inst: &ProblemInstance<T>, cfg: &SolverConfig<T>) -> Result<Solution<T>> {
    if cfg.guess_verify {
        return guess_and_verify(inst, cfg);
    }
    cfg.validate()?;
    let start = Instant::now();
    let cache = new_cache(inst, cfg);
    let run = solve_round(inst, cfg, &cache, 0, start, deadline(cfg))?;
    Ok(run.solution)
}

/// Seeds the incumbent with `n = N - 1` and lowers it by `ceil(N / 10)`
/// until a round both certifies and attains at least the seed.
pub fn guess_and_verify<T: Real>(inst: &ProblemInstance<T>, cfg: &SolverConfig<T>) -> Result<Solution<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let dl = deadline(cfg);
    let n_total = inst.n_bearings();
    let step = guess_step(n_total);
    let cache = new_cache(inst, cfg);
    let mut seed = n_total.saturating_sub(1);
    let mut rounds = 0;
    let mut best_failed: Option<Solution<T>> = None;
    loop {
        rounds += 1;
        let run = solve_round(inst, cfg, &cache, seed, start, dl)?;
        let mut sol = run.solution;
        let attained = run.attained && sol.nu_star >= seed;
        if attained && sol.optimal {
            sol.stats.guess_rounds = rounds;
            return Ok(sol);
        }
        let timed_out = dl.is_some_and(|d| Instant::now() >= d);
        if seed == 0 && !timed_out {
            sol.stats.guess_rounds = rounds;
            return Ok(sol);
        }
        if run.attained && best_failed.as_ref().is_none_or(|b| sol.nu_star > b.nu_star) {
            best_failed = Some(sol.clone());
        }
        if seed == 0 || timed_out {
            let mut out = best_failed.unwrap_or(sol);
            out.optimal = false;
            out.stats.guess_rounds = rounds;
            return Ok(out);
        }
        seed = seed.saturating_sub(step);
    }
}

/// Decrement used by [`guess_and_verify`].
pub fn guess_step(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

struct RoundResult<T> {
    solution: Solution<T>,
    /// Some pose was found (as opposed to a fallback pose).
    attained: bool,
}

fn solve_round<T: Real>(
    inst: &ProblemInstance<T>,
    cfg: &SolverConfig<T>,
    cache: &RotationCache<T>,
    seed: usize,
    start: Instant,
    deadline: Option<Instant>,
) -> Result<RoundResult<T>> {
    let zeta = cfg.zeta.unwrap_or(inst.domain.zeta);
    let domain = TranslationDomain::new(inst.domain.cuboids.clone(), zeta)?;
    let fallback = Pose::new(RotationVec::identity(), domain.cuboids[0].center);
    let n = inst.n_bearings();
    if n == 0 || inst.n_points() == 0 {
        let nu = objective(&fallback, inst);
        let sample = TraceSample {
            wall_time: start.elapsed().as_secs_f64(),
            lower: nu,
            upper: nu,
            remaining_volume: 0.0,
            queue_size: 0,
        };
        return Ok(RoundResult {
            solution: Solution {
                nu_star: nu,
                pose: fallback,
                correspondences: extract_correspondences(&fallback, inst),
                optimal: true,
                trace: vec![sample],
                stats: SolveStats::default(),
            },
            attained: true,
        });
    }

    let pieces = split_domain(&domain.cuboids, cfg.threads);
    let initial_measure: f64 = pieces.iter().map(|c| c.measure().to_f64_lossy()).sum();
    let shared = Shared {
        inst,
        cfg,
        domain: &domain,
        search: RotationSearch {
            cache,
            inst,
            max_level: cfg.max_rotation_level,
            deadline,
        },
        deadline,
        start,
        nu_star: AtomicUsize::new(seed),
        best: Mutex::new(None),
        slots: (0..cfg.threads).map(|_| WorkerSlot::default()).collect(),
        trace: Mutex::new(TraceState {
            samples: Vec::new(),
            last_upper: n.max(seed),
            initial_measure: if initial_measure > 0.0 { initial_measure } else { 1.0 },
        }),
        timed_out: AtomicBool::new(false),
        stats: StatCounters::default(),
    };

    let mut assignments: Vec<Vec<Cuboid<T>>> = vec![Vec::new(); cfg.threads];
    for (i, p) in pieces.into_iter().enumerate() {
        assignments[i % cfg.threads].push(p);
    }
    for (w, a) in assignments.iter().enumerate() {
        let live: f64 = a.iter().map(|c| c.measure().to_f64_lossy()).sum();
        shared.slots[w].publish(if a.is_empty() { 0 } else { n }, live, a.len());
    }
    shared.record(true);

    let worker_results: Vec<WorkerResult> = if cfg.threads == 1 {
        vec![Worker::new(&shared, 0).run(assignments.pop().unwrap_or_default())]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = assignments
                .into_iter()
                .enumerate()
                .map(|(w, a)| {
                    let shared = &shared;
                    s.spawn(move || Worker::new(shared, w).run(a))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver worker panicked"))
                .collect()
        })
    };

    let nu_final = shared.nu_star.load(AtomicOrdering::SeqCst);
    let unresolved_max = worker_results.iter().map(|r| r.unresolved_max).max().unwrap_or(0);
    let unresolved: u64 = worker_results.iter().map(|r| r.unresolved).sum();
    let timed_out = shared.timed_out.load(AtomicOrdering::SeqCst);
    let best = shared.best.lock().expect("poisoned").take();
    let optimal = !timed_out && unresolved_max <= nu_final;

    let attained = best.is_some();
    let (nu_star, pose) = match best {
        Some((v, p)) => (v, p),
        None => (objective(&fallback, inst), fallback),
    };

    let mut trace = shared.trace.into_inner().expect("poisoned");
    let upper_end = if optimal {
        nu_final.max(nu_star)
    } else {
        trace.last_upper
    };
    let upper_end = upper_end.min(trace.last_upper).max(nu_star);
    trace.samples.push(TraceSample {
        wall_time: start.elapsed().as_secs_f64(),
        lower: nu_star,
        upper: upper_end,
        remaining_volume: if optimal {
            0.0
        } else {
            trace.samples.last().map_or(1.0, |s| s.remaining_volume)
        },
        queue_size: if optimal {
            0
        } else {
            trace.samples.last().map_or(0, |s| s.queue_size)
        },
    });

    let mut stats = shared.stats.snapshot();
    stats.unresolved = unresolved;
    Ok(RoundResult {
        solution: Solution {
            nu_star,
            pose,
            correspondences: extract_correspondences(&pose, inst),
            optimal,
            trace: trace.samples,
            stats,
        },
        attained,
    })
}

/// Bisect the widest piece until there are at least `parts` pieces.
fn split_domain<T: Real>(cuboids: &[Cuboid<T>], parts: usize) -> Vec<Cuboid<T>> {
    let mut pieces = cuboids.to_vec();
    while pieces.len() < parts {
        let (idx, widest) = pieces.iter().enumerate().fold((0, -T::one()), |acc, (i, c)| {
            if c.max_half_width() > acc.1 {
                (i, c.max_half_width())
            } else {
                acc
            }
        });
        if !(widest > T::zero()) {
            break;
        }
        let Ok((a, b)) = pieces[idx].bisect_widest() else {
            break;
        };
        pieces[idx] = a;
        pieces.insert(idx + 1, b);
    }
    pieces
}

#[derive(Default)]
struct WorkerSlot {
    bound: AtomicUsize,
    measure_bits: AtomicU64,
    queue: AtomicUsize,
}

impl WorkerSlot {
    fn publish(&self, bound: usize, measure: f64, queue: usize) {
        self.bound.store(bound, AtomicOrdering::SeqCst);
        self.measure_bits.store(measure.to_bits(), AtomicOrdering::SeqCst);
        self.queue.store(queue, AtomicOrdering::SeqCst);
    }
}

#[derive(Default)]
struct StatCounters {
    translation_cuboids: AtomicU64,
    rotation_nodes: AtomicU64,
    rotation_searches: AtomicU64,
    refinements: AtomicU64,
}

impl StatCounters {
    fn snapshot(&self) -> SolveStats {
        let l = |a: &AtomicU64| a.load(AtomicOrdering::SeqCst);
        SolveStats {
            translation_cuboids: l(&self.translation_cuboids),
            rotation_nodes: l(&self.rotation_nodes),
            rotation_searches: l(&self.rotation_searches),
            refinements: l(&self.refinements),
            guess_rounds: 1,
            unresolved: 0,
        }
    }
}

struct TraceState {
    samples: Vec<TraceSample>,
    last_upper: usize,
    initial_measure: f64,
}

struct Shared<'a, T> {
    inst: &'a ProblemInstance<T>,
    cfg: &'a SolverConfig<T>,
    domain: &'a TranslationDomain<T>,
    search: RotationSearch<'a, T>,
    deadline: Option<Instant>,
    start: Instant,
    /// Incumbent count, including any guessed seed.
    nu_star: AtomicUsize,
    /// Best attained count and pose.
    best: Mutex<Option<(usize, Pose<T>)>>,
    slots: Vec<WorkerSlot>,
    trace: Mutex<TraceState>,
    timed_out: AtomicBool,
    stats: StatCounters,
}

impl<T: Real> Shared<'_, T> {
    fn incumbent(&self) -> usize {
        self.nu_star.load(AtomicOrdering::SeqCst)
    }

    /// Accept a pose if it beats the best attained count.
    fn offer(&self, nu: usize, pose: Pose<T>) -> bool {
        if nu == 0 {
            return false;
        }
        let mut best = self.best.lock().expect("poisoned");
        if best.as_ref().is_none_or(|(v, _)| nu > *v) {
            *best = Some((nu, pose));
            self.nu_star.fetch_max(nu, AtomicOrdering::SeqCst);
            drop(best);
            self.record(false);
            true
        } else {
            false
        }
    }

    fn best_value(&self) -> usize {
        self.best.lock().expect("poisoned").as_ref().map_or(0, |b| b.0)
    }

    fn record(&self, force: bool) {
        let lower = self.best_value();
        let nu = self.incumbent();
        let live_bound = self
            .slots
            .iter()
            .map(|s| s.bound.load(AtomicOrdering::SeqCst))
            .max()
            .unwrap_or(0);
        let measure: f64 = self
            .slots
            .iter()
            .map(|s| f64::from_bits(s.measure_bits.load(AtomicOrdering::SeqCst)))
            .sum();
        let queue: usize = self.slots.iter().map(|s| s.queue.load(AtomicOrdering::SeqCst)).sum();
        let mut tr = self.trace.lock().expect("poisoned");
        let upper = tr.last_upper.min(nu.max(live_bound)).max(lower);
        let changed = tr.samples.last().is_none_or(|s| s.lower != lower || s.upper != upper);
        if !(force || changed) {
            return;
        }
        tr.last_upper = upper;
        let frac = (measure / tr.initial_measure).clamp(0.0, 1.0);
        tr.samples.push(TraceSample {
            wall_time: self.start.elapsed().as_secs_f64(),
            lower,
            upper,
            remaining_volume: frac,
            queue_size: queue,
        });
    }

    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

struct OuterItem<T> {
    cuboid: Cuboid<T>,
    width: T,
    bound: usize,
    seq: u64,
}

impl<T: Real> PartialEq for OuterItem<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for OuterItem<T> {}
impl<T: Real> PartialOrd for OuterItem<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for OuterItem<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.width
            .partial_cmp(&o.width)
            .unwrap_or(Ordering::Equal)
            .then(self.bound.cmp(&o.bound))
            .then(o.seq.cmp(&self.seq))
    }
}

struct WorkerResult {
    unresolved: u64,
    unresolved_max: usize,
}

struct Worker<'s, 'a, T> {
    shared: &'s Shared<'a, T>,
    id: usize,
    heap: BinaryHeap<OuterItem<T>>,
    /// Live count and measure per bound value.
    counts: Vec<usize>,
    measures: Vec<f64>,
    seq: u64,
    pops: u64,
}

impl<'s, 'a, T: Real> Worker<'s, 'a, T> {
    fn new(shared: &'s Shared<'a, T>, id: usize) -> Self {
        let n = shared.inst.n_bearings();
        Self {
            shared,
            id,
            heap: BinaryHeap::new(),
            counts: vec![0; n + 2],
            measures: vec![0.0; n + 2],
            seq: 0,
            pops: 0,
        }
    }

    fn push(&mut self, cuboid: Cuboid<T>, bound: usize) {
        self.seq += 1;
        self.counts[bound] += 1;
        self.measures[bound] += cuboid.measure().to_f64_lossy();
        self.heap.push(OuterItem {
            cuboid,
            width: cuboid.max_half_width(),
            bound,
            seq: self.seq,
        });
    }

    fn forget(&mut self, item: &OuterItem<T>) {
        self.counts[item.bound] -= 1;
        self.measures[item.bound] -= item.cuboid.measure().to_f64_lossy();
        if self.counts[item.bound] == 0 {
            self.measures[item.bound] = 0.0;
        }
    }

    /// Largest live bound above the incumbent, with the live measure.
    fn live(&self, nu: usize) -> (usize, f64, usize) {
        let mut top = 0;
        let mut measure = 0.0;
        let mut count = 0;
        for b in (nu + 1)..self.counts.len() {
            if self.counts[b] > 0 {
                top = b;
                measure += self.measures[b];
                count += self.counts[b];
            }
        }
        (top, measure.max(0.0), count)
    }

    fn publish(&self, nu: usize, extra: Option<(usize, f64)>) {
        let (mut top, mut measure, mut count) = self.live(nu);
        if let Some((b, m)) = extra {
            if b > nu {
                top = top.max(b);
                measure += m;
                count += 1;
            }
        }
        self.shared.slots[self.id].publish(top, measure, count);
    }

    fn run(mut self, pieces: Vec<Cuboid<T>>) -> WorkerResult {
        let sh = self.shared;
        let inst = sh.inst;
        let n = inst.n_bearings();
        let zeta = sh.domain.zeta;
        let stride = sh.cfg.trace_stride.max(1) as u64;
        let mut unresolved = 0u64;
        let mut unresolved_max = 0usize;

        for p in pieces {
            if !p.inside_zeta_ball(&inst.points, zeta) {
                self.push(p, n);
            }
        }

        loop {
            let nu = sh.incumbent();
            let (top, _, _) = self.live(nu);
            self.publish(nu, None);
            if top == 0 {
                break;
            }
            if sh.expired() {
                sh.timed_out.store(true, AtomicOrdering::SeqCst);
                break;
            }
            let Some(item) = self.heap.pop() else { break };
            self.forget(&item);
            if item.bound <= nu {
                continue;
            }
            self.pops += 1;
            self.publish(nu, Some((item.bound, item.cuboid.measure().to_f64_lossy())));
            if self.pops.is_multiple_of(stride) {
                sh.record(true);
            } else {
                sh.record(false);
            }
            if item.width < sh.cfg.min_translation_half_width {
                unresolved += 1;
                unresolved_max = unresolved_max.max(item.bound);
                continue;
            }
            let Ok(children) = item.cuboid.subdivide() else {
                unresolved += 1;
                unresolved_max = unresolved_max.max(item.bound);
                continue;
            };
            for child in children {
                if let Some(bound) = self.evaluate(&child, item.bound) {
                    self.push(child, bound);
                }
            }
        }

        // anything left in the queue at a timeout keeps its bound in the trace
        let nu = sh.incumbent();
        if sh.timed_out.load(AtomicOrdering::SeqCst) {
            self.publish(nu, None);
        } else {
            sh.slots[self.id].publish(0, 0.0, 0);
        }
        sh.record(false);
        WorkerResult {
            unresolved,
            unresolved_max,
        }
    }

    /// Raise the incumbent from the centre of `child` and return its bound
    /// if the cuboid must be kept.
    fn evaluate(&mut self, child: &Cuboid<T>, parent_bound: usize) -> Option<usize> {
        let sh = self.shared;
        let inst = sh.inst;
        let zeta = sh.domain.zeta;
        sh.stats.translation_cuboids.fetch_add(1, AtomicOrdering::Relaxed);
        if child.inside_zeta_ball(&inst.points, zeta) {
            return None;
        }
        let t0 = child.center;
        if sh.domain.admits(t0, &inst.points) {
            let table = PointTable::exact(t0, &inst.points, inst.theta);
            let out = sh.search.run(&table, t0, sh.incumbent(), SearchKind::Lower);
            sh.stats.rotation_searches.fetch_add(1, AtomicOrdering::Relaxed);
            sh.stats.rotation_nodes.fetch_add(out.nodes, AtomicOrdering::Relaxed);
            if let Some(r) = out.rotation {
                sh.offer(out.value, Pose::new(r.canonical(), t0));
            } else if out.best_seen > sh.best_value() {
                // below a guessed seed: kept as a fallback answer only
                let pose = Pose::new(out.best_seen_rotation.canonical(), t0);
                sh.offer(objective(&pose, inst), pose);
            }
            if sh.cfg.refine && out.best_seen > 0 && pnp_trigger(out.best_seen, sh.incumbent()) {
                self.refine_from(Pose::new(out.best_seen_rotation, t0));
            }
        }
        let nu = sh.incumbent();
        if parent_bound <= nu {
            return None;
        }
        let table = PointTable::relaxed(child, &inst.points, inst.theta, sh.cfg.bound_mode);
        let out = sh.search.run(&table, t0, nu, SearchKind::Relaxed);
        sh.stats.rotation_searches.fetch_add(1, AtomicOrdering::Relaxed);
        sh.stats.rotation_nodes.fetch_add(out.nodes, AtomicOrdering::Relaxed);
        let bound = out.value.min(parent_bound);
        (bound > sh.incumbent()).then_some(bound)
    }

    fn refine_from(&self, start: Pose<T>) {
        let sh = self.shared;
        let inst = sh.inst;
        let mut pose = start;
        let mut current = objective(&pose, inst);
        for _ in 0..3 {
            let corrs = extract_correspondences(&pose, inst);
            if corrs.len() < 3 {
                return;
            }
            sh.stats.refinements.fetch_add(1, AtomicOrdering::Relaxed);
            let Ok(out) = refine_pnp(&corrs, inst, &pose) else {
                return;
            };
            if out.diverged || !sh.domain.admits(out.pose.t, &inst.points) {
                return;
            }
            let nu = objective(&out.pose, inst);
            sh.offer(nu, out.pose);
            if nu <= current {
                return;
            }
            current = nu;
            pose = out.pose;
        }
    }
}
