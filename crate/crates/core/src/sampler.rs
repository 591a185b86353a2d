//! Exact samplers: unconditioned Galton-Watson trees and forests, size-biased
//! trees with a distinguished spine, and trees conditioned on the number of
//! vertices of one type.
//!
//! All randomness comes from [`RngStream`]s: ChaCha8 keyed by a seed, with
//! one ChaCha stream per replicate.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::PlanarForest;
use crate::snake::SpatialLaw;
use crate::spectra::{OffspringModel, SpectralData};

pub type StreamRng = ChaCha8Rng;

pub const DEFAULT_VERTEX_CAP: usize = 10_000_000;

/// A reproducible random stream: the same `(seed, stream_id)` always yields
/// the same sequence; distinct ids give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub vertex_cap: usize,
    /// Non-root vertices of this type are kept as leaves.
    pub stop_type: Option<usize>,
    /// Vertices at this depth are kept as leaves.
    pub max_depth: Option<usize>,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            vertex_cap: DEFAULT_VERTEX_CAP,
            stop_type: None,
            max_depth: None,
        }
    }
}

impl SampleOptions {
    pub fn with_cap(vertex_cap: usize) -> Self {
        SampleOptions {
            vertex_cap,
            ..Default::default()
        }
    }
}

/// Precomputed draw tables for an offspring model.
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    k: usize,
    words: Vec<Vec<Vec<usize>>>,
    tables: Vec<WeightedIndex<f64>>,
    spatial: Vec<Vec<Option<SpatialLaw>>>,
}

impl OffspringSampler {
    pub fn new(model: &OffspringModel) -> Self {
        let k = model.num_types();
        let mut words = Vec::with_capacity(k);
        let mut tables = Vec::with_capacity(k);
        let mut spatial = Vec::with_capacity(k);
        for i in 0..k {
            let law = model.law(i);
            words.push(law.iter().map(|wl| wl.word.clone()).collect());
            tables.push(
                WeightedIndex::new(law.iter().map(|wl| wl.prob.value)).expect("validated law has positive mass"),
            );
            spatial.push(law.iter().map(|wl| model.spatial_law(i, &wl.word).cloned()).collect());
        }
        OffspringSampler {
            k,
            words,
            tables,
            spatial,
        }
    }

    pub fn num_types(&self) -> usize {
        self.k
    }

    /// Index of a word drawn from the ordered law of type `ty`.
    pub fn draw<R: Rng + ?Sized>(&self, ty: usize, rng: &mut R) -> usize {
        self.tables[ty].sample(rng)
    }

    pub fn word(&self, ty: usize, idx: usize) -> &[usize] {
        &self.words[ty][idx]
    }

    pub fn words(&self, ty: usize) -> &[Vec<usize>] {
        &self.words[ty]
    }

    pub fn spatial(&self, ty: usize, idx: usize) -> Option<&SpatialLaw> {
        self.spatial[ty][idx].as_ref()
    }
}

/// Root types of a streamed forest: a finite list, or a list repeated forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Roots {
    Finite(Vec<usize>),
    Cycle(Vec<usize>),
}

impl Roots {
    fn get(&self, k: usize) -> Option<usize> {
        match self {
            Roots::Finite(x) => x.get(k).copied(),
            Roots::Cycle(x) if x.is_empty() => None,
            Roots::Cycle(x) => Some(x[k % x.len()]),
        }
    }
}

#[derive(Debug, Clone)]
struct Frame {
    index: usize,
    ty: usize,
    word: Option<usize>,
    next: usize,
    position: f64,
    disp_start: usize,
}

/// One vertex emitted by a [`ForestStream`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamVertex {
    pub index: usize,
    pub ty: usize,
    pub depth: usize,
    /// 1-based tree index.
    pub component: usize,
    pub parent: Option<usize>,
    /// 0-based rank among siblings.
    pub rank: Option<usize>,
    pub children: usize,
    /// Snake position (0 unless spatial laws are present).
    pub position: f64,
}

/// Generates a Galton-Watson forest vertex by vertex in depth-first order,
/// keeping only the current ancestral path in memory.
pub struct ForestStream<'a> {
    sampler: &'a OffspringSampler,
    rng: StreamRng,
    roots: Roots,
    opts: SampleOptions,
    spatial: bool,
    path: Vec<Frame>,
    path_types: Vec<u32>,
    disp: Vec<f64>,
    buf: Vec<f64>,
    emitted: usize,
    component: usize,
}

impl<'a> ForestStream<'a> {
    pub fn new(sampler: &'a OffspringSampler, roots: Roots, rng: StreamRng, opts: SampleOptions) -> Self {
        ForestStream {
            sampler,
            rng,
            roots,
            opts,
            spatial: false,
            path: Vec::new(),
            path_types: vec![0; sampler.num_types()],
            disp: Vec::new(),
            buf: Vec::new(),
            emitted: 0,
            component: 0,
        }
    }

    /// Also draw spatial displacements and track snake positions.
    pub fn with_spatial(mut self, on: bool) -> Self {
        self.spatial = on;
        self
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Number of vertices of each type on the path from the root to the
    /// last emitted vertex, that vertex included.
    pub fn path_type_counts(&self) -> &[u32] {
        &self.path_types
    }

    /// For each strict ancestor of the last emitted vertex (root first):
    /// its type, drawn word index, and the rank of its child on the path.
    pub fn ancestry(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.path.len().saturating_sub(1);
        self.path[..n]
            .iter()
            .map(|f| (f.ty, f.word.expect("inner path vertex has a word"), f.next - 1))
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    fn push(&mut self, ty: usize, parent_rank: Option<(usize, usize)>, position: f64) -> StreamVertex {
        let depth = self.path.len();
        let stopped = parent_rank.is_some() && self.opts.stop_type == Some(ty);
        let truncated = self.opts.max_depth.is_some_and(|d| depth >= d);
        let word = (!stopped && !truncated).then(|| self.sampler.draw(ty, &mut self.rng));
        let disp_start = self.disp.len();
        let children = word.map_or(0, |w| self.sampler.word(ty, w).len());
        if self.spatial && children > 0 {
            let w = word.unwrap();
            match self.sampler.spatial(ty, w) {
                Some(law) => {
                    law.sample_into(&mut self.rng, &mut self.buf);
                    self.disp.extend_from_slice(&self.buf);
                }
                None => self.disp.extend(std::iter::repeat_n(0.0, children)),
            }
        }
        let index = self.emitted;
        self.emitted += 1;
        self.path_types[ty] += 1;
        self.path.push(Frame {
            index,
            ty,
            word,
            next: 0,
            position,
            disp_start,
        });
        StreamVertex {
            index,
            ty,
            depth,
            component: self.component,
            parent: parent_rank.map(|(p, _)| p),
            rank: parent_rank.map(|(_, r)| r),
            children,
            position,
        }
    }

    fn pop(&mut self) {
        let f = self.path.pop().expect("nonempty path");
        self.path_types[f.ty] -= 1;
        self.disp.truncate(f.disp_start);
    }

    /// Next vertex in depth-first order, or `None` once a finite root list
    /// is exhausted.
    pub fn next_vertex(&mut self) -> Option<StreamVertex> {
        loop {
            let Some(top) = self.path.last() else {
                let ty = self.roots.get(self.component)?;
                self.component += 1;
                return Some(self.push(ty, None, 0.0));
            };
            let n_children = top.word.map_or(0, |w| self.sampler.word(top.ty, w).len());
            if top.next < n_children {
                let rank = top.next;
                let ty = self.sampler.word(top.ty, top.word.unwrap())[rank];
                let dy = if self.spatial { self.disp[top.disp_start + rank] } else { 0.0 };
                let (parent, position) = (top.index, top.position + dy);
                self.path.last_mut().unwrap().next += 1;
                return Some(self.push(ty, Some((parent, rank)), position));
            }
            self.pop();
        }
    }
}

/// Outcome of growing a forest with an optional count limit.
enum Grown {
    Done(PlanarForest),
    OverLimit,
}

fn grow(
    sampler: &OffspringSampler,
    roots: &[usize],
    rng: StreamRng,
    opts: SampleOptions,
    limit: Option<(usize, usize)>,
) -> Result<Grown> {
    let mut stream = ForestStream::new(sampler, Roots::Finite(roots.to_vec()), rng, opts);
    let mut parent: Vec<u32> = Vec::new();
    let mut types: Vec<usize> = Vec::new();
    let mut count = 0usize;
    while let Some(v) = stream.next_vertex() {
        if parent.len() >= opts.vertex_cap {
            return Err(Error::CapExceeded { cap: opts.vertex_cap });
        }
        if let Some((j, n)) = limit {
            if v.ty == j {
                count += 1;
                if count > n {
                    return Ok(Grown::OverLimit);
                }
            }
        }
        parent.push(v.parent.map_or(u32::MAX, |p| p as u32));
        types.push(v.ty);
    }
    Ok(Grown::Done(PlanarForest::from_preorder_unchecked(parent, &types, sampler.num_types())))
}

/// A forest with independent components of the given root types.
pub fn sample_forest(
    sampler: &OffspringSampler,
    roots: &[usize],
    rng: &mut StreamRng,
    opts: SampleOptions,
) -> Result<PlanarForest> {
    let seeded = StreamRng::from_rng(rng);
    match grow(sampler, roots, seeded, opts, None)? {
        Grown::Done(f) => Ok(f),
        Grown::OverLimit => unreachable!("no limit"),
    }
}

pub fn sample_tree(
    sampler: &OffspringSampler,
    root_type: usize,
    rng: &mut StreamRng,
    opts: SampleOptions,
) -> Result<PlanarForest> {
    sample_forest(sampler, &[root_type], rng, opts)
}

/// Draw tables for the size-biased laws and the spine's child selection.
#[derive(Debug, Clone)]
pub struct SpineSampler {
    base: OffspringSampler,
    hat_words: Vec<Vec<usize>>,
    hat_tables: Vec<WeightedIndex<f64>>,
    /// Per type and word index, selection weights `b_{w_l}`.
    selectors: Vec<Vec<Option<WeightedIndex<f64>>>>,
    stationary: WeightedIndex<f64>,
}

/// Types, word indices and selected child ranks along a spine `V_0..V_h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinePath {
    pub types: Vec<usize>,
    pub words: Vec<usize>,
    pub ranks: Vec<usize>,
}

/// A finite tree with a distinguished ancestral line ending at a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct PointedTree {
    pub tree: PlanarForest,
    pub spine: Vec<usize>,
}

impl SpineSampler {
    pub fn new(model: &OffspringModel, spec: &SpectralData) -> Result<Self> {
        spec.require_critical()?;
        let base = OffspringSampler::new(model);
        let b = &spec.b;
        let mut hat_words = Vec::new();
        let mut hat_tables = Vec::new();
        let mut selectors = Vec::new();
        for i in 0..model.num_types() {
            let law = model.law(i);
            let weights: Vec<f64> = law
                .iter()
                .map(|wl| wl.word.iter().map(|&t| b[t]).sum::<f64>() / b[i] * wl.prob.value)
                .collect();
            hat_words.push((0..law.len()).collect());
            hat_tables.push(WeightedIndex::new(&weights).map_err(|_| {
                Error::invariant("size-biased law", format!("type {} has no children in mean", i + 1))
            })?);
            selectors.push(
                law.iter()
                    .map(|wl| {
                        (!wl.word.is_empty())
                            .then(|| WeightedIndex::new(wl.word.iter().map(|&t| b[t])).expect("positive b"))
                    })
                    .collect(),
            );
        }
        let stationary = WeightedIndex::new(spec.a.iter().zip(b).map(|(x, y)| x * y)).expect("positive a, b");
        Ok(SpineSampler {
            base,
            hat_words,
            hat_tables,
            selectors,
            stationary,
        })
    }

    pub fn base(&self) -> &OffspringSampler {
        &self.base
    }

    /// A type drawn from the spine's stationary law `(a_j b_j)`.
    pub fn stationary_type<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.stationary.sample(rng)
    }

    /// Size-biased word index and the selected child rank for a spine vertex.
    pub fn draw_spine_step<R: Rng + ?Sized>(&self, ty: usize, rng: &mut R) -> (usize, usize) {
        let w = self.hat_words[ty][self.hat_tables[ty].sample(rng)];
        let l = self.selectors[ty][w].as_ref().expect("size-biased word is nonempty").sample(rng);
        (w, l)
    }

    /// Only the spine: `h` size-biased steps from `root_type`.
    pub fn sample_spine_path<R: Rng + ?Sized>(&self, root_type: usize, h: usize, rng: &mut R) -> SpinePath {
        let mut path = SpinePath {
            types: Vec::with_capacity(h + 1),
            words: Vec::with_capacity(h),
            ranks: Vec::with_capacity(h),
        };
        let mut ty = root_type;
        path.types.push(ty);
        for _ in 0..h {
            let (w, l) = self.draw_spine_step(ty, rng);
            ty = self.base.word(ty, w)[l];
            path.words.push(w);
            path.ranks.push(l);
            path.types.push(ty);
        }
        path
    }

    /// The size-biased tree pruned at `V_h`: spine vertices reproduce by the
    /// size-biased law, everything else by the ordinary law.
    pub fn sample_spine(
        &self,
        root_type: usize,
        h: usize,
        rng: &mut StreamRng,
        vertex_cap: usize,
    ) -> Result<PointedTree> {
        enum Task {
            Spine(usize, u32, usize),
            Plain(usize, u32),
        }
        let mut parent: Vec<u32> = Vec::new();
        let mut types: Vec<usize> = Vec::new();
        let mut depth_of: Vec<usize> = Vec::new();
        let mut spine = Vec::with_capacity(h + 1);
        let mut stack = vec![Task::Spine(root_type, u32::MAX, 0)];
        while let Some(task) = stack.pop() {
            if parent.len() >= vertex_cap {
                return Err(Error::CapExceeded { cap: vertex_cap });
            }
            let v = parent.len() as u32;
            match task {
                Task::Spine(ty, p, g) => {
                    parent.push(p);
                    types.push(ty);
                    depth_of.push(g);
                    spine.push(v as usize);
                    if g < h {
                        let (w, l) = self.draw_spine_step(ty, rng);
                        let word = self.base.word(ty, w);
                        for (r, &c) in word.iter().enumerate().rev() {
                            stack.push(if r == l { Task::Spine(c, v, g + 1) } else { Task::Plain(c, v) });
                        }
                    }
                }
                Task::Plain(ty, p) => {
                    parent.push(p);
                    types.push(ty);
                    let w = self.base.draw(ty, rng);
                    for &c in self.base.word(ty, w).iter().rev() {
                        stack.push(Task::Plain(c, v));
                    }
                }
            }
        }
        let tree = PlanarForest::from_preorder_unchecked(parent, &types, self.base.num_types());
        Ok(PointedTree { tree, spine })
    }
}

/// Rejection sampler for `P^(i)(. | #T^(j) = n)` that abandons a tree as soon
/// as it has more than `n` vertices of type `j`.
#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    base: OffspringSampler,
    root_type: usize,
    count_type: usize,
    n: usize,
    /// `P^(i)(#T^(j) = n)`.
    pub probability: f64,
}

/// Result of a conditioned draw, with the number of trees tried.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioned {
    pub tree: PlanarForest,
    pub attempts: u64,
}

impl ConditionedSampler {
    pub fn new(model: &OffspringModel, root_type: usize, count_type: usize, n: usize) -> Result<Self> {
        let k = model.num_types();
        if root_type >= k || count_type >= k {
            return Err(Error::InvalidArgument("type outside [K]".into()));
        }
        let dist = crate::reduce::exact_size_distribution::<f64>(model, root_type, count_type, n)?;
        let probability = dist.q[n];
        if probability <= 0.0 {
            return Err(Error::ZeroProbabilityEvent(format!(
                "P(#T^({}) = {n}) = 0 from a type-{} root; support is {} + {}Z",
                count_type + 1,
                root_type + 1,
                dist.support_offset.map_or("empty".to_string(), |x| x.to_string()),
                dist.support_period
            )));
        }
        Ok(ConditionedSampler {
            base: OffspringSampler::new(model),
            root_type,
            count_type,
            n,
            probability,
        })
    }

    pub fn sample(&self, rng: &mut StreamRng, max_attempts: u64, vertex_cap: usize) -> Result<Conditioned> {
        let opts = SampleOptions::with_cap(vertex_cap);
        for attempt in 1..=max_attempts {
            let seeded = StreamRng::from_rng(&mut *rng);
            let grown = grow(&self.base, &[self.root_type], seeded, opts, Some((self.count_type, self.n)))?;
            if let Grown::Done(tree) = grown {
                let count = tree.types().filter(|&t| t == self.count_type).count();
                if count == self.n {
                    return Ok(Conditioned { tree, attempts: attempt });
                }
            }
        }
        Err(Error::AttemptsExhausted(max_attempts))
    }
}

/// Convenience wrapper that checks the event and draws one tree.
pub fn sample_conditioned(
    model: &OffspringModel,
    root_type: usize,
    count_type: usize,
    n: usize,
    rng: &mut StreamRng,
    max_attempts: u64,
) -> Result<PlanarForest> {
    let s = ConditionedSampler::new(model, root_type, count_type, n)?;
    Ok(s.sample(rng, max_attempts, DEFAULT_VERTEX_CAP)?.tree)
}
