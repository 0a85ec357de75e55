//! Variant-set selection: per-instance penalties, sampled objectives, the
//! class-based base set, greedy expansion, and the worst-case penalty bound.

use crate::catalog::{self, CostForm};
use crate::costmodel::CostModel;
use crate::frontend::{Instance, Shape};
use crate::poly::{rat, Rat};
use crate::variants::{
    build_variant, enumerate_trees, fanning_out_tree, sample_tree, EnumError, Variant,
};
use rand::Rng;
use std::collections::BTreeSet;
use std::io::Write;

/// How many expansion candidates to keep when full enumeration is too large.
pub const DEFAULT_POOL_SAMPLE: usize = 1000;

/// Full enumeration is used as the candidate pool while the tree count stays
/// at or below this (the 10th Catalan number, i.e. chains of up to 11).
pub const FULL_POOL_TREE_LIMIT: u128 = 16_796;

/// All variants of a shape, in deterministic enumeration order, with the
/// fanning-out variants located inside the pool.
pub struct VariantPool {
    pub shape: Shape,
    pub variants: Vec<Variant>,
    /// Pool index of the fanning-out variant for each pivot h in 0..=n.
    fanning_out_by_h: Vec<usize>,
}

impl VariantPool {
    /// Build every variant of the shape (requires n within the limit).
    pub fn enumerate(shape: &Shape, limit: usize) -> Result<VariantPool, EnumError> {
        let trees = enumerate_trees(shape.n(), limit)?;
        let variants: Vec<Variant> = trees.iter().map(|t| build_variant(t, shape)).collect();
        Ok(Self::assemble(shape.clone(), variants))
    }

    fn assemble(shape: Shape, variants: Vec<Variant>) -> VariantPool {
        let n = shape.n();
        let keys: Vec<Vec<(usize, usize, usize)>> =
            variants.iter().map(|v| v.tree_key()).collect();
        let fanning_out_by_h = (0..=n)
            .map(|h| {
                let key = fanning_out_tree(n, h).linearize();
                keys.iter()
                    .position(|k| *k == key)
                    .expect("fanning-out variants are in the pool")
            })
            .collect();
        VariantPool {
            shape,
            variants,
            fanning_out_by_h,
        }
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    /// Pool index of the fanning-out variant for pivot `h`.
    pub fn fanning_out_index(&self, h: usize) -> usize {
        self.fanning_out_by_h[h]
    }

    /// Indices of the distinct fanning-out variants, in pivot order.
    pub fn fanning_out_set(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for &idx in &self.fanning_out_by_h {
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    /// Pool index of the left-to-right baseline.
    pub fn left_to_right_index(&self) -> usize {
        self.fanning_out_index(0)
    }

    /// Costs of every variant on one instance.
    pub fn costs(&self, model: &CostModel, q: &Instance) -> Vec<f64> {
        self.variants
            .iter()
            .map(|v| model.variant_cost(v, q))
            .collect()
    }

    /// (kernel, branch) cost forms reachable from this shape's variants.
    pub fn reachable_forms(&self) -> Vec<CostForm> {
        let mut set: BTreeSet<(catalog::KernelId, catalog::CostBranch)> = BTreeSet::new();
        for v in &self.variants {
            for kb in v.kernel_branches() {
                set.insert(kb);
            }
        }
        let mut forms = Vec::new();
        for (k, b) in set {
            if let Some(f) = catalog::cost_form(k, b) {
                if !forms.contains(&f) {
                    forms.push(f);
                }
            }
        }
        forms
    }
}

/// A selected subset of the pool; member order is the dispatch tie-break
/// order. Members are pool indices and never repeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSet {
    pub members: Vec<usize>,
}

impl VariantSet {
    pub fn new(members: Vec<usize>) -> VariantSet {
        let mut seen = Vec::new();
        for m in members {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        VariantSet { members: seen }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Relative cost increase of the best set member over the overall optimum on
/// one instance; an empty set has infinite penalty.
pub fn penalty(pool: &VariantPool, model: &CostModel, set: &VariantSet, q: &Instance) -> f64 {
    let costs = pool.costs(model, q);
    penalty_from_costs(&costs, &set.members)
}

fn penalty_from_costs(costs: &[f64], members: &[usize]) -> f64 {
    let opt = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let in_set = members
        .iter()
        .map(|&i| costs[i])
        .fold(f64::INFINITY, f64::min);
    if in_set.is_infinite() {
        return f64::INFINITY;
    }
    in_set / opt - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Max,
    Avg,
}

/// Sampled objective over a set of instances: the maximum or the average
/// per-instance penalty.
pub fn objective(
    pool: &VariantPool,
    model: &CostModel,
    set: &VariantSet,
    instances: &[Instance],
    kind: Objective,
) -> f64 {
    assert!(!instances.is_empty());
    let matrix = CostMatrix::build(pool, model, instances);
    matrix.objective(&set.members, kind)
}

/// Precomputed per-variant, per-instance costs with the optimum per column.
pub struct CostMatrix {
    /// costs[v][i]: cost of pool variant v on instance i.
    costs: Vec<Vec<f64>>,
    opt: Vec<f64>,
}

impl CostMatrix {
    pub fn build(pool: &VariantPool, model: &CostModel, instances: &[Instance]) -> CostMatrix {
        let costs: Vec<Vec<f64>> = pool
            .variants
            .iter()
            .map(|v| instances.iter().map(|q| model.variant_cost(v, q)).collect())
            .collect();
        let n_inst = instances.len();
        let opt = (0..n_inst)
            .map(|i| costs.iter().map(|row| row[i]).fold(f64::INFINITY, f64::min))
            .collect();
        CostMatrix { costs, opt }
    }

    pub fn n_instances(&self) -> usize {
        self.opt.len()
    }

    pub fn penalty(&self, members: &[usize], i: usize) -> f64 {
        let best = members
            .iter()
            .map(|&v| self.costs[v][i])
            .fold(f64::INFINITY, f64::min);
        if best.is_infinite() {
            f64::INFINITY
        } else {
            best / self.opt[i] - 1.0
        }
    }

    /// Ratio over optimum (penalty + 1) of the best member on instance i.
    pub fn ratio(&self, members: &[usize], i: usize) -> f64 {
        self.penalty(members, i) + 1.0
    }

    pub fn objective(&self, members: &[usize], kind: Objective) -> f64 {
        let n = self.n_instances();
        match kind {
            Objective::Max => (0..n)
                .map(|i| self.penalty(members, i))
                .fold(f64::NEG_INFINITY, f64::max),
            Objective::Avg => {
                (0..n).map(|i| self.penalty(members, i)).sum::<f64>() / n as f64
            }
        }
    }
}

/// Per-instance penalty sweep with summary statistics.
#[derive(Debug, Clone)]
pub struct PenaltyReport {
    pub penalties: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    /// (percentile, value) at 50/90/99.
    pub quantiles: Vec<(u32, f64)>,
    pub argmax: usize,
}

impl PenaltyReport {
    pub fn from_penalties(penalties: Vec<f64>) -> PenaltyReport {
        assert!(!penalties.is_empty());
        let mut sorted = penalties.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quantile = |p: f64| {
            let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
            sorted[idx]
        };
        let argmax = penalties
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        PenaltyReport {
            max: *sorted.last().unwrap(),
            mean: penalties.iter().sum::<f64>() / penalties.len() as f64,
            quantiles: vec![
                (50, quantile(0.50)),
                (90, quantile(0.90)),
                (99, quantile(0.99)),
            ],
            penalties,
            argmax,
        }
    }

    pub fn sweep(
        pool: &VariantPool,
        model: &CostModel,
        set: &VariantSet,
        instances: &[Instance],
    ) -> PenaltyReport {
        let matrix = CostMatrix::build(pool, model, instances);
        let penalties = (0..instances.len())
            .map(|i| matrix.penalty(&set.members, i))
            .collect();
        PenaltyReport::from_penalties(penalties)
    }

    /// CSV rows `q0..qn,penalty`, ready for eCDF plotting.
    pub fn write_csv<W: Write>(
        &self,
        instances: &[Instance],
        mut w: W,
    ) -> std::io::Result<()> {
        let n_syms = instances[0].0.len();
        let header: Vec<String> = (0..n_syms)
            .map(|i| format!("q{i}"))
            .chain(["penalty".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (q, p) in instances.iter().zip(&self.penalties) {
            let row: Vec<String> = q.0.iter().map(|v| v.to_string()).chain([p.to_string()]).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Base set
// ---------------------------------------------------------------------------

/// Combination search cutoff for class representatives.
const EXHAUSTIVE_COMBO_LIMIT: usize = 10_000;

/// Theory-backed base set: one fanning-out variant per size-symbol
/// equivalence class, with representatives chosen to minimize the average
/// penalty over the training instances. Identical trees are deduplicated.
///
/// Returns the set and the chosen representative per class.
pub fn base_set(
    pool: &VariantPool,
    model: &CostModel,
    train: &[Instance],
) -> (VariantSet, Vec<usize>) {
    let classes = pool.shape.classes().classes();
    let matrix = CostMatrix::build(pool, model, train);
    let members_for = |reps: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = Vec::new();
        for &h in reps {
            let idx = pool.fanning_out_index(h);
            if !v.contains(&idx) {
                v.push(idx);
            }
        }
        v
    };

    let combos: usize = classes.iter().map(|c| c.len()).product();
    let mut reps: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    if combos <= EXHAUSTIVE_COMBO_LIMIT {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut cursor = vec![0usize; classes.len()];
        loop {
            let candidate: Vec<usize> = cursor
                .iter()
                .zip(&classes)
                .map(|(&i, c)| c[i])
                .collect();
            let score = matrix.objective(&members_for(&candidate), Objective::Avg);
            if best.as_ref().map_or(true, |(b, _)| score < *b) {
                best = Some((score, candidate));
            }
            let mut done = true;
            for i in (0..cursor.len()).rev() {
                cursor[i] += 1;
                if cursor[i] < classes[i].len() {
                    done = false;
                    break;
                }
                cursor[i] = 0;
            }
            if done {
                break;
            }
        }
        reps = best.unwrap().1;
    } else {
        // Coordinate descent with a fixed sweep order.
        let mut improved = true;
        while improved {
            improved = false;
            for ci in 0..classes.len() {
                let current = matrix.objective(&members_for(&reps), Objective::Avg);
                let mut best = (current, reps[ci]);
                for &h in &classes[ci] {
                    let mut trial = reps.clone();
                    trial[ci] = h;
                    let score = matrix.objective(&members_for(&trial), Objective::Avg);
                    if score < best.0 {
                        best = (score, h);
                    }
                }
                if best.1 != reps[ci] {
                    reps[ci] = best.1;
                    improved = true;
                }
            }
        }
    }

    (VariantSet::new(members_for(&reps)), reps)
}

// ---------------------------------------------------------------------------
// Greedy expansion
// ---------------------------------------------------------------------------

/// Greedy expansion: while the set is smaller than `k`, add the candidate
/// that most improves the objective; stop early when nothing strictly
/// improves it. Ties go to the lowest pool index.
pub fn expand_set(
    pool: &VariantPool,
    model: &CostModel,
    instances: &[Instance],
    kind: Objective,
    k: usize,
    initial: &VariantSet,
) -> VariantSet {
    expand_set_traced(pool, model, instances, kind, k, initial).0
}

/// Expansion plus the objective value after the initial set and after each
/// accepted addition.
pub fn expand_set_traced(
    pool: &VariantPool,
    model: &CostModel,
    instances: &[Instance],
    kind: Objective,
    k: usize,
    initial: &VariantSet,
) -> (VariantSet, Vec<f64>) {
    let matrix = CostMatrix::build(pool, model, instances);
    let mut members = initial.members.clone();
    let mut v_min = if members.is_empty() {
        f64::INFINITY
    } else {
        matrix.objective(&members, kind)
    };
    let mut trace = vec![v_min];

    while members.len() < k {
        let mut candidate: Option<usize> = None;
        let mut v_star = f64::INFINITY;
        for d in 0..pool.len() {
            if members.contains(&d) {
                continue;
            }
            let mut trial = members.clone();
            trial.push(d);
            let v = matrix.objective(&trial, kind);
            if v < v_star {
                v_star = v;
                candidate = Some(d);
            }
        }
        if v_star >= v_min || candidate.is_none() {
            return (VariantSet::new(members), trace);
        }
        members.push(candidate.unwrap());
        v_min = v_star;
        trace.push(v_min);
    }
    (VariantSet::new(members), trace)
}

/// Candidate pool for expansion: all variants while the full enumeration is
/// small, otherwise the fanning-out set plus a uniform random tree sample.
pub fn expansion_pool<R: Rng>(
    shape: &Shape,
    limit: usize,
    sample_size: usize,
    rng: &mut R,
) -> Result<VariantPool, EnumError> {
    if crate::variants::tree_count(shape.n()) <= FULL_POOL_TREE_LIMIT {
        return VariantPool::enumerate(shape, limit);
    }
    let n = shape.n();
    let mut keys: Vec<Vec<(usize, usize, usize)>> = Vec::new();
    let mut variants = Vec::new();
    let push = |tree: crate::variants::ParenTree,
                    keys: &mut Vec<Vec<(usize, usize, usize)>>,
                    variants: &mut Vec<Variant>| {
        let key = tree.linearize();
        if !keys.contains(&key) {
            keys.push(key);
            variants.push(build_variant(&tree, shape));
        }
    };
    for h in 0..=n {
        push(fanning_out_tree(n, h), &mut keys, &mut variants);
    }
    for _ in 0..sample_size {
        push(sample_tree(n, rng), &mut keys, &mut variants);
    }
    Ok(VariantPool::assemble(shape.clone(), variants))
}

// ---------------------------------------------------------------------------
// Penalty bound
// ---------------------------------------------------------------------------

/// Largest pairwise cost-ratio constant over the kernel forms reachable from
/// this shape.
pub fn alpha_hat(pool: &VariantPool) -> Rat {
    let forms = pool.reachable_forms();
    if forms.is_empty() {
        return rat(1, 1);
    }
    catalog::max_alpha_forms(&forms)
}

/// Worst-case penalty of the fanning-out set: 2 alpha-hat - 1, never above
/// the universal ceiling of 15.
pub fn penalty_bound(pool: &VariantPool) -> Rat {
    let bound = rat(2, 1) * alpha_hat(pool) - rat(1, 1);
    bound.min(rat(15, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{normalize, parse, sample_instance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(src: &str) -> Shape {
        normalize(&parse(src).unwrap()).unwrap()
    }

    fn all_general(n: usize) -> Shape {
        let decls: String = (1..=n)
            .map(|i| format!("Matrix A{i} <General, Singular>; "))
            .collect();
        let chain: Vec<String> = (1..=n).map(|i| format!("A{i}")).collect();
        shape(&format!("{decls}X := {};", chain.join(" * ")))
    }

    fn instances(shape: &Shape, count: usize, seed: u64) -> Vec<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| sample_instance(shape.classes(), 2, 1000, &mut rng))
            .collect()
    }

    #[test]
    fn penalty_of_full_set_is_zero() {
        let s = all_general(4);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let full = VariantSet::new((0..pool.len()).collect());
        for q in instances(&s, 20, 1) {
            assert_eq!(penalty(&pool, &CostModel::Flops, &full, &q), 0.0);
        }
    }

    #[test]
    fn penalty_left_to_right_adversarial() {
        let s = all_general(3);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let ltr = VariantSet::new(vec![pool.left_to_right_index()]);
        let q = Instance(vec![1000, 1, 1000, 1]);
        let p = penalty(&pool, &CostModel::Flops, &ltr, &q);
        assert_eq!(p, 999.0);
    }

    #[test]
    fn penalty_of_empty_set_is_infinite() {
        let s = all_general(3);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let q = Instance(vec![10, 10, 10, 10]);
        assert!(penalty(&pool, &CostModel::Flops, &VariantSet::new(vec![]), &q).is_infinite());
    }

    #[test]
    fn objective_relations() {
        let s = all_general(4);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let q = instances(&s, 30, 2);
        let set = VariantSet::new(vec![pool.left_to_right_index()]);
        let favg = objective(&pool, &CostModel::Flops, &set, &q, Objective::Avg);
        let fmax = objective(&pool, &CostModel::Flops, &set, &q, Objective::Max);
        assert!(favg <= fmax);
        let full = VariantSet::new((0..pool.len()).collect());
        assert_eq!(objective(&pool, &CostModel::Flops, &full, &q, Objective::Max), 0.0);
        let single = &q[..1];
        let fa = objective(&pool, &CostModel::Flops, &set, single, Objective::Avg);
        let fm = objective(&pool, &CostModel::Flops, &set, single, Objective::Max);
        assert_eq!(fa, fm);
    }

    #[test]
    fn penalty_monotone_under_supersets() {
        let s = all_general(4);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = sample_instance(s.classes(), 2, 1000, &mut rng);
            let small = VariantSet::new(vec![0, 2]);
            let big = VariantSet::new(vec![0, 2, 3]);
            assert!(
                penalty(&pool, &CostModel::Flops, &big, &q)
                    <= penalty(&pool, &CostModel::Flops, &small, &q)
            );
        }
    }

    #[test]
    fn base_set_one_variant_per_class() {
        // S1 G2 S3 L4 G5: three classes.
        let s = shape(
            "Matrix S1 <Symmetric, Invertible>; Matrix G2 <General, Singular>; \
             Matrix S3 <Symmetric, Invertible>; Matrix L4 <LowerTri, Invertible>; \
             Matrix G5 <General, Singular>; X := S1 * G2 * S3 * L4 * G5;",
        );
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let train = instances(&s, 200, 4);
        let (set, reps) = base_set(&pool, &CostModel::Flops, &train);
        assert_eq!(reps.len(), 3);
        assert!(set.len() <= 3);
        assert!(!set.is_empty());
        for (ci, class) in s.classes().classes().iter().enumerate() {
            assert!(class.contains(&reps[ci]));
        }
    }

    #[test]
    fn base_set_all_square_chain() {
        let s = shape(
            "Matrix A <Symmetric, Invertible>; Matrix B <Symmetric, Invertible>; \
             Matrix C <Symmetric, Invertible>; X := A * B * C;",
        );
        assert_eq!(s.classes().n_classes(), 1);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let train = instances(&s, 50, 5);
        let (set, reps) = base_set(&pool, &CostModel::Flops, &train);
        assert_eq!(set.len(), 1);
        assert_eq!(reps.len(), 1);
    }

    #[test]
    fn expand_respects_cardinality_and_improves() {
        let s = all_general(5);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let train = instances(&s, 100, 6);
        let (z0, _) = base_set(&pool, &CostModel::Flops, &train);
        let f0 = objective(&pool, &CostModel::Flops, &z0, &train, Objective::Avg);
        let expanded = expand_set(
            &pool,
            &CostModel::Flops,
            &train,
            Objective::Avg,
            z0.len() + 1,
            &z0,
        );
        assert!(expanded.len() <= z0.len() + 1);
        for m in &z0.members {
            assert!(expanded.members.contains(m));
        }
        let f1 = objective(&pool, &CostModel::Flops, &expanded, &train, Objective::Avg);
        assert!(f1 <= f0);
    }

    #[test]
    fn expand_with_k_below_initial_returns_initial() {
        let s = all_general(4);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let train = instances(&s, 20, 7);
        let z0 = VariantSet::new(vec![0, 1, 2]);
        let out = expand_set(&pool, &CostModel::Flops, &train, Objective::Avg, 2, &z0);
        assert_eq!(out, z0);
    }

    #[test]
    fn expand_from_empty_picks_single_best() {
        let s = all_general(4);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let train = instances(&s, 50, 8);
        let out = expand_set(
            &pool,
            &CostModel::Flops,
            &train,
            Objective::Avg,
            1,
            &VariantSet::new(vec![]),
        );
        assert_eq!(out.len(), 1);
        let matrix = CostMatrix::build(&pool, &CostModel::Flops, &train);
        let best = (0..pool.len())
            .min_by(|&a, &b| {
                matrix
                    .objective(&[a], Objective::Avg)
                    .partial_cmp(&matrix.objective(&[b], Objective::Avg))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(out.members[0], best);
    }

    #[test]
    fn alpha_and_bound_for_simple_shapes() {
        let pool = VariantPool::enumerate(&all_general(4), 12).unwrap();
        assert_eq!(alpha_hat(&pool), rat(1, 1));
        assert_eq!(penalty_bound(&pool), rat(1, 1));

        let s = shape(
            "Matrix G1 <General, Singular>; Matrix L <LowerTri, Singular>; \
             Matrix G2 <General, Singular>; X := G1 * L * G2;",
        );
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        assert_eq!(alpha_hat(&pool), rat(2, 1));
        assert_eq!(penalty_bound(&pool), rat(3, 1));
    }

    #[test]
    fn bound_is_capped_at_fifteen() {
        assert_eq!(
            (rat(2, 1) * catalog::max_alpha(&catalog::ASSOCIATION_KERNELS) - rat(1, 1))
                .min(rat(15, 1)),
            rat(15, 1)
        );
    }

    #[test]
    fn expansion_pool_samples_when_large() {
        let s = all_general(12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pool = expansion_pool(&s, 12, 50, &mut rng).unwrap();
        // Fanning-out variants (n + 1 of them for n >= 4) plus samples, deduplicated.
        assert!(pool.len() >= 13);
        assert!(pool.len() <= 13 + 50);
        assert_eq!(pool.fanning_out_set().len(), 13);
    }

    #[test]
    fn report_quantiles_and_argmax() {
        let s = all_general(3);
        let pool = VariantPool::enumerate(&s, 12).unwrap();
        let ltr = VariantSet::new(vec![pool.left_to_right_index()]);
        let q = vec![
            Instance(vec![10, 10, 10, 10]),
            Instance(vec![1000, 1, 1000, 1]),
        ];
        let report = PenaltyReport::sweep(&pool, &CostModel::Flops, &ltr, &q);
        assert_eq!(report.argmax, 1);
        assert_eq!(report.max, 999.0);
        let mut csv = Vec::new();
        report.write_csv(&q, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("q0,q1,q2,q3,penalty\n"));
        assert!(text.contains("1000,1,1000,1,999"));
    }
}
