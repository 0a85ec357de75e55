//! Parenthesization trees and code-variant construction.
//!
//! Each parenthesization maps to exactly one variant through four steps per
//! association: inversion propagation, kernel assignment, transposition
//! propagation, and inference of result features and sizes.

use crate::catalog::{
    self, CallConfig, Features, Inverted, KernelId, Side,
};
use crate::frontend::{ClassPartition, PropertyKind, Shape, StructureKind};
use crate::poly::Poly;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_ENUM_LIMIT: usize = 12;

/// Binary tree over chain positions 1..=n, leaves in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParenTree {
    Leaf(usize),
    Join(Box<ParenTree>, Box<ParenTree>),
}

impl ParenTree {
    /// Covered span as symbol indices: a leaf for matrix i spans (i-1, i).
    pub fn span(&self) -> (usize, usize) {
        match self {
            ParenTree::Leaf(i) => (i - 1, *i),
            ParenTree::Join(l, r) => (l.span().0, r.span().1),
        }
    }

    pub fn n_leaves(&self) -> usize {
        let (a, c) = self.span();
        c - a
    }

    /// Association triplets in evaluation order: leftmost available first,
    /// which coincides with a left-first post-order walk.
    pub fn linearize(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        fn walk(t: &ParenTree, out: &mut Vec<(usize, usize, usize)>) {
            if let ParenTree::Join(l, r) = t {
                walk(l, out);
                walk(r, out);
                let (a, b) = l.span();
                let (_, c) = r.span();
                out.push((a, b, c));
            }
        }
        walk(self, &mut out);
        out
    }

    fn render(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParenTree::Leaf(i) => write!(f, "M{i}"),
            ParenTree::Join(l, r) => {
                write!(f, "(")?;
                l.render(f)?;
                write!(f, " ")?;
                r.render(f)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for ParenTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.render(f)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnumError {
    #[error("chain length {n} exceeds the enumeration limit {limit}")]
    LimitExceeded { n: usize, limit: usize },
}

/// Number of distinct parenthesizations of an n-matrix chain (the (n-1)-th
/// Catalan number).
pub fn tree_count(n: usize) -> u128 {
    // C_0 = 1, C_{k+1} = sum C_i C_{k-i}
    let mut c = vec![1u128; n];
    for k in 1..n {
        c[k] = (0..k).map(|i| c[i] * c[k - 1 - i]).sum();
    }
    c[n - 1]
}

/// Enumerate every parenthesization of positions lo..=hi, split point
/// ascending. Deterministic order.
fn enumerate_span(lo: usize, hi: usize) -> Vec<ParenTree> {
    if lo == hi {
        return vec![ParenTree::Leaf(lo)];
    }
    let mut out = Vec::new();
    for split in lo..hi {
        for l in enumerate_span(lo, split) {
            for r in enumerate_span(split + 1, hi) {
                out.push(ParenTree::Join(Box::new(l.clone()), Box::new(r.clone())));
            }
        }
    }
    out
}

pub fn enumerate_trees(n: usize, limit: usize) -> Result<Vec<ParenTree>, EnumError> {
    assert!(n >= 1);
    if n > limit {
        return Err(EnumError::LimitExceeded { n, limit });
    }
    Ok(enumerate_span(1, n))
}

/// Fanning-out parenthesization: the prefix M_1..M_h is computed
/// right-to-left, the suffix M_{h+1}..M_n left-to-right, then the two parts
/// are joined. `h = 0` is the left-to-right baseline; `h = n` right-to-left.
pub fn fanning_out_tree(n: usize, h: usize) -> ParenTree {
    assert!(h <= n);
    let right_to_left = |lo: usize, hi: usize| -> ParenTree {
        let mut t = ParenTree::Leaf(hi);
        for i in (lo..hi).rev() {
            t = ParenTree::Join(Box::new(ParenTree::Leaf(i)), Box::new(t));
        }
        t
    };
    let left_to_right = |lo: usize, hi: usize| -> ParenTree {
        let mut t = ParenTree::Leaf(lo);
        for i in lo + 1..=hi {
            t = ParenTree::Join(Box::new(t), Box::new(ParenTree::Leaf(i)));
        }
        t
    };
    if h == 0 {
        left_to_right(1, n)
    } else if h == n {
        right_to_left(1, n)
    } else {
        ParenTree::Join(
            Box::new(right_to_left(1, h)),
            Box::new(left_to_right(h + 1, n)),
        )
    }
}

/// Sample a uniformly random parenthesization by Catalan-weighted splits.
pub fn sample_tree<R: rand::Rng>(n: usize, rng: &mut R) -> ParenTree {
    fn go<R: rand::Rng>(lo: usize, hi: usize, rng: &mut R) -> ParenTree {
        let n = hi - lo + 1;
        if n == 1 {
            return ParenTree::Leaf(lo);
        }
        let total = tree_count(n);
        let mut pick = rng.gen_range(0..total);
        for split in lo..hi {
            let w = tree_count(split - lo + 1) * tree_count(hi - split);
            if pick < w {
                let l = go(lo, split, rng);
                let r = go(split + 1, hi, rng);
                return ParenTree::Join(Box::new(l), Box::new(r));
            }
            pick -= w;
        }
        unreachable!("catalan weights sum to the total")
    }
    go(1, n, rng)
}

// ---------------------------------------------------------------------------
// Operand views
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperandRef {
    /// Chain position, 1-based.
    Leaf(usize),
    /// Intermediate buffer, 1-based per variant.
    Buf(usize),
}

impl fmt::Display for OperandRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperandRef::Leaf(i) => write!(f, "M{i}"),
            OperandRef::Buf(i) => write!(f, "B{i}"),
        }
    }
}

/// A stored matrix (leaf or buffer) viewed through optional transposition
/// and inversion. `rows`/`cols` are the viewed dimensions as symbol indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperandView {
    pub source: OperandRef,
    pub structure: StructureKind,
    pub property: PropertyKind,
    pub trans: bool,
    pub inv: bool,
    pub rows: usize,
    pub cols: usize,
}

impl OperandView {
    /// Simplify operators against features: a transpose on a symmetric
    /// matrix disappears, an inversion of an orthogonal matrix becomes a
    /// transposition. Applied to leaves and intermediates alike.
    fn canonicalize(mut self) -> OperandView {
        loop {
            let before = (self.trans, self.inv);
            if self.structure == StructureKind::Symmetric && self.trans {
                self.trans = false;
            }
            if self.property == PropertyKind::Orthogonal && self.inv {
                self.inv = false;
                self.trans = !self.trans;
            }
            if (self.trans, self.inv) == before {
                return self;
            }
        }
    }

    fn without_inv(mut self) -> OperandView {
        self.inv = false;
        self.canonicalize()
    }

    fn with_inv(mut self) -> OperandView {
        self.inv = true;
        self.canonicalize()
    }

    /// Transpose the view: dims swap, the transpose flag toggles (and is
    /// re-absorbed where features allow).
    fn transposed(mut self) -> OperandView {
        self.trans = !self.trans;
        std::mem::swap(&mut self.rows, &mut self.cols);
        self.canonicalize()
    }

    /// Triangularity of the viewed matrix: a transposed triangular operand
    /// has the opposite triangular structure.
    pub fn eff_structure(&self) -> StructureKind {
        if self.trans {
            self.structure.transposed()
        } else {
            self.structure
        }
    }

    /// Residual transpose that the kernel must apply (only general-structure
    /// operands keep one; triangular absorbs it into `eff_structure`).
    pub fn residual_trans(&self) -> bool {
        self.trans && self.structure == StructureKind::General
    }

    pub fn features(&self) -> Features {
        Features {
            structure: self.eff_structure(),
            property: self.property,
            pending_transpose: self.residual_trans(),
            pending_inverse: self.inv,
        }
    }
}

impl fmt::Display for OperandView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        match (self.trans, self.inv) {
            (false, false) => Ok(()),
            (true, false) => write!(f, "^T"),
            (false, true) => write!(f, "^-1"),
            (true, true) => write!(f, "^-T"),
        }
    }
}

// ---------------------------------------------------------------------------
// Kernel calls and variants
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCall {
    pub kernel: KernelId,
    pub side: Side,
    /// Operands in the order the kernel consumes them, after any rewrites.
    pub left: OperandView,
    pub right: OperandView,
    /// Association triplet (a, b, c) in chain coordinates.
    pub triplet: (usize, usize, usize),
    pub out: usize,
    /// Stored result dimensions as symbol indices.
    pub out_rows: usize,
    pub out_cols: usize,
    /// Features of the stored result plus pending operators for later use.
    pub out_features: Features,
    /// Cost of this call over the chain size symbols (class-canonical).
    pub cost: Poly,
    /// Grid axes (m[, n[, k]] order per kernel) as canonical symbol indices.
    pub axes: Vec<usize>,
}

impl KernelCall {
    pub fn config(&self) -> CallConfig {
        CallConfig {
            side: self.side,
            left: self.left.features(),
            right: self.right.features(),
            result_square: true,
        }
    }
}

/// Explicit inversion or transposition forced on the end result.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCall {
    pub kernel: KernelId,
    pub arg: OperandRef,
    /// Explicit inversion may additionally transpose its result.
    pub also_transpose: bool,
    pub cost: Poly,
    pub axes: Vec<usize>,
}

/// One code variant: an ordered list of kernel calls realizing a
/// parenthesization, plus at most one trailing pseudo-call.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub tree: ParenTree,
    pub calls: Vec<KernelCall>,
    pub pseudo: Option<PseudoCall>,
    pub cost: Poly,
}

impl Variant {
    /// Kernel ids and piecewise branches used by this variant's associations.
    pub fn kernel_branches(&self) -> Vec<(KernelId, catalog::CostBranch)> {
        self.calls
            .iter()
            .map(|c| (c.kernel, catalog::cost_branch(c.kernel, &c.config())))
            .collect()
    }

    /// The triplet sequence uniquely identifies the source parenthesization.
    pub fn tree_key(&self) -> Vec<(usize, usize, usize)> {
        self.tree.linearize()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant {}", self.tree)?;
        for (i, c) in self.calls.iter().enumerate() {
            writeln!(
                f,
                "  {}. {} side={} {} , {} triplet=({},{},{}) out=B{}[q{} x q{}]{}{}",
                i + 1,
                c.kernel,
                match c.side {
                    Side::Left => "L",
                    Side::Right => "R",
                },
                c.left,
                c.right,
                c.triplet.0,
                c.triplet.1,
                c.triplet.2,
                c.out,
                c.out_rows,
                c.out_cols,
                if c.out_features.pending_inverse {
                    " pending=^-1"
                } else {
                    ""
                },
                if c.out_features.pending_transpose {
                    " pending=^T"
                } else {
                    ""
                },
            )?;
        }
        if let Some(p) = &self.pseudo {
            writeln!(
                f,
                "  *. {} {}{}",
                p.kernel,
                p.arg,
                if p.also_transpose { " (+transpose)" } else { "" }
            )?;
        }
        write!(f, "  cost: {}", self.cost.render(&|i| format!("q{i}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Apply the one-operand inversion-propagation heuristic. The
    /// two-operand rewrite is structural and always applied.
    pub propagate_single_inversion: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            propagate_single_inversion: true,
        }
    }
}

pub fn build_variant(tree: &ParenTree, shape: &Shape) -> Variant {
    build_variant_with(tree, shape, BuildOptions::default())
}

/// Construct the unique variant for a parenthesization of a normalized shape.
pub fn build_variant_with(tree: &ParenTree, shape: &Shape, opts: BuildOptions) -> Variant {
    let classes = shape.classes();
    let n = shape.n();
    assert_eq!(tree.n_leaves(), n, "tree does not match the chain length");

    let leaf_view = |i: usize| -> OperandView {
        let d = shape.decl(i - 1);
        let op = shape.op(i - 1);
        OperandView {
            source: OperandRef::Leaf(i),
            structure: d.structure,
            property: d.property,
            trans: op.transposes(),
            inv: op.inverts(),
            rows: i - 1,
            cols: i,
        }
        .canonicalize()
    };

    // Current view covering each span, keyed by span start. A chain position
    // participates in exactly one live span at a time.
    let mut live: Vec<Option<OperandView>> = vec![None; n + 1];
    for i in 1..=n {
        live[i - 1] = Some(leaf_view(i));
    }

    let mut calls: Vec<KernelCall> = Vec::new();
    let mut next_buf = 1usize;
    let mut total = Poly::zero(n + 1);

    for (a, b, c) in tree.linearize() {
        let lv = live[a].take().expect("left operand is live");
        let rv = live[b].take().expect("right operand is live");
        debug_assert_eq!((lv.rows, lv.cols), (a, b));
        debug_assert_eq!((rv.rows, rv.cols), (b, c));

        let call = associate(lv, rv, (a, b, c), classes, next_buf, opts);
        let result = OperandView {
            source: OperandRef::Buf(next_buf),
            structure: call.out_features.structure,
            property: call.out_features.property,
            trans: call.out_features.pending_transpose,
            inv: call.out_features.pending_inverse,
            rows: a,
            cols: c,
        }
        .canonicalize();
        total.add_assign(&call.cost);
        calls.push(call);
        next_buf += 1;
        live[a] = Some(result);
    }

    // The root view; for n = 1 this is the single (possibly operated) leaf.
    let root = live[0].take().expect("root view");
    let pseudo = pending_pseudo(&root, classes, n);
    if let Some(p) = &pseudo {
        total.add_assign(&p.cost);
    }

    Variant {
        tree: tree.clone(),
        calls,
        pseudo,
        cost: total,
    }
}

/// Run the four construction steps for one association.
fn associate(
    mut lv: OperandView,
    mut rv: OperandView,
    triplet: (usize, usize, usize),
    classes: &ClassPartition,
    out: usize,
    opts: BuildOptions,
) -> KernelCall {
    let mut pending_inverse = false;

    // Step 1: propagation of inversion. Two inverted operands rewrite as
    // A^-1 B^-1 = (B A)^-1. A single inversion moves onto an orthogonal or
    // non-singular triangular partner, turning an expensive general/symmetric
    // solve into a cheap one: A B^-1 = (B A^-1)^-1.
    if lv.inv && rv.inv {
        let (a, b) = (lv.without_inv(), rv.without_inv());
        lv = b;
        rv = a;
        pending_inverse = true;
    } else if opts.propagate_single_inversion && (lv.inv ^ rv.inv) {
        let (inv_op, other) = if lv.inv { (&lv, &rv) } else { (&rv, &lv) };
        let movable = matches!(
            inv_op.eff_structure(),
            StructureKind::General | StructureKind::Symmetric
        );
        let target_ok = other.property == PropertyKind::Orthogonal
            || (other.eff_structure().is_triangular()
                && other.property != PropertyKind::Singular);
        if movable && target_ok {
            if rv.inv {
                // A B^-1 = (B A^-1)^-1
                let (a, b) = (lv, rv);
                lv = b.without_inv();
                rv = a.with_inv();
            } else {
                // A^-1 B = (B^-1 A)^-1
                let (a, b) = (lv, rv);
                lv = b.with_inv();
                rv = a.without_inv();
            }
            pending_inverse = true;
        }
    }
    debug_assert!(!(lv.inv && rv.inv), "step 1 leaves at most one inversion");

    // Step 2: kernel assignment.
    let inverted = match (lv.inv, rv.inv) {
        (true, false) => Inverted::Left,
        (false, true) => Inverted::Right,
        (false, false) => Inverted::None,
        (true, true) => unreachable!(),
    };
    let (kernel, mut side) = catalog::kernel_for(lv.features(), rv.features(), inverted);

    // Step 3: propagation of transposition. If the pattern is unsupported,
    // compute the transposed product instead: op(A) op(B) = (op(B)^T op(A)^T)^T.
    let mut pending_transpose = false;
    let mut config = CallConfig {
        side,
        left: lv.features(),
        right: rv.features(),
        result_square: classes.same(triplet.0, triplet.2),
    };
    if !catalog::pattern_supported(kernel, &config) {
        let (a, b) = (lv.transposed(), rv.transposed());
        lv = b;
        rv = a;
        pending_transpose = true;
        let inverted = match (lv.inv, rv.inv) {
            (true, false) => Inverted::Left,
            (false, true) => Inverted::Right,
            (false, false) => Inverted::None,
            (true, true) => unreachable!(),
        };
        let (kernel2, side2) = catalog::kernel_for(lv.features(), rv.features(), inverted);
        debug_assert_eq!(kernel2, kernel, "the rewrite keeps the assigned kernel");
        side = side2;
        config = CallConfig {
            side,
            left: lv.features(),
            right: rv.features(),
            result_square: config.result_square,
        };
        debug_assert!(
            catalog::pattern_supported(kernel, &config),
            "transposition rewrite yields a supported pattern"
        );
    }

    // Step 4: inference of features and sizes.
    let mut out_features = catalog::infer_result_features(&config);
    out_features.pending_transpose = pending_transpose;
    out_features.pending_inverse = pending_inverse;

    // Instantiate the (m, k, n) formula on the canonical class representatives
    // of the call dimensions.
    let nvars = classes.n_symbols();
    let m = classes.rep(lv.rows);
    let k = classes.rep(lv.cols);
    let nn = classes.rep(rv.cols);
    let cost = catalog::cost_polynomial(kernel, &config).substitute_vars(&[m, k, nn], nvars);
    let axes = match kernel.axis_count() {
        3 => vec![m, k, nn],
        2 => vec![m, nn],
        _ => vec![m],
    };

    KernelCall {
        kernel,
        side,
        left: lv,
        right: rv,
        triplet,
        out,
        out_rows: lv.rows,
        out_cols: rv.cols,
        out_features,
        cost,
        axes,
    }
}

/// An operator surviving on the end result forces an explicit call.
fn pending_pseudo(root: &OperandView, classes: &ClassPartition, n: usize) -> Option<PseudoCall> {
    let nvars = classes.n_symbols();
    if root.inv {
        let m = classes.rep(0);
        debug_assert!(classes.same(0, n), "pending inversion implies a square result");
        let cost = catalog::cost_formula(KernelId::ExplicitInverse, catalog::CostBranch::Plain)
            .substitute_vars(&[m, m, m], nvars);
        Some(PseudoCall {
            kernel: KernelId::ExplicitInverse,
            arg: root.source,
            also_transpose: root.trans,
            cost,
            axes: vec![m],
        })
    } else if root.trans {
        Some(PseudoCall {
            kernel: KernelId::ExplicitTranspose,
            arg: root.source,
            also_transpose: false,
            cost: Poly::zero(nvars),
            axes: vec![classes.rep(0), classes.rep(n)],
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{normalize, parse};
    use crate::poly::{rat, Poly};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(src: &str) -> Shape {
        normalize(&parse(src).unwrap()).unwrap()
    }

    #[test]
    fn catalan_counts() {
        assert_eq!(enumerate_trees(3, 12).unwrap().len(), 2);
        assert_eq!(enumerate_trees(5, 12).unwrap().len(), 14);
        assert_eq!(enumerate_trees(1, 12).unwrap().len(), 1);
        assert_eq!(tree_count(5), 14);
        assert_eq!(tree_count(11), 16796);
        assert!(matches!(
            enumerate_trees(13, 12),
            Err(EnumError::LimitExceeded { .. })
        ));
    }

    #[test]
    fn linearize_leftmost_first() {
        // ((M1 M2) M3)(M4 M5)
        let t = ParenTree::Join(
            Box::new(ParenTree::Join(
                Box::new(ParenTree::Join(
                    Box::new(ParenTree::Leaf(1)),
                    Box::new(ParenTree::Leaf(2)),
                )),
                Box::new(ParenTree::Leaf(3)),
            )),
            Box::new(ParenTree::Join(
                Box::new(ParenTree::Leaf(4)),
                Box::new(ParenTree::Leaf(5)),
            )),
        );
        assert_eq!(
            t.linearize(),
            vec![(0, 1, 2), (0, 2, 3), (3, 4, 5), (0, 3, 5)]
        );
        // (M1 M2)(M3 M4)
        let t = ParenTree::Join(
            Box::new(ParenTree::Join(
                Box::new(ParenTree::Leaf(1)),
                Box::new(ParenTree::Leaf(2)),
            )),
            Box::new(ParenTree::Join(
                Box::new(ParenTree::Leaf(3)),
                Box::new(ParenTree::Leaf(4)),
            )),
        );
        assert_eq!(t.linearize(), vec![(0, 1, 2), (2, 3, 4), (0, 2, 4)]);
        // Left-to-right
        assert_eq!(
            fanning_out_tree(4, 0).linearize(),
            vec![(0, 1, 2), (0, 2, 3), (0, 3, 4)]
        );
    }

    /// Literal worklist implementation of the leftmost-available-first rule,
    /// cross-checking the post-order shortcut.
    fn linearize_reference(t: &ParenTree) -> Vec<(usize, usize, usize)> {
        #[derive(Clone)]
        struct Pending {
            triplet: (usize, usize, usize),
            deps: Vec<usize>,
        }
        let mut nodes: Vec<Pending> = Vec::new();
        fn collect(t: &ParenTree, nodes: &mut Vec<Pending>) -> Option<usize> {
            match t {
                ParenTree::Leaf(_) => None,
                ParenTree::Join(l, r) => {
                    let mut deps = Vec::new();
                    if let Some(i) = collect(l, nodes) {
                        deps.push(i);
                    }
                    if let Some(i) = collect(r, nodes) {
                        deps.push(i);
                    }
                    let (a, b) = l.span();
                    let (_, c) = r.span();
                    nodes.push(Pending {
                        triplet: (a, b, c),
                        deps,
                    });
                    Some(nodes.len() - 1)
                }
            }
        }
        collect(t, &mut nodes);
        let mut done = vec![false; nodes.len()];
        let mut out = Vec::new();
        for _ in 0..nodes.len() {
            let ready = (0..nodes.len())
                .filter(|&i| !done[i] && nodes[i].deps.iter().all(|&d| done[d]))
                .min_by_key(|&i| nodes[i].triplet.0)
                .unwrap();
            done[ready] = true;
            out.push(nodes[ready].triplet);
        }
        out
    }

    #[test]
    fn linearize_matches_worklist_rule() {
        for t in enumerate_trees(6, 12).unwrap() {
            assert_eq!(t.linearize(), linearize_reference(&t), "tree {t}");
        }
    }

    #[test]
    fn fanning_out_counts() {
        let distinct = |n: usize| {
            let mut keys: Vec<Vec<(usize, usize, usize)>> = Vec::new();
            for h in 0..=n {
                let key = fanning_out_tree(n, h).linearize();
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
            keys.len()
        };
        assert_eq!(distinct(3), 2);
        assert_eq!(distinct(5), 6);
        assert_eq!(distinct(7), 8);
    }

    #[test]
    fn fanning_out_structure() {
        assert_eq!(format!("{}", fanning_out_tree(5, 2)), "((M1 M2) ((M3 M4) M5))");
        assert_eq!(format!("{}", fanning_out_tree(4, 0)), "(((M1 M2) M3) M4)");
        assert_eq!(format!("{}", fanning_out_tree(4, 4)), "(M1 (M2 (M3 M4)))");
    }

    #[test]
    fn sampled_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = sample_tree(7, &mut rng);
            assert_eq!(t.n_leaves(), 7);
            let lin = t.linearize();
            assert_eq!(lin.len(), 6);
            assert_eq!(lin.last().unwrap().0, 0);
            assert_eq!(lin.last().unwrap().2, 7);
        }
    }

    const WORKED: &str = "Matrix L1 <LowerTri, Invertible>; Matrix G2 <General, Invertible>; \
         Matrix G3 <General, Singular>; X := L1 * G2^-1 * G3;";

    #[test]
    fn inversion_propagation_worked_example() {
        let s = shape(WORKED);
        let v = build_variant(&fanning_out_tree(3, 0), &s);
        assert_eq!(v.calls.len(), 2);
        assert_eq!(v.calls[0].kernel, KernelId::Trsm);
        assert_eq!(v.calls[0].side, Side::Right);
        assert!(v.calls[0].out_features.pending_inverse);
        assert_eq!(v.calls[1].kernel, KernelId::Gegesv);
        assert_eq!(v.calls[1].side, Side::Left);
        assert!(v.pseudo.is_none());
        // 5/3 m^3 + 2 m^2 n over classes {q0,q1,q2}, {q3}
        let expected = Poly::from_terms(
            4,
            &[(rat(5, 3), vec![3, 0, 0, 0]), (rat(2, 1), vec![2, 0, 0, 1])],
        );
        assert_eq!(v.cost, expected);
    }

    #[test]
    fn worked_example_without_propagation() {
        let s = shape(WORKED);
        let opts = BuildOptions {
            propagate_single_inversion: false,
        };
        let v = build_variant_with(&fanning_out_tree(3, 0), &s, opts);
        assert_eq!(v.calls[0].kernel, KernelId::Getrsv);
        assert_eq!(v.calls[1].kernel, KernelId::Gemm);
        let expected = Poly::from_terms(
            4,
            &[(rat(8, 3), vec![3, 0, 0, 0]), (rat(2, 1), vec![2, 0, 0, 1])],
        );
        assert_eq!(v.cost, expected);
    }

    #[test]
    fn double_inversion_becomes_multiply() {
        let s = shape(
            "Matrix G1 <General, Invertible>; Matrix G2 <General, Invertible>; \
             X := G1^-1 * G2^-1;",
        );
        let v = build_variant(&fanning_out_tree(2, 0), &s);
        assert_eq!(v.calls.len(), 1);
        assert_eq!(v.calls[0].kernel, KernelId::Gemm);
        // Operands swap: the call computes G2 * G1 with the inversion pending.
        assert_eq!(v.calls[0].left.source, OperandRef::Leaf(2));
        assert_eq!(v.calls[0].right.source, OperandRef::Leaf(1));
        assert!(v.calls[0].out_features.pending_inverse);
        let p = v.pseudo.as_ref().expect("explicit inversion at the root");
        assert_eq!(p.kernel, KernelId::ExplicitInverse);
        // gemm 2m^3 + explicit inverse 2m^3
        assert_eq!(v.cost, Poly::monomial(3, rat(4, 1), vec![3, 0, 0]));
    }

    #[test]
    fn transposition_rewrite_for_trmm() {
        // L * G^T: trmm cannot transpose its general operand, so the call
        // computes (G L^T)^T with a pending transposition.
        let s = shape(
            "Matrix L <LowerTri, Singular>; Matrix G <General, Singular>; X := L * G^T;",
        );
        let v = build_variant(&fanning_out_tree(2, 0), &s);
        assert_eq!(v.calls[0].kernel, KernelId::Trmm);
        assert_eq!(v.calls[0].side, Side::Right);
        assert_eq!(v.calls[0].left.source, OperandRef::Leaf(2));
        assert!(!v.calls[0].left.trans);
        assert_eq!(v.calls[0].right.eff_structure(), StructureKind::UpperTri);
        assert!(v.calls[0].out_features.pending_transpose);
        let p = v.pseudo.as_ref().expect("explicit transposition at the root");
        assert_eq!(p.kernel, KernelId::ExplicitTranspose);
        assert!(p.cost.is_zero());
    }

    #[test]
    fn symbolic_cost_all_general() {
        let s = shape(
            "Matrix A <General, Singular>; Matrix B <General, Singular>; \
             Matrix C <General, Singular>; X := A * B * C;",
        );
        let ltr = build_variant(&fanning_out_tree(3, 0), &s);
        let q = [10.0, 100.0, 5.0, 50.0];
        assert_eq!(ltr.cost.eval_f64(&q), 15_000.0);
        let rtl = build_variant(&fanning_out_tree(3, 3), &s);
        assert_eq!(rtl.cost.eval_f64(&q), 150_000.0);
    }

    #[test]
    fn triplet_discipline() {
        let s = shape(
            "Matrix S1 <Symmetric, SPD>; Matrix G2 <General, Singular>; \
             Matrix L3 <LowerTri, Invertible>; Matrix G4 <General, Singular>; \
             Matrix S5 <Symmetric, Invertible>; X := S1 * G2 * L3^-1 * G4 * S5;",
        );
        for t in enumerate_trees(5, 12).unwrap() {
            let v = build_variant(&t, &s);
            assert_eq!(v.calls.len(), 4);
            let mut seen_b = Vec::new();
            for c in &v.calls {
                let (a, b, cc) = c.triplet;
                assert!(a < b && b < cc);
                assert!(!seen_b.contains(&b), "middle symbol reused");
                seen_b.push(b);
            }
            let last = v.calls.last().unwrap().triplet;
            assert_eq!((last.0, last.2), (0, 5));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let s = shape(
            "Matrix P <Symmetric, SPD>; Matrix G <General, Singular>; \
             Matrix L <LowerTri, Invertible>; X := P^-1 * G * L^-1;",
        );
        for t in enumerate_trees(3, 12).unwrap() {
            let a = build_variant(&t, &s);
            let b = build_variant(&t, &s);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cost_monotone_in_each_symbol() {
        let s = shape(
            "Matrix G1 <General, Singular>; Matrix S <Symmetric, SPD>; \
             Matrix G2 <General, Singular>; Matrix U <UpperTri, Invertible>; \
             X := G1 * S^-1 * G2 * U;",
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in enumerate_trees(4, 12).unwrap() {
            let v = build_variant(&t, &s);
            for _ in 0..20 {
                let inst = crate::frontend::sample_instance(s.classes(), 2, 200, &mut rng);
                let base = v.cost.eval_f64(&inst.as_f64());
                for i in 0..inst.0.len() {
                    if s.classes().rep(i) != i {
                        continue;
                    }
                    let mut bumped = inst.clone();
                    for j in 0..bumped.0.len() {
                        if s.classes().rep(j) == i {
                            bumped.0[j] += 1;
                        }
                    }
                    assert!(v.cost.eval_f64(&bumped.as_f64()) >= base);
                }
            }
        }
    }

    #[test]
    fn single_matrix_chain_is_trivial() {
        // G * I normalizes to a single operand with a transpose.
        let s = shape(
            "Matrix G <General, Singular>; Matrix I <LowerTri, Orthogonal>; X := G^T * I;",
        );
        assert_eq!(s.n(), 1);
        let v = build_variant(&ParenTree::Leaf(1), &s);
        assert!(v.calls.is_empty());
        assert_eq!(v.pseudo.as_ref().unwrap().kernel, KernelId::ExplicitTranspose);
        assert!(v.cost.is_zero());
    }
}
