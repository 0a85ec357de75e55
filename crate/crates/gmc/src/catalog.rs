//! Kernel catalog: association-to-kernel mapping, per-kernel FLOP formulas
//! with their piecewise branches, feature inference for intermediate results,
//! and the cost-form analysis that bounds cross-kernel cost ratios.
//!
//! Kernel naming follows the BLAS/LAPACK convention: `xxmm`/`xxyymm` multiply,
//! `xxsv`/`xxyysv` solve a linear system. The first two letters describe the
//! structured (or coefficient) operand, the next two the other operand.

use crate::frontend::{PropertyKind, StructureKind};
use crate::poly::{rat, Poly, Rat};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelId {
    Gemm,
    Symm,
    Trmm,
    Sysymm,
    Trsymm,
    Trtrmm,
    Gegesv,
    Gesysv,
    Getrsv,
    Sygesv,
    Sysysv,
    Sytrsv,
    Pogesv,
    Posysv,
    Potrsv,
    Trsm,
    Trsysv,
    Trtrsv,
    ExplicitInverse,
    ExplicitTranspose,
}

pub const ALL_KERNELS: [KernelId; 20] = [
    KernelId::Gemm,
    KernelId::Symm,
    KernelId::Trmm,
    KernelId::Sysymm,
    KernelId::Trsymm,
    KernelId::Trtrmm,
    KernelId::Gegesv,
    KernelId::Gesysv,
    KernelId::Getrsv,
    KernelId::Sygesv,
    KernelId::Sysysv,
    KernelId::Sytrsv,
    KernelId::Pogesv,
    KernelId::Posysv,
    KernelId::Potrsv,
    KernelId::Trsm,
    KernelId::Trsysv,
    KernelId::Trtrsv,
    KernelId::ExplicitInverse,
    KernelId::ExplicitTranspose,
];

/// The 18 association kernels (everything except the explicit pseudo-kernels).
pub const ASSOCIATION_KERNELS: [KernelId; 18] = [
    KernelId::Gemm,
    KernelId::Symm,
    KernelId::Trmm,
    KernelId::Sysymm,
    KernelId::Trsymm,
    KernelId::Trtrmm,
    KernelId::Gegesv,
    KernelId::Gesysv,
    KernelId::Getrsv,
    KernelId::Sygesv,
    KernelId::Sysysv,
    KernelId::Sytrsv,
    KernelId::Pogesv,
    KernelId::Posysv,
    KernelId::Potrsv,
    KernelId::Trsm,
    KernelId::Trsysv,
    KernelId::Trtrsv,
];

impl KernelId {
    pub fn name(self) -> &'static str {
        match self {
            KernelId::Gemm => "gemm",
            KernelId::Symm => "symm",
            KernelId::Trmm => "trmm",
            KernelId::Sysymm => "sysymm",
            KernelId::Trsymm => "trsymm",
            KernelId::Trtrmm => "trtrmm",
            KernelId::Gegesv => "gegesv",
            KernelId::Gesysv => "gesysv",
            KernelId::Getrsv => "getrsv",
            KernelId::Sygesv => "sygesv",
            KernelId::Sysysv => "sysysv",
            KernelId::Sytrsv => "sytrsv",
            KernelId::Pogesv => "pogesv",
            KernelId::Posysv => "posysv",
            KernelId::Potrsv => "potrsv",
            KernelId::Trsm => "trsm",
            KernelId::Trsysv => "trsysv",
            KernelId::Trtrsv => "trtrsv",
            KernelId::ExplicitInverse => "explicit-inverse",
            KernelId::ExplicitTranspose => "explicit-transpose",
        }
    }

    pub fn from_name(s: &str) -> Option<KernelId> {
        ALL_KERNELS.iter().copied().find(|k| k.name() == s)
    }

    pub fn is_solve(self) -> bool {
        matches!(
            self,
            KernelId::Gegesv
                | KernelId::Gesysv
                | KernelId::Getrsv
                | KernelId::Sygesv
                | KernelId::Sysysv
                | KernelId::Sytrsv
                | KernelId::Pogesv
                | KernelId::Posysv
                | KernelId::Potrsv
                | KernelId::Trsm
                | KernelId::Trsysv
                | KernelId::Trtrsv
        )
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, KernelId::ExplicitInverse | KernelId::ExplicitTranspose)
    }

    /// Number of free size dimensions: 3 when both operands are rectangular,
    /// 2 when one is necessarily square, 1 when both are.
    pub fn axis_count(self) -> usize {
        match self {
            KernelId::Gemm => 3,
            KernelId::Symm
            | KernelId::Trmm
            | KernelId::Trsm
            | KernelId::Gegesv
            | KernelId::Sygesv
            | KernelId::Pogesv => 2,
            KernelId::ExplicitTranspose => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of the structured operand (for products) or the coefficient
/// matrix (for solves) within the association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inverted {
    None,
    Left,
    Right,
}

/// Effective operand descriptor at one association. Triangularity already
/// accounts for transposition; `pending_transpose` is the residual flag that
/// only general-structure operands can carry into a kernel call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub structure: StructureKind,
    pub property: PropertyKind,
    pub pending_transpose: bool,
    pub pending_inverse: bool,
}

impl Features {
    pub fn new(structure: StructureKind, property: PropertyKind) -> Features {
        Features {
            structure,
            property,
            pending_transpose: false,
            pending_inverse: false,
        }
    }
}

/// Resolved call configuration: the effective operand features in call order
/// plus the side of the special operand. Together with the kernel id this
/// determines the piecewise cost branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallConfig {
    pub side: Side,
    pub left: Features,
    pub right: Features,
    /// Whether the chain positions of the result are in one size class.
    pub result_square: bool,
}

/// Pick the most specialized kernel for an association.
///
/// `inverted` states which operand (if any) carries an inversion; both cannot
/// be inverted because inversion propagation has already rewritten that case.
pub fn kernel_for(left: Features, right: Features, inverted: Inverted) -> (KernelId, Side) {
    use StructureKind::*;
    match inverted {
        Inverted::None => match (left.structure, right.structure) {
            (General, General) => (KernelId::Gemm, Side::Left),
            (Symmetric, General) => (KernelId::Symm, Side::Left),
            (General, Symmetric) => (KernelId::Symm, Side::Right),
            (LowerTri | UpperTri, General) => (KernelId::Trmm, Side::Left),
            (General, LowerTri | UpperTri) => (KernelId::Trmm, Side::Right),
            (Symmetric, Symmetric) => (KernelId::Sysymm, Side::Left),
            (LowerTri | UpperTri, Symmetric) => (KernelId::Trsymm, Side::Left),
            (Symmetric, LowerTri | UpperTri) => (KernelId::Trsymm, Side::Right),
            (LowerTri | UpperTri, LowerTri | UpperTri) => (KernelId::Trtrmm, Side::Left),
        },
        Inverted::Left => (solve_kernel(left, right.structure), Side::Left),
        Inverted::Right => (solve_kernel(right, left.structure), Side::Right),
    }
}

fn solve_kernel(coeff: Features, rhs: StructureKind) -> KernelId {
    use StructureKind::*;
    match (coeff.structure, rhs) {
        (General, General) => KernelId::Gegesv,
        (General, Symmetric) => KernelId::Gesysv,
        (General, LowerTri | UpperTri) => KernelId::Getrsv,
        (Symmetric, General) if coeff.property == PropertyKind::Spd => KernelId::Pogesv,
        (Symmetric, Symmetric) if coeff.property == PropertyKind::Spd => KernelId::Posysv,
        (Symmetric, LowerTri | UpperTri) if coeff.property == PropertyKind::Spd => KernelId::Potrsv,
        (Symmetric, General) => KernelId::Sygesv,
        (Symmetric, Symmetric) => KernelId::Sysysv,
        (Symmetric, LowerTri | UpperTri) => KernelId::Sytrsv,
        (LowerTri | UpperTri, General) => KernelId::Trsm,
        (LowerTri | UpperTri, Symmetric) => KernelId::Trsysv,
        (LowerTri | UpperTri, LowerTri | UpperTri) => KernelId::Trtrsv,
    }
}

/// Whether the call's transposition pattern is directly supported, i.e. no
/// general-structure operand carries a residual transpose in a slot the
/// kernel cannot transpose. Transposes on triangular operands were absorbed
/// into flipped triangularity, and symmetric operands never carry one.
pub fn pattern_supported(kernel: KernelId, config: &CallConfig) -> bool {
    let general_slot_fixed = |f: &Features| -> bool {
        f.structure == StructureKind::General && f.pending_transpose
    };
    match kernel {
        // gemm transposes either operand; the six-letter kernels have no
        // general operand; gesysv/getrsv transpose their general coefficient.
        KernelId::Gemm
        | KernelId::Sysymm
        | KernelId::Trsymm
        | KernelId::Trtrmm
        | KernelId::Gesysv
        | KernelId::Getrsv
        | KernelId::Sysysv
        | KernelId::Sytrsv
        | KernelId::Posysv
        | KernelId::Potrsv
        | KernelId::Trsysv
        | KernelId::Trtrsv => true,
        // symm transposes its general operand.
        KernelId::Symm => true,
        // trmm transposes only the triangular operand.
        KernelId::Trmm => match config.side {
            Side::Left => !general_slot_fixed(&config.right),
            Side::Right => !general_slot_fixed(&config.left),
        },
        // Solves with a general right-hand side never transpose it.
        KernelId::Gegesv | KernelId::Sygesv | KernelId::Pogesv | KernelId::Trsm => {
            match config.side {
                Side::Left => !general_slot_fixed(&config.right),
                Side::Right => !general_slot_fixed(&config.left),
            }
        }
        KernelId::ExplicitInverse | KernelId::ExplicitTranspose => true,
    }
}

// ---------------------------------------------------------------------------
// Cost formulas
// ---------------------------------------------------------------------------

/// Variables of a kernel cost formula: m = rows of the leftmost operand,
/// k = its columns, n = columns of the rightmost operand.
pub const VAR_M: usize = 0;
pub const VAR_K: usize = 1;
pub const VAR_N: usize = 2;

fn mono(coef: Rat, m: u8, k: u8, n: u8) -> Poly {
    Poly::monomial(3, coef, vec![m, k, n])
}

/// Piecewise branch of a kernel cost formula, resolved from a call config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CostBranch {
    Plain,
    SideLeft,
    SideRight,
    SameTriangularity,
    OppositeTriangularity,
    /// getrsv/potrsv cheap case: coefficient left with lower-triangular
    /// right-hand side, or coefficient right with upper-triangular one.
    SolveAligned,
    SolveOpposed,
}

/// Resolve the cost branch for a kernel call.
pub fn cost_branch(kernel: KernelId, config: &CallConfig) -> CostBranch {
    use KernelId::*;
    match kernel {
        Symm | Trmm | Trsm | Gegesv | Sygesv | Pogesv => match config.side {
            Side::Left => CostBranch::SideLeft,
            Side::Right => CostBranch::SideRight,
        },
        Trtrmm | Trtrsv => {
            if config.left.structure == config.right.structure {
                CostBranch::SameTriangularity
            } else {
                CostBranch::OppositeTriangularity
            }
        }
        Getrsv | Potrsv => {
            let rhs = match config.side {
                Side::Left => &config.right,
                Side::Right => &config.left,
            };
            let aligned = matches!(
                (config.side, rhs.structure),
                (Side::Left, StructureKind::LowerTri) | (Side::Right, StructureKind::UpperTri)
            );
            if aligned {
                CostBranch::SolveAligned
            } else {
                CostBranch::SolveOpposed
            }
        }
        _ => CostBranch::Plain,
    }
}

/// FLOP formula of a kernel branch, as a polynomial over (m, k, n).
/// Lower-order terms are omitted throughout.
pub fn cost_formula(kernel: KernelId, branch: CostBranch) -> Poly {
    use CostBranch::*;
    use KernelId::*;
    match (kernel, branch) {
        (Gemm, Plain) => mono(rat(2, 1), 1, 1, 1),
        (Symm, SideLeft) => mono(rat(2, 1), 2, 0, 1),
        (Symm, SideRight) => mono(rat(2, 1), 1, 0, 2),
        (Trmm, SideLeft) => mono(rat(1, 1), 2, 0, 1),
        (Trmm, SideRight) => mono(rat(1, 1), 1, 0, 2),
        (Sysymm, Plain) => mono(rat(2, 1), 3, 0, 0),
        (Trsymm, Plain) => mono(rat(1, 1), 3, 0, 0),
        (Trtrmm, SameTriangularity) => mono(rat(1, 3), 3, 0, 0),
        (Trtrmm, OppositeTriangularity) => mono(rat(2, 3), 3, 0, 0),
        (Gegesv, SideLeft) => {
            let mut p = mono(rat(2, 3), 3, 0, 0);
            p.add_assign(&mono(rat(2, 1), 2, 0, 1));
            p
        }
        (Gegesv, SideRight) => {
            let mut p = mono(rat(2, 3), 0, 0, 3);
            p.add_assign(&mono(rat(2, 1), 1, 0, 2));
            p
        }
        (Gesysv, Plain) => mono(rat(8, 3), 3, 0, 0),
        (Getrsv, SolveAligned) => mono(rat(2, 1), 3, 0, 0),
        (Getrsv, SolveOpposed) => mono(rat(8, 3), 3, 0, 0),
        (Sygesv, SideLeft) | (Pogesv, SideLeft) => {
            let mut p = mono(rat(1, 3), 3, 0, 0);
            p.add_assign(&mono(rat(2, 1), 2, 0, 1));
            p
        }
        (Sygesv, SideRight) | (Pogesv, SideRight) => {
            let mut p = mono(rat(1, 3), 0, 0, 3);
            p.add_assign(&mono(rat(2, 1), 1, 0, 2));
            p
        }
        (Sysysv, Plain) | (Sytrsv, Plain) | (Posysv, Plain) => mono(rat(7, 3), 3, 0, 0),
        (Potrsv, SolveAligned) => mono(rat(5, 3), 3, 0, 0),
        (Potrsv, SolveOpposed) => mono(rat(7, 3), 3, 0, 0),
        (Trsm, SideLeft) => mono(rat(1, 1), 2, 0, 1),
        (Trsm, SideRight) => mono(rat(1, 1), 1, 0, 2),
        (Trsysv, Plain) => mono(rat(1, 1), 3, 0, 0),
        (Trtrsv, SameTriangularity) => mono(rat(1, 3), 3, 0, 0),
        (Trtrsv, OppositeTriangularity) => mono(rat(1, 1), 3, 0, 0),
        // LU-based explicit inversion; explicit transposition moves data only.
        (ExplicitInverse, Plain) => mono(rat(2, 1), 3, 0, 0),
        (ExplicitTranspose, Plain) => Poly::zero(3),
        (k, b) => panic!("no cost branch {b:?} for kernel {k}"),
    }
}

/// Cost polynomial of a kernel call, resolved through its config.
pub fn cost_polynomial(kernel: KernelId, config: &CallConfig) -> Poly {
    cost_formula(kernel, cost_branch(kernel, config))
}

/// All piecewise branches a kernel can take (for table dumps and the cost
/// form analysis).
pub fn branches_of(kernel: KernelId) -> Vec<CostBranch> {
    use CostBranch::*;
    use KernelId::*;
    match kernel {
        Symm | Trmm | Trsm | Gegesv | Sygesv | Pogesv => vec![SideLeft, SideRight],
        Trtrmm | Trtrsv => vec![SameTriangularity, OppositeTriangularity],
        Getrsv | Potrsv => vec![SolveAligned, SolveOpposed],
        _ => vec![Plain],
    }
}

// ---------------------------------------------------------------------------
// Feature inference
// ---------------------------------------------------------------------------

/// Infer the features of an association's stored result from the effective
/// operand features. The rules only look at operand features; deeper
/// algebraic relations are deliberately ignored.
pub fn infer_result_features(config: &CallConfig) -> Features {
    use StructureKind::*;
    let l = &config.left;
    let r = &config.right;
    let structure = match (l.structure, r.structure) {
        (LowerTri, LowerTri) => LowerTri,
        (UpperTri, UpperTri) => UpperTri,
        _ => General,
    };
    let any_inverse = l.pending_inverse || r.pending_inverse;
    let property = if l.property == PropertyKind::Singular || r.property == PropertyKind::Singular
    {
        PropertyKind::Singular
    } else if !config.result_square {
        PropertyKind::Singular
    } else if l.property == PropertyKind::Orthogonal
        && r.property == PropertyKind::Orthogonal
        && !any_inverse
    {
        PropertyKind::Orthogonal
    } else {
        // Both operands invertible (SPD and orthogonal imply invertible) and
        // the result is square. SPD is never inferred for a product.
        PropertyKind::Invertible
    };
    Features::new(structure, property)
}

// ---------------------------------------------------------------------------
// Cost forms and the ratio-bound analysis
// ---------------------------------------------------------------------------

/// Shape of a kernel cost branch over a call triplet (a, b, c):
///
/// * Type I: `beta * a * b * c`
/// * Type II: `beta1 * x^3 + beta2 * x^2 * y` for the solves with a general
///   rectangular right-hand side (x is the coefficient dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CostForm {
    TypeI { beta: Rat },
    TypeII { cubic: Rat, quad: Rat },
}

/// Classify a kernel cost branch. Pseudo-kernels are excluded from the
/// analysis (explicit transposition is free, which would make ratios
/// unbounded, and neither is an association kernel).
pub fn cost_form(kernel: KernelId, branch: CostBranch) -> Option<CostForm> {
    if kernel.is_pseudo() {
        return None;
    }
    let poly = cost_formula(kernel, branch);
    let terms: Vec<(Vec<u8>, Rat)> = poly.terms().map(|(e, c)| (e.clone(), *c)).collect();
    match terms.len() {
        1 => Some(CostForm::TypeI { beta: terms[0].1 }),
        2 => {
            let cubic = terms
                .iter()
                .find(|(e, _)| e.iter().any(|&x| x == 3))
                .map(|(_, c)| *c)
                .expect("type II branch has a cubic term");
            let quad = terms
                .iter()
                .find(|(e, _)| e.iter().all(|&x| x < 3))
                .map(|(_, c)| *c)
                .expect("type II branch has a quadratic term");
            Some(CostForm::TypeII { cubic, quad })
        }
        _ => unreachable!("cost branches have one or two terms"),
    }
}

/// Largest `alpha` with `t_e <= alpha * t_o` over one ordered pair of cost
/// forms, maximized over the structural sub-cases in which the pair can meet.
pub fn pair_alpha(e: CostForm, o: CostForm) -> Rat {
    match (e, o) {
        (CostForm::TypeI { beta: be }, CostForm::TypeI { beta: bo }) => be / bo,
        (CostForm::TypeI { beta: be }, CostForm::TypeII { cubic, quad }) => {
            let bound_both_square = be / (cubic + quad);
            let bound_quad = be / quad;
            bound_both_square.max(bound_quad)
        }
        (CostForm::TypeII { cubic, quad }, CostForm::TypeI { beta: bo }) => (cubic + quad) / bo,
        (
            CostForm::TypeII { cubic: ce, quad: qe },
            CostForm::TypeII { cubic: co, quad: qo },
        ) => ce / co + qe / qo,
    }
}

/// Maximum pairwise `alpha` over a set of cost forms.
pub fn max_alpha_forms(forms: &[CostForm]) -> Rat {
    let mut best = rat(0, 1);
    for &e in forms {
        for &o in forms {
            best = best.max(pair_alpha(e, o));
        }
    }
    best
}

/// Maximum pairwise `alpha` over all branches of the given kernels.
pub fn max_alpha(kernels: &[KernelId]) -> Rat {
    let mut forms: Vec<CostForm> = Vec::new();
    for &k in kernels {
        for b in branches_of(k) {
            if let Some(f) = cost_form(k, b) {
                if !forms.contains(&f) {
                    forms.push(f);
                }
            }
        }
    }
    max_alpha_forms(&forms)
}

// ---------------------------------------------------------------------------
// Machine-readable dump
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct KernelRecord {
    pub id: &'static str,
    pub axis_count: usize,
    pub solve: bool,
    pub pseudo: bool,
    pub branches: Vec<BranchRecord>,
}

#[derive(Debug, Serialize)]
pub struct BranchRecord {
    pub branch: String,
    pub cost: String,
    pub form: String,
}

/// One record per kernel with every piecewise branch, for documentation
/// tests and the `dump-catalog` command.
pub fn dump_catalog() -> Vec<KernelRecord> {
    ALL_KERNELS
        .iter()
        .map(|&k| KernelRecord {
            id: k.name(),
            axis_count: k.axis_count(),
            solve: k.is_solve(),
            pseudo: k.is_pseudo(),
            branches: branches_of(k)
                .into_iter()
                .map(|b| BranchRecord {
                    branch: format!("{b:?}"),
                    cost: cost_formula(k, b).render(&|v| {
                        ["m", "k", "n"][v].to_string()
                    }),
                    form: match cost_form(k, b) {
                        None => "pseudo".to_string(),
                        Some(CostForm::TypeI { beta }) => {
                            format!("I(beta={})", crate::poly::format_rat(beta))
                        }
                        Some(CostForm::TypeII { cubic, quad }) => format!(
                            "II(b1={}, b2={})",
                            crate::poly::format_rat(cubic),
                            crate::poly::format_rat(quad)
                        ),
                    },
                })
                .collect(),
        })
        .collect()
}
