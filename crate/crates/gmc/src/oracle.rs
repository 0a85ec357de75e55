//! Ground truth: exhaustive optimal cost over all parenthesizations and a
//! reference interpreter with naive dense kernels, used to validate that
//! every constructed variant evaluates the chain correctly.

use crate::catalog::KernelId;
use crate::costmodel::CostModel;
use crate::frontend::{Instance, PropertyKind, Shape, StructureKind, UnaryOp};
use crate::variants::{
    build_variant, enumerate_trees, EnumError, OperandRef, ParenTree, Variant,
};
use rand::Rng;
use thiserror::Error;

const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>, // row-major
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error("singular system encountered (pivot below 1e-12 of row scale)")]
    SingularSystem,
    #[error("operand {0} has size {1}x{2}, expected {3}x{4}")]
    SizeMismatch(usize, usize, usize, usize, usize),
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut c = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    c[(i, j)] += a * other[(k, j)];
                }
            }
        }
        c
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// Naive solvers
// ---------------------------------------------------------------------------

struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

fn lu_factor(a: &DenseMatrix) -> Result<LuFactors, OracleError> {
    assert!(a.is_square());
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut piv, mut best) = (k, lu[(k, k)].abs());
        for i in k + 1..n {
            if lu[(i, k)].abs() > best {
                piv = i;
                best = lu[(i, k)].abs();
            }
        }
        let row_scale: f64 = (0..n)
            .map(|j| lu[(piv, j)].abs())
            .fold(0.0, f64::max)
            .max(1.0);
        if best < PIVOT_TOLERANCE * row_scale {
            return Err(OracleError::SingularSystem);
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            perm.swap(k, piv);
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

/// Solve A X = B with LU and partial pivoting.
fn lu_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    let f = lu_factor(a)?;
    let n = a.rows;
    let mut x = DenseMatrix::zeros(n, b.cols);
    for i in 0..n {
        for j in 0..b.cols {
            x[(i, j)] = b[(f.perm[i], j)];
        }
    }
    for col in 0..b.cols {
        for i in 1..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= f.lu[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in i + 1..n {
                s -= f.lu[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / f.lu[(i, i)];
        }
    }
    Ok(x)
}

fn inverse(a: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    lu_solve(a, &DenseMatrix::identity(a.rows))
}

/// Forward/back substitution for triangular A X = B.
fn tri_solve(a: &DenseMatrix, lower: bool, b: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    let n = a.rows;
    let mut x = b.clone();
    for col in 0..b.cols {
        if lower {
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= a[(i, k)] * x[(k, col)];
                }
                let d = a[(i, i)];
                if d.abs() < PIVOT_TOLERANCE {
                    return Err(OracleError::SingularSystem);
                }
                x[(i, col)] = s / d;
            }
        } else {
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in i + 1..n {
                    s -= a[(i, k)] * x[(k, col)];
                }
                let d = a[(i, i)];
                if d.abs() < PIVOT_TOLERANCE {
                    return Err(OracleError::SingularSystem);
                }
                x[(i, col)] = s / d;
            }
        }
    }
    Ok(x)
}

/// Cholesky solve for symmetric positive-definite A X = B.
fn chol_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    let n = a.rows;
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(OracleError::SingularSystem);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    let y = tri_solve(&l, true, b)?;
    tri_solve(&l.transpose(), false, &y)
}

// ---------------------------------------------------------------------------
// Variant and reference evaluation
// ---------------------------------------------------------------------------

fn solve_for(
    kernel: KernelId,
    coeff: &DenseMatrix,
    coeff_lower_hint: bool,
    rhs: &DenseMatrix,
) -> Result<DenseMatrix, OracleError> {
    match kernel {
        KernelId::Trsm | KernelId::Trsysv | KernelId::Trtrsv => {
            tri_solve(coeff, coeff_lower_hint, rhs)
        }
        KernelId::Pogesv | KernelId::Posysv | KernelId::Potrsv => chol_solve(coeff, rhs),
        _ => lu_solve(coeff, rhs),
    }
}

/// Execute a variant's kernel calls with naive dense algorithms.
pub fn evaluate_variant(
    variant: &Variant,
    matrices: &[DenseMatrix],
) -> Result<DenseMatrix, OracleError> {
    let mut buffers: Vec<Option<DenseMatrix>> = vec![None; variant.calls.len() + 1];
    let fetch = |buffers: &Vec<Option<DenseMatrix>>, r: OperandRef| -> DenseMatrix {
        match r {
            OperandRef::Leaf(i) => matrices[i - 1].clone(),
            OperandRef::Buf(i) => buffers[i].clone().expect("buffer written before use"),
        }
    };

    for call in &variant.calls {
        let mut left = fetch(&buffers, call.left.source);
        if call.left.trans {
            left = left.transpose();
        }
        let mut right = fetch(&buffers, call.right.source);
        if call.right.trans {
            right = right.transpose();
        }
        let out = match (call.left.inv, call.right.inv) {
            (false, false) => left.matmul(&right),
            (true, false) => {
                // Solve A X = B where A is the left operand.
                let lower = call.left.eff_structure() == StructureKind::LowerTri;
                solve_for(call.kernel, &left, lower, &right)?
            }
            (false, true) => {
                // Solve X A = B, i.e. A^T X^T = B^T.
                let lower_t = call.right.eff_structure().transposed() == StructureKind::LowerTri;
                solve_for(call.kernel, &right.transpose(), lower_t, &left.transpose())?
                    .transpose()
            }
            (true, true) => unreachable!("both operands inverted after step 1"),
        };
        buffers[call.out] = Some(out);
    }

    let result_ref = match variant.calls.last() {
        Some(c) => OperandRef::Buf(c.out),
        None => OperandRef::Leaf(1),
    };
    let mut result = fetch(&buffers, result_ref);

    if let Some(p) = &variant.pseudo {
        match p.kernel {
            KernelId::ExplicitInverse => {
                result = inverse(&result)?;
                if p.also_transpose {
                    result = result.transpose();
                }
            }
            KernelId::ExplicitTranspose => {
                result = result.transpose();
            }
            other => unreachable!("pseudo-call with kernel {other}"),
        }
    }
    Ok(result)
}

/// Left-to-right evaluation of the shape with explicitly materialized
/// operators; the baseline the variant path is checked against.
pub fn reference_evaluate(
    shape: &Shape,
    matrices: &[DenseMatrix],
) -> Result<DenseMatrix, OracleError> {
    let mut acc: Option<DenseMatrix> = None;
    for i in 0..shape.n() {
        let mut m = matrices[i].clone();
        match shape.op(i) {
            UnaryOp::None => {}
            UnaryOp::Transpose => m = m.transpose(),
            UnaryOp::Inverse => m = inverse(&m)?,
            UnaryOp::InverseTranspose => m = inverse(&m)?.transpose(),
        }
        acc = Some(match acc {
            None => m,
            Some(a) => a.matmul(&m),
        });
    }
    Ok(acc.expect("non-empty chain"))
}

/// Frobenius-norm condition estimate; 1.0 for matrices that are not square
/// or not invertible (they are never solved against).
pub fn condition_estimate(m: &DenseMatrix) -> f64 {
    if !m.is_square() {
        return 1.0;
    }
    match inverse(m) {
        Ok(inv) => (m.frobenius() * inv.frobenius()).max(1.0),
        Err(_) => 1.0,
    }
}

/// Product of per-operand condition estimates; scales the comparison
/// tolerance since solves amplify rounding by the coefficient's conditioning.
/// Operands declared singular contribute 1 (nothing ever solves with them).
pub fn condition_product(shape: &Shape, matrices: &[DenseMatrix]) -> f64 {
    (0..shape.n())
        .map(|i| {
            if shape.decl(i).property.is_invertible() {
                condition_estimate(&matrices[i])
            } else {
                1.0
            }
        })
        .product()
}

// ---------------------------------------------------------------------------
// Test-matrix generation
// ---------------------------------------------------------------------------

/// Random matrices matching the shape's features at the given instance.
/// Invertible operands are made diagonally dominant, SPD ones are built as
/// A^T A + n I, orthogonal ones come from a QR factorization.
pub fn generate_test_matrices<R: Rng>(
    shape: &Shape,
    q: &Instance,
    rng: &mut R,
) -> Vec<DenseMatrix> {
    (0..shape.n())
        .map(|i| {
            let (vr, vc) = (q.0[i] as usize, q.0[i + 1] as usize);
            // The stored matrix of a transposed operand has swapped dims.
            let (rows, cols) = if shape.op(i).transposes() {
                (vc, vr)
            } else {
                (vr, vc)
            };
            let d = shape.decl(i);
            generate_matrix(d.structure, d.property, rows, cols, rng)
        })
        .collect()
}

pub fn generate_matrix<R: Rng>(
    structure: StructureKind,
    property: PropertyKind,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in &mut m.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    match structure {
        StructureKind::General => match property {
            PropertyKind::Orthogonal => {
                m = qr_q(&m);
            }
            PropertyKind::Invertible if rows == cols => diag_dominate(&mut m),
            _ => {}
        },
        StructureKind::Symmetric => {
            match property {
                PropertyKind::Spd => {
                    // A^T A + n I: symmetric and safely positive-definite.
                    let at_a = m.transpose().matmul(&m);
                    m = at_a;
                    for i in 0..rows {
                        m[(i, i)] += rows as f64;
                    }
                }
                PropertyKind::Orthogonal => {
                    // Householder reflector: symmetric and orthogonal.
                    let v: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm2: f64 = v.iter().map(|x| x * x).sum();
                    m = DenseMatrix::identity(rows);
                    for i in 0..rows {
                        for j in 0..rows {
                            m[(i, j)] -= 2.0 * v[i] * v[j] / norm2;
                        }
                    }
                }
                _ => {
                    let t = m.transpose();
                    for i in 0..rows {
                        for j in 0..cols {
                            m[(i, j)] = 0.5 * (m[(i, j)] + t[(i, j)]);
                        }
                    }
                    if property == PropertyKind::Invertible {
                        diag_dominate(&mut m);
                    }
                }
            }
        }
        StructureKind::LowerTri | StructureKind::UpperTri => {
            if property == PropertyKind::Orthogonal {
                // Triangular orthogonal is the identity.
                m = DenseMatrix::identity(rows);
            } else {
                for i in 0..rows {
                    for j in 0..cols {
                        let keep = if structure == StructureKind::LowerTri {
                            j <= i
                        } else {
                            j >= i
                        };
                        if !keep {
                            m[(i, j)] = 0.0;
                        }
                    }
                }
                if property.is_invertible() {
                    diag_dominate(&mut m);
                }
            }
        }
    }
    m
}

fn diag_dominate(m: &mut DenseMatrix) {
    let n = m.rows.min(m.cols);
    for i in 0..n {
        let row_sum: f64 = (0..m.cols).map(|j| m[(i, j)].abs()).sum();
        let sign = if m[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        m[(i, i)] = sign * (row_sum + 1.0);
    }
}

/// Q factor of a Householder QR factorization of a square matrix.
fn qr_q(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows;
    let mut r = a.clone();
    let mut q = DenseMatrix::identity(n);
    for k in 0..n.saturating_sub(1) {
        let mut v = vec![0.0; n];
        let mut norm = 0.0;
        for i in k..n {
            v[i] = r[(i, k)];
            norm += v[i] * v[i];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        v[k] += if v[k] >= 0.0 { norm } else { -norm };
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // Apply the reflector to R and accumulate into Q.
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                r[(i, j)] -= f * v[i];
            }
        }
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i] * q[(j, i)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                q[(j, i)] -= f * v[i];
            }
        }
    }
    q
}

// ---------------------------------------------------------------------------
// Optimal cost
// ---------------------------------------------------------------------------

/// Minimum cost over every parenthesization's variant; ties go to the first
/// tree in enumeration order.
pub fn optimal_cost(
    shape: &Shape,
    q: &Instance,
    model: &CostModel,
    limit: usize,
) -> Result<(f64, ParenTree), OracleError> {
    let trees = enumerate_trees(shape.n(), limit)?;
    let mut best: Option<(f64, ParenTree)> = None;
    for t in trees {
        let v = build_variant(&t, shape);
        let c = model.variant_cost(&v, q);
        if best.as_ref().map_or(true, |(b, _)| c < *b) {
            best = Some((c, t));
        }
    }
    Ok(best.expect("at least one tree"))
}

/// Classical matrix-chain dynamic program over gemm FLOP counts (2 m k n),
/// an independent cross-check of the enumeration for all-general chains.
pub fn classic_chain_flops(dims: &[u64]) -> u64 {
    let n = dims.len() - 1;
    let mut dp = vec![vec![0u64; n + 1]; n + 1];
    for len in 2..=n {
        for i in 0..=n - len {
            let j = i + len;
            dp[i][j] = (i + 1..j)
                .map(|k| dp[i][k] + dp[k][j] + 2 * dims[i] * dims[k] * dims[j])
                .min()
                .unwrap();
        }
    }
    dp[0][n]
}
