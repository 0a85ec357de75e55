//! Acceptance suite: one test per acceptance criterion, each printing a
//! pass line (run with `cargo test --test acceptance -- --nocapture` to see
//! them).

use gmc::catalog::{self, KernelId};
use gmc::costmodel::{load_timing_grids, write_synthetic_grid, CostModel};
use gmc::emit::{dispatch, emit_plan};
use gmc::experiment::{run_flop_study, sample_shape, StudyConfig};
use gmc::frontend::{
    normalize, parse, sample_instance, Instance, PropertyKind, Shape, StructureKind, UnaryOp,
};
use gmc::oracle::{
    condition_product, evaluate_variant, generate_test_matrices, reference_evaluate,
};
use gmc::poly::{rat, Poly};
use gmc::selection::{
    alpha_hat, base_set, expand_set_traced, CostMatrix, Objective, VariantPool, VariantSet,
};
use gmc::variants::{
    build_variant, build_variant_with, enumerate_trees, fanning_out_tree, BuildOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENUM_LIMIT: usize = 12;

fn shape(src: &str) -> Shape {
    normalize(&parse(src).unwrap()).unwrap()
}

/// Criterion 1: inversion propagation turns the triangular-times-inverted
/// chain into trsm + gegesv with cost 5m^3/3 + 2m^2 n, strictly better than
/// the direct getrsv + gemm route at 8m^3/3 + 2m^2 n.
#[test]
fn acceptance_1_worked_cost_example() {
    let s = shape(
        "Matrix L1 <LowerTri, Invertible>; Matrix G2 <General, Invertible>; \
         Matrix G3 <General, Singular>; X := L1 * G2^-1 * G3;",
    );
    let tree = fanning_out_tree(3, 0);

    // Classes are {q0,q1,q2} and {q3}; m is the canonical rep q0, n is q3.
    let m_cubed = vec![3u8, 0, 0, 0];
    let m2_n = vec![2u8, 0, 0, 1];

    let propagated = build_variant(&tree, &s);
    let expected = Poly::from_terms(4, &[(rat(5, 3), m_cubed.clone()), (rat(2, 1), m2_n.clone())]);
    assert_eq!(propagated.cost, expected, "propagated symbolic cost");

    let direct = build_variant_with(
        &tree,
        &s,
        BuildOptions {
            propagate_single_inversion: false,
        },
    );
    let expected_direct = Poly::from_terms(4, &[(rat(8, 3), m_cubed), (rat(2, 1), m2_n)]);
    assert_eq!(direct.cost, expected_direct, "direct symbolic cost");

    // Exact rational values at m = 100, n = 40.
    let q = [100u64, 100, 100, 40];
    assert_eq!(
        propagated.cost.eval_exact(&q),
        gmc::poly::BigRat::new(5_000_000 + 3 * 800_000, 3)
    );
    assert_eq!(
        direct.cost.eval_exact(&q),
        gmc::poly::BigRat::new(8_000_000 + 3 * 800_000, 3)
    );
    assert!(propagated.cost.eval_exact(&q) < direct.cost.eval_exact(&q));
    println!("[criterion 1] PASS: worked cost example 5m^3/3 + 2m^2n vs 8m^3/3 + 2m^2n");
}

/// Criterion 2: every kernel cost formula matches the catalog table exactly
/// in every piecewise branch, and the ratio-bound analysis returns 1, 2, 8
/// for the gemm-only, gemm+trmm, and full catalogs.
#[test]
fn acceptance_2_catalog_conformance() {
    use catalog::CostBranch::*;
    // (kernel, branch, terms over (m, k, n)) straight from the cost table.
    let m3 = |c: gmc::poly::Rat| vec![(c, vec![3u8, 0, 0])];
    let table: Vec<(KernelId, catalog::CostBranch, Vec<(gmc::poly::Rat, Vec<u8>)>)> = vec![
        (KernelId::Gemm, Plain, vec![(rat(2, 1), vec![1, 1, 1])]),
        (KernelId::Symm, SideLeft, vec![(rat(2, 1), vec![2, 0, 1])]),
        (KernelId::Symm, SideRight, vec![(rat(2, 1), vec![1, 0, 2])]),
        (KernelId::Trmm, SideLeft, vec![(rat(1, 1), vec![2, 0, 1])]),
        (KernelId::Trmm, SideRight, vec![(rat(1, 1), vec![1, 0, 2])]),
        (KernelId::Sysymm, Plain, m3(rat(2, 1))),
        (KernelId::Trsymm, Plain, m3(rat(1, 1))),
        (KernelId::Trtrmm, SameTriangularity, m3(rat(1, 3))),
        (KernelId::Trtrmm, OppositeTriangularity, m3(rat(2, 3))),
        (
            KernelId::Gegesv,
            SideLeft,
            vec![(rat(2, 3), vec![3, 0, 0]), (rat(2, 1), vec![2, 0, 1])],
        ),
        (
            KernelId::Gegesv,
            SideRight,
            vec![(rat(2, 3), vec![0, 0, 3]), (rat(2, 1), vec![1, 0, 2])],
        ),
        (KernelId::Gesysv, Plain, m3(rat(8, 3))),
        (KernelId::Getrsv, SolveAligned, m3(rat(2, 1))),
        (KernelId::Getrsv, SolveOpposed, m3(rat(8, 3))),
        (
            KernelId::Sygesv,
            SideLeft,
            vec![(rat(1, 3), vec![3, 0, 0]), (rat(2, 1), vec![2, 0, 1])],
        ),
        (
            KernelId::Sygesv,
            SideRight,
            vec![(rat(1, 3), vec![0, 0, 3]), (rat(2, 1), vec![1, 0, 2])],
        ),
        (KernelId::Sysysv, Plain, m3(rat(7, 3))),
        (KernelId::Sytrsv, Plain, m3(rat(7, 3))),
        (
            KernelId::Pogesv,
            SideLeft,
            vec![(rat(1, 3), vec![3, 0, 0]), (rat(2, 1), vec![2, 0, 1])],
        ),
        (
            KernelId::Pogesv,
            SideRight,
            vec![(rat(1, 3), vec![0, 0, 3]), (rat(2, 1), vec![1, 0, 2])],
        ),
        (KernelId::Posysv, Plain, m3(rat(7, 3))),
        (KernelId::Potrsv, SolveAligned, m3(rat(5, 3))),
        (KernelId::Potrsv, SolveOpposed, m3(rat(7, 3))),
        (KernelId::Trsm, SideLeft, vec![(rat(1, 1), vec![2, 0, 1])]),
        (KernelId::Trsm, SideRight, vec![(rat(1, 1), vec![1, 0, 2])]),
        (KernelId::Trsysv, Plain, m3(rat(1, 1))),
        (KernelId::Trtrsv, SameTriangularity, m3(rat(1, 3))),
        (KernelId::Trtrsv, OppositeTriangularity, m3(rat(1, 1))),
        (KernelId::ExplicitInverse, Plain, m3(rat(2, 1))),
        (KernelId::ExplicitTranspose, Plain, vec![]),
    ];
    // Every association kernel and branch is covered.
    let mut covered: Vec<(KernelId, catalog::CostBranch)> = Vec::new();
    for (kernel, branch, terms) in &table {
        let expected = Poly::from_terms(3, terms);
        assert_eq!(
            catalog::cost_formula(*kernel, *branch),
            expected,
            "{kernel} {branch:?}"
        );
        covered.push((*kernel, *branch));
    }
    for k in catalog::ALL_KERNELS {
        for b in catalog::branches_of(k) {
            assert!(covered.contains(&(k, b)), "missing table row {k} {b:?}");
        }
    }

    assert_eq!(catalog::max_alpha(&[KernelId::Gemm]), rat(1, 1));
    assert_eq!(
        catalog::max_alpha(&[KernelId::Gemm, KernelId::Trmm]),
        rat(2, 1)
    );
    assert_eq!(catalog::max_alpha(&catalog::ASSOCIATION_KERNELS), rat(8, 1));
    println!("[criterion 2] PASS: catalog formulas conform; alpha-hat = 1 / 2 / 8");
}

/// Criterion 3: on random shapes the fanning-out set's penalty never exceeds
/// 15, and on every instance the fanning-out variant pivoted at any minimal
/// size stays below 2 alpha-hat times the optimum (alpha-hat = 1 for
/// all-general chains, so those are within 2x).
#[test]
fn acceptance_3_theory_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e0);
    let mut shapes: Vec<Shape> = Vec::new();
    for _ in 0..25 {
        shapes.push(sample_shape(5, false, &mut rng));
    }
    for _ in 0..25 {
        shapes.push(sample_shape(6, false, &mut rng));
    }
    // All-general chains tighten the bound to 2x.
    for n in [5, 6, 5, 6, 5, 6, 5, 6, 5, 6] {
        let decls: String = (1..=n)
            .map(|i| format!("Matrix A{i} <General, Singular>; "))
            .collect();
        let chain: Vec<String> = (1..=n).map(|i| format!("A{i}")).collect();
        shapes.push(shape(&format!("{decls}X := {};", chain.join(" * "))));
    }

    let mut checked = 0usize;
    for (si, s) in shapes.iter().enumerate() {
        let pool = VariantPool::enumerate(s, ENUM_LIMIT).unwrap();
        let alpha = alpha_hat(&pool);
        let all_general = (0..s.n())
            .all(|i| s.decl(i).structure == StructureKind::General && s.op(i) == UnaryOp::None);
        if all_general {
            assert_eq!(alpha, rat(1, 1), "all-general shapes use gemm only");
        }
        let alpha = *alpha.numer() as f64 / *alpha.denom() as f64;
        let fanning = pool.fanning_out_set();

        let mut inst_rng = ChaCha8Rng::seed_from_u64(0x7e1 + si as u64);
        for _ in 0..200 {
            let q = sample_instance(s.classes(), 2, 1000, &mut inst_rng);
            let costs = pool.costs(&CostModel::Flops, &q);
            let opt = costs.iter().copied().fold(f64::INFINITY, f64::min);
            let in_fanning = fanning
                .iter()
                .map(|&i| costs[i])
                .fold(f64::INFINITY, f64::min);
            let penalty = in_fanning / opt - 1.0;
            assert!(
                penalty <= 15.0,
                "shape {} instance {:?}: fanning-out penalty {penalty}",
                s.signature(),
                q.0
            );
            let q_min = *q.0.iter().min().unwrap();
            for m in 0..=s.n() {
                if q.0[m] != q_min {
                    continue;
                }
                let em = costs[pool.fanning_out_index(m)];
                assert!(
                    em < 2.0 * alpha * opt,
                    "shape {} instance {:?}: E^{m} cost {em} vs 2*{alpha}*{opt}",
                    s.signature(),
                    q.0
                );
            }
            checked += 1;
        }
    }
    println!(
        "[criterion 3] PASS: penalty <= 15 and E^m < 2*alpha*opt on {checked} instances across {} shapes",
        shapes.len()
    );
}

/// Criterion 4: desk-scale ratio study, 200 random shapes (n = 5, ten-option
/// feature set, at least one rectangular matrix) x 200 validation instances.
/// Base-set ratio stays below 2.1 everywhere and at most 1.2 on >= 90% of
/// instances; expanding by two pushes >= 95% of instances to within 1.05.
#[test]
fn acceptance_4_ratio_distribution() {
    let cfg = StudyConfig {
        n: 5,
        shapes: 200,
        train: 1000,
        validate: 200,
        lo: 2,
        hi: 1000,
        seed: 42,
        expand: 2,
        objective: Objective::Avg,
        enum_limit: ENUM_LIMIT,
    };
    let result = run_flop_study(&cfg).unwrap();
    assert_eq!(result.rows.len(), 200 * 200);

    let base_max = result.max_ratio(0);
    let base_12 = result.fraction_at_most(0, 1.2);
    let s2_105 = result.fraction_at_most(2, 1.05);
    assert!(base_max < 2.1, "base-set max ratio {base_max}");
    assert!(base_12 >= 0.90, "base-set <=1.2 fraction {base_12}");
    assert!(s2_105 >= 0.95, "expanded-by-2 <=1.05 fraction {s2_105}");
    println!(
        "[criterion 4] PASS: base max {base_max:.4}, base <=1.2 on {:.1}%, +2 <=1.05 on {:.1}%",
        100.0 * base_12,
        100.0 * s2_105
    );
}

/// Criterion 5: left-to-right evaluation of G1 G2 G3 at q = (s, 1, s, 1)
/// with s = 1000 costs exactly 1000 times the optimum.
#[test]
fn acceptance_5_left_to_right_pathology() {
    let s = shape(
        "Matrix G1 <General, Singular>; Matrix G2 <General, Singular>; \
         Matrix G3 <General, Singular>; X := G1 * G2 * G3;",
    );
    let q = Instance(vec![1000, 1, 1000, 1]);
    let ltr = build_variant(&fanning_out_tree(3, 0), &s);
    let ltr_cost = ltr.cost.eval_exact(&q.as_u64());
    let pool = VariantPool::enumerate(&s, ENUM_LIMIT).unwrap();
    let opt = pool
        .variants
        .iter()
        .map(|v| v.cost.eval_exact(&q.as_u64()))
        .min()
        .unwrap();
    let ratio = ltr_cost / opt.clone();
    assert_eq!(ratio, gmc::poly::BigRat::new(1000, 1), "exact ratio");
    assert!(ratio >= gmc::poly::BigRat::new(100, 1));
    println!("[criterion 5] PASS: left-to-right ratio over optimum is exactly 1000");
}

/// Valid random shapes over the full feature set (all structures and
/// properties, all four operators), for algebraic stress testing.
fn sample_rich_shape<R: Rng>(n: usize, rng: &mut R) -> Shape {
    use PropertyKind::*;
    use StructureKind::*;
    let structures = [General, Symmetric, LowerTri, UpperTri];
    let ops = [
        UnaryOp::None,
        UnaryOp::Transpose,
        UnaryOp::Inverse,
        UnaryOp::InverseTranspose,
    ];
    let mut decls = Vec::new();
    let mut operands = Vec::new();
    for i in 0..n {
        loop {
            let structure = structures[rng.gen_range(0..structures.len())];
            let property = match structure {
                Symmetric => [Singular, Invertible, Spd, Orthogonal][rng.gen_range(0..4)],
                General => [Singular, Invertible, Orthogonal][rng.gen_range(0..3)],
                // Triangular orthogonal is the identity; keep it out so the
                // chain length stays n after normalization.
                LowerTri | UpperTri => [Singular, Invertible][rng.gen_range(0..2)],
            };
            let op = ops[rng.gen_range(0..ops.len())];
            if op.inverts() && !property.is_invertible() {
                continue;
            }
            decls.push(gmc::frontend::MatrixDecl {
                name: format!("M{}", i + 1),
                structure,
                property,
            });
            operands.push(gmc::frontend::ChainOperand { decl: i, op });
            break;
        }
    }
    normalize(&Shape::assemble(decls, operands, "X".to_string())).unwrap()
}

/// Criterion 6: every enumerated variant evaluates the chain to the same
/// matrix as the straight left-to-right reference with explicit inverses,
/// within 1e-8 scaled by the product of operand condition estimates.
#[test]
fn acceptance_6_algebraic_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa15);
    let mut triples = 0usize;
    let mut variants_checked = 0usize;
    while triples < 300 {
        let n = rng.gen_range(2..=5);
        let s = if triples % 2 == 0 {
            normalize(&sample_shape(n, false, &mut rng)).unwrap()
        } else {
            sample_rich_shape(n, &mut rng)
        };
        let q = sample_instance(s.classes(), 2, 30, &mut rng);
        let mats = generate_test_matrices(&s, &q, &mut rng);
        let reference = match reference_evaluate(&s, &mats) {
            Ok(r) => r,
            Err(e) => panic!("reference evaluation failed on {}: {e}", s.signature()),
        };
        let tol = 1e-8 * condition_product(&s, &mats);
        let denom = reference.frobenius().max(f64::MIN_POSITIVE);
        for tree in enumerate_trees(s.n(), ENUM_LIMIT).unwrap() {
            let v = build_variant(&tree, &s);
            let got = evaluate_variant(&v, &mats)
                .unwrap_or_else(|e| panic!("variant failed on {}: {e}", s.signature()));
            let rel = got.sub(&reference).frobenius() / denom;
            assert!(
                rel <= tol,
                "shape {} sizes {:?} tree {}: error {rel} > tol {tol}",
                s.signature(),
                q.0,
                tree
            );
            variants_checked += 1;
        }
        triples += 1;
    }
    println!(
        "[criterion 6] PASS: {variants_checked} variant evaluations across {triples} triples matched the reference"
    );
}

/// Criterion 7: the greedy expansion keeps its contract on randomized runs:
/// objective non-increasing per iteration, early exit only when nothing
/// strictly improves, the initial set is preserved, and the cardinality cap
/// holds.
#[test]
fn acceptance_7_expansion_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa16);
    for run in 0..100 {
        let n = rng.gen_range(3..=6);
        let s = sample_shape(n, rng.gen_bool(0.5), &mut rng);
        let pool = VariantPool::enumerate(&s, ENUM_LIMIT).unwrap();
        let n_inst = rng.gen_range(5..40);
        let mut inst_rng = ChaCha8Rng::seed_from_u64(0xa17 + run);
        let instances: Vec<Instance> = (0..n_inst)
            .map(|_| sample_instance(s.classes(), 2, 1000, &mut inst_rng))
            .collect();
        let kind = if run % 2 == 0 {
            Objective::Avg
        } else {
            Objective::Max
        };
        let z0_size = rng.gen_range(0..=pool.len().min(3));
        let mut z0: Vec<usize> = Vec::new();
        while z0.len() < z0_size {
            let c = rng.gen_range(0..pool.len());
            if !z0.contains(&c) {
                z0.push(c);
            }
        }
        let z0 = VariantSet::new(z0);
        let k = rng.gen_range(z0.len()..=pool.len());

        let (out, trace) =
            expand_set_traced(&pool, &CostModel::Flops, &instances, kind, k, &z0);

        assert!(out.len() <= k.max(z0.len()));
        assert!(out.len() <= k);
        for m in &z0.members {
            assert!(out.members.contains(m), "initial member dropped");
        }
        for m in &out.members {
            assert!(*m < pool.len());
        }
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {trace:?}");
            assert!(w[1] < w[0], "non-strict addition accepted: {trace:?}");
        }
        // Early exit only when no candidate strictly improves.
        if out.len() < k {
            let matrix = CostMatrix::build(&pool, &CostModel::Flops, &instances);
            let best = matrix.objective(&out.members, kind);
            for d in 0..pool.len() {
                if out.members.contains(&d) {
                    continue;
                }
                let mut trial = out.members.clone();
                trial.push(d);
                assert!(
                    matrix.objective(&trial, kind) >= best,
                    "early exit despite a strict improver"
                );
            }
        }
    }
    println!("[criterion 7] PASS: expansion contract held on 100 randomized runs");
}

/// Criterion 8: dispatch returns the argmin-cost member on random instances
/// (checked by brute force), ties resolve to the lowest index, and scaling
/// all kernel rates uniformly never changes the chosen index.
#[test]
fn acceptance_8_dispatch_correctness() {
    let sources = [
        "Matrix G1 <General, Singular>; Matrix L <LowerTri, Invertible>; \
         Matrix U <UpperTri, Singular>; Matrix G2 <General, Singular>; \
         X := G1 * L^-1 * U * G2^T;",
        "Matrix A <General, Singular>; Matrix B <General, Singular>; \
         Matrix C <General, Singular>; X := A * B * C;",
    ];
    let mut grid_csv = Vec::new();
    write_synthetic_grid(&mut grid_csv, 42).unwrap();
    let (tm, _) = load_timing_grids(grid_csv.as_slice()).unwrap();

    let mut total = 0usize;
    for src in sources {
        let s = shape(src);
        let pool = VariantPool::enumerate(&s, ENUM_LIMIT).unwrap();
        for model in [CostModel::Flops, CostModel::Time(tm.clone())] {
            let mut train_rng = ChaCha8Rng::seed_from_u64(0xd15);
            let train: Vec<Instance> = (0..200)
                .map(|_| sample_instance(s.classes(), 2, 1000, &mut train_rng))
                .collect();
            let (set, _) = base_set(&pool, &model, &train);
            let plan = emit_plan(&s, &pool, &set, &model);
            let doubled = plan.with_scaled_rates(2.0);
            let halved = plan.with_scaled_rates(0.5);

            let mut rng = ChaCha8Rng::seed_from_u64(0xd16);
            for _ in 0..1000 {
                let q = sample_instance(s.classes(), 2, 1000, &mut rng);
                let picked = dispatch(&plan, &q).unwrap();
                // Brute force over the plan's own evaluators.
                let costs: Vec<f64> = (0..plan.variants.len())
                    .map(|i| plan.variant_cost(i, &q).unwrap())
                    .collect();
                let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(costs[picked], min, "dispatch not argmin at {:?}", q.0);
                let first_argmin = costs.iter().position(|&c| c == min).unwrap();
                assert_eq!(picked, first_argmin, "tie not broken to lowest index");
                assert_eq!(dispatch(&doubled, &q).unwrap(), picked, "2x rate scaling");
                assert_eq!(dispatch(&halved, &q).unwrap(), picked, "0.5x rate scaling");
                total += 1;
            }
        }
    }

    // Exact tie: all sizes equal makes both parenthesizations of an
    // all-general 3-chain cost the same; index 0 must win.
    let s = shape(
        "Matrix A <General, Singular>; Matrix B <General, Singular>; \
         Matrix C <General, Singular>; X := A * B * C;",
    );
    let pool = VariantPool::enumerate(&s, ENUM_LIMIT).unwrap();
    let plan = emit_plan(
        &s,
        &pool,
        &VariantSet::new((0..pool.len()).collect()),
        &CostModel::Flops,
    );
    assert_eq!(dispatch(&plan, &Instance(vec![9, 9, 9, 9])).unwrap(), 0);
    println!("[criterion 8] PASS: dispatch argmin verified on {total} instances, ties and rate scaling included");
}

/// Criterion 9: two identically-seeded compile + report runs produce
/// byte-identical plan and CSV outputs.
#[test]
fn acceptance_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("chain.gmc");
    std::fs::write(
        &src,
        "Matrix G1 <General, Singular>; Matrix L <LowerTri, Invertible>; \
         Matrix U <UpperTri, Singular>; Matrix G2 <General, Singular>; \
         X := G1 * L^-1 * U * G2^T;",
    )
    .unwrap();

    let run_once = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let plan = dir.path().join(format!("{tag}.gmcplan"));
        let rendered = dir.path().join(format!("{tag}.txt"));
        let report = dir.path().join(format!("{tag}.csv"));
        let code = gmc::cli::run([
            "gmc",
            "compile",
            src.to_str().unwrap(),
            "-o",
            plan.to_str().unwrap(),
            "--expand",
            "1",
            "--seed",
            "42",
            "--render",
            "default",
            "--render-out",
            rendered.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let code = gmc::cli::run([
            "gmc",
            "report",
            "--shape",
            src.to_str().unwrap(),
            "--plan",
            plan.to_str().unwrap(),
            "-o",
            report.to_str().unwrap(),
            "--validate",
            "100",
            "--seed",
            "42",
        ]);
        assert_eq!(code, 0);
        (
            std::fs::read(plan).unwrap(),
            std::fs::read(rendered).unwrap(),
            std::fs::read(report).unwrap(),
        )
    };

    let first = run_once("a");
    let second = run_once("b");
    assert_eq!(first.0, second.0, "plan bytes differ");
    assert_eq!(first.1, second.1, "rendered bytes differ");
    assert_eq!(first.2, second.2, "report bytes differ");
    println!("[criterion 9] PASS: compile + report outputs are byte-identical across runs");
}
