//! Random-shape generation and the FLOP-ratio study harness: sweep random
//! shapes, train a base set per shape, optionally expand it, and measure
//! per-instance cost ratios over the exhaustive optimum on validation
//! instances.

use crate::costmodel::CostModel;
use crate::frontend::{
    sample_instance, ChainOperand, Instance, MatrixDecl, PropertyKind, Shape, StructureKind,
    UnaryOp,
};
use crate::selection::{base_set, expand_set_traced, CostMatrix, Objective, VariantPool};
use crate::variants::EnumError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The ten per-matrix feature options used in the ratio studies: a possibly
/// rectangular singular general matrix, an inverted general matrix, SPD
/// possibly inverted, and upper/lower triangular either singular,
/// non-singular, or inverted. No transpositions.
pub const FEATURE_OPTIONS: [(StructureKind, PropertyKind, UnaryOp); 10] = [
    (StructureKind::General, PropertyKind::Singular, UnaryOp::None),
    (StructureKind::General, PropertyKind::Invertible, UnaryOp::Inverse),
    (StructureKind::Symmetric, PropertyKind::Spd, UnaryOp::None),
    (StructureKind::Symmetric, PropertyKind::Spd, UnaryOp::Inverse),
    (StructureKind::LowerTri, PropertyKind::Singular, UnaryOp::None),
    (StructureKind::LowerTri, PropertyKind::Invertible, UnaryOp::None),
    (StructureKind::LowerTri, PropertyKind::Invertible, UnaryOp::Inverse),
    (StructureKind::UpperTri, PropertyKind::Singular, UnaryOp::None),
    (StructureKind::UpperTri, PropertyKind::Invertible, UnaryOp::None),
    (StructureKind::UpperTri, PropertyKind::Invertible, UnaryOp::Inverse),
];

/// Sample a random shape from the ten-option feature set. Option 0 (singular
/// general, no operator) is the only one that leaves a matrix rectangular;
/// with `require_rectangular` the draw repeats until one is present.
pub fn sample_shape<R: Rng>(n: usize, require_rectangular: bool, rng: &mut R) -> Shape {
    loop {
        let picks: Vec<usize> = (0..n)
            .map(|_| rng.gen_range(0..FEATURE_OPTIONS.len()))
            .collect();
        if require_rectangular && !picks.contains(&0) {
            continue;
        }
        let decls = picks
            .iter()
            .enumerate()
            .map(|(i, &p)| MatrixDecl {
                name: format!("M{}", i + 1),
                structure: FEATURE_OPTIONS[p].0,
                property: FEATURE_OPTIONS[p].1,
            })
            .collect();
        let operands = picks
            .iter()
            .enumerate()
            .map(|(i, &p)| ChainOperand {
                decl: i,
                op: FEATURE_OPTIONS[p].2,
            })
            .collect();
        return Shape::assemble(decls, operands, "X".to_string());
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n: usize,
    pub shapes: usize,
    pub train: usize,
    pub validate: usize,
    pub lo: u32,
    pub hi: u32,
    pub seed: u64,
    /// Expansion steps beyond the base set (each adds at most one variant).
    pub expand: usize,
    pub objective: Objective,
    pub enum_limit: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n: 5,
            shapes: 50,
            train: 1000,
            validate: 100,
            lo: 2,
            hi: 1000,
            seed: 42,
            expand: 2,
            objective: Objective::Avg,
            enum_limit: crate::variants::DEFAULT_ENUM_LIMIT,
        }
    }
}

/// Ratios over the optimum for one validation instance of one shape.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub shape_idx: usize,
    pub instance: Instance,
    /// Base set first, then one entry per expansion step.
    pub ratios: Vec<f64>,
    pub ratio_ltr: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub shapes: Vec<String>,
    pub rows: Vec<StudyRow>,
    /// Column labels for `StudyRow::ratios`.
    pub set_labels: Vec<String>,
}

impl StudyResult {
    /// Fraction of rows whose ratio in column `col` is at most `threshold`.
    pub fn fraction_at_most(&self, col: usize, threshold: f64) -> f64 {
        let hits = self
            .rows
            .iter()
            .filter(|r| r.ratios[col] <= threshold)
            .count();
        hits as f64 / self.rows.len() as f64
    }

    pub fn max_ratio(&self, col: usize) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ratios[col])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = vec![
            "shape_idx".to_string(),
            "shape".to_string(),
            "sizes".to_string(),
        ];
        header.extend(self.set_labels.iter().map(|l| format!("ratio_{l}")));
        header.push("ratio_ltr".to_string());
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let sizes: Vec<String> = r.instance.0.iter().map(|v| v.to_string()).collect();
            let mut row = vec![
                r.shape_idx.to_string(),
                self.shapes[r.shape_idx].clone(),
                sizes.join(" "),
            ];
            row.extend(r.ratios.iter().map(|x| x.to_string()));
            row.push(r.ratio_ltr.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Run the ratio study: per shape, train the base set, expand it step by
/// step, and record per-instance validation ratios over the optimum.
/// Deterministic for a fixed seed regardless of thread count: each shape
/// derives its own RNG streams from (seed, shape index).
pub fn run_flop_study(cfg: &StudyConfig) -> Result<StudyResult, EnumError> {
    let shapes: Vec<Shape> = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.shapes)
            .map(|_| sample_shape(cfg.n, true, &mut rng))
            .collect()
    };

    let per_shape: Result<Vec<Vec<StudyRow>>, EnumError> = shapes
        .par_iter()
        .enumerate()
        .map(|(si, shape)| study_one_shape(cfg, si, shape))
        .collect();

    let mut set_labels = vec!["base".to_string()];
    for step in 1..=cfg.expand {
        set_labels.push(format!("s{step}"));
    }
    Ok(StudyResult {
        shapes: shapes.iter().map(|s| s.signature()).collect(),
        rows: per_shape?.into_iter().flatten().collect(),
        set_labels,
    })
}

fn study_one_shape(
    cfg: &StudyConfig,
    shape_idx: usize,
    shape: &Shape,
) -> Result<Vec<StudyRow>, EnumError> {
    let model = CostModel::Flops;
    let pool = VariantPool::enumerate(shape, cfg.enum_limit)?;

    let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((shape_idx as u64) << 20 | 1));
    let train: Vec<Instance> = (0..cfg.train)
        .map(|_| sample_instance(shape.classes(), cfg.lo, cfg.hi, &mut train_rng))
        .collect();
    let (base, _) = base_set(&pool, &model, &train);

    // One greedy run to the final size; intermediate sets are its prefixes.
    let (expanded, _) = expand_set_traced(
        &pool,
        &model,
        &train,
        cfg.objective,
        base.len() + cfg.expand,
        &base,
    );

    let mut validate_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((shape_idx as u64) << 20 | 2));
    let validate: Vec<Instance> = (0..cfg.validate)
        .map(|_| sample_instance(shape.classes(), cfg.lo, cfg.hi, &mut validate_rng))
        .collect();
    let matrix = CostMatrix::build(&pool, &model, &validate);
    let ltr = pool.left_to_right_index();

    Ok((0..validate.len())
        .map(|i| {
            let mut ratios = Vec::with_capacity(cfg.expand + 1);
            for step in 0..=cfg.expand {
                let upto = (base.len() + step).min(expanded.len());
                ratios.push(matrix.ratio(&expanded.members[..upto], i));
            }
            StudyRow {
                shape_idx,
                instance: validate[i].clone(),
                ratios,
                ratio_ltr: matrix.ratio(&[ltr], i),
            }
        })
        .collect())
}
