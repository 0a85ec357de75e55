//! Plan emission, run-time dispatch, and template-driven source rendering.
//!
//! A plan is a portable JSON document carrying the shape, the selected
//! variants with their kernel calls and exact-rational cost polynomials, the
//! cost model, and the dispatch rule (argmin, ties to the lowest index).

use crate::catalog::KernelId;
use crate::costmodel::{CostModel, TimingModel};
use crate::frontend::{ClassPartition, Instance, Shape};
use crate::poly::{format_rat, parse_rat, BigRat, Poly};
use crate::selection::{VariantPool, VariantSet};
use crate::variants::{OperandRef, OperandView, PseudoCall, Variant};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported plan version {found} (this build reads version {PLAN_VERSION})")]
    Version { found: u32 },
    #[error("instance violates the plan's size-class constraints")]
    ClassViolation,
    #[error("plan has no variants")]
    EmptyPlan,
    #[error("malformed cost term `{0}`")]
    BadTerm(String),
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("profile is missing a template for kernel `{0}`")]
    MissingKernel(String),
    #[error("profile is missing scaffold entry `{0}`")]
    MissingScaffold(String),
    #[error("profile parse error: {0}")]
    Parse(String),
}

// ---------------------------------------------------------------------------
// Plan document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub version: u32,
    pub shape: ShapeDesc,
    pub cost_model: CostModelDesc,
    pub variants: Vec<PlanVariant>,
    pub dispatch: DispatchDesc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDesc {
    pub lhs: String,
    pub operands: Vec<OperandDesc>,
    pub classes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperandDesc {
    pub name: String,
    pub structure: String,
    pub property: String,
    pub op: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CostModelDesc {
    Flops,
    Time { model: TimingModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDesc {
    pub rule: String,
    pub tie: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanVariant {
    pub tree: String,
    pub calls: Vec<CallDesc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<PseudoDesc>,
    /// Total symbolic cost: exact rational terms over q_0..q_n.
    pub cost: Vec<TermDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallDesc {
    pub kernel: KernelId,
    pub side: String,
    pub left: ArgDesc,
    pub right: ArgDesc,
    pub triplet: [usize; 3],
    /// Output buffer id, unique within the variant.
    pub out: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub out_structure: String,
    pub out_property: String,
    pub pending_transpose: bool,
    pub pending_inverse: bool,
    pub cost: Vec<TermDesc>,
    pub axes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgDesc {
    pub arg: String,
    pub trans: bool,
    pub inv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoDesc {
    pub kernel: KernelId,
    pub arg: String,
    pub also_transpose: bool,
    pub cost: Vec<TermDesc>,
    pub axes: Vec<usize>,
}

/// One cost monomial: exact rational coefficient and exponents over q_0..q_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDesc {
    pub c: String,
    pub e: Vec<u8>,
}

fn poly_to_terms(p: &Poly) -> Vec<TermDesc> {
    p.terms()
        .map(|(e, c)| TermDesc {
            c: format_rat(*c),
            e: e.clone(),
        })
        .collect()
}

fn terms_to_poly(terms: &[TermDesc], nvars: usize) -> Result<Poly, PlanError> {
    let mut p = Poly::zero(nvars);
    for t in terms {
        let c = parse_rat(&t.c).ok_or_else(|| PlanError::BadTerm(t.c.clone()))?;
        if t.e.len() != nvars {
            return Err(PlanError::BadTerm(format!("{:?}", t.e)));
        }
        p.add_term(c, t.e.clone());
    }
    Ok(p)
}

fn operand_ref_str(r: OperandRef) -> String {
    match r {
        OperandRef::Leaf(i) => format!("leaf:{i}"),
        OperandRef::Buf(i) => format!("buf:{i}"),
    }
}

fn arg_desc(v: &OperandView) -> ArgDesc {
    ArgDesc {
        arg: operand_ref_str(v.source),
        trans: v.trans,
        inv: v.inv,
    }
}

/// Serialize the compile output. Byte output is deterministic for fixed
/// inputs: struct field order is fixed and every map is ordered.
pub fn emit_plan(shape: &Shape, pool: &VariantPool, set: &VariantSet, model: &CostModel) -> Plan {
    assert!(!set.is_empty(), "refusing to emit an empty plan");
    let operands = (0..shape.n())
        .map(|i| {
            let d = shape.decl(i);
            OperandDesc {
                name: d.name.clone(),
                structure: d.structure.keyword().to_string(),
                property: d.property.keyword().to_string(),
                op: shape.op(i).suffix().to_string(),
            }
        })
        .collect();
    let variants = set
        .members
        .iter()
        .map(|&idx| plan_variant(&pool.variants[idx]))
        .collect();
    Plan {
        version: PLAN_VERSION,
        shape: ShapeDesc {
            lhs: shape.lhs.clone(),
            operands,
            classes: shape.classes().classes(),
        },
        cost_model: match model {
            CostModel::Flops => CostModelDesc::Flops,
            CostModel::Time(tm) => CostModelDesc::Time { model: tm.clone() },
        },
        variants,
        dispatch: DispatchDesc {
            rule: "argmin".to_string(),
            tie: "lowest-index".to_string(),
        },
    }
}

fn plan_variant(v: &Variant) -> PlanVariant {
    PlanVariant {
        tree: v.tree.to_string(),
        calls: v
            .calls
            .iter()
            .map(|c| CallDesc {
                kernel: c.kernel,
                side: match c.side {
                    crate::catalog::Side::Left => "left".to_string(),
                    crate::catalog::Side::Right => "right".to_string(),
                },
                left: arg_desc(&c.left),
                right: arg_desc(&c.right),
                triplet: [c.triplet.0, c.triplet.1, c.triplet.2],
                out: c.out,
                out_rows: c.out_rows,
                out_cols: c.out_cols,
                out_structure: c.out_features.structure.keyword().to_string(),
                out_property: c.out_features.property.keyword().to_string(),
                pending_transpose: c.out_features.pending_transpose,
                pending_inverse: c.out_features.pending_inverse,
                cost: poly_to_terms(&c.cost),
                axes: c.axes.clone(),
            })
            .collect(),
        pseudo: v.pseudo.as_ref().map(|p: &PseudoCall| PseudoDesc {
            kernel: p.kernel,
            arg: operand_ref_str(p.arg),
            also_transpose: p.also_transpose,
            cost: poly_to_terms(&p.cost),
            axes: p.axes.clone(),
        }),
        cost: poly_to_terms(&v.cost),
    }
}

impl Plan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Plan, PlanError> {
        // Reject unknown future versions before full decoding.
        #[derive(Deserialize)]
        struct VersionProbe {
            version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != PLAN_VERSION {
            return Err(PlanError::Version {
                found: probe.version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn n_symbols(&self) -> usize {
        self.shape.operands.len() + 1
    }

    pub fn classes(&self) -> ClassPartition {
        ClassPartition::from_classes(self.n_symbols(), &self.shape.classes)
    }

    fn timing_model(&self) -> Option<&TimingModel> {
        match &self.cost_model {
            CostModelDesc::Flops => None,
            CostModelDesc::Time { model } => Some(model),
        }
    }

    /// Exact FLOP count of one variant at an instance.
    pub fn variant_flops(&self, idx: usize, q: &Instance) -> Result<BigRat, PlanError> {
        let poly = terms_to_poly(&self.variants[idx].cost, self.n_symbols())?;
        Ok(poly.eval_exact(&q.as_u64()))
    }

    /// Cost of one variant under the plan's cost model.
    pub fn variant_cost(&self, idx: usize, q: &Instance) -> Result<f64, PlanError> {
        let nvars = self.n_symbols();
        match self.timing_model() {
            None => {
                let poly = terms_to_poly(&self.variants[idx].cost, nvars)?;
                Ok(poly.eval_f64(&q.as_f64()))
            }
            Some(tm) => {
                let qf = q.as_f64();
                let v = &self.variants[idx];
                let mut acc = 0.0;
                for c in &v.calls {
                    let flops = terms_to_poly(&c.cost, nvars)?.eval_f64(&qf);
                    let sizes: Vec<f64> = c.axes.iter().map(|&s| qf[s]).collect();
                    acc += flops / tm.rate(c.kernel, &sizes);
                }
                if let Some(p) = &v.pseudo {
                    let flops = terms_to_poly(&p.cost, nvars)?.eval_f64(&qf);
                    if flops > 0.0 {
                        let sizes: Vec<f64> = p.axes.iter().map(|&s| qf[s]).collect();
                        acc += flops / tm.rate(p.kernel, &sizes);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Scale every rate of a time-model plan uniformly (no-op for FLOPs).
    pub fn with_scaled_rates(&self, factor: f64) -> Plan {
        let mut out = self.clone();
        if let CostModelDesc::Time { model } = &mut out.cost_model {
            *model = model.scaled(factor);
        }
        out
    }
}

/// Pick the variant with the least cost at the given sizes; ties resolve to
/// the lowest index. FLOP-model plans compare exact rationals.
pub fn dispatch(plan: &Plan, q: &Instance) -> Result<usize, PlanError> {
    if plan.variants.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    if !q.satisfies(&plan.classes()) {
        return Err(PlanError::ClassViolation);
    }
    match plan.timing_model() {
        None => {
            let mut best: Option<(BigRat, usize)> = None;
            for idx in 0..plan.variants.len() {
                let cost = plan.variant_flops(idx, q)?;
                if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                    best = Some((cost, idx));
                }
            }
            Ok(best.unwrap().1)
        }
        Some(_) => {
            let mut best: Option<(f64, usize)> = None;
            for idx in 0..plan.variants.len() {
                let cost = plan.variant_cost(idx, q)?;
                if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                    best = Some((cost, idx));
                }
            }
            Ok(best.unwrap().1)
        }
    }
}

// ---------------------------------------------------------------------------
// Render profiles
// ---------------------------------------------------------------------------

/// Data-driven render profile: per-kernel call templates plus scaffold
/// snippets. Placeholders: {out} {a} {b} {m} {n} {k} {flags} {rows} {cols}
/// {name} {params} {terms} {costs}.
#[derive(Debug, Clone, Deserialize)]
pub struct Profile {
    pub name: String,
    pub scaffold: BTreeMap<String, String>,
    pub kernels: BTreeMap<String, String>,
}

pub const DEFAULT_PROFILE: &str = include_str!("../profiles/default.profile");

impl Profile {
    pub fn parse(text: &str) -> Result<Profile, RenderError> {
        toml::from_str(text).map_err(|e| RenderError::Parse(e.to_string()))
    }

    pub fn default_profile() -> Profile {
        Profile::parse(DEFAULT_PROFILE).expect("bundled profile parses")
    }

    fn scaffold(&self, key: &str) -> Result<&str, RenderError> {
        self.scaffold
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| RenderError::MissingScaffold(key.to_string()))
    }

    fn kernel(&self, id: KernelId) -> Result<&str, RenderError> {
        self.kernels
            .get(id.name())
            .map(|s| s.as_str())
            .ok_or_else(|| RenderError::MissingKernel(id.name().to_string()))
    }
}

fn fill(template: &str, subs: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in subs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn term_string(terms: &[TermDesc]) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    terms
        .iter()
        .map(|t| {
            let mut s = t.c.clone();
            for (i, &e) in t.e.iter().enumerate() {
                match e {
                    0 => {}
                    1 => s.push_str(&format!(" q{i}")),
                    _ => s.push_str(&format!(" q{i}^{e}")),
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

fn arg_string(plan: &Plan, a: &ArgDesc) -> String {
    let base = match a.arg.split_once(':') {
        Some(("leaf", i)) => {
            let idx: usize = i.parse().unwrap_or(0);
            plan.shape
                .operands
                .get(idx.saturating_sub(1))
                .map(|o| format!("{}_{}", o.name, idx))
                .unwrap_or_else(|| format!("M{idx}"))
        }
        Some(("buf", i)) => format!("B{i}"),
        _ => a.arg.clone(),
    };
    match (a.trans, a.inv) {
        (false, false) => base,
        (true, false) => format!("{base}^T"),
        (false, true) => format!("{base}^-1"),
        (true, true) => format!("{base}^-T"),
    }
}

/// Render the plan as dispatchable source text: one routine and one cost
/// evaluator per variant, plus a dispatch routine.
pub fn render(plan: &Plan, profile: &Profile) -> Result<String, RenderError> {
    let mut out = String::new();
    out.push_str(&fill(
        profile.scaffold("header")?,
        &[
            ("name", plan.shape.lhs.clone()),
            (
                "chain",
                plan.shape
                    .operands
                    .iter()
                    .map(|o| format!("{}{}", o.name, o.op))
                    .collect::<Vec<_>>()
                    .join(" * "),
            ),
            ("nvariants", plan.variants.len().to_string()),
        ],
    ));
    out.push('\n');

    let params: Vec<String> = plan
        .shape
        .operands
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}_{}", o.name, i + 1))
        .collect();
    let params = format!("q, {}", params.join(", "));

    for (vi, v) in plan.variants.iter().enumerate() {
        let name = format!("variant_{vi}");
        out.push('\n');
        out.push_str(&fill(
            profile.scaffold("routine_open")?,
            &[
                ("name", name.clone()),
                ("params", params.clone()),
                ("tree", v.tree.clone()),
            ],
        ));
        out.push('\n');
        let mut last_out = String::new();
        for c in &v.calls {
            let alloc = fill(
                profile.scaffold("alloc")?,
                &[
                    ("out", format!("B{}", c.out)),
                    ("rows", format!("q{}", c.out_rows)),
                    ("cols", format!("q{}", c.out_cols)),
                ],
            );
            out.push_str(&format!("  {alloc}\n"));
            let flags = format!(
                "side={},transL={},transR={}",
                c.side,
                if c.left.trans { "T" } else { "N" },
                if c.right.trans { "T" } else { "N" }
            );
            let call = fill(
                profile.kernel(c.kernel)?,
                &[
                    ("out", format!("B{}", c.out)),
                    ("a", arg_string(plan, &c.left)),
                    ("b", arg_string(plan, &c.right)),
                    ("m", format!("q{}", c.triplet[0])),
                    ("k", format!("q{}", c.triplet[1])),
                    ("n", format!("q{}", c.triplet[2])),
                    ("flags", flags),
                ],
            );
            out.push_str(&format!(
                "  {call}  # triplet=({},{},{})\n",
                c.triplet[0], c.triplet[1], c.triplet[2]
            ));
            last_out = format!("B{}", c.out);
        }
        if v.calls.is_empty() {
            let copy = fill(
                profile.scaffold("copy")?,
                &[
                    ("out", "B1".to_string()),
                    (
                        "a",
                        arg_string(
                            plan,
                            &ArgDesc {
                                arg: "leaf:1".to_string(),
                                trans: false,
                                inv: false,
                            },
                        ),
                    ),
                ],
            );
            out.push_str(&format!("  {copy}\n"));
            last_out = "B1".to_string();
        }
        if let Some(p) = &v.pseudo {
            let call = fill(
                profile.kernel(p.kernel)?,
                &[
                    ("out", last_out.clone()),
                    ("a", last_out.clone()),
                    ("b", String::new()),
                    ("m", "q0".to_string()),
                    ("k", "q0".to_string()),
                    ("n", format!("q{}", plan.shape.operands.len())),
                    (
                        "flags",
                        if p.also_transpose {
                            "T".to_string()
                        } else {
                            "N".to_string()
                        },
                    ),
                ],
            );
            out.push_str(&format!("  {call}\n"));
        }
        out.push_str(&fill(
            profile.scaffold("routine_close")?,
            &[("result", last_out)],
        ));
        out.push('\n');
    }

    out.push('\n');
    for (vi, v) in plan.variants.iter().enumerate() {
        out.push_str(&fill(
            profile.scaffold("cost_line")?,
            &[
                ("name", format!("variant_{vi}")),
                ("terms", term_string(&v.cost)),
            ],
        ));
        out.push('\n');
    }

    out.push('\n');
    out.push_str(&fill(
        profile.scaffold("dispatch_open")?,
        &[("name", plan.shape.lhs.clone()), ("params", params)],
    ));
    out.push('\n');
    let costs: Vec<String> = (0..plan.variants.len())
        .map(|vi| format!("cost_variant_{vi}(q)"))
        .collect();
    out.push_str(&format!(
        "  {}\n",
        fill(
            profile.scaffold("dispatch_choose")?,
            &[("costs", costs.join(", "))]
        )
    ));
    out.push_str(&format!("  {}\n", profile.scaffold("dispatch_call")?));
    out.push_str(profile.scaffold("dispatch_close")?);
    out.push('\n');
    Ok(out)
}

/// Parse the cost tables back out of rendered text, for coherence checks
/// between the rendered dispatcher and in-process dispatch.
pub fn parse_rendered_costs(text: &str, nvars: usize) -> Vec<Poly> {
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(rest) = line.trim().strip_prefix("cost cost_variant_") else {
            continue;
        };
        let Some((_, expr)) = rest.split_once(" = ") else {
            continue;
        };
        let mut poly = Poly::zero(nvars);
        for term in expr.split(" + ") {
            let mut coef = None;
            let mut exps = vec![0u8; nvars];
            for piece in term.split_whitespace() {
                if let Some(rest) = piece.strip_prefix('q') {
                    let (var, exp) = match rest.split_once('^') {
                        Some((v, e)) => (v.parse::<usize>().unwrap(), e.parse::<u8>().unwrap()),
                        None => (rest.parse::<usize>().unwrap(), 1),
                    };
                    exps[var] += exp;
                } else {
                    coef = parse_rat(piece);
                }
            }
            if let Some(c) = coef {
                if !c.is_zero() {
                    poly.add_term(c, exps);
                }
            }
        }
        out.push(poly);
    }
    out
}
