//! Interchangeable cost models: exact FLOP counts and execution-time
//! estimates derived from measured kernel performance grids.
//!
//! A timing grid stores FLOP rates on a small Cartesian grid per kernel
//! (3D/2D/1D depending on the kernel's free dimensions). A call's time
//! estimate is its FLOP count divided by the multilinearly interpolated
//! rate; a variant's time is the sum over its calls.

use crate::catalog::KernelId;
use crate::frontend::Instance;
use crate::variants::Variant;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

pub const DEFAULT_RATE: f64 = 1e9;

/// Grid points used by the synthetic generator, matching the measurement
/// protocol: six points per axis over [50, 1000].
pub const SYNTHETIC_POINTS: [u32; 6] = [50, 100, 300, 500, 700, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingGrid {
    pub kernel: KernelId,
    /// Strictly increasing grid points, one list per axis.
    pub axes: Vec<Vec<u32>>,
    /// Measured FLOP rates, row-major over the axes.
    pub rates: Vec<f64>,
}

impl TimingGrid {
    /// Multilinear interpolation of the rate at `point`, clamped to the grid
    /// hull outside the sampled range.
    pub fn rate_at(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.axes.len());
        // Per axis: bracketing cell index and interpolation weight.
        let mut cell = Vec::with_capacity(self.axes.len());
        for (axis, &x) in self.axes.iter().zip(point) {
            let x = x.clamp(axis[0] as f64, *axis.last().unwrap() as f64);
            let hi = axis.partition_point(|&p| (p as f64) < x).min(axis.len() - 1);
            let lo = hi.saturating_sub(1);
            let (a, b) = (axis[lo] as f64, axis[hi] as f64);
            let w = if hi == lo { 0.0 } else { (x - a) / (b - a) };
            cell.push((lo, hi, w));
        }
        let strides: Vec<usize> = {
            let mut s = vec![1usize; self.axes.len()];
            for i in (0..self.axes.len().saturating_sub(1)).rev() {
                s[i] = s[i + 1] * self.axes[i + 1].len();
            }
            s
        };
        let mut acc = 0.0;
        for corner in 0..(1usize << self.axes.len()) {
            let mut weight = 1.0;
            let mut idx = 0usize;
            for (d, &(lo, hi, w)) in cell.iter().enumerate() {
                if corner & (1 << d) != 0 {
                    weight *= w;
                    idx += hi * strides[d];
                } else {
                    weight *= 1.0 - w;
                    idx += lo * strides[d];
                }
            }
            if weight != 0.0 {
                acc += weight * self.rates[idx];
            }
        }
        acc
    }
}

/// Timing model: one grid per measured kernel, a default rate for the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub grids: BTreeMap<KernelId, TimingGrid>,
    pub default_rate: f64,
}

impl TimingModel {
    pub fn rate(&self, kernel: KernelId, point: &[f64]) -> f64 {
        match self.grids.get(&kernel) {
            Some(g) => g.rate_at(point),
            None => self.default_rate,
        }
    }

    /// Scale every rate uniformly; dispatch decisions are invariant to this.
    pub fn scaled(&self, factor: f64) -> TimingModel {
        let mut out = self.clone();
        out.default_rate *= factor;
        for g in out.grids.values_mut() {
            for r in &mut g.rates {
                *r *= factor;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Flops,
    Time(TimingModel),
}

impl CostModel {
    /// Cost of one call: its FLOP count, or FLOPs over the interpolated rate.
    pub fn call_cost(&self, kernel: KernelId, flops: f64, axes_sizes: &[f64]) -> f64 {
        match self {
            CostModel::Flops => flops,
            CostModel::Time(tm) => {
                if flops == 0.0 {
                    0.0
                } else {
                    flops / tm.rate(kernel, axes_sizes)
                }
            }
        }
    }

    /// Cost of a variant on an instance.
    pub fn variant_cost(&self, v: &Variant, q: &Instance) -> f64 {
        let qf = q.as_f64();
        match self {
            CostModel::Flops => v.cost.eval_f64(&qf),
            CostModel::Time(_) => {
                let mut acc = 0.0;
                for c in &v.calls {
                    let sizes: Vec<f64> = c.axes.iter().map(|&s| qf[s]).collect();
                    acc += self.call_cost(c.kernel, c.cost.eval_f64(&qf), &sizes);
                }
                if let Some(p) = &v.pseudo {
                    let sizes: Vec<f64> = p.axes.iter().map(|&s| qf[s]).collect();
                    acc += self.call_cost(p.kernel, p.cost.eval_f64(&qf), &sizes);
                }
                acc
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{kernel}` expects {expected} grid dimensions, row has {got}")]
    AxisMismatch {
        kernel: String,
        expected: usize,
        got: usize,
    },
    #[error("non-positive rate {rate} for kernel `{kernel}`")]
    NonPositiveRate { kernel: String, rate: f64 },
    #[error("ragged grid for kernel `{kernel}`: {detail}")]
    RaggedGrid { kernel: String, detail: String },
    #[error("bad number in row: {0}")]
    BadNumber(String),
}

/// Load timing grids from CSV rows `kernel,d1,d2,d3,flops_per_sec` (unused
/// dimensions blank). Every kernel must cover a full Cartesian grid; kernels
/// absent from the file fall back to the default rate, with a warning.
pub fn load_timing_grids<R: Read>(reader: R) -> Result<(TimingModel, Vec<String>), GridError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let mut points: BTreeMap<KernelId, Vec<(Vec<u32>, f64)>> = BTreeMap::new();

    for record in csv_reader.records() {
        let record = record?;
        let name = record.get(0).unwrap_or("").trim().to_string();
        let kernel =
            KernelId::from_name(&name).ok_or_else(|| GridError::UnknownKernel(name.clone()))?;
        let mut dims: Vec<u32> = Vec::new();
        for i in 1..=3 {
            let field = record.get(i).unwrap_or("").trim();
            if !field.is_empty() {
                dims.push(
                    field
                        .parse()
                        .map_err(|_| GridError::BadNumber(field.to_string()))?,
                );
            }
        }
        if dims.len() != kernel.axis_count() {
            return Err(GridError::AxisMismatch {
                kernel: name,
                expected: kernel.axis_count(),
                got: dims.len(),
            });
        }
        let rate_field = record.get(4).unwrap_or("").trim();
        let rate: f64 = rate_field
            .parse()
            .map_err(|_| GridError::BadNumber(rate_field.to_string()))?;
        if rate <= 0.0 {
            return Err(GridError::NonPositiveRate { kernel: name, rate });
        }
        points.entry(kernel).or_default().push((dims, rate));
    }

    let mut grids = BTreeMap::new();
    for (kernel, rows) in points {
        let d = kernel.axis_count();
        let mut axes: Vec<Vec<u32>> = vec![Vec::new(); d];
        for (dims, _) in &rows {
            for (i, &v) in dims.iter().enumerate() {
                if !axes[i].contains(&v) {
                    axes[i].push(v);
                }
            }
        }
        for axis in &mut axes {
            axis.sort_unstable();
        }
        let expected: usize = axes.iter().map(|a| a.len()).product();
        if rows.len() != expected {
            return Err(GridError::RaggedGrid {
                kernel: kernel.name().to_string(),
                detail: format!("{} rows, full grid needs {}", rows.len(), expected),
            });
        }
        let strides: Vec<usize> = {
            let mut s = vec![1usize; d];
            for i in (0..d.saturating_sub(1)).rev() {
                s[i] = s[i + 1] * axes[i + 1].len();
            }
            s
        };
        let mut rates = vec![f64::NAN; expected];
        for (dims, rate) in &rows {
            let mut idx = 0;
            for (i, v) in dims.iter().enumerate() {
                idx += axes[i].iter().position(|p| p == v).unwrap() * strides[i];
            }
            if !rates[idx].is_nan() {
                return Err(GridError::RaggedGrid {
                    kernel: kernel.name().to_string(),
                    detail: format!("duplicate grid point {dims:?}"),
                });
            }
            rates[idx] = *rate;
        }
        grids.insert(
            kernel,
            TimingGrid {
                kernel,
                axes,
                rates,
            },
        );
    }

    let mut warnings = Vec::new();
    for &k in crate::catalog::ASSOCIATION_KERNELS.iter() {
        if !grids.contains_key(&k) {
            warnings.push(format!(
                "no timing grid for `{k}`; using the default rate"
            ));
        }
    }

    Ok((
        TimingModel {
            grids,
            default_rate: DEFAULT_RATE,
        },
        warnings,
    ))
}

/// Emit a plausible synthetic timing table covering every association kernel
/// plus explicit inversion. Rates ramp up with problem size toward a
/// per-kernel peak, with a small deterministic perturbation per grid point.
pub fn write_synthetic_grid<W: Write>(writer: W, seed: u64) -> Result<(), csv::Error> {
    use rand::{Rng, SeedableRng};
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["kernel", "d1", "d2", "d3", "flops_per_sec"])?;

    let mut kernels: Vec<KernelId> = crate::catalog::ASSOCIATION_KERNELS.to_vec();
    kernels.push(KernelId::ExplicitInverse);

    for kernel in kernels {
        let peak = match kernel {
            KernelId::Gemm => 5.0e10,
            KernelId::Symm | KernelId::Trmm | KernelId::Trsm => 3.5e10,
            KernelId::ExplicitInverse => 1.5e10,
            k if k.is_solve() => 2.0e10,
            _ => 2.5e10,
        };
        let d = kernel.axis_count();
        let mut idx = vec![0usize; d];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
            seed ^ (kernel as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        loop {
            let dims: Vec<u32> = idx.iter().map(|&i| SYNTHETIC_POINTS[i]).collect();
            let min_dim = *dims.iter().min().unwrap() as f64;
            let ramp = (min_dim / 700.0).min(1.0).powf(0.6);
            let jitter = 1.0 + 0.05 * (rng.gen::<f64>() - 0.5);
            let rate = peak * (0.15 + 0.85 * ramp) * jitter;
            let mut record = vec![kernel.name().to_string()];
            for slot in 0..3 {
                record.push(if slot < d {
                    dims[slot].to_string()
                } else {
                    String::new()
                });
            }
            record.push(format!("{rate:.6e}"));
            out.write_record(&record)?;

            // Advance the odometer.
            let mut done = true;
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < SYNTHETIC_POINTS.len() {
                    done = false;
                    break;
                }
                idx[i] = 0;
            }
            if done {
                break;
            }
        }
    }
    out.flush()?;
    Ok(())
}
