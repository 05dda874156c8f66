//! Uniform space-time lattice and real-valued fields on it.
//!
//! The lattice covers `[-d, d] x [0, T]` with `N` space nodes and `Mt` time
//! nodes: `z_i = -d + i * dz`, `t_j = j * dt` (0-based), `dz = 2d/(N-1)`,
//! `dt = T/(Mt-1)`. Fields are stored column-major by time; a storage stride
//! keeps every `stride`-th time column plus the terminal one so that long
//! marches do not hold the full history in memory.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// Uniform grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial half-width; the factor domain is `[-d, d]`.
    pub d: f64,
    /// Number of space nodes (>= 3).
    pub n_space: usize,
    /// Number of time nodes (>= 2).
    pub n_time: usize,
    /// Horizon covered by the time axis.
    pub horizon: f64,
    /// Keep every `stride`-th time column (plus the terminal column).
    pub stride: usize,
}

impl GridSpec {
    pub fn new(d: f64, n_space: usize, n_time: usize, horizon: f64) -> Result<Self> {
        Self::with_stride(d, n_space, n_time, horizon, 100)
    }

    pub fn with_stride(
        d: f64,
        n_space: usize,
        n_time: usize,
        horizon: f64,
        stride: usize,
    ) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::InvalidParams(format!("grid half-width d must be > 0, got {d}")));
        }
        if n_space < 3 {
            return Err(Error::InvalidParams(format!("N must be >= 3, got {n_space}")));
        }
        if n_time < 2 {
            return Err(Error::InvalidParams(format!("Mt must be >= 2, got {n_time}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidParams(format!("horizon must be > 0, got {horizon}")));
        }
        if stride == 0 {
            return Err(Error::InvalidParams("stride must be >= 1".into()));
        }
        Ok(GridSpec {
            d,
            n_space,
            n_time,
            horizon,
            stride,
        })
    }

    /// Space step `2d / (N - 1)`.
    #[inline]
    pub fn dz(&self) -> f64 {
        2.0 * self.d / (self.n_space - 1) as f64
    }

    /// Time step `T / (Mt - 1)`.
    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_time - 1) as f64
    }

    /// Space node `z_i = -d + i dz`.
    #[inline]
    pub fn z(&self, i: usize) -> f64 {
        -self.d + i as f64 * self.dz()
    }

    /// Time node `t_j = j dt`.
    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    /// Time indices retained by the storage stride, ascending; always
    /// includes 0 and the terminal index.
    pub fn stored_time_indices(&self) -> Vec<usize> {
        let last = self.n_time - 1;
        let mut idx: Vec<usize> = (0..=last).step_by(self.stride).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        idx
    }
}

/// A real-valued field sampled on the stored columns of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    spec: GridSpec,
    /// Grid time indices of the stored columns, ascending.
    stored: Vec<usize>,
    /// Column-major values: `values[k * n_space + i]` is node `(z_i, t_{stored[k]})`.
    values: Vec<f64>,
}

impl FieldGrid {
    /// Creates a field from stored columns. `values` must hold one column of
    /// length `n_space` per entry of `stored`.
    pub fn from_columns(spec: GridSpec, stored: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if stored.is_empty() || values.len() != stored.len() * spec.n_space {
            return Err(Error::GridMismatch(format!(
                "expected {} columns x {} rows, got {} values",
                stored.len(),
                spec.n_space,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::GridMismatch("field contains non-finite entries".into()));
        }
        Ok(FieldGrid { spec, stored, values })
    }

    /// Constant field on the stride-stored lattice.
    pub fn constant(spec: GridSpec, value: f64) -> Self {
        let stored = spec.stored_time_indices();
        let values = vec![value; stored.len() * spec.n_space];
        FieldGrid { spec, stored, values }
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn stored_time_indices(&self) -> &[usize] {
        &self.stored
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.stored.len()
    }

    /// Value at stored column `k`, space node `i`.
    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.spec.n_space + i]
    }

    /// Stored column `k` as a slice.
    #[inline]
    pub fn column(&self, k: usize) -> &[f64] {
        let n = self.spec.n_space;
        &self.values[k * n..(k + 1) * n]
    }

    /// The terminal (t = T) column.
    pub fn terminal_column(&self) -> &[f64] {
        self.column(self.n_cols() - 1)
    }

    /// Largest absolute difference against another field on the same grid.
    pub fn max_abs_diff(&self, other: &FieldGrid) -> Result<f64> {
        if self.spec != other.spec || self.stored != other.stored {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Applies `f` elementwise, producing a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<FieldGrid> {
        FieldGrid::from_columns(
            self.spec,
            self.stored.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Bilinear interpolation, exact at nodes. `t` must lie in `[0, T]`;
    /// out-of-domain `z` clamps to the boundary, which by the imposed
    /// boundary conditions equals the constant extension of the field
    /// (1 for the xi fields, 0 for the log fields). The first clamped call
    /// logs a warning.
    pub fn interpolate(&self, t: f64, z: f64) -> Result<f64> {
        let eps = 1e-12 * self.spec.horizon.max(1.0);
        if !(t >= -eps && t <= self.spec.horizon + eps) {
            return Err(Error::Domain {
                op: "interpolate",
                msg: format!("t = {t} outside [0, {}]", self.spec.horizon),
            });
        }
        if z < -self.spec.d || z > self.spec.d {
            if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "interpolate: z = {z} outside [-{d}, {d}]; clamping to the boundary \
                     (further occurrences logged at debug level)",
                    d = self.spec.d
                );
            } else {
                log::debug!("interpolate: z = {z} clamped to [-{0}, {0}]", self.spec.d);
            }
        }
        Ok(self.sample(t, z))
    }

    /// Bilinear interpolation without domain checks; `z` is clamped to
    /// `[-d, d]` and `t` to `[0, T]`. Hot-path variant used by the
    /// simulators.
    pub fn sample(&self, t: f64, z: f64) -> f64 {
        let spec = &self.spec;
        let n = spec.n_space;

        // space bracket
        let zc = z.clamp(-spec.d, spec.d);
        let fi = ((zc + spec.d) / spec.dz()).clamp(0.0, (n - 1) as f64);
        let i0 = (fi as usize).min(n - 2);
        let wz = ((zc - spec.z(i0)) / spec.dz()).clamp(0.0, 1.0);

        // time bracket among stored columns
        let tc = t.clamp(0.0, spec.horizon);
        let fj = tc / spec.dt();
        let j = (fj as usize).min(spec.n_time - 1);
        let k_hi = match self.stored.binary_search(&j) {
            Ok(k) => k,
            Err(k) => k.min(self.stored.len() - 1),
        };
        // stored[k_hi] >= j except possibly at the terminal column
        let (k0, k1) = if self.stored[k_hi] <= j {
            (k_hi, (k_hi + 1).min(self.stored.len() - 1))
        } else if k_hi == 0 {
            (0, 0)
        } else {
            (k_hi - 1, k_hi)
        };
        let t0 = spec.t(self.stored[k0]);
        let t1 = spec.t(self.stored[k1]);
        let wt = if t1 > t0 {
            ((tc - t0) / (t1 - t0)).clamp(0.0, 1.0)
        } else {
            0.0
        };

        let v00 = self.at(k0, i0);
        let v01 = self.at(k0, i0 + 1);
        let v10 = self.at(k1, i0);
        let v11 = self.at(k1, i0 + 1);
        let lo = v00 + wz * (v01 - v00);
        let hi = v10 + wz * (v11 - v10);
        lo + wt * (hi - lo)
    }

    /// Writes the field as CSV with header `t,z,value`, stored time columns
    /// outer ascending, space nodes inner ascending. Deterministic output.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,z,value")?;
        for (k, &j) in self.stored.iter().enumerate() {
            let t = self.spec.t(j);
            for i in 0..self.spec.n_space {
                writeln!(w, "{},{},{}", t, self.spec.z(i), self.at(k, i))?;
            }
        }
        Ok(())
    }

    /// Reads a field back from [`write_csv`](Self::write_csv) output,
    /// validating every node coordinate against `spec`.
    pub fn read_csv<R: BufRead>(spec: GridSpec, stored: Vec<usize>, r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t,z,value" => {}
            _ => return Err(Error::Csv("missing `t,z,value` header".into())),
        }
        let mut values = Vec::with_capacity(stored.len() * spec.n_space);
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Csv(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (t, z, v) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(z), Some(v), None) => (t, z, v),
                _ => return Err(Error::Csv(format!("row {row}: expected 3 fields"))),
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {row}: {e}")))
            };
            let (t, z, v) = (parse(t)?, parse(z)?, parse(v)?);
            let k = values.len() / spec.n_space;
            let i = values.len() % spec.n_space;
            if k >= stored.len() {
                return Err(Error::Csv("more rows than stored nodes".into()));
            }
            if t != spec.t(stored[k]) || z != spec.z(i) {
                return Err(Error::Csv(format!(
                    "row {row}: node ({t}, {z}) does not match grid node ({}, {})",
                    spec.t(stored[k]),
                    spec.z(i)
                )));
            }
            values.push(v);
        }
        FieldGrid::from_columns(spec, stored, values)
    }
}
