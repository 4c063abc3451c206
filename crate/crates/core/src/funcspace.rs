//! Functions on the real line sampled on a symmetric uniform grid.

use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("half width {half_width} is not an integer multiple of step {step}")]
    Incommensurate { half_width: f64, step: f64 },
    #[error("grid parameters must be positive and finite (T = {half_width}, h = {step})")]
    BadParameters { half_width: f64, step: f64 },
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("grids differ: (T = {0}, h = {1}) vs (T = {2}, h = {3})")]
    Mismatch(f64, f64, f64, f64),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform symmetric grid `{-T, -T+h, …, T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    step: f64,
    half_count: usize,
}

impl Grid {
    pub fn new(half_width: f64, step: f64) -> Result<Grid, GridError> {
        if !(half_width > 0.0 && step > 0.0 && half_width.is_finite() && step.is_finite()) {
            return Err(GridError::BadParameters { half_width, step });
        }
        let ratio = half_width / step;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) || n < 1.0 {
            return Err(GridError::Incommensurate { half_width, step });
        }
        Ok(Grid {
            half_width,
            step,
            half_count: n as usize,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `N` with `T = N·h`.
    pub fn half_count(&self) -> usize {
        self.half_count
    }

    /// `2N + 1`.
    pub fn len(&self) -> usize {
        2 * self.half_count + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Abscissa of sample `i`, computed symmetrically so `t(2N-i) = -t(i)` exactly.
    pub fn point(&self, i: usize) -> f64 {
        let k = i as f64 - self.half_count as f64;
        k * self.step
    }

    /// Index of the sample mirrored through the origin.
    pub fn mirror(&self, i: usize) -> usize {
        2 * self.half_count - i
    }

    /// Index of the grid point nearest to `t`, if `t` lies within `tol` of one.
    pub fn node_index(&self, t: f64, tol: f64) -> Option<usize> {
        let x = t / self.step + self.half_count as f64;
        let k = x.round();
        if k < 0.0 || k > (2 * self.half_count) as f64 || (x - k).abs() > tol {
            return None;
        }
        Some(k as usize)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// A candidate or solution function, stored as samples on a [`Grid`].
///
/// Between samples the function is the linear interpolant; outside
/// `[-T, T]` it is frozen at the boundary value (clamp extension).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, samples: Vec<f64>) -> Result<GridFunction, GridError> {
        if samples.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                got: samples.len(),
            });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(GridFunction { grid, samples })
    }

    pub fn constant(grid: Grid, value: f64) -> GridFunction {
        GridFunction {
            grid,
            samples: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<GridFunction, GridError> {
        GridFunction::new(grid, grid.points().map(f).collect())
    }

    pub fn try_from_fn<E>(grid: Grid, mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<GridFunction, E>
    where
        E: From<GridError>,
    {
        let samples = grid.points().map(&mut f).collect::<Result<Vec<_>, E>>()?;
        Ok(GridFunction::new(grid, samples)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn eval_at(&self, t: f64) -> f64 {
        let n = self.grid.half_count;
        let x = t / self.grid.step + n as f64;
        if !(x > 0.0) {
            return self.samples[0];
        }
        let last = 2 * n;
        if x >= last as f64 {
            return self.samples[last];
        }
        let i = x.floor() as usize;
        let frac = x - i as f64;
        if frac == 0.0 {
            return self.samples[i];
        }
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        a + frac * (b - a)
    }

    /// Four-point Lagrange interpolation: exact at nodes and for cubics,
    /// linear in the two outermost cells, clamped beyond `±T`.
    pub fn eval_cubic(&self, t: f64) -> f64 {
        let n = self.grid.half_count;
        let x = t / self.grid.step + n as f64;
        let last = 2 * n;
        if !(x > 1.0) || x >= (last - 1) as f64 {
            return self.eval_at(t);
        }
        let i = x.floor() as usize;
        let u = x - i as f64;
        if u == 0.0 {
            return self.samples[i];
        }
        let p = &self.samples[i - 1..=i + 2];
        -u * (u - 1.0) * (u - 2.0) / 6.0 * p[0] + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * p[1]
            - (u + 1.0) * u * (u - 2.0) / 2.0 * p[2]
            + (u + 1.0) * u * (u - 1.0) / 6.0 * p[3]
    }

    pub fn reflect(&self) -> GridFunction {
        GridFunction {
            grid: self.grid,
            samples: self.samples.iter().rev().copied().collect(),
        }
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<(), GridError> {
        let (a, b) = (&self.grid, &other.grid);
        if a.half_count != b.half_count || (a.step - b.step).abs() > 1e-12 * a.step {
            return Err(GridError::Mismatch(a.half_width, a.step, b.half_width, b.step));
        }
        Ok(())
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64, GridError> {
        self.check_same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Sup distance restricted to grid points in `[lo, hi]`.
    pub fn sup_distance_on(&self, other: &GridFunction, lo: f64, hi: f64) -> Result<f64, GridError> {
        self.check_same_grid(other)?;
        let eps = 1e-9 * self.grid.step;
        Ok((0..self.grid.len())
            .filter(|&i| {
                let t = self.grid.point(i);
                t >= lo - eps && t <= hi + eps
            })
            .map(|i| (self.samples[i] - other.samples[i]).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Writes `t,u` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        writeln!(out, "t,u")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", fmt_full(self.grid.point(i)), fmt_full(*v))?;
        }
        Ok(())
    }

    /// Reads a `t,u` table written by [`GridFunction::write_csv`]; the grid is
    /// inferred from the first and second abscissae and must be symmetric.
    pub fn read_csv<R: BufRead>(input: R) -> Result<GridFunction, GridError> {
        let mut ts = Vec::new();
        let mut us = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "t,u" {
                    return Err(GridError::Csv {
                        line: 1,
                        msg: format!("expected header `t,u`, found `{line}`"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, GridError> {
                s.and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| GridError::Csv {
                    line: lineno + 1,
                    msg: format!("expected two numbers, found `{line}`"),
                })
            };
            ts.push(parse(parts.next())?);
            us.push(parse(parts.next())?);
        }
        if ts.len() < 3 {
            return Err(GridError::Csv {
                line: ts.len() + 1,
                msg: "need at least three samples".into(),
            });
        }
        let half_width = -ts[0];
        let step = ts[1] - ts[0];
        let grid = Grid::new(half_width, step)?;
        let half_width = grid.half_count as f64 * step;
        let grid = Grid::new(half_width, step)?;
        for (i, t) in ts.iter().enumerate() {
            if (t - grid.point(i)).abs() > 1e-9 * step {
                return Err(GridError::Csv {
                    line: i + 2,
                    msg: format!("abscissa {t} is off the uniform grid"),
                });
            }
        }
        GridFunction::new(grid, us)
    }
}

/// Formats a double with 17 significant digits, no locale.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}
