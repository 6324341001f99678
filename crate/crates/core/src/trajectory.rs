//! Time series of the two compartment amounts, shared by every solver.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Amounts `(A1, A2)` in ng sampled on an increasing time grid (days).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub grid: Vec<T>,
    pub values: Vec<[T; 2]>,
    pub method: String,
    pub step: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(grid: Vec<T>, values: Vec<[T; 2]>, method: impl Into<String>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        if let Some(i) = values.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(Error::NonFinite {
                context: "trajectory".into(),
                t: grid[i].as_f64(),
            });
        }
        let step = if grid.len() > 1 { grid[1] - grid[0] } else { T::zero() };
        Ok(Self {
            grid,
            values,
            method: method.into(),
            step,
        })
    }

    pub fn empty(method: impl Into<String>) -> Self {
        Self {
            grid: Vec::new(),
            values: Vec::new(),
            method: method.into(),
            step: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn compartment(&self, i: usize) -> impl Iterator<Item = T> + '_ {
        self.values.iter().map(move |v| v[i])
    }

    pub fn horizon(&self) -> T {
        self.grid.last().copied().unwrap_or_else(T::zero)
    }

    /// True when consecutive spacings agree with `step` to a relative `tol`.
    pub fn is_uniform(&self, tol: T) -> bool {
        self.grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - self.step).abs() <= tol * self.step.abs())
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| [v[0] * k, v[1] * k]).collect(),
            method: self.method.clone(),
            step: self.step,
        }
    }

    /// Linear interpolation at `t`; `None` outside the grid.
    pub fn sample(&self, t: T) -> Option<[T; 2]> {
        let n = self.grid.len();
        if n == 0 || t < self.grid[0] || t > self.grid[n - 1] {
            return None;
        }
        let idx = self.grid.partition_point(|&g| g <= t);
        if idx == 0 {
            return Some(self.values[0]);
        }
        if idx >= n {
            return Some(self.values[n - 1]);
        }
        let (t0, t1) = (self.grid[idx - 1], self.grid[idx]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.values[idx - 1], self.values[idx]);
        Some([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])])
    }

    /// Resamples onto `grid` by linear interpolation. Points beyond the ends
    /// by less than `tol` (absolute, days) clamp to the end values.
    pub fn resample(&self, grid: &[T], tol: T) -> Result<Self> {
        let (first, last) = match (self.grid.first(), self.grid.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::invalid("cannot resample an empty trajectory")),
        };
        let values = grid
            .iter()
            .map(|&t| {
                let tc = if t < first && first - t <= tol {
                    first
                } else if t > last && t - last <= tol {
                    last
                } else {
                    t
                };
                self.sample(tc).ok_or_else(|| {
                    Error::invalid(format!(
                        "time {t} outside trajectory range [{first}, {last}]"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), values, self.method.clone())
    }

    /// CSV with header `t,A1,A2`, shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,A1,A2")?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{},{},{}", t, v[0], v[1])?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: BufRead>(input: R, method: impl Into<String>) -> Result<Self> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "t,A1,A2" {
                    return Err(Error::invalid(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))?;
            if fields.len() != 3 {
                return Err(Error::invalid(format!("line {}: expected 3 fields", i + 1)));
            }
            grid.push(T::lit(fields[0]));
            values.push([T::lit(fields[1]), T::lit(fields[2])]);
        }
        Self::new(grid, values, method)
    }
}

/// `n` uniform points on `[0, horizon]`, endpoints included.
pub fn uniform_grid<T: Scalar>(horizon: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => {
            let dt = horizon / T::from_usize_lossy(n - 1);
            (0..n).map(|k| T::from_usize_lossy(k) * dt).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_traj() -> Trajectory<f64> {
        let grid = uniform_grid(1.0, 11);
        let values = grid.iter().map(|&t| [t, 2.0 * t * t]).collect();
        Trajectory::new(grid, values, "test").unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Trajectory::<f64>::new(vec![0.0, 0.0], vec![[0.0; 2]; 2], "x").is_err());
        assert!(Trajectory::<f64>::new(vec![0.0, 1.0], vec![[0.0; 2]], "x").is_err());
        assert!(Trajectory::<f64>::new(vec![0.0, 1.0], vec![[0.0; 2], [f64::NAN, 0.0]], "x").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = sample_traj();
        let csv = t.to_csv_string();
        assert!(csv.starts_with("t,A1,A2\n"));
        let back = Trajectory::<f64>::read_csv(csv.as_bytes(), "test").unwrap();
        assert_eq!(back.grid, t.grid);
        assert_eq!(back.values, t.values);
    }

    #[test]
    fn resample_linear_is_exact_on_lines() {
        let t = sample_traj();
        let r = t.resample(&[0.05, 0.55, 1.0], 1e-12).unwrap();
        assert!((r.values[0][0] - 0.05).abs() < 1e-15);
        assert!((r.values[1][0] - 0.55).abs() < 1e-15);
        assert!(t.resample(&[1.5], 1e-12).is_err());
    }

    #[test]
    fn uniform() {
        let t = sample_traj();
        assert!(t.is_uniform(1e-9));
        assert!((t.step - 0.1).abs() < 1e-15);
        assert_eq!(uniform_grid(5.0, 500).len(), 500);
        assert_eq!(uniform_grid::<f32>(5.0, 500)[499], 5.0);
    }
}
