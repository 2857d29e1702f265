//! Polynomial features of the lifted state and the ridge regression fit.
//!
//! Features are polynomials in linear functionals of `Z`: the pairing
//! `X = ⟨g, Z⟩`, the terminal forecast `Φ_k = ⟨g, E^{N-k} Z⟩`, and selected
//! lift coordinates. Because every feature factors through linear
//! functionals, directional derivatives of a fitted expansion only need the
//! functionals of the direction, not the full state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward_sim::PathEnsemble;
use crate::kernel_lift::DiscreteLift;

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    /// Powers `X, …, X^x_degree` (at most 3).
    pub x_degree: usize,
    /// Powers `Φ, …, Φ^forecast_degree` (at most 2).
    pub forecast_degree: usize,
    /// Include `X·Φ`.
    pub cross: bool,
    /// Lift coordinates used as linear features.
    pub coords: Vec<usize>,
    /// Ridge penalty on standardized columns.
    pub ridge: f64,
}

impl Default for Basis {
    fn default() -> Self {
        Self { x_degree: 2, forecast_degree: 2, cross: true, coords: Vec::new(), ridge: 1e-8 }
    }
}

/// Linear functionals of a state (or of a direction) seen by a basis at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub forecast: f64,
    pub coords: Vec<f64>,
    /// `‖Z‖_∞`, used to scale finite-difference steps.
    pub norm: f64,
    /// `⟨g, E Z⟩`.
    pub next_x: f64,
    /// `(E Z)[c]`.
    pub next_coords: Vec<f64>,
}

impl Observation {
    /// `obs + h · dir`.
    pub fn shifted(&self, dir: &Observation, h: f64) -> Observation {
        Observation {
            x: self.x + h * dir.x,
            forecast: self.forecast + h * dir.forecast,
            coords: self.coords.iter().zip(&dir.coords).map(|(a, b)| a + h * b).collect(),
            norm: self.norm,
            next_x: self.next_x + h * dir.next_x,
            next_coords: self.next_coords.iter().zip(&dir.next_coords).map(|(a, b)| a + h * b).collect(),
        }
    }

    /// The observation of `E Z` one step later. Its own next-step functionals
    /// are not known and are left empty.
    pub fn advanced(&self) -> Observation {
        Observation {
            x: self.next_x,
            forecast: self.forecast,
            coords: self.next_coords.clone(),
            norm: self.norm,
            next_x: f64::NAN,
            next_coords: Vec::new(),
        }
    }

    /// Functionals of a full vector at step `k` of an `n_steps` grid.
    pub fn of_state(lift: &DiscreteLift, basis: &Basis, k: usize, n_steps: usize, z: &[f64]) -> Result<Observation> {
        if z.len() != lift.dim() {
            return Err(Error::Dimension { expected: lift.dim(), got: z.len() });
        }
        Ok(Observation {
            x: lift.pair_unchecked(z),
            forecast: lift.forecast_unchecked(z, n_steps.saturating_sub(k)),
            coords: basis.coords.iter().map(|&c| z[c]).collect(),
            norm: z.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
            next_x: lift.forecast_unchecked(z, 1),
            next_coords: basis.coords.iter().map(|&c| lift.stepped_coord_unchecked(z, c)).collect(),
        })
    }
}

impl Basis {
    pub fn enlarged(n_coords: usize) -> Self {
        Self { x_degree: 3, coords: (0..n_coords).collect(), ..Self::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.x_degree > 3 || self.forecast_degree > 2 {
            return Err(Error::Invalid(format!(
                "basis degrees too high: X^{} / forecast^{} (max 3 / 2)",
                self.x_degree, self.forecast_degree
            )));
        }
        if self.cross && (self.x_degree == 0 || self.forecast_degree == 0) {
            return Err(Error::Invalid("cross term needs both X and forecast features".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Invalid(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        if let Some(&c) = self.coords.iter().find(|&&c| c >= dim) {
            return Err(Error::Invalid(format!("basis coordinate {c} outside lift dimension {dim}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        1 + self.x_degree + self.forecast_degree + usize::from(self.cross) + self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terms(&self) -> Vec<String> {
        let mut t = vec!["1".to_string()];
        for d in 1..=self.x_degree {
            t.push(if d == 1 { "X".into() } else { format!("X^{d}") });
        }
        for d in 1..=self.forecast_degree {
            t.push(if d == 1 { "F".into() } else { format!("F^{d}") });
        }
        if self.cross {
            t.push("X*F".into());
        }
        for c in &self.coords {
            t.push(format!("Z[{c}]"));
        }
        t
    }

    pub fn features_into(&self, obs: &Observation, out: &mut [f64]) {
        let mut i = 0;
        let mut push = |v: f64| {
            out[i] = v;
            i += 1;
        };
        push(1.0);
        let mut p = 1.0;
        for _ in 0..self.x_degree {
            p *= obs.x;
            push(p);
        }
        let mut p = 1.0;
        for _ in 0..self.forecast_degree {
            p *= obs.forecast;
            push(p);
        }
        if self.cross {
            push(obs.x * obs.forecast);
        }
        for &v in &obs.coords {
            push(v);
        }
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.features_into(obs, &mut out);
        out
    }

    /// `x=2;forecast=2;cross=1;coords=0,1;ridge=1e-8`.
    pub fn describe(&self) -> String {
        let coords: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        format!(
            "x={};forecast={};cross={};coords={};ridge={}",
            self.x_degree,
            self.forecast_degree,
            u8::from(self.cross),
            coords.join(","),
            self.ridge
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut b = Basis { coords: Vec::new(), ..Basis::default() };
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad basis field `{part}`")))?;
            let bad = || Error::Format(format!("bad basis value `{part}`"));
            match k.trim() {
                "x" => b.x_degree = v.trim().parse().map_err(|_| bad())?,
                "forecast" => b.forecast_degree = v.trim().parse().map_err(|_| bad())?,
                "cross" => b.cross = v.trim() == "1" || v.trim() == "true",
                "ridge" => b.ridge = v.trim().parse().map_err(|_| bad())?,
                "coords" => {
                    b.coords = v
                        .split(',')
                        .filter(|c| !c.trim().is_empty())
                        .map(|c| c.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
                _ => return Err(bad()),
            }
        }
        Ok(b)
    }

    /// Functionals of the direction `d` at step `k`: `(⟨g,d⟩, ⟨g,E^{N-k}d⟩, d[c])`.
    pub fn direction(&self, lift: &DiscreteLift, k: usize, n_steps: usize, d: &[f64]) -> Observation {
        Observation {
            x: lift.pair_unchecked(d),
            forecast: lift.forecast_unchecked(d, n_steps.saturating_sub(k)),
            coords: self.coords.iter().map(|&c| d[c]).collect(),
            norm: 0.0,
            next_x: lift.forecast_unchecked(d, 1),
            next_coords: self.coords.iter().map(|&c| lift.stepped_coord_unchecked(d, c)).collect(),
        }
    }
}

/// Reads basis observations off an ensemble, from the full states when
/// stored and from recorded functionals otherwise.
pub struct EnsembleView<'a> {
    ens: &'a PathEnsemble,
    lift: &'a DiscreteLift,
    basis: &'a Basis,
    /// Position of each basis coordinate among the recorded coordinates.
    coord_slots: Vec<usize>,
    full: bool,
}

impl<'a> EnsembleView<'a> {
    pub fn new(ens: &'a PathEnsemble, lift: &'a DiscreteLift, basis: &'a Basis) -> Result<Self> {
        let rec = ens
            .lifted
            .as_ref()
            .ok_or_else(|| Error::Invalid("backward solvers need a lifted ensemble".into()))?;
        if rec.dim != lift.dim() {
            return Err(Error::Dimension { expected: lift.dim(), got: rec.dim });
        }
        basis.validate(lift.dim())?;
        let full = rec.z.is_some();
        let mut coord_slots = Vec::with_capacity(basis.coords.len());
        if !full {
            for c in &basis.coords {
                let slot = rec.coords.iter().position(|r| r == c).ok_or_else(|| {
                    Error::Invalid(format!("basis coordinate {c} was not recorded in the ensemble"))
                })?;
                coord_slots.push(slot);
            }
        }
        Ok(Self { ens, lift, basis, coord_slots, full })
    }

    pub fn observe(&self, path: usize, k: usize) -> Observation {
        if self.full {
            let z = self.ens.z(path, k).expect("full states stored");
            let n = self.ens.n_steps();
            return Observation::of_state(self.lift, self.basis, k, n, z).expect("dimension checked");
        }
        let recorded = self.ens.coord_values(path, k);
        let next = self.ens.next_coord_values(path, k);
        Observation {
            x: self.ens.x(path, k),
            forecast: self.ens.forecast(path, k).expect("lifted ensemble"),
            coords: self.coord_slots.iter().map(|&s| recorded[s]).collect(),
            norm: self.ens.sup_norm(path, k).expect("lifted ensemble"),
            next_x: self.ens.next_pair(path, k).expect("lifted ensemble"),
            next_coords: self.coord_slots.iter().map(|&s| next[s]).collect(),
        }
    }
}

/// Ridge regression result in raw feature coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefs: Vec<f64>,
    pub r2: f64,
    pub condition: f64,
    /// Non-constant columns that entered the fit.
    pub active: usize,
}

impl LinearFit {
    pub fn constant(value: f64, len: usize) -> Self {
        let mut coefs = vec![0.0; len];
        coefs[0] = value;
        Self { coefs, r2: 1.0, condition: 1.0, active: 0 }
    }

    pub fn eval(&self, features: &[f64]) -> f64 {
        self.coefs.iter().zip(features).map(|(c, f)| c * f).sum()
    }
}

/// Least squares of `y` on `rows` (`n × p`, first column the intercept).
///
/// Columns are standardized, constant columns dropped, the intercept left
/// unpenalized, so fitted values always average to the mean of `y`.
pub fn fit(rows: &[f64], p: usize, y: &[f64], ridge: f64, step: usize) -> Result<LinearFit> {
    let n = y.len();
    if n == 0 || rows.len() != n * p {
        return Err(Error::Dimension { expected: n * p, got: rows.len() });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("regression target at row {i}, step {step}")));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut mean = vec![0.0; p];
    for r in rows.chunks_exact(p) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut sd = vec![0.0; p];
    for r in rows.chunks_exact(p) {
        for j in 1..p {
            sd[j] += (r[j] - mean[j]).powi(2);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / nf).sqrt());
    if let Some(j) = (0..p).find(|&j| !(mean[j].is_finite() && sd[j].is_finite())) {
        return Err(Error::NonFinite(format!("design column {j} at step {step}")));
    }
    let active: Vec<usize> = (1..p).filter(|&j| sd[j] > 1e-12 * (1.0 + mean[j].abs())).collect();
    let q = active.len();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if q == 0 {
        let mut f = LinearFit::constant(y_mean, p);
        f.r2 = if sst > 0.0 { 0.0 } else { 1.0 };
        return Ok(f);
    }
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    let mut s = vec![0.0; q];
    for (r, &yv) in rows.chunks_exact(p).zip(y) {
        for (a, &j) in active.iter().enumerate() {
            s[a] = (r[j] - mean[j]) / sd[j];
        }
        let yc = yv - y_mean;
        for a in 0..q {
            rhs[a] += s[a] * yc;
            for b in 0..=a {
                gram[(a, b)] += s[a] * s[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    gram /= nf;
    rhs /= nf;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > 1e8 && ridge <= 0.0 {
        return Err(Error::RankDeficient { step, condition });
    }
    for a in 0..q {
        gram[(a, a)] += ridge;
    }
    let gamma = gram
        .cholesky()
        .ok_or(Error::RankDeficient { step, condition })?
        .solve(&rhs);
    let mut coefs = vec![0.0; p];
    let mut intercept = y_mean;
    for (a, &j) in active.iter().enumerate() {
        coefs[j] = gamma[a] / sd[j];
        intercept -= coefs[j] * mean[j];
    }
    coefs[0] = intercept;
    let ssr: f64 = rows
        .chunks_exact(p)
        .zip(y)
        .map(|(r, yv)| {
            let f: f64 = coefs.iter().zip(r).map(|(c, v)| c * v).sum();
            (yv - f).powi(2)
        })
        .sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(LinearFit { coefs, r2, condition, active: q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_and_round_trip() {
        let b = Basis { coords: vec![0, 3], ..Basis::default() };
        assert_eq!(b.terms(), ["1", "X", "X^2", "F", "F^2", "X*F", "Z[0]", "Z[3]"]);
        assert_eq!(b.len(), 8);
        assert_eq!(Basis::parse(&b.describe()).unwrap(), b);
        let e = Basis::enlarged(2);
        assert_eq!(Basis::parse(&e.describe()).unwrap(), e);
        assert!(Basis { x_degree: 4, ..Basis::default() }.validate(10).is_err());
        assert!(Basis { coords: vec![10], ..Basis::default() }.validate(10).is_err());
    }

    #[test]
    fn features_follow_terms() {
        let b = Basis { coords: vec![1], ..Basis::enlarged(0) };
        let obs = Observation { x: 2.0, forecast: 3.0, coords: vec![5.0], norm: 1.0, next_x: 0.0, next_coords: vec![0.0] };
        assert_eq!(b.features(&obs), vec![1.0, 2.0, 4.0, 8.0, 3.0, 9.0, 6.0, 5.0]);
    }

    #[test]
    fn recovers_exact_polynomial() {
        let p = 3;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let x = i as f64 / 10.0 - 2.0;
            rows.extend([1.0, x, x * x]);
            y.push(0.5 - 1.5 * x + 0.25 * x * x);
        }
        let f = fit(&rows, p, &y, 0.0, 0).unwrap();
        for (a, b) in f.coefs.iter().zip([0.5, -1.5, 0.25]) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_columns_drop_and_collinear_needs_ridge() {
        let rows = vec![1.0, 7.0, 1.0, 7.0, 1.0, 7.0];
        let f = fit(&rows, 2, &[1.0, 2.0, 3.0], 0.0, 0).unwrap();
        assert_eq!(f.coefs, vec![2.0, 0.0]);
        assert_eq!(f.active, 0);
        // duplicated column
        let mut rows = Vec::new();
        for i in 0..10 {
            let x = i as f64;
            rows.extend([1.0, x, x]);
        }
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit(&rows, 3, &y, 0.0, 4), Err(Error::RankDeficient { step: 4, .. })));
        let f = fit(&rows, 3, &y, 1e-8, 4).unwrap();
        assert!((f.coefs[1] + f.coefs[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fitted_values_average_to_target_mean() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let x = (i as f64 * 0.7).sin();
            rows.extend([1.0, x, x * x]);
            y.push((i as f64 * 1.3).cos());
        }
        let f = fit(&rows, 3, &y, 0.5, 0).unwrap();
        let mean_fit: f64 = rows.chunks(3).map(|r| f.eval(r)).sum::<f64>() / 40.0;
        let mean_y: f64 = y.iter().sum::<f64>() / 40.0;
        assert!((mean_fit - mean_y).abs() < 1e-13);
    }
}
