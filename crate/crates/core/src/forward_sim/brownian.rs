use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Named random substreams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Uncontrolled ensemble shared by the backward solvers.
    Forward,
    /// Common noise for comparing policies.
    Evaluation,
    /// Parameters of randomly drawn policies.
    Policies,
    Custom(u64),
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::Forward => 0x0F0F_0001,
            Phase::Evaluation => 0x0F0F_0002,
            Phase::Policies => 0x0F0F_0003,
            Phase::Custom(v) => 0x1000_0000_0000_0000 ^ v,
        }
    }
}

/// SplitMix64 finalizer, used to decorrelate `(seed, phase)` pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one path: the phase picks the key, the global path id picks the
/// ChaCha stream, so any subset of paths can be regenerated on its own.
pub fn path_rng(seed: u64, phase: Phase, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(phase.tag())));
    rng.set_stream(path_id);
    rng
}

/// Brownian increments on a uniform grid, one row per path.
#[derive(Debug, Clone)]
pub struct BrownianGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub phase: Phase,
    /// Global id of the first row (rows are `path_offset..path_offset + n_paths`).
    pub path_offset: u64,
    n_paths: usize,
    increments: Vec<f64>,
}

impl BrownianGrid {
    pub fn generate(t0: f64, t_end: f64, n_steps: usize, n_paths: usize, seed: u64, phase: Phase) -> Result<Self> {
        Self::generate_range(t0, t_end, n_steps, 0, n_paths, seed, phase)
    }

    /// Generates rows for global path ids `offset..offset + n_paths`.
    pub fn generate_range(
        t0: f64,
        t_end: f64,
        n_steps: usize,
        offset: u64,
        n_paths: usize,
        seed: u64,
        phase: Phase,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Invalid("grid needs at least one step".into()));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::Invalid(format!("bad time interval [{t0}, {t_end}]")));
        }
        let dt = (t_end - t0) / n_steps as f64;
        let scale = dt.sqrt();
        let rows: Vec<Vec<f64>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(seed, phase, offset + i);
                (0..n_steps)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            t0,
            t_end,
            n_steps,
            dt,
            seed,
            phase,
            path_offset: offset,
            n_paths,
            increments: rows.concat(),
        })
    }

    /// Grid with caller-supplied increments (`n_paths × n_steps`, row-major).
    pub fn from_increments(t0: f64, t_end: f64, n_steps: usize, increments: Vec<f64>) -> Result<Self> {
        if n_steps == 0 || increments.len() % n_steps != 0 {
            return Err(Error::Dimension { expected: n_steps, got: increments.len() });
        }
        if !(t_end > t0) {
            return Err(Error::Invalid(format!("bad time interval [{t0}, {t_end}]")));
        }
        Ok(Self {
            t0,
            t_end,
            n_steps,
            dt: (t_end - t0) / n_steps as f64,
            seed: 0,
            phase: Phase::Custom(0),
            path_offset: 0,
            n_paths: increments.len() / n_steps,
            increments,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.increments[i * self.n_steps..(i + 1) * self.n_steps]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
}
