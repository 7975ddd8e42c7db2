//! Truncated Karhunen–Loève models of random coefficient fields.
//!
//! A radial covariance kernel is collocated at the mesh nodes, compressed by
//! a greedy pivoted Cholesky factorization `K ≈ L Lᵀ`, and turned into
//! mass-orthonormal modes by the reduced eigenproblem `Lᵀ M L φ̃ = σ φ̃`.
//! Samples are `mean + amplitude · Σ z_i · modes_i` with `z_i ~ U[-1/2, 1/2]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_sorted, CsrMatrix};
use crate::mesh::{Mesh, NodalField};

/// Variance of a uniform variable on `[-1/2, 1/2]`.
pub const UNIFORM_VARIANCE: f64 = 1.0 / 12.0;

/// Radial Gaussian kernel `g(r) = exp(-r²/scale) / sqrt(scale·π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    pub scale: f64,
}

impl KernelSpec {
    pub fn gaussian(scale: f64) -> Self {
        Self {
            name: "gaussian".into(),
            scale,
        }
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        (-r * r / self.scale).exp() / (self.scale * std::f64::consts::PI).sqrt()
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian(20.0)
    }
}

/// Output of [`pivoted_cholesky`].
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// `n × k` factor with `C ≈ L Lᵀ`.
    pub factor: DMatrix<f64>,
    pub pivots: Vec<usize>,
    /// Residual trace before the first pivot and after every pivot.
    pub trace_history: Vec<f64>,
}

impl PivotedCholesky {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn trace_error(&self) -> f64 {
        *self.trace_history.last().expect("history is never empty")
    }
}

/// Greedy pivoted Cholesky factorization of an `n × n` symmetric positive
/// semidefinite matrix given entrywise.
///
/// Stops as soon as the residual trace is at most `trace_tol`, or when every
/// remaining diagonal is at round-off level relative to the initial maximum.
pub fn pivoted_cholesky(
    n: usize,
    entry: impl Fn(usize, usize) -> f64,
    trace_tol: f64,
    max_rank: usize,
) -> Result<PivotedCholesky> {
    let mut d: Vec<f64> = (0..n).map(|i| entry(i, i)).collect();
    let max0 = d.iter().copied().fold(0.0, f64::max);
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NotSpsd { index: i, value: v });
    }
    let neg_floor = -(trace_tol + 1e-12 * max0);
    let zero_level = 1e-14 * max0;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut trace = d.iter().sum::<f64>();
    let mut history = vec![trace];
    while trace > trace_tol {
        let (p, dp) = d
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        if dp <= zero_level {
            break;
        }
        if pivots.len() == max_rank {
            return Err(Error::RankExhausted {
                rank: max_rank,
                achieved: trace,
            });
        }
        let root = dp.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            if d[i] == 0.0 && i != p {
                continue;
            }
            let mut s = entry(i, p);
            for c in &cols {
                s -= c[i] * c[p];
            }
            col[i] = s / root;
        }
        col[p] = root;
        for i in 0..n {
            d[i] -= col[i] * col[i];
            if d[i] < neg_floor {
                return Err(Error::NotSpsd { index: i, value: d[i] });
            }
            if d[i] < 0.0 {
                d[i] = 0.0;
            }
        }
        d[p] = 0.0;
        cols.push(col);
        pivots.push(p);
        trace = d.iter().sum();
        history.push(trace);
    }
    let factor = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    Ok(PivotedCholesky {
        factor,
        pivots,
        trace_history: history,
    })
}

/// Truncated Karhunen–Loève expansion over the mesh nodes.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    pub mean: f64,
    pub amplitude: f64,
    /// `n_nodes × k`; column `i` is `sqrt(σ_i) φ_i`.
    pub modes: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    /// Trace error of the underlying pivoted Cholesky factorization.
    pub trace_error: f64,
}

impl KlExpansion {
    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn with_mean_amplitude(mut self, mean: f64, amplitude: f64) -> Self {
        self.mean = mean;
        self.amplitude = amplitude;
        self
    }

    pub fn mode(&self, i: usize) -> NodalField {
        NodalField {
            values: self.modes.column(i).iter().copied().collect(),
        }
    }

    /// Perturbation `Σ z_i modes_i` without mean or amplitude.
    pub fn fluctuation(&self, z: &[f64]) -> NodalField {
        let v = &self.modes * DVector::from_column_slice(z);
        NodalField {
            values: v.as_slice().to_vec(),
        }
    }

    /// `mean + amplitude · Σ z_i modes_i`.
    pub fn field(&self, z: &[f64]) -> NodalField {
        let mut f = self.fluctuation(z);
        for v in &mut f.values {
            *v = self.mean + self.amplitude * *v;
        }
        f
    }

    /// Almost-sure bound `½ Σ_i ‖modes_i‖_∞` on the sup norm of the fluctuation.
    pub fn sup_bound(&self) -> f64 {
        0.5 * self
            .modes
            .column_iter()
            .map(|c| c.amax())
            .sum::<f64>()
    }

    /// Draws `z` from `rng` and returns the sampled field together with `z`.
    pub fn sample(&self, rng: &mut impl Rng) -> (NodalField, Vec<f64>) {
        let z = draw_uniform(self.rank(), rng);
        (self.field(&z), z)
    }

    pub fn to_json(&self) -> KlJson {
        KlJson {
            sigmas: self.sigmas.clone(),
            modes: self.modes.as_slice().to_vec(),
            n_nodes: self.n_nodes(),
            k: self.rank(),
            mean: self.mean,
            amplitude: self.amplitude,
            trace_error: self.trace_error,
            seed_policy: SEED_POLICY.into(),
        }
    }

    pub fn from_json(json: KlJson) -> Result<Self> {
        if json.modes.len() != json.n_nodes * json.k || json.sigmas.len() != json.k {
            return Err(Error::Dimension("KL json sizes are inconsistent".into()));
        }
        Ok(Self {
            mean: json.mean,
            amplitude: json.amplitude,
            modes: DMatrix::from_column_slice(json.n_nodes, json.k, &json.modes),
            sigmas: json.sigmas,
            trace_error: json.trace_error,
        })
    }
}

pub const SEED_POLICY: &str = "chacha8; stream = 2*sample_index + field (mu=0, eps=1)";

/// JSON form of a [`KlExpansion`]; `modes` is column-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KlJson {
    pub sigmas: Vec<f64>,
    pub modes: Vec<f64>,
    pub n_nodes: usize,
    pub k: usize,
    pub mean: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub trace_error: f64,
    #[serde(rename = "seed-policy", alias = "seed_policy")]
    pub seed_policy: String,
}

/// Builds the expansion of `kernel` on the mesh nodes. `mass` must be the
/// unit-coefficient mass matrix over all nodes.
pub fn build_kl(
    mesh: &Mesh,
    kernel: &KernelSpec,
    mass: &CsrMatrix,
    trace_tol: f64,
    max_rank: usize,
) -> Result<KlExpansion> {
    let nodes = mesh.nodes();
    let entry = |i: usize, j: usize| {
        let (a, b) = (nodes[i], nodes[j]);
        kernel.evaluate(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
    };
    build_kl_from_gram(mesh.n_nodes(), entry, mass, trace_tol, max_rank)
}

/// Same as [`build_kl`] for an arbitrary nodal Gram matrix.
pub fn build_kl_from_gram(
    n: usize,
    entry: impl Fn(usize, usize) -> f64,
    mass: &CsrMatrix,
    trace_tol: f64,
    max_rank: usize,
) -> Result<KlExpansion> {
    if mass.nrows() != n {
        return Err(Error::Config(format!(
            "KL mass matrix has {} rows but the Gram matrix has {n}",
            mass.nrows()
        )));
    }
    let chol = pivoted_cholesky(n, entry, trace_tol, max_rank)?;
    let l = &chol.factor;
    let ml = mass.mul_dense(l);
    let reduced = l.transpose() * &ml;
    let (vals, vecs) = sym_eigen_sorted(&reduced);
    let k = vals.len();
    let top = vals.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 && k > 0 {
        return Err(Error::Config("mass matrix is singular on the KL range".into()));
    }
    let mut sigmas = Vec::new();
    let mut cols = Vec::new();
    for idx in (0..k).rev() {
        if vals[idx] <= 1e-14 * top {
            continue;
        }
        sigmas.push(vals[idx]);
        cols.push(l * vecs.column(idx));
    }
    let modes = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(KlExpansion {
        mean: 1.0,
        amplitude: 1.0,
        modes,
        sigmas,
        trace_error: chol.trace_error(),
    })
}

/// Which random field a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldId {
    Mu = 0,
    Eps = 1,
}

/// Independent, reproducible random stream for one sample of one field.
pub fn sample_stream(master_seed: u64, sample_index: u64, field: FieldId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index * 2 + field as u64);
    rng
}

/// `k` i.i.d. draws from `U[-1/2, 1/2]`.
pub fn draw_uniform(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>() - 0.5).collect()
}
