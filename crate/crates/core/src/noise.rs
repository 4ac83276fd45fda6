//! Truncated Q-Wiener processes with sine-product eigenfunctions.
//!
//! The expansions simulated are literally
//! `W(t, x) = Σ_k a_k s_k(x) β_k(t)` with unnormalized sine products `s_k`
//! and amplitudes `a_k`. In the orthonormal eigenbasis `ê_k = s_k / ‖s_k‖`
//! this is a Q-Wiener process with eigenvalues `q_k = a_k² ‖s_k‖²`,
//! `‖s_k‖² = 2^{-dim}`. A [`QWienerPath`] stores the coordinates
//! `ΔW_k = √q_k Δβ_k` of each increment in that basis.

use std::io::{Read, Write};
use std::sync::Arc;

use num_integer::Roots;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dg_space::{read_f64_le, write_f64_le, DgFunction, DgSpace, MAX_QP};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schemes::Diffusion;

/// The diagonal enumeration `k ↦ (g₁(k), g₂(k))` of `ℕ²`.
///
/// `h(k) = ⌊3/2 + (1/4 + 2(k-1))^{1/2}⌋ = ⌊(3 + √(8k-7))/2⌋` is evaluated with an
/// integer square root, which is exact.
pub fn mode_index(k: u64) -> Result<(u64, u64)> {
    if k == 0 {
        return Err(Error::invalid("mode index k must be at least 1"));
    }
    let h = (3 + (8 * k - 7).sqrt()) / 2;
    let tri = (h - 1) * (h - 2) / 2;
    Ok((k - tri, h + tri - k))
}

/// `⌊h^{-4/3}⌋` for `h = 1/m`, computed as the integer cube root of `m⁴`.
pub fn modes_for_cells_exp1(m: usize) -> usize {
    let m4 = (m as u128).pow(4);
    m4.cbrt() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenRule<T> {
    /// Amplitude `(g₁² + g₂²)^{-2-ε/2}` over the diagonal enumeration (2-D).
    SemiLinearHeat { epsilon: T },
    /// Amplitude `k^{-5/2-2ε}` for `sin(kπx)` (1-D).
    PorousMedium { epsilon: T },
    /// Explicit eigenvalues `q_k` (normalized eigenfunctions); frequencies
    /// follow `k` in 1-D and the diagonal enumeration in 2-D.
    Eigenvalues(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QWienerSpec<T> {
    pub dim: usize,
    pub rule: EigenRule<T>,
    /// Truncation `N_U`.
    pub n_modes: usize,
}

impl<T: Scalar> QWienerSpec<T> {
    pub fn new(dim: usize, rule: EigenRule<T>, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::invalid("N_U must be at least 1"));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("dimension {dim} not supported")));
        }
        if let EigenRule::Eigenvalues(q) = &rule {
            if q.len() < n_modes {
                return Err(Error::invalid(format!(
                    "{} eigenvalues given for N_U = {n_modes}",
                    q.len()
                )));
            }
            if q.iter().any(|&v| !(v > T::zero())) {
                return Err(Error::invalid("eigenvalues must be positive"));
            }
        }
        Ok(Self {
            dim,
            rule,
            n_modes,
        })
    }

    /// Frequencies of mode `k` (1-based); the second entry is 0 in 1-D.
    pub fn frequencies(&self, k: usize) -> (usize, usize) {
        if self.dim == 1 {
            (k, 0)
        } else {
            let (a, b) = mode_index(k as u64).expect("k >= 1");
            (a as usize, b as usize)
        }
    }

    /// `‖s_k‖²` of the unnormalized sine product.
    fn sine_norm_sq(&self) -> T {
        T::lit(0.5).powi(self.dim as i32)
    }

    /// Coefficient `a_k` in front of the unnormalized sine product.
    pub fn amplitude(&self, k: usize) -> T {
        match &self.rule {
            EigenRule::SemiLinearHeat { epsilon } => {
                let (a, b) = self.frequencies(k);
                let r = T::from_usize_lossy(a * a + b * b);
                r.powf(-T::lit(2.0) - *epsilon * T::lit(0.5))
            }
            EigenRule::PorousMedium { epsilon } => {
                T::from_usize_lossy(k).powf(-T::lit(2.5) - T::lit(2.0) * *epsilon)
            }
            EigenRule::Eigenvalues(q) => (q[k - 1] / self.sine_norm_sq()).sqrt(),
        }
    }

    /// Eigenvalue `q_k` of the covariance in the normalized eigenbasis.
    pub fn eigenvalue(&self, k: usize) -> T {
        let a = self.amplitude(k);
        a * a * self.sine_norm_sq()
    }

    /// Normalized eigenfunction `ê_k`.
    pub fn eigenfunction(&self, k: usize, p: &[T; 2]) -> T {
        let pi = T::pi();
        let (a, b) = self.frequencies(k);
        let mut v = (T::from_usize_lossy(a) * pi * p[0]).sin() * T::lit(2.0).sqrt();
        if self.dim == 2 {
            v *= (T::from_usize_lossy(b) * pi * p[1]).sin() * T::lit(2.0).sqrt();
        }
        v
    }

    pub fn with_modes(&self, n_modes: usize) -> Result<Self> {
        Self::new(self.dim, self.rule.clone(), n_modes)
    }
}

/// Counter-style seed derivation: each `(sample, mode)` pair owns an
/// independent ChaCha stream, so generation order never matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub base_seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed }
    }

    pub fn stream_seed(&self, sample: u64, mode: u64) -> u64 {
        let s = splitmix(splitmix(self.base_seed) ^ splitmix(sample.wrapping_add(0xA5A5)));
        splitmix(s ^ splitmix(mode.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
    }

    pub fn stream(&self, sample: u64, mode: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed(sample, mode))
    }
}

/// Increments `ΔW_k` on a uniform time grid, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QWienerPath<T> {
    pub n_steps: usize,
    pub n_modes: usize,
    pub tau: T,
    pub t_final: T,
    pub base_seed: u64,
    pub sample_id: u64,
    /// Number of generated steps summed into each stored step.
    pub coarsening: usize,
    increments: Vec<T>,
}

impl<T: Scalar> QWienerPath<T> {
    pub fn from_increments(
        n_steps: usize,
        n_modes: usize,
        t_final: T,
        increments: Vec<T>,
    ) -> Result<Self> {
        if increments.len() != n_steps * n_modes || n_steps == 0 {
            return Err(Error::invalid("increment array does not match N × N_U"));
        }
        Ok(Self {
            n_steps,
            n_modes,
            tau: t_final / T::from_usize_lossy(n_steps),
            t_final,
            base_seed: 0,
            sample_id: 0,
            coarsening: 1,
            increments,
        })
    }

    /// A path of zero increments.
    pub fn zero(n_steps: usize, n_modes: usize, t_final: T) -> Self {
        Self::from_increments(n_steps, n_modes, t_final, vec![T::zero(); n_steps * n_modes])
            .expect("consistent shape")
    }

    /// Increments of step `n` (the interval `[t_n, t_{n+1}]`, 0-based).
    pub fn step(&self, n: usize) -> &[T] {
        &self.increments[n * self.n_modes..(n + 1) * self.n_modes]
    }

    pub fn increment(&self, n: usize, mode: usize) -> T {
        self.increments[n * self.n_modes + mode]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// `W_k(t_n)` for every mode.
    pub fn value_at(&self, n: usize) -> Vec<T> {
        let mut w = vec![T::zero(); self.n_modes];
        for s in 0..n {
            for (wk, &d) in w.iter_mut().zip(self.step(s)) {
                *wk += d;
            }
        }
        w
    }

    /// Keeps the first `n_modes` modes.
    pub fn truncate_modes(&self, n_modes: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > self.n_modes {
            return Err(Error::invalid(format!(
                "cannot truncate {} modes to {n_modes}",
                self.n_modes
            )));
        }
        let mut inc = Vec::with_capacity(self.n_steps * n_modes);
        for n in 0..self.n_steps {
            inc.extend_from_slice(&self.step(n)[..n_modes]);
        }
        Ok(Self {
            n_modes,
            increments: inc,
            ..self.clone()
        })
    }

    /// Path dump: `N` (u64), `N_U` (u64), `τ` (f64), base seed (u64), then the
    /// increments as f64, step-major; all little-endian.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&(self.n_modes as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_f64_lossy().to_le_bytes())?;
        w.write_all(&self.base_seed.to_le_bytes())?;
        write_f64_le(w, &self.increments)
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let n_steps = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let n_modes = u64::from_le_bytes(b) as usize;
        r.read_exact(&mut b)?;
        let tau = f64::from_le_bytes(b);
        r.read_exact(&mut b)?;
        let base_seed = u64::from_le_bytes(b);
        let inc = read_f64_le(r, n_steps * n_modes)?;
        let mut p = Self::from_increments(
            n_steps,
            n_modes,
            T::lit(tau * n_steps as f64),
            inc,
        )?;
        p.tau = T::lit(tau);
        p.base_seed = base_seed;
        Ok(p)
    }
}

/// Draws `N × N_U` independent `N(0, q_k τ)` increments for one sample.
pub fn sample_increments<T: Scalar>(
    spec: &QWienerSpec<T>,
    n_steps: usize,
    t_final: T,
    policy: SeedPolicy,
    sample_id: u64,
) -> Result<QWienerPath<T>> {
    if n_steps == 0 {
        return Err(Error::invalid("need at least one time step"));
    }
    if !(t_final > T::zero()) {
        return Err(Error::invalid("final time must be positive"));
    }
    let tau = t_final / T::from_usize_lossy(n_steps);
    let nm = spec.n_modes;
    let mut inc = vec![T::zero(); n_steps * nm];
    for k in 0..nm {
        let sd = (spec.eigenvalue(k + 1) * tau).sqrt();
        let mut rng = policy.stream(sample_id, k as u64);
        for n in 0..n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            inc[n * nm + k] = sd * T::lit(z);
        }
    }
    Ok(QWienerPath {
        n_steps,
        n_modes: nm,
        tau,
        t_final,
        base_seed: policy.base_seed,
        sample_id,
        coarsening: 1,
        increments: inc,
    })
}

/// Sums increments over blocks of `factor` steps. `factor` must be a power of
/// two dividing `N`; summation is pairwise, so coarsening by `2` twice is
/// bit-identical to coarsening by `4`.
pub fn coarsen_path<T: Scalar>(path: &QWienerPath<T>, factor: usize) -> Result<QWienerPath<T>> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::invalid(format!("coarsening factor {factor} is not dyadic")));
    }
    if path.n_steps % factor != 0 {
        return Err(Error::invalid(format!(
            "coarsening factor {factor} does not divide N = {}",
            path.n_steps
        )));
    }
    let mut out = path.clone();
    let mut f = factor;
    while f > 1 {
        out = halve(&out);
        f /= 2;
    }
    Ok(out)
}

fn halve<T: Scalar>(p: &QWienerPath<T>) -> QWienerPath<T> {
    let nm = p.n_modes;
    let n = p.n_steps / 2;
    let mut inc = vec![T::zero(); n * nm];
    for s in 0..n {
        let a = p.step(2 * s);
        let b = p.step(2 * s + 1);
        for k in 0..nm {
            inc[s * nm + k] = a[k] + b[k];
        }
    }
    QWienerPath {
        n_steps: n,
        tau: p.tau + p.tau,
        coarsening: p.coarsening * 2,
        increments: inc,
        ..p.clone()
    }
}

/// Multiplicative noise `B_h(v) ΔW = P_h(c · v · Σ_k ê_k ΔW_k)`.
///
/// Sine tables are precomputed on the quadrature abscissae of each axis so
/// the noise field is evaluated separably.
#[derive(Debug, Clone)]
pub struct MultiplicativeNoise<T> {
    space: Arc<DgSpace<T>>,
    pub spec: QWienerSpec<T>,
    pub scale: T,
    /// `sin(g π x)` for `g = 1..=max_g`, per abscissa (row `g-1`).
    sines: Vec<Vec<T>>,
    n_coords: usize,
    freqs: Vec<(usize, usize)>,
}

impl<T: Scalar> MultiplicativeNoise<T> {
    pub fn new(space: Arc<DgSpace<T>>, spec: QWienerSpec<T>, scale: T) -> Result<Self> {
        if spec.dim != space.dim() {
            return Err(Error::invalid("noise and space dimensions differ"));
        }
        let freqs: Vec<(usize, usize)> =
            (1..=spec.n_modes).map(|k| spec.frequencies(k)).collect();
        let max_g = freqs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(1);
        let m = space.mesh.cells_per_axis;
        let nq1 = space.rule.len();
        let h = space.h();
        let half = T::lit(0.5);
        let coords: Vec<T> = (0..m)
            .flat_map(|e| {
                let rule = &space.rule;
                (0..nq1).map(move |q| {
                    (T::from_usize_lossy(e) + (rule.nodes[q] + T::one()) * half) * h
                })
            })
            .collect();
        let pi = T::pi();
        let sines = (1..=max_g)
            .map(|g| {
                coords
                    .iter()
                    .map(|&x| (T::from_usize_lossy(g) * pi * x).sin())
                    .collect()
            })
            .collect();
        Ok(Self {
            n_coords: coords.len(),
            space,
            spec,
            scale,
            sines,
            freqs,
        })
    }

    /// `Σ_k ê_k(x) ΔW_k` on the tensor grid of quadrature abscissae
    /// (x index fastest in 2-D).
    pub fn field(&self, dw: &[T]) -> Vec<T> {
        let nc = self.n_coords;
        let norm = T::lit(2.0).powi(self.spec.dim as i32).sqrt();
        if self.spec.dim == 1 {
            let mut f = vec![T::zero(); nc];
            for (k, &(g, _)) in self.freqs.iter().enumerate() {
                let c = dw[k] * norm;
                if c == T::zero() {
                    continue;
                }
                for (fi, &s) in f.iter_mut().zip(&self.sines[g - 1]) {
                    *fi += c * s;
                }
            }
            return f;
        }
        // inner[g1][iy] = Σ_{k: g₁(k) = g1} ΔW_k sin(g₂(k) π y)
        let max_g1 = self.freqs.iter().map(|f| f.0).max().unwrap_or(1);
        let mut inner = vec![vec![T::zero(); nc]; max_g1];
        let mut used = vec![false; max_g1];
        for (k, &(g1, g2)) in self.freqs.iter().enumerate() {
            let c = dw[k] * norm;
            if c == T::zero() {
                continue;
            }
            used[g1 - 1] = true;
            for (v, &s) in inner[g1 - 1].iter_mut().zip(&self.sines[g2 - 1]) {
                *v += c * s;
            }
        }
        let mut f = vec![T::zero(); nc * nc];
        for g1 in 0..max_g1 {
            if !used[g1] {
                continue;
            }
            let sx = &self.sines[g1];
            for iy in 0..nc {
                let c = inner[g1][iy];
                let row = &mut f[iy * nc..(iy + 1) * nc];
                for (r, &s) in row.iter_mut().zip(sx) {
                    *r += c * s;
                }
            }
        }
        f
    }

    pub fn apply_into(&self, v: &[T], dw: &[T], out: &mut [T]) -> Result<()> {
        if dw.len() != self.spec.n_modes {
            return Err(Error::invalid(format!(
                "{} increments for N_U = {}",
                dw.len(),
                self.spec.n_modes
            )));
        }
        let sp = &self.space;
        let nl = sp.dofs_per_element;
        let field = self.field(dw);
        let m = sp.mesh.cells_per_axis;
        let nq1 = sp.rule.len();
        let nc = self.n_coords;
        let mut vals = [T::zero(); MAX_QP];
        for e in 0..sp.mesh.num_elements() {
            let vq = sp.values_at_qp(v, e);
            let (ex, ey) = (e % m, e / m);
            for q in 0..sp.num_qp() {
                let w = if sp.dim() == 1 {
                    field[e * nq1 + q]
                } else {
                    let (qx, qy) = (q % nq1, q / nq1);
                    field[(ey * nq1 + qy) * nc + ex * nq1 + qx]
                };
                vals[q] = self.scale * vq[q] * w;
            }
            sp.project_qp_values(&vals[..sp.num_qp()], e, &mut out[e * nl..(e + 1) * nl]);
        }
        Ok(())
    }
}

impl<T: Scalar> Diffusion<T> for MultiplicativeNoise<T> {
    fn n_modes(&self) -> usize {
        self.spec.n_modes
    }

    fn apply(&self, _t: T, v: &[T], dw: &[T], out: &mut [T]) -> Result<()> {
        self.apply_into(v, dw, out)
    }
}

/// One-shot `P_h(c · v · Σ_k ê_k ΔW_k)`.
pub fn apply_diffusion<T: Scalar>(
    space: &Arc<DgSpace<T>>,
    v: &DgFunction<T>,
    spec: &QWienerSpec<T>,
    dw: &[T],
    scale: T,
) -> Result<DgFunction<T>> {
    let noise = MultiplicativeNoise::new(space.clone(), spec.clone(), scale)?;
    let mut out = vec![T::zero(); space.total_dofs()];
    noise.apply_into(&v.coefficients, dw, &mut out)?;
    Ok(DgFunction::new(space.clone(), out))
}
