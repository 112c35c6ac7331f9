//! Fréchet distance between Gaussian fits of two feature sets.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::extractor::FeatureExtractor;
use crate::image::ImageTensor;
use crate::pairs::{sample_indices, ExamplePair};
use crate::scalar::matmul;

/// Eigenvalues below `-NEGATIVE_EIG_TOL * scale` are reported when clamped.
const NEGATIVE_EIG_TOL: f64 = 1e-6;

/// Mean and unbiased covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct FidStats {
    pub mu: Vec<f64>,
    /// Row-major `dim x dim`.
    pub sigma: Vec<f64>,
    pub n: usize,
}

impl FidStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let d = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != d) {
            return Err(Error::Dimension { left: d, right: bad.len() });
        }
        let mut mu = vec![0.0; d];
        for f in features {
            for (m, &v) in mu.iter_mut().zip(f) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= n as f64);
        let mut centred = Vec::with_capacity(n * d);
        for f in features {
            centred.extend(f.iter().zip(&mu).map(|(v, m)| v - m));
        }
        let mut sigma = vec![0.0; d * d];
        matmul(d, n, d, &centred, true, &centred, false, &mut sigma, false);
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = 0.5 * (sigma[i * d + j] + sigma[j * d + i]) / denom;
                sigma[i * d + j] = v;
                sigma[j * d + i] = v;
            }
        }
        Ok(Self { mu, sigma, n })
    }

    /// Stats from explicit moments; `sigma` must be `mu.len()` squared.
    pub fn from_moments(mu: Vec<f64>, sigma: Vec<f64>, n: usize) -> Result<Self> {
        if sigma.len() != mu.len() * mu.len() {
            return Err(Error::Dimension { left: mu.len() * mu.len(), right: sigma.len() });
        }
        Ok(Self { mu, sigma, n })
    }

    fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.sigma)
    }

    fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.sigma[i * self.dim() + i]).sum()
    }
}

/// Mean and covariance of the extractor's features over `images`.
pub fn feature_stats<E: FeatureExtractor + ?Sized>(images: &[ImageTensor], extractor: &E) -> Result<FidStats> {
    if images.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: images.len() });
    }
    let features: Vec<Vec<f64>> = images.iter().map(|img| extractor.extract(img)).collect::<Result<_>>()?;
    FidStats::from_features(&features)
}

/// Result of a distance computation before and after clamping at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrechetReport {
    pub value: f64,
    pub raw: f64,
    /// Most negative eigenvalue clamped inside the square roots.
    pub clamped_eigenvalue: f64,
}

fn symmetric_eigen(m: DMatrix<f64>, a: &FidStats, b: &FidStats) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let dim = m.nrows();
    SymmetricEigen::try_new(m, f64::EPSILON, 1000 * dim.max(1)).ok_or(Error::SqrtNonConvergence {
        dim,
        trace_a: a.trace(),
        trace_b: b.trace(),
    })
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the product root is taken as `tr((A S_b A)^(1/2))` with
/// `A = S_a^(1/2)`, which has the same eigenvalues and stays symmetric;
/// negative eigenvalues from rounding are clamped to zero.
pub fn frechet_distance_report(a: &FidStats, b: &FidStats) -> Result<FrechetReport> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { left: a.dim(), right: b.dim() });
    }
    let d = a.dim();
    let mean_term: f64 = a.mu.iter().zip(&b.mu).map(|(x, y)| (x - y) * (x - y)).sum();

    let eig_a = symmetric_eigen(a.sigma_matrix(), a, b)?;
    let mut clamped: f64 = 0.0;
    let roots = eig_a.eigenvalues.map(|l| {
        clamped = clamped.min(l);
        libm::sqrt(l.max(0.0))
    });
    let root_a = &eig_a.eigenvectors * DMatrix::from_diagonal(&roots) * eig_a.eigenvectors.transpose();
    let mut inner = &root_a * b.sigma_matrix() * &root_a;
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (inner[(i, j)] + inner[(j, i)]);
            inner[(i, j)] = v;
            inner[(j, i)] = v;
        }
    }
    let eig_inner = symmetric_eigen(inner, a, b)?;
    let tr_root: f64 = eig_inner
        .eigenvalues
        .iter()
        .map(|&l| {
            clamped = clamped.min(l);
            libm::sqrt(l.max(0.0))
        })
        .sum();

    let scale = a.trace().abs().max(b.trace().abs()).max(1.0);
    if clamped < -NEGATIVE_EIG_TOL * scale {
        log::warn!("clamped eigenvalue {clamped:.3e} in covariance square root (scale {scale:.3e})");
    }
    let raw = mean_term + a.trace() + b.trace() - 2.0 * tr_root;
    if raw < 0.0 {
        log::debug!("frechet distance {raw:.3e} clamped to 0");
    }
    Ok(FrechetReport { value: raw.max(0.0), raw, clamped_eigenvalue: clamped })
}

pub fn frechet_distance(a: &FidStats, b: &FidStats) -> Result<f64> {
    Ok(frechet_distance_report(a, b)?.value)
}

/// FID between reconstructions of a seeded sample of `pairs` and their
/// targets. `reconstruct` maps a pair to the generated image.
pub fn evaluate_fid<E, F>(
    pairs: &[ExamplePair],
    mut reconstruct: F,
    extractor: &E,
    sample_size: usize,
    seed: u64,
) -> Result<f64>
where
    E: FeatureExtractor + ?Sized,
    F: FnMut(&ExamplePair) -> Result<ImageTensor>,
{
    if sample_size < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: sample_size });
    }
    let idx = sample_indices(pairs.len(), sample_size, seed);
    let mut generated = Vec::with_capacity(idx.len());
    let mut real = Vec::with_capacity(idx.len());
    for &i in &idx {
        generated.push(extractor.extract(&reconstruct(&pairs[i])?)?);
        real.push(extractor.extract(&pairs[i].target)?);
    }
    let a = FidStats::from_features(&generated)?;
    let b = FidStats::from_features(&real)?;
    frechet_distance(&a, &b)
}
