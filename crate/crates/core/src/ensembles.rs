//! Measurement ensembles, sparse signals, sphere noise and problem instances.
//!
//! All generators are pure functions of their size arguments and a 64-bit
//! seed. Each generator keys its own ChaCha8 stream off the seed, so the same
//! seed handed to a matrix generator and a signal generator still yields
//! independent draws.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dotc, norm2, CMatrix, CVector, IndexSet};
use crate::rng::{derive_seed, rng_from_seed, TrialRng};

/// Tolerance on column norms accepted from outside sources.
const UNIT_NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ensemble {
    Gaussian,
    PartialFourier,
    User,
}

impl Ensemble {
    pub fn as_str(self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::PartialFourier => "fourier",
            Ensemble::User => "user",
        }
    }

    fn tag(self) -> u32 {
        match self {
            Ensemble::Gaussian => 0,
            Ensemble::PartialFourier => 1,
            Ensemble::User => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Ensemble::Gaussian),
            1 => Ok(Ensemble::PartialFourier),
            2 => Ok(Ensemble::User),
            other => Err(Error::Format(format!("unknown ensemble tag {other}"))),
        }
    }

    /// Draws a matrix from this ensemble. `User` has no generator.
    pub fn generate(self, rows: usize, cols: usize, seed: u64) -> Result<MeasurementMatrix> {
        collect_columns(self, rows, cols, seed)
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Ensemble::Gaussian),
            "fourier" | "partial_fourier" | "partial-fourier" => Ok(Ensemble::PartialFourier),
            "user" => Ok(Ensemble::User),
            other => Err(Error::Parameter(format!("unknown ensemble '{other}'"))),
        }
    }
}

/// An `N × K` matrix with unit-norm columns and the recipe that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    matrix: CMatrix,
    ensemble: Ensemble,
    seed: u64,
}

impl MeasurementMatrix {
    /// Rescales every column of a user-supplied matrix to unit norm.
    pub fn from_user(mut matrix: CMatrix) -> Result<Self> {
        for j in 0..matrix.cols() {
            let col = matrix.column_mut(j);
            let n = norm2(col);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Domain(format!("column {j} cannot be normalized")));
            }
            col.iter_mut().for_each(|z| *z /= n);
        }
        Ok(MeasurementMatrix {
            matrix,
            ensemble: Ensemble::User,
            seed: 0,
        })
    }

    /// Wraps a matrix whose columns must already be unit norm.
    pub fn from_normalized(matrix: CMatrix, ensemble: Ensemble, seed: u64) -> Result<Self> {
        for j in 0..matrix.cols() {
            let deviation = (norm2(matrix.column(j)) - 1.0).abs();
            if deviation > UNIT_NORM_TOL {
                return Err(Error::Domain(format!(
                    "column {j} has norm deviating from 1 by {deviation:e}"
                )));
            }
        }
        Ok(MeasurementMatrix { matrix, ensemble, seed })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn max_column_norm_deviation(&self) -> f64 {
        (0..self.cols())
            .map(|j| (norm2(self.matrix.column(j)) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn normal(rng: &mut TrialRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Real i.i.d. standard normal entries, columns rescaled to unit norm.
pub fn gen_gaussian(rows: usize, cols: usize, seed: u64) -> Result<MeasurementMatrix> {
    collect_columns(Ensemble::Gaussian, rows, cols, seed)
}

/// Streams the columns of an ensemble draw, in order, without materializing
/// the matrix. The columns are bit-identical to those of the generated
/// [`MeasurementMatrix`] for the same arguments.
pub fn for_each_column(
    ensemble: Ensemble,
    rows: usize,
    cols: usize,
    seed: u64,
    mut visit: impl FnMut(usize, &[Complex64]),
) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::Domain("matrix sizes must be positive".into()));
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    match ensemble {
        Ensemble::Gaussian => {
            let mut rng = rng_from_seed(derive_seed(seed, "gaussian", rows as u64, cols as u64));
            let mut draw = vec![0.0f64; rows];
            for j in 0..cols {
                draw.iter_mut().for_each(|v| *v = normal(&mut rng));
                let n = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
                // A zero column has probability zero; it would fail the unit-norm check.
                let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
                for (c, v) in column.iter_mut().zip(&draw) {
                    *c = Complex64::new(v * scale, 0.0);
                }
                visit(j, &column);
            }
        }
        Ensemble::PartialFourier => {
            if rows > cols {
                return Err(Error::Dimension {
                    expected: cols,
                    found: rows,
                });
            }
            let mut rng = rng_from_seed(derive_seed(seed, "partial_fourier", rows as u64, cols as u64));
            let selected = partial_shuffle(cols, rows, &mut rng);
            // exp(-2πi t/K)/√K · √(K/N) = exp(-2πi t/K)/√N, indexed by t = r·k mod K.
            let scale = 1.0 / (rows as f64).sqrt();
            let twiddles: Vec<Complex64> = (0..cols)
                .map(|t| {
                    let (s, c) = (-2.0 * PI * t as f64 / cols as f64).sin_cos();
                    Complex64::new(c * scale, s * scale)
                })
                .collect();
            for k in 0..cols {
                for (c, &r) in column.iter_mut().zip(&selected) {
                    *c = twiddles[(r * k) % cols];
                }
                visit(k, &column);
            }
        }
        Ensemble::User => {
            return Err(Error::Parameter(
                "the user ensemble is loaded from a container, not generated".into(),
            ))
        }
    }
    Ok(())
}

fn collect_columns(ensemble: Ensemble, rows: usize, cols: usize, seed: u64) -> Result<MeasurementMatrix> {
    let mut data = Vec::with_capacity(rows * cols);
    for_each_column(ensemble, rows, cols, seed, |_, column| data.extend_from_slice(column))?;
    let matrix = CMatrix::from_column_major(rows, cols, data)?;
    MeasurementMatrix::from_normalized(matrix, ensemble, seed)
}

/// First `count` entries of a Fisher–Yates shuffle of `0..len`.
fn partial_shuffle(len: usize, count: usize, rng: &mut TrialRng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = rng.gen_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// `N` distinct rows of the unitary `K × K` DFT, rescaled to unit columns.
pub fn gen_partial_fourier(rows: usize, cols: usize, seed: u64) -> Result<MeasurementMatrix> {
    collect_columns(Ensemble::PartialFourier, rows, cols, seed)
}

/// `max_{i<j} |⟨a_i, a_j⟩|`.
pub fn mutual_coherence(a: &MeasurementMatrix) -> Result<f64> {
    let m = a.matrix();
    if m.cols() < 2 {
        return Err(Error::Domain("coherence needs at least two columns".into()));
    }
    let mu = (0..m.cols() - 1)
        .into_par_iter()
        .map(|i| {
            let ci = m.column(i);
            (i + 1..m.cols())
                .map(|j| dotc(ci, m.column(j)).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(mu)
}

/// An `M`-sparse vector of length `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSignal {
    length: usize,
    support: IndexSet,
    /// Values in support order.
    values: Vec<Complex64>,
}

impl SparseSignal {
    pub fn new(length: usize, support: IndexSet, values: Vec<Complex64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::Dimension {
                expected: support.len(),
                found: values.len(),
            });
        }
        if support.bound() > length {
            return Err(Error::Domain(format!(
                "support index {} outside signal length {length}",
                support.bound() - 1
            )));
        }
        if values.iter().any(|v| *v == Complex64::new(0.0, 0.0)) {
            return Err(Error::Domain("sparse signal values must be nonzero".into()));
        }
        Ok(SparseSignal {
            length,
            support,
            values,
        })
    }

    /// The all-zero signal of the given length.
    pub fn zero(length: usize) -> Self {
        SparseSignal {
            length,
            support: IndexSet::empty(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn min_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn to_dense(&self) -> CVector {
        let mut dense = CVector::zeros(self.length);
        for (i, v) in self.support.iter().zip(&self.values) {
            dense.as_mut_slice()[i] = *v;
        }
        dense
    }

    /// `A x`, touching only the support columns.
    pub fn measure(&self, a: &MeasurementMatrix) -> Result<CVector> {
        if a.cols() != self.length {
            return Err(Error::Dimension {
                expected: a.cols(),
                found: self.length,
            });
        }
        let m = a.matrix();
        let mut out = vec![Complex64::new(0.0, 0.0); m.rows()];
        for (j, v) in self.support.iter().zip(&self.values) {
            crate::linalg::axpy(*v, m.column(j), &mut out);
        }
        Ok(CVector::from_raw(out))
    }
}

fn random_support(length: usize, sparsity: usize, rng: &mut TrialRng) -> Result<IndexSet> {
    if sparsity == 0 || sparsity > length {
        return Err(Error::Domain(format!("sparsity {sparsity} must lie in 1..={length}")));
    }
    Ok(IndexSet::from_indices(partial_shuffle(length, sparsity, rng)))
}

/// Uniform random support with values `1 + χ`, `χ ~ N(0, 1)`.
pub fn gen_signal(length: usize, sparsity: usize, seed: u64) -> Result<SparseSignal> {
    let mut rng = rng_from_seed(derive_seed(seed, "signal", length as u64, sparsity as u64));
    let support = random_support(length, sparsity, &mut rng)?;
    let values = (0..sparsity)
        .map(|_| loop {
            let v = 1.0 + normal(&mut rng);
            if v != 0.0 {
                break Complex64::new(v, 0.0);
            }
        })
        .collect();
    SparseSignal::new(length, support, values)
}

/// Uniform random support with every value set to `value`.
pub fn gen_constant_signal(length: usize, sparsity: usize, value: f64, seed: u64) -> Result<SparseSignal> {
    let mut rng = rng_from_seed(derive_seed(seed, "constant_signal", length as u64, sparsity as u64));
    let support = random_support(length, sparsity, &mut rng)?;
    SparseSignal::new(length, support, vec![Complex64::new(value, 0.0); sparsity])
}

/// A point drawn uniformly from the real unit sphere in `N` dimensions.
pub fn sample_sphere(dim: usize, seed: u64) -> Result<CVector> {
    if dim == 0 {
        return Err(Error::Domain("sphere dimension must be positive".into()));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "sphere", dim as u64, 0));
    loop {
        let draw: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let n = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            let unit: Vec<f64> = draw.iter().map(|v| v / n).collect();
            return Ok(CVector::from_real(&unit));
        }
    }
}

/// One draw of `A x + e = b`.
#[derive(Clone, Debug)]
pub struct ProblemInstance<'a> {
    pub matrix: &'a MeasurementMatrix,
    pub signal: SparseSignal,
    pub noise: CVector,
    pub observation: CVector,
    /// `‖e‖₂ / ‖A x‖₂`; zero for pure-noise instances.
    pub delta: f64,
    /// `‖A x‖₂`.
    pub noiseless_norm: f64,
}

impl ProblemInstance<'_> {
    pub fn noise_norm(&self) -> f64 {
        self.noise.norm2()
    }
}

/// `b = A x + e` with `e` uniform on the sphere of radius `delta ‖A x‖₂`.
pub fn make_instance<'a>(
    a: &'a MeasurementMatrix,
    signal: SparseSignal,
    delta: f64,
    seed: u64,
) -> Result<ProblemInstance<'a>> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("noise level {delta} must be finite and >= 0")));
    }
    let clean = signal.measure(a)?;
    let noiseless_norm = clean.norm2();
    let noise = if delta == 0.0 {
        CVector::zeros(a.rows())
    } else {
        sample_sphere(a.rows(), seed)?.scaled(delta * noiseless_norm)
    };
    let observation = clean.iter().zip(noise.iter()).map(|(c, e)| c + e).collect::<Vec<_>>();
    Ok(ProblemInstance {
        matrix: a,
        signal,
        noise,
        observation: CVector::from_raw(observation),
        delta,
        noiseless_norm,
    })
}

/// `x = 0`, `b = e` with `‖e‖₂ = noise_norm`.
pub fn pure_noise_instance(a: &MeasurementMatrix, noise_norm: f64, seed: u64) -> Result<ProblemInstance<'_>> {
    if !(noise_norm >= 0.0 && noise_norm.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise norm {noise_norm} must be finite and >= 0"
        )));
    }
    let noise = sample_sphere(a.rows(), seed)?.scaled(noise_norm);
    Ok(ProblemInstance {
        matrix: a,
        signal: SparseSignal::zero(a.cols()),
        observation: noise.clone(),
        noise,
        delta: 0.0,
        noiseless_norm: 0.0,
    })
}

const MAGIC: &[u8; 4] = b"PLAB";
const CONTAINER_VERSION: u32 = 1;
const FLAG_OBSERVATION: u32 = 1;

/// Contents of a binary matrix container.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub matrix: MeasurementMatrix,
    pub observation: Option<CVector>,
}

/// Writes a matrix (and optionally an observation) as a little-endian
/// container:
///
/// ```text
/// "PLAB" | version u32 | N u64 | K u64 | ensemble u32 | seed u64 | flags u32
/// N·K (re f64, im f64) pairs, row-major
/// if flags & 1: N (re f64, im f64) pairs holding b
/// ```
pub fn write_container(path: &Path, matrix: &MeasurementMatrix, observation: Option<&CVector>) -> Result<()> {
    if let Some(b) = observation {
        if b.len() != matrix.rows() {
            return Err(Error::Dimension {
                expected: matrix.rows(),
                found: b.len(),
            });
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&CONTAINER_VERSION.to_le_bytes())?;
    write(&(matrix.rows() as u64).to_le_bytes())?;
    write(&(matrix.cols() as u64).to_le_bytes())?;
    write(&matrix.ensemble().tag().to_le_bytes())?;
    write(&matrix.seed().to_le_bytes())?;
    let flags = if observation.is_some() { FLAG_OBSERVATION } else { 0 };
    write(&flags.to_le_bytes())?;
    let m = matrix.matrix();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = m.get(i, j);
            write(&z.re.to_le_bytes())?;
            write(&z.im.to_le_bytes())?;
        }
    }
    if let Some(b) = observation {
        for z in b.iter() {
            write(&z.re.to_le_bytes())?;
            write(&z.im.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut read = |buf: &mut [u8]| {
        r.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format(format!("{} is truncated", path.display()))
            } else {
                Error::io(path, e)
            }
        })
    };
    let mut magic = [0u8; 4];
    read(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} does not start with PLAB", path.display())));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    read(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    read(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    read(&mut b4)?;
    let ensemble = Ensemble::from_tag(u32::from_le_bytes(b4))?;
    read(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    read(&mut b4)?;
    let flags = u32::from_le_bytes(b4);
    if rows == 0 || cols == 0 {
        return Err(Error::Format("container declares an empty matrix".into()));
    }

    let mut read_pair = || -> Result<Complex64> {
        read(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        read(&mut b8)?;
        Ok(Complex64::new(re, f64::from_le_bytes(b8)))
    };
    let mut row_major = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        row_major.push(read_pair()?);
    }
    let observation = if flags & FLAG_OBSERVATION != 0 {
        let b = (0..rows).map(|_| read_pair()).collect::<Result<Vec<_>>>()?;
        Some(CVector::from_raw(b))
    } else {
        None
    };
    let matrix = CMatrix::from_fn(rows, cols, |i, j| row_major[i * cols + j])?;
    let matrix =
        MeasurementMatrix::from_normalized(matrix, ensemble, seed).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Container { matrix, observation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_coherence(a: &MeasurementMatrix) -> f64 {
        let m = a.matrix();
        let mut best = 0.0f64;
        for i in 0..m.cols() {
            for j in 0..m.cols() {
                if i == j {
                    continue;
                }
                let mut s = Complex64::new(0.0, 0.0);
                for r in 0..m.rows() {
                    s += m.get(r, i).conj() * m.get(r, j);
                }
                best = best.max(s.norm());
            }
        }
        best
    }

    #[test]
    fn gaussian_columns_are_unit_norm() {
        let a = gen_gaussian(4, 4, 3).unwrap();
        assert!(a.max_column_norm_deviation() <= 1e-12);
        assert!(a.matrix().as_column_major().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn gaussian_regeneration_is_bit_identical() {
        assert_eq!(gen_gaussian(30, 50, 9).unwrap(), gen_gaussian(30, 50, 9).unwrap());
        assert_ne!(gen_gaussian(30, 50, 9).unwrap(), gen_gaussian(30, 50, 10).unwrap());
    }

    #[test]
    fn streamed_columns_match_generated_matrix() {
        for ensemble in [Ensemble::Gaussian, Ensemble::PartialFourier] {
            let a = ensemble.generate(12, 20, 77).unwrap();
            let mut seen = 0;
            for_each_column(ensemble, 12, 20, 77, |j, col| {
                assert_eq!(col, a.matrix().column(j));
                seen += 1;
            })
            .unwrap();
            assert_eq!(seen, 20);
        }
    }

    #[test]
    fn full_fourier_is_orthonormal() {
        let a = gen_partial_fourier(64, 64, 5).unwrap();
        assert!(a.max_column_norm_deviation() <= 1e-12);
        assert!(mutual_coherence(&a).unwrap() <= 1e-12);
    }

    #[test]
    fn partial_fourier_rejects_too_many_rows() {
        assert!(matches!(gen_partial_fourier(9, 8, 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn partial_fourier_coherence_matches_pairwise_oracle() {
        let a = gen_partial_fourier(64, 128, 3).unwrap();
        let mu = mutual_coherence(&a).unwrap();
        assert!((mu - brute_coherence(&a)).abs() <= 1e-12);
    }

    #[test]
    fn gaussian_coherence_matches_pairwise_oracle() {
        let a = gen_gaussian(50, 100, 4).unwrap();
        assert!((mutual_coherence(&a).unwrap() - brute_coherence(&a)).abs() <= 1e-12);
    }

    #[test]
    fn coherence_edge_cases() {
        let id = CMatrix::from_fn(3, 3, |i, j| Complex64::new(f64::from(u8::from(i == j)), 0.0)).unwrap();
        let a = MeasurementMatrix::from_user(id).unwrap();
        assert_eq!(mutual_coherence(&a).unwrap(), 0.0);

        let dup = CMatrix::from_fn(3, 2, |i, _| Complex64::new(1.0 + i as f64, 0.0)).unwrap();
        let a = MeasurementMatrix::from_user(dup).unwrap();
        assert!((mutual_coherence(&a).unwrap() - 1.0).abs() < 1e-15);

        let single = CMatrix::from_fn(3, 1, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        let a = MeasurementMatrix::from_user(single).unwrap();
        assert!(matches!(mutual_coherence(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn signal_support_and_values() {
        let x = gen_signal(3200, 5, 1).unwrap();
        assert_eq!(x.sparsity(), 5);
        let dense = x.to_dense();
        assert_eq!(dense.iter().filter(|v| v.norm() > 0.0).count(), 5);

        let full = gen_signal(10, 10, 2).unwrap();
        assert_eq!(full.support().as_slice(), &(0..10).collect::<Vec<_>>()[..]);

        assert!(matches!(gen_signal(4, 5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn signal_value_moments() {
        let mut values = Vec::new();
        for seed in 0..1000 {
            values.extend(gen_signal(50, 10, seed).unwrap().values().iter().map(|v| v.re));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() <= 0.05, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.1, "variance {var}");
    }

    #[test]
    fn sphere_samples_are_unit() {
        for seed in 0..20 {
            assert!((sample_sphere(37, seed).unwrap().norm2() - 1.0).abs() <= 1e-12);
        }
        for seed in 0..10 {
            let v = sample_sphere(1, seed).unwrap();
            assert!(v[0] == Complex64::new(1.0, 0.0) || v[0] == Complex64::new(-1.0, 0.0));
        }
    }

    #[test]
    fn sphere_projection_tail() {
        let mut u = vec![0.0; 400];
        u[0] = 0.6;
        u[1] = 0.8;
        let u = CVector::from_real(&u);
        let mut proj: Vec<f64> = (0..10_000)
            .map(|seed| dotc(&u, &sample_sphere(400, seed).unwrap()).norm())
            .collect();
        proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(proj[9899] <= 0.15, "99% quantile {}", proj[9899]);
    }

    #[test]
    fn instance_noise_levels() {
        let a = gen_gaussian(40, 80, 1).unwrap();
        let x = gen_signal(80, 3, 2).unwrap();
        let clean = make_instance(&a, x.clone(), 0.0, 3).unwrap();
        assert!(clean.noise.iter().all(|z| z.norm() == 0.0));
        assert_eq!(clean.observation, x.measure(&a).unwrap());

        let noisy = make_instance(&a, x, 1.0, 3).unwrap();
        assert!((noisy.noise_norm() - noisy.noiseless_norm).abs() <= 1e-10);

        let noise = pure_noise_instance(&a, 1.0, 4).unwrap();
        assert_eq!(noise.observation, noise.noise);
        assert!((noise.observation.norm2() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.plab");
        let a = gen_partial_fourier(6, 10, 8).unwrap();
        let b = sample_sphere(6, 2).unwrap();
        write_container(&path, &a, Some(&b)).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.matrix, a);
        assert_eq!(back.observation, Some(b));

        // header layout
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PLAB");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 10);
        assert_eq!(bytes.len(), 40 + 16 * 6 * 10 + 16 * 6);
        // first row-major entry is A[0][0], second is A[0][1]
        let re01 = f64::from_le_bytes(bytes[56..64].try_into().unwrap());
        assert_eq!(re01, a.matrix().get(0, 1).re);
    }

    #[test]
    fn container_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.plab");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(read_container(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"PLAB\x01\x00").unwrap();
        assert!(matches!(read_container(&path), Err(Error::Format(_))));
        assert!(matches!(
            read_container(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
