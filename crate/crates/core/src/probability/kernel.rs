use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg, Error, Result};

/// Tolerance on row sums of kernels and on distributions.
pub const ROW_TOL: f64 = 1e-12;

/// A finite alphabet `{0, .., size-1}` with optional symbol names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return arg("alphabet size must be at least 1");
        }
        Ok(Alphabet { size, labels: None })
    }

    pub fn binary() -> Self {
        Alphabet { size: 2, labels: None }
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return arg("alphabet size must be at least 1");
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return arg(alloc::format!("duplicate alphabet label {a:?}"));
            }
        }
        Ok(Alphabet { size: labels.len(), labels: Some(labels) })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

fn check_row(row: &[f64], index: usize) -> Result<()> {
    let mut sum = 0.0;
    for &w in row {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Normalization { row: index, sum: w });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Normalization { row: index, sum });
    }
    Ok(())
}

/// A probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return arg("distribution must have at least one entry");
        }
        check_row(&probs, 0)?;
        Ok(Distribution { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return arg("distribution must have at least one entry");
        }
        Ok(Distribution { probs: vec![1.0 / size as f64; size] })
    }

    /// Unit mass on `symbol`.
    pub fn point(size: usize, symbol: usize) -> Result<Self> {
        if symbol >= size {
            return arg("point mass outside alphabet");
        }
        let mut probs = vec![0.0; size];
        probs[symbol] = 1.0;
        Ok(Distribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// A conditional probability matrix `P(output | input)`.
///
/// The input may be a product of alphabets; rows are indexed in mixed radix
/// with the first factor most significant, so for inputs `(x, y)` the row
/// order is `(0,0), (0,1), .., (1,0), ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticKernel {
    input: Vec<Alphabet>,
    output: Alphabet,
    matrix: Vec<f64>,
}

impl StochasticKernel {
    pub fn new(input: Vec<Alphabet>, output: Alphabet, matrix: Vec<f64>) -> Result<Self> {
        let rows: usize = input.iter().map(Alphabet::size).product();
        let cols = output.size();
        if matrix.len() != rows * cols {
            return Err(Error::Composition(alloc::format!(
                "kernel matrix has {} entries, expected {rows}x{cols}",
                matrix.len()
            )));
        }
        for (r, row) in matrix.chunks(cols).enumerate() {
            check_row(row, r)?;
        }
        Ok(StochasticKernel { input, output, matrix })
    }

    /// Square kernel on `{0..n-1}` from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return arg("kernel needs at least one row");
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Composition("ragged kernel rows".into()));
        }
        let matrix = rows.iter().flatten().copied().collect();
        StochasticKernel::new(vec![Alphabet::new(n)?], Alphabet::new(cols)?, matrix)
    }

    pub fn identity(size: usize) -> Result<Self> {
        let a = Alphabet::new(size)?;
        let mut matrix = vec![0.0; size * size];
        for i in 0..size {
            matrix[i * size + i] = 1.0;
        }
        StochasticKernel::new(vec![a.clone()], a, matrix)
    }

    /// Kernel whose every row equals `dist`, over the given input factors.
    pub fn constant(input: Vec<Alphabet>, dist: &Distribution) -> Result<Self> {
        let rows: usize = input.iter().map(Alphabet::size).product();
        let output = Alphabet::new(dist.len())?;
        let matrix = (0..rows).flat_map(|_| dist.probs().iter().copied()).collect();
        StochasticKernel::new(input, output, matrix)
    }

    pub fn input(&self) -> &[Alphabet] {
        &self.input
    }

    pub fn input_sizes(&self) -> Vec<usize> {
        self.input.iter().map(Alphabet::size).collect()
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.matrix.len() / self.output.size()
    }

    pub fn cols(&self) -> usize {
        self.output.size()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.matrix[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.matrix[r * self.cols() + c]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn is_square(&self) -> bool {
        self.input.len() == 1 && self.input[0].size() == self.output.size()
    }

    /// Row index of a tuple of input symbols.
    pub fn row_index(&self, symbols: &[usize]) -> usize {
        debug_assert_eq!(symbols.len(), self.input.len());
        symbols.iter().zip(&self.input).fold(0, |acc, (&s, a)| acc * a.size() + s)
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_defect(&self) -> f64 {
        self.matrix.chunks(self.cols()).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &StochasticKernel) -> Option<f64> {
        (self.matrix.len() == other.matrix.len())
            .then(|| self.matrix.iter().zip(&other.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// Result of conditioning a joint measure: rows whose conditioning event has
/// zero mass are left undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalKernel {
    pub(crate) given_sizes: Vec<usize>,
    pub(crate) target_sizes: Vec<usize>,
    pub(crate) matrix: Vec<f64>,
    pub(crate) defined: Vec<bool>,
}

impl ConditionalKernel {
    pub fn given_sizes(&self) -> &[usize] {
        &self.given_sizes
    }

    pub fn target_sizes(&self) -> &[usize] {
        &self.target_sizes
    }

    pub fn rows(&self) -> usize {
        self.defined.len()
    }

    pub fn cols(&self) -> usize {
        self.target_sizes.iter().product()
    }

    pub fn row(&self, r: usize) -> Option<&[f64]> {
        let c = self.cols();
        self.defined[r].then(|| &self.matrix[r * c..(r + 1) * c])
    }

    pub fn undefined_rows(&self) -> usize {
        self.defined.iter().filter(|d| !**d).count()
    }

    /// Converts into a [`StochasticKernel`]; fails if any row is undefined.
    pub fn into_kernel(self) -> Result<StochasticKernel> {
        if let Some(r) = self.defined.iter().position(|d| !d) {
            return Err(Error::Argument(alloc::format!(
                "conditional row {r} is undefined (zero-mass conditioning event)"
            )));
        }
        let input = self.given_sizes.iter().map(|&s| Alphabet::new(s)).collect::<Result<Vec<_>>>()?;
        let output = Alphabet::new(self.cols())?;
        StochasticKernel::new(input, output, self.matrix)
    }
}
