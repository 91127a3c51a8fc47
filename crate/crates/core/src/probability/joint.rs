use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernel::ConditionalKernel;
use crate::error::{arg, Error, Result};

/// Tolerance on the total mass of a joint table.
pub const MASS_TOL: f64 = 1e-10;

/// A named coordinate of a joint measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Axis { name: name.into(), size }
    }
}

/// Exact joint distribution over a product of finite alphabets, stored
/// row-major (last axis varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeasure {
    axes: Vec<Axis>,
    table: Vec<f64>,
}

/// Walks every cell of a row-major product space and tracks the linear index
/// of the projection onto a subset of axes.
pub(crate) struct Projection {
    sizes: Vec<usize>,
    weights: Vec<usize>,
}

impl Projection {
    /// `keep` lists axes of the full space, in the order they should appear in
    /// the projected table.
    pub(crate) fn new(sizes: &[usize], keep: &[usize]) -> Self {
        let mut weights = vec![0; sizes.len()];
        let mut w = 1;
        for &k in keep.iter().rev() {
            weights[k] = w;
            w *= sizes[k];
        }
        Projection { sizes: sizes.to_vec(), weights }
    }

    /// Calls `f(cell, projected)` for every cell in order.
    pub(crate) fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let total: usize = self.sizes.iter().product();
        let d = self.sizes.len();
        let mut digits = vec![0usize; d];
        let mut sub = 0usize;
        for cell in 0..total {
            f(cell, sub);
            let mut j = d;
            while j > 0 {
                j -= 1;
                digits[j] += 1;
                sub += self.weights[j];
                if digits[j] < self.sizes[j] {
                    break;
                }
                sub -= self.weights[j] * self.sizes[j];
                digits[j] = 0;
            }
        }
    }
}

impl JointMeasure {
    pub fn new(axes: Vec<Axis>, table: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return arg("joint measure needs at least one axis");
        }
        if axes.iter().any(|a| a.size == 0) {
            return arg("joint axes must be nonempty alphabets");
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].iter().any(|b| b.name == a.name) {
                return arg(alloc::format!("duplicate axis name {:?}", a.name));
            }
        }
        let cells: usize = axes.iter().map(|a| a.size).product();
        if table.len() != cells {
            return Err(Error::Composition(alloc::format!(
                "joint table has {} cells, axes require {cells}",
                table.len()
            )));
        }
        if let Some(i) = table.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return arg(alloc::format!("joint cell {i} has invalid weight {}", table[i]));
        }
        let mass: f64 = table.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return arg(alloc::format!("joint mass is {mass}, expected 1"));
        }
        Ok(JointMeasure { axes, table })
    }

    /// Product of independent marginals, one axis per factor.
    pub fn independent(factors: &[(&str, &[f64])]) -> Result<Self> {
        let mut table = vec![1.0];
        let mut axes = Vec::new();
        for (name, probs) in factors {
            axes.push(Axis::new(*name, probs.len()));
            table = table.iter().flat_map(|a| probs.iter().map(move |b| a * b)).collect();
        }
        JointMeasure::new(axes, table)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.table.iter().sum()
    }

    pub fn axis(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Indices of the named axes, in the given order.
    pub fn axes_named<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.axis(n.as_ref()).ok_or_else(|| Error::Argument(alloc::format!("no axis named {:?}", n.as_ref())))
            })
            .collect()
    }

    pub(crate) fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.axes.len() {
                return arg(alloc::format!("axis index {a} out of range"));
            }
            if axes[..i].contains(&a) {
                return arg(alloc::format!("axis {} listed twice", self.axes[a].name));
            }
        }
        Ok(())
    }

    pub(crate) fn check_disjoint(&self, groups: &[&[usize]]) -> Result<()> {
        let all: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        self.check_axes(&all)
    }

    /// Marginal table over `keep` (in that order), without validation.
    pub(crate) fn marginal_table(&self, keep: &[usize]) -> Vec<f64> {
        let sizes = self.sizes();
        let len: usize = keep.iter().map(|&k| sizes[k]).product();
        let mut out = vec![0.0; len];
        Projection::new(&sizes, keep).for_each(|cell, sub| out[sub] += self.table[cell]);
        out
    }

    /// Sums out every axis not in `keep`. Axes keep the order given.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointMeasure> {
        if keep.is_empty() {
            return arg("marginalize needs at least one axis to keep");
        }
        self.check_axes(keep)?;
        let axes = keep.iter().map(|&k| self.axes[k].clone()).collect();
        Ok(JointMeasure { axes, table: self.marginal_table(keep) })
    }

    /// `P(target | given)` by Bayes' rule. Rows whose conditioning event has
    /// zero mass are marked undefined; an empty `given` yields one row.
    pub fn conditional(&self, target: &[usize], given: &[usize]) -> Result<ConditionalKernel> {
        if target.is_empty() {
            return arg("conditional needs at least one target axis");
        }
        self.check_disjoint(&[target, given])?;
        let keep: Vec<usize> = given.iter().chain(target).copied().collect();
        let table = self.marginal_table(&keep);
        let sizes = self.sizes();
        let given_sizes: Vec<usize> = given.iter().map(|&g| sizes[g]).collect();
        let target_sizes: Vec<usize> = target.iter().map(|&t| sizes[t]).collect();
        let cols: usize = target_sizes.iter().product();
        let mut matrix = table;
        let mut defined = Vec::with_capacity(matrix.len() / cols);
        for row in matrix.chunks_mut(cols) {
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                row.iter_mut().for_each(|w| *w /= mass);
                defined.push(true);
            } else {
                defined.push(false);
            }
        }
        if !defined.iter().any(|d| *d) {
            return Err(Error::DegenerateConditioning);
        }
        Ok(ConditionalKernel { given_sizes, target_sizes, matrix, defined })
    }
}
