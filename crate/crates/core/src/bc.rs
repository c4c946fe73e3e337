//! Dirichlet data and the free/fixed partition of degrees of freedom.

use crate::error::{FolError, Result};

/// Prescribed values on a set of DOFs, sorted by DOF id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirichlet {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl Dirichlet {
    /// Builds from `(dof, value)` pairs. Repeated DOFs must agree on their value.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut dofs: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (d, v) in pairs {
            if let Some(&last) = dofs.last() {
                if last == d {
                    let prev = *values.last().unwrap();
                    if prev != v {
                        return Err(FolError::InvalidArgument(format!(
                            "conflicting Dirichlet values {prev} and {v} on dof {d}"
                        )));
                    }
                    continue;
                }
            }
            dofs.push(d);
            values.push(v);
        }
        Ok(Dirichlet { dofs, values })
    }

    pub fn empty() -> Self {
        Dirichlet {
            dofs: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Same value on every listed DOF.
    pub fn uniform(dofs: &[usize], value: f64) -> Result<Self> {
        Self::new(dofs.iter().map(|&d| (d, value)))
    }

    pub fn merge(&self, other: &Dirichlet) -> Result<Self> {
        Self::new(self.iter().chain(other.iter()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dofs.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Copy with new values on the same DOFs.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.dofs.len() {
            return Err(FolError::dims("Dirichlet values", self.dofs.len(), values.len()));
        }
        Ok(Dirichlet {
            dofs: self.dofs.clone(),
            values,
        })
    }
}

/// Free/fixed split of `n` DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofPartition {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    local_free: Vec<Option<usize>>,
}

impl DofPartition {
    pub fn new(n: usize, dirichlet: &Dirichlet) -> Result<Self> {
        let mut is_fixed = vec![false; n];
        for &d in dirichlet.dofs() {
            if d >= n {
                return Err(FolError::InvalidArgument(format!(
                    "Dirichlet dof {d} out of range (n = {n})"
                )));
            }
            is_fixed[d] = true;
        }
        let mut free = Vec::new();
        let mut local_free = vec![None; n];
        for d in 0..n {
            if !is_fixed[d] {
                local_free[d] = Some(free.len());
                free.push(d);
            }
        }
        Ok(DofPartition {
            n,
            free,
            fixed: dirichlet.dofs().to_vec(),
            local_free,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Local index of a global DOF among the free ones.
    pub fn local_free(&self) -> &[Option<usize>] {
        &self.local_free
    }

    pub fn is_fixed(&self, d: usize) -> bool {
        self.local_free[d].is_none()
    }

    pub fn gather_free(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }
}
