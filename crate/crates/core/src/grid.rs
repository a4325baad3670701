//! Proxy node grids on which the eigenrelation `M ĝ(a) ≈ λ(a) ĝ(a)` is enforced.
//!
//! Product grids enumerate nodes lexicographically with the **last**
//! dimension varying fastest; node `τ` has per-dimension indices given by
//! the base-`n` digits of `τ`, most significant first.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Default cap on the number of product-grid nodes.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Chebyshev points of the second kind on `[−1, 1]^d`.
    Chebyshev,
    /// Roots of unity on the boundary of the unit polydisc.
    Circle,
}

/// Chebyshev extrema `cos(kπ/(n−1))`, sorted ascending, endpoints included.
pub fn chebyshev_nodes_1d(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("chebyshev grid needs n >= 2, got {n}")));
    }
    let m = (n - 1) as f64;
    // sin form is exactly symmetric and hits 0 and ±1 exactly
    Ok((0..n).map(|k| (PI * (2.0 * k as f64 - m) / (2.0 * m)).sin()).collect())
}

/// `exp(2πik/n)`, `k = 0..n`.
pub fn circle_nodes_1d(n: usize) -> Result<Vec<C64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("circle grid needs n >= 2, got {n}")));
    }
    Ok((0..n)
        .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeGrid {
    kind: GridKind,
    dim: usize,
    n_per_dim: usize,
    /// Row-major `n_a × dim`.
    coords: Vec<C64>,
}

impl NodeGrid {
    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node(&self, tau: usize) -> &[C64] {
        &self.coords[tau * self.dim..(tau + 1) * self.dim]
    }

    /// Real coordinates of a node; `None` on circle grids.
    pub fn real_node(&self, tau: usize) -> Option<Vec<f64>> {
        match self.kind {
            GridKind::Chebyshev => Some(self.node(tau).iter().map(|z| z.re).collect()),
            GridKind::Circle => None,
        }
    }

    /// `λ^t` over all nodes: the `t`-th coordinate of each node.
    pub fn eigenvalue_map(&self, t: usize) -> Vec<C64> {
        assert!(t < self.dim, "dimension index {t} out of range");
        self.coords.iter().skip(t).step_by(self.dim).copied().collect()
    }
}

pub fn product_grid(kind: GridKind, dim: usize, n_per_dim: usize) -> Result<NodeGrid> {
    product_grid_with_cap(kind, dim, n_per_dim, DEFAULT_NODE_CAP)
}

pub fn product_grid_with_cap(kind: GridKind, dim: usize, n_per_dim: usize, cap: usize) -> Result<NodeGrid> {
    if dim == 0 {
        return Err(Error::InvalidArgument("grid dimension must be at least 1".into()));
    }
    let nodes_1d: Vec<C64> = match kind {
        GridKind::Chebyshev => chebyshev_nodes_1d(n_per_dim)?
            .into_iter()
            .map(|x| C64::new(x, 0.0))
            .collect(),
        GridKind::Circle => circle_nodes_1d(n_per_dim)?,
    };
    let total = u32::try_from(dim)
        .ok()
        .and_then(|d| n_per_dim.checked_pow(d))
        .filter(|&t| t <= cap)
        .ok_or_else(|| Error::InvalidArgument(format!("grid of {n_per_dim}^{dim} nodes exceeds the cap of {cap}")))?;
    let mut coords = Vec::with_capacity(total * dim);
    let mut digits = vec![0usize; dim];
    for _ in 0..total {
        coords.extend(digits.iter().map(|&i| nodes_1d[i]));
        for slot in digits.iter_mut().rev() {
            *slot += 1;
            if *slot < n_per_dim {
                break;
            }
            *slot = 0;
        }
    }
    Ok(NodeGrid {
        kind,
        dim,
        n_per_dim,
        coords,
    })
}

/// `γ(x) = x¹ + i x²`.
pub fn gamma_embed(x: &[f64]) -> Result<C64> {
    match x {
        [a, b] => Ok(C64::new(*a, *b)),
        _ => Err(Error::DimensionMismatch {
            expected: 2,
            got: x.len(),
        }),
    }
}

/// Inverse of [`gamma_embed`].
pub fn gamma_inverse(z: C64) -> [f64; 2] {
    [z.re, z.im]
}
