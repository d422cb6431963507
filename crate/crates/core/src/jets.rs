//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f / α!` of a real function at a
//! fixed point for every multi-index `|α| ≤ K`. Coefficients are laid out in
//! graded-lexicographic order, so the jets of order `K - 1` are a prefix of the
//! jets of order `K`; truncation is a slice.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Largest supported truncation order.
pub const MAX_ORDER: usize = 6;
/// Largest supported number of variables.
pub const MAX_VARS: usize = 8;
/// Default truncation order.
pub const DEFAULT_ORDER: usize = 4;
/// Division and square roots refuse expansion points with `|value|` at or below this.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet order {0} outside supported range 1..={MAX_ORDER}")]
    OrderOutOfRange(usize),
    #[error("jet variable count {0} outside supported range 1..={MAX_VARS}")]
    VarsOutOfRange(usize),
    #[error("multi-index {index:?} invalid for a jet of order {order} in {num_vars} variables")]
    BadMultiIndex {
        index: Vec<usize>,
        order: usize,
        num_vars: usize,
    },
    #[error("{op} at near-singular value {value:e}")]
    Singular { op: &'static str, value: f64 },
    #[error("cannot differentiate an order-0 jet")]
    NoDerivative,
}

/// Multi-index tables shared by all jets with the same `(num_vars, order)`.
pub struct JetSpace {
    num_vars: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)`: coefficient `k` of a product receives `a[i] * b[j]`.
    products: Vec<(u32, u32, u32)>,
    /// `raise[v][i]` is the index of `indices[i] + e_v`, or `u32::MAX` past the order.
    raise: Vec<Vec<u32>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("num_vars", &self.num_vars)
            .field("order", &self.order)
            .finish()
    }
}

fn graded_indices(num_vars: usize, order: usize) -> Vec<Vec<u8>> {
    fn fill(prefix: &mut Vec<u8>, left: usize, remaining: usize, out: &mut Vec<Vec<u8>>) {
        if left == 1 {
            prefix.push(remaining as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=remaining).rev() {
            prefix.push(first as u8);
            fill(prefix, left - 1, remaining - first, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=order {
        fill(&mut Vec::with_capacity(num_vars), num_vars, degree, &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl JetSpace {
    fn build(num_vars: usize, order: usize) -> Self {
        let indices = graded_indices(num_vars, order);
        debug_assert_eq!(indices.len(), binomial(num_vars + order, order));
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let degree = |a: &Vec<u8>| a.iter().map(|&x| x as usize).sum::<usize>();
        let mut products = Vec::new();
        let mut sum = vec![0u8; num_vars];
        for (i, a) in indices.iter().enumerate() {
            let da = degree(a);
            for (j, b) in indices.iter().enumerate() {
                if da + degree(b) > order {
                    // graded order: every later b has degree at least as large
                    break;
                }
                for v in 0..num_vars {
                    sum[v] = a[v] + b[v];
                }
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        let mut raise = vec![vec![u32::MAX; indices.len()]; num_vars];
        for (i, a) in indices.iter().enumerate() {
            if degree(a) == order {
                continue;
            }
            for v in 0..num_vars {
                let mut up = a.clone();
                up[v] += 1;
                raise[v][i] = lookup[&up] as u32;
            }
        }
        JetSpace {
            num_vars,
            order,
            indices,
            lookup,
            products,
            raise,
        }
    }

    /// Shared table for `(num_vars, order)`; `order` may be 0 for derivative results.
    pub fn get(num_vars: usize, order: usize) -> Result<Arc<JetSpace>, JetError> {
        if num_vars == 0 || num_vars > MAX_VARS {
            return Err(JetError::VarsOutOfRange(num_vars));
        }
        if order > MAX_ORDER {
            return Err(JetError::OrderOutOfRange(order));
        }
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        Ok(guard
            .entry((num_vars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(num_vars, order)))
            .clone())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, slot: usize) -> &[u8] {
        &self.indices[slot]
    }

    pub fn slot_of(&self, alpha: &[usize]) -> Option<usize> {
        if alpha.len() != self.num_vars || alpha.iter().sum::<usize>() > self.order {
            return None;
        }
        let key: Vec<u8> = alpha.iter().map(|&a| a as u8).collect();
        self.lookup.get(&key).copied()
    }

    fn same_shape(&self, other: &JetSpace) -> bool {
        self.num_vars == other.num_vars && self.order == other.order
    }
}

/// Truncated Taylor expansion of a function of `num_vars` variables.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("num_vars", &self.space.num_vars)
            .field("order", &self.space.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

/// Coordinate-function jets `x_i` at `point`.
pub fn seed_jets(point: &[f64], order: usize) -> Result<Vec<Jet>, JetError> {
    if order == 0 || order > MAX_ORDER {
        return Err(JetError::OrderOutOfRange(order));
    }
    let space = JetSpace::get(point.len(), order)?;
    Ok(point
        .iter()
        .enumerate()
        .map(|(i, &x)| Jet::variable(&space, i, x))
        .collect())
}

/// `∂^α f = α! · coeffs[α]`.
pub fn extract_partial(jet: &Jet, multi_index: &[usize]) -> Result<f64, JetError> {
    jet.partial(multi_index)
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    pub fn zero(space: &Arc<JetSpace>) -> Jet {
        Jet::constant(space, 0.0)
    }

    pub fn variable(space: &Arc<JetSpace>, var: usize, value: f64) -> Jet {
        let mut jet = Jet::constant(space, value);
        if space.order >= 1 {
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }

    pub fn from_coeffs(space: &Arc<JetSpace>, coeffs: Vec<f64>) -> Jet {
        assert_eq!(coeffs.len(), space.len(), "coefficient count mismatch");
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn num_vars(&self) -> usize {
        self.space.num_vars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// All coefficients exactly zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Taylor coefficient `∂^α f / α!`.
    pub fn coeff(&self, alpha: &[usize]) -> Result<f64, JetError> {
        self.space
            .slot_of(alpha)
            .map(|slot| self.coeffs[slot])
            .ok_or_else(|| self.bad_index(alpha))
    }

    pub fn partial(&self, alpha: &[usize]) -> Result<f64, JetError> {
        let c = self.coeff(alpha)?;
        let factorial: f64 = alpha
            .iter()
            .map(|&a| (1..=a).map(|k| k as f64).product::<f64>())
            .product();
        Ok(c * factorial)
    }

    /// First partial `∂_var f` at the expansion point.
    pub fn first(&self, var: usize) -> f64 {
        if self.space.order == 0 {
            return 0.0;
        }
        self.coeffs[1 + var]
    }

    /// Second partial `∂_i ∂_j f` at the expansion point.
    pub fn second(&self, i: usize, j: usize) -> f64 {
        if self.space.order < 2 {
            return 0.0;
        }
        let slot = self.space.raise[i][1 + j] as usize;
        let c = self.coeffs[slot];
        if i == j {
            2.0 * c
        } else {
            c
        }
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.num_vars()).map(|v| self.first(v)).collect()
    }

    fn bad_index(&self, alpha: &[usize]) -> JetError {
        JetError::BadMultiIndex {
            index: alpha.to_vec(),
            order: self.space.order,
            num_vars: self.space.num_vars,
        }
    }

    fn check_shape(&self, other: &Jet) {
        assert!(
            self.space.same_shape(&other.space),
            "jet shape mismatch: ({}, {}) vs ({}, {})",
            self.space.num_vars,
            self.space.order,
            other.space.num_vars,
            other.space.order
        );
    }

    /// Jet of `∂_var f`, one order lower.
    pub fn derivative(&self, var: usize) -> Result<Jet, JetError> {
        if self.space.order == 0 {
            return Err(JetError::NoDerivative);
        }
        let lower = JetSpace::get(self.space.num_vars, self.space.order - 1)?;
        let mut coeffs = vec![0.0; lower.len()];
        for (slot, c) in coeffs.iter_mut().enumerate() {
            let up = self.space.raise[var][slot] as usize;
            let k = self.space.indices[up][var] as f64;
            *c = k * self.coeffs[up];
        }
        Ok(Jet {
            space: lower,
            coeffs,
        })
    }

    /// Drop all coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Result<Jet, JetError> {
        if order > self.space.order {
            return Err(JetError::OrderOutOfRange(order));
        }
        if order == self.space.order {
            return Ok(self.clone());
        }
        let lower = JetSpace::get(self.space.num_vars, order)?;
        let coeffs = self.coeffs[..lower.len()].to_vec();
        Ok(Jet {
            space: lower,
            coeffs,
        })
    }

    pub fn scale(&self, factor: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_scalar(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Jet, factor: f64) {
        self.check_shape(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    /// `self += factor * a * b`.
    pub fn add_product(&mut self, a: &Jet, b: &Jet, factor: f64) {
        self.check_shape(a);
        self.check_shape(b);
        if self.space.order == 0 {
            self.coeffs[0] += factor * a.coeffs[0] * b.coeffs[0];
            return;
        }
        for &(i, j, k) in &self.space.products {
            self.coeffs[k as usize] += factor * a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        let mut out = Jet::zero(&self.space);
        out.add_product(self, other, 1.0);
        out
    }

    /// `Σ_k taylor[k] (self - self.value())^k`, i.e. `g(self)` given the Taylor
    /// coefficients of `g` at `self.value()`.
    fn compose(&self, taylor: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let order = self.space.order;
        let mut out = Jet::constant(&self.space, taylor[order]);
        for k in (0..order).rev() {
            out = out.mul_jet(&delta);
            out.coeffs[0] += taylor[k];
        }
        out
    }

    fn factorials(order: usize) -> Vec<f64> {
        let mut f = vec![1.0; order + 1];
        for k in 1..=order {
            f[k] = f[k - 1] * k as f64;
        }
        f
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0.abs() <= SINGULAR_THRESHOLD {
            return Err(JetError::Singular {
                op: "division",
                value: u0,
            });
        }
        let order = self.space.order;
        let taylor: Vec<f64> = (0..=order)
            .map(|k| (-1.0f64).powi(k as i32) / u0.powi(k as i32 + 1))
            .collect();
        Ok(self.compose(&taylor))
    }

    pub fn div_jet(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_shape(other);
        Ok(self.mul_jet(&other.recip()?))
    }

    pub fn powi(&self, exponent: i32) -> Result<Jet, JetError> {
        let base = if exponent < 0 {
            self.recip()?
        } else {
            self.clone()
        };
        let mut result = Jet::constant(&self.space, 1.0);
        let mut square = base;
        let mut e = exponent.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_jet(&square);
            }
            e >>= 1;
            if e > 0 {
                square = square.mul_jet(&square);
            }
        }
        Ok(result)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let fact = Self::factorials(self.space.order);
        let taylor: Vec<f64> = fact.iter().map(|f| e / f).collect();
        self.compose(&taylor)
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let fact = Self::factorials(self.space.order);
        let taylor: Vec<f64> = (0..=self.space.order)
            .map(|k| cycle[k % 4] / fact[k])
            .collect();
        self.compose(&taylor)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let fact = Self::factorials(self.space.order);
        let taylor: Vec<f64> = (0..=self.space.order)
            .map(|k| cycle[k % 4] / fact[k])
            .collect();
        self.compose(&taylor)
    }

    pub fn tan(&self) -> Result<Jet, JetError> {
        let c = self.cos();
        if c.value().abs() <= SINGULAR_THRESHOLD {
            return Err(JetError::Singular {
                op: "tan",
                value: self.value(),
            });
        }
        self.sin().div_jet(&c)
    }

    pub fn sinh(&self) -> Jet {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        let fact = Self::factorials(self.space.order);
        let taylor: Vec<f64> = (0..=self.space.order)
            .map(|k| if k % 2 == 0 { s } else { c } / fact[k])
            .collect();
        self.compose(&taylor)
    }

    pub fn cosh(&self) -> Jet {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        let fact = Self::factorials(self.space.order);
        let taylor: Vec<f64> = (0..=self.space.order)
            .map(|k| if k % 2 == 0 { c } else { s } / fact[k])
            .collect();
        self.compose(&taylor)
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0 <= SINGULAR_THRESHOLD {
            return Err(JetError::Singular {
                op: "sqrt",
                value: u0,
            });
        }
        // generalized binomial series of (u0 + δ)^(1/2)
        let mut taylor = Vec::with_capacity(self.space.order + 1);
        let mut binom = 1.0;
        for k in 0..=self.space.order {
            taylor.push(u0.sqrt() * binom / u0.powi(k as i32));
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
        }
        Ok(self.compose(&taylor))
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &'a Jet) -> Jet {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &'a Jet) -> Jet {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &'a Jet) -> Jet {
        self.check_shape(rhs);
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
