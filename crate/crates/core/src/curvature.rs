//! Levi-Civita curvature from jets of the metric.
//!
//! Conventions: `Γ^c_ab` is stored as `[c][a][b]`; the Riemann tensor is
//! stored in the order `R_ab^c_d` (so `[∇_a, ∇_b] v^c = R_ab^c_d v^d`) and
//! its lowered form as `R_abcd = g_ce R_ab^e_d`. `Ric_bd = R_cb^c_d`,
//! `P = (Ric - J g)/(n-2)`, `J = Sc/(2(n-1))`, the Weyl tensor `W_abcd` has
//! the same index layout as `R_abcd` and `Y_cab = ∇_a P_bc - ∇_b P_ac`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ExprAst;
use crate::geometry::{metric_frame_at, GeometryError, MetricFrame, MetricSpec, Signature};
use crate::jets::{Jet, JetError, JetSpace, MAX_ORDER};

/// Relative tolerance for the internal convention checks.
pub const CONVENTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("{what} needs dimension at least {needed}, metric has {n}")]
    Dimension { what: &'static str, n: usize, needed: usize },
    #[error("{what} needs jets of order at least {needed}, got {order}")]
    Order { what: &'static str, order: usize, needed: usize },
    #[error("convention self-check `{check}` failed: residual {residual:e}")]
    Convention { check: &'static str, residual: f64 },
    #[error("conformal factor is not positive at {point:?} (value {value:e})")]
    NonPositiveFactor { point: Vec<f64>, value: f64 },
    #[error(transparent)]
    Expr(#[from] crate::expr::ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variance {
    Up,
    Down,
}

/// Dense components of a tensor at one point, row-major over its indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorValue {
    pub components: Vec<f64>,
    pub variance: Vec<Variance>,
    /// Conformal weight of the underlying density-valued tensor.
    pub weight: i32,
    pub dim: usize,
}

impl TensorValue {
    pub fn new(components: Vec<f64>, variance: Vec<Variance>, weight: i32, dim: usize) -> TensorValue {
        assert_eq!(components.len(), dim.pow(variance.len() as u32), "component count");
        TensorValue {
            components,
            variance,
            weight,
            dim,
        }
    }

    pub fn from_jets(jets: &[Jet], variance: Vec<Variance>, weight: i32, dim: usize) -> TensorValue {
        TensorValue::new(jets.iter().map(Jet::value).collect(), variance, weight, dim)
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.components[flat(self.dim, idx)]
    }

    /// Frobenius norm of the raw components.
    pub fn norm(&self) -> f64 {
        frobenius(&self.components)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn flat(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

pub fn frobenius(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn trunc(j: &Jet, order: usize) -> Jet {
    j.truncate(order).expect("truncation to a lower order")
}

fn zeros(n: usize, order: usize, count: usize) -> Result<Vec<Jet>, JetError> {
    let space = JetSpace::get(n, order)?;
    Ok(vec![Jet::zero(&space); count])
}

/// Jets of all curvature quantities at one point.
#[derive(Debug, Clone)]
pub struct CurvatureJets {
    pub n: usize,
    pub order: usize,
    pub frame: MetricFrame,
    /// `Γ^c_ab`, order `K - 1`.
    pub christoffel: Vec<Jet>,
    /// `R_ab^c_d`, order `K - 2`.
    pub riemann: Vec<Jet>,
    /// `Ric_ab`, order `K - 2`.
    pub ricci: Vec<Jet>,
    pub scalar: Jet,
    /// `P_ab`, order `K - 2`.
    pub schouten: Vec<Jet>,
    pub j: Jet,
}

/// Curvature jets from a metric frame of order `K >= 2`.
pub fn curvature_jets(spec: &MetricSpec, point: &[f64], order: usize) -> Result<CurvatureJets, CurvatureError> {
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(CurvatureError::Order {
            what: "curvature",
            order,
            needed: 2,
        });
    }
    if spec.n < 3 {
        return Err(CurvatureError::Dimension {
            what: "Schouten tensor",
            n: spec.n,
            needed: 3,
        });
    }
    let frame = metric_frame_at(spec, point, order)?;
    jets_from_frame(frame)
}

pub fn jets_from_frame(frame: MetricFrame) -> Result<CurvatureJets, CurvatureError> {
    let n = frame.n;
    let k = frame.order;
    let n2 = n * n;
    // dg[e][a][b] = ∂_e g_ab
    let mut dg = zeros(n, k - 1, n * n2)?;
    for a in 0..n {
        for b in a..n {
            let g = &frame.g[a * n + b];
            if g.is_zero() {
                continue;
            }
            for e in 0..n {
                let d = g.derivative(e)?;
                dg[e * n2 + a * n + b] = d.clone();
                dg[e * n2 + b * n + a] = d;
            }
        }
    }
    // Γ_{e,ab} = ½(∂_a g_be + ∂_b g_ae - ∂_e g_ab)
    let mut lower = zeros(n, k - 1, n * n2)?;
    for e in 0..n {
        for a in 0..n {
            for b in a..n {
                let mut acc = dg[a * n2 + b * n + e].clone();
                acc.add_scaled(&dg[b * n2 + a * n + e], 1.0);
                acc.add_scaled(&dg[e * n2 + a * n + b], -1.0);
                let acc = acc.scale(0.5);
                lower[e * n2 + a * n + b] = acc.clone();
                lower[e * n2 + b * n + a] = acc;
            }
        }
    }
    let g_inv1: Vec<Jet> = frame.g_inv.iter().map(|j| trunc(j, k - 1)).collect();
    let mut christoffel = zeros(n, k - 1, n * n2)?;
    for c in 0..n {
        for e in 0..n {
            let gi = &g_inv1[c * n + e];
            if gi.is_zero() {
                continue;
            }
            for a in 0..n {
                for b in a..n {
                    let l = &lower[e * n2 + a * n + b];
                    if !l.is_zero() {
                        christoffel[c * n2 + a * n + b].add_product(gi, l, 1.0);
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                christoffel[c * n2 + a * n + b] = christoffel[c * n2 + b * n + a].clone();
            }
        }
    }
    let riemann = riemann_from_christoffel(&christoffel, n, k)?;
    let g2: Vec<Jet> = frame.g.iter().map(|j| trunc(j, k - 2)).collect();
    let g_inv2: Vec<Jet> = frame.g_inv.iter().map(|j| trunc(j, k - 2)).collect();
    let mut ricci = zeros(n, k - 2, n2)?;
    for b in 0..n {
        for d in 0..n {
            for c in 0..n {
                ricci[b * n + d].add_scaled(&riemann[flat(n, &[c, b, c, d])], 1.0);
            }
        }
    }
    let mut scalar = Jet::zero(ricci[0].space());
    for b in 0..n {
        for d in 0..n {
            if !g_inv2[b * n + d].is_zero() {
                scalar.add_product(&g_inv2[b * n + d], &ricci[b * n + d], 1.0);
            }
        }
    }
    let j = scalar.scale(1.0 / (2.0 * (n as f64 - 1.0)));
    let mut schouten = Vec::with_capacity(n2);
    for a in 0..n {
        for b in 0..n {
            let mut p = ricci[a * n + b].clone();
            p.add_product(&j, &g2[a * n + b], -1.0);
            schouten.push(p.scale(1.0 / (n as f64 - 2.0)));
        }
    }
    Ok(CurvatureJets {
        n,
        order: k,
        frame,
        christoffel,
        riemann,
        ricci,
        scalar,
        schouten,
        j,
    })
}

/// `R_ab^c_d = ∂_a Γ^c_bd - ∂_b Γ^c_ad + Γ^c_ae Γ^e_bd - Γ^c_be Γ^e_ad`.
fn riemann_from_christoffel(gamma: &[Jet], n: usize, k: usize) -> Result<Vec<Jet>, CurvatureError> {
    let n2 = n * n;
    let g2: Vec<Jet> = gamma.iter().map(|j| trunc(j, k - 2)).collect();
    // dgamma[e][c][a][b] = ∂_e Γ^c_ab
    let space = JetSpace::get(n, k - 2)?;
    let mut dgamma = vec![Jet::zero(&space); n * n * n2];
    for (slot, gj) in gamma.iter().enumerate() {
        if gj.is_zero() {
            continue;
        }
        for e in 0..n {
            dgamma[e * n * n2 + slot] = gj.derivative(e)?;
        }
    }
    let mut r = vec![Jet::zero(&space); n2 * n2];
    for a in 0..n {
        for b in (a + 1)..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = dgamma[a * n * n2 + c * n2 + b * n + d].clone();
                    acc.add_scaled(&dgamma[b * n * n2 + c * n2 + a * n + d], -1.0);
                    for e in 0..n {
                        let cae = &g2[c * n2 + a * n + e];
                        let ebd = &g2[e * n2 + b * n + d];
                        if !cae.is_zero() && !ebd.is_zero() {
                            acc.add_product(cae, ebd, 1.0);
                        }
                        let cbe = &g2[c * n2 + b * n + e];
                        let ead = &g2[e * n2 + a * n + d];
                        if !cbe.is_zero() && !ead.is_zero() {
                            acc.add_product(cbe, ead, -1.0);
                        }
                    }
                    r[flat(n, &[b, a, c, d])] = acc.scale(-1.0);
                    r[flat(n, &[a, b, c, d])] = acc;
                }
            }
        }
    }
    Ok(r)
}

impl CurvatureJets {
    fn metric_at(&self, order: usize) -> Vec<Jet> {
        self.frame.g.iter().map(|j| trunc(j, order)).collect()
    }

    /// `R_abcd = g_ce R_ab^e_d`, order `K - 2`.
    pub fn riemann_lowered(&self) -> Vec<Jet> {
        let n = self.n;
        let g = self.metric_at(self.order - 2);
        let mut out = vec![Jet::zero(self.ricci[0].space()); n * n * n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut acc = Jet::zero(self.ricci[0].space());
                        for e in 0..n {
                            let gce = &g[c * n + e];
                            if !gce.is_zero() {
                                acc.add_product(gce, &self.riemann[flat(n, &[a, b, e, d])], 1.0);
                            }
                        }
                        out[flat(n, &[b, a, c, d])] = acc.scale(-1.0);
                        out[flat(n, &[a, b, c, d])] = acc;
                    }
                }
            }
        }
        out
    }

    /// `W_abcd = R_abcd - (g_ca P_bd - g_cb P_ad + g_db P_ac - g_da P_bc)`, order `K - 2`.
    pub fn weyl(&self) -> Vec<Jet> {
        let n = self.n;
        let g = self.metric_at(self.order - 2);
        let p = &self.schouten;
        let mut w = self.riemann_lowered();
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                for c in 0..n {
                    for d in 0..n {
                        let slot = flat(n, &[a, b, c, d]);
                        let terms = [
                            (c * n + a, b * n + d, -1.0),
                            (c * n + b, a * n + d, 1.0),
                            (d * n + b, a * n + c, -1.0),
                            (d * n + a, b * n + c, 1.0),
                        ];
                        for (gi, pi, s) in terms {
                            if !g[gi].is_zero() {
                                w[slot].add_product(&g[gi], &p[pi], s);
                            }
                        }
                    }
                }
            }
        }
        w
    }

    /// Christoffel symbols truncated to `order`.
    pub fn christoffel_at(&self, order: usize) -> Vec<Jet> {
        self.christoffel.iter().map(|j| trunc(j, order)).collect()
    }

    /// `Y_cab = ∇_a P_bc - ∇_b P_ac` as jets of order `K - 3`.
    pub fn cotton(&self) -> Result<Vec<Jet>, CurvatureError> {
        if self.order < 3 {
            return Err(CurvatureError::Order {
                what: "Cotton tensor",
                order: self.order,
                needed: 3,
            });
        }
        let n = self.n;
        let gamma = self.christoffel_at(self.order - 3);
        let nabla_p = covariant_derivative(&self.schouten, &[Variance::Down, Variance::Down], n, &gamma)?;
        // nabla_p[a][b][c] = ∇_a P_bc
        let mut y = Vec::with_capacity(n * n * n);
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut v = nabla_p[flat(n, &[a, b, c])].clone();
                    v.add_scaled(&nabla_p[flat(n, &[b, a, c])], -1.0);
                    y.push(v);
                }
            }
        }
        Ok(y)
    }
}

/// `∇_s T` for a tensor given as jets; the result has the new index first and
/// jet order one lower. `gamma` must have the order of the result.
pub fn covariant_derivative(
    t: &[Jet],
    variance: &[Variance],
    n: usize,
    gamma: &[Jet],
) -> Result<Vec<Jet>, CurvatureError> {
    let rank = variance.len();
    let count = n.pow(rank as u32);
    let order = t[0].order() - 1;
    let space = JetSpace::get(n, order)?;
    let lowered: Vec<Jet> = t.iter().map(|j| trunc(j, order)).collect();
    let n2 = n * n;
    let mut out = vec![Jet::zero(&space); n * count];
    let mut idx = vec![0usize; rank];
    for s in 0..n {
        for slot in 0..count {
            let mut rem = slot;
            for pos in (0..rank).rev() {
                idx[pos] = rem % n;
                rem /= n;
            }
            let mut acc = if t[slot].is_zero() {
                Jet::zero(&space)
            } else {
                t[slot].derivative(s)?
            };
            for pos in 0..rank {
                let orig = idx[pos];
                let stride = n.pow((rank - 1 - pos) as u32);
                let base = slot - orig * stride;
                for e in 0..n {
                    let other = &lowered[base + e * stride];
                    if other.is_zero() {
                        continue;
                    }
                    let (g, sign) = match variance[pos] {
                        Variance::Up => (&gamma[orig * n2 + s * n + e], 1.0),
                        Variance::Down => (&gamma[e * n2 + s * n + orig], -1.0),
                    };
                    if !g.is_zero() {
                        acc.add_product(g, other, sign);
                    }
                }
            }
            out[s * count + slot] = acc;
        }
    }
    Ok(out)
}

/// Raise index `pos` of a rank-`rank` value tensor with `g_inv`.
pub fn raise_index(t: &[f64], rank: usize, pos: usize, n: usize, g_inv: &[f64]) -> Vec<f64> {
    let stride = n.pow((rank - 1 - pos) as u32);
    let mut out = vec![0.0; t.len()];
    for (slot, o) in out.iter_mut().enumerate() {
        let i = (slot / stride) % n;
        let base = slot - i * stride;
        *o = (0..n).map(|e| g_inv[i * n + e] * t[base + e * stride]).sum();
    }
    out
}

/// Lower index `pos` with `g` (same layout as [`raise_index`]).
pub fn lower_index(t: &[f64], rank: usize, pos: usize, n: usize, g: &[f64]) -> Vec<f64> {
    raise_index(t, rank, pos, n, g)
}

/// All curvature tensors at one point.
#[derive(Debug, Clone, Serialize)]
pub struct CurvaturePack {
    pub point: Vec<f64>,
    pub n: usize,
    pub signature: Signature,
    pub metric: TensorValue,
    pub metric_inverse: TensorValue,
    pub christoffel: TensorValue,
    /// `R_ab^c_d`.
    pub riemann: TensorValue,
    /// `R_abcd`.
    pub riemann_lowered: TensorValue,
    pub ricci: TensorValue,
    pub scalar: f64,
    pub schouten: TensorValue,
    pub j: f64,
    pub weyl: TensorValue,
    /// `Y_cab`.
    pub cotton: TensorValue,
    /// `ε_{1…n}` in the coordinate orientation.
    pub volume: f64,
}

/// Curvature at `point` using jets of order 3.
pub fn curvature_pack(spec: &MetricSpec, point: &[f64]) -> Result<CurvaturePack, CurvatureError> {
    let cj = curvature_jets(spec, point, 3)?;
    let pack = pack_from_jets(&cj)?;
    self_check(&pack)?;
    Ok(pack)
}

pub fn pack_from_jets(cj: &CurvatureJets) -> Result<CurvaturePack, CurvatureError> {
    use Variance::{Down, Up};
    let n = cj.n;
    let frame = &cj.frame;
    let cotton = if cj.order >= 3 {
        TensorValue::from_jets(&cj.cotton()?, vec![Down, Down, Down], 0, n)
    } else {
        TensorValue::new(vec![f64::NAN; n * n * n], vec![Down, Down, Down], 0, n)
    };
    Ok(CurvaturePack {
        point: frame.point.clone(),
        n,
        signature: frame.signature,
        metric: TensorValue::from_jets(&frame.g, vec![Down, Down], 2, n),
        metric_inverse: TensorValue::from_jets(&frame.g_inv, vec![Up, Up], -2, n),
        christoffel: TensorValue::from_jets(&cj.christoffel, vec![Up, Down, Down], 0, n),
        riemann: TensorValue::from_jets(&cj.riemann, vec![Down, Down, Up, Down], 0, n),
        riemann_lowered: TensorValue::from_jets(&cj.riemann_lowered(), vec![Down; 4], 2, n),
        ricci: TensorValue::from_jets(&cj.ricci, vec![Down, Down], 0, n),
        scalar: cj.scalar.value(),
        schouten: TensorValue::from_jets(&cj.schouten, vec![Down, Down], 0, n),
        j: cj.j.value(),
        weyl: TensorValue::from_jets(&cj.weyl(), vec![Down; 4], 2, n),
        cotton,
        volume: frame.det.abs().sqrt(),
    })
}

fn relative(residual: f64, scale: f64) -> f64 {
    residual / scale.max(1.0)
}

fn self_check(pack: &CurvaturePack) -> Result<(), CurvatureError> {
    let checks = [
        ("pair symmetry", pair_symmetry_residual(pack)),
        ("algebraic Bianchi", algebraic_bianchi_residual(pack)),
        ("Weyl trace", weyl_trace_residual(pack)),
    ];
    for (check, residual) in checks {
        if !(residual < CONVENTION_TOL) {
            return Err(CurvatureError::Convention { check, residual });
        }
    }
    Ok(())
}

impl CurvaturePack {
    pub fn ricci_norm(&self) -> f64 {
        self.ricci.norm()
    }

    pub fn weyl_norm(&self) -> f64 {
        self.weyl.norm()
    }

    pub fn cotton_norm(&self) -> f64 {
        self.cotton.norm()
    }

    /// `W^ab_cd`.
    pub fn weyl_raised_pair(&self) -> Vec<f64> {
        let gi = &self.metric_inverse.components;
        let w = raise_index(&self.weyl.components, 4, 0, self.n, gi);
        raise_index(&w, 4, 1, self.n, gi)
    }

    /// `|W| = W^rstu W_rstu`.
    pub fn weyl_square(&self) -> f64 {
        let gi = &self.metric_inverse.components;
        let mut w = self.weyl.components.clone();
        for pos in 0..4 {
            w = raise_index(&w, 4, pos, self.n, gi);
        }
        w.iter().zip(&self.weyl.components).map(|(a, b)| a * b).sum()
    }

    /// `ε_{i_1…i_n}` for a list of coordinate indices.
    pub fn epsilon(&self, indices: &[usize]) -> f64 {
        permutation_sign(indices) * self.volume
    }

    /// `ε^{r…}ε_{r…}`; equals `n!` times the sign of `det g`.
    pub fn epsilon_contraction(&self) -> f64 {
        let n = self.n;
        let g = DMatrix::from_row_slice(n, n, &self.metric.components);
        let det = g.determinant();
        let factorial: f64 = (1..=n).map(|k| k as f64).product();
        factorial * self.volume * self.volume / det
    }
}

/// Sign of a permutation of `0..n` given as a list, zero on repeats.
pub fn permutation_sign(indices: &[usize]) -> f64 {
    let mut seen = vec![false; indices.len()];
    for &i in indices {
        if i >= indices.len() || seen[i] {
            return 0.0;
        }
        seen[i] = true;
    }
    let mut sign = 1.0;
    let mut v = indices.to_vec();
    for i in 0..v.len() {
        while v[i] != i {
            let j = v[i];
            v.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// `max |R_abcd - R_cdab|` relative to `max |R|`.
pub fn pair_symmetry_residual(pack: &CurvaturePack) -> f64 {
    let n = pack.n;
    let r = &pack.riemann_lowered;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    worst = worst.max((r.get(&[a, b, c, d]) - r.get(&[c, d, a, b])).abs());
                }
            }
        }
    }
    relative(worst, r.max_abs())
}

/// `max |R_abcd + R_bcad + R_cabd|` relative to `max |R|`.
pub fn algebraic_bianchi_residual(pack: &CurvaturePack) -> f64 {
    let n = pack.n;
    let r = &pack.riemann_lowered;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let s = r.get(&[a, b, c, d]) + r.get(&[b, c, a, d]) + r.get(&[c, a, b, d]);
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    relative(worst, r.max_abs())
}

/// Largest single trace of `W`, relative to `max |W|` (absolute when `W` is tiny).
pub fn weyl_trace_residual(pack: &CurvaturePack) -> f64 {
    let n = pack.n;
    let gi = &pack.metric_inverse.components;
    let w = &pack.weyl;
    let mut worst: f64 = 0.0;
    let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    for (p, q) in pairs {
        for i in 0..n {
            for j in 0..n {
                let mut tr = 0.0;
                for r in 0..n {
                    for s in 0..n {
                        let gij = gi[r * n + s];
                        if gij == 0.0 {
                            continue;
                        }
                        let mut idx = [0usize; 4];
                        let mut free = [i, j].into_iter();
                        for (pos, slot) in idx.iter_mut().enumerate() {
                            *slot = if pos == p {
                                r
                            } else if pos == q {
                                s
                            } else {
                                free.next().unwrap_or(0)
                            };
                        }
                        tr += gij * w.get(&idx);
                    }
                }
                worst = worst.max(tr.abs());
            }
        }
    }
    relative(worst, w.max_abs())
}

/// `‖|W| δ^a_c - 4 W^{rsta} W_rstc‖`, relative to `|W|` (n = 4).
pub fn four_dim_identity_residual(pack: &CurvaturePack) -> Option<f64> {
    if pack.n != 4 {
        return None;
    }
    let n = 4;
    let gi = &pack.metric_inverse.components;
    let mut up = pack.weyl.components.clone();
    for pos in 0..4 {
        up = raise_index(&up, 4, pos, n, gi);
    }
    let square: f64 = up.iter().zip(&pack.weyl.components).map(|(a, b)| a * b).sum();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = square.abs();
    for a in 0..n {
        for c in 0..n {
            let mut s = 0.0;
            for r in 0..n {
                for t in 0..n {
                    for u in 0..n {
                        s += up[flat(n, &[r, t, u, a])] * pack.weyl.get(&[r, t, u, c]);
                    }
                }
            }
            scale = scale.max(4.0 * s.abs());
            let delta = if a == c { square } else { 0.0 };
            worst = worst.max((delta - 4.0 * s).abs());
        }
    }
    Some(worst / scale.max(1e-300))
}

fn permutations(m: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, m: usize, out: &mut Vec<(Vec<usize>, f64)>) {
        if prefix.len() == m {
            out.push((prefix.clone(), permutation_sign(prefix)));
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, m, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], m, &mut out);
    out
}

/// Contract `W^[a1a2]_[c1c2] δ^a3_c3 … δ^a(n-1)_c(n-1)` (both index groups
/// antisymmetrized) with random covectors and vectors. Returns the magnitude of
/// the sum relative to the sum of magnitudes of its terms.
pub fn edgar_hoglund_residual(pack: &CurvaturePack, seed: u64) -> f64 {
    let n = pack.n;
    let m = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covectors: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let vectors: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let w_up = pack.weyl_raised_pair();
    // pair[i][j][k][l] = W^ab_cd α_i,a α_j,b v_k^c v_l^d
    let mut pair = vec![0.0; m * m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            let ab = covectors[i][a] * covectors[j][b];
                            if ab == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                for d in 0..n {
                                    s += ab * w_up[flat(n, &[a, b, c, d])] * vectors[k][c] * vectors[l][d];
                                }
                            }
                        }
                    }
                    pair[flat(m, &[i, j, k, l])] = s;
                }
            }
        }
    }
    let pairing = |i: usize, k: usize| -> f64 { (0..n).map(|a| covectors[i][a] * vectors[k][a]).sum() };
    let perms = permutations(m);
    let mut total = 0.0;
    let mut magnitude = 0.0;
    for (pi, spi) in &perms {
        for (rho, srho) in &perms {
            let mut term = spi * srho * pair[flat(m, &[pi[0], pi[1], rho[0], rho[1]])];
            for t in 2..m {
                term *= pairing(pi[t], rho[t]);
            }
            total += term;
            magnitude += term.abs();
        }
    }
    total.abs() / magnitude.max(1e-300)
}

/// `Ỹ_ab = Y_ars ε^rs_b` (n = 3), row-major `a, b`.
pub fn cotton_dual(pack: &CurvaturePack) -> Result<Vec<f64>, CurvatureError> {
    let n = pack.n;
    if n != 3 {
        return Err(CurvatureError::Dimension {
            what: "Cotton dual",
            n,
            needed: 3,
        });
    }
    let gi = &pack.metric_inverse.components;
    let mut eps = vec![0.0; 27];
    for r in 0..3 {
        for s in 0..3 {
            for b in 0..3 {
                eps[flat(3, &[r, s, b])] = pack.epsilon(&[r, s, b]);
            }
        }
    }
    let eps = raise_index(&raise_index(&eps, 3, 0, 3, gi), 3, 1, 3, gi);
    let mut out = vec![0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            let mut s = 0.0;
            for r in 0..3 {
                for t in 0..3 {
                    s += pack.cotton.get(&[a, r, t]) * eps[flat(3, &[r, t, b])];
                }
            }
            out[a * 3 + b] = s;
        }
    }
    Ok(out)
}

/// Divergence `∇^r W_rcab` at the point, layout `[c][a][b]`.
pub fn weyl_divergence(cj: &CurvatureJets) -> Result<Vec<f64>, CurvatureError> {
    if cj.order < 3 {
        return Err(CurvatureError::Order {
            what: "Weyl divergence",
            order: cj.order,
            needed: 3,
        });
    }
    let n = cj.n;
    let gamma = cj.christoffel_at(cj.order - 3);
    let nabla_w = covariant_derivative(&cj.weyl(), &[Variance::Down; 4], n, &gamma)?;
    let mut out = vec![0.0; n * n * n];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for r in 0..n {
                    for t in 0..n {
                        let gi = cj.frame.g_inv_value(t, r);
                        if gi != 0.0 {
                            s += gi * nabla_w[flat(n, &[t, r, c, a, b])].value();
                        }
                    }
                }
                out[flat(n, &[c, a, b])] = s;
            }
        }
    }
    Ok(out)
}

/// `‖(n-3) Y_cab - ∇^r W_rcab‖` (n >= 4).
pub fn bianchi_check(spec: &MetricSpec, point: &[f64]) -> Result<f64, CurvatureError> {
    if spec.n < 4 {
        return Err(CurvatureError::Dimension {
            what: "Weyl divergence identity",
            n: spec.n,
            needed: 4,
        });
    }
    let cj = curvature_jets(spec, point, 3)?;
    let div = weyl_divergence(&cj)?;
    let y = cj.cotton()?;
    let factor = spec.n as f64 - 3.0;
    let diff: Vec<f64> = y.iter().zip(&div).map(|(y, d)| factor * y.value() - d).collect();
    Ok(frobenius(&diff))
}

/// `max |∇_e R_ab^c_d + ∇_a R_be^c_d + ∇_b R_ea^c_d|` relative to `max |∇R|`.
pub fn differential_bianchi_residual(spec: &MetricSpec, point: &[f64]) -> Result<f64, CurvatureError> {
    use Variance::{Down, Up};
    let cj = curvature_jets(spec, point, 3)?;
    let n = cj.n;
    let gamma = cj.christoffel_at(0);
    let nr = covariant_derivative(&cj.riemann, &[Down, Down, Up, Down], n, &gamma)?;
    let v = |e: usize, a: usize, b: usize, c: usize, d: usize| nr[flat(n, &[e, a, b, c, d])].value();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for e in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        scale = scale.max(v(e, a, b, c, d).abs());
                        let s = v(e, a, b, c, d) + v(a, b, e, c, d) + v(b, e, a, c, d);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
    }
    Ok(relative(worst, scale))
}

/// `ĝ = ω² g` componentwise; `omega` must be positive at the metric's sample points.
pub fn rescale_metric(spec: &MetricSpec, omega: &ExprAst) -> Result<MetricSpec, CurvatureError> {
    let mut points = vec![spec.default_point.clone()];
    if let Ok(samples) = spec.sample_points(10, 0) {
        points.extend(samples);
    }
    for p in &points {
        let value = omega.eval_f64(p, &spec.params)?;
        if !(value > 0.0) {
            return Err(CurvatureError::NonPositiveFactor {
                point: p.clone(),
                value,
            });
        }
    }
    let omega_sq = ExprAst::pow(omega.clone(), 2);
    let components = spec
        .components
        .iter()
        .map(|c| {
            if c.is_const(0.0) {
                c.clone()
            } else {
                ExprAst::mul(omega_sq.clone(), c.clone())
            }
        })
        .collect();
    Ok(MetricSpec {
        label: format!("({})^2 * {}", omega, spec.label),
        components,
        scale_basis: Vec::new(),
        claims: Default::default(),
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_metric, pseudo_euclidean, MetricParams};

    fn metric(name: &str) -> MetricSpec {
        builtin_metric(name, &MetricParams::new()).unwrap()
    }

    #[test]
    fn flat_space_has_no_curvature() {
        let e = pseudo_euclidean(2, 2).unwrap();
        let pack = curvature_pack(&e, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(pack.riemann.norm(), 0.0);
        assert_eq!(pack.weyl.norm(), 0.0);
        assert_eq!(bianchi_check(&e, &[0.1, 0.2, 0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn fubini_study_scalar() {
        let fs = metric("fubini_study");
        let pack = curvature_pack(&fs, &fs.default_point).unwrap();
        assert!((pack.scalar - 48.0).abs() < 1e-8, "{}", pack.scalar);
        assert!((pack.scalar - 6.0 * pack.j).abs() < 1e-10);
    }

    #[test]
    fn round_sphere_schouten() {
        // unit 3-sphere in stereographic coordinates: P = g/2
        let spec = MetricSpec::from_metric_file(
            &crate::expr::metric_file::parse_metric_file(
                "dim = 3\nsignature = 0,3\ng 1 1 : 4/(1 + x1^2 + x2^2 + x3^2)^2\n\
                 g 2 2 : 4/(1 + x1^2 + x2^2 + x3^2)^2\ng 3 3 : 4/(1 + x1^2 + x2^2 + x3^2)^2\n",
            )
            .unwrap(),
            "sphere",
        )
        .unwrap();
        let pack = curvature_pack(&spec, &[0.3, -0.2, 0.5]).unwrap();
        assert!((pack.scalar - 6.0).abs() < 1e-10);
        for a in 0..3 {
            for b in 0..3 {
                let expected = 0.5 * pack.metric.get(&[a, b]);
                assert!((pack.schouten.get(&[a, b]) - expected).abs() < 1e-10);
            }
        }
        assert!(pack.cotton.norm() < 1e-10);
    }

    #[test]
    fn commutator_sign_on_the_sphere() {
        // [∇_a, ∇_b] v^c = R_ab^c_d v^d with R_ab^c_d = δ^c_a g_bd - δ^c_b g_ad on a unit sphere
        let spec = MetricSpec::from_metric_file(
            &crate::expr::metric_file::parse_metric_file(
                "dim = 3\nsignature = 0,3\ng 1 1 : 4/(1 + x1^2 + x2^2 + x3^2)^2\n\
                 g 2 2 : 4/(1 + x1^2 + x2^2 + x3^2)^2\ng 3 3 : 4/(1 + x1^2 + x2^2 + x3^2)^2\n",
            )
            .unwrap(),
            "sphere",
        )
        .unwrap();
        let pack = curvature_pack(&spec, &[0.3, -0.2, 0.5]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                        let expected =
                            delta(c, a) * pack.metric.get(&[b, d]) - delta(c, b) * pack.metric.get(&[a, d]);
                        assert!((pack.riemann.get(&[a, b, c, d]) - expected).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn taub_nut_is_ricci_flat_not_conformally_flat() {
        let tn = metric("taub_nut");
        let pack = curvature_pack(&tn, &tn.default_point).unwrap();
        assert!(pack.ricci_norm() < 1e-8);
        assert!(pack.weyl_norm() > 1e-3);
        assert!(bianchi_check(&tn, &tn.default_point).unwrap() < 1e-7);
    }

    #[test]
    fn identities_on_catalogue() {
        for name in ["fubini_study", "taub_nut", "pp_wave", "pp_split", "fubini_study_hyperbolic"] {
            let spec = metric(name);
            let pack = curvature_pack(&spec, &spec.default_point).unwrap();
            assert!(four_dim_identity_residual(&pack).unwrap() < 1e-8, "{name}");
            assert!(edgar_hoglund_residual(&pack, 3) < 1e-8, "{name}");
            assert!(differential_bianchi_residual(&spec, &spec.default_point).unwrap() < 1e-8);
        }
    }

    #[test]
    fn permutation_signs() {
        assert_eq!(permutation_sign(&[0, 1, 2]), 1.0);
        assert_eq!(permutation_sign(&[1, 0, 2]), -1.0);
        assert_eq!(permutation_sign(&[1, 2, 0]), 1.0);
        assert_eq!(permutation_sign(&[1, 1, 0]), 0.0);
    }

    #[test]
    fn epsilon_normalization_magnitude() {
        let fs = metric("fubini_study");
        let pack = curvature_pack(&fs, &fs.default_point).unwrap();
        assert!((pack.epsilon_contraction() - 24.0).abs() < 1e-9);
        let pp = metric("pp_wave");
        let pack = curvature_pack(&pp, &pp.default_point).unwrap();
        assert!((pack.epsilon_contraction() + 24.0).abs() < 1e-9);
    }

    #[test]
    fn constant_rescale_is_identity() {
        let tn = metric("taub_nut");
        let same = rescale_metric(&tn, &ExprAst::Const(1.0)).unwrap();
        let a = curvature_pack(&tn, &tn.default_point).unwrap();
        let b = curvature_pack(&same, &tn.default_point).unwrap();
        assert!((a.scalar - b.scalar).abs() < 1e-12);
        let diff: Vec<f64> = a.weyl.components.iter().zip(&b.weyl.components).map(|(x, y)| x - y).collect();
        assert!(frobenius(&diff) < 1e-12);
        assert!(matches!(
            rescale_metric(&tn, &ExprAst::Const(-1.0)),
            Err(CurvatureError::NonPositiveFactor { .. })
        ));
    }

    #[test]
    fn cotton_needs_third_order() {
        let tn = metric("taub_nut");
        let cj = curvature_jets(&tn, &tn.default_point, 2).unwrap();
        assert!(matches!(cj.cotton(), Err(CurvatureError::Order { .. })));
        assert!(curvature_jets(&tn, &tn.default_point, 1).is_err());
    }
}
