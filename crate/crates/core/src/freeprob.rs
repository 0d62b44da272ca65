//! Free-probability combinatorics on truncated series.
//!
//! Moments `m_n = Φ(Aⁿ)` and free cumulants `k_n` are related by
//! `m_n = Σ_{π ∈ NC(n)} Π_{V ∈ π} k_{|V|}`. Equivalently, with
//! `M(z) = Σ m_n zⁿ`,
//!
//! ```text
//! M(z) = 1 + Σ_{s ≥ 1} k_s z^s M(z)^s
//! ```
//!
//! which is what the conversions below iterate. Enumeration of `NC(n)` is
//! provided separately and serves as a brute-force check of the recursion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen, EigenOptions, SymmetricMatrix};

/// Largest `n` accepted by [`noncrossing_partitions`].
pub const MAX_PARTITION_SIZE: usize = 12;

/// A partition of `{1, …, n}` into disjoint non-empty blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Blocks may come in any order; each is sorted and the blocks are
    /// ordered by their smallest element.
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x == 0 || x > n || seen[x] {
                    return Err(Error::InvalidArgument(format!("element {x} out of range or repeated")));
                }
                seen[x] = true;
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(Error::InvalidArgument("blocks do not cover 1..n".into()));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(SetPartition { n, blocks })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// True iff there are `p₁ < q₁ < p₂ < q₂` with `p`'s in one block and
    /// `q`'s in another.
    pub fn is_crossing(&self) -> bool {
        is_crossing(self)
    }

    fn from_labels(labels: &[usize]) -> Self {
        let nb = labels.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); nb];
        for (i, &b) in labels.iter().enumerate() {
            blocks[b].push(i + 1);
        }
        SetPartition {
            n: labels.len(),
            blocks,
        }
    }
}

/// See [`SetPartition::is_crossing`].
pub fn is_crossing(p: &SetPartition) -> bool {
    let mut label = vec![0usize; p.n + 1];
    for (b, block) in p.blocks.iter().enumerate() {
        for &x in block {
            label[x] = b;
        }
    }
    for (b, block) in p.blocks.iter().enumerate() {
        for w in block.windows(2) {
            // another block with one element inside (w0, w1) and one outside
            for q in w[0] + 1..w[1] {
                let c = label[q];
                if c == b {
                    continue;
                }
                if p.blocks[c].iter().any(|&y| y < w[0] || y > w[1]) {
                    return true;
                }
            }
        }
    }
    false
}

/// All set partitions of `{1, …, n}`, by restricted-growth strings.
pub fn all_partitions(n: usize) -> Vec<SetPartition> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut labels = vec![0usize; n];
    fn rec(i: usize, nblocks: usize, labels: &mut [usize], out: &mut Vec<SetPartition>) {
        if i == labels.len() {
            out.push(SetPartition::from_labels(labels));
            return;
        }
        for b in 0..=nblocks {
            labels[i] = b;
            rec(i + 1, nblocks.max(b + 1), labels, out);
        }
    }
    rec(1, 1, &mut labels, &mut out);
    out
}

/// The non-crossing partitions of `{1, …, n}`, `1 ≤ n ≤ 12`.
///
/// Restricted-growth enumeration that discards a branch as soon as the
/// newest element closes a crossing.
pub fn noncrossing_partitions(n: usize) -> Result<Vec<SetPartition>> {
    if !(1..=MAX_PARTITION_SIZE).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "n = {n} outside 1..={MAX_PARTITION_SIZE}"
        )));
    }
    struct State {
        labels: Vec<usize>,
        first: Vec<usize>,
        last: Vec<usize>,
    }
    fn rec(i: usize, st: &mut State, out: &mut Vec<SetPartition>) {
        let n = st.labels.len();
        if i == n {
            out.push(SetPartition::from_labels(&st.labels));
            return;
        }
        let nblocks = st.first.len();
        for b in 0..nblocks {
            let l = st.last[b];
            // i joins block b: crossing iff some element strictly between
            // b's last element and i belongs to a block opened before l
            if (l + 1..i).any(|e| st.first[st.labels[e]] < l) {
                continue;
            }
            st.labels[i] = b;
            st.last[b] = i;
            rec(i + 1, st, out);
            st.last[b] = l;
        }
        st.labels[i] = nblocks;
        st.first.push(i);
        st.last.push(i);
        rec(i + 1, st, out);
        st.first.pop();
        st.last.pop();
    }
    let mut st = State {
        labels: vec![0; n],
        first: vec![0],
        last: vec![0],
    };
    let mut out = Vec::new();
    rec(1, &mut st, &mut out);
    Ok(out)
}

/// `Σ_{π ∈ NC(n)} Π k_{|V|}` by enumeration. `cumulants[j]` holds `k_j`.
pub fn moment_by_enumeration(cumulants: &[f64], n: usize) -> Result<f64> {
    if n >= cumulants.len() {
        return Err(Error::InvalidArgument(format!("need k_1..k_{n}")));
    }
    Ok(noncrossing_partitions(n)?
        .iter()
        .map(|p| p.blocks().iter().map(|b| cumulants[b.len()]).product::<f64>())
        .sum())
}

/// Catalan numbers `C_0..=C_n` from `C_{m+1} = Σ C_i C_{m−i}`.
pub fn catalan_numbers(n: usize) -> Vec<u64> {
    let mut c = vec![1u64; n + 1];
    for m in 1..=n {
        c[m] = (0..m).map(|i| c[i] * c[m - 1 - i]).sum();
    }
    c
}

/// Truncated coefficients `c₀ … c_M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormalSeries {
    coefficients: Vec<f64>,
}

impl FormalSeries {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Empty("series coefficients"));
        }
        Ok(FormalSeries { coefficients })
    }

    /// Moments `m₁ … m_M`, stored with `m₀ = 1` at index 0.
    pub fn moments(tail: &[f64]) -> Self {
        let mut coefficients = Vec::with_capacity(tail.len() + 1);
        coefficients.push(1.0);
        coefficients.extend_from_slice(tail);
        FormalSeries { coefficients }
    }

    /// Cumulants `k₁ … k_M`, stored with an unused 0 at index 0.
    pub fn cumulants(tail: &[f64]) -> Self {
        let mut coefficients = Vec::with_capacity(tail.len() + 1);
        coefficients.push(0.0);
        coefficients.extend_from_slice(tail);
        FormalSeries { coefficients }
    }

    /// Truncation order `M`.
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, i: usize) -> f64 {
        self.coefficients.get(i).copied().unwrap_or(0.0)
    }

    /// Keeps `c₀ … c_order`.
    pub fn truncated(&self, order: usize) -> Self {
        let keep = (order + 1).min(self.coefficients.len());
        FormalSeries {
            coefficients: self.coefficients[..keep].to_vec(),
        }
    }

    /// `Σ c_n xⁿ`.
    pub fn eval_power(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `Σ c_n / z^{n+1}`, the Cauchy-transform reading.
    pub fn eval_laurent(&self, z: f64) -> f64 {
        self.eval_power(1.0 / z) / z
    }
}

fn series_mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate().take(len) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn series_inverse(a: &[f64], len: usize) -> Vec<f64> {
    let mut inv = vec![0.0; len];
    inv[0] = 1.0 / a[0];
    for n in 1..len {
        let s: f64 = (1..=n.min(a.len() - 1)).map(|j| a[j] * inv[n - j]).sum();
        inv[n] = -s / a[0];
    }
    inv
}

/// `[z^j] M(z)^s` for `s = 0..=n` and `j = 0..=n`, using `m_0..m_n`.
fn moment_powers(m: &[f64], n: usize) -> Vec<Vec<f64>> {
    let len = n + 1;
    let base: Vec<f64> = m
        .iter()
        .copied()
        .take(len)
        .chain(std::iter::repeat(0.0))
        .take(len)
        .collect();
    let mut powers = Vec::with_capacity(len);
    let mut cur = vec![0.0; len];
    cur[0] = 1.0;
    powers.push(cur.clone());
    for _ in 1..=n {
        cur = series_mul(&cur, &base, len);
        powers.push(cur.clone());
    }
    powers
}

/// Free cumulants `k₁ … k_M` from moments `m₁ … m_M` (`m₀` read as 1).
pub fn cumulants_from_moments(moments: &FormalSeries) -> Result<FormalSeries> {
    let order = moments.order();
    if order == 0 {
        return Err(Error::InvalidArgument("need at least one moment".into()));
    }
    let mut m = moments.coefficients.clone();
    m[0] = 1.0;
    let mut k = vec![0.0; order + 1];
    for n in 1..=order {
        // m_n depends on m_0..m_{n-1} through the powers; the s = n term is k_n itself
        let powers = moment_powers(&m[..n], n);
        let lower: f64 = (1..n).map(|s| k[s] * powers[s][n - s]).sum();
        k[n] = m[n] - lower;
    }
    Ok(FormalSeries { coefficients: k })
}

/// Moments `m₀ = 1, m₁ … m_M` from free cumulants `k₁ … k_M`.
pub fn moments_from_cumulants(cumulants: &FormalSeries) -> Result<FormalSeries> {
    let order = cumulants.order();
    if order == 0 {
        return Err(Error::InvalidArgument("need at least one cumulant".into()));
    }
    let k = &cumulants.coefficients;
    let mut m = vec![0.0; order + 1];
    m[0] = 1.0;
    for n in 1..=order {
        let powers = moment_powers(&m[..n], n);
        m[n] = (1..=n).map(|s| k[s] * powers[s][n - s]).sum();
    }
    Ok(FormalSeries { coefficients: m })
}

/// Coefficients of `C(z) = Σ m_n z^{−(n+1)}`: index `n` holds `m_n`, `m₀ = 1`.
pub fn cauchy_series(moments: &FormalSeries) -> FormalSeries {
    let mut c = moments.coefficients.clone();
    c[0] = 1.0;
    FormalSeries { coefficients: c }
}

/// Coefficients of `R(z) = Σ k_{n+1} zⁿ`: index `n` holds `k_{n+1}`.
pub fn r_series(cumulants: &FormalSeries) -> FormalSeries {
    if cumulants.order() == 0 {
        return FormalSeries {
            coefficients: vec![0.0],
        };
    }
    FormalSeries {
        coefficients: cumulants.coefficients[1..].to_vec(),
    }
}

/// Largest coefficient deviation of `C(R(z) + 1/z)` from `z`.
///
/// With `u = 1/(R(z) + 1/z) = z/(1 + zR(z))` the composite is the power
/// series `Σ m_n u^{n+1}`. Moments and cumulants through `order` fix its
/// coefficients through `z^{order+1}`, and all of those are compared.
pub fn verify_voiculescu(moments: &FormalSeries, order: usize) -> Result<f64> {
    if order == 0 || order > moments.order() {
        return Err(Error::InvalidArgument(format!(
            "order {order} outside 1..={}",
            moments.order()
        )));
    }
    let moments = cauchy_series(&moments.truncated(order));
    let k = cumulants_from_moments(&moments)?;
    let r = r_series(&k);
    let len = order + 2;
    // 1 + z R(z)
    let mut denom = vec![0.0; len];
    denom[0] = 1.0;
    for (j, &c) in r.coefficients().iter().enumerate() {
        if j + 1 < len {
            denom[j + 1] = c;
        }
    }
    let inv = series_inverse(&denom, len);
    let mut u = vec![0.0; len];
    u[1..].copy_from_slice(&inv[..len - 1]);

    let mut composite = vec![0.0; len];
    let mut power = u.clone();
    for &m in moments.coefficients() {
        for (c, p) in composite.iter_mut().zip(&power) {
            *c += m * p;
        }
        power = series_mul(&power, &u, len);
    }
    Ok(composite
        .iter()
        .enumerate()
        .map(|(j, c)| (c - if j == 1 { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max))
}

/// A self-adjoint operator together with a unit vector defining the state
/// `Φ(·) = ⟨φ, · φ⟩`.
#[derive(Clone, Debug)]
pub struct StatePair {
    operator: SymmetricMatrix,
    state: Vec<f64>,
}

impl StatePair {
    pub fn new(operator: SymmetricMatrix, state: Vec<f64>) -> Result<Self> {
        if state.len() != operator.order() {
            return Err(Error::DimensionMismatch {
                expected: operator.order(),
                actual: state.len(),
            });
        }
        let norm = dot(&state, &state).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("state vector has norm {norm}")));
        }
        Ok(StatePair { operator, state })
    }

    pub fn operator(&self) -> &SymmetricMatrix {
        &self.operator
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// `m₀ = 1, m_n = ⟨φ, Xⁿ φ⟩` for `n ≤ order`.
    pub fn moments(&self, order: usize) -> FormalSeries {
        let mut out = vec![1.0];
        let mut v = self.state.clone();
        for _ in 0..order {
            v = self.operator.mul_vec(&v);
            out.push(dot(&self.state, &v));
        }
        FormalSeries { coefficients: out }
    }

    /// `‖ |φ⟩⟨φ| + εX ‖` by full diagonalisation.
    pub fn perturbed_norm(&self, eps: f64) -> Result<f64> {
        let m = self.operator.scaled(eps).add_rank_one(1.0, &self.state);
        let values = symmetric_eigen(&m, EigenOptions::default())?.values;
        Ok(values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
    }
}

/// Series `1 + k₁ε + k₂ε² + … + k_order ε^order` for the norm of
/// `|φ⟩⟨φ| + εX`, with free cumulants taken in the state of `sp`.
pub fn rank_one_norm_series(sp: &StatePair, order: usize) -> Result<FormalSeries> {
    if order > 10 {
        return Err(Error::InvalidArgument(format!("order {order} > 10")));
    }
    if order == 0 {
        return Ok(FormalSeries {
            coefficients: vec![1.0],
        });
    }
    let k = cumulants_from_moments(&sp.moments(order))?;
    let mut c = k.coefficients;
    c[0] = 1.0;
    Ok(FormalSeries { coefficients: c })
}

/// `E‖G‖ ≈ Kπ/4 + (1 − π/4 + τπ/16) + τ(1 − 5π/16)`, truncated at order `K⁰`.
pub fn expected_gram_norm(k: usize, tau: f64) -> Result<f64> {
    if k == 0 || !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need k ≥ 1 and tau > 0, got k = {k}, tau = {tau}"
        )));
    }
    let first = 1.0 - PI / 4.0 + tau * PI / 16.0;
    let second = tau * (1.0 - 5.0 * PI / 16.0);
    Ok(k as f64 * PI / 4.0 + first + second)
}

/// `E‖γ‖² = (πτ/4)N² + (1 − π/4)τN` with `γ_k = Σ_α √μ_kα`.
pub fn expected_gamma_norm_sq(n: usize, tau: f64) -> Result<f64> {
    if n == 0 || !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need n ≥ 1 and tau ≥ 0, got n = {n}, tau = {tau}"
        )));
    }
    let nf = n as f64;
    Ok(PI * tau / 4.0 * nf * nf + (1.0 - PI / 4.0) * tau * nf)
}
