//! Sparse truncated power series in one or two variables, and formal maps
//! with diagonal linear part.
//!
//! Every operation is exact through the truncation degree `N` and drops
//! anything above it. Binary operations on operands with different `N`
//! are refused rather than silently truncated.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NormValue, PrimeContext, Scalar};

/// Exponent vector `(i, j)` of the monomial `x^i y^j`. One-variable series
/// only use the first slot.
///
/// Ordered by total degree first, then by the `y` exponent, so iteration
/// over a series visits degrees in increasing order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex([u32; 2]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0]);

    pub fn new(i: u32, j: u32) -> Self {
        MultiIndex([i, j])
    }

    pub fn univariate(i: u32) -> Self {
        MultiIndex([i, 0])
    }

    /// The basis vector `ê_k` (0-based `k`).
    pub fn unit(k: usize) -> Self {
        let mut c = [0, 0];
        c[k] = 1;
        MultiIndex(c)
    }

    pub fn get(self, k: usize) -> u32 {
        self.0[k]
    }

    pub fn i(self) -> u32 {
        self.0[0]
    }

    pub fn j(self) -> u32 {
        self.0[1]
    }

    pub fn total(self) -> u32 {
        self.0[0] + self.0[1]
    }

    pub fn to_vec(self, vars: usize) -> Vec<u32> {
        self.0[..vars].to_vec()
    }

    pub fn from_slice(s: &[u32]) -> Result<Self> {
        match s {
            [i] => Ok(MultiIndex::new(*i, 0)),
            [i, j] => Ok(MultiIndex::new(*i, *j)),
            _ => Err(Error::Parse(format!("multi-index must have 1 or 2 entries, got {s:?}"))),
        }
    }

    pub fn checked_add(self, other: MultiIndex) -> MultiIndex {
        MultiIndex([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    pub fn scaled(self, m: u32) -> MultiIndex {
        MultiIndex([self.0[0] * m, self.0[1] * m])
    }

    /// All indices in `vars` variables with the given total degree, in the
    /// crate's canonical order.
    pub fn of_degree(vars: usize, d: u32) -> Vec<MultiIndex> {
        if vars == 1 {
            vec![MultiIndex::univariate(d)]
        } else {
            (0..=d).map(|j| MultiIndex::new(d - j, j)).collect()
        }
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total().cmp(&other.total()).then(self.0[1].cmp(&other.0[1]))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        MultiIndex::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// Serializes 0-based component numbers as 1-based.
pub(crate) mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*k as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let k = u64::deserialize(d)?;
        if k == 0 {
            return Err(serde::de::Error::custom("components are numbered from 1"));
        }
        Ok(k as usize - 1)
    }
}

fn check_vars(vars: usize) -> Result<()> {
    if vars == 1 || vars == 2 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{vars} variables (only 1 or 2 supported)")))
    }
}

/// A truncated power series `Σ [f]_a x^a + O(deg N+1)` with sparse exact
/// coefficients. No zero coefficient is ever stored.
#[derive(Clone, PartialEq, Eq)]
pub struct Series {
    vars: usize,
    trunc: u32,
    coeffs: BTreeMap<MultiIndex, Scalar>,
}

impl Series {
    pub fn zero(vars: usize, trunc: u32) -> Self {
        assert!(vars == 1 || vars == 2, "only 1 or 2 variables");
        Series {
            vars,
            trunc,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, trunc: u32, c: Scalar) -> Self {
        Series::monomial(vars, trunc, MultiIndex::ZERO, c)
    }

    pub fn one(vars: usize, trunc: u32) -> Self {
        Series::constant(vars, trunc, Scalar::one())
    }

    pub fn monomial(vars: usize, trunc: u32, idx: MultiIndex, c: Scalar) -> Self {
        let mut s = Series::zero(vars, trunc);
        s.set(idx, c);
        s
    }

    /// The coordinate function `x_k` (0-based).
    pub fn var(vars: usize, trunc: u32, k: usize) -> Self {
        Series::monomial(vars, trunc, MultiIndex::unit(k), Scalar::one())
    }

    pub fn from_terms<I>(vars: usize, trunc: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Scalar)>,
    {
        check_vars(vars)?;
        let mut s = Series::zero(vars, trunc);
        for (idx, c) in terms {
            if vars == 1 && idx.j() != 0 {
                return Err(Error::Parse(format!("index {idx} in a one-variable series")));
            }
            s.add_to(idx, &c);
        }
        Ok(s)
    }

    /// One-variable series from `(degree, coefficient)` pairs.
    pub fn univariate<I>(trunc: u32, terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, Scalar)>,
    {
        let mut s = Series::zero(1, trunc);
        for (d, c) in terms {
            s.add_to(MultiIndex::univariate(d), &c);
        }
        s
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn truncation(&self) -> u32 {
        self.trunc
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, idx: MultiIndex) -> Option<&Scalar> {
        self.coeffs.get(&idx)
    }

    pub fn coeff(&self, idx: MultiIndex) -> Scalar {
        self.coeffs.get(&idx).cloned().unwrap_or_default()
    }

    /// Coefficient of `x^d` in a one-variable series.
    pub fn coeff1(&self, d: u32) -> Scalar {
        self.coeff(MultiIndex::univariate(d))
    }

    pub fn set(&mut self, idx: MultiIndex, c: Scalar) {
        if idx.total() > self.trunc || c.is_zero() {
            self.coeffs.remove(&idx);
        } else {
            self.coeffs.insert(idx, c);
        }
    }

    pub fn add_to(&mut self, idx: MultiIndex, c: &Scalar) {
        if idx.total() > self.trunc || c.is_zero() {
            return;
        }
        match self.coeffs.get_mut(&idx) {
            Some(v) => {
                *v += c;
                if v.is_zero() {
                    self.coeffs.remove(&idx);
                }
            }
            None => {
                self.coeffs.insert(idx, c.clone());
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, &Scalar)> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    /// Lowest total degree carrying a nonzero coefficient.
    pub fn order(&self) -> Option<u32> {
        self.coeffs.keys().next().map(|k| k.total())
    }

    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().map(|k| k.total()).max()
    }

    pub fn truncated(&self, n: u32) -> Series {
        let n = n.min(self.trunc);
        Series {
            vars: self.vars,
            trunc: n,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.total() <= n)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Same coefficients, truncation raised or lowered to `n` (lowering drops terms).
    pub fn with_truncation(&self, n: u32) -> Series {
        let mut s = self.truncated(n);
        s.trunc = n;
        s
    }

    pub fn homogeneous_part(&self, d: u32) -> Series {
        Series {
            vars: self.vars,
            trunc: self.trunc,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.total() == d)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Terms of total degree `≥ d`.
    pub fn tail_from(&self, d: u32) -> Series {
        Series {
            vars: self.vars,
            trunc: self.trunc,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.total() >= d)
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    fn check_compatible(&self, other: &Series) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::VarCountMismatch {
                left: self.vars,
                right: other.vars,
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &Series) -> Result<()> {
        self.check_compatible(other)?;
        if self.trunc != other.trunc {
            return Err(Error::TruncationMismatch {
                left: self.trunc,
                right: other.trunc,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Series) -> Result<Series> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (k, v) in other.terms() {
            out.add_to(k, v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Series) -> Result<Series> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (k, v) in other.terms() {
            out.add_to(k, &-v);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Series {
        self.scale(&Scalar::from_int(-1))
    }

    pub fn scale(&self, c: &Scalar) -> Series {
        if c.is_zero() {
            return Series::zero(self.vars, self.trunc);
        }
        Series {
            vars: self.vars,
            trunc: self.trunc,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * c)).collect(),
        }
    }

    /// Truncated product; the result truncation is `min(N_f, N_g)`.
    pub fn mul(&self, other: &Series) -> Result<Series> {
        self.check_compatible(other)?;
        Ok(self.mul_trunc(other, self.trunc.min(other.trunc)))
    }

    fn mul_trunc(&self, other: &Series, trunc: u32) -> Series {
        let mut acc: BTreeMap<MultiIndex, Scalar> = BTreeMap::new();
        for (a, ca) in &self.coeffs {
            let da = a.total();
            if da > trunc {
                break;
            }
            for (b, cb) in &other.coeffs {
                if da + b.total() > trunc {
                    break;
                }
                let prod = ca * cb;
                let e = acc.entry(a.checked_add(*b)).or_default();
                *e += &prod;
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Series {
            vars: self.vars,
            trunc,
            coeffs: acc,
        }
    }

    pub fn pow(&self, k: u32) -> Series {
        let mut out = Series::one(self.vars, self.trunc);
        for _ in 0..k {
            out = out.mul_trunc(self, self.trunc);
        }
        out
    }

    /// `self(inner_1, …, inner_r)` through `min(N_outer, N_inner)`.
    pub fn compose(&self, inner: &[Series]) -> Result<Series> {
        let mut cache = MonomialCache::new(inner, self.vars)?;
        let trunc = self.trunc.min(cache.trunc);
        Ok(cache.evaluate(self, trunc))
    }

    /// One-variable substitution `outer ∘ inner`; `inner(0)` must vanish.
    pub fn substitute(&self, inner: &Series) -> Result<Series> {
        if self.vars != 1 || inner.vars != 1 {
            return Err(Error::VarCountMismatch {
                left: self.vars,
                right: inner.vars,
            });
        }
        self.compose(std::slice::from_ref(inner))
    }

    /// Minimal `R = p^e` with `|[f]_a| ≤ R^|a|` for every stored nonconstant
    /// term, plus the convergence polydisc radius `1/R`.
    pub fn growth_certificate(&self, ctx: &PrimeContext) -> Option<GrowthCertificate> {
        growth_certificate(self.terms().map(|(k, v)| (k.total(), v)), ctx)
    }
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0 + O({})", self.trunc + 1);
        }
        let mut first = true;
        for (k, v) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({v})")?;
            let names = ["x", "y"];
            for (n, e) in names.iter().zip(k.0.iter()).take(self.vars) {
                match e {
                    0 => {}
                    1 => write!(f, "{n}")?,
                    e => write!(f, "{n}^{e}")?,
                }
            }
        }
        write!(f, " + O({})", self.trunc + 1)
    }
}

/// Geometric-growth certificate: coefficients bounded by `bound^|a|`, so the
/// series converges on every polydisc of radius below `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub bound: NormValue,
    pub radius: NormValue,
}

pub fn growth_certificate<'a, I>(terms: I, ctx: &PrimeContext) -> Option<GrowthCertificate>
where
    I: IntoIterator<Item = (u32, &'a Scalar)>,
{
    let mut e: Option<i64> = None;
    for (deg, c) in terms {
        if deg == 0 {
            continue;
        }
        let Some(v) = ctx.val(c) else { continue };
        // need e·deg ≥ -v
        let need = (-v).div_euclid(deg as i64) + i64::from((-v).rem_euclid(deg as i64) != 0);
        e = Some(e.map_or(need, |cur| cur.max(need)));
    }
    e.map(|e| GrowthCertificate {
        bound: NormValue {
            base: ctx.p(),
            exponent: Some(e),
        },
        radius: NormValue {
            base: ctx.p(),
            exponent: Some(-e),
        },
    })
}

/// Memoised monomials `inner_1^i inner_2^j` for repeated substitution.
pub(crate) struct MonomialCache<'a> {
    inner: &'a [Series],
    trunc: u32,
    cache: BTreeMap<MultiIndex, Series>,
}

impl<'a> MonomialCache<'a> {
    pub(crate) fn new(inner: &'a [Series], outer_vars: usize) -> Result<Self> {
        if inner.len() != outer_vars {
            return Err(Error::VarCountMismatch {
                left: outer_vars,
                right: inner.len(),
            });
        }
        let first = &inner[0];
        for s in inner {
            first.check_same(s)?;
            if s.get(MultiIndex::ZERO).is_some() {
                return Err(Error::NonZeroConstant);
            }
        }
        Ok(MonomialCache {
            inner,
            trunc: first.trunc,
            cache: BTreeMap::new(),
        })
    }

    pub(crate) fn monomial(&mut self, idx: MultiIndex) -> &Series {
        if !self.cache.contains_key(&idx) {
            let value = if idx == MultiIndex::ZERO {
                Series::one(self.inner[0].vars, self.trunc)
            } else if idx.j() > 0 {
                let prev = self.monomial(MultiIndex::new(idx.i(), idx.j() - 1)).clone();
                prev.mul_trunc(&self.inner[1], self.trunc)
            } else {
                let prev = self.monomial(MultiIndex::new(idx.i() - 1, 0)).clone();
                prev.mul_trunc(&self.inner[0], self.trunc)
            };
            self.cache.insert(idx, value);
        }
        &self.cache[&idx]
    }

    fn evaluate(&mut self, outer: &Series, trunc: u32) -> Series {
        let vars = self.inner[0].vars;
        let mut acc: BTreeMap<MultiIndex, Scalar> = BTreeMap::new();
        for (a, ca) in outer.terms() {
            // inner series vanish at 0, so x^a contributes only in degrees ≥ |a|
            if a.total() > trunc {
                break;
            }
            let m = self.monomial(a);
            for (b, cb) in m.terms() {
                if b.total() > trunc {
                    break;
                }
                let e = acc.entry(b).or_default();
                *e += &(ca * cb);
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Series {
            vars,
            trunc,
            coeffs: acc,
        }
    }
}

/// A formal map `F = (λ_1 x_1 + tail_1, …, λ_r x_r + tail_r)` with nonzero
/// eigenvalues and tails of order ≥ 2. Components are indexed from 0 in the
/// Rust API and from 1 in serialized forms.
#[derive(Clone, PartialEq, Eq)]
pub struct FormalMap {
    vars: usize,
    trunc: u32,
    eigenvalues: Vec<Scalar>,
    tails: Vec<Series>,
}

impl FormalMap {
    pub fn new(eigenvalues: Vec<Scalar>, tails: Vec<Series>) -> Result<Self> {
        let vars = eigenvalues.len();
        check_vars(vars)?;
        if tails.len() != vars {
            return Err(Error::VarCountMismatch {
                left: vars,
                right: tails.len(),
            });
        }
        if eigenvalues.iter().any(Scalar::is_zero) {
            return Err(Error::ZeroEigenvalue);
        }
        let trunc = tails[0].trunc;
        for t in &tails {
            if t.vars != vars {
                return Err(Error::VarCountMismatch {
                    left: vars,
                    right: t.vars,
                });
            }
            if t.trunc != trunc {
                return Err(Error::TruncationMismatch {
                    left: trunc,
                    right: t.trunc,
                });
            }
            if t.order().is_some_and(|o| o < 2) {
                return Err(Error::Precondition(
                    "map tails must have zero constant and linear terms".into(),
                ));
            }
        }
        Ok(FormalMap {
            vars,
            trunc,
            eigenvalues,
            tails,
        })
    }

    pub fn linear(eigenvalues: Vec<Scalar>, trunc: u32) -> Result<Self> {
        let vars = eigenvalues.len();
        check_vars(vars)?;
        let tails = vec![Series::zero(vars, trunc); vars];
        FormalMap::new(eigenvalues, tails)
    }

    pub fn identity(vars: usize, trunc: u32) -> Self {
        FormalMap::linear(vec![Scalar::one(); vars], trunc).expect("identity is valid")
    }

    /// Builds a map from full component series, which must have zero constant
    /// terms and a diagonal invertible linear part.
    pub fn from_components(components: Vec<Series>) -> Result<Self> {
        let vars = components.len();
        check_vars(vars)?;
        let mut eigenvalues = Vec::with_capacity(vars);
        let mut tails = Vec::with_capacity(vars);
        for (k, c) in components.into_iter().enumerate() {
            if c.vars != vars {
                return Err(Error::VarCountMismatch {
                    left: vars,
                    right: c.vars,
                });
            }
            if c.get(MultiIndex::ZERO).is_some() {
                return Err(Error::NonZeroConstant);
            }
            for l in 0..vars {
                if l != k && c.get(MultiIndex::unit(l)).is_some() {
                    return Err(Error::Precondition("linear part is not diagonal".into()));
                }
            }
            eigenvalues.push(c.coeff(MultiIndex::unit(k)));
            tails.push(c.tail_from(2));
        }
        FormalMap::new(eigenvalues, tails)
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn truncation(&self) -> u32 {
        self.trunc
    }

    pub fn eigenvalues(&self) -> &[Scalar] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> &Scalar {
        &self.eigenvalues[k]
    }

    pub fn tail(&self, k: usize) -> &Series {
        &self.tails[k]
    }

    pub fn tails(&self) -> &[Series] {
        &self.tails
    }

    /// Full component `λ_k x_k + tail_k`.
    pub fn component(&self, k: usize) -> Series {
        let mut s = self.tails[k].clone();
        s.set(MultiIndex::unit(k), self.eigenvalues[k].clone());
        s
    }

    pub fn components(&self) -> Vec<Series> {
        (0..self.vars).map(|k| self.component(k)).collect()
    }

    /// `[F]^k_a`, including the linear part.
    pub fn coeff(&self, k: usize, idx: MultiIndex) -> Scalar {
        if idx == MultiIndex::unit(k) {
            self.eigenvalues[k].clone()
        } else {
            self.tails[k].coeff(idx)
        }
    }

    /// Nonlinear coefficients as `(component, index, value)`.
    pub fn nonlinear_terms(&self) -> impl Iterator<Item = (usize, MultiIndex, &Scalar)> + '_ {
        self.tails
            .iter()
            .enumerate()
            .flat_map(|(k, t)| t.terms().map(move |(i, v)| (k, i, v)))
    }

    pub fn is_linear(&self) -> bool {
        self.tails.iter().all(Series::is_zero)
    }

    pub fn truncated(&self, n: u32) -> FormalMap {
        FormalMap {
            vars: self.vars,
            trunc: n.min(self.trunc),
            eigenvalues: self.eigenvalues.clone(),
            tails: self.tails.iter().map(|t| t.truncated(n)).collect(),
        }
    }

    fn check_same(&self, other: &FormalMap) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::VarCountMismatch {
                left: self.vars,
                right: other.vars,
            });
        }
        if self.trunc != other.trunc {
            return Err(Error::TruncationMismatch {
                left: self.trunc,
                right: other.trunc,
            });
        }
        Ok(())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &FormalMap) -> Result<FormalMap> {
        self.check_same(inner)?;
        let inner_components = inner.components();
        let comps = compose_components(&self.components(), &inner_components)?;
        FormalMap::from_components(comps)
    }

    /// Degree-by-degree inverse `G` with `F∘G ≡ Id ≡ G∘F` through `N`.
    pub fn inverse(&self) -> Result<FormalMap> {
        let inv_eigs: Vec<Scalar> = self.eigenvalues.iter().map(Scalar::recip).collect::<Result<_>>()?;
        let mut g_comps: Vec<Series> = (0..self.vars)
            .map(|k| Series::monomial(self.vars, self.trunc, MultiIndex::unit(k), inv_eigs[k].clone()))
            .collect();
        let comps = self.components();
        let mut powers = MonomialCache::new(&comps, self.vars)?;
        for d in 2..=self.trunc {
            // [G∘F]_d = 0: λ^b [G_k]_b = -Σ_{|a|<d} [G_k]_a [F^a]_b for |b| = d
            for g in &mut g_comps {
                let mut acc = Series::zero(self.vars, d);
                for (a, c) in g.terms() {
                    for (b, v) in powers.monomial(a).terms().filter(|(b, _)| b.total() == d) {
                        acc.add_to(b, &(c * v));
                    }
                }
                for (b, c) in acc.terms() {
                    let lb =
                        (0..self.vars).fold(Scalar::one(), |p, i| p * self.eigenvalues[i].powi(i64::from(b.get(i))));
                    g.set(b, -(c / &lb));
                }
            }
        }
        FormalMap::from_components(g_comps)
    }

    /// `L_q^{-1} ∘ F ∘ L_q`: coefficient at `a` becomes `q^(|a|-1)·[F]_a`.
    pub fn conjugate_by_scaling(&self, q: &Scalar) -> Result<FormalMap> {
        if q.is_zero() {
            return Err(Error::ZeroScale);
        }
        let tails = self
            .tails
            .iter()
            .map(|t| {
                let mut s = Series::zero(self.vars, self.trunc);
                for (idx, c) in t.terms() {
                    s.set(idx, c * q.powi(idx.total() as i64 - 1));
                }
                s
            })
            .collect();
        FormalMap::new(self.eigenvalues.clone(), tails)
    }

    /// `q = p^s` with the smallest `s ≥ 0` making every nonlinear coefficient
    /// of the scaled map integral.
    pub fn find_integralizing_q(&self, ctx: &PrimeContext) -> Scalar {
        let s = ctx.integralizing_exponent(
            self.nonlinear_terms()
                .map(|(_, idx, c)| (u64::from(idx.total() - 1), c)),
        );
        ctx.prime_power(s as i64)
    }

    pub fn tail_is_integral(&self, ctx: &PrimeContext) -> bool {
        self.nonlinear_terms().all(|(_, _, c)| ctx.is_integral(c))
    }

    /// Growth certificate over all nonlinear coefficients of all components.
    pub fn growth_certificate(&self, ctx: &PrimeContext) -> Option<GrowthCertificate> {
        growth_certificate(self.nonlinear_terms().map(|(_, idx, c)| (idx.total(), c)), ctx)
    }

    /// Component-wise difference of full components.
    pub fn difference(&self, other: &FormalMap) -> Result<Vec<Series>> {
        self.check_same(other)?;
        self.components()
            .iter()
            .zip(other.components().iter())
            .map(|(a, b)| a.sub(b))
            .collect()
    }
}

impl fmt::Debug for FormalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for FormalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for k in 0..self.vars {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", self.component(k))?;
        }
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    #[serde(with = "one_based", default)]
    component: usize,
    index: Vec<u32>,
    value: Scalar,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    vars: usize,
    truncation: u32,
    eigenvalues: Vec<Scalar>,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    vars: usize,
    truncation: u32,
    terms: Vec<SeriesTermRepr>,
}

#[derive(Serialize, Deserialize)]
struct SeriesTermRepr {
    index: Vec<u32>,
    value: Scalar,
}

fn parse_index(vars: usize, index: &[u32]) -> Result<MultiIndex> {
    if index.len() != vars {
        return Err(Error::Parse(format!(
            "index {index:?} has {} entries, expected {vars}",
            index.len()
        )));
    }
    MultiIndex::from_slice(index)
}

impl TryFrom<MapRepr> for FormalMap {
    type Error = Error;

    fn try_from(r: MapRepr) -> Result<Self> {
        check_vars(r.vars)?;
        if r.eigenvalues.len() != r.vars {
            return Err(Error::VarCountMismatch {
                left: r.vars,
                right: r.eigenvalues.len(),
            });
        }
        let mut tails = vec![Series::zero(r.vars, r.truncation); r.vars];
        for t in r.terms {
            if t.component >= r.vars {
                return Err(Error::Parse(format!("component {} out of range", t.component + 1)));
            }
            let idx = parse_index(r.vars, &t.index)?;
            if idx.total() < 2 {
                return Err(Error::Parse(format!(
                    "term at {idx} must be nonlinear; linear parts go in eigenvalues"
                )));
            }
            tails[t.component].add_to(idx, &t.value);
        }
        FormalMap::new(r.eigenvalues, tails)
    }
}

impl From<&FormalMap> for MapRepr {
    fn from(f: &FormalMap) -> Self {
        MapRepr {
            vars: f.vars,
            truncation: f.trunc,
            eigenvalues: f.eigenvalues.clone(),
            terms: f
                .nonlinear_terms()
                .map(|(k, idx, v)| TermRepr {
                    component: k,
                    index: idx.to_vec(f.vars),
                    value: v.clone(),
                })
                .collect(),
        }
    }
}

impl Serialize for FormalMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MapRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FormalMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MapRepr::deserialize(d)?;
        FormalMap::try_from(r).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Series {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesRepr {
            vars: self.vars,
            truncation: self.trunc,
            terms: self
                .terms()
                .map(|(idx, v)| SeriesTermRepr {
                    index: idx.to_vec(self.vars),
                    value: v.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Series {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SeriesRepr::deserialize(d)?;
        let build = || -> Result<Series> {
            let terms = r
                .terms
                .iter()
                .map(|t| Ok((parse_index(r.vars, &t.index)?, t.value.clone())))
                .collect::<Result<Vec<_>>>()?;
            Series::from_terms(r.vars, r.truncation, terms)
        };
        build().map_err(serde::de::Error::custom)
    }
}

/// `outer∘inner` through degree `n` for outer components homogeneous of
/// degree `m`. Each power `inner_k^e` is kept only through degree
/// `n − (m − e)`, the most any product of total degree `m` can use.
pub(crate) fn compose_homogeneous(outer: &[Series], inner: &[Series], m: u32, n: u32) -> Result<Vec<Series>> {
    let vars = inner.len();
    check_vars(vars)?;
    let mut powers: Vec<Vec<Series>> = Vec::with_capacity(vars);
    for s in inner {
        let mut row = vec![Series::one(vars, n - m)];
        for e in 1..=m {
            let next = row[e as usize - 1].mul_trunc(s, n - m + e);
            row.push(next);
        }
        powers.push(row);
    }
    outer
        .iter()
        .map(|o| {
            o.check_compatible(&inner[0])?;
            let mut acc = Series::zero(vars, n);
            for (a, c) in o.terms() {
                debug_assert_eq!(a.total(), m);
                let mut term = powers[0][a.get(0) as usize].clone();
                for (k, row) in powers.iter().enumerate().skip(1) {
                    term = term.mul_trunc(&row[a.get(k) as usize], n);
                }
                for (b, v) in term.terms() {
                    acc.add_to(b, &(c * v));
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Substitutes `inner` into each outer component, sharing monomial powers.
pub fn compose_components(outer: &[Series], inner: &[Series]) -> Result<Vec<Series>> {
    let vars = inner.len();
    let mut cache = MonomialCache::new(inner, vars)?;
    outer
        .iter()
        .map(|o| {
            if o.vars != vars {
                return Err(Error::VarCountMismatch {
                    left: o.vars,
                    right: vars,
                });
            }
            let trunc = o.trunc.min(cache.trunc);
            Ok(cache.evaluate(o, trunc))
        })
        .collect()
}

/// A nonzero coefficient of a conjugacy residual.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualEntry {
    #[serde(with = "one_based")]
    pub component: usize,
    pub index: MultiIndex,
    pub value: Scalar,
}

/// Exact residual `Φ∘F − F₀∘Φ` through the common truncation.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Residual {
    pub entries: Vec<ResidualEntry>,
}

impl Residual {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first(&self) -> Option<&ResidualEntry> {
        self.entries.first()
    }
}

/// Computes `Φ∘F − F₀∘Φ`; an empty residual certifies formal conjugacy
/// through the truncation degree.
pub fn verify_conjugacy(f: &FormalMap, f0: &FormalMap, phi: &FormalMap) -> Result<Residual> {
    let lhs = phi.compose(f)?;
    let rhs = f0.compose(phi)?;
    let diff = lhs.difference(&rhs)?;
    let mut entries = Vec::new();
    for (k, s) in diff.iter().enumerate() {
        for (idx, v) in s.terms() {
            entries.push(ResidualEntry {
                component: k,
                index: idx,
                value: v.clone(),
            });
        }
    }
    entries.sort_by(|a, b| a.index.cmp(&b.index).then(a.component.cmp(&b.component)));
    Ok(Residual { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(n: i64) -> Scalar {
        Scalar::from_int(n)
    }

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d)
    }

    fn bi(trunc: u32, terms: &[((u32, u32), Scalar)]) -> Series {
        Series::from_terms(
            2,
            trunc,
            terms.iter().map(|((i, j), c)| (MultiIndex::new(*i, *j), c.clone())),
        )
        .unwrap()
    }

    fn uni(trunc: u32, terms: &[(u32, i64)]) -> Series {
        Series::univariate(trunc, terms.iter().map(|(d, c)| (*d, s(*c))))
    }

    #[test]
    fn multiply_examples() {
        let a = bi(4, &[((1, 0), s(1)), ((0, 1), s(1))]);
        let b = bi(4, &[((1, 0), s(1)), ((0, 1), s(-1))]);
        assert_eq!(a.mul(&b).unwrap(), bi(4, &[((2, 0), s(1)), ((0, 2), s(-1))]));

        let one_x = uni(2, &[(0, 1), (1, 1)]);
        assert_eq!(one_x.mul(&one_x).unwrap(), uni(2, &[(0, 1), (1, 2), (2, 1)]));

        let f = uni(3, &[(1, 1), (2, 1)]);
        assert_eq!(f.mul(&f).unwrap(), uni(3, &[(2, 1), (3, 2)]));
    }

    #[test]
    fn multiply_rejects_var_mismatch() {
        let a = uni(3, &[(1, 1)]);
        let b = Series::var(2, 3, 0);
        assert!(matches!(a.mul(&b), Err(Error::VarCountMismatch { .. })));
    }

    #[test]
    fn substitute_examples() {
        let f = uni(4, &[(1, 1), (2, 1)]);
        let alpha = uni(4, &[(2, 1)]);
        assert_eq!(alpha.substitute(&f).unwrap(), uni(4, &[(2, 1), (3, 2), (4, 1)]));

        let g = uni(5, &[(1, 1), (3, 1)]);
        assert_eq!(uni(5, &[(1, 1)]).substitute(&g).unwrap(), g);

        let f3 = uni(3, &[(1, 1), (2, 1)]);
        assert_eq!(f3.substitute(&f3).unwrap(), uni(3, &[(1, 1), (2, 2), (3, 2)]));

        let bad = uni(3, &[(0, 1), (1, 1)]);
        assert_eq!(f3.substitute(&bad), Err(Error::NonZeroConstant));
    }

    #[test]
    fn included_coefficient_of_power() {
        // H_2 = (x + c xy, y), G = (λ1 x, λ2 y) ⇒ [H∘G]^1_(1,1) = c λ1 λ2.
        let (c, l1, l2) = (q(3, 7), q(1, 2), s(5));
        let h = FormalMap::new(
            vec![s(1), s(1)],
            vec![bi(3, &[((1, 1), c.clone())]), Series::zero(2, 3)],
        )
        .unwrap();
        let g = FormalMap::linear(vec![l1.clone(), l2.clone()], 3).unwrap();
        let hg = h.compose(&g).unwrap();
        assert_eq!(hg.coeff(0, MultiIndex::new(1, 1)), c * l1 * l2);
    }

    #[test]
    fn compose_examples() {
        let f = FormalMap::new(vec![s(1), s(1)], vec![bi(4, &[((0, 2), s(1))]), Series::zero(2, 4)]).unwrap();
        let g = FormalMap::new(vec![s(1), s(1)], vec![Series::zero(2, 4), bi(4, &[((2, 0), s(1))])]).unwrap();
        let fg = f.compose(&g).unwrap();
        assert_eq!(
            fg.component(0),
            bi(4, &[((1, 0), s(1)), ((0, 2), s(1)), ((2, 1), s(2)), ((4, 0), s(1))])
        );
        assert_eq!(f.compose(&FormalMap::identity(2, 4)).unwrap(), f);
        assert!(matches!(
            f.compose(&FormalMap::identity(2, 5)),
            Err(Error::TruncationMismatch { .. })
        ));
    }

    #[test]
    fn inverse_examples() {
        let d = FormalMap::linear(vec![s(2), s(3)], 4).unwrap();
        assert_eq!(
            d.inverse().unwrap(),
            FormalMap::linear(vec![q(1, 2), q(1, 3)], 4).unwrap()
        );

        let f = FormalMap::new(vec![s(1), s(1)], vec![Series::zero(2, 4), bi(4, &[((2, 0), s(1))])]).unwrap();
        let g = FormalMap::new(vec![s(1), s(1)], vec![Series::zero(2, 4), bi(4, &[((2, 0), s(-1))])]).unwrap();
        assert_eq!(f.inverse().unwrap(), g);
        assert_eq!(f.compose(&g).unwrap(), FormalMap::identity(2, 4));

        let f = FormalMap::new(vec![s(1), s(1)], vec![bi(3, &[((2, 0), s(1))]), Series::zero(2, 3)]).unwrap();
        let expect = FormalMap::new(
            vec![s(1), s(1)],
            vec![bi(3, &[((2, 0), s(-1)), ((3, 0), s(2))]), Series::zero(2, 3)],
        )
        .unwrap();
        assert_eq!(f.inverse().unwrap(), expect);
    }

    #[test]
    fn scaling_examples() {
        let f = FormalMap::new(vec![s(1), s(1)], vec![bi(4, &[((2, 0), q(1, 2))]), Series::zero(2, 4)]).unwrap();
        let g = f.conjugate_by_scaling(&s(2)).unwrap();
        assert_eq!(g.coeff(0, MultiIndex::new(2, 0)), s(1));
        assert_eq!(f.conjugate_by_scaling(&s(1)).unwrap(), f);
        assert_eq!(f.conjugate_by_scaling(&Scalar::zero()), Err(Error::ZeroScale));

        let f3 = FormalMap::new(vec![s(1), s(1)], vec![bi(4, &[((2, 1), q(1, 4))]), Series::zero(2, 4)]).unwrap();
        assert_eq!(
            f3.conjugate_by_scaling(&s(2)).unwrap().coeff(0, MultiIndex::new(2, 1)),
            s(1)
        );
    }

    #[test]
    fn scaling_matches_explicit_conjugation() {
        let f = FormalMap::new(
            vec![q(1, 2), s(3)],
            vec![
                bi(4, &[((2, 0), q(1, 2)), ((1, 2), s(5))]),
                bi(4, &[((0, 2), q(-3, 4)), ((4, 0), s(1))]),
            ],
        )
        .unwrap();
        let qv = q(2, 3);
        let lq = FormalMap::linear(vec![qv.clone(), qv.clone()], 4).unwrap();
        let lq_inv = lq.inverse().unwrap();
        let explicit = lq_inv.compose(&f).unwrap().compose(&lq).unwrap();
        assert_eq!(f.conjugate_by_scaling(&qv).unwrap(), explicit);
    }

    #[test]
    fn integralizing_q_examples() {
        let ctx = PrimeContext::new(2).unwrap();
        let integral = FormalMap::new(vec![s(1), s(1)], vec![bi(4, &[((2, 0), s(3))]), Series::zero(2, 4)]).unwrap();
        assert_eq!(integral.find_integralizing_q(&ctx), s(1));

        let one = FormalMap::new(vec![s(1), s(1)], vec![bi(4, &[((2, 0), q(1, 4))]), Series::zero(2, 4)]).unwrap();
        assert_eq!(one.find_integralizing_q(&ctx), s(4));

        let two = FormalMap::new(
            vec![s(1), s(1)],
            vec![bi(4, &[((2, 0), q(1, 2))]), bi(4, &[((2, 1), q(1, 8))])],
        )
        .unwrap();
        // s = max(1, ⌈3/2⌉) = 2
        let qv = two.find_integralizing_q(&ctx);
        assert_eq!(qv, s(4));
        assert!(two.conjugate_by_scaling(&qv).unwrap().tail_is_integral(&ctx));
    }

    #[test]
    fn verify_conjugacy_detects_perturbation() {
        let f = FormalMap::new(
            vec![q(1, 2), q(1, 4)],
            vec![bi(5, &[((1, 1), s(1))]), bi(5, &[((2, 0), s(1))])],
        )
        .unwrap();
        assert!(verify_conjugacy(&f, &f, &FormalMap::identity(2, 5)).unwrap().is_empty());

        let phi = FormalMap::new(vec![s(1), s(1)], vec![bi(5, &[((0, 2), s(1))]), Series::zero(2, 5)]).unwrap();
        let r = verify_conjugacy(&f, &f, &phi).unwrap();
        assert!(!r.is_empty());
        let first = r.first().unwrap();
        assert_eq!(first.index.total(), 2);
    }

    #[test]
    fn left_distribution_fails() {
        // F∘(G+H) ≠ F∘G + F∘H for F = x² (componentwise), exhibited at N = 3.
        let n = 3;
        let f = vec![bi(n, &[((2, 0), s(1))]), bi(n, &[((0, 2), s(1))])];
        let g = vec![Series::var(2, n, 0), Series::var(2, n, 1)];
        let h = vec![bi(n, &[((0, 1), s(1))]), bi(n, &[((1, 0), s(1))])];
        let gh: Vec<Series> = g.iter().zip(&h).map(|(a, b)| a.add(b).unwrap()).collect();
        let lhs = compose_components(&f, &gh).unwrap();
        let fg = compose_components(&f, &g).unwrap();
        let fh = compose_components(&f, &h).unwrap();
        let rhs: Vec<Series> = fg.iter().zip(&fh).map(|(a, b)| a.add(b).unwrap()).collect();
        assert_ne!(lhs, rhs);
        // The witness is the cross term 2xy.
        assert_eq!(lhs[0].sub(&rhs[0]).unwrap(), bi(n, &[((1, 1), s(2))]));

        // Right distribution holds: (G+H)∘F = G∘F + H∘F.
        let k = vec![bi(n, &[((1, 0), s(2)), ((1, 1), s(1))]), bi(n, &[((0, 1), s(3))])];
        let lhs = compose_components(&gh, &k).unwrap();
        let gk = compose_components(&g, &k).unwrap();
        let hk = compose_components(&h, &k).unwrap();
        let rhs: Vec<Series> = gk.iter().zip(&hk).map(|(a, b)| a.add(b).unwrap()).collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn growth_certificate_bound() {
        let ctx = PrimeContext::new(2).unwrap();
        let f = Series::univariate(6, [(1, s(1)), (2, q(1, 8)), (3, q(1, 4)), (6, q(1, 64))]);
        let cert = f.growth_certificate(&ctx).unwrap();
        assert_eq!(cert.bound.exponent, Some(2));
        assert_eq!(cert.radius.exponent, Some(-2));
        for (idx, c) in f.terms() {
            assert!(-ctx.val(c).unwrap() <= 2 * idx.total() as i64);
        }
    }

    #[test]
    fn map_json_round_trip() {
        let text = r#"{"vars": 2, "truncation": 12, "eigenvalues": ["1/2","1/4"],
            "terms": [{"component": 1, "index": [1,1], "value": "1"},
                      {"component": 2, "index": [2,0], "value": "-3/8"}]}"#;
        let f: FormalMap = serde_json::from_str(text).unwrap();
        assert_eq!(f.coeff(0, MultiIndex::new(1, 1)), s(1));
        assert_eq!(f.coeff(1, MultiIndex::new(2, 0)), q(-3, 8));
        let back: FormalMap = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);

        let linear = r#"{"vars": 1, "truncation": 4, "eigenvalues": ["1"],
            "terms": [{"component": 1, "index": [1], "value": "2"}]}"#;
        assert!(serde_json::from_str::<FormalMap>(linear).is_err());

        let g = Series::univariate(5, [(1, s(1)), (3, q(2, 3))]);
        let back: Series = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn display_is_readable() {
        let f = bi(3, &[((1, 0), s(2)), ((1, 1), q(1, 2))]);
        assert_eq!(f.to_string(), "(2)x + (1/2)xy + O(4)");
    }
}
