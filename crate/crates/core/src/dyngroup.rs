//! Coefficient-bounding functions τ, the (weakly) dynamic inequalities,
//! and membership in the groups they define.
//!
//! All comparisons are done on valuations: `|X| ≤ |Y|` iff `v(X) ≥ v(Y)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{factorial, PrimeContext, Scalar};
use crate::series::{one_based, FormalMap, MultiIndex};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    #[serde(with = "one_based")]
    pub component: usize,
    pub index: MultiIndex,
    pub exponent: i64,
}

/// A descriptor `τ: A_t → K^r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum TauSpec {
    /// `r = t = 1`, `τ(n) = n!`.
    Factorial,
    /// `r = t = 2`, `τ_k(i,j) = λ^max(1,j)`.
    Maxes { lambda: Scalar },
    /// `r = t = 2`, `τ_1(i,j) = λ^(i+nj)`, `τ_2(i,j) = λ^max(n, i+nj)`.
    Mixed { lambda: Scalar, n: u32 },
    /// `r = 1`, `t = m+1`, `τ(n) = q^σ(n)` with `σ(n) = (n+1) + m⌊(n−2)/(m−1)⌋`.
    Sigma { q: Scalar, m: u32 },
    /// `τ_k(a) = base^exponent(k, a)` from an explicit table.
    Table {
        base: Scalar,
        r: usize,
        t: u32,
        exponents: Vec<TableEntry>,
    },
}

impl TauSpec {
    /// Builds a table from a closure over `(component, index)` for every
    /// index with total degree in `[t, bound]`.
    pub fn table_from<F>(base: Scalar, r: usize, t: u32, bound: u32, exponent: F) -> TauSpec
    where
        F: Fn(usize, MultiIndex) -> i64,
    {
        let mut exponents = Vec::new();
        for d in t..=bound {
            for idx in MultiIndex::of_degree(r, d) {
                for k in 0..r {
                    exponents.push(TableEntry {
                        component: k,
                        index: idx,
                        exponent: exponent(k, idx),
                    });
                }
            }
        }
        TauSpec::Table { base, r, t, exponents }
    }

    pub fn dims(&self) -> (usize, u32) {
        match self {
            TauSpec::Factorial => (1, 1),
            TauSpec::Maxes { .. } | TauSpec::Mixed { .. } => (2, 2),
            TauSpec::Sigma { m, .. } => (1, m + 1),
            TauSpec::Table { r, t, .. } => (*r, *t),
        }
    }

    /// Checks the variant's parameter constraints. `strict` demands
    /// `|λ| > 1`, which the normalization drivers require; otherwise `|λ| ≥ 1`.
    pub fn validate(&self, ctx: &PrimeContext, strict: bool) -> Result<()> {
        let check_lambda = |l: &Scalar| -> Result<()> {
            match ctx.val(l) {
                None => Err(Error::Domain("lambda must be nonzero".into())),
                Some(v) if v < 0 || (!strict && v == 0) => Ok(()),
                Some(_) => Err(Error::Domain(format!(
                    "|lambda| must be {} 1 for lambda = {l}",
                    if strict { ">" } else { ">=" }
                ))),
            }
        };
        match self {
            TauSpec::Factorial => Ok(()),
            TauSpec::Maxes { lambda } => check_lambda(lambda),
            TauSpec::Mixed { lambda, n } => {
                if *n == 0 {
                    return Err(Error::Domain("mixed needs n >= 1".into()));
                }
                check_lambda(lambda)
            }
            TauSpec::Sigma { q, m } => {
                if *m < 2 {
                    return Err(Error::Domain("sigma needs m >= 2".into()));
                }
                match ctx.val(q) {
                    Some(v) if v >= 0 => Ok(()),
                    _ => Err(Error::Domain("sigma needs 0 < |q| <= 1".into())),
                }
            }
            TauSpec::Table { base, r, t, .. } => {
                if base.is_zero() {
                    return Err(Error::Domain("table base must be nonzero".into()));
                }
                if !(*r == 1 || *r == 2) || *t == 0 {
                    return Err(Error::Domain("table needs r in {1,2} and t >= 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Exponent used by the λ-power variants, or `None` for factorial.
    fn lambda_exponent(&self, idx: MultiIndex, k: usize) -> Result<Option<(Scalar, i64)>> {
        let (i, j) = (i64::from(idx.i()), i64::from(idx.j()));
        Ok(match self {
            TauSpec::Factorial => None,
            TauSpec::Maxes { lambda } => Some((lambda.clone(), j.max(1))),
            TauSpec::Mixed { lambda, n } => {
                let n = i64::from(*n);
                let e = if k == 0 { i + n * j } else { n.max(i + n * j) };
                Some((lambda.clone(), e))
            }
            TauSpec::Sigma { q, m } => {
                let m = i64::from(*m);
                let d = i64::from(idx.total());
                Some((q.clone(), (d + 1) + m * (d - 2).div_euclid(m - 1)))
            }
            TauSpec::Table { base, exponents, .. } => {
                let e = exponents
                    .iter()
                    .find(|e| e.component == k && e.index == idx)
                    .ok_or_else(|| Error::Domain(format!("table has no entry for ({}, {idx})", k + 1)))?;
                Some((base.clone(), e.exponent))
            }
        })
    }

    fn check_domain(&self, idx: MultiIndex, k: usize) -> Result<()> {
        let (r, t) = self.dims();
        if k >= r {
            return Err(Error::Domain(format!("component {} but r = {r}", k + 1)));
        }
        if r == 1 && idx.j() != 0 {
            return Err(Error::Domain(format!("index {idx} for a one-variable tau")));
        }
        if idx.total() < t {
            return Err(Error::Domain(format!("index {idx} below t = {t}")));
        }
        Ok(())
    }

    /// `τ_k(a)` exactly (component `k` is 0-based).
    pub fn eval(&self, idx: MultiIndex, k: usize) -> Result<Scalar> {
        self.check_domain(idx, k)?;
        Ok(match self.lambda_exponent(idx, k)? {
            None => factorial(u64::from(idx.total())),
            Some((base, e)) => base.powi(e),
        })
    }

    /// `v_p(τ_k(a))` without forming the power.
    pub fn valuation(&self, idx: MultiIndex, k: usize, ctx: &PrimeContext) -> Result<i64> {
        self.check_domain(idx, k)?;
        Ok(match self.lambda_exponent(idx, k)? {
            None => ctx.factorial_valuation(u64::from(idx.total())) as i64,
            Some((base, e)) => e * ctx.val(&base).expect("base is nonzero"),
        })
    }
}

pub fn tau_eval(spec: &TauSpec, idx: MultiIndex, k: usize) -> Result<Scalar> {
    spec.eval(idx, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Strong,
}

/// One chosen part `a_i · b_i` of a component partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub multiplicity: u32,
    pub index: MultiIndex,
}

/// Partition `a^(k) = a_0 + Σ a_i` with chosen `b_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPartition {
    pub a0: u32,
    pub parts: Vec<Part>,
}

impl ComponentPartition {
    fn total(&self) -> u32 {
        self.a0 + self.parts.iter().map(|p| p.multiplicity).sum::<u32>()
    }

    fn sort_key(&self) -> (u32, usize, Vec<(MultiIndex, u32)>) {
        (
            self.a0,
            self.parts.len(),
            self.parts.iter().map(|p| (p.index, p.multiplicity)).collect(),
        )
    }
}

/// A decomposition violating the dynamic inequality in component `n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynWitness {
    pub target: MultiIndex,
    pub partitions: Vec<ComponentPartition>,
    pub c: MultiIndex,
    #[serde(with = "one_based")]
    pub component: usize,
    pub strength: Strength,
    /// `v(τ_n(c))`, plus the multinomial valuation in weak mode.
    pub lhs_valuation: i64,
    /// `v(τ_n(a)) + Σ a_i v(τ_k(b_i))`.
    pub rhs_valuation: i64,
}

impl DynWitness {
    /// Recomputes both sides from the witness fields; true iff the
    /// inequality really fails.
    pub fn recheck(&self, spec: &TauSpec, ctx: &PrimeContext) -> Result<bool> {
        let (r, _) = spec.dims();
        if self.partitions.len() != r {
            return Ok(false);
        }
        let mut c = [0u32; 2];
        for (k, part) in self.partitions.iter().enumerate() {
            if part.total() != self.target.get(k) {
                return Ok(false);
            }
            c[k] += part.a0;
            for p in &part.parts {
                c[0] += p.multiplicity * p.index.i();
                c[1] += p.multiplicity * p.index.j();
            }
        }
        if MultiIndex::new(c[0], c[1]) != self.c {
            return Ok(false);
        }
        let (lhs, rhs) = sides(
            spec,
            self.target,
            &self.partitions,
            self.c,
            self.component,
            self.strength,
            ctx,
        )?;
        Ok(lhs == self.lhs_valuation && rhs == self.rhs_valuation && lhs < rhs)
    }
}

fn multinomial_valuation(part: &ComponentPartition, ctx: &PrimeContext) -> i64 {
    let total = part.total() as u64;
    let mut v = ctx.factorial_valuation(total) as i64 - ctx.factorial_valuation(part.a0 as u64) as i64;
    for p in &part.parts {
        v -= ctx.factorial_valuation(p.multiplicity as u64) as i64;
    }
    v
}

fn sides(
    spec: &TauSpec,
    a: MultiIndex,
    partitions: &[ComponentPartition],
    c: MultiIndex,
    n: usize,
    strength: Strength,
    ctx: &PrimeContext,
) -> Result<(i64, i64)> {
    let mut lhs = spec.valuation(c, n, ctx)?;
    if strength == Strength::Weak {
        lhs += partitions.iter().map(|p| multinomial_valuation(p, ctx)).sum::<i64>();
    }
    let mut rhs = spec.valuation(a, n, ctx)?;
    for (k, part) in partitions.iter().enumerate() {
        for p in &part.parts {
            rhs += i64::from(p.multiplicity) * spec.valuation(p.index, k, ctx)?;
        }
    }
    Ok((lhs, rhs))
}

/// Every way to write `total = a0 + Σ a_i` with a multiset of parts
/// `(a_i ≥ 1, b_i)` whose weight `a0 + Σ a_i |b_i|` stays within `budget`.
fn component_partitions(total: u32, budget: u32, bs: &[MultiIndex]) -> Vec<ComponentPartition> {
    fn rec(
        remaining: u32,
        budget: u32,
        bs: &[MultiIndex],
        start: usize,
        current: &mut Vec<Part>,
        out: &mut Vec<ComponentPartition>,
    ) {
        // whatever is left goes to a0, costing one unit of weight each
        if remaining <= budget {
            out.push(ComponentPartition {
                a0: remaining,
                parts: current.clone(),
            });
        }
        for (bi, b) in bs.iter().enumerate().skip(start) {
            for mult in 1..=remaining {
                let w = mult * b.total();
                if w > budget {
                    break;
                }
                current.push(Part {
                    multiplicity: mult,
                    index: *b,
                });
                rec(remaining - mult, budget - w, bs, bi + 1, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(total, budget, bs, 0, &mut Vec::new(), &mut out);
    out.sort_by_key(ComponentPartition::sort_key);
    out
}

/// Steps the per-component choice vector like an odometer, last component
/// fastest; false once every combination has been visited.
fn advance(choice: &mut [usize], per_comp: &[Vec<ComponentPartition>]) -> bool {
    for k in (0..choice.len()).rev() {
        choice[k] += 1;
        if choice[k] < per_comp[k].len() {
            return true;
        }
        choice[k] = 0;
    }
    false
}

/// Exhaustively checks the (weak or strong) dynamic inequality for all
/// targets `a ∈ A_t` and decompositions with `|c| ≤ bound`. Returns the
/// first violation in the canonical order, or `None` on a pass.
pub fn check_dynamic(spec: &TauSpec, bound: u32, strength: Strength, ctx: &PrimeContext) -> Result<Option<DynWitness>> {
    spec.validate(ctx, false)?;
    let (r, t) = spec.dims();
    let bs: Vec<MultiIndex> = (t..=bound).flat_map(|d| MultiIndex::of_degree(r, d)).collect();
    for d in t..=bound {
        for a in MultiIndex::of_degree(r, d) {
            let per_comp: Vec<Vec<ComponentPartition>> =
                (0..r).map(|k| component_partitions(a.get(k), bound, &bs)).collect();
            let mut choice = vec![0usize; r];
            loop {
                let partitions: Vec<ComponentPartition> = (0..r).map(|k| per_comp[k][choice[k]].clone()).collect();
                let mut c = [0u32; 2];
                for (k, part) in partitions.iter().enumerate() {
                    c[k] += part.a0;
                    for p in &part.parts {
                        c[0] += p.multiplicity * p.index.i();
                        c[1] += p.multiplicity * p.index.j();
                    }
                }
                let c = MultiIndex::new(c[0], c[1]);
                if c.total() <= bound {
                    for n in 0..r {
                        let (lhs, rhs) = sides(spec, a, &partitions, c, n, strength, ctx)?;
                        if lhs < rhs {
                            return Ok(Some(DynWitness {
                                target: a,
                                partitions,
                                c,
                                component: n,
                                strength,
                                lhs_valuation: lhs,
                                rhs_valuation: rhs,
                            }));
                        }
                    }
                }
                if !advance(&mut choice, &per_comp) {
                    break;
                }
            }
        }
    }
    Ok(None)
}

/// `margin = v_p(τ_k(a)·coefficient)` for one coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "one_based")]
    pub component: usize,
    pub index: MultiIndex,
    pub margin: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub certificates: Vec<Certificate>,
    /// Whether the linear part is diagonal with unit entries.
    pub unit_diagonal: bool,
}

impl Membership {
    pub fn tail_passes(&self) -> bool {
        self.certificates.iter().all(|c| c.margin >= 0)
    }

    pub fn passes(&self) -> bool {
        self.unit_diagonal && self.tail_passes()
    }

    pub fn worst(&self) -> Option<&Certificate> {
        self.certificates.iter().min_by_key(|c| c.margin)
    }

    pub fn first_failure(&self) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.margin < 0)
    }
}

/// Margins `v_p(τ_k(a)·[F]^k_a)` for every stored nonlinear coefficient in
/// the domain `|a| ≥ t` of τ.
pub fn coefficient_margins(f: &FormalMap, spec: &TauSpec, ctx: &PrimeContext) -> Result<Vec<Certificate>> {
    let (r, t) = spec.dims();
    if r != f.vars() {
        return Err(Error::VarCountMismatch {
            left: r,
            right: f.vars(),
        });
    }
    let mut cache: BTreeMap<(usize, MultiIndex), i64> = BTreeMap::new();
    let mut out = Vec::new();
    for (k, idx, c) in f.nonlinear_terms() {
        if idx.total() < t {
            continue;
        }
        let tv = match cache.get(&(k, idx)) {
            Some(v) => *v,
            None => {
                let v = spec.valuation(idx, k, ctx)?;
                cache.insert((k, idx), v);
                v
            }
        };
        out.push(Certificate {
            component: k,
            index: idx,
            margin: tv + ctx.val(c).expect("stored coefficients are nonzero"),
        });
    }
    Ok(out)
}

/// Checks `τ_k(a)·[F̃]^k_a ∈ Δ` for the tail and the unit-diagonal condition.
pub fn membership(f: &FormalMap, spec: &TauSpec, ctx: &PrimeContext) -> Result<Membership> {
    let certificates = coefficient_margins(f, spec, ctx)?;
    let unit_diagonal = f.eigenvalues().iter().all(|l| ctx.val(l) == Some(0));
    Ok(Membership {
        certificates,
        unit_diagonal,
    })
}
