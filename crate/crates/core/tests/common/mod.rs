#![allow(dead_code)]

use std::collections::BTreeMap;

use padic_dulac::{FormalMap, MultiIndex, Scalar, Series};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn s(n: i64) -> Scalar {
    Scalar::from_int(n)
}

pub fn q(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn random_int(rng: &mut StdRng, range: i64) -> i64 {
    rng.gen_range(-range..=range)
}

/// Integral tail with degrees `min_deg..=trunc`, each coefficient nonzero
/// with probability `density`.
pub fn random_tail(rng: &mut StdRng, vars: usize, trunc: u32, min_deg: u32, density: f64, range: i64) -> Series {
    let mut out = Series::zero(vars, trunc);
    for d in min_deg.max(2)..=trunc {
        for idx in MultiIndex::of_degree(vars, d) {
            if rng.gen_bool(density) {
                out.set(idx, s(random_int(rng, range)));
            }
        }
    }
    out
}

pub fn random_map(rng: &mut StdRng, eigs: &[Scalar], trunc: u32, density: f64) -> FormalMap {
    let tails = (0..eigs.len())
        .map(|_| random_tail(rng, eigs.len(), trunc, 2, density, 3))
        .collect();
    FormalMap::new(eigs.to_vec(), tails).unwrap()
}

pub fn random_tangent(rng: &mut StdRng, vars: usize, trunc: u32, density: f64) -> FormalMap {
    random_map(rng, &vec![s(1); vars], trunc, density)
}

/// Random integral conjugator with a diagonal linear part of 2-adic units.
pub fn random_unit_conjugator(rng: &mut StdRng, trunc: u32, density: f64) -> FormalMap {
    let units = [s(1), s(-1), s(3), s(-3), s(5)];
    let eigs: Vec<Scalar> = (0..2).map(|_| units[rng.gen_range(0..units.len())].clone()).collect();
    random_map(rng, &eigs, trunc, density)
}

/// Random integral map with eigenvalues `(1, λ)` and `[F]¹_(2,0) = 1`, so
/// the first component of its normal form is not linear.
pub fn random_semihyperbolic(rng: &mut StdRng, lambda: &Scalar, trunc: u32, density: f64) -> FormalMap {
    let raw = random_map(rng, &[s(1), lambda.clone()], trunc, density);
    let mut tails = raw.tails().to_vec();
    tails[0].set(MultiIndex::new(2, 0), s(1));
    FormalMap::new(raw.eigenvalues().to_vec(), tails).unwrap()
}

/// `(f(x), λy(1+g(x)))` with `f = x + x² + (integral terms of degree ≥ 3)`
/// and integral `g(0) = 0`.
pub fn random_pd_form(rng: &mut StdRng, lambda: &Scalar, trunc: u32) -> FormalMap {
    let mut t1 = Series::zero(2, trunc);
    t1.set(MultiIndex::new(2, 0), s(1));
    for i in 3..=trunc {
        if rng.gen_bool(0.6) {
            t1.set(MultiIndex::new(i, 0), s(random_int(rng, 3)));
        }
    }
    let mut t2 = Series::zero(2, trunc);
    for i in 1..trunc {
        if rng.gen_bool(0.6) {
            t2.set(MultiIndex::new(i, 1), lambda * &s(random_int(rng, 3)));
        }
    }
    FormalMap::new(vec![s(1), lambda.clone()], vec![t1, t2]).unwrap()
}

/// `x + a_m x^m + …` with integral coefficients and `a_m ≠ 0` for some `m ≤ 4`.
pub fn random_series_1d(rng: &mut StdRng, trunc: u32) -> Series {
    let m = rng.gen_range(2..=4u32);
    let mut terms = vec![(1, s(1))];
    let mut lead = 0;
    while lead == 0 {
        lead = random_int(rng, 4);
    }
    terms.push((m, s(lead)));
    for d in m + 1..=trunc {
        if rng.gen_bool(0.6) {
            terms.push((d, s(random_int(rng, 4))));
        }
    }
    Series::univariate(trunc, terms)
}

pub fn random_tangent_1d(rng: &mut StdRng, trunc: u32) -> Series {
    let mut terms = vec![(1, s(1))];
    for d in 2..=trunc {
        if rng.gen_bool(0.5) {
            terms.push((d, s(random_int(rng, 3))));
        }
    }
    Series::univariate(trunc, terms)
}

/// Dense truncated polynomials in two variables, kept apart from the
/// library's composition code.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    pub trunc: u32,
    pub c: BTreeMap<(u32, u32), Scalar>,
}

impl Poly {
    pub fn zero(trunc: u32) -> Poly {
        Poly {
            trunc,
            c: BTreeMap::new(),
        }
    }

    pub fn one(trunc: u32) -> Poly {
        let mut p = Poly::zero(trunc);
        p.add((0, 0), &s(1));
        p
    }

    pub fn from_series(x: &Series) -> Poly {
        let mut p = Poly::zero(x.truncation());
        for (idx, v) in x.terms() {
            p.add((idx.i(), idx.j()), v);
        }
        p
    }

    pub fn add(&mut self, e: (u32, u32), v: &Scalar) {
        if e.0 + e.1 > self.trunc {
            return;
        }
        let slot = self.c.entry(e).or_insert_with(Scalar::zero);
        *slot += v;
        if slot.is_zero() {
            self.c.remove(&e);
        }
    }

    pub fn get(&self, e: (u32, u32)) -> Scalar {
        self.c.get(&e).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.trunc);
        for (&(a, b), x) in &self.c {
            for (&(c, d), y) in &other.c {
                out.add((a + c, b + d), &(x * y));
            }
        }
        out
    }

    pub fn truncated(&self, trunc: u32) -> Poly {
        Poly {
            trunc,
            c: self
                .c
                .iter()
                .filter(|(e, _)| e.0 + e.1 <= trunc)
                .map(|(e, v)| (*e, v.clone()))
                .collect(),
        }
    }

    /// `self(u, v)`.
    pub fn compose(&self, u: &Poly, v: &Poly) -> Poly {
        self.compose_with(&Monomials::new(u, v))
    }

    pub fn compose_with(&self, m: &Monomials) -> Poly {
        let mut out = Poly::zero(self.trunc.min(m.trunc));
        for (&(i, j), c) in &self.c {
            for (&e, w) in &m.get(i, j).c {
                out.add(e, &(c * w));
            }
        }
        out
    }
}

/// All products `u^i v^j` through the truncation.
pub struct Monomials {
    trunc: u32,
    table: BTreeMap<(u32, u32), Poly>,
}

impl Monomials {
    pub fn new(u: &Poly, v: &Poly) -> Monomials {
        let trunc = u.trunc.min(v.trunc);
        let mut table = BTreeMap::new();
        table.insert((0, 0), Poly::one(trunc));
        for i in 0..=trunc {
            if i > 0 {
                let prev = table[&(i - 1, 0)].mul(u);
                table.insert((i, 0), prev);
            }
            for j in 1..=trunc - i {
                let prev = table[&(i, j - 1)].mul(v);
                table.insert((i, j), prev);
            }
        }
        Monomials { trunc, table }
    }

    pub fn get(&self, i: u32, j: u32) -> &Poly {
        &self.table[&(i, j)]
    }
}

/// Solves `A x = b` exactly; `None` unless the solution is unique.
pub fn solve_unique(mut a: Vec<Vec<Scalar>>, mut b: Vec<Scalar>) -> Option<Vec<Scalar>> {
    let n = a.first().map_or(0, Vec::len);
    let rows = a.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let Some(p) = (r..rows).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        b.swap(r, p);
        let inv = a[r][col].recip().unwrap();
        for x in a[r].iter_mut() {
            *x = &*x * &inv;
        }
        b[r] = &b[r] * &inv;
        for i in 0..rows {
            if i != r && !a[i][col].is_zero() {
                let f = a[i][col].clone();
                let pivot_row = a[r].clone();
                for (x, pv) in a[i].iter_mut().zip(&pivot_row) {
                    *x -= &(&f * pv);
                }
                let d = &f * &b[r];
                b[i] -= &d;
            }
        }
        pivot_cols.push(col);
        r += 1;
    }
    if pivot_cols.len() < n || b[r..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    let mut x = vec![Scalar::zero(); n];
    for (i, &c) in pivot_cols.iter().enumerate() {
        x[c] = b[i].clone();
    }
    Some(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Phi(usize, (u32, u32)),
    F0(usize, (u32, u32)),
}

/// Direct per-degree solve of `Φ∘F ≡ F₀∘Φ` for `Φ` tangent to the identity:
/// at each degree, every unknown coefficient is probed to assemble the
/// linear system, which is then solved by elimination. Conjugator
/// coefficients at resonant indices are zero; `F₀` is nonzero only there.
pub fn oracle_conjugator(f: &FormalMap, n: u32) -> Option<(FormalMap, FormalMap)> {
    let l = f.eigenvalues().to_vec();
    let fc: Vec<Poly> = f.truncated(n).components().iter().map(Poly::from_series).collect();
    let mut phi = [Poly::zero(n), Poly::zero(n)];
    let mut f0 = [Poly::zero(n), Poly::zero(n)];
    for k in 0..2 {
        phi[k].add(if k == 0 { (1, 0) } else { (0, 1) }, &s(1));
        f0[k].add(if k == 0 { (1, 0) } else { (0, 1) }, &l[k]);
    }
    let f_monomials = Monomials::new(&fc[0], &fc[1]);
    for d in 2..=n {
        let mut slots = Vec::new();
        for i in 0..=d {
            let e = (i, d - i);
            let la = l[0].powi(i64::from(e.0)) * l[1].powi(i64::from(e.1));
            for (k, lk) in l.iter().enumerate() {
                slots.push(if *lk == la { Slot::F0(k, e) } else { Slot::Phi(k, e) });
            }
        }
        let residual = |phi: &[Poly; 2], f0: &[Poly; 2]| -> Vec<Scalar> {
            let p = [phi[0].truncated(d), phi[1].truncated(d)];
            let mut out = Vec::new();
            for k in 0..2 {
                let mut lhs = Poly::zero(d);
                for (&(i, j), c) in &p[k].c {
                    for (&e, w) in f_monomials.get(i, j).c.iter().filter(|(e, _)| e.0 + e.1 == d) {
                        lhs.add(e, &(c * w));
                    }
                }
                let mut rhs = Poly::zero(d);
                for (&(i, j), c) in &f0[k].c {
                    let mono = (0..i).fold(Poly::one(d), |m, _| m.mul(&p[0]));
                    let mono = (0..j).fold(mono, |m, _| m.mul(&p[1]));
                    for (&e, w) in &mono.c {
                        rhs.add(e, &(c * w));
                    }
                }
                for i in 0..=d {
                    out.push(lhs.get((i, d - i)) - rhs.get((i, d - i)));
                }
            }
            out
        };
        let base = residual(&phi, &f0);
        let mut columns = Vec::new();
        for slot in &slots {
            let (mut p, mut g) = (phi.clone(), f0.clone());
            match *slot {
                Slot::Phi(k, e) => p[k].add(e, &s(1)),
                Slot::F0(k, e) => g[k].add(e, &s(1)),
            }
            let r = residual(&p, &g);
            columns.push(r.iter().zip(&base).map(|(x, y)| x - y).collect::<Vec<_>>());
        }
        let a: Vec<Vec<Scalar>> = (0..base.len())
            .map(|row| columns.iter().map(|c| c[row].clone()).collect())
            .collect();
        let b: Vec<Scalar> = base.iter().map(|x| -x).collect();
        let x = solve_unique(a, b)?;
        for (slot, v) in slots.iter().zip(x) {
            match *slot {
                Slot::Phi(k, e) => phi[k].add(e, &v),
                Slot::F0(k, e) => f0[k].add(e, &v),
            }
        }
    }
    let to_map = |p: &[Poly; 2]| {
        let comps = p
            .iter()
            .map(|c| {
                Series::from_terms(2, n, c.c.iter().map(|(&(i, j), v)| (MultiIndex::new(i, j), v.clone()))).unwrap()
            })
            .collect();
        FormalMap::from_components(comps).unwrap()
    };
    Some((to_map(&phi), to_map(&f0)))
}
