//! Cellular sheaves of rational vector spaces and bounded complexes thereof.
//!
//! A sheaf assigns a stalk dimension to every cell of its carrier and a
//! restriction matrix to every covering pair of the carrier subposet; maps
//! between comparable cells are composites along saturated chains, which
//! functoriality makes path-independent.

use crate::linalg::{cokernel, rref, Rat, RatMatrix};
use crate::poset::{Selection, StratifiedPoset};
use crate::sparse::{homology_dims, SparseComplex, SparseMat};
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SheafError {
    #[error("carriers do not match")]
    BaseMismatch,
    #[error("restriction maps are not functorial at cells `{0}`, `{1}`")]
    NotFunctorial(String, String),
    #[error("differential does not square to zero at cell `{0}`, degree {1}")]
    DifferentialSquare(String, i32),
    #[error("differential is not natural at cells `{0}` <= `{1}`, degree {2}")]
    NotNatural(String, String, i32),
    #[error("morphism is not a chain map at cell `{0}`, degree {1}")]
    NotChainMap(String, i32),
    #[error("selection is not within the carrier")]
    SelectionOutside,
    #[error("selection is not down-closed")]
    NotDownClosed,
    #[error("selection is not up-closed")]
    NotUpClosed,
    #[error("{0}")]
    Invalid(String),
}

/// Cells a sheaf lives on, plus the covering pairs of the induced subposet.
#[derive(Clone, Debug)]
pub struct Carrier {
    pub cells: Vec<usize>,
    pub covering: Vec<(usize, usize)>,
}

impl Carrier {
    pub fn new(p: &StratifiedPoset, mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        let covering = p.covering_pairs_within(&cells);
        Carrier { cells, covering }
    }

    pub fn full(p: &StratifiedPoset) -> Self {
        Self::new(p, (0..p.len()).collect())
    }

    pub fn from_selection(p: &StratifiedPoset, sel: &Selection) -> Self {
        Self::new(p, sel.cells.clone())
    }

    pub fn contains(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn same_cells(&self, other: &Carrier) -> bool {
        self.cells == other.cells
    }
}

/// A cellular sheaf: finite-dimensional rational stalk per carrier cell and
/// restriction matrices on covering pairs.
#[derive(Clone, Debug)]
pub struct CellSheaf {
    pub carrier: Carrier,
    pub stalk: BTreeMap<usize, usize>,
    pub res: BTreeMap<(usize, usize), RatMatrix>,
}

impl CellSheaf {
    pub fn zero(carrier: &Carrier) -> Self {
        let stalk = carrier.cells.iter().map(|&c| (c, 0)).collect();
        CellSheaf { carrier: carrier.clone(), stalk, res: BTreeMap::new() }
    }

    pub fn constant(carrier: &Carrier, dim: usize) -> Self {
        let stalk = carrier.cells.iter().map(|&c| (c, dim)).collect();
        let res = carrier
            .covering
            .iter()
            .map(|&(a, b)| ((a, b), RatMatrix::identity(dim)))
            .collect();
        CellSheaf { carrier: carrier.clone(), stalk, res }
    }

    pub fn stalk_dim(&self, c: usize) -> usize {
        self.stalk.get(&c).copied().unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.stalk.values().sum()
    }

    /// Restriction along a covering pair.
    pub fn res_covering(&self, a: usize, b: usize) -> RatMatrix {
        if let Some(m) = self.res.get(&(a, b)) {
            return m.clone();
        }
        let (da, db) = (self.stalk_dim(a), self.stalk_dim(b));
        if da == 0 || db == 0 {
            return RatMatrix::zeros(db, da);
        }
        panic!("missing restriction map on covering pair");
    }

    /// Restriction between any comparable pair, composed along a saturated
    /// chain of the carrier subposet.
    pub fn res_to(&self, p: &StratifiedPoset, a: usize, b: usize) -> RatMatrix {
        if a == b {
            return RatMatrix::identity(self.stalk_dim(a));
        }
        assert!(p.leq(a, b), "res_to on incomparable cells");
        // BFS through covering pairs staying below b
        let mut frontier = vec![(a, RatMatrix::identity(self.stalk_dim(a)))];
        let mut seen = vec![a];
        while let Some((c, m)) = frontier.pop() {
            for &(x, y) in &self.carrier.covering {
                if x != c || !p.leq(y, b) {
                    continue;
                }
                let next = self.res_covering(x, y).mul(&m);
                if y == b {
                    return next;
                }
                if !seen.contains(&y) {
                    seen.push(y);
                    frontier.push((y, next));
                }
            }
        }
        panic!("no covering chain from `{}` to `{}`", p.cells[a].id, p.cells[b].id);
    }

    /// Functoriality: all covering-chain composites between comparable cells
    /// agree. Checked on length-2 composites against each other.
    pub fn validate(&self, p: &StratifiedPoset) -> Result<(), SheafError> {
        for &(a, b) in &self.carrier.covering {
            let m = self.res_covering(a, b);
            if m.rows != self.stalk_dim(b) || m.cols != self.stalk_dim(a) {
                return Err(SheafError::Invalid(format!(
                    "restriction shape mismatch on `{}` <= `{}`",
                    p.cells[a].id, p.cells[b].id
                )));
            }
        }
        // composite consistency: for every two-step relation, all routes equal
        for &a in &self.carrier.cells {
            let ups: Vec<usize> = self
                .carrier
                .covering
                .iter()
                .filter(|&&(x, _)| x == a)
                .map(|&(_, y)| y)
                .collect();
            let mut targets: BTreeMap<usize, RatMatrix> = BTreeMap::new();
            for &m in &ups {
                for &(x, y) in &self.carrier.covering {
                    if x != m {
                        continue;
                    }
                    let comp = self.res_covering(m, y).mul(&self.res_covering(a, m));
                    if let Some(prev) = targets.get(&y) {
                        if *prev != comp {
                            return Err(SheafError::NotFunctorial(
                                p.cells[a].id.clone(),
                                p.cells[y].id.clone(),
                            ));
                        }
                    } else {
                        targets.insert(y, comp);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Bounded complex of cellular sheaves with a common carrier.
#[derive(Clone, Debug)]
pub struct SheafComplex {
    pub carrier: Carrier,
    pub lo: i32,
    pub terms: Vec<CellSheaf>,
    /// diff[t]: terms[t] -> terms[t+1], per cell; missing cells are zero maps
    pub diff: Vec<BTreeMap<usize, RatMatrix>>,
}

impl SheafComplex {
    pub fn zero(carrier: &Carrier) -> Self {
        SheafComplex { carrier: carrier.clone(), lo: 0, terms: vec![], diff: vec![] }
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.terms.len() as i32 - 1
    }

    pub fn degrees(&self) -> std::ops::RangeInclusive<i32> {
        self.lo..=self.hi()
    }

    pub fn term(&self, n: i32) -> Option<&CellSheaf> {
        if n < self.lo {
            return None;
        }
        self.terms.get((n - self.lo) as usize)
    }

    pub fn stalk_dim(&self, n: i32, c: usize) -> usize {
        self.term(n).map_or(0, |t| t.stalk_dim(c))
    }

    pub fn total_dim(&self) -> usize {
        self.terms.iter().map(|t| t.total_dim()).sum()
    }

    /// Differential at a cell, as a matrix K^n(c) -> K^{n+1}(c).
    pub fn d_at(&self, n: i32, c: usize) -> RatMatrix {
        let (rows, cols) = (self.stalk_dim(n + 1, c), self.stalk_dim(n, c));
        if n >= self.lo {
            if let Some(dd) = self.diff.get((n - self.lo) as usize) {
                if let Some(m) = dd.get(&c) {
                    return m.clone();
                }
            }
        }
        RatMatrix::zeros(rows, cols)
    }

    pub fn set_d(&mut self, n: i32, c: usize, m: RatMatrix) {
        let idx = (n - self.lo) as usize;
        while self.diff.len() <= idx {
            self.diff.push(BTreeMap::new());
        }
        if !m.is_zero() {
            self.diff[idx].insert(c, m);
        }
    }

    /// Restriction of the degree-n term along any comparable pair.
    pub fn res_to(&self, p: &StratifiedPoset, n: i32, a: usize, b: usize) -> RatMatrix {
        match self.term(n) {
            Some(t) => t.res_to(p, a, b),
            None => RatMatrix::zeros(0, 0),
        }
    }

    /// Drops zero sheaves at both ends of the degree range.
    pub fn normalize(mut self) -> Self {
        while !self.terms.is_empty() && self.terms[0].total_dim() == 0 {
            self.terms.remove(0);
            if !self.diff.is_empty() {
                self.diff.remove(0);
            }
            self.lo += 1;
        }
        while self.terms.last().map_or(false, |t| t.total_dim() == 0) {
            self.terms.pop();
            self.diff.truncate(self.terms.len().saturating_sub(1));
        }
        self.diff.truncate(self.terms.len().saturating_sub(1));
        if self.terms.is_empty() {
            self.lo = 0;
        }
        self
    }

    pub fn validate(&self, p: &StratifiedPoset) -> Result<(), SheafError> {
        for t in &self.terms {
            if !t.carrier.same_cells(&self.carrier) {
                return Err(SheafError::BaseMismatch);
            }
            t.validate(p)?;
        }
        for n in self.degrees() {
            for &c in &self.carrier.cells {
                // d . d = 0
                let d1 = self.d_at(n, c);
                let d2 = self.d_at(n + 1, c);
                if !d2.mul(&d1).is_zero() {
                    return Err(SheafError::DifferentialSquare(p.cells[c].id.clone(), n));
                }
            }
            // naturality of d on covering pairs
            for &(a, b) in &self.carrier.covering {
                let lhs = self.d_at(n, b).mul(&self.res_to(p, n, a, b));
                let rhs = self.res_to(p, n + 1, a, b).mul(&self.d_at(n, a));
                if lhs != rhs {
                    return Err(SheafError::NotNatural(
                        p.cells[a].id.clone(),
                        p.cells[b].id.clone(),
                        n,
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Degreewise collection of components of a map of complexes; cells or
/// degrees not present are zero blocks.
#[derive(Clone, Debug, Default)]
pub struct Morphism {
    pub comp: BTreeMap<(i32, usize), RatMatrix>,
}

impl Morphism {
    pub fn component(&self, src: &SheafComplex, tgt: &SheafComplex, n: i32, c: usize) -> RatMatrix {
        match self.comp.get(&(n, c)) {
            Some(m) => m.clone(),
            None => RatMatrix::zeros(tgt.stalk_dim(n, c), src.stalk_dim(n, c)),
        }
    }

    pub fn set(&mut self, n: i32, c: usize, m: RatMatrix) {
        if !m.is_zero() {
            self.comp.insert((n, c), m);
        }
    }

    pub fn identity(k: &SheafComplex) -> Morphism {
        let mut f = Morphism::default();
        for n in k.degrees() {
            for &c in &k.carrier.cells {
                let d = k.stalk_dim(n, c);
                if d > 0 {
                    f.set(n, c, RatMatrix::identity(d));
                }
            }
        }
        f
    }

    /// g after f.
    pub fn compose(
        f: &Morphism,
        g: &Morphism,
        src: &SheafComplex,
        mid: &SheafComplex,
        tgt: &SheafComplex,
    ) -> Morphism {
        let mut out = Morphism::default();
        for n in src.degrees() {
            for &c in &src.carrier.cells {
                let m = g.component(mid, tgt, n, c).mul(&f.component(src, mid, n, c));
                out.set(n, c, m);
            }
        }
        out
    }

    /// Chain map law plus naturality of every component.
    pub fn validate(
        &self,
        p: &StratifiedPoset,
        src: &SheafComplex,
        tgt: &SheafComplex,
    ) -> Result<(), SheafError> {
        if !src.carrier.same_cells(&tgt.carrier) {
            return Err(SheafError::BaseMismatch);
        }
        let lo = src.lo.min(tgt.lo);
        let hi = src.hi().max(tgt.hi());
        for n in lo..=hi {
            for &c in &src.carrier.cells {
                let lhs = tgt.d_at(n, c).mul(&self.component(src, tgt, n, c));
                let rhs = self.component(src, tgt, n + 1, c).mul(&src.d_at(n, c));
                if lhs != rhs {
                    return Err(SheafError::NotChainMap(p.cells[c].id.clone(), n));
                }
            }
            for &(a, b) in &src.carrier.covering {
                let lhs = self.component(src, tgt, n, b).mul(&src.res_to(p, n, a, b));
                let rhs = tgt.res_to(p, n, a, b).mul(&self.component(src, tgt, n, a));
                if lhs != rhs {
                    return Err(SheafError::NotNatural(
                        p.cells[a].id.clone(),
                        p.cells[b].id.clone(),
                        n,
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Rank-one constant sheaf concentrated in one degree.
pub fn constant_complex(p: &StratifiedPoset, cells: Vec<usize>, degree: i32) -> SheafComplex {
    let carrier = Carrier::new(p, cells);
    let term = CellSheaf::constant(&carrier, 1);
    SheafComplex { carrier, lo: degree, terms: vec![term], diff: vec![] }
}

/// Shift: (K[s])^n = K^{n+s}, differential scaled by (-1)^s.
pub fn shift(k: &SheafComplex, s: i32) -> SheafComplex {
    let mut out = k.clone();
    out.lo = k.lo - s;
    if s % 2 != 0 {
        for dd in &mut out.diff {
            for m in dd.values_mut() {
                *m = m.neg();
            }
        }
    }
    out
}

pub fn direct_sum(p: &StratifiedPoset, a: &SheafComplex, b: &SheafComplex) -> SheafComplex {
    assert!(a.carrier.same_cells(&b.carrier), "direct_sum carrier mismatch");
    let lo = a.lo.min(b.lo).min(0).max(a.lo.min(b.lo));
    let lo = if a.terms.is_empty() { b.lo } else if b.terms.is_empty() { a.lo } else { lo };
    let hi = a.hi().max(b.hi());
    let carrier = a.carrier.clone();
    let mut terms = Vec::new();
    let mut diff = Vec::new();
    for n in lo..=hi {
        let mut stalk = BTreeMap::new();
        let mut res = BTreeMap::new();
        for &c in &carrier.cells {
            stalk.insert(c, a.stalk_dim(n, c) + b.stalk_dim(n, c));
        }
        for &(x, y) in &carrier.covering {
            res.insert((x, y), a.res_to(p, n, x, y).direct_sum(&b.res_to(p, n, x, y)));
        }
        terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
    }
    for n in lo..hi {
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let m = a.d_at(n, c).direct_sum(&b.d_at(n, c));
            if !m.is_zero() {
                dd.insert(c, m);
            }
        }
        diff.push(dd);
    }
    SheafComplex { carrier, lo, terms, diff }.normalize()
}

/// Per-cell cohomology data: representatives and class projections that make
/// the induced restriction maps computable.
pub struct CohomologyData {
    pub sheaf: CellSheaf,
    /// cell -> (h x N) class projection, defined on cycles
    pub proj: BTreeMap<usize, RatMatrix>,
    /// cell -> (N x h) cycle representatives
    pub lift: BTreeMap<usize, RatMatrix>,
}

/// Pointwise ker/im quotient in degree i, with induced restrictions.
pub fn cohomology_sheaf_data(p: &StratifiedPoset, k: &SheafComplex, i: i32) -> CohomologyData {
    let carrier = k.carrier.clone();
    let mut stalk = BTreeMap::new();
    let mut proj = BTreeMap::new();
    let mut lift = BTreeMap::new();
    for &c in &carrier.cells {
        let n_amb = k.stalk_dim(i, c);
        let d_out = k.d_at(i, c);
        let d_in = k.d_at(i - 1, c);
        // reduced column echelon basis of ker(d_out)
        let ker = crate::linalg::kernel_basis(&d_out);
        let ech = rref(&ker.transpose());
        let e = ech.mat.transpose();
        let e = e.submatrix_cols(&(0..ech.pivots.len()).collect::<Vec<_>>());
        let pivot_rows = ech.pivots.clone();
        // row-selection left inverse of e
        let mut g = RatMatrix::zeros(e.cols, n_amb);
        for (bi, &pr) in pivot_rows.iter().enumerate() {
            g.set(bi, pr, Rat::one());
        }
        // boundaries in kernel coordinates
        let bd_coords = g.mul(&d_in);
        let ck = cokernel(&bd_coords);
        stalk.insert(c, ck.dim);
        proj.insert(c, ck.proj.mul(&g));
        lift.insert(c, e.mul(&ck.section));
    }
    let mut res = BTreeMap::new();
    for &(a, b) in &carrier.covering {
        let m = proj[&b].mul(&k.res_to(p, i, a, b)).mul(&lift[&a]);
        res.insert((a, b), m);
    }
    CohomologyData { sheaf: CellSheaf { carrier, stalk, res }, proj, lift }
}

pub fn cohomology_sheaf(p: &StratifiedPoset, k: &SheafComplex, i: i32) -> CellSheaf {
    cohomology_sheaf_data(p, k, i).sheaf
}

/// Degrees where some cohomology sheaf is nonzero.
pub fn cohomology_support(p: &StratifiedPoset, k: &SheafComplex) -> Vec<i32> {
    k.degrees()
        .filter(|&n| cohomology_sheaf(p, k, n).total_dim() > 0)
        .collect()
}

/// Map induced by a morphism on degree-i cohomology sheaves, per cell.
pub fn cohomology_sheaf_map(
    p: &StratifiedPoset,
    src: &SheafComplex,
    tgt: &SheafComplex,
    f: &Morphism,
    i: i32,
) -> (CohomologyData, CohomologyData, BTreeMap<usize, RatMatrix>) {
    let hs = cohomology_sheaf_data(p, src, i);
    let ht = cohomology_sheaf_data(p, tgt, i);
    let mut maps = BTreeMap::new();
    for &c in &src.carrier.cells {
        let m = ht.proj[&c].mul(&f.component(src, tgt, i, c)).mul(&hs.lift[&c]);
        maps.insert(c, m);
    }
    (hs, ht, maps)
}

pub enum TruncSide {
    Le,
    Gt,
}

/// Smart truncation. `Le` returns (tau_{<=n} K, inclusion into K); `Gt`
/// returns (tau_{>n} K, projection from K).
pub fn truncate(
    p: &StratifiedPoset,
    k: &SheafComplex,
    n: i32,
    side: TruncSide,
) -> (SheafComplex, Morphism) {
    match side {
        TruncSide::Le => truncate_le(p, k, n),
        TruncSide::Gt => truncate_gt(p, k, n),
    }
}

fn truncate_le(p: &StratifiedPoset, k: &SheafComplex, n: i32) -> (SheafComplex, Morphism) {
    let carrier = k.carrier.clone();
    if n < k.lo {
        return (SheafComplex::zero(&carrier), Morphism::default());
    }
    if n >= k.hi() {
        return (k.clone(), Morphism::identity(k));
    }
    let mut terms = Vec::new();
    let mut diff: Vec<BTreeMap<usize, RatMatrix>> = Vec::new();
    let mut incl = Morphism::default();
    // kernel echelon per cell at degree n
    let mut ker_basis: BTreeMap<usize, RatMatrix> = BTreeMap::new();
    let mut ker_ginv: BTreeMap<usize, RatMatrix> = BTreeMap::new();
    for &c in &carrier.cells {
        let ker = crate::linalg::kernel_basis(&k.d_at(n, c));
        let ech = rref(&ker.transpose());
        let e = ech.mat.transpose().submatrix_cols(&(0..ech.pivots.len()).collect::<Vec<_>>());
        let mut g = RatMatrix::zeros(e.cols, k.stalk_dim(n, c));
        for (bi, &pr) in ech.pivots.iter().enumerate() {
            g.set(bi, pr, Rat::one());
        }
        ker_basis.insert(c, e);
        ker_ginv.insert(c, g);
    }
    for m in k.lo..=n {
        if m < n {
            terms.push(k.term(m).unwrap().clone());
        } else {
            let mut stalk = BTreeMap::new();
            let mut res = BTreeMap::new();
            for &c in &carrier.cells {
                stalk.insert(c, ker_basis[&c].cols);
            }
            for &(a, b) in &carrier.covering {
                res.insert((a, b), ker_ginv[&b].mul(&k.res_to(p, n, a, b)).mul(&ker_basis[&a]));
            }
            terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
        }
    }
    for m in k.lo..n {
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let d = if m + 1 < n {
                k.d_at(m, c)
            } else {
                ker_ginv[&c].mul(&k.d_at(m, c))
            };
            if !d.is_zero() {
                dd.insert(c, d);
            }
        }
        diff.push(dd);
    }
    for m in k.lo..=n {
        for &c in &carrier.cells {
            if m < n {
                let d = k.stalk_dim(m, c);
                if d > 0 {
                    incl.set(m, c, RatMatrix::identity(d));
                }
            } else {
                incl.set(m, c, ker_basis[&c].clone());
            }
        }
    }
    let t = SheafComplex { carrier, lo: k.lo, terms, diff }.normalize();
    (t, incl)
}

fn truncate_gt(p: &StratifiedPoset, k: &SheafComplex, n: i32) -> (SheafComplex, Morphism) {
    let carrier = k.carrier.clone();
    if n >= k.hi() {
        return (SheafComplex::zero(&carrier), Morphism::default());
    }
    if n < k.lo {
        return (k.clone(), Morphism::identity(k));
    }
    // cokernel of d^n per cell at degree n+1
    let mut ck_proj: BTreeMap<usize, RatMatrix> = BTreeMap::new();
    let mut ck_sect: BTreeMap<usize, RatMatrix> = BTreeMap::new();
    for &c in &carrier.cells {
        let ck = cokernel(&k.d_at(n, c));
        ck_proj.insert(c, ck.proj);
        ck_sect.insert(c, ck.section);
    }
    let mut terms = Vec::new();
    let mut diff: Vec<BTreeMap<usize, RatMatrix>> = Vec::new();
    let mut projm = Morphism::default();
    for m in (n + 1)..=k.hi() {
        if m > n + 1 {
            terms.push(k.term(m).unwrap().clone());
        } else {
            let mut stalk = BTreeMap::new();
            let mut res = BTreeMap::new();
            for &c in &carrier.cells {
                stalk.insert(c, ck_proj[&c].rows);
            }
            for &(a, b) in &carrier.covering {
                res.insert(
                    (a, b),
                    ck_proj[&b].mul(&k.res_to(p, n + 1, a, b)).mul(&ck_sect[&a]),
                );
            }
            terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
        }
    }
    for m in (n + 1)..k.hi() {
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let d = if m > n + 1 {
                k.d_at(m, c)
            } else {
                k.d_at(n + 1, c).mul(&ck_sect[&c])
            };
            if !d.is_zero() {
                dd.insert(c, d);
            }
        }
        diff.push(dd);
    }
    for m in (n + 1)..=k.hi() {
        for &c in &carrier.cells {
            if m > n + 1 {
                let d = k.stalk_dim(m, c);
                if d > 0 {
                    projm.set(m, c, RatMatrix::identity(d));
                }
            } else {
                projm.set(m, c, ck_proj[&c].clone());
            }
        }
    }
    let t = SheafComplex { carrier, lo: n + 1, terms, diff }.normalize();
    (t, projm)
}

/// Standard mapping cone of a chain map, with the two canonical maps of its
/// triangle: `incl`: B -> cone(f), `proj`: cone(f) -> A[1].
pub struct ConeResult {
    pub cone: SheafComplex,
    pub incl: Morphism,
    pub proj: Morphism,
}

pub fn cone(
    p: &StratifiedPoset,
    f: &Morphism,
    a: &SheafComplex,
    b: &SheafComplex,
) -> Result<ConeResult, SheafError> {
    if !a.carrier.same_cells(&b.carrier) {
        return Err(SheafError::BaseMismatch);
    }
    let carrier = a.carrier.clone();
    let lo = (a.lo - 1).min(b.lo);
    let hi = (a.hi() - 1).max(b.hi());
    let mut terms = Vec::new();
    let mut diff: Vec<BTreeMap<usize, RatMatrix>> = Vec::new();
    for n in lo..=hi {
        let mut stalk = BTreeMap::new();
        let mut res = BTreeMap::new();
        for &c in &carrier.cells {
            stalk.insert(c, a.stalk_dim(n + 1, c) + b.stalk_dim(n, c));
        }
        for &(x, y) in &carrier.covering {
            res.insert((x, y), a.res_to(p, n + 1, x, y).direct_sum(&b.res_to(p, n, x, y)));
        }
        terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
    }
    for n in lo..hi {
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let (a1, b0) = (a.stalk_dim(n + 1, c), b.stalk_dim(n, c));
            let (a2, b1) = (a.stalk_dim(n + 2, c), b.stalk_dim(n + 1, c));
            let mut m = RatMatrix::zeros(a2 + b1, a1 + b0);
            let da = a.d_at(n + 1, c);
            for i in 0..a2 {
                for j in 0..a1 {
                    if !da.get(i, j).is_zero() {
                        m.set(i, j, -da.get(i, j).clone());
                    }
                }
            }
            let fc = f.component(a, b, n + 1, c);
            for i in 0..b1 {
                for j in 0..a1 {
                    if !fc.get(i, j).is_zero() {
                        m.set(a2 + i, j, fc.get(i, j).clone());
                    }
                }
            }
            let db = b.d_at(n, c);
            for i in 0..b1 {
                for j in 0..b0 {
                    if !db.get(i, j).is_zero() {
                        m.set(a2 + i, a1 + j, db.get(i, j).clone());
                    }
                }
            }
            if !m.is_zero() {
                dd.insert(c, m);
            }
        }
        diff.push(dd);
    }
    let cone = SheafComplex { carrier: carrier.clone(), lo, terms, diff };
    let mut incl = Morphism::default();
    let mut proj = Morphism::default();
    for n in lo..=hi {
        for &c in &carrier.cells {
            let (a1, b0) = (a.stalk_dim(n + 1, c), b.stalk_dim(n, c));
            if b0 > 0 {
                let mut m = RatMatrix::zeros(a1 + b0, b0);
                for i in 0..b0 {
                    m.set(a1 + i, i, Rat::one());
                }
                incl.set(n, c, m);
            }
            if a1 > 0 {
                let mut m = RatMatrix::zeros(a1, a1 + b0);
                for i in 0..a1 {
                    m.set(i, i, Rat::one());
                }
                proj.set(n, c, m);
            }
        }
    }
    Ok(ConeResult { cone: cone.normalize(), incl, proj })
}

/// Degreewise tensor product with the usual sign twist on the second factor.
pub fn tensor(p: &StratifiedPoset, k: &SheafComplex, l: &SheafComplex) -> Result<SheafComplex, SheafError> {
    if !k.carrier.same_cells(&l.carrier) {
        return Err(SheafError::BaseMismatch);
    }
    if k.terms.is_empty() || l.terms.is_empty() {
        return Ok(SheafComplex::zero(&k.carrier));
    }
    let carrier = k.carrier.clone();
    let lo = k.lo + l.lo;
    let hi = k.hi() + l.hi();
    // fixed block order within degree n: (i, j = n - i) with i ascending
    let blocks = |n: i32| -> Vec<(i32, i32)> {
        (k.lo..=k.hi())
            .filter_map(|i| {
                let j = n - i;
                if j >= l.lo && j <= l.hi() { Some((i, j)) } else { None }
            })
            .collect()
    };
    let mut terms = Vec::new();
    let mut diff: Vec<BTreeMap<usize, RatMatrix>> = Vec::new();
    for n in lo..=hi {
        let bs = blocks(n);
        let mut stalk = BTreeMap::new();
        let mut res = BTreeMap::new();
        for &c in &carrier.cells {
            stalk.insert(
                c,
                bs.iter().map(|&(i, j)| k.stalk_dim(i, c) * l.stalk_dim(j, c)).sum(),
            );
        }
        for &(x, y) in &carrier.covering {
            let mut m = RatMatrix::zeros(0, 0);
            for &(i, j) in &bs {
                let blk = k.res_to(p, i, x, y).kron(&l.res_to(p, j, x, y));
                m = m.direct_sum(&blk);
            }
            res.insert((x, y), m);
        }
        terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
    }
    for n in lo..hi {
        let src_blocks = blocks(n);
        let tgt_blocks = blocks(n + 1);
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let src_dims: Vec<usize> =
                src_blocks.iter().map(|&(i, j)| k.stalk_dim(i, c) * l.stalk_dim(j, c)).collect();
            let tgt_dims: Vec<usize> =
                tgt_blocks.iter().map(|&(i, j)| k.stalk_dim(i, c) * l.stalk_dim(j, c)).collect();
            let src_off: Vec<usize> = src_dims
                .iter()
                .scan(0, |acc, &d| {
                    let o = *acc;
                    *acc += d;
                    Some(o)
                })
                .collect();
            let tgt_off: Vec<usize> = tgt_dims
                .iter()
                .scan(0, |acc, &d| {
                    let o = *acc;
                    *acc += d;
                    Some(o)
                })
                .collect();
            let mut m =
                RatMatrix::zeros(tgt_dims.iter().sum::<usize>(), src_dims.iter().sum::<usize>());
            let mut write_block = |toff: usize, soff: usize, blk: &RatMatrix| {
                for r in 0..blk.rows {
                    for cc in 0..blk.cols {
                        if !blk.get(r, cc).is_zero() {
                            m.set(toff + r, soff + cc, blk.get(r, cc).clone());
                        }
                    }
                }
            };
            for (sb, &(i, j)) in src_blocks.iter().enumerate() {
                // d_K tensor id
                if let Some(tb) = tgt_blocks.iter().position(|&(ti, tj)| ti == i + 1 && tj == j) {
                    let blk = k.d_at(i, c).kron(&RatMatrix::identity(l.stalk_dim(j, c)));
                    write_block(tgt_off[tb], src_off[sb], &blk);
                }
                // (-1)^i id tensor d_L
                if let Some(tb) = tgt_blocks.iter().position(|&(ti, tj)| ti == i && tj == j + 1) {
                    let sign = if i % 2 == 0 { Rat::one() } else { -Rat::one() };
                    let blk =
                        RatMatrix::identity(k.stalk_dim(i, c)).kron(&l.d_at(j, c)).scale(&sign);
                    write_block(tgt_off[tb], src_off[sb], &blk);
                }
            }
            if !m.is_zero() {
                dd.insert(c, m);
            }
        }
        diff.push(dd);
    }
    Ok(SheafComplex { carrier, lo, terms, diff }.normalize())
}

/// True when all stalks have rank one, all restrictions are invertible, and
/// the dimension of global sections over the selection equals the number of
/// connected components (no monodromy).
pub fn is_constant_rank_one(p: &StratifiedPoset, f: &CellSheaf, cells: &[usize]) -> bool {
    for &c in cells {
        if f.stalk_dim(c) != 1 {
            return false;
        }
    }
    for &(a, b) in &f.carrier.covering {
        if cells.binary_search(&a).is_ok() && cells.binary_search(&b).is_ok() {
            let m = f.res_covering(a, b);
            if m.rows != 1 || m.cols != 1 || m.get(0, 0).is_zero() {
                return false;
            }
        }
    }
    let comps = p.components_within(cells);
    global_sections_dim(p, f, cells) == comps.len()
}

/// Dimension of the inverse limit of `f` over the induced subposet.
pub fn global_sections_dim(p: &StratifiedPoset, f: &CellSheaf, cells: &[usize]) -> usize {
    let offsets: BTreeMap<usize, usize> = {
        let mut acc = 0;
        let mut m = BTreeMap::new();
        for &c in cells {
            m.insert(c, acc);
            acc += f.stalk_dim(c);
        }
        m
    };
    let total: usize = cells.iter().map(|&c| f.stalk_dim(c)).sum();
    let pairs = p.covering_pairs_within(cells);
    let rows_total: usize = pairs.iter().map(|&(_, b)| f.stalk_dim(b)).sum();
    let mut m = SparseMat::new(rows_total, total);
    let mut row_off = 0;
    for &(a, b) in &pairs {
        let r = f.res_to(p, a, b);
        for i in 0..r.rows {
            for j in 0..r.cols {
                if !r.get(i, j).is_zero() {
                    m.push_entry(offsets[&a] + j, row_off + i, r.get(i, j).clone());
                }
            }
            m.push_entry(offsets[&b] + i, row_off + i, -Rat::one());
        }
        row_off += r.rows;
    }
    total - crate::sparse::sparse_rank(&m)
}

/// Which model computes derived sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionModel {
    /// Cellular cochain complex graded by cell dimension; valid on carriers
    /// that are closed subcomplexes.
    CellularClosed,
    /// Cell-chain (derived inverse limit) complex; valid on any carrier.
    Chains,
}

/// Index layout for the cellular double complex of a sheaf complex.
pub struct CellularLayout {
    pub p_of_cell: BTreeMap<usize, i32>,
    /// (p, q) -> per-cell offsets
    pub offsets: BTreeMap<(i32, i32), BTreeMap<usize, usize>>,
    pub block_dims: BTreeMap<(i32, i32), usize>,
}

/// Builds the double complex D^{p,q} = sum over p-cells of K^q, with the
/// cellular coboundary in the p direction. Used by both the hypercohomology
/// fast path and the spectral sequence.
pub fn cellular_double_complex(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
) -> (CellularLayout, DoubleComplex) {
    let q_lo = k.lo;
    let q_hi = k.hi().max(k.lo);
    let p_max = cells.iter().map(|&c| p.cells[c].dim).max().unwrap_or(0);
    let mut layout = CellularLayout {
        p_of_cell: cells.iter().map(|&c| (c, p.cells[c].dim)).collect(),
        offsets: BTreeMap::new(),
        block_dims: BTreeMap::new(),
    };
    for pp in 0..=p_max {
        for q in q_lo..=q_hi {
            let mut off = BTreeMap::new();
            let mut acc = 0usize;
            for &c in cells {
                if p.cells[c].dim == pp {
                    off.insert(c, acc);
                    acc += k.stalk_dim(q, c);
                }
            }
            layout.offsets.insert((pp, q), off);
            layout.block_dims.insert((pp, q), acc);
        }
    }
    let mut dc = DoubleComplex::new(0, p_max, q_lo, q_hi, &layout.block_dims);
    // horizontal: signed cellular coboundary through restriction maps
    for &(a, b) in &p.covering_pairs_within(cells).iter().copied().collect::<Vec<_>>() {
        // only dimension-adjacent pairs contribute to the coboundary
        if p.cells[b].dim != p.cells[a].dim + 1 {
            continue;
        }
        let sign = p
            .faces(b)
            .iter()
            .find(|&&(f, _)| f == a)
            .map(|&(_, s)| s)
            .unwrap_or(0);
        if sign == 0 {
            continue;
        }
        let pp = p.cells[a].dim;
        for q in q_lo..=q_hi {
            let m = k.res_to(p, q, a, b);
            let soff = layout.offsets[&(pp, q)][&a];
            let toff = layout.offsets[&(pp + 1, q)][&b];
            let sgn = if sign > 0 { Rat::one() } else { -Rat::one() };
            dc.add_horiz_block(pp, q, soff, toff, &m.scale(&sgn));
        }
    }
    // vertical: internal differential
    for &c in cells {
        let pp = p.cells[c].dim;
        for q in q_lo..q_hi {
            let m = k.d_at(q, c);
            let soff = layout.offsets[&(pp, q)][&c];
            let toff = layout.offsets[&(pp, q + 1)][&c];
            dc.add_vert_block(pp, q, soff, toff, &m);
        }
    }
    (layout, dc)
}

/// Double complex with horizontal differential (p+1) and vertical (q+1),
/// commuting before the sign twist. The associated total complex uses
/// d = horiz + (-1)^p vert.
pub struct DoubleComplex {
    pub p_lo: i32,
    pub p_hi: i32,
    pub q_lo: i32,
    pub q_hi: i32,
    pub dims: BTreeMap<(i32, i32), usize>,
    pub horiz: BTreeMap<(i32, i32), SparseMat>,
    pub vert: BTreeMap<(i32, i32), SparseMat>,
}

impl DoubleComplex {
    pub fn new(
        p_lo: i32,
        p_hi: i32,
        q_lo: i32,
        q_hi: i32,
        dims: &BTreeMap<(i32, i32), usize>,
    ) -> Self {
        let mut full_dims = BTreeMap::new();
        let mut horiz = BTreeMap::new();
        let mut vert = BTreeMap::new();
        for pp in p_lo..=p_hi {
            for q in q_lo..=q_hi {
                let d = dims.get(&(pp, q)).copied().unwrap_or(0);
                full_dims.insert((pp, q), d);
            }
        }
        for pp in p_lo..=p_hi {
            for q in q_lo..=q_hi {
                let d = full_dims[&(pp, q)];
                let dh = full_dims.get(&(pp + 1, q)).copied().unwrap_or(0);
                let dv = full_dims.get(&(pp, q + 1)).copied().unwrap_or(0);
                horiz.insert((pp, q), SparseMat::new(dh, d));
                vert.insert((pp, q), SparseMat::new(dv, d));
            }
        }
        DoubleComplex { p_lo, p_hi, q_lo, q_hi, dims: full_dims, horiz, vert }
    }

    pub fn add_horiz_block(&mut self, pp: i32, q: i32, soff: usize, toff: usize, m: &RatMatrix) {
        let blk = self.horiz.get_mut(&(pp, q)).unwrap();
        for i in 0..m.rows {
            for j in 0..m.cols {
                if !m.get(i, j).is_zero() {
                    blk.push_entry(soff + j, toff + i, m.get(i, j).clone());
                }
            }
        }
    }

    pub fn add_vert_block(&mut self, pp: i32, q: i32, soff: usize, toff: usize, m: &RatMatrix) {
        let blk = self.vert.get_mut(&(pp, q)).unwrap();
        for i in 0..m.rows {
            for j in 0..m.cols {
                if !m.get(i, j).is_zero() {
                    blk.push_entry(soff + j, toff + i, m.get(i, j).clone());
                }
            }
        }
    }

    pub fn dim(&self, pp: i32, q: i32) -> usize {
        self.dims.get(&(pp, q)).copied().unwrap_or(0)
    }

    /// Total complex, degrees p+q.
    pub fn total(&self) -> SparseComplex {
        let n_lo = self.p_lo + self.q_lo;
        let n_hi = self.p_hi + self.q_hi;
        let blocks_of = |n: i32| -> Vec<(i32, i32)> {
            (self.p_lo..=self.p_hi)
                .filter_map(|pp| {
                    let q = n - pp;
                    if q >= self.q_lo && q <= self.q_hi { Some((pp, q)) } else { None }
                })
                .collect()
        };
        let mut dims = Vec::new();
        for n in n_lo..=n_hi {
            dims.push(blocks_of(n).iter().map(|&b| self.dims[&b]).sum::<usize>());
        }
        let offset_in = |n: i32, target: (i32, i32)| -> usize {
            let mut acc = 0;
            for b in blocks_of(n) {
                if b == target {
                    return acc;
                }
                acc += self.dims[&b];
            }
            unreachable!("block not in total degree")
        };
        let mut d = Vec::new();
        for n in n_lo..n_hi {
            let rows = dims[(n + 1 - n_lo) as usize];
            let cols = dims[(n - n_lo) as usize];
            let mut m = SparseMat::new(rows, cols);
            for (pp, q) in blocks_of(n) {
                let soff = offset_in(n, (pp, q));
                // horizontal
                if self.dim(pp + 1, q) > 0 {
                    let toff = offset_in(n + 1, (pp + 1, q));
                    let blk = &self.horiz[&(pp, q)];
                    for (j, col) in blk.cols.iter().enumerate() {
                        for (r, v) in col {
                            m.push_entry(soff + j, toff + r, v.clone());
                        }
                    }
                }
                // vertical with (-1)^p
                if self.dim(pp, q + 1) > 0 {
                    let toff = offset_in(n + 1, (pp, q + 1));
                    let blk = &self.vert[&(pp, q)];
                    let neg = pp.rem_euclid(2) == 1;
                    for (j, col) in blk.cols.iter().enumerate() {
                        for (r, v) in col {
                            let val = if neg { -v.clone() } else { v.clone() };
                            m.push_entry(soff + j, toff + r, val);
                        }
                    }
                }
            }
            d.push(m);
        }
        SparseComplex { lo: n_lo, dims, d }
    }
}

/// Layout for the cell-chain double complex over an arbitrary carrier.
pub struct ChainsLayout {
    /// chains grouped by length (index = number of cells - 1)
    pub chains: Vec<Vec<Vec<usize>>>,
    pub offsets: BTreeMap<(i32, i32), Vec<usize>>,
}

/// D^{k,q} = sum over strictly increasing (k+1)-cell chains of K^q at the
/// chain's top cell; the k-direction differential drops cells, restricting
/// along the last face when the top is dropped.
pub fn chains_double_complex(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
) -> (ChainsLayout, DoubleComplex) {
    let chains = p.chains_within(cells);
    let q_lo = k.lo;
    let q_hi = k.hi().max(k.lo);
    let kmax = chains.len() as i32 - 1;
    let mut dims: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut offsets: BTreeMap<(i32, i32), Vec<usize>> = BTreeMap::new();
    for (kk, level) in chains.iter().enumerate() {
        for q in q_lo..=q_hi {
            let mut off = Vec::with_capacity(level.len());
            let mut acc = 0usize;
            for ch in level {
                off.push(acc);
                acc += k.stalk_dim(q, *ch.last().unwrap());
            }
            dims.insert((kk as i32, q), acc);
            offsets.insert((kk as i32, q), off);
        }
    }
    let mut dc = DoubleComplex::new(0, kmax.max(0), q_lo, q_hi, &dims);
    // index chains at each level for fast lookup
    let level_index: Vec<BTreeMap<&[usize], usize>> = chains
        .iter()
        .map(|lvl| lvl.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect())
        .collect();
    for (kk, level) in chains.iter().enumerate() {
        if kk + 1 >= chains.len() {
            break;
        }
        // differential from level kk to kk+1 is assembled from the faces of
        // each (kk+2)-chain
        for (ti, tch) in chains[kk + 1].iter().enumerate() {
            let top = *tch.last().unwrap();
            for drop_i in 0..tch.len() {
                let mut face: Vec<usize> = tch.clone();
                face.remove(drop_i);
                let si = level_index[kk][face.as_slice()];
                let sign = if drop_i % 2 == 0 { Rat::one() } else { -Rat::one() };
                for q in q_lo..=q_hi {
                    let m = if drop_i == tch.len() - 1 {
                        // dropped the top: restrict from the previous top
                        k.res_to(p, q, *face.last().unwrap(), top)
                    } else {
                        RatMatrix::identity(k.stalk_dim(q, top))
                    };
                    let soff = offsets[&(kk as i32, q)][si];
                    let toff = offsets[&(kk as i32 + 1, q)][ti];
                    dc.add_horiz_block(kk as i32, q, soff, toff, &m.scale(&sign));
                }
            }
        }
        let _ = level;
    }
    for (kk, level) in chains.iter().enumerate() {
        for (ci, ch) in level.iter().enumerate() {
            let top = *ch.last().unwrap();
            for q in q_lo..q_hi {
                let m = k.d_at(q, top);
                let soff = offsets[&(kk as i32, q)][ci];
                let toff = offsets[&(kk as i32, q + 1)][ci];
                dc.add_vert_block(kk as i32, q, soff, toff, &m);
            }
        }
    }
    (ChainsLayout { chains, offsets }, dc)
}

/// Graded dimensions of the derived sections of `k` over `cells`.
/// Returns (lowest degree, dims).
pub fn hypercohomology(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
    model: SectionModel,
) -> (i32, Vec<usize>) {
    if k.terms.is_empty() || cells.is_empty() {
        return (0, vec![]);
    }
    let dc = match model {
        SectionModel::CellularClosed => cellular_double_complex(p, k, cells).1,
        SectionModel::Chains => chains_double_complex(p, k, cells).1,
    };
    let total = dc.total();
    (total.lo, homology_dims(&total))
}

/// Hypercohomology as a map degree -> dimension, easier to compare.
pub fn hyper_map(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
    model: SectionModel,
) -> BTreeMap<i32, usize> {
    let (lo, dims) = hypercohomology(p, k, cells, model);
    dims.into_iter()
        .enumerate()
        .filter(|(_, d)| *d > 0)
        .map(|(i, d)| (lo + i as i32, d))
        .collect()
}

/// Hypercohomology of source and target of a morphism, together with the
/// matrices it induces in every degree.
pub struct InducedMap {
    pub src: BTreeMap<i32, usize>,
    pub tgt: BTreeMap<i32, usize>,
    /// degree -> matrix (tgt dim x src dim)
    pub maps: BTreeMap<i32, RatMatrix>,
}

/// Computes the map induced on derived sections over `cells` by a morphism
/// of complexes, at the level of chosen representatives.
pub fn hyper_induced_map(
    p: &StratifiedPoset,
    src: &SheafComplex,
    tgt: &SheafComplex,
    f: &Morphism,
    cells: &[usize],
    model: SectionModel,
) -> InducedMap {
    match model {
        SectionModel::CellularClosed => {
            let (ls, dcs) = cellular_double_complex(p, src, cells);
            let (lt, dct) = cellular_double_complex(p, tgt, cells);
            let ts = dcs.total();
            let tt = dct.total();
            // chain-level map on totals: per cell and degree, the component of f
            let mut mats: BTreeMap<i32, SparseMat> = BTreeMap::new();
            let lo = ts.lo.min(tt.lo);
            let hi = ts.lo + ts.dims.len() as i32 - 1;
            let hi = hi.max(tt.lo + tt.dims.len() as i32 - 1);
            for n in lo..=hi {
                let sdim = ts.degree_index(n).map_or(0, |i| ts.dims[i]);
                let tdim = tt.degree_index(n).map_or(0, |i| tt.dims[i]);
                mats.insert(n, SparseMat::new(tdim, sdim));
            }
            for &c in cells {
                let pp = p.cells[c].dim;
                for q in src.lo..=src.hi() {
                    let comp = f.component(src, tgt, q, c);
                    if comp.is_zero() {
                        continue;
                    }
                    let n = pp + q;
                    let soff_block = total_offset_cellular(&dcs, &ls, pp, q, c);
                    let toff_block = total_offset_cellular(&dct, &lt, pp, q, c);
                    let m = mats.get_mut(&n).unwrap();
                    for i in 0..comp.rows {
                        for j in 0..comp.cols {
                            if !comp.get(i, j).is_zero() {
                                m.push_entry(soff_block + j, toff_block + i, comp.get(i, j).clone());
                            }
                        }
                    }
                }
            }
            induced_from_totals(&ts, &tt, &mats)
        }
        SectionModel::Chains => {
            let (ls, dcs) = chains_double_complex(p, src, cells);
            let (lt, dct) = chains_double_complex(p, tgt, cells);
            let ts = dcs.total();
            let tt = dct.total();
            let mut mats: BTreeMap<i32, SparseMat> = BTreeMap::new();
            let lo = ts.lo.min(tt.lo);
            let hi = (ts.lo + ts.dims.len() as i32 - 1).max(tt.lo + tt.dims.len() as i32 - 1);
            for n in lo..=hi {
                let sdim = ts.degree_index(n).map_or(0, |i| ts.dims[i]);
                let tdim = tt.degree_index(n).map_or(0, |i| tt.dims[i]);
                mats.insert(n, SparseMat::new(tdim, sdim));
            }
            for (kk, level) in ls.chains.iter().enumerate() {
                for (ci, ch) in level.iter().enumerate() {
                    let top = *ch.last().unwrap();
                    for q in src.lo..=src.hi() {
                        let comp = f.component(src, tgt, q, top);
                        if comp.is_zero() {
                            continue;
                        }
                        let n = kk as i32 + q;
                        // locate the same chain in the target layout
                        let tci = lt.chains[kk].binary_search(ch).expect("same chains");
                        let soff_block =
                            total_offset_chains(&dcs, &ls, kk as i32, q, ci);
                        let toff_block =
                            total_offset_chains(&dct, &lt, kk as i32, q, tci);
                        let m = mats.get_mut(&n).unwrap();
                        for i in 0..comp.rows {
                            for j in 0..comp.cols {
                                if !comp.get(i, j).is_zero() {
                                    m.push_entry(
                                        soff_block + j,
                                        toff_block + i,
                                        comp.get(i, j).clone(),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            induced_from_totals(&ts, &tt, &mats)
        }
    }
}

fn total_offset_cellular(
    dc: &DoubleComplex,
    layout: &CellularLayout,
    pp: i32,
    q: i32,
    cell: usize,
) -> usize {
    block_start(dc, pp, q) + layout.offsets[&(pp, q)][&cell]
}

fn total_offset_chains(
    dc: &DoubleComplex,
    layout: &ChainsLayout,
    kk: i32,
    q: i32,
    ci: usize,
) -> usize {
    block_start(dc, kk, q) + layout.offsets[&(kk, q)][ci]
}

/// Offset of block (p, q) inside the total complex of degree p + q.
fn block_start(dc: &DoubleComplex, pp: i32, q: i32) -> usize {
    let n = pp + q;
    let mut acc = 0usize;
    for p2 in dc.p_lo..=dc.p_hi {
        let q2 = n - p2;
        if q2 < dc.q_lo || q2 > dc.q_hi {
            continue;
        }
        if p2 == pp {
            return acc;
        }
        acc += dc.dims[&(p2, q2)];
    }
    panic!("block outside total degree");
}

fn induced_from_totals(
    ts: &crate::sparse::SparseComplex,
    tt: &crate::sparse::SparseComplex,
    mats: &BTreeMap<i32, SparseMat>,
) -> InducedMap {
    use crate::sparse::homology;
    let hs = homology(ts);
    let ht = homology(tt);
    let mut src = BTreeMap::new();
    let mut tgt = BTreeMap::new();
    let mut maps = BTreeMap::new();
    for (i, h) in hs.iter().enumerate() {
        if h.dim > 0 {
            src.insert(ts.lo + i as i32, h.dim);
        }
    }
    for (i, h) in ht.iter().enumerate() {
        if h.dim > 0 {
            tgt.insert(tt.lo + i as i32, h.dim);
        }
    }
    for (i, h) in hs.iter().enumerate() {
        let n = ts.lo + i as i32;
        if h.dim == 0 {
            continue;
        }
        let Some(ti) = tt.degree_index(n) else { continue };
        if ht[ti].dim == 0 {
            continue;
        }
        let mat = mats.get(&n).expect("map matrix present");
        let mut out = RatMatrix::zeros(ht[ti].dim, h.dim);
        for j in 0..h.dim {
            let img = mat.apply(h.rep(j));
            let coords = ht[ti].class_coords(&img);
            for (r, c) in coords.iter().enumerate() {
                if !c.is_zero() {
                    out.set(r, j, c.clone());
                }
            }
        }
        maps.insert(n, out);
    }
    InducedMap { src, tgt, maps }
}

pub fn is_down_closed(p: &StratifiedPoset, cells: &[usize]) -> bool {
    cells.iter().all(|&c| p.faces(c).iter().all(|&(f, _)| cells.binary_search(&f).is_ok()))
}

pub fn is_up_closed(p: &StratifiedPoset, cells: &[usize]) -> bool {
    cells.iter().all(|&c| p.cofaces(c).iter().all(|&(f, _)| cells.binary_search(&f).is_ok()))
}

/// Euler characteristic of the hypercohomology computed as the alternating
/// sum of stalk dimensions, signed by cell dimension and internal degree.
/// Valid for the cellular model on closed carriers.
pub fn euler_from_stalks(p: &StratifiedPoset, k: &SheafComplex, cells: &[usize]) -> i64 {
    let mut acc = 0i64;
    for &c in cells {
        for q in k.degrees() {
            let d = k.stalk_dim(q, c) as i64;
            let sign = if (p.cells[c].dim + q).rem_euclid(2) == 0 { 1 } else { -1 };
            acc += sign * d;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::from_simplicial;

    fn verts(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn sphere2() -> StratifiedPoset {
        from_simplicial(&[
            verts(&["a", "b", "c"]),
            verts(&["a", "b", "d"]),
            verts(&["a", "c", "d"]),
            verts(&["b", "c", "d"]),
        ])
        .unwrap()
    }

    fn torus7() -> StratifiedPoset {
        let v: Vec<String> = (0..7).map(|i| format!("t{i}")).collect();
        let mut facets = Vec::new();
        for i in 0..7usize {
            facets.push(vec![v[i].clone(), v[(i + 1) % 7].clone(), v[(i + 3) % 7].clone()]);
            facets.push(vec![v[i].clone(), v[(i + 2) % 7].clone(), v[(i + 3) % 7].clone()]);
        }
        from_simplicial(&facets).unwrap()
    }

    #[test]
    fn constant_sheaf_on_point() {
        let p = from_simplicial(&[verts(&["x"])]).unwrap();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        k.validate(&p).unwrap();
        assert_eq!(k.total_dim(), 1);
        let h = hyper_map(&p, &k, &p.full_selection().cells, SectionModel::CellularClosed);
        assert_eq!(h.get(&0), Some(&1));
    }

    #[test]
    fn constant_sheaf_on_sphere_has_sphere_cohomology() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        assert_eq!(k.total_dim(), 14);
        let cells = p.full_selection().cells;
        let h = hyper_map(&p, &k, &cells, SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (2, 1)]));
        let hc = hyper_map(&p, &k, &cells, SectionModel::Chains);
        assert_eq!(h, hc);
    }

    #[test]
    fn constant_sheaf_on_torus() {
        let p = torus7();
        assert_eq!(p.len(), 42);
        assert_eq!(p.euler_characteristic(), 0);
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let h = hyper_map(&p, &k, &p.full_selection().cells, SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 2), (2, 1)]));
    }

    #[test]
    fn shift_moves_degree() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let s = shift(&k, -1);
        assert_eq!(s.lo, 1);
        let back = shift(&s, 1);
        assert_eq!(back.lo, 0);
        // shifting the constant sheaf by [-1] equals placing it in degree 1
        let direct = constant_complex(&p, (0..p.len()).collect(), 1);
        assert_eq!(s.lo, direct.lo);
        assert_eq!(s.total_dim(), direct.total_dim());
    }

    #[test]
    fn cohomology_sheaf_of_constant_is_itself() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let h0 = cohomology_sheaf(&p, &k, 0);
        assert_eq!(h0.total_dim(), 14);
        assert!(is_constant_rank_one(&p, &h0, &p.full_selection().cells));
        assert_eq!(cohomology_sheaf(&p, &k, 1).total_dim(), 0);
    }

    #[test]
    fn acyclic_two_term_complex_has_zero_cohomology() {
        let p = sphere2();
        let carrier = Carrier::full(&p);
        let one = CellSheaf::constant(&carrier, 1);
        let mut k = SheafComplex {
            carrier: carrier.clone(),
            lo: 0,
            terms: vec![one.clone(), one.clone()],
            diff: vec![BTreeMap::new()],
        };
        for &c in &carrier.cells {
            k.set_d(0, c, RatMatrix::identity(1));
        }
        k.validate(&p).unwrap();
        for i in 0..2 {
            assert_eq!(cohomology_sheaf(&p, &k, i).total_dim(), 0);
        }
        let h = hyper_map(&p, &k, &carrier.cells, SectionModel::CellularClosed);
        assert!(h.is_empty());
    }

    #[test]
    fn truncation_le_of_concentrated_complex() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let (t, f) = truncate(&p, &k, 0, TruncSide::Le);
        assert_eq!(t.total_dim(), k.total_dim());
        f.validate(&p, &t, &k).unwrap();
        let (z, _) = truncate(&p, &k, -1, TruncSide::Le);
        assert_eq!(z.total_dim(), 0);
    }

    #[test]
    fn cone_of_identity_is_acyclic() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let id = Morphism::identity(&k);
        let c = cone(&p, &id, &k, &k).unwrap();
        c.cone.validate(&p).unwrap();
        for i in -2..3 {
            assert_eq!(cohomology_sheaf(&p, &c.cone, i).total_dim(), 0, "degree {i}");
        }
    }

    #[test]
    fn cone_of_zero_splits() {
        let p = sphere2();
        let a = constant_complex(&p, (0..p.len()).collect(), 0);
        let b = constant_complex(&p, (0..p.len()).collect(), 0);
        let zero = Morphism::default();
        let c = cone(&p, &zero, &a, &b).unwrap();
        // cone = B + A[1]: cohomology sheaves in degrees -1 and 0
        assert_eq!(cohomology_sheaf(&p, &c.cone, -1).total_dim(), 14);
        assert_eq!(cohomology_sheaf(&p, &c.cone, 0).total_dim(), 14);
    }

    #[test]
    fn tensor_unit_and_rank() {
        let p = sphere2();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let two = direct_sum(&p, &k, &k);
        let t = tensor(&p, &two, &two).unwrap();
        for &c in &t.carrier.cells {
            assert_eq!(t.stalk_dim(0, c), 4);
        }
        let u = tensor(&p, &two, &k).unwrap();
        for &c in &u.carrier.cells {
            assert_eq!(u.stalk_dim(0, c), 2);
        }
    }

    #[test]
    fn mobius_rank_one_system_is_not_constant() {
        // rank-1 sheaf on the 3-cycle with one restriction -1
        let p = from_simplicial(&[verts(&["a", "b"]), verts(&["b", "c"]), verts(&["a", "c"])])
            .unwrap();
        let carrier = Carrier::full(&p);
        let mut f = CellSheaf::constant(&carrier, 1);
        let a = p.index_of("a").unwrap();
        let e = p.index_of("a.b").unwrap();
        f.res.insert((a, e), RatMatrix::from_int_rows(&[&[-1]]));
        f.validate(&p).unwrap();
        assert_eq!(global_sections_dim(&p, &f, &carrier.cells), 0);
        assert!(!is_constant_rank_one(&p, &f, &carrier.cells));
        // and the zero sheaf is not constant rank one either
        let z = CellSheaf::zero(&carrier);
        assert!(!is_constant_rank_one(&p, &z, &carrier.cells));
    }

    #[test]
    fn hypercohomology_additive_and_euler() {
        let p = torus7();
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let s = direct_sum(&p, &k, &shift(&k, -1));
        let cells = p.full_selection().cells;
        let h = hyper_map(&p, &s, &cells, SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 3), (2, 3), (3, 1)]));
        // Euler characteristic from stalks matches alternating sum of dims
        let e = euler_from_stalks(&p, &s, &cells);
        let alt: i64 = h.iter().map(|(n, d)| if n % 2 == 0 { *d as i64 } else { -(*d as i64) }).sum();
        assert_eq!(e, alt);
    }
}
