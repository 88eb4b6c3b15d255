//! Sparse column arithmetic for the large intermediate complexes.
//!
//! The public linear algebra stays dense; this module exists because the
//! cell-chain complexes that compute derived sections can have tens of
//! thousands of basis elements, almost all entries zero. Everything here is
//! still exact rational arithmetic with deterministic pivoting.

use crate::linalg::{Rat, RatMatrix};
use num_traits::{One, Zero};
use std::collections::HashMap;

/// Sorted (row, value) pairs, values nonzero.
pub type SparseVec = Vec<(usize, Rat)>;

pub fn sv_is_zero(v: &SparseVec) -> bool {
    v.is_empty()
}

pub fn sv_top(v: &SparseVec) -> Option<usize> {
    v.last().map(|(r, _)| *r)
}

/// w := w + c * v
pub fn sv_axpy(w: &SparseVec, c: &Rat, v: &SparseVec) -> SparseVec {
    let mut out = Vec::with_capacity(w.len() + v.len());
    let (mut i, mut j) = (0usize, 0usize);
    while i < w.len() || j < v.len() {
        if j >= v.len() || (i < w.len() && w[i].0 < v[j].0) {
            out.push(w[i].clone());
            i += 1;
        } else if i >= w.len() || v[j].0 < w[i].0 {
            let x = c * &v[j].1;
            if !x.is_zero() {
                out.push((v[j].0, x));
            }
            j += 1;
        } else {
            let x = &w[i].1 + c * &v[j].1;
            if !x.is_zero() {
                out.push((w[i].0, x));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

pub fn sv_scale(v: &SparseVec, c: &Rat) -> SparseVec {
    if c.is_zero() {
        return Vec::new();
    }
    v.iter().map(|(r, x)| (*r, x * c)).collect()
}

pub fn sv_from_dense(v: &[Rat]) -> SparseVec {
    v.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(i, x)| (i, x.clone())).collect()
}

pub fn sv_to_dense(v: &SparseVec, n: usize) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); n];
    for (r, x) in v {
        out[*r] = x.clone();
    }
    out
}

/// Column-major sparse matrix.
#[derive(Clone, Debug)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: Vec<SparseVec>,
}

impl SparseMat {
    pub fn new(rows: usize, ncols: usize) -> Self {
        SparseMat { rows, cols: vec![Vec::new(); ncols] }
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn push_entry(&mut self, col: usize, row: usize, v: Rat) {
        if v.is_zero() {
            return;
        }
        let c = &mut self.cols[col];
        match c.binary_search_by_key(&row, |(r, _)| *r) {
            Ok(i) => {
                let x = &c[i].1 + v;
                if x.is_zero() {
                    c.remove(i);
                } else {
                    c[i].1 = x;
                }
            }
            Err(i) => c.insert(i, (row, v)),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n);
        for i in 0..n {
            m.cols[i].push((i, Rat::one()));
        }
        m
    }

    pub fn from_dense(d: &RatMatrix) -> Self {
        let mut m = Self::new(d.rows, d.cols);
        for j in 0..d.cols {
            for i in 0..d.rows {
                if !d.get(i, j).is_zero() {
                    m.cols[j].push((i, d.get(i, j).clone()));
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> RatMatrix {
        let mut d = RatMatrix::zeros(self.rows, self.ncols());
        for (j, c) in self.cols.iter().enumerate() {
            for (i, v) in c {
                d.set(*i, j, v.clone());
            }
        }
        d
    }

    pub fn apply(&self, v: &SparseVec) -> SparseVec {
        let mut out: SparseVec = Vec::new();
        for (j, c) in v {
            out = sv_axpy(&out, c, &self.cols[*j]);
        }
        out
    }

    /// Matrix product self * rhs (columns of rhs mapped through self).
    pub fn mul(&self, rhs: &SparseMat) -> SparseMat {
        assert_eq!(self.ncols(), rhs.rows, "sparse mul shape");
        SparseMat { rows: self.rows, cols: rhs.cols.iter().map(|c| self.apply(c)).collect() }
    }

    /// Keep only rows in [r0, r1), reindexed to start at zero.
    pub fn row_window(&self, r0: usize, r1: usize) -> SparseMat {
        let cols = self
            .cols
            .iter()
            .map(|c| {
                c.iter()
                    .filter(|(r, _)| *r >= r0 && *r < r1)
                    .map(|(r, v)| (*r - r0, v.clone()))
                    .collect()
            })
            .collect();
        SparseMat { rows: r1 - r0, cols }
    }

    pub fn hstack(&self, rhs: &SparseMat) -> SparseMat {
        assert_eq!(self.rows, rhs.rows);
        let mut cols = self.cols.clone();
        cols.extend(rhs.cols.iter().cloned());
        SparseMat { rows: self.rows, cols }
    }
}

/// Left-to-right column reduction: returns reduced columns, the recorded
/// column operations V (so reduced = input * V), and the pivot map.
pub struct Reduction {
    pub reduced: SparseMat,
    pub v: SparseMat,
    /// pivot row -> column index holding that pivot
    pub pivot_of: HashMap<usize, usize>,
}

pub fn reduce_columns(m: &SparseMat) -> Reduction {
    let n = m.ncols();
    let mut r = m.clone();
    let mut v = SparseMat::identity(n);
    let mut pivot_of: HashMap<usize, usize> = HashMap::new();
    for j in 0..n {
        loop {
            let Some(top) = sv_top(&r.cols[j]) else { break };
            match pivot_of.get(&top) {
                None => {
                    pivot_of.insert(top, j);
                    break;
                }
                Some(&j2) => {
                    let c = -(&r.cols[j].last().unwrap().1 / &r.cols[j2].last().unwrap().1);
                    r.cols[j] = sv_axpy(&r.cols[j], &c, &r.cols[j2]);
                    v.cols[j] = sv_axpy(&v.cols[j], &c, &v.cols[j2]);
                }
            }
        }
    }
    Reduction { reduced: r, v, pivot_of }
}

pub fn sparse_rank(m: &SparseMat) -> usize {
    reduce_columns(m).reduced.cols.iter().filter(|c| !c.is_empty()).count()
}

/// Kernel basis of a sparse matrix, as columns.
pub fn sparse_kernel(m: &SparseMat) -> SparseMat {
    let red = reduce_columns(m);
    let cols: Vec<SparseVec> = red
        .reduced
        .cols
        .iter()
        .zip(red.v.cols.iter())
        .filter(|(rc, _)| rc.is_empty())
        .map(|(_, vc)| vc.clone())
        .collect();
    SparseMat { rows: m.ncols(), cols }
}

/// Echelon set: columns with pairwise distinct top rows, for membership tests
/// and coordinate extraction.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    pub cols: Vec<SparseVec>,
    pub pivot_of: HashMap<usize, usize>,
}

impl Echelon {
    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    /// Reduce `v` against the echelon; returns the residual and the
    /// coefficient used against each echelon column.
    pub fn reduce(&self, v: &SparseVec) -> (SparseVec, Vec<Rat>) {
        let mut w = v.clone();
        let mut coeffs = vec![Rat::zero(); self.cols.len()];
        while let Some(top) = sv_top(&w) {
            let Some(&j) = self.pivot_of.get(&top) else { break };
            let c = -(&w.last().unwrap().1 / &self.cols[j].last().unwrap().1);
            w = sv_axpy(&w, &c, &self.cols[j]);
            coeffs[j] = -c;
        }
        (w, coeffs)
    }

    /// Insert a vector already reduced to nonzero residual.
    pub fn insert(&mut self, v: SparseVec) {
        let top = sv_top(&v).expect("cannot insert zero vector into echelon");
        assert!(!self.pivot_of.contains_key(&top), "pivot collision");
        self.pivot_of.insert(top, self.cols.len());
        self.cols.push(v);
    }

    /// Try to absorb v; true if it enlarged the span.
    pub fn absorb(&mut self, v: &SparseVec) -> bool {
        let (res, _) = self.reduce(v);
        if res.is_empty() {
            false
        } else {
            self.insert(res);
            true
        }
    }
}

pub fn echelon_of(m: &SparseMat) -> Echelon {
    let mut e = Echelon::default();
    for c in &m.cols {
        e.absorb(c);
    }
    e
}

/// A bounded cochain complex of rational vector spaces given by sparse
/// differentials d[i] : C^{lo+i} -> C^{lo+i+1}.
pub struct SparseComplex {
    pub lo: i32,
    pub dims: Vec<usize>,
    pub d: Vec<SparseMat>, // length dims.len()-1 (or dims.len() with trailing zero map)
}

impl SparseComplex {
    pub fn validate(&self) {
        assert_eq!(self.d.len() + 1, self.dims.len());
        for (i, m) in self.d.iter().enumerate() {
            assert_eq!(m.ncols(), self.dims[i], "differential {i} cols");
            assert_eq!(m.rows, self.dims[i + 1], "differential {i} rows");
        }
        for i in 0..self.d.len().saturating_sub(1) {
            let comp = self.d[i + 1].mul(&self.d[i]);
            assert!(comp.cols.iter().all(|c| c.is_empty()), "d.d != 0 at {}", self.lo + i as i32);
        }
    }

    pub fn degree_index(&self, n: i32) -> Option<usize> {
        if n < self.lo || (n - self.lo) as usize >= self.dims.len() {
            None
        } else {
            Some((n - self.lo) as usize)
        }
    }
}

/// Cohomology of one degree, with representatives and class coordinates.
pub struct HomologyAt {
    pub dim: usize,
    /// cycle representatives of a basis of H, echelonized
    pub reps: Echelon,
    /// echelonized boundary space
    pub boundaries: Echelon,
    pub ambient_dim: usize,
}

/// Reduce `v` against two echelon sets with disjoint pivots, interleaving by
/// top row. Returns the residual and the coefficients used on `reps`.
pub fn reduce_mixed(boundaries: &Echelon, reps: &Echelon, v: &SparseVec) -> (SparseVec, Vec<Rat>) {
    let mut w = v.clone();
    let mut coeffs = vec![Rat::zero(); reps.cols.len()];
    while let Some(top) = sv_top(&w) {
        if let Some(&j) = boundaries.pivot_of.get(&top) {
            let c = -(&w.last().unwrap().1 / &boundaries.cols[j].last().unwrap().1);
            w = sv_axpy(&w, &c, &boundaries.cols[j]);
        } else if let Some(&j) = reps.pivot_of.get(&top) {
            let c = -(&w.last().unwrap().1 / &reps.cols[j].last().unwrap().1);
            w = sv_axpy(&w, &c, &reps.cols[j]);
            coeffs[j] = -c;
        } else {
            break;
        }
    }
    (w, coeffs)
}

impl HomologyAt {
    /// Class coordinates of a cycle; panics if v is not a cycle of the
    /// complex this was computed from (callers assert that beforehand).
    pub fn class_coords(&self, v: &SparseVec) -> Vec<Rat> {
        let (res, coeffs) = reduce_mixed(&self.boundaries, &self.reps, v);
        assert!(res.is_empty(), "class_coords: vector is not in the cycle space");
        coeffs
    }

    pub fn rep(&self, k: usize) -> &SparseVec {
        &self.reps.cols[k]
    }
}

/// Cohomology of a sparse complex in every degree, with representatives.
pub fn homology(cx: &SparseComplex) -> Vec<HomologyAt> {
    let n = cx.dims.len();
    let mut out = Vec::with_capacity(n);
    // kernel of d[i] and image of d[i-1]
    let mut kernels: Vec<SparseMat> = Vec::with_capacity(n);
    let mut images: Vec<Echelon> = Vec::with_capacity(n);
    for i in 0..n {
        if i < cx.d.len() {
            kernels.push(sparse_kernel(&cx.d[i]));
        } else {
            kernels.push(SparseMat::identity(cx.dims[i]));
        }
        if i == 0 {
            images.push(Echelon::default());
        } else {
            let red = reduce_columns(&cx.d[i - 1]);
            let mut e = Echelon::default();
            for c in red.reduced.cols.iter().filter(|c| !c.is_empty()) {
                e.insert(c.clone());
            }
            images.push(e);
        }
    }
    for i in 0..n {
        let boundaries = images[i].clone();
        let mut reps = Echelon::default();
        for c in &kernels[i].cols {
            let (res, _) = reduce_mixed(&boundaries, &reps, c);
            if !res.is_empty() {
                reps.insert(res);
            }
        }
        out.push(HomologyAt {
            dim: reps.dim(),
            reps,
            boundaries,
            ambient_dim: cx.dims[i],
        });
    }
    out
}

pub fn homology_dims(cx: &SparseComplex) -> Vec<usize> {
    homology(cx).iter().map(|h| h.dim).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kernel_basis, rank, rat_int, RatMatrix};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_dense(rng: &mut StdRng, rows: usize, cols: usize) -> RatMatrix {
        let mut m = RatMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if rng.gen_bool(0.4) {
                    m.set(i, j, rat_int(rng.gen_range(-3..=3)));
                }
            }
        }
        m
    }

    #[test]
    fn sparse_rank_and_kernel_match_dense() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..30 {
            let d = random_dense(&mut rng, 8, 11);
            let s = SparseMat::from_dense(&d);
            assert_eq!(sparse_rank(&s), rank(&d));
            let k = sparse_kernel(&s);
            assert_eq!(k.ncols(), kernel_basis(&d).cols);
            for c in &k.cols {
                assert!(s.apply(c).is_empty());
            }
        }
    }

    #[test]
    fn homology_of_a_two_step_complex() {
        // 0 -> Q^2 --d0--> Q^2 --d1--> Q -> 0 with d1 d0 = 0
        let d0 = SparseMat::from_dense(&RatMatrix::from_int_rows(&[&[1, 0], &[0, 0]]));
        let d1 = SparseMat::from_dense(&RatMatrix::from_int_rows(&[&[0, 1]]));
        let cx = SparseComplex { lo: 0, dims: vec![2, 2, 1], d: vec![d0, d1] };
        cx.validate();
        let h = homology_dims(&cx);
        // H^0 = ker d0 = 1, H^1 = ker d1 / im d0 = 1/1 = 0, H^2 = Q / im d1 = 0
        assert_eq!(h, vec![1, 0, 0]);
    }

    #[test]
    fn homology_dims_match_dense_ranks() {
        // cellular cochain complexes of random simplicial complexes
        use crate::poset::from_simplicial;
        use crate::sheaf::{cellular_double_complex, constant_complex};
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let nv = rng.gen_range(4..7);
            let names: Vec<String> = (0..nv).map(|i| format!("v{i}")).collect();
            let mut facets = Vec::new();
            for _ in 0..rng.gen_range(2..6) {
                let k = rng.gen_range(1..4).min(nv);
                let mut f: Vec<String> = Vec::new();
                while f.len() < k {
                    let v = names[rng.gen_range(0..nv)].clone();
                    if !f.contains(&v) {
                        f.push(v);
                    }
                }
                facets.push(f);
            }
            facets.sort();
            facets.dedup_by_key(|f| {
                let mut s = f.clone();
                s.sort();
                s
            });
            let Ok(p) = from_simplicial(&facets) else { continue };
            let k = constant_complex(&p, (0..p.len()).collect(), 0);
            let cells: Vec<usize> = (0..p.len()).collect();
            let total = cellular_double_complex(&p, &k, &cells).1.total();
            total.validate();
            let hs = homology_dims(&total);
            // dense comparison
            let mut ranks = vec![0usize];
            for d in &total.d {
                ranks.push(rank(&d.to_dense()));
            }
            ranks.push(0);
            for (i, &h) in hs.iter().enumerate() {
                assert_eq!(h, total.dims[i] - ranks[i] - ranks[i + 1], "degree {i}");
            }
        }
    }

    #[test]
    fn class_coords_resolve() {
        // circle: 0 -> Q^3 -> Q^3 -> 0, boundary of a 3-cycle graph (cochain direction)
        let d = SparseMat::from_dense(&RatMatrix::from_int_rows(&[
            &[-1, 1, 0],
            &[0, -1, 1],
            &[1, 0, -1],
        ]));
        let cx = SparseComplex { lo: 0, dims: vec![3, 3], d: vec![d] };
        let h = homology(&cx);
        assert_eq!(h[0].dim, 1);
        assert_eq!(h[1].dim, 1);
        // H^1 class of (1,0,0) must be nonzero, and (1,1,1)... (sum of the
        // coboundary relations) reduces consistently
        let coords = h[1].class_coords(&sv_from_dense(&[rat_int(1), rat_int(0), rat_int(0)]));
        assert!(coords.iter().any(|c| !c.is_zero()));
    }
}
