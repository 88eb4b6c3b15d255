//! Dense exact rational matrices.
//!
//! Everything downstream (restriction maps, differentials, Ext computations)
//! runs through this module. All arithmetic is over arbitrary-precision
//! rationals; there is no floating point anywhere in the crate.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// Shorthand for small rational constants.
pub fn rat(n: i64, d: i64) -> Rat {
    assert!(d != 0, "zero denominator");
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Renders `p/q`, or just `p` when the denominator is one.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p` or `p/q`.
pub fn rat_from_str(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    match s.split_once('/') {
        None => {
            let n: BigInt = s.parse().map_err(|_| format!("bad integer `{s}`"))?;
            Ok(Rat::from_integer(n))
        }
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| format!("bad numerator `{p}`"))?;
            let q: BigInt = q.trim().parse().map_err(|_| format!("bad denominator `{q}`"))?;
            if q.is_zero() {
                return Err(format!("zero denominator in `{s}`"));
            }
            Ok(Rat::new(p, q))
        }
    }
}

/// Row-major dense matrix over the rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct RatMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Rat>,
}

impl std::fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "RatMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| rat_to_string(self.get(i, j))).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix { rows, cols, data: vec![Rat::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
        }
        RatMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_int_rows(rows: &[&[i64]]) -> Self {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&x| rat_int(x)).collect()).collect())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn col(&self, j: usize) -> Vec<Rat> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn row_vec(&self, i: usize) -> Vec<Rat> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn set_col(&mut self, j: usize, v: &[Rat]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self.set(i, j, v[i].clone());
        }
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_zero() {
                    m.set(j, i, self.get(i, j).clone());
                }
            }
        }
        m
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let b = rhs.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.get(i, j).clone();
                    out.set(i, j, cur + a * b);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Rat]) -> Vec<Rat> {
        assert_eq!(self.cols, v.len(), "shape mismatch in apply");
        let mut out = vec![Rat::zero(); self.rows];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if !a.is_zero() && !v[j].is_zero() {
                    out[i] += a * &v[j];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        RatMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        RatMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn neg(&self) -> Self {
        RatMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| -a).collect() }
    }

    pub fn scale(&self, c: &Rat) -> Self {
        RatMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * c).collect() }
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows);
        let mut out = Self::zeros(self.rows, self.cols + rhs.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
            for j in 0..rhs.cols {
                out.set(i, self.cols + j, rhs.get(i, j).clone());
            }
        }
        out
    }

    /// Vertical concatenation.
    pub fn vstack(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols);
        let mut data = self.data.clone();
        data.extend(rhs.data.iter().cloned());
        RatMatrix { rows: self.rows + rhs.rows, cols: self.cols, data }
    }

    pub fn direct_sum(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows + rhs.rows, self.cols + rhs.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(i, j, self.get(i, j).clone());
            }
        }
        for i in 0..rhs.rows {
            for j in 0..rhs.cols {
                out.set(self.rows + i, self.cols + j, rhs.get(i, j).clone());
            }
        }
        out
    }

    /// Kronecker product, blocks of `rhs` scaled by entries of `self`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows * rhs.rows, self.cols * rhs.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a.is_zero() {
                    continue;
                }
                for k in 0..rhs.rows {
                    for l in 0..rhs.cols {
                        let b = rhs.get(k, l);
                        if !b.is_zero() {
                            out.set(i * rhs.rows + k, j * rhs.cols + l, a * b);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn submatrix_cols(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j).clone());
            }
        }
        out
    }

    pub fn to_string_grid(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| rat_to_string(self.get(i, j))).collect())
            .collect()
    }
}

/// Reduced row echelon form together with its pivot columns.
///
/// Pivoting scans each column left to right and takes the first nonzero
/// entry; exact arithmetic makes pivots interchangeable, and the fixed rule
/// keeps every downstream basis choice deterministic.
pub struct Rref {
    pub mat: RatMatrix,
    pub pivots: Vec<usize>,
}

pub fn rref(m: &RatMatrix) -> Rref {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut r = 0usize;
    for c in 0..a.cols {
        if r == a.rows {
            break;
        }
        // first nonzero entry at or below row r
        let mut pr = None;
        for i in r..a.rows {
            if !a.get(i, c).is_zero() {
                pr = Some(i);
                break;
            }
        }
        let Some(pr) = pr else { continue };
        if pr != r {
            for j in 0..a.cols {
                let x = a.get(pr, j).clone();
                let y = a.get(r, j).clone();
                a.set(pr, j, y);
                a.set(r, j, x);
            }
        }
        let piv = a.get(r, c).clone();
        if !piv.is_one() {
            let inv = piv.recip();
            for j in c..a.cols {
                if !a.get(r, j).is_zero() {
                    let v = a.get(r, j) * &inv;
                    a.set(r, j, v);
                }
            }
        }
        let nz: Vec<(usize, Rat)> = (c..a.cols)
            .filter_map(|j| {
                let v = a.get(r, j);
                if v.is_zero() { None } else { Some((j, v.clone())) }
            })
            .collect();
        for i in 0..a.rows {
            if i == r {
                continue;
            }
            let f = a.get(i, c).clone();
            if f.is_zero() {
                continue;
            }
            for (j, v) in &nz {
                let cur = a.get(i, *j).clone();
                a.set(i, *j, cur - &f * v);
            }
        }
        pivots.push(c);
        r += 1;
    }
    Rref { mat: a, pivots }
}

/// Exact rank over the rationals.
pub fn rank(m: &RatMatrix) -> usize {
    rref(m).pivots.len()
}

/// Basis of the null space, returned as the columns of a matrix.
/// Always satisfies `cols(m) = rank(m) + cols(kernel_basis(m))`.
pub fn kernel_basis(m: &RatMatrix) -> RatMatrix {
    let Rref { mat, pivots } = rref(m);
    let free: Vec<usize> = (0..m.cols).filter(|c| !pivots.contains(c)).collect();
    let mut out = RatMatrix::zeros(m.cols, free.len());
    for (k, &fc) in free.iter().enumerate() {
        out.set(fc, k, Rat::one());
        for (pi, &pc) in pivots.iter().enumerate() {
            let v = mat.get(pi, fc);
            if !v.is_zero() {
                out.set(pc, k, -v.clone());
            }
        }
    }
    out
}

/// Basis of the column space: the pivot columns of `m`, in order.
pub fn image_basis(m: &RatMatrix) -> RatMatrix {
    let piv = rref(m).pivots;
    m.submatrix_cols(&piv)
}

/// Solves `m x = b` for one right-hand side.
/// Returns a particular solution (if any) and a kernel basis; the full
/// solution set is `x + span(kernel)`. Fails only on shape mismatch.
pub fn solve_affine(m: &RatMatrix, b: &[Rat]) -> Result<(Option<Vec<Rat>>, RatMatrix), String> {
    if b.len() != m.rows {
        return Err(format!("solve_affine: {} rows vs rhs of length {}", m.rows, b.len()));
    }
    let mut bm = RatMatrix::zeros(m.rows, 1);
    bm.set_col(0, b);
    let aug = m.hstack(&bm);
    let Rref { mat, pivots } = rref(&aug);
    let ker = kernel_basis(m);
    if pivots.contains(&m.cols) {
        return Ok((None, ker)); // rank jumped with the rhs attached: inconsistent
    }
    let mut x = vec![Rat::zero(); m.cols];
    for (pi, &pc) in pivots.iter().enumerate() {
        x[pc] = mat.get(pi, m.cols).clone();
    }
    Ok((Some(x), ker))
}

/// Solves `m X = B` column by column; `None` if any column is inconsistent.
pub fn solve_matrix(m: &RatMatrix, b: &RatMatrix) -> Option<RatMatrix> {
    assert_eq!(m.rows, b.rows, "solve_matrix shape");
    let aug = m.hstack(b);
    let Rref { mat, pivots } = rref(&aug);
    if pivots.iter().any(|&p| p >= m.cols) {
        return None;
    }
    let mut x = RatMatrix::zeros(m.cols, b.cols);
    for (pi, &pc) in pivots.iter().enumerate() {
        for j in 0..b.cols {
            x.set(pc, j, mat.get(pi, m.cols + j).clone());
        }
    }
    Some(x)
}

/// Data for a cokernel `Q^n -> Q^n / im`: a projection matrix whose rows are
/// coordinates in a chosen complement basis, plus a section of it.
pub struct CokernelData {
    /// g x n projection onto the quotient coordinates.
    pub proj: RatMatrix,
    /// n x g section: representative vectors for the quotient基 basis.
    pub section: RatMatrix,
    pub dim: usize,
}

/// Quotient of the ambient space `Q^n` by the column span of `im`.
pub fn cokernel(im: &RatMatrix) -> CokernelData {
    let n = im.rows;
    // Column-echelonize im: rref of transpose gives pivot rows of the span.
    let rt = rref(&im.transpose());
    let pivot_rows = rt.pivots.clone(); // coordinates where the span has leading ones
    let echelon = rt.mat.transpose(); // columns: reduced basis of the span
    let rank = pivot_rows.len();
    let free_rows: Vec<usize> = (0..n).filter(|r| !pivot_rows.contains(r)).collect();
    let g = free_rows.len();
    // proj: eliminate pivot-row components using the echelon basis, then read
    // off the free coordinates.
    let mut proj = RatMatrix::zeros(g, n);
    for (k, &fr) in free_rows.iter().enumerate() {
        proj.set(k, fr, Rat::one());
        // contribution of basis vectors through their pivot coordinates
        for bi in 0..rank {
            let pr = pivot_rows[bi];
            let v = echelon.get(fr, bi);
            if !v.is_zero() {
                proj.set(k, pr, -v.clone());
            }
        }
    }
    let mut section = RatMatrix::zeros(n, g);
    for (k, &fr) in free_rows.iter().enumerate() {
        section.set(fr, k, Rat::one());
    }
    CokernelData { proj, section, dim: g }
}

/// Coordinates of the columns of `v` in the basis given by the columns of
/// `basis`; panics if some column is outside the span (callers use this only
/// where membership is guaranteed and asserted).
pub fn coords_in_basis(basis: &RatMatrix, v: &RatMatrix) -> RatMatrix {
    solve_matrix(basis, v).expect("coords_in_basis: vector outside span")
}

pub fn max_abs_den_is_one(m: &RatMatrix) -> bool {
    m.data.iter().all(|x| x.denom().is_one())
}

/// True when every entry of `m` is integral and |entry| <= bound.
pub fn entries_bounded(m: &RatMatrix, bound: i64) -> bool {
    max_abs_den_is_one(m) && m.data.iter().all(|x| x.numer().abs() <= BigInt::from(bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent fraction-free (Bareiss) elimination, used only as an
    /// oracle against the rational row reduction.
    fn bareiss_rank(m: &RatMatrix) -> usize {
        assert!(max_abs_den_is_one(m), "oracle expects integer matrices");
        let mut a: Vec<Vec<BigInt>> = (0..m.rows)
            .map(|i| (0..m.cols).map(|j| m.get(i, j).numer().clone()).collect())
            .collect();
        let (rows, cols) = (m.rows, m.cols);
        let mut prev = BigInt::from(1);
        let mut r = 0usize;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(pr) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
            a.swap(r, pr);
            for i in (r + 1)..rows {
                for j in (c + 1)..cols {
                    let num = &a[r][c] * &a[i][j] - &a[i][c] * &a[r][j];
                    a[i][j] = num / &prev;
                }
                a[i][c] = BigInt::from(0);
            }
            prev = a[r][c].clone();
            r += 1;
        }
        r
    }

    fn random_int_matrix(rng: &mut StdRng, rows: usize, cols: usize, lo: i64, hi: i64) -> RatMatrix {
        let data: Vec<Vec<Rat>> =
            (0..rows).map(|_| (0..cols).map(|_| rat_int(rng.gen_range(lo..=hi))).collect()).collect();
        RatMatrix::from_rows(data)
    }

    #[test]
    fn rank_identity() {
        assert_eq!(rank(&RatMatrix::identity(3)), 3);
    }

    #[test]
    fn rank_proportional_rows() {
        let m = RatMatrix::from_int_rows(&[&[1, 2], &[2, 4]]);
        assert_eq!(rank(&m), 1);
    }

    #[test]
    fn rank_matches_fraction_free_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..40 {
            let m = random_int_matrix(&mut rng, 6, 6, -4, 4);
            assert_eq!(rank(&m), bareiss_rank(&m));
        }
        // rectangular shapes too
        for _ in 0..20 {
            let m = random_int_matrix(&mut rng, 4, 7, -3, 3);
            assert_eq!(rank(&m), bareiss_rank(&m));
            assert_eq!(rank(&m), rank(&m.transpose()));
        }
    }

    #[test]
    fn kernel_identity_empty() {
        let k = kernel_basis(&RatMatrix::identity(2));
        assert_eq!(k.cols, 0);
    }

    #[test]
    fn kernel_zero_matrix_full() {
        let k = kernel_basis(&RatMatrix::zeros(2, 3));
        assert_eq!(k.cols, 3);
    }

    #[test]
    fn kernel_forced_up_to_scale() {
        let m = RatMatrix::from_int_rows(&[&[1, 2], &[2, 4]]);
        let k = kernel_basis(&m);
        assert_eq!(k.cols, 1);
        // proportional to (-2, 1)
        let v = k.col(0);
        assert_eq!(&v[0] * rat_int(1), -rat_int(2) * &v[1]);
        assert!(m.apply(&v).iter().all(|x| x.is_zero()));
    }

    #[test]
    fn rank_nullity_always() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..30 {
            let r = rng.gen_range(1..6);
            let c = rng.gen_range(0..6);
            let m = if c == 0 {
                RatMatrix::zeros(r, 0)
            } else {
                random_int_matrix(&mut rng, r, c, -5, 5)
            };
            assert_eq!(rank(&m) + kernel_basis(&m).cols, c);
        }
        assert_eq!(rank(&RatMatrix::zeros(0, 4)) + kernel_basis(&RatMatrix::zeros(0, 4)).cols, 4);
    }

    #[test]
    fn solve_identity() {
        let b = vec![rat_int(3), rat_int(-1)];
        let (x, k) = solve_affine(&RatMatrix::identity(2), &b).unwrap();
        assert_eq!(x.unwrap(), b);
        assert_eq!(k.cols, 0);
    }

    #[test]
    fn solve_inconsistent() {
        let m = RatMatrix::from_int_rows(&[&[1, 2], &[2, 4]]);
        let (x, _) = solve_affine(&m, &[rat_int(1), rat_int(3)]).unwrap();
        assert!(x.is_none());
    }

    #[test]
    fn solve_consistent_random_residual_zero() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..25 {
            let m = random_int_matrix(&mut rng, 5, 7, -3, 3);
            let x0: Vec<Rat> = (0..7).map(|_| rat_int(rng.gen_range(-3..=3))).collect();
            let b = m.apply(&x0);
            let (x, ker) = solve_affine(&m, &b).unwrap();
            let x = x.expect("constructed system must be solvable");
            assert!(m.apply(&x).iter().zip(&b).all(|(a, c)| a == c));
            // solvability criterion: rank([m|b]) == rank(m)
            let mut bm = RatMatrix::zeros(m.rows, 1);
            bm.set_col(0, &b);
            assert_eq!(rank(&m.hstack(&bm)), rank(&m));
            // every kernel column really solves m v = 0
            for j in 0..ker.cols {
                assert!(m.apply(&ker.col(j)).iter().all(|v| v.is_zero()));
            }
        }
    }

    #[test]
    fn solve_dimension_mismatch_is_an_error() {
        let m = RatMatrix::identity(2);
        assert!(solve_affine(&m, &[rat_int(1)]).is_err());
    }

    #[test]
    fn cokernel_projection() {
        // im = span{(1,1,0),(0,2,2)}; quotient is 1-dimensional
        let im = RatMatrix::from_int_rows(&[&[1, 0], &[1, 2], &[0, 2]]);
        let ck = cokernel(&im);
        assert_eq!(ck.dim, 1);
        // proj kills the image
        assert!(ck.proj.mul(&im).is_zero());
        // proj . section = identity on the quotient
        assert_eq!(ck.proj.mul(&ck.section), RatMatrix::identity(1));
    }

    #[test]
    fn rational_string_round_trip() {
        for s in ["3", "-7", "1/2", "-22/7", "0"] {
            let r = rat_from_str(s).unwrap();
            assert_eq!(rat_to_string(&r), s);
        }
        assert_eq!(rat_to_string(&rat_from_str("4/2").unwrap()), "2");
        assert!(rat_from_str("1/0").is_err());
    }

    #[test]
    fn bit_identical_reruns() {
        let mut rng = StdRng::seed_from_u64(5);
        let m = random_int_matrix(&mut rng, 6, 9, -9, 9);
        let a = rref(&m);
        let b = rref(&m);
        assert_eq!(a.mat, b.mat);
        assert_eq!(a.pivots, b.pivots);
    }
}
