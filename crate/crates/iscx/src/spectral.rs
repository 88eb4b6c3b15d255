//! The hypercohomology spectral sequence of a sheaf complex, with explicit
//! pages and differentials, and the obstruction window scan.
//!
//! Pages are computed from the filtration of the total complex of the
//! sections double complex: representatives are carried as actual total
//! cochains, so every differential matrix is extracted, not just its rank.

use crate::linalg::RatMatrix;
use crate::poset::StratifiedPoset;
use crate::sheaf::{
    cellular_double_complex, chains_double_complex, is_down_closed, DoubleComplex, SheafComplex,
};
use crate::sparse::{
    echelon_of, homology_dims, reduce_mixed, sparse_kernel, Echelon, SparseComplex, SparseMat,
};
use num_traits::Zero;
use std::collections::BTreeMap;

/// One page of the spectral sequence: entry dimensions and the matrices of
/// the page differentials d_r : E_r^{p,q} -> E_r^{p+r, q-r+1}.
#[derive(Clone, Debug)]
pub struct SpectralPage {
    pub r: i32,
    pub entries: BTreeMap<(i32, i32), usize>,
    pub differentials: BTreeMap<(i32, i32), RatMatrix>,
}

impl SpectralPage {
    pub fn entry(&self, p: i32, q: i32) -> usize {
        self.entries.get(&(p, q)).copied().unwrap_or(0)
    }

    pub fn differential_rank(&self, p: i32, q: i32) -> usize {
        self.differentials.get(&(p, q)).map_or(0, crate::linalg::rank)
    }

    pub fn total_dim(&self) -> usize {
        self.entries.values().sum()
    }
}

#[derive(Debug)]
pub struct SpectralSequence {
    pub pages: Vec<SpectralPage>,
    /// first page index at which the sequence has stabilized
    pub stable_at: i32,
    /// limiting dimensions: hypercohomology per total degree
    pub hyper: BTreeMap<i32, usize>,
}

impl SpectralSequence {
    pub fn page(&self, r: i32) -> Option<&SpectralPage> {
        self.pages.iter().find(|p| p.r == r)
    }

    pub fn stable_page(&self) -> &SpectralPage {
        self.page(self.stable_at).expect("stable page present")
    }
}

struct Filtered {
    /// n -> ordered blocks (p, q, offset, dim), p ascending
    layout: BTreeMap<i32, Vec<(i32, i32, usize, usize)>>,
    total: SparseComplex,
    p_max: i32,
    z_cache: BTreeMap<(i32, i32, i32), SparseMat>,
}

impl Filtered {
    fn new(dc: &DoubleComplex) -> Filtered {
        let total = dc.total();
        let mut layout = BTreeMap::new();
        for n in (dc.p_lo + dc.q_lo)..=(dc.p_hi + dc.q_hi) {
            let mut blocks = Vec::new();
            let mut acc = 0usize;
            for pp in dc.p_lo..=dc.p_hi {
                let q = n - pp;
                if q < dc.q_lo || q > dc.q_hi {
                    continue;
                }
                let d = dc.dim(pp, q);
                blocks.push((pp, q, acc, d));
                acc += d;
            }
            layout.insert(n, blocks);
        }
        Filtered { layout, total, p_max: dc.p_hi, z_cache: BTreeMap::new() }
    }

    fn t_dim(&self, n: i32) -> usize {
        self.total.degree_index(n).map_or(0, |i| self.total.dims[i])
    }

    /// Row range of the block at filtration p within T^n.
    fn block_rows(&self, n: i32, p: i32) -> (usize, usize) {
        if let Some(blocks) = self.layout.get(&n) {
            for &(pp, _, off, d) in blocks {
                if pp == p {
                    return (off, off + d);
                }
            }
        }
        (0, 0)
    }

    /// Identity columns spanning F^a T^n.
    fn filtration_basis(&self, n: i32, a: i32) -> SparseMat {
        let dim = self.t_dim(n);
        let mut cols = Vec::new();
        if let Some(blocks) = self.layout.get(&n) {
            for &(pp, _, off, d) in blocks {
                if pp >= a {
                    for i in 0..d {
                        cols.push(vec![(off + i, crate::linalg::rat_int(1))]);
                    }
                }
            }
        }
        SparseMat { rows: dim, cols }
    }

    fn apply_d(&self, n: i32, basis: &SparseMat) -> SparseMat {
        match self.total.degree_index(n) {
            Some(i) if i < self.total.d.len() => self.total.d[i].mul(basis),
            _ => SparseMat::new(self.t_dim(n + 1), basis.ncols()),
        }
    }

    /// Basis of { x in F^a T^n : D x in F^t T^{n+1} }.
    fn z(&mut self, a: i32, n: i32, t: i32) -> SparseMat {
        let a = a.max(0);
        let t = t.min(self.p_max + 1).max(a);
        if let Some(b) = self.z_cache.get(&(a, n, t)) {
            return b.clone();
        }
        let basis = if t <= a {
            self.filtration_basis(n, a)
        } else {
            let prev = self.z(a, n, t - 1);
            // constrain the block at filtration t-1 of D x to vanish
            let (r0, r1) = self.block_rows(n + 1, t - 1);
            if r0 == r1 {
                prev
            } else {
                let image = self.apply_d(n, &prev).row_window(r0, r1);
                let ker = sparse_kernel(&image);
                prev.mul(&ker)
            }
        };
        self.z_cache.insert((a, n, t), basis.clone());
        basis
    }
}

struct PageEntry {
    reps: Echelon,
    denom: Echelon,
}

fn page_entry(f: &mut Filtered, r: i32, p: i32, q: i32) -> PageEntry {
    let n = p + q;
    let z_r = f.z(p, n, p + r);
    // denominator: Z_{r-1}^{p+1,q-1} + D Z_{r-1}^{p-r+1, q+r-2}
    let za = f.z(p + 1, n, p + r);
    let zb = f.z(p - r + 1, n - 1, p);
    let dzb = f.apply_d(n - 1, &zb);
    let mut denom = echelon_of(&za);
    for c in &dzb.cols {
        denom.absorb(c);
    }
    let mut reps = Echelon::default();
    for c in &z_r.cols {
        let (res, _) = reduce_mixed(&denom, &reps, c);
        if !res.is_empty() {
            reps.insert(res);
        }
    }
    PageEntry { reps, denom }
}

/// Which chain model feeds the double complex.
fn build_double(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
) -> DoubleComplex {
    if is_down_closed(p, cells) {
        cellular_double_complex(p, k, cells).1
    } else {
        chains_double_complex(p, k, cells).1
    }
}

/// Pages 2..=r_max of the spectral sequence of `k` over `cells`. When
/// `r_max` is None the bound is the degree spread plus the top cell
/// dimension plus one; the sequence always stabilizes within that range.
pub fn ss_pages(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
    r_max: Option<i32>,
) -> SpectralSequence {
    let dc = build_double(p, k, cells);
    let hyper_lo = dc.p_lo + dc.q_lo;
    let mut f = Filtered::new(&dc);
    let hdims: Vec<usize> = homology_dims(&f.total);
    let hyper: BTreeMap<i32, usize> = hdims
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0)
        .map(|(i, d)| (hyper_lo + i as i32, *d))
        .collect();
    let hyper_total: usize = hdims.iter().sum();
    let spread = (dc.q_hi - dc.q_lo) + (dc.p_hi - dc.p_lo) + 1;
    let r_stop = r_max.unwrap_or(spread.max(2));
    let mut pages = Vec::new();
    let mut stable_at = None;
    for r in 2..=r_stop.max(2) {
        let mut entries = BTreeMap::new();
        let mut cache: BTreeMap<(i32, i32), PageEntry> = BTreeMap::new();
        for pp in dc.p_lo..=dc.p_hi {
            for q in dc.q_lo..=dc.q_hi {
                let e = page_entry(&mut f, r, pp, q);
                if e.reps.dim() > 0 {
                    entries.insert((pp, q), e.reps.dim());
                }
                cache.insert((pp, q), e);
            }
        }
        let mut differentials = BTreeMap::new();
        for (&(pp, q), src) in &cache {
            if src.reps.dim() == 0 {
                continue;
            }
            let (tp, tq) = (pp + r, q - r + 1);
            let Some(tgt) = cache.get(&(tp, tq)) else { continue };
            if tgt.reps.dim() == 0 {
                continue;
            }
            let n = pp + q;
            let mut m = RatMatrix::zeros(tgt.reps.dim(), src.reps.dim());
            for (j, v) in src.reps.cols.iter().enumerate() {
                let w = match f.total.degree_index(n) {
                    Some(i) if i < f.total.d.len() => f.total.d[i].apply(v),
                    _ => Vec::new(),
                };
                let (res, coeffs) = reduce_mixed(&tgt.denom, &tgt.reps, &w);
                assert!(
                    res.is_empty(),
                    "page differential fell outside the target entry"
                );
                for (i, c) in coeffs.iter().enumerate() {
                    if !c.is_zero() {
                        m.set(i, j, c.clone());
                    }
                }
            }
            if !m.is_zero() {
                differentials.insert((pp, q), m);
            }
        }
        let page = SpectralPage { r, entries, differentials };
        let total = page.total_dim();
        pages.push(page);
        if stable_at.is_none() && total == hyper_total {
            stable_at = Some(r);
            if r_max.is_none() {
                break;
            }
        }
    }
    let stable_at = stable_at.unwrap_or_else(|| pages.last().map_or(2, |p| p.r));
    SpectralSequence { pages, stable_at, hyper }
}

/// Verifies the structural laws of the computed pages: d_r . d_r = 0, next
/// page dimensions equal ker/im of the previous differentials, and the
/// stable page dimensions sum to the hypercohomology. Used by tests and the
/// property suites.
pub fn check_page_laws(ss: &SpectralSequence) -> Result<(), String> {
    for w in ss.pages.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        let r = cur.r;
        // d_r composed with d_r vanishes wherever composable
        for (&(p, q), m1) in &cur.differentials {
            if let Some(m2) = cur.differentials.get(&(p + r, q - r + 1)) {
                if !m2.mul(m1).is_zero() {
                    return Err(format!("d_{r} . d_{r} nonzero at ({p},{q})"));
                }
            }
        }
        // entries of the next page equal ker/im dimensions
        let all_keys: Vec<(i32, i32)> = cur
            .entries
            .keys()
            .chain(next.entries.keys())
            .copied()
            .collect();
        for (p, q) in all_keys {
            let dim = cur.entry(p, q);
            let out_rank = cur.differential_rank(p, q);
            let in_rank = cur.differential_rank(p - r, q + r - 1);
            let expect = dim - out_rank - in_rank;
            if next.entry(p, q) != expect {
                return Err(format!(
                    "page {} entry ({p},{q}) = {}, expected {expect}",
                    next.r,
                    next.entry(p, q)
                ));
            }
        }
    }
    // convergence at the stable page
    let stable = ss.stable_page();
    let mut by_n: BTreeMap<i32, usize> = BTreeMap::new();
    for (&(p, q), &d) in &stable.entries {
        *by_n.entry(p + q).or_default() += d;
    }
    for (n, d) in &by_n {
        if ss.hyper.get(n).copied().unwrap_or(0) != *d {
            return Err(format!("stable page does not converge at degree {n}"));
        }
    }
    for (n, d) in &ss.hyper {
        if by_n.get(n).copied().unwrap_or(0) != *d {
            return Err(format!("hypercohomology missed at degree {n}"));
        }
    }
    // stable page differentials vanish
    if !stable.differentials.is_empty() {
        return Err("stable page carries a nonzero differential".into());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Clear,
    Obstructed,
}

/// A nonzero page differential inside the truncation window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub r: i32,
    pub p: i32,
    pub q: i32,
    pub rank: usize,
}

#[derive(Debug)]
pub struct ObstructionReport {
    pub verdict: Verdict,
    pub qbar: i32,
    pub witnesses: Vec<Witness>,
    pub ss: SpectralSequence,
}

/// Scans all pages (up to stabilization) for nonzero differentials
/// d_r^{p,q} with qbar < q <= qbar + r - 1. Any such differential rules out
/// a splitting of the truncation triangle at qbar.
pub fn obstruction_scan(
    p: &StratifiedPoset,
    k: &SheafComplex,
    cells: &[usize],
    qbar: i32,
) -> ObstructionReport {
    let ss = ss_pages(p, k, cells, None);
    let mut witnesses = Vec::new();
    for page in &ss.pages {
        for (&(pp, q), m) in &page.differentials {
            let rank = crate::linalg::rank(m);
            if rank == 0 {
                continue;
            }
            if q > qbar && q <= qbar + page.r - 1 {
                witnesses.push(Witness { r: page.r, p: pp, q, rank });
            }
        }
    }
    let verdict = if witnesses.is_empty() { Verdict::Clear } else { Verdict::Obstructed };
    ObstructionReport { verdict, qbar, witnesses, ss }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        boundary_simplex_sphere, generator_cocycle, sphere_bundle_pushforward,
        torus_bundle_pushforward, BundleModelSpec,
    };
    use crate::sheaf::{
        cohomology_sheaf, constant_complex, direct_sum, hyper_map, shift, SectionModel,
    };

    #[test]
    fn constant_sheaf_degenerates_in_one_row() {
        let p = boundary_simplex_sphere(2);
        let k = constant_complex(&p, (0..p.len()).collect(), 0);
        let cells: Vec<usize> = (0..p.len()).collect();
        let ss = ss_pages(&p, &k, &cells, None);
        check_page_laws(&ss).unwrap();
        let e2 = ss.page(2).unwrap();
        assert_eq!(e2.entries, BTreeMap::from([((0, 0), 1), ((2, 0), 1)]));
        assert!(e2.differentials.is_empty());
        assert_eq!(ss.stable_at, 2);
    }

    #[test]
    fn page_two_entries_are_cohomology_of_cohomology_sheaves() {
        // cross-check E_2 against hypercohomology of each cohomology sheaf
        let p = boundary_simplex_sphere(2);
        let z = generator_cocycle(&p, 2);
        let k = sphere_bundle_pushforward(
            &p,
            &BundleModelSpec { fiber_dim: 1, euler_cocycle: z },
        )
        .unwrap();
        let cells: Vec<usize> = (0..p.len()).collect();
        let ss = ss_pages(&p, &k, &cells, None);
        let e2 = ss.page(2).unwrap();
        for q in 0..=1 {
            let hq = cohomology_sheaf(&p, &k, q);
            let hq_complex = crate::sheaf::SheafComplex {
                carrier: hq.carrier.clone(),
                lo: 0,
                terms: vec![hq],
                diff: vec![],
            };
            let h = hyper_map(&p, &hq_complex, &cells, SectionModel::CellularClosed);
            for (pp, d) in h {
                assert_eq!(e2.entry(pp, q), d, "entry ({pp},{q})");
            }
        }
    }

    #[test]
    fn hopf_spectral_sequence() {
        let p = boundary_simplex_sphere(2);
        let z = generator_cocycle(&p, 2);
        let k = sphere_bundle_pushforward(
            &p,
            &BundleModelSpec { fiber_dim: 1, euler_cocycle: z },
        )
        .unwrap();
        let cells: Vec<usize> = (0..p.len()).collect();
        let ss = ss_pages(&p, &k, &cells, None);
        check_page_laws(&ss).unwrap();
        let e2 = ss.page(2).unwrap();
        // two rows, each the cohomology of the two-sphere
        assert_eq!(
            e2.entries,
            BTreeMap::from([((0, 0), 1), ((2, 0), 1), ((0, 1), 1), ((2, 1), 1)])
        );
        // the degree-two differential out of (0,1) is nonzero
        assert_eq!(e2.differential_rank(0, 1), 1);
        // limit is a three-sphere
        assert_eq!(ss.hyper, BTreeMap::from([(0, 1), (3, 1)]));
    }

    #[test]
    fn trivial_bundle_all_pages_degenerate() {
        let p = boundary_simplex_sphere(2);
        let k = sphere_bundle_pushforward(
            &p,
            &BundleModelSpec { fiber_dim: 1, euler_cocycle: BTreeMap::new() },
        )
        .unwrap();
        let cells: Vec<usize> = (0..p.len()).collect();
        let ss = ss_pages(&p, &k, &cells, None);
        check_page_laws(&ss).unwrap();
        for page in &ss.pages {
            assert!(page.differentials.is_empty());
        }
    }

    #[test]
    fn torus_bundle_spectral_sequence() {
        let p = boundary_simplex_sphere(2);
        let z = generator_cocycle(&p, 2);
        let k = torus_bundle_pushforward(&p, &z, &z).unwrap();
        let cells: Vec<usize> = (0..p.len()).collect();
        let ss = ss_pages(&p, &k, &cells, None);
        check_page_laws(&ss).unwrap();
        let e2 = ss.page(2).unwrap();
        assert_eq!(
            e2.entries,
            BTreeMap::from([
                ((0, 0), 1),
                ((2, 0), 1),
                ((0, 1), 2),
                ((2, 1), 2),
                ((0, 2), 1),
                ((2, 2), 1)
            ])
        );
        assert_eq!(e2.differential_rank(0, 1), 1);
        assert_eq!(e2.differential_rank(0, 2), 1);
        // the total space is a closed orientable four-manifold
        assert_eq!(
            ss.hyper,
            BTreeMap::from([(0, 1), (1, 1), (3, 1), (4, 1)])
        );
    }

    #[test]
    fn obstruction_windows() {
        let p = boundary_simplex_sphere(2);
        let z = generator_cocycle(&p, 2);
        let cells: Vec<usize> = (0..p.len()).collect();
        let hopf = sphere_bundle_pushforward(
            &p,
            &BundleModelSpec { fiber_dim: 1, euler_cocycle: z.clone() },
        )
        .unwrap();
        let rep = obstruction_scan(&p, &hopf, &cells, 0);
        assert_eq!(rep.verdict, Verdict::Obstructed);
        assert_eq!(rep.witnesses[0].r, 2);
        assert_eq!((rep.witnesses[0].p, rep.witnesses[0].q), (0, 1));
        // split model: clear
        let k = constant_complex(&p, cells.clone(), 0);
        let split = direct_sum(&p, &k, &shift(&k, -1));
        let rep = obstruction_scan(&p, &split, &cells, 0);
        assert_eq!(rep.verdict, Verdict::Clear);
        // torus bundle: obstructed in both windows
        let tb = torus_bundle_pushforward(&p, &z, &z).unwrap();
        for qbar in [0, 1] {
            let rep = obstruction_scan(&p, &tb, &cells, qbar);
            assert_eq!(rep.verdict, Verdict::Obstructed, "qbar {qbar}");
        }
    }

    #[test]
    fn chains_model_agrees_on_open_carrier() {
        // spectral sequence over an up-closed selection uses the chain model;
        // convergence must match the chain hypercohomology
        let c = crate::models::circle(3);
        let cone = crate::models::cone_space(&c, "apex", 2).unwrap();
        let u = cone.open_complement(2);
        let k = constant_complex(&cone, u.cells.clone(), 0);
        let ss = ss_pages(&cone, &k, &u.cells, None);
        check_page_laws(&ss).unwrap();
        // the punctured cone retracts onto its circle link
        assert_eq!(ss.hyper, BTreeMap::from([(0, 1), (1, 1)]));
    }
}
