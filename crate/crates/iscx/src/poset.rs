//! Face posets of regular cell complexes with stratifications.
//!
//! Cells carry stable string identifiers; every matrix downstream indexes
//! cells in sorted-identifier order so that repeated runs are bit-identical.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosetError {
    #[error("duplicate facet {0}")]
    DuplicateFacet(String),
    #[error("empty facet")]
    EmptyFacet,
    #[error("unknown cell `{0}`")]
    UnknownCell(String),
    #[error("signed boundary does not square to zero between `{0}` and `{1}`")]
    BoundarySquare(String, String),
    #[error("codimension-2 interval between `{0}` and `{1}` has {2} middle cells, expected 0 or 2")]
    IrregularInterval(String, String, usize),
    #[error("stratum `{0}` is not closed: cell `{1}` has face `{2}` in a shallower stratum")]
    StratumNotClosed(String, String, String),
    #[error("stratum `{0}` has forbidden codimension 1")]
    ForbiddenCodimensionOne(String),
    #[error("cell `{0}` has no stratum assignment")]
    MissingAssignment(String),
    #[error("stratum `{0}` referenced but not declared")]
    UndeclaredStratum(String),
    #[error("top stratum must have codimension 0")]
    BadTopStratum,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: String,
    pub dim: i32,
}

#[derive(Clone, Debug)]
pub struct Stratum {
    pub name: String,
    pub codim: i32,
}

/// Face poset of a regular cell complex, with signed codimension-1 incidence
/// and a stratum per cell. The strata of positive codimension, together with
/// everything below them, are closed subcomplexes.
#[derive(Clone, Debug)]
pub struct StratifiedPoset {
    pub cells: Vec<Cell>,
    /// (coface index, face index, sign)
    pub incidence: Vec<(usize, usize, i8)>,
    pub strata: Vec<Stratum>,
    /// cell index -> stratum index
    pub stratum_of: Vec<usize>,
    faces_of: Vec<Vec<(usize, i8)>>,
    cofaces_of: Vec<Vec<(usize, i8)>>,
    /// all faces (any codimension, reflexive) per cell, sorted
    below: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionKind {
    Open,
    Closed,
    Stratum,
}

/// A locally closed set of cells of a stratified poset.
#[derive(Clone, Debug)]
pub struct Selection {
    pub cells: Vec<usize>, // sorted
    pub kind: SelectionKind,
}

impl Selection {
    pub fn contains(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl StratifiedPoset {
    /// Assembles and fully validates a stratified poset from raw data.
    pub fn new(
        cells: Vec<Cell>,
        incidence_ids: Vec<(String, String, i8)>,
        strata: Vec<Stratum>,
        assignment: &BTreeMap<String, String>,
    ) -> Result<Self, PosetError> {
        let mut cells = cells;
        cells.sort_by(|a, b| a.id.cmp(&b.id));
        let index: BTreeMap<String, usize> =
            cells.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        if index.len() != cells.len() {
            return Err(PosetError::Invalid("duplicate cell identifiers".into()));
        }
        let mut incidence = Vec::with_capacity(incidence_ids.len());
        for (co, fa, s) in incidence_ids {
            let ci = *index.get(&co).ok_or_else(|| PosetError::UnknownCell(co.clone()))?;
            let fi = *index.get(&fa).ok_or_else(|| PosetError::UnknownCell(fa.clone()))?;
            if cells[ci].dim != cells[fi].dim + 1 {
                return Err(PosetError::Invalid(format!(
                    "incidence pair `{co}` > `{fa}` is not codimension 1"
                )));
            }
            if s != 1 && s != -1 {
                return Err(PosetError::Invalid(format!("sign {s} on `{co}` > `{fa}`")));
            }
            incidence.push((ci, fi, s));
        }
        incidence.sort();
        incidence.dedup();
        let stratum_index: BTreeMap<String, usize> =
            strata.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        let mut stratum_of = vec![usize::MAX; cells.len()];
        for (cell_id, st_name) in assignment {
            let ci = *index.get(cell_id).ok_or_else(|| PosetError::UnknownCell(cell_id.clone()))?;
            let si = *stratum_index
                .get(st_name)
                .ok_or_else(|| PosetError::UndeclaredStratum(st_name.clone()))?;
            stratum_of[ci] = si;
        }
        for (i, s) in stratum_of.iter().enumerate() {
            if *s == usize::MAX {
                return Err(PosetError::MissingAssignment(cells[i].id.clone()));
            }
        }

        let n = cells.len();
        let mut faces_of = vec![Vec::new(); n];
        let mut cofaces_of = vec![Vec::new(); n];
        for &(co, fa, s) in &incidence {
            faces_of[co].push((fa, s));
            cofaces_of[fa].push((co, s));
        }
        for v in faces_of.iter_mut().chain(cofaces_of.iter_mut()) {
            v.sort();
        }

        // transitive closure: all faces of each cell, by increasing dimension
        let mut below: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| cells[i].dim);
        for &i in &order {
            let mut s: BTreeSet<usize> = BTreeSet::new();
            s.insert(i);
            for &(f, _) in &faces_of[i] {
                s.extend(below[f].iter().copied());
            }
            below[i] = s;
        }
        let below: Vec<Vec<usize>> = below.into_iter().map(|s| s.into_iter().collect()).collect();

        let p = StratifiedPoset {
            cells,
            incidence,
            strata,
            stratum_of,
            faces_of,
            cofaces_of,
            below,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), PosetError> {
        // signed boundary squares to zero, and codim-2 intervals are diamonds
        let n = self.cells.len();
        for up in 0..n {
            let mut two_down: BTreeMap<usize, (i32, usize)> = BTreeMap::new();
            for &(mid, s1) in &self.faces_of[up] {
                for &(lo, s2) in &self.faces_of[mid] {
                    let e = two_down.entry(lo).or_insert((0, 0));
                    e.0 += (s1 * s2) as i32;
                    e.1 += 1;
                }
            }
            for (lo, (sum, count)) in two_down {
                if count != 2 {
                    return Err(PosetError::IrregularInterval(
                        self.cells[up].id.clone(),
                        self.cells[lo].id.clone(),
                        count,
                    ));
                }
                if sum != 0 {
                    return Err(PosetError::BoundarySquare(
                        self.cells[up].id.clone(),
                        self.cells[lo].id.clone(),
                    ));
                }
            }
        }
        // strata: no codim 1, top has codim 0, down-closure of depth
        for s in &self.strata {
            if s.codim == 1 {
                return Err(PosetError::ForbiddenCodimensionOne(s.name.clone()));
            }
            if s.codim < 0 {
                return Err(PosetError::Invalid(format!("negative codimension on `{}`", s.name)));
            }
        }
        let used: BTreeSet<usize> = self.stratum_of.iter().copied().collect();
        let has_top = used.iter().any(|&si| self.strata[si].codim == 0);
        if !has_top && !self.cells.is_empty() {
            return Err(PosetError::BadTopStratum);
        }
        // X_{d-k} := union of strata with codim >= k must be down-closed:
        // equivalently, faces never sit in a strictly shallower stratum.
        for &(co, fa, _) in &self.incidence {
            let c_cod = self.strata[self.stratum_of[co]].codim;
            let f_cod = self.strata[self.stratum_of[fa]].codim;
            if f_cod < c_cod {
                return Err(PosetError::StratumNotClosed(
                    self.strata[self.stratum_of[co]].name.clone(),
                    self.cells[co].id.clone(),
                    self.cells[fa].id.clone(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn dim(&self) -> i32 {
        self.cells.iter().map(|c| c.dim).max().unwrap_or(0)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cells.binary_search_by(|c| c.id.as_str().cmp(id)).ok()
    }

    pub fn faces(&self, c: usize) -> &[(usize, i8)] {
        &self.faces_of[c]
    }

    pub fn cofaces(&self, c: usize) -> &[(usize, i8)] {
        &self.cofaces_of[c]
    }

    /// All faces of `c` including `c`, sorted by index.
    pub fn below(&self, c: usize) -> &[usize] {
        &self.below[c]
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.below[b].binary_search(&a).is_ok()
    }

    pub fn codim_of_cell(&self, c: usize) -> i32 {
        self.strata[self.stratum_of[c]].codim
    }

    /// Sorted list of nonempty singular codimensions (>= 2).
    pub fn singular_codims(&self) -> Vec<i32> {
        let mut v: BTreeSet<i32> =
            self.stratum_of.iter().map(|&s| self.strata[s].codim).filter(|&k| k >= 2).collect();
        v.remove(&0);
        v.into_iter().collect()
    }

    pub fn full_selection(&self) -> Selection {
        Selection { cells: (0..self.len()).collect(), kind: SelectionKind::Closed }
    }

    /// U_k = cells whose stratum has codimension < k; up-closed.
    pub fn open_complement(&self, k: i32) -> Selection {
        let cells =
            (0..self.len()).filter(|&c| self.codim_of_cell(c) < k).collect();
        Selection { cells, kind: SelectionKind::Open }
    }

    /// Cells of the strata with codimension exactly k.
    pub fn stratum_selection(&self, k: i32) -> Selection {
        let cells = (0..self.len()).filter(|&c| self.codim_of_cell(c) == k).collect();
        Selection { cells, kind: SelectionKind::Stratum }
    }

    /// {tau in within : tau >= sigma}, sorted.
    pub fn star_subposet(&self, sigma: usize, within: &Selection) -> Vec<usize> {
        within.cells.iter().copied().filter(|&t| self.leq(sigma, t)).collect()
    }

    /// Covering pairs (face, coface) of the subposet induced on `cells`:
    /// comparable pairs with no intermediate cell inside the subset.
    pub fn covering_pairs_within(&self, cells: &[usize]) -> Vec<(usize, usize)> {
        let inside = |c: usize| cells.binary_search(&c).is_ok();
        let mut out = Vec::new();
        for &b in cells {
            for &a in cells {
                if a == b || !self.leq(a, b) {
                    continue;
                }
                let has_mid = self
                    .below(b)
                    .iter()
                    .any(|&m| m != a && m != b && inside(m) && self.leq(a, m));
                if !has_mid {
                    out.push((a, b));
                }
            }
        }
        out.sort();
        out
    }

    /// Strictly increasing chains inside `cells`, grouped by length
    /// (chains[k] = chains with k+1 elements).
    pub fn chains_within(&self, cells: &[usize]) -> Vec<Vec<Vec<usize>>> {
        let mut by_len: Vec<Vec<Vec<usize>>> = vec![cells.iter().map(|&c| vec![c]).collect()];
        loop {
            let last = by_len.last().unwrap();
            let mut next = Vec::new();
            for ch in last {
                let top = *ch.last().unwrap();
                for &c in cells {
                    if c != top && self.leq(top, c) {
                        let mut e = ch.clone();
                        e.push(c);
                        next.push(e);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort();
            by_len.push(next);
        }
        by_len
    }

    /// Connected components of the comparability graph on `cells`.
    pub fn components_within(&self, cells: &[usize]) -> Vec<Vec<usize>> {
        let mut comp: BTreeMap<usize, usize> = BTreeMap::new();
        fn find(comp: &mut BTreeMap<usize, usize>, mut x: usize) -> usize {
            while comp[&x] != x {
                let next = comp[&comp[&x]];
                comp.insert(x, next);
                x = next;
            }
            x
        }
        for &c in cells {
            comp.insert(c, c);
        }
        for &b in cells {
            for &a in cells {
                if a < b && (self.leq(a, b) || self.leq(b, a)) {
                    let ra = find(&mut comp, a);
                    let rb = find(&mut comp, b);
                    if ra != rb {
                        comp.insert(ra, rb);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &c in cells {
            let r = find(&mut comp, c);
            groups.entry(r).or_default().push(c);
        }
        groups.into_values().collect()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.cells.iter().map(|c| if c.dim % 2 == 0 { 1i64 } else { -1i64 }).sum()
    }
}

/// Canonical id for a simplex: sorted vertex names joined by `.`.
pub fn simplex_id(verts: &[String]) -> String {
    let mut v = verts.to_vec();
    v.sort();
    v.join(".")
}

/// Builds the face poset of a simplicial complex from its facet list.
/// Incidence signs come from the ascending vertex orientation. Everything is
/// placed in a single stratum named `top`.
pub fn from_simplicial(facets: &[Vec<String>]) -> Result<StratifiedPoset, PosetError> {
    if facets.is_empty() {
        return Err(PosetError::EmptyFacet);
    }
    let mut seen = BTreeSet::new();
    for f in facets {
        if f.is_empty() {
            return Err(PosetError::EmptyFacet);
        }
        let id = simplex_id(f);
        if !seen.insert(id.clone()) {
            return Err(PosetError::DuplicateFacet(id));
        }
    }
    // enumerate all nonempty subsets of each facet
    let mut simplices: BTreeSet<Vec<String>> = BTreeSet::new();
    for f in facets {
        let mut v = f.clone();
        v.sort();
        v.dedup();
        let n = v.len();
        for mask in 1..(1u32 << n) {
            let sub: Vec<String> =
                (0..n).filter(|i| mask & (1 << i) != 0).map(|i| v[i].clone()).collect();
            simplices.insert(sub);
        }
    }
    let cells: Vec<Cell> = simplices
        .iter()
        .map(|v| Cell { id: v.join("."), dim: v.len() as i32 - 1 })
        .collect();
    let mut incidence = Vec::new();
    for v in &simplices {
        if v.len() < 2 {
            continue;
        }
        let co = v.join(".");
        for i in 0..v.len() {
            let face: Vec<String> =
                v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()).collect();
            let sign = if i % 2 == 0 { 1 } else { -1 };
            incidence.push((co.clone(), face.join("."), sign));
        }
    }
    let strata = vec![Stratum { name: "top".into(), codim: 0 }];
    let assignment: BTreeMap<String, String> =
        cells.iter().map(|c| (c.id.clone(), "top".to_string())).collect();
    StratifiedPoset::new(cells, incidence, strata, &assignment)
}

/// Re-stratifies a poset: `assignment` maps every cell id to a stratum name,
/// `codims` gives each stratum's codimension. Validation rejects strata whose
/// depth-union is not down-closed and any codimension-1 stratum.
pub fn assign_strata(
    p: &StratifiedPoset,
    assignment: &BTreeMap<String, String>,
    codims: &BTreeMap<String, i32>,
) -> Result<StratifiedPoset, PosetError> {
    let strata: Vec<Stratum> =
        codims.iter().map(|(n, &c)| Stratum { name: n.clone(), codim: c }).collect();
    let incidence_ids: Vec<(String, String, i8)> = p
        .incidence
        .iter()
        .map(|&(co, fa, s)| (p.cells[co].id.clone(), p.cells[fa].id.clone(), s))
        .collect();
    StratifiedPoset::new(p.cells.clone(), incidence_ids, strata, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn verts(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn boundary_delta3() -> StratifiedPoset {
        from_simplicial(&[
            verts(&["a", "b", "c"]),
            verts(&["a", "b", "d"]),
            verts(&["a", "c", "d"]),
            verts(&["b", "c", "d"]),
        ])
        .unwrap()
    }

    #[test]
    fn boundary_of_3_simplex_counts() {
        let p = boundary_delta3();
        assert_eq!(p.len(), 14);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.euler_characteristic(), 2);
    }

    #[test]
    fn three_cycle_circle() {
        let p = from_simplicial(&[verts(&["a", "b"]), verts(&["b", "c"]), verts(&["a", "c"])])
            .unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.euler_characteristic(), 0);
    }

    #[test]
    fn duplicate_facet_rejected() {
        let r = from_simplicial(&[verts(&["a", "b"]), verts(&["b", "a"])]);
        assert!(matches!(r, Err(PosetError::DuplicateFacet(_))));
    }

    #[test]
    fn stratum_closure_violation_detected() {
        let p = boundary_delta3();
        // mark one triangle singular without its edges
        let mut assignment: BTreeMap<String, String> =
            p.cells.iter().map(|c| (c.id.clone(), "top".into())).collect();
        assignment.insert("a.b.c".into(), "sing".into());
        let mut codims = BTreeMap::new();
        codims.insert("top".into(), 0);
        codims.insert("sing".into(), 2);
        let r = assign_strata(&p, &assignment, &codims);
        assert!(matches!(r, Err(PosetError::StratumNotClosed(..))));
    }

    #[test]
    fn codim_one_stratum_rejected() {
        let p = from_simplicial(&[verts(&["a", "b", "c"])]).unwrap();
        let mut assignment: BTreeMap<String, String> =
            p.cells.iter().map(|c| (c.id.clone(), "top".into())).collect();
        assignment.insert("a".into(), "sing".into());
        let mut codims = BTreeMap::new();
        codims.insert("top".into(), 0);
        codims.insert("sing".into(), 1);
        let r = assign_strata(&p, &assignment, &codims);
        assert!(matches!(r, Err(PosetError::ForbiddenCodimensionOne(_))));
    }

    #[test]
    fn open_complements_are_nested_and_up_closed() {
        let p = boundary_delta3();
        let d = p.dim();
        let mut prev = Vec::new();
        for k in 2..=(d + 1) {
            let u = p.open_complement(k);
            for &c in &prev {
                assert!(u.contains(c));
            }
            // up-closed
            for &c in &u.cells {
                for &(cof, _) in p.cofaces(c) {
                    assert!(u.contains(cof));
                }
            }
            prev = u.cells.clone();
        }
        assert_eq!(p.open_complement(d + 1).len(), p.len());
    }

    #[test]
    fn star_subposet_interval() {
        // interval v -- e -- w
        let p = from_simplicial(&[verts(&["v", "w"])]).unwrap();
        let v = p.index_of("v").unwrap();
        let e = p.index_of("v.w").unwrap();
        let within = Selection { cells: vec![e], kind: SelectionKind::Open };
        assert_eq!(p.star_subposet(v, &within), vec![e]);
    }

    #[test]
    fn chains_are_graded_by_length() {
        let p = boundary_delta3();
        let all = p.full_selection();
        let chains = p.chains_within(&all.cells);
        assert_eq!(chains[0].len(), 14);
        assert_eq!(chains[1].len(), 36);
        assert_eq!(chains[2].len(), 24);
        assert_eq!(chains.len(), 3);
    }
}
