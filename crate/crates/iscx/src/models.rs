//! Fixture spaces and synthetic pushforward models: cones, suspensions,
//! products, the minimal torus, a 9-vertex complex projective plane shipped
//! as data, and the sphere/torus bundle models driven by an Euler cocycle.

use crate::linalg::{rat_int, Rat, RatMatrix};
use crate::poset::{
    assign_strata, from_simplicial, simplex_id, Cell, PosetError, StratifiedPoset, Stratum,
};
use crate::sheaf::{
    cone, constant_complex, shift, tensor, truncate, CellSheaf, Carrier, Morphism, SheafComplex,
    SheafError, TruncSide,
};
use num_traits::Zero;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("euler data is not a cocycle: coboundary nonzero on `{0}`")]
    NotACocycle(String),
    #[error("model does not live on the singular stratum")]
    StratumMismatch,
    #[error(transparent)]
    Poset(#[from] PosetError),
    #[error(transparent)]
    Sheaf(#[from] SheafError),
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Boundary of the (k+1)-simplex: the minimal triangulated k-sphere.
pub fn boundary_simplex_sphere(k: usize) -> StratifiedPoset {
    let v = names("s", k + 2);
    let mut facets = Vec::new();
    for skip in 0..v.len() {
        facets.push(
            v.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| x.clone()).collect(),
        );
    }
    from_simplicial(&facets).unwrap()
}

/// Circle triangulated with n >= 3 vertices.
pub fn circle(n: usize) -> StratifiedPoset {
    assert!(n >= 3);
    let v = names("c", n);
    let facets: Vec<Vec<String>> =
        (0..n).map(|i| vec![v[i].clone(), v[(i + 1) % n].clone()]).collect();
    from_simplicial(&facets).unwrap()
}

/// The 7-vertex triangulation of the torus.
pub fn torus7() -> StratifiedPoset {
    let v = names("t", 7);
    let mut facets = Vec::new();
    for i in 0..7usize {
        facets.push(vec![v[i].clone(), v[(i + 1) % 7].clone(), v[(i + 3) % 7].clone()]);
        facets.push(vec![v[i].clone(), v[(i + 2) % 7].clone(), v[(i + 3) % 7].clone()]);
    }
    from_simplicial(&facets).unwrap()
}

fn simplicial_facets(p: &StratifiedPoset) -> Vec<Vec<String>> {
    (0..p.len())
        .filter(|&c| p.cofaces(c).is_empty())
        .map(|c| p.cells[c].id.split('.').map(String::from).collect())
        .collect()
}

/// Cone over a simplicial complex. The apex becomes the deepest stratum with
/// the given codimension (which must equal dim L + 1).
pub fn cone_space(
    l: &StratifiedPoset,
    apex: &str,
    apex_codim: i32,
) -> Result<StratifiedPoset, PosetError> {
    let d = l.dim() + 1;
    if apex_codim != d {
        return Err(PosetError::Invalid(format!(
            "apex codimension {apex_codim} does not match cone dimension {d}"
        )));
    }
    let mut facets = Vec::new();
    for f in simplicial_facets(l) {
        let mut g = f.clone();
        g.push(apex.to_string());
        facets.push(g);
    }
    let p = from_simplicial(&facets)?;
    let mut assignment: BTreeMap<String, String> =
        p.cells.iter().map(|c| (c.id.clone(), "top".to_string())).collect();
    assignment.insert(apex.to_string(), "apex".to_string());
    let mut codims = BTreeMap::new();
    codims.insert("top".to_string(), 0);
    codims.insert("apex".to_string(), apex_codim);
    assign_strata(&p, &assignment, &codims)
}

/// Simplicial suspension: two cones glued along the base.
pub fn suspension_space(l: &StratifiedPoset, north: &str, south: &str) -> StratifiedPoset {
    let mut facets = Vec::new();
    for f in simplicial_facets(l) {
        for apex in [north, south] {
            let mut g = f.clone();
            g.push(apex.to_string());
            facets.push(g);
        }
    }
    from_simplicial(&facets).unwrap()
}

/// Staircase triangulation of the product of two simplicial complexes.
/// Product strata combine names and add codimensions.
pub fn product_space(
    a: &StratifiedPoset,
    b: &StratifiedPoset,
) -> Result<StratifiedPoset, PosetError> {
    let pair_name = |u: &str, v: &str| format!("{u},{v}");
    let mut facets: Vec<Vec<String>> = Vec::new();
    for fa in simplicial_facets(a) {
        for fb in simplicial_facets(b) {
            let (k, l) = (fa.len() - 1, fb.len() - 1);
            // monotone lattice paths from (0,0) to (k,l)
            let mut stack = vec![vec![(0usize, 0usize)]];
            while let Some(path) = stack.pop() {
                let &(i, j) = path.last().unwrap();
                if i == k && j == l {
                    facets.push(
                        path.iter().map(|&(x, y)| pair_name(&fa[x], &fb[y])).collect(),
                    );
                    continue;
                }
                if i < k {
                    let mut p2 = path.clone();
                    p2.push((i + 1, j));
                    stack.push(p2);
                }
                if j < l {
                    let mut p2 = path.clone();
                    p2.push((i, j + 1));
                    stack.push(p2);
                }
            }
        }
    }
    facets.sort();
    facets.dedup();
    let p = from_simplicial(&facets)?;
    // stratum of a product simplex: combine the strata of its two supports
    let mut assignment = BTreeMap::new();
    let mut codims = BTreeMap::new();
    for c in &p.cells {
        let verts: Vec<(&str, &str)> = c
            .id
            .split('.')
            .map(|pv| pv.split_once(',').expect("product vertex name"))
            .collect();
        let mut ua: Vec<String> = verts.iter().map(|(u, _)| u.to_string()).collect();
        let mut ub: Vec<String> = verts.iter().map(|(_, v)| v.to_string()).collect();
        ua.sort();
        ua.dedup();
        ub.sort();
        ub.dedup();
        let ca = a.index_of(&simplex_id(&ua)).expect("support cell in first factor");
        let cb = b.index_of(&simplex_id(&ub)).expect("support cell in second factor");
        let sa = &a.strata[a.stratum_of[ca]];
        let sb = &b.strata[b.stratum_of[cb]];
        let name = format!("{}*{}", sa.name, sb.name);
        codims.insert(name.clone(), sa.codim + sb.codim);
        assignment.insert(c.id.clone(), name);
    }
    let incidence: Vec<(String, String, i8)> = p
        .incidence
        .iter()
        .map(|&(co, fa, s)| (p.cells[co].id.clone(), p.cells[fa].id.clone(), s))
        .collect();
    let strata: Vec<Stratum> =
        codims.iter().map(|(n, &c)| Stratum { name: n.clone(), codim: c }).collect();
    StratifiedPoset::new(p.cells.clone(), incidence, strata, &assignment)
}

/// Torus as a regular CW complex: the 2x2 grid quotient, 16 cells.
pub fn cw_torus_grid() -> StratifiedPoset {
    let mut cells = Vec::new();
    let mut inc: Vec<(String, String, i8)> = Vec::new();
    let v = |i: usize, j: usize| format!("v{}{}", i % 2, j % 2);
    let h = |i: usize, j: usize| format!("h{}{}", i % 2, j % 2); // v(i,j) -- v(i+1,j)
    let u = |i: usize, j: usize| format!("u{}{}", i % 2, j % 2); // v(i,j) -- v(i,j+1)
    let f = |i: usize, j: usize| format!("f{}{}", i % 2, j % 2);
    for i in 0..2 {
        for j in 0..2 {
            cells.push(Cell { id: v(i, j), dim: 0 });
            cells.push(Cell { id: h(i, j), dim: 1 });
            cells.push(Cell { id: u(i, j), dim: 1 });
            cells.push(Cell { id: f(i, j), dim: 2 });
            inc.push((h(i, j), v(i + 1, j), 1));
            inc.push((h(i, j), v(i, j), -1));
            inc.push((u(i, j), v(i, j + 1), 1));
            inc.push((u(i, j), v(i, j), -1));
            // boundary of f(i,j): h(i,j) + u(i+1,j) - h(i,j+1) - u(i,j)
            inc.push((f(i, j), h(i, j), 1));
            inc.push((f(i, j), u(i + 1, j), 1));
            inc.push((f(i, j), h(i, j + 1), -1));
            inc.push((f(i, j), u(i, j), -1));
        }
    }
    let strata = vec![Stratum { name: "top".into(), codim: 0 }];
    let assignment: BTreeMap<String, String> =
        cells.iter().map(|c| (c.id.clone(), "top".into())).collect();
    StratifiedPoset::new(cells, inc, strata, &assignment).unwrap()
}

/// Suspension of a regular CW complex, adding two apex vertices and a cone
/// cell over every cell from each apex.
pub fn cw_suspension(l: &StratifiedPoset, north: &str, south: &str) -> StratifiedPoset {
    let mut cells: Vec<Cell> = l.cells.clone();
    let mut inc: Vec<(String, String, i8)> = l
        .incidence
        .iter()
        .map(|&(co, fa, s)| (l.cells[co].id.clone(), l.cells[fa].id.clone(), s))
        .collect();
    for apex in [north, south] {
        cells.push(Cell { id: apex.to_string(), dim: 0 });
        for c in &l.cells {
            let cone_id = format!("{apex}*{}", c.id);
            cells.push(Cell { id: cone_id.clone(), dim: c.dim + 1 });
            // faces: the base cell, and cones over its faces (apex for vertices)
            inc.push((cone_id.clone(), c.id.clone(), 1));
            if c.dim == 0 {
                inc.push((cone_id.clone(), apex.to_string(), -1));
            } else {
                let ci = l.index_of(&c.id).unwrap();
                for &(fa, s) in l.faces(ci) {
                    inc.push((cone_id.clone(), format!("{apex}*{}", l.cells[fa].id), -s));
                }
            }
        }
    }
    let strata = vec![Stratum { name: "top".into(), codim: 0 }];
    let assignment: BTreeMap<String, String> =
        cells.iter().map(|c| (c.id.clone(), "top".into())).collect();
    StratifiedPoset::new(cells, inc, strata, &assignment).unwrap()
}

/// Product of two regular CW complexes, cells are pairs. Strata combine.
pub fn cw_product(a: &StratifiedPoset, b: &StratifiedPoset) -> StratifiedPoset {
    let id = |x: &str, y: &str| format!("{x}|{y}");
    let mut cells = Vec::new();
    let mut inc: Vec<(String, String, i8)> = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut codims = BTreeMap::new();
    for (ia, ca) in a.cells.iter().enumerate() {
        for (ib, cb) in b.cells.iter().enumerate() {
            cells.push(Cell { id: id(&ca.id, &cb.id), dim: ca.dim + cb.dim });
            let sa = &a.strata[a.stratum_of[ia]];
            let sb = &b.strata[b.stratum_of[ib]];
            let name = format!("{}*{}", sa.name, sb.name);
            codims.insert(name.clone(), sa.codim + sb.codim);
            assignment.insert(id(&ca.id, &cb.id), name);
            for &(fa, s) in a.faces(ia) {
                inc.push((id(&ca.id, &cb.id), id(&a.cells[fa].id, &cb.id), s));
            }
            let sign = if ca.dim % 2 == 0 { 1i8 } else { -1i8 };
            for &(fb, s) in b.faces(ib) {
                inc.push((id(&ca.id, &cb.id), id(&ca.id, &b.cells[fb].id), sign * s));
            }
        }
    }
    let strata: Vec<Stratum> =
        codims.iter().map(|(n, &c)| Stratum { name: n.clone(), codim: c }).collect();
    StratifiedPoset::new(cells, inc, strata, &assignment).unwrap()
}

/// The 9-vertex triangulation of the complex projective plane, shipped as a
/// facet list in `data/cp2_9.json`.
pub fn cp2_9() -> StratifiedPoset {
    let raw = include_str!("../data/cp2_9.json");
    let facets: Vec<Vec<String>> = serde_json::from_str(raw).expect("bundled facet list");
    from_simplicial(&facets).unwrap()
}

/// Minimal projective resolution of the rank-one constant sheaf on a closed
/// complex: one representable per cell, differential given by the signed
/// incidence. Evaluated at any cell it is the chain complex of that closed
/// cell, so the augmentation is a pointwise quasi-isomorphism.
pub fn constant_cell_resolution(
    p: &StratifiedPoset,
    cells: &[usize],
) -> (SheafComplex, Morphism) {
    let carrier = Carrier::new(p, cells.to_vec());
    let d = cells.iter().map(|&c| p.cells[c].dim).max().unwrap_or(0);
    // block layout per degree -k: cells of dimension k that are <= tau
    let mut terms = Vec::new();
    let mut diff: Vec<BTreeMap<usize, RatMatrix>> = Vec::new();
    let blocks = |k: i32, tau: usize| -> Vec<usize> {
        p.below(tau).iter().copied().filter(|&s| p.cells[s].dim == k).collect()
    };
    for t in -d..=0 {
        let k = -t;
        let mut stalk = BTreeMap::new();
        let mut res = BTreeMap::new();
        for &c in &carrier.cells {
            stalk.insert(c, blocks(k, c).len());
        }
        for &(x, y) in &carrier.covering {
            let bx = blocks(k, x);
            let by = blocks(k, y);
            let mut m = RatMatrix::zeros(by.len(), bx.len());
            for (xi, s) in bx.iter().enumerate() {
                let yi = by.iter().position(|t2| t2 == s).unwrap();
                m.set(yi, xi, Rat::one());
            }
            res.insert((x, y), m);
        }
        terms.push(CellSheaf { carrier: carrier.clone(), stalk, res });
    }
    for t in -d..0 {
        let k = -t;
        let mut dd = BTreeMap::new();
        for &c in &carrier.cells {
            let src = blocks(k, c);
            let tgt = blocks(k - 1, c);
            let mut m = RatMatrix::zeros(tgt.len(), src.len());
            for (si, &s) in src.iter().enumerate() {
                for &(fa, sign) in p.faces(s) {
                    if let Some(ti) = tgt.iter().position(|&t2| t2 == fa) {
                        m.set(ti, si, rat_int(sign as i64));
                    }
                }
            }
            if !m.is_zero() {
                dd.insert(c, m);
            }
        }
        diff.push(dd);
    }
    let complex = SheafComplex { carrier: carrier.clone(), lo: -d, terms, diff };
    let mut aug = Morphism::default();
    let target = constant_complex(p, cells.to_vec(), 0);
    for &c in &carrier.cells {
        let src = blocks(0, c);
        let mut m = RatMatrix::zeros(1, src.len());
        for i in 0..src.len() {
            m.set(0, i, Rat::one());
        }
        aug.set(0, c, m);
    }
    let _ = target;
    (complex, aug)
}

use num_traits::One;

/// Specification of a synthetic sphere-bundle pushforward model: the base,
/// the fiber sphere dimension, and a cellular Euler cocycle on (n+1)-cells.
pub struct BundleModelSpec {
    pub fiber_dim: usize,
    pub euler_cocycle: BTreeMap<String, Rat>,
}

fn validate_cocycle(
    p: &StratifiedPoset,
    n1: i32,
    z: &BTreeMap<String, Rat>,
) -> Result<BTreeMap<usize, Rat>, ModelError> {
    let mut by_cell: BTreeMap<usize, Rat> = BTreeMap::new();
    for (id, v) in z {
        let c = p
            .index_of(id)
            .ok_or_else(|| ModelError::Poset(PosetError::UnknownCell(id.clone())))?;
        if p.cells[c].dim != n1 {
            return Err(ModelError::Poset(PosetError::Invalid(format!(
                "cocycle value on `{id}` of dimension {}, expected {n1}",
                p.cells[c].dim
            ))));
        }
        by_cell.insert(c, v.clone());
    }
    // coboundary must vanish on every (n1+1)-cell
    for up in 0..p.len() {
        if p.cells[up].dim != n1 + 1 {
            continue;
        }
        let mut acc = Rat::zero();
        for &(fa, s) in p.faces(up) {
            if let Some(v) = by_cell.get(&fa) {
                acc += v * rat_int(s as i64);
            }
        }
        if !acc.is_zero() {
            return Err(ModelError::NotACocycle(p.cells[up].id.clone()));
        }
    }
    Ok(by_cell)
}

/// Synthetic pushforward of the constant sheaf along an n-sphere bundle over
/// a closed base: the cone over the chain-level Euler map built from the
/// supplied cocycle. Cohomology sheaves are rank-one constant in degrees 0
/// and n; the attaching data is the class of the cocycle.
pub fn sphere_bundle_pushforward(
    p: &StratifiedPoset,
    spec: &BundleModelSpec,
) -> Result<SheafComplex, ModelError> {
    let n = spec.fiber_dim as i32;
    let cells: Vec<usize> = (0..p.len()).collect();
    let z = validate_cocycle(p, n + 1, &spec.euler_cocycle)?;
    let (pres, _aug) = constant_cell_resolution(p, &cells);
    let q = constant_complex(p, cells.clone(), 0);
    // shift the resolution so its augmentation degree sits at n+1
    let a = shift(&pres, -(n + 1));
    // chain map a -> q: at degree 0, the blocks are the cocycle values
    let mut e = Morphism::default();
    for &c in &cells {
        let blocks: Vec<usize> = p
            .below(c)
            .iter()
            .copied()
            .filter(|&s| p.cells[s].dim == n + 1)
            .collect();
        if blocks.is_empty() {
            continue;
        }
        let mut m = RatMatrix::zeros(1, blocks.len());
        for (i, &s) in blocks.iter().enumerate() {
            if let Some(v) = z.get(&s) {
                m.set(0, i, v.clone());
            }
        }
        e.set(0, c, m);
    }
    let c = cone(p, &e, &a, &q)?;
    // trim the acyclic tail below degree 0
    let (k, _) = truncate(p, &c.cone, -1, TruncSide::Gt);
    Ok(k)
}

/// Pushforward model of a torus bundle: the tensor of two circle-bundle
/// models with the given Euler cocycles.
pub fn torus_bundle_pushforward(
    p: &StratifiedPoset,
    e1: &BTreeMap<String, Rat>,
    e2: &BTreeMap<String, Rat>,
) -> Result<SheafComplex, ModelError> {
    let k1 = sphere_bundle_pushforward(
        p,
        &BundleModelSpec { fiber_dim: 1, euler_cocycle: e1.clone() },
    )?;
    let k2 = sphere_bundle_pushforward(
        p,
        &BundleModelSpec { fiber_dim: 1, euler_cocycle: e2.clone() },
    )?;
    Ok(tensor(p, &k1, &k2)?)
}

/// A cocycle generating the top cohomology of a closed oriented complex:
/// value one on a single top cell (every top cochain is closed).
pub fn generator_cocycle(p: &StratifiedPoset, dim: i32) -> BTreeMap<String, Rat> {
    let c = (0..p.len())
        .find(|&c| p.cells[c].dim == dim)
        .expect("no cell of requested dimension");
    BTreeMap::from([(p.cells[c].id.clone(), Rat::one())])
}

/// A two-strata composite: a stratified space presented by its singular
/// stratum together with a pushforward model on it. Existence scans and
/// splitting analysis run directly on the stratum data.
pub struct TwoStrataModel {
    /// the singular stratum as a closed complex of its own
    pub stratum: StratifiedPoset,
    /// codimension of the stratum in the ambient space
    pub codim: i32,
    /// model of the pushforward of the constant sheaf restricted to the stratum
    pub model: SheafComplex,
}

/// Wraps a stratum-level model, checking that the model lives on the full
/// stratum complex.
pub fn attach_stratum_model(
    stratum: StratifiedPoset,
    codim: i32,
    model: SheafComplex,
) -> Result<TwoStrataModel, ModelError> {
    if model.carrier.cells != (0..stratum.len()).collect::<Vec<_>>() {
        return Err(ModelError::StratumMismatch);
    }
    if codim < 2 {
        return Err(ModelError::Poset(PosetError::Invalid(
            "two-strata composite needs codimension >= 2".into(),
        )));
    }
    Ok(TwoStrataModel { stratum, codim, model })
}

/// Direct sum of shifted rank-r constant sheaves: the split pushforward
/// models of the trivial-link regime.
pub fn formal_model(p: &StratifiedPoset, ranks: &[(i32, usize)]) -> SheafComplex {
    let cells: Vec<usize> = (0..p.len()).collect();
    let mut acc = SheafComplex::zero(&Carrier::new(p, cells.clone()));
    for &(deg, rank) in ranks {
        for _ in 0..rank {
            let one = constant_complex(p, cells.clone(), deg);
            acc = crate::sheaf::direct_sum(p, &acc, &one);
        }
    }
    acc
}

/// Random split pushforward model on a random small closed base.
pub fn random_formal_fixture<R: Rng>(rng: &mut R) -> (StratifiedPoset, SheafComplex) {
    let base = match rng.gen_range(0..4) {
        0 => circle(3),
        1 => circle(4),
        2 => boundary_simplex_sphere(1),
        _ => boundary_simplex_sphere(2),
    };
    let max_deg = rng.gen_range(1..=3);
    let mut ranks = Vec::new();
    ranks.push((0, 1usize));
    for d in 1..=max_deg {
        let r = rng.gen_range(0..=2);
        if r > 0 {
            ranks.push((d, r));
        }
    }
    let k = formal_model(&base, &ranks);
    (base, k)
}

/// Random bounded complex mixing formal parts with bundle-type cones, for
/// exercising split and non-split truncation triangles.
pub fn random_mixed_complex<R: Rng>(rng: &mut R) -> (StratifiedPoset, SheafComplex) {
    let base = match rng.gen_range(0..3) {
        0 => circle(3),
        1 => boundary_simplex_sphere(2),
        _ => circle(4),
    };
    let cells: Vec<usize> = (0..base.len()).collect();
    let d = base.dim();
    let mut k = constant_complex(&base, cells.clone(), 0);
    if d >= 1 && rng.gen_bool(0.7) {
        // bundle-type extension with a random top cocycle
        let n = rng.gen_range(1..=d) as usize;
        let mut z = BTreeMap::new();
        for c in 0..base.len() {
            if base.cells[c].dim == n as i32 + 1 && rng.gen_bool(0.5) {
                z.insert(base.cells[c].id.clone(), rat_int(rng.gen_range(-2..=2)));
            }
        }
        // project to an honest cocycle: top-degree cochains always qualify;
        // for lower degrees retry with zero when the coboundary fails
        let spec = BundleModelSpec { fiber_dim: n, euler_cocycle: z.clone() };
        match sphere_bundle_pushforward(&base, &spec) {
            Ok(model) => k = model,
            Err(_) => {
                let spec =
                    BundleModelSpec { fiber_dim: n, euler_cocycle: BTreeMap::new() };
                k = sphere_bundle_pushforward(&base, &spec).unwrap();
            }
        }
    }
    if rng.gen_bool(0.6) {
        let extra_deg = rng.gen_range(0..=2);
        let extra = formal_model(&base, &[(extra_deg, rng.gen_range(1..=2))]);
        k = crate::sheaf::direct_sum(&base, &k, &extra);
    }
    (base, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sheaf::{cohomology_sheaf, hyper_map, is_constant_rank_one, SectionModel};
    use std::collections::BTreeMap;

    #[test]
    fn cone_counts() {
        let c3 = circle(3);
        let cone3 = cone_space(&c3, "apex", 2).unwrap();
        assert_eq!(cone3.len(), 13);
        let s2 = boundary_simplex_sphere(2);
        let cone_s2 = cone_space(&s2, "apex", 3).unwrap();
        assert_eq!(cone_s2.len(), 29);
        let t7 = torus7();
        let cone_t7 = cone_space(&t7, "apex", 3).unwrap();
        assert_eq!(cone_t7.len(), 85);
        assert_eq!(cone_t7.singular_codims(), vec![3]);
    }

    #[test]
    fn product_euler_characteristics_multiply() {
        let c3 = circle(3);
        let prod = product_space(&c3, &c3).unwrap();
        assert_eq!(prod.euler_characteristic(), 0);
        // point x A = A
        let pt = from_simplicial(&[vec!["p".to_string()]]).unwrap();
        let pa = product_space(&pt, &c3).unwrap();
        assert_eq!(pa.len(), c3.len());
        assert_eq!(pa.euler_characteristic(), 0);
    }

    #[test]
    fn suspension_of_torus() {
        let t7 = torus7();
        let s = suspension_space(&t7, "na", "sb");
        assert_eq!(s.euler_characteristic(), 2);
        let k = constant_complex(&s, (0..s.len()).collect(), 0);
        let h = hyper_map(&s, &k, &(0..s.len()).collect::<Vec<_>>(), SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (2, 2), (3, 1)]));
    }

    #[test]
    fn cw_torus_is_a_torus() {
        let t = cw_torus_grid();
        assert_eq!(t.len(), 16);
        let k = constant_complex(&t, (0..t.len()).collect(), 0);
        let h = hyper_map(&t, &k, &(0..t.len()).collect::<Vec<_>>(), SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 2), (2, 1)]));
    }

    #[test]
    fn cw_suspension_and_product() {
        let t = cw_torus_grid();
        let st = cw_suspension(&t, "nn", "ss");
        assert_eq!(st.len(), 50);
        let k = constant_complex(&st, (0..st.len()).collect(), 0);
        let h =
            hyper_map(&st, &k, &(0..st.len()).collect::<Vec<_>>(), SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (2, 2), (3, 1)]));
        let c3 = circle(3);
        let prod = cw_product(&c3, &st);
        assert_eq!(prod.len(), 6 * 50);
        let k = constant_complex(&prod, (0..prod.len()).collect(), 0);
        let h = hyper_map(
            &prod,
            &k,
            &(0..prod.len()).collect::<Vec<_>>(),
            SectionModel::CellularClosed,
        );
        // S^1 x (suspension of T^2)
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 1), (2, 2), (3, 3), (4, 1)]));
    }

    #[test]
    fn constant_resolution_is_pointwise_exact() {
        let s2 = boundary_simplex_sphere(2);
        let cells: Vec<usize> = (0..s2.len()).collect();
        let (pres, aug) = constant_cell_resolution(&s2, &cells);
        pres.validate(&s2).unwrap();
        let q = constant_complex(&s2, cells.clone(), 0);
        aug.validate(&s2, &pres, &q).unwrap();
        for &c in &cells {
            let h = crate::functors::stalk_cohomology_dims(&pres, c);
            assert_eq!(h, BTreeMap::from([(0, 1)]), "cell {}", s2.cells[c].id);
        }
    }

    #[test]
    fn trivial_bundle_model_splits() {
        let s2 = boundary_simplex_sphere(2);
        let spec = BundleModelSpec { fiber_dim: 1, euler_cocycle: BTreeMap::new() };
        let k = sphere_bundle_pushforward(&s2, &spec).unwrap();
        k.validate(&s2).unwrap();
        let cells: Vec<usize> = (0..s2.len()).collect();
        for (deg, want) in [(0, 1usize), (1, 1)] {
            let h = cohomology_sheaf(&s2, &k, deg);
            assert!(is_constant_rank_one(&s2, &h, &cells), "degree {deg} rank {want}");
        }
        let h = hyper_map(&s2, &k, &cells, SectionModel::CellularClosed);
        // S^2 x S^1 cohomology
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 1), (2, 1), (3, 1)]));
    }

    #[test]
    fn hopf_model_total_cohomology_is_a_three_sphere() {
        let s2 = boundary_simplex_sphere(2);
        let z = generator_cocycle(&s2, 2);
        let spec = BundleModelSpec { fiber_dim: 1, euler_cocycle: z };
        let k = sphere_bundle_pushforward(&s2, &spec).unwrap();
        k.validate(&s2).unwrap();
        let cells: Vec<usize> = (0..s2.len()).collect();
        // cohomology sheaves rank one constant in degrees 0 and 1
        for deg in [0, 1] {
            let h = cohomology_sheaf(&s2, &k, deg);
            assert!(is_constant_rank_one(&s2, &h, &cells));
        }
        assert_eq!(cohomology_sheaf(&s2, &k, 2).total_dim(), 0);
        let h = hyper_map(&s2, &k, &cells, SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (3, 1)]));
    }

    #[test]
    fn torus_bundle_model_cohomology_sheaves() {
        let s2 = boundary_simplex_sphere(2);
        let z = generator_cocycle(&s2, 2);
        let k = torus_bundle_pushforward(&s2, &z, &z).unwrap();
        let cells: Vec<usize> = (0..s2.len()).collect();
        for (deg, rank) in [(0, 1usize), (1, 2), (2, 1)] {
            let h = cohomology_sheaf(&s2, &k, deg);
            assert_eq!(h.total_dim(), rank * 14, "degree {deg}");
        }
        // mixed: one trivial, one generator; total space is S^1 x S^3
        let zero = BTreeMap::new();
        let m = torus_bundle_pushforward(&s2, &zero, &z).unwrap();
        let h = hyper_map(&s2, &m, &cells, SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (1, 1), (3, 1), (4, 1)]));
    }

    #[test]
    fn cocycle_validation() {
        let s2 = boundary_simplex_sphere(2);
        // a 1-cochain that is not a cocycle
        let e = s2
            .cells
            .iter()
            .find(|c| c.dim == 1)
            .map(|c| c.id.clone())
            .unwrap();
        let z = BTreeMap::from([(e, rat_int(1))]);
        let spec = BundleModelSpec { fiber_dim: 0, euler_cocycle: z };
        assert!(matches!(
            sphere_bundle_pushforward(&s2, &spec),
            Err(ModelError::NotACocycle(_))
        ));
    }
}
