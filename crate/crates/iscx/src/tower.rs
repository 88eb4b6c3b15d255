//! Perversities, the splitting analysis of truncation triangles, and the
//! inductive construction of intersection-type complexes.
//!
//! The step at a singular stratum truncates the stratum restriction of the
//! pushed-forward complex; whether the construction can continue is decided
//! by an exact derived-Hom computation, and the family of continuations is
//! an affine space over the degree-zero Hom of the truncation pieces.

use crate::linalg::{rank, rat_int, solve_affine, Rat, RatMatrix};
use crate::poset::{Selection, SelectionKind, StratifiedPoset};
use crate::sheaf::{
    cohomology_sheaf_data, cone, constant_complex, direct_sum, hyper_induced_map, shift,
    truncate, InducedMap, Morphism, SectionModel, SheafComplex, TruncSide,
};
use crate::functors::{
    bar_resolution, derived_hom, derived_pushforward_open, extend_by_zero_closed,
    pushforward_unit, restrict, stalk_cohomology_dims, BarResolution, HomClass, HomComplex,
};
use crate::sparse::{sv_from_dense, SparseMat};
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TowerError {
    #[error("no continuation past codimension {codim}: the splitting obstruction is nonzero (Ext^1 dimension {ext1_dim})")]
    ObstructionNonzero { codim: i32, ext1_dim: usize, witness: Vec<Rat> },
    #[error("unknown perversity name `{0}`")]
    UnknownPerversity(String),
    #[error("invalid perversity: {0}")]
    InvalidPerversity(String),
    #[error(transparent)]
    Sheaf(#[from] crate::sheaf::SheafError),
    #[error("{0}")]
    Invalid(String),
}

/// Integer map on codimensions 2..=d_max with unit growth steps and value
/// zero at two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Perversity {
    values: BTreeMap<i32, i32>,
}

impl Perversity {
    pub fn new(values: BTreeMap<i32, i32>) -> Result<Self, TowerError> {
        let p = Perversity { values };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), TowerError> {
        let Some((&k0, _)) = self.values.first_key_value() else {
            return Ok(());
        };
        if k0 != 2 {
            return Err(TowerError::InvalidPerversity("values must start at codimension 2".into()));
        }
        if self.values[&2] != 0 {
            return Err(TowerError::InvalidPerversity("value at codimension 2 must be 0".into()));
        }
        let mut prev = None;
        for (&k, &v) in &self.values {
            if v < 0 {
                return Err(TowerError::InvalidPerversity(format!("negative value at {k}")));
            }
            if let Some((pk, pv)) = prev {
                if k != pk + 1 {
                    return Err(TowerError::InvalidPerversity(format!("gap before {k}")));
                }
                if v < pv || v > pv + 1 {
                    return Err(TowerError::InvalidPerversity(format!(
                        "growth violated between {pk} and {k}"
                    )));
                }
            }
            prev = Some((k, v));
        }
        Ok(())
    }

    pub fn standard(name: &str, d_max: i32) -> Result<Self, TowerError> {
        if d_max < 2 {
            return Err(TowerError::InvalidPerversity("d_max must be at least 2".into()));
        }
        let f: fn(i32) -> i32 = match name {
            "zero" => |_| 0,
            "total" => |k| k - 2,
            "lower-middle" => |k| k / 2 - 1,
            "upper-middle" => |k| (k + 1) / 2 - 1,
            other => return Err(TowerError::UnknownPerversity(other.to_string())),
        };
        let values = (2..=d_max).map(|k| (k, f(k))).collect();
        Perversity::new(values)
    }

    pub fn value(&self, k: i32) -> i32 {
        self.values.get(&k).copied().unwrap_or_else(|| {
            // extend by the growth rule past the stored range when queried
            let (&kmax, &vmax) = self.values.last_key_value().expect("nonempty perversity");
            assert!(k >= 2, "perversity queried below codimension 2");
            if k > kmax { vmax } else { 0 }
        })
    }

    pub fn d_max(&self) -> i32 {
        self.values.last_key_value().map(|(&k, _)| k).unwrap_or(2)
    }

    /// Complementary perversity: k - 2 minus this one.
    pub fn complement(&self) -> Perversity {
        let values = self.values.iter().map(|(&k, &v)| (k, k - 2 - v)).collect();
        Perversity::new(values).expect("complement of a valid perversity is valid")
    }

    pub fn values(&self) -> &BTreeMap<i32, i32> {
        &self.values
    }
}

/// Parses `zero|total|lower-middle|upper-middle` or explicit `k:v,k:v` data.
pub fn parse_perversity(s: &str, d_max: i32) -> Result<Perversity, TowerError> {
    if s.contains(':') {
        let mut values = BTreeMap::new();
        for part in s.split(',') {
            let (k, v) = part
                .split_once(':')
                .ok_or_else(|| TowerError::InvalidPerversity(format!("bad entry `{part}`")))?;
            let k: i32 = k
                .trim()
                .parse()
                .map_err(|_| TowerError::InvalidPerversity(format!("bad codimension `{k}`")))?;
            let v: i32 = v
                .trim()
                .parse()
                .map_err(|_| TowerError::InvalidPerversity(format!("bad value `{v}`")))?;
            values.insert(k, v);
        }
        Perversity::new(values)
    } else {
        Perversity::standard(s, d_max.max(2))
    }
}

/// The four equivalent split conditions, evaluated independently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitConditions {
    pub retraction_exists: bool,
    pub section_exists: bool,
    pub sum_decomposition: bool,
    pub connecting_class_zero: bool,
}

impl SplitConditions {
    pub fn agree(&self) -> bool {
        let v = self.retraction_exists;
        self.section_exists == v && self.sum_decomposition == v && self.connecting_class_zero == v
    }
}

/// Splitting analysis of the truncation triangle of `b` at `qbar`.
pub struct SplittingData {
    pub qbar: i32,
    pub tau_le: SheafComplex,
    pub f: Morphism,
    pub tau_gt: SheafComplex,
    pub g: Morphism,
    pub split: bool,
    pub ext1_dim: usize,
    /// coordinates of the connecting class in the Ext^1 basis (zero iff split)
    pub obstruction_class: Vec<Rat>,
    pub linear_part_dim: usize,
    /// a retraction of f, when split, as a class out of the bar resolution of b
    pub retraction: Option<HomClass>,
    /// directions of the affine family of retractions, pulled back to bar(b)
    pub directions: Vec<HomClass>,
    pub conditions: SplitConditions,
    pub bar: BarResolution,
    pub hom_b_le: HomComplex,
}

/// Identity-like class: the augmentation of a bar resolution, viewed as a
/// degree-zero Hom class into the resolved complex.
fn augmentation_class(bar_data: &crate::functors::BarData, a: &SheafComplex) -> HomClass {
    let mut blocks = BTreeMap::new();
    for (t, gens) in &bar_data.gens {
        for (gi, g) in gens.iter().enumerate() {
            if g.chain.len() == 1 {
                let d = a.stalk_dim(g.j, g.bottom());
                if d > 0 {
                    blocks.insert((*t, gi), RatMatrix::identity(d));
                }
            }
        }
    }
    HomClass { n: 0, blocks }
}

/// Solve for coefficients expressing `target` in the image of the map that
/// sends H^0 classes of `hom_src` through `transform` into `hom_tgt`.
fn solve_postimage(
    hom_src: &HomComplex,
    hom_tgt: &HomComplex,
    transform: impl Fn(&HomClass) -> HomClass,
    target_coords: &[Rat],
    a_src: &SheafComplex,
    b_src: &SheafComplex,
) -> Option<Vec<Rat>> {
    let d = hom_src.hom_dim(0);
    let mut m = RatMatrix::zeros(target_coords.len(), d);
    for j in 0..d {
        let rep = hom_src.rep_class(0, j, a_src, b_src);
        let img = transform(&rep);
        let coords = hom_tgt.class_coords(&img);
        for (i, c) in coords.iter().enumerate() {
            if !c.is_zero() {
                m.set(i, j, c.clone());
            }
        }
    }
    let (sol, _) = solve_affine(&m, target_coords).ok()?;
    sol
}

pub fn splitting_data(
    p: &StratifiedPoset,
    b: &SheafComplex,
    qbar: i32,
) -> Result<SplittingData, TowerError> {
    let (tau_le, f) = truncate(p, b, qbar, TruncSide::Le);
    let (tau_gt, g) = truncate(p, b, qbar, TruncSide::Gt);
    let bar = bar_resolution(p, b);
    let hom_b_le = derived_hom(p, b, &tau_le);

    if tau_gt.total_dim() == 0 {
        // nothing above the cut: the identity is the unique forced choice
        let lambda = augmentation_class(&bar.data, b);
        return Ok(SplittingData {
            qbar,
            tau_le,
            f,
            tau_gt,
            g,
            split: true,
            ext1_dim: 0,
            obstruction_class: vec![],
            linear_part_dim: 0,
            retraction: Some(lambda),
            directions: vec![],
            conditions: SplitConditions {
                retraction_exists: true,
                section_exists: true,
                sum_decomposition: true,
                connecting_class_zero: true,
            },
            bar,
            hom_b_le,
        });
    }

    let bar_le = crate::functors::BarData::build(p, &tau_le);
    let bar_gt = crate::functors::BarData::build(p, &tau_gt);
    let hom_le_le = derived_hom(p, &tau_le, &tau_le);
    let hom_gt_le = derived_hom(p, &tau_gt, &tau_le);
    let hom_gt_b = derived_hom(p, &tau_gt, b);
    let hom_gt_gt = derived_hom(p, &tau_gt, &tau_gt);
    let tau_le_sh = shift(&tau_le, 1);
    let hom_gt_le1 = derived_hom(p, &tau_gt, &tau_le_sh);
    let ext1_dim = hom_gt_le1.hom_dim(0);

    // (1) retraction of f: solve lambda . f = id in degree-zero Hom classes
    let id_le = augmentation_class(&bar_le, &tau_le);
    let id_le_coords = hom_le_le.class_coords(&id_le);
    let lambda_coords = solve_postimage(
        &hom_b_le,
        &hom_le_le,
        |cls| cls.pullback(&bar_le, &tau_le, b, &f, &hom_b_le.bar),
        &id_le_coords,
        b,
        &tau_le,
    );
    let retraction = lambda_coords.map(|coords| {
        let mut acc = HomClass::zero(0);
        for (j, c) in coords.iter().enumerate() {
            if !c.is_zero() {
                acc = acc.add_scaled(&hom_b_le.rep_class(0, j, b, &tau_le), c);
            }
        }
        acc
    });
    let retraction_exists = retraction.is_some();

    // (2) section of g: solve g . s = id in degree-zero Hom classes
    let id_gt = augmentation_class(&bar_gt, &tau_gt);
    let id_gt_coords = hom_gt_gt.class_coords(&id_gt);
    let section_exists = solve_postimage(
        &hom_gt_b,
        &hom_gt_gt,
        |cls| cls.postcompose(&hom_gt_b.bar, b, &tau_gt, &g),
        &id_gt_coords,
        &tau_gt,
        b,
    )
    .is_some();

    // (4) connecting class: lift the identity of tau_gt through the cone of f
    let cone_f = cone(p, &f, &tau_le, b)?;
    // c : cone(f) -> tau_gt, components g on the b part
    let mut c_map = Morphism::default();
    for n in cone_f.cone.degrees() {
        for &cell in &cone_f.cone.carrier.cells {
            let a1 = tau_le.stalk_dim(n + 1, cell);
            let b0 = b.stalk_dim(n, cell);
            let rows = tau_gt.stalk_dim(n, cell);
            if rows == 0 || a1 + b0 == 0 {
                continue;
            }
            let mut m = RatMatrix::zeros(rows, a1 + b0);
            let gc = g.component(b, &tau_gt, n, cell);
            for i in 0..rows {
                for j in 0..b0 {
                    if !gc.get(i, j).is_zero() {
                        m.set(i, a1 + j, gc.get(i, j).clone());
                    }
                }
            }
            c_map.set(n, cell, m);
        }
    }
    let hom_gt_cone = derived_hom(p, &tau_gt, &cone_f.cone);
    let lift = lift_through_quasi_iso(
        p,
        &hom_gt_cone,
        &hom_gt_gt,
        &tau_gt,
        &cone_f.cone,
        &c_map,
        &id_gt,
    );
    let u = lift.expect("lifting through the cone quasi-isomorphism always succeeds");
    // project to tau_le[1]: cone(f)^n = tau_le^{n+1} (+) b^n
    let mut proj = Morphism::default();
    for n in cone_f.cone.degrees() {
        for &cell in &cone_f.cone.carrier.cells {
            let a1 = tau_le.stalk_dim(n + 1, cell);
            let b0 = b.stalk_dim(n, cell);
            if a1 == 0 {
                continue;
            }
            let mut m = RatMatrix::zeros(a1, a1 + b0);
            for i in 0..a1 {
                m.set(i, i, Rat::one());
            }
            proj.set(n, cell, m);
        }
    }
    let phi = u.postcompose(&hom_gt_cone.bar, &cone_f.cone, &tau_le_sh, &proj);
    let obstruction_class = hom_gt_le1.class_coords(&phi);
    let connecting_class_zero = obstruction_class.iter().all(|c| c.is_zero());

    // (3) direct sum decomposition on cohomology sheaves, by candidate maps
    let sum_decomposition = sum_decomposition_exists(
        p,
        b,
        &tau_le,
        &tau_gt,
        &g,
        &hom_b_le,
        retraction.as_ref(),
        &bar,
    );

    let conditions = SplitConditions {
        retraction_exists,
        section_exists,
        sum_decomposition,
        connecting_class_zero,
    };

    // linear part and its realization as directions on bar(b)
    let linear_part_dim = hom_gt_le.hom_dim(0);
    let mut directions = Vec::new();
    for j in 0..linear_part_dim {
        let mu = hom_gt_le.rep_class(0, j, &tau_gt, &tau_le);
        let dir = mu.pullback(&hom_b_le.bar, b, &tau_gt, &g, &hom_gt_le.bar);
        directions.push(dir);
    }

    Ok(SplittingData {
        qbar,
        tau_le,
        f,
        tau_gt,
        g,
        split: retraction_exists,
        ext1_dim,
        obstruction_class,
        linear_part_dim,
        retraction,
        directions,
        conditions,
        bar,
        hom_b_le,
    })
}

/// Chain-level lift through a strict quasi-isomorphism `w : T -> T'`: finds
/// a degree-zero class u with w . u homotopic to `target`.
fn lift_through_quasi_iso(
    _p: &StratifiedPoset,
    hom_t: &HomComplex,
    hom_t2: &HomComplex,
    a: &SheafComplex,
    t: &SheafComplex,
    w: &Morphism,
    target: &HomClass,
) -> Option<HomClass> {
    // unknowns: u in C^0(Hom(A,T)), h in C^{-1}(Hom(A,T'))
    // equations: d u = 0  and  w.u - d h = target
    let dim_u = hom_t.cochain_dim(0);
    let dim_h = hom_t2.cochain_dim(-1);
    let rows_du = hom_t.cochain_dim(1);
    let rows_eq = hom_t2.cochain_dim(0);
    let mut m = RatMatrix::zeros(rows_du + rows_eq, dim_u + dim_h);
    let du = hom_t.differential_matrix(0);
    for (j, col) in du.cols.iter().enumerate() {
        for (i, v) in col {
            m.set(*i, j, v.clone());
        }
    }
    // postcomposition operator on cochains: Hom^0(A,T) -> Hom^0(A,T')
    let post = hom_postcompose_operator(hom_t, hom_t2, 0, t, w, a);
    for (j, col) in post.cols.iter().enumerate() {
        for (i, v) in col {
            m.set(rows_du + i, j, v.clone());
        }
    }
    let dh = hom_t2.differential_matrix(-1);
    for (j, col) in dh.cols.iter().enumerate() {
        for (i, v) in col {
            m.set(rows_du + i, dim_u + j, -v.clone());
        }
    }
    let mut rhs = vec![Rat::zero(); rows_du + rows_eq];
    let tvec = hom_t2.class_vector(target);
    for (i, v) in &tvec {
        rhs[rows_du + i] = v.clone();
    }
    let (sol, _) = solve_affine(&m, &rhs).ok()?;
    let sol = sol?;
    let u_coords: Vec<(usize, Rat)> = sol[..dim_u]
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_zero())
        .map(|(i, v)| (i, v.clone()))
        .collect();
    Some(hom_t.vector_class(0, &u_coords, a, t))
}

/// Operator matrix of postcomposition with w on Hom-degree n cochains.
fn hom_postcompose_operator(
    h_src: &HomComplex,
    h_tgt: &HomComplex,
    n: i32,
    t_old: &SheafComplex,
    w: &Morphism,
    _a: &SheafComplex,
) -> SparseMat {
    let src_dim = h_src.cochain_dim(n);
    let tgt_dim = h_tgt.cochain_dim(n);
    let mut m = SparseMat::new(tgt_dim, src_dim);
    for j in 0..src_dim {
        let (t, gi, ai, bi) = h_src.basis_element(n, j);
        let g = &h_src.bar.gens[&t][gi];
        let wc = w.comp.get(&(t + n, g.top()));
        let Some(wc) = wc else { continue };
        for b2 in 0..wc.rows {
            let v = wc.get(b2, bi);
            if v.is_zero() {
                continue;
            }
            if let Some(idx) = h_tgt.basis_index(n, t, gi, ai, b2) {
                m.push_entry(j, idx, v.clone());
            }
        }
    }
    let _ = t_old;
    m
}

/// Randomized check for the existence of a derived map b -> tau_le + tau_gt
/// inducing isomorphisms on all cohomology sheaves. The canonical candidate
/// built from a retraction is always tried first.
fn sum_decomposition_exists(
    p: &StratifiedPoset,
    b: &SheafComplex,
    tau_le: &SheafComplex,
    tau_gt: &SheafComplex,
    g: &Morphism,
    hom_b_le: &HomComplex,
    retraction: Option<&HomClass>,
    bar: &BarResolution,
) -> bool {
    let sum = direct_sum(p, tau_le, tau_gt);
    let mut candidates: Vec<HomClass> = Vec::new();
    let embed = |le_cls: Option<&HomClass>| -> HomClass {
        // gamma = (lambda, g . aug): bar(b) -> tau_le + tau_gt
        let mut blocks = BTreeMap::new();
        let aug = augmentation_class(&bar.data, b);
        for ((t, gi), m_aug) in &aug.blocks {
            let gtop = bar.data.gens[t][*gi].top();
            let gcomp = g.component(b, tau_gt, *t, gtop);
            let le_dim = tau_le.stalk_dim(*t, gtop);
            let gt_dim = tau_gt.stalk_dim(*t, gtop);
            let mut m = RatMatrix::zeros(le_dim + gt_dim, m_aug.cols);
            if let Some(le) = le_cls {
                if let Some(lm) = le.blocks.get(&(*t, *gi)) {
                    for i in 0..lm.rows {
                        for jj in 0..lm.cols {
                            m.set(i, jj, lm.get(i, jj).clone());
                        }
                    }
                }
            }
            let gm = gcomp.mul(m_aug);
            for i in 0..gm.rows {
                for jj in 0..gm.cols {
                    m.set(le_dim + i, jj, gm.get(i, jj).clone());
                }
            }
            if !m.is_zero() {
                blocks.insert((*t, *gi), m);
            }
        }
        // also include lambda blocks on longer generators
        if let Some(le) = le_cls {
            for ((t, gi), lm) in &le.blocks {
                if blocks.contains_key(&(*t, *gi)) {
                    continue;
                }
                let gtop = bar.data.gens[t][*gi].top();
                let le_dim = tau_le.stalk_dim(*t, gtop);
                let gt_dim = tau_gt.stalk_dim(*t, gtop);
                let mut m = RatMatrix::zeros(le_dim + gt_dim, lm.cols);
                for i in 0..lm.rows {
                    for jj in 0..lm.cols {
                        m.set(i, jj, lm.get(i, jj).clone());
                    }
                }
                blocks.insert((*t, *gi), m);
            }
        }
        HomClass { n: 0, blocks }
    };
    candidates.push(embed(retraction));
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..12 {
        // random degree-zero class of maps into tau_le, combined with g
        let d = hom_b_le.hom_dim(0);
        let mut acc = HomClass::zero(0);
        for j in 0..d {
            let c = rat_int(rng.gen_range(-3..=3i64));
            if !c.is_zero() {
                acc = acc.add_scaled(&hom_b_le.rep_class(0, j, b, tau_le), &c);
            }
        }
        candidates.push(embed(Some(&acc)));
    }
    for cand in candidates {
        if class_is_quasi_iso(p, bar, b, &sum, &cand) {
            return true;
        }
    }
    false
}

/// Whether a degree-zero class out of bar(b) into `tgt` induces pointwise
/// cohomology isomorphisms (i.e. is a quasi-isomorphism onto tgt).
fn class_is_quasi_iso(
    p: &StratifiedPoset,
    bar: &BarResolution,
    b: &SheafComplex,
    tgt: &SheafComplex,
    cls: &HomClass,
) -> bool {
    let f = cls.materialize(p, bar, tgt);
    if f.validate(p, &bar.complex, tgt).is_err() {
        return false;
    }
    for &c in &b.carrier.cells {
        let hs = crate::functors::stalk_complex(&bar.complex, c);
        let ht = crate::functors::stalk_complex(tgt, c);
        let h_src = crate::sparse::homology(&hs);
        let h_tgt = crate::sparse::homology(&ht);
        let lo = hs.lo.min(ht.lo);
        let hi = (hs.lo + hs.dims.len() as i32).max(ht.lo + ht.dims.len() as i32);
        for n in lo..hi {
            let ds = hs.degree_index(n).map_or(0, |i| h_src[i].dim);
            let dt = ht.degree_index(n).map_or(0, |i| h_tgt[i].dim);
            if ds != dt {
                return false;
            }
            if ds == 0 {
                continue;
            }
            let si = hs.degree_index(n).unwrap();
            let ti = ht.degree_index(n).unwrap();
            let comp = SparseMat::from_dense(&f.component(&bar.complex, tgt, n, c));
            let mut m = RatMatrix::zeros(dt, ds);
            for j in 0..ds {
                let img = comp.apply(h_src[si].rep(j));
                // image must be a cycle of the target stalk complex
                let coords = h_tgt[ti].class_coords(&img);
                for (i, v) in coords.iter().enumerate() {
                    m.set(i, j, v.clone());
                }
            }
            if rank(&m) != ds {
                return false;
            }
        }
    }
    true
}

/// How retraction coordinates are chosen at a stratum step.
#[derive(Clone, Debug)]
pub enum RetractionChoice {
    /// explicit coordinates over the linear-part basis
    Given(Vec<Rat>),
    /// uniform integers in [-10, 10], drawn from the seeded generator
    Generic(u64),
}

/// Everything recorded at one codimension step of the tower.
pub struct StepRecord {
    pub codim: i32,
    pub qbar: i32,
    pub ext1_dim: usize,
    pub linear_part_dim: usize,
    pub coords: Vec<Rat>,
    /// map a : pushforward -> cylinder model of the truncation, over U_{r+1};
    /// its hypercohomology kernel/cokernel gives the step's Betti data
    pub alpha: InducedMap,
    pub split_conditions: SplitConditions,
}

pub struct ISTower {
    pub perversity: Perversity,
    pub steps: Vec<StepRecord>,
    /// the complex on the full space
    pub complex: SheafComplex,
}

/// Draw coordinates for the affine retraction family.
pub fn draw_coords(choice: &RetractionChoice, dim: usize) -> Vec<Rat> {
    match choice {
        RetractionChoice::Given(v) => {
            assert_eq!(v.len(), dim, "coordinate count must match the linear part");
            v.clone()
        }
        RetractionChoice::Generic(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..dim).map(|_| rat_int(rng.gen_range(-10..=10i64))).collect()
        }
    }
}

/// One inductive step: pushes the complex across the stratum of codimension
/// r, splits the truncation triangle, and returns the cone construction on
/// the larger open set together with step records.
pub fn build_is_step(
    p: &StratifiedPoset,
    prev: &SheafComplex,
    u_r: &Selection,
    u_r1: &Selection,
    r: i32,
    qbar: i32,
    choice: &RetractionChoice,
) -> Result<(SheafComplex, StepRecord), TowerError> {
    let push = derived_pushforward_open(p, prev, u_r, &u_r1.cells)?;
    let a = push.complex;
    let stratum_cells: Vec<usize> =
        u_r1.cells.iter().copied().filter(|c| !u_r.contains(*c)).collect();
    let stratum_sel = Selection { cells: stratum_cells.clone(), kind: SelectionKind::Stratum };
    let b_s = restrict(p, &a, &stratum_sel)?;
    let sd = splitting_data(p, &b_s, qbar)?;
    if !sd.split {
        return Err(TowerError::ObstructionNonzero {
            codim: r,
            ext1_dim: sd.ext1_dim,
            witness: sd.obstruction_class,
        });
    }
    let coords = draw_coords(choice, sd.linear_part_dim);
    let mut lambda = sd.retraction.clone().expect("split data carries a retraction");
    for (c, dir) in coords.iter().zip(&sd.directions) {
        if !c.is_zero() {
            lambda = lambda.add_scaled(dir, c);
        }
    }
    let (is_r, alpha) = cone_over_retraction(p, &a, &b_s, &sd, &lambda, u_r1)?;
    let record = StepRecord {
        codim: r,
        qbar,
        ext1_dim: sd.ext1_dim,
        linear_part_dim: sd.linear_part_dim,
        coords,
        alpha,
        split_conditions: sd.conditions.clone(),
    };
    Ok((is_r, record))
}

/// Materializes the cone over the composite (retraction after the canonical
/// comparison), using a cylinder on the target so that the derived morphism
/// becomes an honest map: V = cone((aug, -lambda) : P(B) -> B + tau_le)
/// receives B and contains tau_le quasi-isomorphically.
fn cone_over_retraction(
    p: &StratifiedPoset,
    a: &SheafComplex,
    b_s: &SheafComplex,
    sd: &SplittingData,
    lambda: &HomClass,
    u_r1: &Selection,
) -> Result<(SheafComplex, InducedMap), TowerError> {
    let lam = lambda.materialize(p, &sd.bar, &sd.tau_le);
    let sum = direct_sum(p, b_s, &sd.tau_le);
    let mut u0 = Morphism::default();
    for n in sd.bar.complex.degrees() {
        for &c in &sd.bar.complex.carrier.cells {
            let src = sd.bar.complex.stalk_dim(n, c);
            if src == 0 {
                continue;
            }
            let eps = sd.bar.aug.component(&sd.bar.complex, b_s, n, c);
            let lm = lam.component(&sd.bar.complex, &sd.tau_le, n, c);
            let m = eps.vstack(&lm.neg());
            u0.set(n, c, m);
        }
    }
    let cyl = cone(p, &u0, &sd.bar.complex, &sum)?;
    let v = cyl.cone;
    // iota_1 : B -> V
    let mut iota1 = Morphism::default();
    for n in v.degrees() {
        for &c in &v.carrier.cells {
            let bd = b_s.stalk_dim(n, c);
            if bd == 0 {
                continue;
            }
            let bar1 = sd.bar.complex.stalk_dim(n + 1, c);
            let le = sd.tau_le.stalk_dim(n, c);
            let mut m = RatMatrix::zeros(bar1 + bd + le, bd);
            for i in 0..bd {
                m.set(bar1 + i, i, Rat::one());
            }
            iota1.set(n, c, m);
        }
    }
    // extend V by zero to U_{r+1} and build phi : A -> V_ext
    let v_ext = extend_by_zero_closed(p, &v, &u_r1.cells)?;
    let mut phi = Morphism::default();
    for n in a.degrees() {
        for &c in &v.carrier.cells {
            let src = a.stalk_dim(n, c);
            if src == 0 {
                continue;
            }
            debug_assert_eq!(src, b_s.stalk_dim(n, c));
            let m = iota1.component(b_s, &v, n, c);
            phi.set(n, c, m);
        }
    }
    let model = if crate::sheaf::is_down_closed(p, &u_r1.cells) {
        SectionModel::CellularClosed
    } else {
        SectionModel::Chains
    };
    let alpha = hyper_induced_map(p, a, &v_ext, &phi, &u_r1.cells, model);
    let c = cone(p, &phi, &a, &v_ext)?;
    let is_r = shift(&c.cone, -1).normalize();
    Ok((is_r, alpha))
}

/// Builds the full tower over all nonempty singular codimensions.
pub fn build_is(
    p: &StratifiedPoset,
    pv: &Perversity,
    choice: &RetractionChoice,
) -> Result<ISTower, TowerError> {
    let d = p.dim();
    let qv = pv.complement();
    let u2 = p.open_complement(2);
    let mut current = constant_complex(p, u2.cells.clone(), 0);
    let mut u_cur = u2;
    let mut steps = Vec::new();
    for r in p.singular_codims() {
        let u_next = p.open_complement(r + 1);
        if u_next.cells == u_cur.cells {
            continue;
        }
        let (next, record) =
            build_is_step(p, &current, &u_cur, &u_next, r, qv.value(r), choice)?;
        steps.push(record);
        current = next;
        u_cur = u_next;
    }
    // include any remaining smooth part (no singular codims at all)
    let full = p.open_complement(d + 1);
    if u_cur.cells != full.cells {
        return Err(TowerError::Invalid(
            "stratification left cells uncovered after the deepest singular codimension".into(),
        ));
    }
    Ok(ISTower { perversity: pv.clone(), steps, complex: current })
}

/// The iterated push-and-truncate construction; never obstructed.
pub fn build_ic(p: &StratifiedPoset, pv: &Perversity) -> Result<SheafComplex, TowerError> {
    let u2 = p.open_complement(2);
    let mut current = constant_complex(p, u2.cells.clone(), 0);
    let mut u_cur = u2;
    for r in p.singular_codims() {
        let u_next = p.open_complement(r + 1);
        if u_next.cells == u_cur.cells {
            continue;
        }
        let push = derived_pushforward_open(p, &current, &u_cur, &u_next.cells)?;
        let a = push.complex;
        let stratum_cells: Vec<usize> =
            u_next.cells.iter().copied().filter(|c| !u_cur.contains(*c)).collect();
        let stratum_sel = Selection { cells: stratum_cells, kind: SelectionKind::Stratum };
        let b_s = restrict(p, &a, &stratum_sel)?;
        let (tau_gt_s, g_s) = truncate(p, &b_s, pv.value(r), TruncSide::Gt);
        let t_ext = extend_by_zero_closed(p, &tau_gt_s, &u_next.cells)?;
        // phi = (g on the stratum) . (stalkwise projection)
        let mut phi = Morphism::default();
        for n in a.degrees() {
            for &c in &b_s.carrier.cells {
                let m = g_s.component(&b_s, &tau_gt_s, n, c);
                phi.set(n, c, m);
            }
        }
        let c = cone(p, &phi, &a, &t_ext)?;
        current = shift(&c.cone, -1).normalize();
        u_cur = u_next;
    }
    Ok(current)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxiomVariant {
    IC,
    IS,
}

#[derive(Debug, Default)]
pub struct AxiomReport {
    pub failures: Vec<String>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per-stratum, per-degree verification of the defining support conditions.
pub fn check_axioms(
    p: &StratifiedPoset,
    k: &SheafComplex,
    pv: &Perversity,
    variant: AxiomVariant,
) -> Result<AxiomReport, TowerError> {
    if k.carrier.cells != (0..p.len()).collect::<Vec<usize>>() {
        return Err(TowerError::Invalid("complex must be defined on the full space".into()));
    }
    let mut report = AxiomReport::default();
    let d = p.dim();
    let qv = pv.complement();
    // (a): restriction to the nonsingular part is the rank-one constant sheaf
    let u2 = p.open_complement(2);
    let r2 = restrict(p, k, &u2)?;
    for &c in &u2.cells {
        let h = stalk_cohomology_dims(&r2, c);
        if h != BTreeMap::from([(0, 1)]) {
            report
                .failures
                .push(format!("(a): stalk cohomology at `{}` is {:?}", p.cells[c].id, h));
        }
    }
    if report.pass() && !u2.is_empty() {
        let h0 = cohomology_sheaf_data(p, &r2, 0).sheaf;
        if !crate::sheaf::is_constant_rank_one(p, &h0, &u2.cells) {
            report.failures.push("(a): degree-zero cohomology sheaf is not constant".into());
        }
    }
    // (b): cohomology sheaves vanish outside 0..=d
    for &c in &k.carrier.cells {
        for (i, dim) in stalk_cohomology_dims(k, c) {
            if (i < 0 || i > d) && dim > 0 {
                report.failures.push(format!(
                    "(b): cohomology in degree {i} at `{}`",
                    p.cells[c].id
                ));
            }
        }
    }
    // per singular codimension: (c_k) and (d_k)
    for r in p.singular_codims() {
        let u_r = p.open_complement(r);
        let u_r1 = p.open_complement(r + 1);
        let stratum: Vec<usize> =
            u_r1.cells.iter().copied().filter(|c| !u_r.contains(*c)).collect();
        if stratum.is_empty() {
            continue;
        }
        let k_u1 = restrict(p, k, &u_r1)?;
        let k_u = restrict(p, k, &u_r)?;
        let push = derived_pushforward_open(p, &k_u, &u_r, &u_r1.cells)?;
        let unit = pushforward_unit(p, &k_u1, &k_u, &Morphism::identity(&k_u), &push);
        for &c in &stratum {
            let h_here = stalk_cohomology_dims(&k_u1, c);
            // (c_k)
            for (&i, &dim) in &h_here {
                if dim == 0 {
                    continue;
                }
                let bad = match variant {
                    AxiomVariant::IC => i > pv.value(r),
                    AxiomVariant::IS => i <= qv.value(r),
                };
                if bad {
                    report.failures.push(format!(
                        "(c_{r}): cohomology of dimension {dim} in degree {i} at `{}`",
                        p.cells[c].id
                    ));
                }
            }
            // (d_k): the canonical comparison must be an isomorphism in the
            // window determined by the variant
            let hs = crate::functors::stalk_complex(&k_u1, c);
            let ht = crate::functors::stalk_complex(&push.complex, c);
            let h_src = crate::sparse::homology(&hs);
            let h_tgt = crate::sparse::homology(&ht);
            let lo = hs.lo.min(ht.lo);
            let hi = (hs.lo + hs.dims.len() as i32).max(ht.lo + ht.dims.len() as i32);
            for i in lo..hi {
                let window = match variant {
                    AxiomVariant::IC => i <= pv.value(r),
                    AxiomVariant::IS => i > qv.value(r),
                };
                if !window {
                    continue;
                }
                let ds = hs.degree_index(i).map_or(0, |x| h_src[x].dim);
                let dt = ht.degree_index(i).map_or(0, |x| h_tgt[x].dim);
                if ds != dt {
                    report.failures.push(format!(
                        "(d_{r}): comparison at `{}` degree {i} has ranks {ds} vs {dt}",
                        p.cells[c].id
                    ));
                    continue;
                }
                if ds == 0 {
                    continue;
                }
                let comp =
                    SparseMat::from_dense(&unit.component(&k_u1, &push.complex, i, c));
                let si = hs.degree_index(i).unwrap();
                let ti = ht.degree_index(i).unwrap();
                let mut m = RatMatrix::zeros(dt, ds);
                for j in 0..ds {
                    let img = comp.apply(h_src[si].rep(j));
                    let coords = h_tgt[ti].class_coords(&img);
                    for (row, v) in coords.iter().enumerate() {
                        m.set(row, j, v.clone());
                    }
                }
                if rank(&m) != ds {
                    report.failures.push(format!(
                        "(d_{r}): comparison at `{}` degree {i} is not invertible",
                        p.cells[c].id
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// Cohomology sheaf dimensions of a complex, summed over cells per degree.
pub fn cohomology_profile(p: &StratifiedPoset, k: &SheafComplex) -> BTreeMap<i32, usize> {
    let mut out = BTreeMap::new();
    for &c in &k.carrier.cells {
        for (i, d) in stalk_cohomology_dims(k, c) {
            *out.entry(i).or_default() += d;
        }
    }
    let _ = p;
    out
}

/// A helper used by tests: the zero complex signals a trivially split step.
pub fn is_zero_complex(k: &SheafComplex) -> bool {
    k.total_dim() == 0
}

pub use crate::sheaf::hyper_map;
pub use crate::sparse::homology as sparse_homology;

#[allow(unused_imports)]
use crate::sheaf::SheafError;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        boundary_simplex_sphere, circle, cone_space, formal_model, generator_cocycle,
        sphere_bundle_pushforward, torus7, BundleModelSpec,
    };
    use crate::sheaf::hyper_map;

    #[test]
    fn standard_perversities() {
        let m = Perversity::standard("lower-middle", 6).unwrap();
        assert_eq!(
            m.values().iter().map(|(_, &v)| v).collect::<Vec<_>>(),
            vec![0, 0, 1, 1, 2]
        );
        let z = Perversity::standard("zero", 4).unwrap();
        assert!(z.values().values().all(|&v| v == 0));
        let t = Perversity::standard("total", 4).unwrap();
        assert_eq!(t.value(2), 0);
        assert_eq!(t.value(4), 2);
        assert!(Perversity::standard("middle", 4).is_err());
    }

    #[test]
    fn complement_involution_and_pairing() {
        let z = Perversity::standard("zero", 6).unwrap();
        let t = Perversity::standard("total", 6).unwrap();
        assert_eq!(z.complement(), t);
        let m = Perversity::standard("lower-middle", 7).unwrap();
        let n = Perversity::standard("upper-middle", 7).unwrap();
        assert_eq!(m.complement(), n);
        assert_eq!(m.complement().complement(), m);
    }

    #[test]
    fn splitting_trivial_upper_part() {
        let p = circle(3);
        let b = formal_model(&p, &[(0, 1)]);
        let sd = splitting_data(&p, &b, 0).unwrap();
        assert!(sd.split);
        assert_eq!(sd.linear_part_dim, 0);
        assert_eq!(sd.ext1_dim, 0);
        assert!(sd.conditions.agree());
    }

    #[test]
    fn splitting_formal_model_on_circle() {
        // constant + constant[-1] over the circle: split, with a
        // one-dimensional family of retractions
        let p = circle(3);
        let b = formal_model(&p, &[(0, 1), (1, 1)]);
        let sd = splitting_data(&p, &b, 0).unwrap();
        assert!(sd.split);
        assert!(sd.conditions.agree());
        assert_eq!(sd.linear_part_dim, 1);
    }

    #[test]
    fn splitting_hopf_model_fails() {
        let p = boundary_simplex_sphere(2);
        let z = generator_cocycle(&p, 2);
        let b = sphere_bundle_pushforward(
            &p,
            &BundleModelSpec { fiber_dim: 1, euler_cocycle: z },
        )
        .unwrap();
        let sd = splitting_data(&p, &b, 0).unwrap();
        assert!(!sd.split);
        assert!(sd.conditions.agree(), "conditions: {:?}", sd.conditions);
        assert!(sd.ext1_dim >= 1);
        assert!(sd.obstruction_class.iter().any(|c| !c.is_zero()));
    }

    #[test]
    fn ic_on_smooth_space_is_constant() {
        let p = boundary_simplex_sphere(2);
        let pv = Perversity::standard("zero", 2).unwrap();
        let ic = build_ic(&p, &pv).unwrap();
        let rep = check_axioms(&p, &ic, &pv, AxiomVariant::IC).unwrap();
        assert!(rep.pass(), "{:?}", rep.failures);
        let h = hyper_map(&p, &ic, &(0..p.len()).collect::<Vec<_>>(), SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1), (2, 1)]));
    }

    #[test]
    fn ic_on_cone_over_circle() {
        let c = circle(3);
        let x = cone_space(&c, "apex", 2).unwrap();
        let pv = Perversity::standard("zero", 2).unwrap();
        let ic = build_ic(&x, &pv).unwrap();
        let rep = check_axioms(&x, &ic, &pv, AxiomVariant::IC).unwrap();
        assert!(rep.pass(), "{:?}", rep.failures);
        // cone formula with the zero perversity: truncated circle cohomology
        let h = hyper_map(&x, &ic, &(0..x.len()).collect::<Vec<_>>(), SectionModel::CellularClosed);
        assert_eq!(h, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn is_on_cone_over_circle() {
        let c = circle(3);
        let x = cone_space(&c, "apex", 2).unwrap();
        let pv = Perversity::standard("zero", 2).unwrap();
        let tower = build_is(&x, &pv, &RetractionChoice::Generic(5)).unwrap();
        let rep = check_axioms(&x, &tower.complex, &pv, AxiomVariant::IS).unwrap();
        assert!(rep.pass(), "{:?}", rep.failures);
        // qbar(2) = 0: the global sections see only the top of the link
        let h = hyper_map(
            &x,
            &tower.complex,
            &(0..x.len()).collect::<Vec<_>>(),
            SectionModel::CellularClosed,
        );
        assert_eq!(h, BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn is_on_cone_over_torus() {
        let t = torus7();
        let x = cone_space(&t, "apex", 3).unwrap();
        // qbar(3) = 1 for the zero perversity
        let pv = Perversity::standard("zero", 3).unwrap();
        let tower = build_is(&x, &pv, &RetractionChoice::Generic(5)).unwrap();
        assert_eq!(tower.steps.len(), 1);
        let rep = check_axioms(&x, &tower.complex, &pv, AxiomVariant::IS).unwrap();
        assert!(rep.pass(), "{:?}", rep.failures);
        let h = hyper_map(
            &x,
            &tower.complex,
            &(0..x.len()).collect::<Vec<_>>(),
            SectionModel::CellularClosed,
        );
        assert_eq!(h, BTreeMap::from([(2, 1)]));
    }
}
