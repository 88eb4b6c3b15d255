use std::time::Instant;

#[test]
fn cp2_scan_timing() {
    use iscx::models::{cp2_9, generator_cocycle, sphere_bundle_pushforward, BundleModelSpec};
    use iscx::spectral::{obstruction_scan, Verdict};
    let t0 = Instant::now();
    let p = cp2_9();
    println!("cp2 built: {} cells in {:?}", p.len(), t0.elapsed());
    let t1 = Instant::now();
    let z = generator_cocycle(&p, 4);
    let k = sphere_bundle_pushforward(&p, &BundleModelSpec { fiber_dim: 3, euler_cocycle: z }).unwrap();
    println!("model built: total dim {} in {:?}", k.total_dim(), t1.elapsed());
    let t2 = Instant::now();
    let cells: Vec<usize> = (0..p.len()).collect();
    let rep = obstruction_scan(&p, &k, &cells, 2);
    println!("scan in {:?}", t2.elapsed());
    println!("verdict {:?} witnesses {:?}", rep.verdict, rep.witnesses);
    println!("hyper {:?}", rep.ss.hyper);
    assert_eq!(rep.verdict, Verdict::Obstructed);
}
