use rics_core::numopt::{hermitian_eigen, min_eigenvalue, project_psd_hermitian, CMat};
use rics_core::C64;

fn load(name: &str) -> CMat {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let n: usize = lines.next().unwrap().parse().unwrap();
    let mut m = CMat::zeros(n, n);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        m[(f[0].parse().unwrap(), f[1].parse().unwrap())] = C64::new(f[2].parse().unwrap(), f[3].parse().unwrap());
    }
    m
}

#[test]
fn eigen_survives_qr_breakdown_case() {
    let a = load("eigen_breakdown.txt");
    let (lam, q) = hermitian_eigen(&a);
    assert!(q.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    let recon = &q * CMat::from_diagonal(&lam.iter().map(|&l| C64::new(l, 0.0)).collect::<Vec<_>>().into()) * q.adjoint();
    assert!((recon - &a).norm() <= 1e-12 * a.norm().max(1.0));
    let p = project_psd_hermitian(&a);
    assert!(p.iter().all(|v| v.re.is_finite()));
    assert!(min_eigenvalue(&p) >= -1e-12);
}
