use nalgebra::DMatrix;
use num_complex::Complex64;

#[test]
fn dbg_raw_eig_kron_diag() {
    // mimic the Gram / Choi structure: big Hermitian with many exact
    // degeneracies built from tensor products of diagonals
    let d: Vec<f64> = {
        let f = [
            [0.3, 0.7],
            [0.25, 0.75],
            [0.4, 0.6],
            [0.35, 0.65],
        ];
        let mut v = vec![1.0];
        for row in f {
            let mut nv = Vec::new();
            for x in &v {
                for y in row {
                    nv.push(x * y);
                }
            }
            v = nv;
        }
        v
    };
    let n = 16;
    // Choi of E_0 (x -> phi(x) 1/..): C[(r,i),(c,j)] = delta_{ij}-ish * D-stuff
    let mut choi = DMatrix::<Complex64>::zeros(n * n, n * n);
    for r in 0..n {
        for c in 0..n {
            // E(e_rc) = delta_rc-weighted identity: phi(e_rc) * I = D_rc * I
            let w = if r == c { d[r] } else { 0.0 };
            for i in 0..n {
                choi[(r * n + i, c * n + i)] = Complex64::new(w, 0.0);
            }
        }
    }
    let eig = choi.clone().symmetric_eigen();
    let bad = eig.eigenvalues.iter().filter(|v| !v.is_finite()).count();
    println!("non-finite eigenvalues from nalgebra: {bad}/{}", n * n);
}
