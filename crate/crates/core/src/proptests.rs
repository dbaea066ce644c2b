//! Property tests for grid, potential, entanglement, diabatic and coupled-channel invariants.

use proptest::prelude::*;

use crate::bo::solve_nuclear_on_curve;
use crate::born_huang::{assemble_bh_matrix, solve_bh};
use crate::diabatic::{diabatic_matrix, total_rotation, MatrixField};
use crate::grid::{
    build_fgh_hamiltonian, fgh_kinetic_matrix, solve_symmetric, symmetric_eigenvalues, Grid1D, GridFunction,
    SymmetricMatrix,
};
use crate::potentials::{
    h2p_potential, shin_metiu_potential, shin_metiu_potential_dr, H2pModel, ShinMetiuModel, SofteningTable,
};
use crate::schmidt::{
    density_spectrum, electronic_density_from_table, nuclear_density_from_table, perturbative_lambda_max,
    schmidt_decompose, ExtremaPoints, SimplifiedDensity,
};
use crate::Matrix;

fn normalized_table(rows: usize, cols: usize, vals: &[f64]) -> Matrix {
    let norm: f64 = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    Matrix::from_fn(rows, cols, |i, j| vals[i * cols + j] / norm)
}

fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..7, 2usize..7).prop_flat_map(|(r, c)| {
        (Just(r), Just(c), prop::collection::vec(-1.0f64..1.0, r * c))
            .prop_filter("non-zero", |(_, _, v)| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fgh_spectrum_is_translation_invariant(shift in -20.0f64..20.0, omega in 0.5f64..2.0, half in 10usize..25) {
        let n = 2 * half + 1;
        let g = Grid1D::spanning(-6.0, 6.0, n).unwrap();
        let gs = g.translated(shift);
        let v = GridFunction::from_fn(g, |x| 0.5 * omega * omega * x * x);
        let vs = GridFunction::from_fn(gs, |x| 0.5 * omega * omega * (x - shift) * (x - shift));
        let e = symmetric_eigenvalues(&build_fgh_hamiltonian(&g, 1.0, &v).unwrap()).unwrap();
        let es = symmetric_eigenvalues(&build_fgh_hamiltonian(&gs, 1.0, &vs).unwrap()).unwrap();
        for (a, b) in e.iter().zip(&es) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn kinetic_matrix_is_positive_semidefinite(delta in 0.01f64..2.0, half in 0usize..30, mass in 0.1f64..5000.0) {
        let g = Grid1D::new(0.0, delta, 2 * half + 1).unwrap();
        let t = fgh_kinetic_matrix(&g, mass).unwrap();
        let e = symmetric_eigenvalues(&t).unwrap();
        let scale = e.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(e.iter().all(|&v| v > -1e-12 * scale));
    }

    #[test]
    fn shin_metiu_potential_is_finite(x in -40.0f64..40.0, r in -8.9f64..8.9) {
        let m = ShinMetiuModel::default();
        prop_assert!(shin_metiu_potential(&m, x, r).unwrap().is_finite());
        prop_assert!(shin_metiu_potential_dr(&m, x, r).unwrap().is_finite());
    }

    #[test]
    fn h2p_potential_is_finite_and_parity_even(x in -40.0f64..40.0, r in 0.05f64..60.0, a in 1e-3f64..10.0) {
        let m = H2pModel::new(SofteningTable::constant(a).unwrap());
        let v = h2p_potential(&m, x, r).unwrap();
        prop_assert!(v.is_finite());
        prop_assert!((v - h2p_potential(&m, -x, r).unwrap()).abs() < 1e-12 * (1.0 + v.abs()));
    }

    #[test]
    fn schmidt_invariants((rows, cols, vals) in table_strategy()) {
        let psi = normalized_table(rows, cols, &vals);
        let s = schmidt_decompose(&psi).unwrap();
        let sum: f64 = s.lambdas.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(s.lambdas.iter().all(|&l| l >= -1e-15));
        prop_assert!(s.lambdas.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        prop_assert!(s.entropy >= -1e-12 && s.entropy <= (rows.min(cols) as f64).ln() + 1e-12);
        let back = s.reconstruct(rows.min(cols));
        for i in 0..rows {
            for j in 0..cols {
                prop_assert!((back[(i, j)] - psi[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduced_densities_share_nonzero_spectrum((rows, cols, vals) in table_strategy()) {
        let psi = normalized_table(rows, cols, &vals);
        let re = density_spectrum(&electronic_density_from_table(&psi)).unwrap();
        let rn = density_spectrum(&nuclear_density_from_table(&psi)).unwrap();
        let k = rows.min(cols);
        for i in 0..k {
            prop_assert!((re[i] - rn[i]).abs() < 1e-12);
        }
        prop_assert!(re[k..].iter().chain(&rn[k..]).all(|v| v.abs() < 1e-12));
        let trace: f64 = re.iter().sum();
        prop_assert!((trace - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_orthogonal_maps_preserve_spectrum((rows, cols, vals) in table_strategy(), angle in 0.0f64..6.3) {
        let psi = normalized_table(rows, cols, &vals);
        let (c, s) = (angle.cos(), angle.sin());
        let rotated = Matrix::from_fn(rows, cols, |i, j| match i {
            0 => c * psi[(0, j)] + s * psi[(1, j)],
            1 => -s * psi[(0, j)] + c * psi[(1, j)],
            _ => psi[(i, j)],
        });
        let a = schmidt_decompose(&psi).unwrap();
        let b = schmidt_decompose(&rotated).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn diabatic_transform_preserves_eigenvalues(
        v in prop::array::uniform3(-1.0f64..1.0),
        theta in -3.2f64..3.2,
        phi in -3.2f64..3.2,
    ) {
        let d = diabatic_matrix(v, theta, phi);
        let m = SymmetricMatrix::from_lower_fn(3, |i, j| d[i][j]);
        let mut want = v.to_vec();
        want.sort_by(f64::total_cmp);
        let got = symmetric_eigenvalues(&m).unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let trace = d[0][0] + d[1][1] + d[2][2];
        prop_assert!((trace - v.iter().sum::<f64>()).abs() < 1e-12);
        let u = total_rotation(theta, phi);
        for i in 0..3 {
            for j in 0..3 {
                let g: f64 = (0..3).map(|k| u[k][i] * u[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unit_overlaps_give_separable_density(amps in prop::collection::vec(0.05f64..1.0, 2..6)) {
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let amplitudes: Vec<f64> = amps.iter().map(|a| a / norm).collect();
        let n = amplitudes.len();
        let points = ExtremaPoints {
            indices: (0..n).collect(),
            positions: (0..n).map(|k| k as f64).collect(),
            amplitudes,
        };
        let sd = SimplifiedDensity::with_overlaps(points, |_, _| 1.0);
        prop_assert!((perturbative_lambda_max(&sd) - 1.0).abs() < 1e-12);
        prop_assert!(sd.entropy().unwrap().abs() < 1e-10);
    }

    #[test]
    fn uncoupled_channels_reproduce_separate_spectra(
        w1 in 0.5f64..1.5,
        w2 in 0.5f64..1.5,
        offset in 0.0f64..1.0,
    ) {
        let g = Grid1D::spanning(-5.0, 5.0, 41).unwrap();
        let curve = |w: f64, e0: f64| g.points().iter().map(|r| e0 + 0.5 * w * w * r * r).collect::<Vec<_>>();
        let mut channels = solve_nuclear_on_curve(&g, &curve(w1, 0.0), 0, 1.0, 3.0).unwrap();
        channels.extend(solve_nuclear_on_curve(&g, &curve(w2, offset), 1, 1.0, 3.0).unwrap());
        let zero = MatrixField::zeros(g, 2);
        let sol = solve_bh(&assemble_bh_matrix(&channels, &zero, &zero, 1.0).unwrap()).unwrap();
        let mut want: Vec<f64> = channels.iter().map(|c| c.energy).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in sol.energies.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!(sol.dominant.iter().all(|&(_, w)| (w - 1.0).abs() < 1e-10));
    }
}

#[test]
fn fgh_converges_under_grid_doubling() {
    let exact = 0.5;
    let mut prev = f64::INFINITY;
    for n in [15usize, 31, 63] {
        let g = Grid1D::spanning(-7.0, 7.0, n).unwrap();
        let v = GridFunction::from_fn(g, |x| 0.5 * x * x);
        let e = solve_symmetric(&build_fgh_hamiltonian(&g, 1.0, &v).unwrap(), 1).unwrap()[0].value;
        let err = (e - exact).abs();
        assert!(err < prev.max(1e-12) || err < 1e-10, "n={n} err={err} prev={prev}");
        prev = err;
    }
    assert!(prev < 1e-9);
}
