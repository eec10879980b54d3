//! Randomized properties of the closed-form constants and flux targets.

use std::f64::consts::PI;

use proptest::prelude::*;

use vortexlab::mat2::Mat2;
use vortexlab::model::{
    component_flux_targets, coupling_matrix, flux_coefficients, flux_targets, spectral_constants, ModelParams,
};

proptest! {
    #[test]
    fn crout_factors_reproduce_a(rank in 2u32..400) {
        let cd = coupling_matrix(&ModelParams::relaxed(rank, 1.0, 0.0, 1.0).unwrap()).unwrap();
        let scale = f64::from(rank);
        prop_assert!((cd.l * cd.r).max_abs_diff(&cd.a) < 1e-13 * scale);
        prop_assert!((cd.a.det() - 0.5 * scale).abs() < 1e-12 * scale);
    }

    #[test]
    fn t_diagonalizes_d(rank in 2u32..400) {
        let cd = coupling_matrix(&ModelParams::relaxed(rank, 1.0, 0.0, 1.0).unwrap()).unwrap();
        let sc = spectral_constants(&cd);
        let t_inv = sc.t.inverse().unwrap();
        let diag = sc.t * cd.d() * t_inv;
        let expect = Mat2::diag(sc.lambda3, sc.lambda4);
        prop_assert!(diag.max_abs_diff(&expect) < 1e-10 * f64::from(rank));
    }

    #[test]
    fn exact_component_fluxes_give_exact_targets(
        rank in 2u32..64,
        n1 in 0.0f64..5.0,
        n2 in 0.0f64..5.0,
    ) {
        let params = ModelParams::relaxed(rank, n1, n2, 1.0).unwrap();
        let cd = coupling_matrix(&params).unwrap();
        let sc = spectral_constants(&cd);
        let got = flux_coefficients(&cd, &sc).apply(component_flux_targets(&params, &cd));
        let want = flux_targets(&params, &sc);
        for k in 0..2 {
            prop_assert!((got[k] - want[k]).abs() < 1e-10 * (1.0 + want[k].abs()));
        }
        // A·(∫E) = −4π·n: integrating the equations over the plane.
        let back = cd.a.apply(component_flux_targets(&params, &cd));
        prop_assert!((back[0] + 4.0 * PI * n1).abs() < 1e-10 && (back[1] + 4.0 * PI * n2).abs() < 1e-10);
    }
}
