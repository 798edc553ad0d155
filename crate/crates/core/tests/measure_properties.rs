use approx::assert_relative_eq;
use parea::measure::*;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pair of measures on the same cells, each with up to two atoms.
fn pair() -> impl Strategy<Value = (VectorMeasure, VectorMeasure)> {
    (1usize..=4, 1usize..=6).prop_flat_map(|(d, n)| {
        let dens = prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n);
        let weights = prop::collection::vec(0.1f64..2.0, n);
        let zero_mask = prop::collection::vec(any::<bool>(), n);
        let atoms = prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 0..=2);
        (Just(d), weights, dens.clone(), dens, zero_mask, atoms.clone(), atoms).prop_map(
            |(d, w, a, b, zero, aa, ab)| {
                let cells = |dens: &[Vec<f64>], blank: bool| -> Vec<Cell> {
                    dens.iter()
                        .zip(&w)
                        .zip(&zero)
                        .enumerate()
                        .map(|(id, ((dn, &weight), &z))| Cell {
                            id,
                            weight,
                            density: if blank && z { vec![0.0; d] } else { dn.clone() },
                        })
                        .collect()
                };
                let atoms = |m: &[Vec<f64>]| -> Vec<Atom> {
                    m.iter().enumerate().map(|(k, mass)| Atom { site: 10 + 3 * k, mass: mass.clone() }).collect()
                };
                (
                    VectorMeasure::new(d, cells(&a, true), atoms(&aa)).unwrap(),
                    VectorMeasure::new(d, cells(&b, false), atoms(&ab)).unwrap(),
                )
            },
        )
    })
}

fn direct_total_variation(m: &VectorMeasure) -> f64 {
    m.cells().iter().map(|c| norm(&c.density) * c.weight).sum::<f64>()
        + m.atoms().iter().map(|a| norm(&a.mass)).sum::<f64>()
}

proptest! {
    #[test]
    fn total_variation_matches_direct_sum((mu, _) in pair()) {
        let tv = total_variation(&mu);
        prop_assert!((tv - direct_total_variation(&mu)).abs() <= 1e-12 * (1.0 + tv));
    }

    #[test]
    fn decomposition_reconstructs_nu((mu, nu) in pair()) {
        let rn = decompose(&nu, &mu).unwrap();
        let back = rn.reconstruct();
        for (a, b) in back.cells().iter().zip(nu.cells()) {
            for (x, y) in a.density.iter().zip(&b.density) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
        for p in &rn.support {
            prop_assert!((norm(&p.n) - 1.0).abs() <= 1e-12);
            prop_assert!(p.total_mass > 0.0);
        }
        // the singular part lives where mu vanishes
        for site in rn.singular_sites() {
            prop_assert!(mu.mass_at(site).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn one_sided_slopes_are_ordered_and_bounded((mu, nu) in pair(), eps in -2.0f64..2.0) {
        let (fm, fp) = first_variation_pm(&mu, &nu, eps).unwrap();
        let bound = total_variation(&nu) * (1.0 + 1e-12);
        prop_assert!(fm <= fp);
        prop_assert!(fm.abs() <= bound && fp.abs() <= bound);
        let rn = decompose(&nu, &mu.add_scaled(&nu, eps).unwrap()).unwrap();
        let jump = 2.0 * total_variation(&rn.nu_s);
        prop_assert!(((fp - fm) - jump).abs() <= 1e-12 * (1.0 + jump));
    }

    #[test]
    fn line_energy_is_convex((mu, nu) in pair(), e1 in -2.0f64..2.0, e2 in -2.0f64..2.0, t in 0.0f64..1.0) {
        let f = |e: f64| line_energy(&mu, &nu, e).unwrap();
        let gap = f(t * e1 + (1.0 - t) * e2) - (t * f(e1) + (1.0 - t) * f(e2));
        prop_assert!(gap <= 1e-12 * (1.0 + f(e1) + f(e2)));
    }

    #[test]
    fn second_variation_is_nonnegative((mu, nu) in pair(), eps in -2.0f64..2.0) {
        prop_assert!(second_variation(&mu, &nu, eps).unwrap() >= 0.0);
    }

    #[test]
    fn structural_identity_holds((mu, mu2) in pair()) {
        prop_assert!(structural_identity_residual(&mu, &mu2).unwrap() <= 1e-12);
    }

    #[test]
    fn json_round_trip_is_lossless((mu, _) in pair()) {
        let text = serde_json::to_string(&mu).unwrap();
        let back: VectorMeasure = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, mu);
    }
}

#[test]
fn slopes_match_quotients_on_a_fixed_instance() {
    let mu = VectorMeasure::from_densities(2, &[0.5, 1.0], &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let nu = VectorMeasure::from_densities(2, &[0.5, 1.0], &[vec![0.5, 2.0], vec![0.0, 1.0]]).unwrap();
    let (fm, fp) = first_variation_pm(&mu, &nu, 0.0).unwrap();
    let h = 1e-7;
    let f0 = line_energy(&mu, &nu, 0.0).unwrap();
    assert_relative_eq!((line_energy(&mu, &nu, h).unwrap() - f0) / h, fp, epsilon = 1e-6);
    assert_relative_eq!((f0 - line_energy(&mu, &nu, -h).unwrap()) / h, fm, epsilon = 1e-6);
    // the empty cell contributes +-|nu| = +-1
    assert_relative_eq!(fp - fm, 2.0, epsilon = 1e-15);
    assert_eq!(singular_epsilons(&mu, &nu).unwrap(), vec![0.0]);
}

#[test]
fn report_marks_singular_epsilons() {
    let mu = VectorMeasure::from_densities(2, &[1.0], &[vec![1.0, -2.0]]).unwrap();
    let nu = VectorMeasure::from_densities(2, &[1.0], &[vec![-0.5, 1.0]]).unwrap();
    let r = variation_report(&mu, &nu, 2.0).unwrap();
    assert!(!r.is_regular);
    assert_eq!(r.fsecond, SecondVariation::UndefinedAtSingular);
    assert_eq!(r.f_value, 0.0);
    let r = variation_report(&mu, &nu, 1.0).unwrap();
    assert!(r.is_regular);
    // nu is parallel to mu + nu there
    assert!(matches!(r.fsecond, SecondVariation::Value(v) if (0.0..1e-30).contains(&v)));
}
