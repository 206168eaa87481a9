//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lds_core::evolution::{
    dependency_closure, generate_flow_system, integrate_flow, max_compatibility_residual,
    FlowParameter, FlowPath, FlowTarget,
};
use lds_core::lattice::{Coupling, LatticeSpec, MultiIndex, PotentialCoefficients};
use lds_core::oracle::OracleGrid;
use lds_core::propagators;
use lds_core::reduction::{
    check_operator_commutation, reduce_random_field, reduce_to_primitive, LinearCombination,
    Reducer,
};
use lds_core::ring::{rat, rat_int, Coefficient, Monomial, Symbol};
use lds_core::symmetry::{self, count_primitive_basis, CountLevel};

fn idx(spec: &LatticeSpec, dense: &[u32]) -> MultiIndex {
    MultiIndex::from_pairs(
        spec.sites()
            .iter()
            .zip(dense)
            .filter(|(_, &o)| o > 0)
            .map(|(s, &o)| (s.clone(), o)),
    )
}

fn sym_coeff(names_exps: &[(&str, i32)], q: BigRational) -> Coefficient {
    let mut m = Monomial::one();
    for (name, exp) in names_exps {
        m = m.mul(&Monomial::symbol_pow(Symbol::new(name), *exp));
    }
    Coefficient::term(m, q)
}

/// All occupation tuples on `sites` sites with total weight at most `cap`.
fn tuples_with_weight_up_to(sites: usize, cap: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; sites];
    fn rec(current: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if pos == current.len() {
            out.push(current.clone());
            return;
        }
        for v in 0..=left {
            current[pos] = v;
            rec(current, pos + 1, left - v, out);
        }
        current[pos] = 0;
    }
    rec(&mut current, 0, cap, &mut out);
    out
}

/// Evolves the primitive basis of a uniform even lattice from the
/// random-field point to bond coupling `w_target`, returning the numeric
/// spec at the endpoint, the basis, and the evolved values.
fn evolve_uniform(
    dimension: usize,
    extent: u32,
    k: BigRational,
    lambda: BigRational,
    w_target: BigRational,
    tol: f64,
) -> (LatticeSpec, Vec<MultiIndex>, Vec<f64>) {
    let pot = PotentialCoefficients::even(
        Coupling::Rational(k.clone()),
        Coupling::Rational(lambda.clone()),
    );
    let generation_spec =
        LatticeSpec::uniform(dimension, extent, pot.clone(), Coupling::sym("w")).unwrap();
    let basis = symmetry::primitive_basis(&generation_spec, true).unwrap();
    let system = generate_flow_system(&generation_spec, FlowParameter::GlobalW, &basis).unwrap();
    let state = integrate_flow(
        &system,
        &FlowTarget::Scalar(w_target.to_f64().unwrap()),
        tol,
    )
    .unwrap();
    let endpoint_spec =
        LatticeSpec::uniform(dimension, extent, pot, Coupling::Rational(w_target)).unwrap();
    (endpoint_spec, basis, state.values)
}

/// Normalized correlator from the evolved primitive vector.
fn flow_normalized(
    numeric_spec: &LatticeSpec,
    basis: &[MultiIndex],
    values: &[f64],
    reducer: &mut Reducer,
    nu: &MultiIndex,
) -> f64 {
    let (combo, _) = reducer.reduce(nu).unwrap();
    let mut total = 0.0;
    for (mu, coeff) in combo.iter() {
        let position = basis.iter().position(|b| b == mu).unwrap_or_else(|| {
            panic!("primitive {mu} missing from basis");
        });
        let q = coeff
            .as_rational()
            .expect("numeric reduction yields constant coefficients")
            .to_f64()
            .unwrap();
        total += q * values[position];
    }
    let vacuum = basis.iter().position(|b| b.is_empty()).unwrap();
    let _ = numeric_spec;
    total / values[vacuum]
}

#[test]
fn acceptance_1_symbolic_system_regression() {
    let started = Instant::now();

    // N = 1, flow in k:
    //   dP(0)/dk = -1/2 P(2)
    //   dP(2)/dk = k/(2 lambda) P(2) - 1/(2 lambda) P(0)
    let spec1 = LatticeSpec::random_field(
        1,
        1,
        PotentialCoefficients::even(Coupling::sym("k"), Coupling::sym("lambda")),
    )
    .unwrap();
    let basis1 = symmetry::primitive_basis(&spec1, true).unwrap();
    let k_system = generate_flow_system(&spec1, FlowParameter::GlobalK, &basis1).unwrap();
    let p0 = MultiIndex::new();
    let p2 = idx(&spec1, &[2]);
    let mut expected = BTreeMap::new();
    expected.insert(p0.clone(), {
        let mut row = LinearCombination::zero();
        row.add_term(p2.clone(), Coefficient::from_rational(rat(-1, 2)));
        row
    });
    expected.insert(p2.clone(), {
        let mut row = LinearCombination::zero();
        row.add_term(p2.clone(), sym_coeff(&[("k", 1), ("lambda", -1)], rat(1, 2)));
        row.add_term(p0.clone(), sym_coeff(&[("lambda", -1)], rat(-1, 2)));
        row
    });
    for (nu, want) in &expected {
        let row = k_system.row(0, k_system.basis_position(nu).unwrap());
        assert_eq!(row, want, "k-flow row for {nu}");
    }

    // N = 1, flow in lambda:
    //   dP(0)/dl = k/(4 l) P(2) - 1/(4 l) P(0)
    //   dP(2)/dl = -(1/(4 l))(k^2/l + 3) P(2) + k/(4 l^2) P(0)
    let l_system = generate_flow_system(&spec1, FlowParameter::GlobalLambda, &basis1).unwrap();
    let mut expected_l = BTreeMap::new();
    expected_l.insert(p0.clone(), {
        let mut row = LinearCombination::zero();
        row.add_term(p2.clone(), sym_coeff(&[("k", 1), ("lambda", -1)], rat(1, 4)));
        row.add_term(p0.clone(), sym_coeff(&[("lambda", -1)], rat(-1, 4)));
        row
    });
    expected_l.insert(p2.clone(), {
        let mut row = LinearCombination::zero();
        row.add_term(
            p2.clone(),
            sym_coeff(&[("k", 2), ("lambda", -2)], rat(-1, 4))
                .add(&sym_coeff(&[("lambda", -1)], rat(-3, 4))),
        );
        row.add_term(p0.clone(), sym_coeff(&[("k", 1), ("lambda", -2)], rat(1, 4)));
        row
    });
    for (nu, want) in &expected_l {
        let row = l_system.row(0, l_system.basis_position(nu).unwrap());
        assert_eq!(row, want, "lambda-flow row for {nu}");
    }

    // N = 2, flow in the shared bond coupling w: the five-equation system
    let spec2 = LatticeSpec::uniform_symbolic(1, 2).unwrap();
    let basis2 = symmetry::primitive_basis(&spec2, true).unwrap();
    assert_eq!(basis2.len(), 5);
    let w_system = generate_flow_system(&spec2, FlowParameter::GlobalW, &basis2).unwrap();
    let p = |dense: &[u32]| idx(&spec2, dense);
    let mut expected_w: BTreeMap<MultiIndex, LinearCombination> = BTreeMap::new();
    expected_w.insert(p(&[0, 0]), LinearCombination::unit(p(&[1, 1])));
    expected_w.insert(p(&[1, 1]), LinearCombination::unit(p(&[2, 2])));
    expected_w.insert(p(&[2, 0]), {
        let mut row = LinearCombination::zero();
        row.add_term(p(&[1, 1]), sym_coeff(&[("k", 1), ("lambda", -1)], rat_int(-1)));
        row.add_term(p(&[0, 2]), sym_coeff(&[("w", 1), ("lambda", -1)], rat_int(1)));
        row
    });
    expected_w.insert(p(&[0, 2]), {
        let mut row = LinearCombination::zero();
        row.add_term(p(&[1, 1]), sym_coeff(&[("k", 1), ("lambda", -1)], rat_int(-1)));
        row.add_term(p(&[2, 0]), sym_coeff(&[("w", 1), ("lambda", -1)], rat_int(1)));
        row
    });
    expected_w.insert(p(&[2, 2]), {
        let mut row = LinearCombination::zero();
        row.add_term(
            p(&[1, 1]),
            sym_coeff(&[("k", 2), ("lambda", -2)], rat_int(1))
                .add(&sym_coeff(&[("w", 2), ("lambda", -2)], rat_int(1))),
        );
        row.add_term(
            p(&[2, 0]),
            sym_coeff(&[("k", 1), ("w", 1), ("lambda", -2)], rat_int(-1)),
        );
        row.add_term(
            p(&[0, 2]),
            sym_coeff(&[("k", 1), ("w", 1), ("lambda", -2)], rat_int(-1)),
        );
        row.add_term(p(&[0, 0]), sym_coeff(&[("w", 1), ("lambda", -2)], rat_int(1)));
        row
    });
    for (nu, want) in &expected_w {
        let row = w_system.row(0, w_system.basis_position(nu).unwrap());
        assert_eq!(row, want, "w-flow row for {nu}");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("[PASS] criterion 1: symbolic N=1 k/lambda and N=2 w systems match exactly ({elapsed:?})");
}

#[test]
fn acceptance_2_gaussian_identity() {
    // exact propagator ratio on 100 random nonsingular coupling triples
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 100 {
        let k1 = rat(rng.gen_range(-12i64..=12), rng.gen_range(1i64..=9));
        let k2 = rat(rng.gen_range(-12i64..=12), rng.gen_range(1i64..=9));
        let w = rat(rng.gen_range(-12i64..=12), rng.gen_range(1i64..=9));
        let det = &k1 * &k2 - &w * &w;
        if det.is_zero() || w.is_zero() {
            continue;
        }
        let mut spec = LatticeSpec::uniform(
            1,
            2,
            PotentialCoefficients::gaussian(Coupling::Rational(k1.clone())),
            Coupling::Rational(w.clone()),
        )
        .unwrap();
        let s1 = spec.site(&[1]);
        spec.set_site_potential(s1, PotentialCoefficients::gaussian(Coupling::Rational(k2)));
        let alpha = lds_core::reduction::gaussian_reduce(&idx(&spec, &[1, 1]), &spec).unwrap();
        assert_eq!(alpha, &w / &det, "triple #{checked}");
        checked += 1;
    }

    // discrete-Fourier propagator against the reduction ratio for N <= 8
    let m = rat_int(1);
    let a = rat(1, 2);
    let mut worst: f64 = 0.0;
    for extent in 1u32..=8 {
        let spec = LatticeSpec::free_field(extent, m.clone(), a.clone()).unwrap();
        for n in 0..extent {
            let nu = if n == 0 {
                MultiIndex::from_pairs([(spec.site(&[0]), 2)])
            } else {
                MultiIndex::from_pairs([(spec.site(&[0]), 1), (spec.site(&[i64::from(n)]), 1)])
            };
            let alpha = lds_core::reduction::gaussian_reduce(&nu, &spec)
                .unwrap()
                .to_f64()
                .unwrap();
            let dft = propagators::propagator_circular_lattice::<f64>(
                1.0,
                extent,
                0.5,
                i64::from(n),
            );
            worst = worst.max((alpha - dft).abs());
        }
    }
    assert!(worst < 1e-10, "worst DFT gap {worst}");
    println!("[PASS] criterion 2: gaussian ratio exact on 100 triples; DFT gap {worst:.2e} for N<=8");
}

#[test]
fn acceptance_3_master_identity_vs_oracle() {
    let started = Instant::now();
    let (k, lambda, w) = (rat_int(1), rat(1, 2), rat(1, 4));
    let mut worst: f64 = 0.0;
    for extent in [2u32, 3] {
        let (numeric_spec, basis, values) =
            evolve_uniform(1, extent, k.clone(), lambda.clone(), w.clone(), 1e-10);
        let nodes = if extent == 2 { 96 } else { 64 };
        let grid = OracleGrid::<f64>::new(&numeric_spec, nodes, None).unwrap();
        let mut reducer = Reducer::new(&numeric_spec);
        for dense in tuples_with_weight_up_to(extent as usize, 6) {
            let nu = idx(&numeric_spec, &dense);
            if nu.weight() % 2 == 1 {
                assert!(symmetry::is_parity_zero(&nu, &numeric_spec).unwrap());
                assert_eq!(grid.normalized(&nu), 0.0);
                continue;
            }
            let from_flow = flow_normalized(&numeric_spec, &basis, &values, &mut reducer, &nu);
            let from_oracle = grid.normalized(&nu);
            let rel = (from_flow - from_oracle).abs() / from_oracle.abs().max(1e-12);
            worst = worst.max(rel);
            assert!(
                rel < 1e-5,
                "N={extent}, nu={nu}: flow {from_flow} vs oracle {from_oracle} (rel {rel:.2e})"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: flow matches oracle for all weight<=6 on N=2,3 (worst rel {worst:.2e}, {elapsed:?})"
    );
}

#[test]
fn acceptance_4_counting() {
    let expected = [2u128, 5, 14, 41, 122, 365, 1094, 3281];
    for (n, &want) in (1u32..=8).zip(&expected) {
        assert_eq!(
            count_primitive_basis(n, 1, 4, CountLevel::Parity).unwrap(),
            want,
            "parity count at N={n}"
        );
    }
    for n in 3u32..=8 {
        let full = count_primitive_basis(n, 1, 4, CountLevel::Full).unwrap();
        let bound = 3u128.pow(n) / (4 * u128::from(n));
        assert!(full >= bound, "N={n}: full count {full} below bound {bound}");
    }
    for n in 1u32..=8 {
        assert_eq!(
            count_primitive_basis(n, 1, 3, CountLevel::None).unwrap(),
            2u128.pow(n),
            "cubic raw count at N={n}"
        );
    }
    println!("[PASS] criterion 4: parity sequence, orbit lower bounds, and cubic raw counts hold");
}

#[test]
fn acceptance_5_propagator_figure_values() {
    let params = propagators::lattice_effective_params::<f64>(1.0, 0.9);
    assert!((params.z_eff - 0.456).abs() < 1e-3, "Z_eff {}", params.z_eff);
    assert!((params.m_eff - 0.969).abs() < 1e-3, "m_eff {}", params.m_eff);

    assert!((propagators::propagator_line::<f64>(1.0, 0.0) - 0.5).abs() < 1e-12);

    // T-periodicity at 1e-10 and closeness to the line for t <= T/4 at mT=8
    let (m, period) = (1.0f64, 8.0f64);
    for t in [0.3, 1.0, 1.7, 3.2] {
        let v = propagators::propagator_circle(m, period, t, 1e-11).unwrap();
        let v_shifted = propagators::propagator_circle(m, period, t + period, 1e-11).unwrap();
        assert!((v - v_shifted).abs() < 1e-10, "periodicity at t={t}");
    }
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let circle = propagators::propagator_circle(m, period, t, 1e-11).unwrap();
        let line = propagators::propagator_line(m, t);
        let rel = (circle - line).abs() / line;
        assert!(rel < 0.05, "t={t}: circle {circle} vs line {line}");
    }
    println!(
        "[PASS] criterion 5: Z_eff={:.4}, m_eff={:.4}, line Z=0.5, circle periodic and within 5% of line",
        params.z_eff, params.m_eff
    );
}

#[test]
fn acceptance_6_property_suite() {
    // path independence under 20 random site orders per input
    let spec3 = LatticeSpec::uniform_symbolic(1, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dense in [[4u32, 3, 2], [6, 0, 3], [3, 3, 3], [5, 4, 1]] {
        let nu = idx(&spec3, &dense);
        let (reference, _) = reduce_to_primitive(&nu, &spec3).unwrap();
        for _ in 0..20 {
            let mut reducer = Reducer::new(&spec3);
            let picks: Vec<usize> = (0..64).map(|_| rng.gen_range(0..16)).collect();
            let mut cursor = 0;
            let (alt, _) = reducer
                .reduce_with_strategy(&nu, &mut |sites| {
                    let choice = picks[cursor % picks.len()] % sites.len();
                    cursor += 1;
                    sites[choice].clone()
                })
                .unwrap();
            assert_eq!(reference, alt, "path dependence on {nu}");
        }
    }

    // operator commutation on random inputs for N <= 5, adjacent included
    for extent in [3u32, 4, 5] {
        let spec = LatticeSpec::uniform_symbolic(1, extent).unwrap();
        for trial in 0..10 {
            let dense: Vec<u32> = (0..extent).map(|_| rng.gen_range(4..9)).collect();
            let nu = idx(&spec, &dense);
            let i = spec.site(&[rng.gen_range(0..i64::from(extent))]);
            let offset = if trial % 2 == 0 { 1 } else { 2 };
            let j = spec.site(&[i.coords()[0] + offset]);
            assert!(
                check_operator_commutation(&i, &j, &nu, &spec).unwrap(),
                "commutator at {i} {j} on {nu}"
            );
        }
    }

    // parity conservation of reductions
    for _ in 0..20 {
        let dense: Vec<u32> = (0..3).map(|_| rng.gen_range(0..6)).collect();
        let nu = idx(&spec3, &dense);
        let parity = nu.weight() % 2;
        let (combo, _) = reduce_to_primitive(&nu, &spec3).unwrap();
        for (term, _) in combo.iter() {
            assert_eq!(term.weight() % 2, parity, "parity broken for {nu}");
        }
    }

    // random-field factorization across sites
    let rf_spec = LatticeSpec::random_field(
        1,
        3,
        PotentialCoefficients::even(Coupling::sym("k"), Coupling::sym("lambda")),
    )
    .unwrap();
    for _ in 0..10 {
        let dense: Vec<u32> = (0..3).map(|_| rng.gen_range(0..7)).collect();
        let nu = idx(&rf_spec, &dense);
        let joint = reduce_random_field(&nu, &rf_spec).unwrap();
        let mut product = LinearCombination::unit(MultiIndex::new());
        for (site, occ) in nu.iter() {
            let single =
                reduce_random_field(&MultiIndex::from_pairs([(site.clone(), occ)]), &rf_spec)
                    .unwrap();
            let mut next = LinearCombination::zero();
            for (nu_a, c_a) in product.iter() {
                for (nu_b, c_b) in single.iter() {
                    let merged = MultiIndex::from_pairs(
                        nu_a.iter().chain(nu_b.iter()).map(|(s, o)| (s.clone(), o)),
                    );
                    next.add_term(merged, c_a.mul(c_b));
                }
            }
            product = next;
        }
        assert_eq!(joint, product, "factorization broken for {nu}");
    }

    // rigidity: the vacuum's dependency closure is the whole basis
    for extent in [2u32, 3] {
        let spec = LatticeSpec::uniform_symbolic(1, extent).unwrap();
        let basis = symmetry::primitive_basis(&spec, true).unwrap();
        let system = generate_flow_system(&spec, FlowParameter::GlobalW, &basis).unwrap();
        let closure = dependency_closure(&[MultiIndex::new()], &system);
        assert_eq!(closure.len(), basis.len(), "closure at N={extent}");
    }
    println!("[PASS] criterion 6: path independence, commutators, parity, factorization, rigidity");
}

#[test]
fn acceptance_7_compatibility() {
    // exact per-bond compatibility residuals at 10 random rational points
    let pot = PotentialCoefficients::even(
        Coupling::Rational(rat_int(1)),
        Coupling::Rational(rat(1, 2)),
    );
    let spec = LatticeSpec::per_bond_symbolic(1, 3, pot.clone()).unwrap();
    let basis = symmetry::primitive_basis(&spec, true).unwrap();
    let system = generate_flow_system(&spec, FlowParameter::PerBondW, &basis).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let point: Vec<BigRational> = (0..3)
            .map(|_| rat(rng.gen_range(-6i64..=6), rng.gen_range(2i64..=9)))
            .collect();
        let residual = max_compatibility_residual(&system, &point).unwrap();
        worst = worst.max(residual);
    }
    assert!(worst < 1e-8, "worst residual {worst}");

    // sequential vs diagonal flow endpoints
    let tol = 1e-10;
    let targets = vec![0.22f64, 0.17, 0.25];
    let sequential = integrate_flow(
        &system,
        &FlowTarget::PerBond {
            values: targets.clone(),
            path: FlowPath::Sequential,
        },
        tol,
    )
    .unwrap();
    let diagonal = integrate_flow(
        &system,
        &FlowTarget::PerBond {
            values: targets,
            path: FlowPath::Diagonal,
        },
        tol,
    )
    .unwrap();
    let mut endpoint_gap: f64 = 0.0;
    for (a, b) in sequential.values.iter().zip(&diagonal.values) {
        endpoint_gap = endpoint_gap.max((a - b).abs() / a.abs().max(1.0));
    }
    assert!(
        endpoint_gap < 10.0 * tol,
        "sequential vs diagonal gap {endpoint_gap}"
    );
    println!(
        "[PASS] criterion 7: compatibility residual {worst:.2e}; path gap {endpoint_gap:.2e}"
    );
}

#[test]
fn acceptance_8_d2_smoke_test() {
    let started = Instant::now();
    let (k, lambda, w) = (rat_int(1), rat(1, 2), rat(1, 4));
    let (numeric_spec, basis, values) = evolve_uniform(2, 2, k, lambda, w, 1e-10);
    assert_eq!(numeric_spec.site_count(), 4);
    assert_eq!(numeric_spec.bond_count(), 4);
    assert_eq!(basis.len(), 41);

    let grid = OracleGrid::<f64>::new(&numeric_spec, 40, None).unwrap();
    let mut reducer = Reducer::new(&numeric_spec);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for dense in tuples_with_weight_up_to(4, 4) {
        let nu = idx(&numeric_spec, &dense);
        if nu.weight() % 2 == 1 {
            assert_eq!(grid.normalized(&nu), 0.0);
            continue;
        }
        let from_flow = flow_normalized(&numeric_spec, &basis, &values, &mut reducer, &nu);
        let from_oracle = grid.normalized(&nu);
        let rel = (from_flow - from_oracle).abs() / from_oracle.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(
            rel < 1e-5,
            "nu={nu}: flow {from_flow} vs oracle {from_oracle} (rel {rel:.2e})"
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    println!(
        "[PASS] criterion 8: 2x2 lattice, {checked} even correlators of weight<=4 match (worst rel {worst:.2e}, {elapsed:?})"
    );
}
