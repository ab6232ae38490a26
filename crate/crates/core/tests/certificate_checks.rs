mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scencert::allocations::*;
use scencert::certificates::*;
use scencert::numerics::*;

const UPPER: IntervalChoice = IntervalChoice::UpperOnlyHN;

fn mi(v: &[usize]) -> MultiIndex {
    MultiIndex::new(v.to_vec()).unwrap()
}

/// 1 − (β/N) Σ_{h=k}^{N−1} C(h,k)/C(N,k) (1−v)^{h−N}, with the binomial
/// ratios built as plain products.
fn upper_only_lhs(n: usize, k: usize, beta: f64) -> impl Fn(f64) -> f64 {
    let mut coeff = vec![0.0; n];
    for (h, c) in coeff.iter_mut().enumerate().skip(k) {
        // C(h,k)/C(N,k) = Π_{i<k} (h−i)/(N−i)
        *c = (0..k).map(|i| (h - i) as f64 / (n - i) as f64).product();
    }
    move |v| {
        let x = 1.0 / (1.0 - v);
        let mut p = 1.0;
        let mut s = 0.0;
        for h in (k..n).rev() {
            p *= x;
            s += coeff[h] * p;
        }
        1.0 - beta / n as f64 * s
    }
}

#[test]
fn box_bounds_match_dense_scan() {
    let per = [(800, 120, 5e-6), (1200, 80, 5e-6)];
    let cert = box_region(&per, UPPER).unwrap();
    let RegionPayload::IndependentBox { bounds, .. } = &cert.payload else { panic!() };
    for (b, &(n, k, beta)) in bounds.iter().zip(&per) {
        let roots = dense_scan_roots(upper_only_lhs(n, k, beta), 0.0, 1.0, 1_000_000);
        assert_eq!(roots.len(), 1, "{roots:?}");
        assert!((b.eps_hi - roots[0]).abs() < 1e-6, "{} vs {}", b.eps_hi, roots[0]);
        assert_eq!(b.eps_lo, 0.0);
    }
    let (e1, e2) = (bounds[0].eps_hi, bounds[1].eps_hi);
    assert!(cert.contains(&[e1 - 1e-9, e2 - 1e-9]).unwrap());
    assert!(!cert.contains(&[e1 + 1e-6, 0.0]).unwrap());
    assert!(!cert.contains(&[0.0, e2 + 1e-6]).unwrap());
    assert!((cert.confidence - (1.0 - 1e-5)).abs() < 1e-15);
}

#[test]
fn box_with_full_complexity_is_unit_cube() {
    let cert = box_region(&[(30, 30, 0.01), (7, 7, 0.02), (9, 9, 0.01)], UPPER).unwrap();
    let RegionPayload::IndependentBox { bounds, .. } = &cert.payload else { panic!() };
    assert!(bounds.iter().all(|b| b.eps_lo == 0.0 && b.eps_hi == 1.0));
}

#[test]
fn diagonal_band_matches_region_function() {
    let (n, k, beta) = (mi(&[800, 1200]), mi(&[120, 80]), 1e-5);
    let cert = diagonal_region(&n, &n, &k, beta).unwrap();
    let alloc = AllocationSpec::diagonal(n.clone(), n.clone(), beta).unwrap();
    let g = alloc.region_fn(&k).unwrap();
    let mut inside = 0;
    for i in 0..200 {
        for j in 0..200 {
            let v = [i as f64 / 200.0, j as f64 / 200.0];
            let a = cert.contains(&v).unwrap();
            assert_eq!(a, g.eval(&v).unwrap() >= 0.0, "v = {v:?}");
            inside += usize::from(a);
        }
    }
    assert!(inside > 100 && inside < 40_000 - 100);
}

#[test]
fn band_with_saturated_criterion_has_no_lower_edge() {
    let c = diagonal_region(&mi(&[10, 20]), &mi(&[15, 25]), &mi(&[10, 4]), 0.1).unwrap();
    let RegionPayload::DiagonalBand(rp) = c.payload else { panic!() };
    assert_eq!(rp.t_bar, 0.0);
    assert!(rp.t_underbar < 1.0);
    let h_eq_n = diagonal_region(&mi(&[10, 20]), &mi(&[10, 20]), &mi(&[3, 4]), 0.1).unwrap();
    let RegionPayload::DiagonalBand(rp) = h_eq_n.payload else { panic!() };
    assert!(rp.t_bar > 0.0);
    assert_eq!(rp.t_underbar, 1.0);
}

/// max of Σv over `res^2` grid points accepted by `member`.
fn grid_max_2d(res: usize, member: impl Fn(&[f64]) -> bool) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..res {
        for j in 0..res {
            let v = [i as f64 / res as f64, j as f64 / res as f64];
            if v[0] + v[1] > best && member(&v) {
                best = v[0] + v[1];
            }
        }
    }
    best
}

#[test]
fn diagonal_closed_form_matches_grid_search() {
    let (n, k, beta) = (mi(&[50, 50]), mi(&[5, 5]), 0.05);
    let closed = joint_bound_diagonal(&n, &k, beta).unwrap();
    let cert = diagonal_region(&n, &n, &k, beta).unwrap();
    let grid = grid_max_2d(2000, |v| cert.contains(v).unwrap());
    assert!(grid <= closed.raw_bound + 1e-12);
    assert!(closed.raw_bound - grid < 2e-3, "{} vs {grid}", closed.raw_bound);
}

#[test]
fn region_max_reproduces_diagonal_closed_form() {
    for (n, k, beta) in [
        (mi(&[50, 50]), mi(&[5, 5]), 0.05),
        (mi(&[80, 120]), mi(&[3, 10]), 1e-3),
        (mi(&[40, 40, 60]), mi(&[2, 4, 1]), 0.01),
    ] {
        let closed = joint_bound_diagonal(&n, &k, beta).unwrap().raw_bound;
        let alloc = AllocationSpec::diagonal(n.clone(), n.clone(), beta).unwrap();
        let cert = allocation_region(&alloc, &k).unwrap();
        let res = if n.m() == 2 { 400 } else { 100 };
        let got = joint_bound_region_max(&cert, REGION_MAX_DIMS, res).unwrap();
        assert_eq!(got.method, Method::GeneralRegionMax);
        // conservative: never below the exact max, and close to it
        assert!(got.raw_bound >= closed - 1e-9, "{} vs {closed}", got.raw_bound);
        assert!(got.raw_bound - closed < 2e-3, "{} vs {closed}", got.raw_bound);
    }
}

#[test]
fn axial_region_max_sits_below_independent_sum() {
    let (n, beta) = (mi(&[200, 200]), 1e-3);
    let alloc = AllocationSpec::axial(n.clone(), n.clone(), beta).unwrap();
    for k in [mi(&[5, 5]), mi(&[20, 2])] {
        let cert = allocation_region(&alloc, &k).unwrap();
        let got = joint_bound_region_max(&cert, REGION_MAX_DIMS, 400).unwrap().raw_bound;
        let per = split_beta(&n, &k, beta).unwrap();
        let sum = joint_bound_independent(&per, UPPER).unwrap().raw_bound;
        // the axial region sits inside the β/2 box; the gap is the
        // difference between splitting the budget and sharing it
        assert!(got <= sum + 2e-3, "{got} vs {sum}");
        assert!(sum - got < 0.05 * sum, "{got} vs {sum}");
    }
}

#[test]
fn uniform_region_max_matches_grid_search() {
    let (n, k, beta) = (mi(&[800, 1200]), mi(&[120, 80]), 1e-5);
    let alloc = AllocationSpec::uniform(n.clone(), n.clone(), beta).unwrap();
    let g = alloc.region_fn(&k).unwrap();
    let cert = allocation_region(&alloc, &k).unwrap();
    let got = joint_bound_region_max(&cert, REGION_MAX_DIMS, 400).unwrap().raw_bound;
    let grid = grid_max_2d(2000, |v| g.eval(v).unwrap() >= 0.0);
    assert!(got >= grid, "{got} vs {grid}");
    assert!(got - grid < 2e-3, "{got} vs {grid}");
}

#[test]
fn region_max_rejects_high_dimension() {
    let n = mi(&[10; 4]);
    let alloc = AllocationSpec::uniform(n.clone(), n.clone(), 0.1).unwrap();
    let cert = allocation_region(&alloc, &mi(&[1; 4])).unwrap();
    assert!(matches!(
        joint_bound_region_max(&cert, REGION_MAX_DIMS, 10),
        Err(scencert::Error::Dimension { m: 4, limit: 3 })
    ));
}

#[test]
fn independent_dp_matches_brute_force() {
    for (per, k_star) in [
        (vec![(50, 0.05), (50, 0.05)], 6),
        (vec![(50, 0.05), (50, 0.05)], 0),
        (vec![(20, 0.01), (35, 0.02), (20, 0.01)], 9),
        (vec![(4, 0.1), (6, 0.1)], 30),
    ] {
        let tables: Vec<Vec<f64>> = per
            .iter()
            .map(|&(n, b)| (0..=n).map(|k| scalar_interval(n, k, b, UPPER).unwrap().eps_hi).collect())
            .collect();
        let mut best = f64::NEG_INFINITY;
        let ns = mi(&per.iter().map(|p| p.0).collect::<Vec<_>>());
        for total in 0..=k_star {
            for k in compositions(&ns, total) {
                let s: f64 = k.entries().iter().zip(&tables).map(|(&ki, t)| t[ki]).sum();
                best = best.max(s);
            }
        }
        let dp = apriori_bound_independent(&per, k_star, UPPER).unwrap();
        assert!((dp.raw_bound - best).abs() <= 1e-14, "{} vs {best}", dp.raw_bound);
        assert_eq!(dp.bound, best.min(1.0));
    }
}

#[test]
fn bestcase_matches_brute_force() {
    for (n, k_star, beta) in [(mi(&[50, 50]), 7, 0.05), (mi(&[30, 30, 30]), 8, 0.01)] {
        let want = compositions(&n, k_star)
            .iter()
            .map(|k| joint_bound_diagonal(&n, k, beta).unwrap().raw_bound)
            .fold(f64::INFINITY, f64::min);
        let got = apriori_bound_bestcase(&n, beta, k_star).unwrap();
        assert!((got.raw_bound - want).abs() <= 1e-12, "{} vs {want}", got.raw_bound);
    }
    // uneven N falls back to enumeration
    let n = mi(&[20, 60]);
    let got = apriori_bound_bestcase(&n, 0.05, 10).unwrap();
    let want = compositions(&n, 10)
        .iter()
        .map(|k| joint_bound_diagonal(&n, k, 0.05).unwrap().raw_bound)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(got.raw_bound, want);
    assert!(apriori_bound_bestcase(&mi(&[3, 3]), 0.05, 7).is_err());
}

#[test]
fn dominance_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let m = rng.random_range(1..=200);
        let nl = rng.random_range(20..=2000);
        let k_star = rng.random_range(0..nl.min(m * nl));
        let beta = 10f64.powf(-rng.random_range(1.0..8.0));
        let n = MultiIndex::filled(m, nl).unwrap();
        let best = apriori_bound_bestcase(&n, beta, k_star).unwrap();
        let worst = apriori_bound_diagonal(&n, beta, k_star).unwrap();
        let uni = uniform_in_m_bound(nl, beta, k_star).unwrap();
        let ctx = format!("m={m} N={nl} K*={k_star} beta={beta:e}");
        assert!(best.raw_bound <= worst.raw_bound + 1e-12, "{ctx}");
        assert!(worst.raw_bound <= uni.raw_bound + 1e-12, "{ctx}");
        assert!(best.bound <= worst.bound && worst.bound <= uni.bound, "{ctx}");
    }
}

#[test]
fn worst_case_covers_every_complexity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let m = rng.random_range(1..=6);
        let n: Vec<usize> = (0..m).map(|_| rng.random_range(30..=300)).collect();
        let nl = *n.iter().min().unwrap();
        let k_star = rng.random_range(0..nl);
        let beta = 10f64.powf(-rng.random_range(1.0..7.0));
        // random k with |k| ≤ K*
        let budget = rng.random_range(0..=k_star);
        let mut k = vec![0usize; m];
        for _ in 0..budget {
            k[rng.random_range(0..m)] += 1;
        }
        let n = mi(&n);
        let post = joint_bound_diagonal(&n, &mi(&k), beta).unwrap();
        let prior = apriori_bound_diagonal(&n, beta, k_star).unwrap();
        assert!(post.raw_bound <= prior.raw_bound + 1e-12, "N={n} k={k:?} K*={k_star}");
    }
}

#[test]
fn apriori_monotone_in_k_star_and_m() {
    let beta = 1e-5;
    let mut prev = 0.0;
    for k_star in 0..400 {
        let b = apriori_bound_diagonal(&MultiIndex::filled(5, 400).unwrap(), beta, k_star).unwrap();
        assert!(b.raw_bound >= prev - 1e-12, "K* = {k_star}");
        prev = b.raw_bound;
    }
    let uni = uniform_in_m_bound(1000, beta, 100).unwrap().raw_bound;
    let mut prev = 0.0;
    for m in (1..=1000).step_by(37) {
        let b = apriori_bound_diagonal(&MultiIndex::filled(m, 1000).unwrap(), beta, 100).unwrap();
        assert!(b.raw_bound >= prev - 1e-12 && b.raw_bound <= uni + 1e-12, "m = {m}");
        prev = b.raw_bound;
    }
    // the limit is approached from below with a small gap
    assert!(uni - prev < 0.01, "{uni} vs {prev}");
}

#[test]
fn single_criterion_apriori_equals_scalar_interval() {
    let t1 = scalar_interval(1000, 100, 1e-5, UPPER).unwrap().eps_hi;
    let n = mi(&[1000]);
    for b in [
        apriori_bound_diagonal(&n, 1e-5, 100).unwrap(),
        apriori_bound_bestcase(&n, 1e-5, 100).unwrap(),
        apriori_bound_independent(&[(1000, 1e-5)], 100, UPPER).unwrap(),
    ] {
        assert!((b.raw_bound - t1).abs() < 1e-8, "{:?}: {} vs {t1}", b.method, b.raw_bound);
    }
    assert!((t1 - 0.158).abs() < 0.002);
}

#[test]
fn bounds_are_capped() {
    let per: Vec<_> = (0..60).map(|_| (1500, 40, 1e-9)).collect();
    let c = joint_bound_independent(&per, UPPER).unwrap();
    assert!(c.raw_bound > 1.0);
    assert_eq!(c.bound, 1.0);
    let a = apriori_bound_independent(&[(1000, 1e-7); 300], 1000, UPPER).unwrap();
    assert!(a.raw_bound > 1.0 && a.bound == 1.0);
    let u = uniform_in_m_bound(10, 0.1, 10).unwrap();
    assert_eq!(u.bound, 1.0);
    let d = joint_bound_diagonal(&mi(&[5, 5]), &mi(&[5, 5]), 0.1).unwrap();
    assert!(d.raw_bound > 1.0 && d.bound == 1.0);
    for c in [c, a, u, d] {
        assert!((0.0..=1.0).contains(&c.bound));
    }
}

#[test]
fn sizing_with_zero_complexity_round_trips() {
    for (mode, eps) in [(SizingMode::UniformInM, 0.05), (SizingMode::FiniteM, 0.1)] {
        let req = SizingRequest { m: 4, k_star: 0, beta: 1e-6, eps_target: eps, mode };
        let r = size_datasets(&req).unwrap();
        let threshold = match mode {
            SizingMode::UniformInM => (-eps).exp(),
            SizingMode::FiniteM => (1.0 - eps / 4.0).powi(4),
        };
        // ψ_{0,N,N}(t) = 1 − (β/N) Σ_{j=1}^{N} t^{−j} is increasing; the zero
        // sits at or above the threshold exactly when ψ(threshold) ≤ 0
        let psi0 = |n: usize| psi_direct_1d(0, n, n, 1e-6 / n as f64, 0.0, threshold);
        assert!(psi0(r.n_lower) <= 0.0, "{mode:?}: N = {}", r.n_lower);
        assert!(psi0(r.n_lower - 1) > 0.0, "{mode:?}: N - 1 = {}", r.n_lower - 1);
        assert!(r.bound <= eps);
    }
}

#[test]
fn sizing_finite_m_reference() {
    let req = SizingRequest { m: 5, k_star: 10, beta: 1e-5, eps_target: 0.2, mode: SizingMode::FiniteM };
    let r = size_datasets(&req).unwrap();
    let at = |n: usize| apriori_bound_diagonal(&MultiIndex::filled(5, n).unwrap(), 1e-5, 10).unwrap().raw_bound;
    assert!(at(r.n_lower) <= 0.2);
    assert!(at(r.n_lower - 1) > 0.2);
    assert!(r.n_lower > 10);
}

#[test]
fn sizing_random_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for mode in [SizingMode::FiniteM, SizingMode::UniformInM] {
        for _ in 0..20 {
            let req = SizingRequest {
                m: rng.random_range(1..=50),
                k_star: rng.random_range(0..=200),
                beta: 10f64.powf(-rng.random_range(1.0..9.0)),
                eps_target: rng.random_range(0.01..0.9),
                mode,
            };
            let r = size_datasets(&req).unwrap();
            assert!(req.satisfied_at(r.n_lower).unwrap(), "{req:?}");
            assert!(r.n_lower == req.k_star + 1 || !req.satisfied_at(r.n_lower - 1).unwrap(), "{req:?}");
        }
    }
}

#[test]
fn amgm_never_exceeds_log_bound() {
    for m in 1..=100 {
        for i in 1..=1000 {
            let t = i as f64 / 1000.0;
            assert!(amgm_closed_form(m, t) <= -t.ln() + 1e-12, "m={m} t={t}");
        }
    }
    assert!((amgm_closed_form(1, 0.3) - 0.7).abs() < 1e-15);
}
