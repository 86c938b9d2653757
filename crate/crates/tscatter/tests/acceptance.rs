//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them all).
//!
//! The criteria pin golden values of the four-atom law, the limit behavior
//! of the two counterexample sequences, structural identities at every fit,
//! derivative correctness against finite differences, equivariance,
//! uniqueness, exact domain checking against an exhaustive oracle, influence
//! cross-validation, and desk-scale central-limit behavior.

#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tscatter::asymptotics::{mc_normality, sandwich_covariance, McOptions};
use tscatter::calculus::{gradient, hessian, influence, InfluenceOperator};
use tscatter::counterexample::{limits, make_pk, make_qk};
use tscatter::domain::{in_u, in_v, max_subspace_mass};
use tscatter::equivariance::{check_equivariance, random_nonsingular_map};
use tscatter::model::lift_sample;
use tscatter::rng::stream_rng;
use tscatter::solver::{
    fit_location_scatter, fit_scatter, fit_univariate, multistart_uniqueness_probe,
    verify_critical_point,
};
use tscatter::symmat::{tri_pairs, PosDefMatrix, SymMatrix};
use tscatter::{u_weight, Error, Sample, TConfig};

fn pass(number: usize, name: &str, detail: String) {
    println!("criterion {number:02} PASS  {name}  [{detail}]");
}

fn elapsed_under(start: Instant, seconds: f64, number: usize) {
    let took = start.elapsed().as_secs_f64();
    assert!(
        took < seconds,
        "criterion {number} exceeded its runtime budget: {took:.2}s >= {seconds}s"
    );
}

fn cfg(nu: f64, dim: usize) -> TConfig {
    TConfig::new(nu, dim).unwrap()
}

fn standard_normal_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Uniform empirical law of `n` standard normal points, redrawn until it is
/// strictly inside the affine existence domain at the smallest `nu` used by
/// the suite.
fn random_in_domain_sample(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Sample {
    loop {
        let sample = Sample::uniform(standard_normal_points(rng, n, d)).unwrap();
        if in_v(&sample, &cfg(1.5, d)).unwrap().member {
            return sample;
        }
    }
}

fn random_pd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> PosDefMatrix {
    let g: Vec<f64> = (0..d * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut m = SymMatrix::from_fn(d, |i, j| (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum());
    for i in 0..d {
        m.set(i, i, m.get(i, i) + ridge);
    }
    PosDefMatrix::new(m).unwrap()
}

#[test]
fn criterion_01_golden_four_atom_fits() {
    let start = Instant::now();
    let q1 = make_qk(1).unwrap();
    for nu in [2.0, 5.0, 10.0] {
        let fit = fit_location_scatter(&q1, &cfg(nu, 2)).unwrap();
        let b = (2.0 + 1.0 / nu) / 3.0;
        let c = (1.0 - 1.0 / nu) / 3.0;
        assert!(fit.mu[0].abs() < 1e-8 && fit.mu[1].abs() < 1e-8);
        assert!((fit.sigma.get(0, 0) - b).abs() < 1e-8, "nu={nu}");
        assert!((fit.sigma.get(1, 1) - c).abs() < 1e-8, "nu={nu}");
        assert!(fit.sigma.get(0, 1).abs() < 1e-8);
    }
    elapsed_under(start, 1.0, 1);
    pass(
        1,
        "golden four-atom fits",
        format!("3 fits in {:?}", start.elapsed()),
    );
}

#[test]
fn criterion_02_sequence_limits_at_k100() {
    let start = Instant::now();
    let c = cfg(2.0, 2);
    let lim = limits(&c).unwrap();
    let fit_p = fit_location_scatter(&make_pk(100).unwrap(), &c).unwrap();
    let fit_q = fit_location_scatter(&make_qk(100).unwrap(), &c).unwrap();
    assert!((fit_p.sigma.get(0, 0) - 1.0 / 3.0).abs() < 1e-2);
    assert!(fit_p.sigma.get(1, 1) < 1e-3);
    assert!((fit_q.sigma.get(0, 0) - 5.0 / 6.0).abs() < 1e-2);
    let gap = fit_q.sigma.get(0, 0) - fit_p.sigma.get(0, 0);
    assert!((gap - 0.5).abs() < 1e-2);
    assert!((lim.b - lim.a - 0.5).abs() < 1e-12);
    elapsed_under(start, 5.0, 2);
    pass(
        2,
        "sequence limits at k=100",
        format!("gap {gap:.6} in {:?}", start.elapsed()),
    );
}

#[test]
fn criterion_03_large_nu_recovers_covariance() {
    let start = Instant::now();
    let fit = fit_location_scatter(&make_qk(1).unwrap(), &cfg(1e4, 2)).unwrap();
    assert!((fit.sigma.get(0, 0) - 2.0 / 3.0).abs() < 1e-3);
    assert!((fit.sigma.get(1, 1) - 1.0 / 3.0).abs() < 1e-3);
    assert!(fit.sigma.get(0, 1).abs() < 1e-3);
    assert!(fit.mu[0].abs() < 1e-3 && fit.mu[1].abs() < 1e-3);
    elapsed_under(start, 1.0, 3);
    pass(
        3,
        "large-nu covariance limit",
        format!("{:?}", start.elapsed()),
    );
}

/// The 50 random fits shared by criteria 4 and 6, regenerated
/// deterministically.
fn structural_fit_cases() -> Vec<(Sample, TConfig)> {
    let mut rng = stream_rng(2024, 0, 100);
    let nus = [1.5, 3.0, 8.0];
    (0..50)
        .map(|i| {
            let d = 1 + i % 3;
            let n = 8 + (rng.random::<u32>() % 33) as usize;
            let sample = random_in_domain_sample(&mut rng, d, n);
            (sample, cfg(nus[i % 3], d))
        })
        .collect()
}

#[test]
fn criterion_04_structural_identities_at_every_fit() {
    let start = Instant::now();
    let mut worst_gamma = 0.0f64;
    let mut worst_weight = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut worst_gradient = 0.0f64;
    for (sample, c) in structural_fit_cases() {
        let d = sample.dim();
        let fit = fit_location_scatter(&sample, &c).unwrap();
        let a = fit.lifted.as_ref().unwrap();
        worst_gamma = worst_gamma.max((fit.gamma_check - 1.0).abs());
        worst_weight = worst_weight.max((fit.weight_sum - 1.0).abs());

        // per-point weight identity between the lifted and base problems
        let lifted_cfg = c.lifted().unwrap();
        let sigma = fit.sigma_pd().unwrap();
        for (y, _) in sample.iter() {
            let mut z = y.to_vec();
            z.push(1.0);
            let lifted_u = u_weight(a.inv_quad_form(&z), &lifted_cfg).unwrap();
            let centered: Vec<f64> = y.iter().zip(&fit.mu).map(|(a, b)| a - b).collect();
            let base_u = u_weight(sigma.inv_quad_form(&centered), &c).unwrap();
            worst_identity = worst_identity.max((lifted_u - base_u).abs());
        }

        let (fp, grad) = verify_critical_point(&lift_sample(&sample), a, &lifted_cfg).unwrap();
        worst_residual = worst_residual.max(fp);
        worst_gradient = worst_gradient.max(grad);
        assert_eq!(d + 1, a.dim());
    }
    assert!(worst_gamma < 1e-8, "corner defect {worst_gamma}");
    assert!(worst_weight < 1e-8, "weight-sum defect {worst_weight}");
    assert!(
        worst_identity < 1e-9,
        "weight identity defect {worst_identity}"
    );
    assert!(
        worst_residual < 1e-9,
        "fixed-point residual {worst_residual}"
    );
    assert!(worst_gradient < 1e-8, "gradient norm {worst_gradient}");
    elapsed_under(start, 30.0, 4);
    pass(
        4,
        "structural identities on 50 random fits",
        format!(
            "corner {worst_gamma:.1e}, weights {worst_weight:.1e}, identity {worst_identity:.1e}, residual {worst_residual:.1e}, gradient {worst_gradient:.1e}"
        ),
    );
}

/// Objective as a function of the inverse parameters; the oracle route for
/// criterion 5.
fn objective_of_inverse(q: &Sample, c_mat: &SymMatrix, c: &TConfig) -> f64 {
    let chol = tscatter::cholesky(c_mat).unwrap();
    let mut acc = -0.5 * chol.log_det();
    for (y, w) in q.iter() {
        let s = c_mat.quad_form(y);
        let s0: f64 = y.iter().map(|v| v * v).sum();
        acc += w * (tscatter::rho(s, c).unwrap() - tscatter::rho(s0, c).unwrap());
    }
    acc
}

#[test]
fn criterion_05_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 0, 105);
    let nus = [1.0, 1.5, 2.5, 4.0, 8.0];
    let mut worst = 0.0f64;
    for i in 0..20 {
        let d = 1 + i % 3;
        let q = Sample::uniform(standard_normal_points(&mut rng, 12, d)).unwrap();
        let a = random_pd(&mut rng, d, 0.5);
        let c = cfg(nus[i % nus.len()], d);
        let analytic = gradient(&q, &a, &c).unwrap();
        let inv = a.inverse().unwrap();
        for ((i_, j_), ga) in tri_pairs(d).zip(analytic.as_slice()) {
            let h = 1e-5 * (1.0 + inv.get(i_, j_).abs());
            let mut plus = inv.matrix().clone();
            plus.set(i_, j_, plus.get(i_, j_) + h);
            let mut minus = inv.matrix().clone();
            minus.set(i_, j_, minus.get(i_, j_) - h);
            let numeric = (objective_of_inverse(&q, &plus, &c)
                - objective_of_inverse(&q, &minus, &c))
                / (2.0 * h);
            let rel = (ga - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-7, "worst relative gradient error {worst}");
    elapsed_under(start, 5.0, 5);
    pass(
        5,
        "analytic gradient vs finite differences",
        format!("worst {worst:.2e}"),
    );
}

#[test]
fn criterion_06_hessian_positive_definite_at_fits() {
    let start = Instant::now();
    let mut min_eig = f64::INFINITY;
    for (sample, c) in structural_fit_cases() {
        let fit = fit_location_scatter(&sample, &c).unwrap();
        let lifted_cfg = c.lifted().unwrap();
        let h = hessian(
            &lift_sample(&sample),
            fit.lifted.as_ref().unwrap(),
            &lifted_cfg,
        )
        .unwrap();
        let eig = h.min_eigenvalue().unwrap();
        assert!(eig > 0.0, "non-positive Hessian eigenvalue {eig}");
        min_eig = min_eig.min(eig);
    }
    pass(
        6,
        "Hessian positive definite at 50 fits",
        format!("smallest eigenvalue {min_eig:.3e} in {:?}", start.elapsed()),
    );
}

#[test]
fn criterion_07_equivariance_under_random_affine_maps() {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 0, 107);
    let mut worst_mu = 0.0f64;
    let mut worst_sigma = 0.0f64;
    for trial in 0..100u64 {
        let d = 1 + (trial % 3) as usize;
        let sample = random_in_domain_sample(&mut rng, d, 16);
        let c = cfg([1.5, 3.0, 8.0][(trial % 3) as usize], d);
        let map = random_nonsingular_map(d, 2024, trial);
        let (mu_defect, sigma_defect) = check_equivariance(&sample, &c, &map).unwrap();

        let fit = fit_location_scatter(&sample, &c).unwrap();
        let mapped_mu = map.apply(&fit.mu);
        let mu_scale = 1.0 + mapped_mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rows: Vec<f64> = map.matrix_rows().into_iter().flatten().collect();
        let sigma_scale = 1.0 + fit.sigma.congruence(&rows).frobenius_norm();
        worst_mu = worst_mu.max(mu_defect / mu_scale);
        worst_sigma = worst_sigma.max(sigma_defect / sigma_scale);
    }
    assert!(worst_mu < 1e-8, "relative location defect {worst_mu}");
    assert!(worst_sigma < 1e-8, "relative scatter defect {worst_sigma}");
    pass(
        7,
        "equivariance over 100 random maps",
        format!(
            "mu {worst_mu:.1e}, sigma {worst_sigma:.1e} in {:?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_08_uniqueness_probe() {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 0, 108);
    for i in 0..20u64 {
        let d = 1 + (i % 3) as usize;
        let sample = random_in_domain_sample(&mut rng, d, 14);
        let c = cfg([1.0, 2.0, 5.0][(i % 3) as usize], d);
        let agreed = multistart_uniqueness_probe(&sample, &c, 10, 7000 + i).unwrap();
        assert!(agreed, "starts disagreed on sample {i}");
    }
    pass(
        8,
        "multistart uniqueness on 20 samples",
        format!("10 starts each in {:?}", start.elapsed()),
    );
}

/// Rank by Gaussian elimination, used only by the exhaustive oracle.
fn elimination_rank(vectors: &[Vec<f64>]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let cols = vectors[0].len();
    let mut rows: Vec<Vec<f64>> = vectors.to_vec();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    let tol = 1e-10 * (1.0 + scale);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot_row) =
            (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
        else {
            break;
        };
        if rows[pivot_row][col].abs() <= tol {
            continue;
        }
        rows.swap(rank, pivot_row);
        for r in rank + 1..rows.len() {
            let factor = rows[r][col] / rows[rank][col];
            for c in col..cols {
                rows[r][c] -= factor * rows[rank][c];
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Heaviest subset of atoms whose affine (or linear) span has dimension at
/// most `q`; exponential in the atom count.
fn oracle_mass(p: &Sample, q: usize, affine: bool) -> f64 {
    let n = p.len();
    assert!(n <= 12);
    let mut best = 0.0f64;
    for mask in 1u32..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let vectors: Vec<Vec<f64>> = if affine {
            let origin = p.point(subset[0]);
            subset[1..]
                .iter()
                .map(|&i| p.point(i).iter().zip(origin).map(|(a, b)| a - b).collect())
                .collect()
        } else {
            subset.iter().map(|&i| p.point(i).to_vec()).collect()
        };
        if elimination_rank(&vectors) <= q {
            best = best.max(subset.iter().map(|&i| p.weight(i)).sum());
        }
    }
    best
}

#[test]
fn criterion_09_domain_checks_match_oracle() {
    let start = Instant::now();
    // named corpus plus random small samples, all with n <= 12, d <= 3
    let mut corpus: Vec<Sample> = vec![
        Sample::uniform(vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap(),
        make_pk(1).unwrap(),
        make_pk(5).unwrap(),
        make_qk(1).unwrap(),
        make_qk(10).unwrap(),
        Sample::uniform(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap(),
        Sample::new(vec![vec![3.0], vec![0.0]], vec![0.8, 0.2]).unwrap(),
        Sample::dirac(vec![0.0, 0.0]).unwrap(),
        Sample::new(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            vec![0.4, 0.2, 0.2, 0.2],
        )
        .unwrap(),
    ];
    let mut rng = stream_rng(2024, 0, 109);
    for i in 0..12 {
        let d = 1 + i % 3;
        let n = 4 + (rng.random::<u32>() % 9) as usize;
        corpus.push(Sample::uniform(standard_normal_points(&mut rng, n, d)).unwrap());
    }
    let mut checked = 0;
    for sample in &corpus {
        let d = sample.dim();
        for q in 0..d {
            for affine in [false, true] {
                let (mass, _) = max_subspace_mass(sample, q, affine).unwrap();
                let oracle = oracle_mass(sample, q, affine);
                assert!(
                    (mass - oracle).abs() < 1e-12,
                    "mass mismatch: search {mass} oracle {oracle} (q={q}, affine={affine})"
                );
                checked += 1;
            }
        }
    }

    // lift equivalence on 50 random cases
    for i in 0..50u64 {
        let d = 1 + (i % 3) as usize;
        let n = 3 + (rng.random::<u32>() % 10) as usize;
        let sample = Sample::uniform(standard_normal_points(&mut rng, n, d)).unwrap();
        let nu = [1.2, 2.0, 6.0][(i % 3) as usize];
        let v = in_v(&sample, &cfg(nu, d)).unwrap();
        let u = in_u(&lift_sample(&sample), &cfg(nu - 1.0, d + 1)).unwrap();
        assert_eq!(v.member, u.member, "lift equivalence failed on case {i}");
    }
    pass(
        9,
        "domain checks vs exhaustive oracle",
        format!(
            "{checked} mass comparisons, 50 lift cases in {:?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_10_degenerate_handling() {
    let start = Instant::now();
    let collinear = Sample::uniform(vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    match fit_location_scatter(&collinear, &cfg(2.0, 2)) {
        Err(Error::DomainViolation(report)) => assert!(!report.member),
        other => panic!("expected a domain violation, got {other:?}"),
    }

    let heavy = Sample::new(vec![vec![3.0], vec![0.0]], vec![0.8, 0.2]).unwrap();
    let fit = fit_univariate(&heavy, &cfg(2.0, 1)).unwrap();
    assert!(fit.degenerate);
    assert_eq!(fit.mu, vec![3.0]);
    assert_eq!(fit.sigma.get(0, 0), 0.0);
    pass(10, "degenerate handling", format!("{:?}", start.elapsed()));
}

#[test]
fn criterion_11_influence_cross_validation() {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 0, 111);
    let mut worst_gap = 0.0f64;
    for i in 0..20 {
        let d = 1 + i % 3;
        let sample = random_in_domain_sample(&mut rng, d, 15);
        let c = cfg([2.0, 3.0, 8.0][i % 3], d);
        let x: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let assessment = influence(&sample, &c, &x).unwrap();
        worst_gap = worst_gap.max(assessment.relative_gap);
    }
    assert!(worst_gap < 1e-3, "worst influence route gap {worst_gap}");

    // sample average of the influence field vanishes at the fit
    let p = make_pk(1).unwrap();
    let c = cfg(3.0, 2);
    let operator = InfluenceOperator::new(&p, &c).unwrap();
    let mut avg = [0.0; 5];
    for (y, w) in p.iter() {
        for (acc, v) in avg
            .iter_mut()
            .zip(operator.influence_at(y).unwrap().flatten())
        {
            *acc += w * v;
        }
    }
    let avg_norm = avg.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(avg_norm < 1e-6, "influence average {avg_norm}");
    elapsed_under(start, 60.0, 11);
    pass(
        11,
        "influence cross-validation",
        format!("worst gap {worst_gap:.2e}, average {avg_norm:.1e}"),
    );
}

fn frobenius(m: &SymMatrix) -> f64 {
    m.frobenius_norm()
}

#[test]
fn criterion_12_desk_scale_central_limit() {
    let start = Instant::now();
    let p = make_pk(1).unwrap();
    let c = cfg(3.0, 2);
    let seed = 0;
    let r = 500;

    let report_200 = mc_normality(&p, &c, 200, r, seed, &McOptions::default()).unwrap();
    let report_800 = mc_normality(&p, &c, 800, r, seed, &McOptions::default()).unwrap();

    for report in [&report_200, &report_800] {
        let kept = report.scaled_errors.len();
        let cov = report.covariance_matrix.as_ref().unwrap();
        for (i, mean) in report.mean_vector.iter().enumerate() {
            let se = (cov.get(i, i) / kept as f64).sqrt();
            assert!(
                mean.abs() < 3.0 * se,
                "n={} coordinate {i}: mean {mean} vs 3 SE {}",
                report.n,
                3.0 * se
            );
        }
    }

    let stats = report_800.normality.as_ref().unwrap();
    for (i, &skew) in stats.skewness.iter().enumerate() {
        assert!(skew.abs() < 0.5, "skewness[{i}] = {skew}");
    }
    for (i, &kurt) in stats.excess_kurtosis.iter().enumerate() {
        assert!(kurt.abs() < 0.8, "excess kurtosis[{i}] = {kurt}");
    }

    let sandwich = sandwich_covariance(&p, &c).unwrap();
    let cov_800 = report_800.covariance_matrix.as_ref().unwrap();
    let sandwich_gap = frobenius(&cov_800.sub(&sandwich)) / frobenius(&sandwich);
    assert!(
        sandwich_gap < 0.15,
        "covariance vs sandwich gap {sandwich_gap}"
    );

    let cov_200 = report_200.covariance_matrix.as_ref().unwrap();
    let stability = frobenius(&cov_200.sub(cov_800)) / frobenius(cov_800);
    assert!(stability < 0.20, "covariance stability {stability}");

    assert!(report_800.domain_hit_rate >= report_200.domain_hit_rate);
    elapsed_under(start, 600.0, 12);
    pass(
        12,
        "desk-scale central limit",
        format!(
            "sandwich gap {sandwich_gap:.3}, stability {stability:.3}, hit rates {:.3}/{:.3} in {:?}",
            report_200.domain_hit_rate,
            report_800.domain_hit_rate,
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_13_uniform_lln_diagnostic() {
    let start = Instant::now();
    let rows = tscatter::asymptotics::gc_diagnostic(
        &make_pk(1).unwrap(),
        &cfg(3.0, 2),
        0.5,
        100,
        &[100, 1000, 10000],
        2024,
    )
    .unwrap();
    assert_eq!(rows.len(), 3);
    assert!(
        rows[1].sup_deviation < rows[0].sup_deviation
            && rows[2].sup_deviation < rows[1].sup_deviation,
        "deviations did not decrease: {rows:?}"
    );
    pass(
        13,
        "uniform LLN diagnostic",
        format!(
            "sup deviations {:.4} > {:.4} > {:.4} in {:?}",
            rows[0].sup_deviation,
            rows[1].sup_deviation,
            rows[2].sup_deviation,
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_timing_smoke() {
    // the scatter solve itself is interactive-speed
    let start = Instant::now();
    let q = Sample::uniform(vec![
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ])
    .unwrap();
    let (b, report) = fit_scatter(&q, &cfg(1.0, 2)).unwrap();
    assert!(report.converged);
    assert!((b.get(0, 0) - 0.5).abs() < 1e-9);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}
