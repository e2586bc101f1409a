//! End-to-end acceptance suite. Each test covers one release criterion and
//! prints a single pass/fail line; tolerances and time budgets are stated
//! inline next to the checks.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectralmix::cebotarev::{
    finite_product_to_form, form_eval, interlacing_check, IndexMap, InterlacingOrder,
};
use spectralmix::reconstruct::{
    eigenvalue_sensitivity, reconstruct, PotentialFamily, ReconstructOptions,
    ReconstructionProblem,
};
use spectralmix::{completion, sturm, weyl};
use spectralmix::{
    BoundaryConditions, CompletionMaps, CompletionOptions, Error, MixedSpectralData,
    NonMatchingMode, PotentialSpec, ProductForm, TripleBoundary,
};

fn criterion(name: &str, body: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("criterion {name}: PASS"),
        Err(cause) => {
            println!("criterion {name}: FAIL");
            resume_unwind(cause);
        }
    }
}

fn free() -> PotentialSpec {
    PotentialSpec::zero()
}

fn cosine() -> PotentialSpec {
    PotentialSpec::cosine(vec![0.0, 2.0])
}

fn pair_dd() -> TripleBoundary {
    TripleBoundary::from_pair(0.0, 0.0).unwrap()
}

/// 50 upper-half-plane points with Im z ≥ 0.5.
fn grid_50() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(50);
    for i in 0..10 {
        let re = -4.0 + 20.0 * i as f64 / 9.0;
        for im in [0.5, 1.0, 2.0, 4.0, 8.0] {
            out.push(Complex64::new(re, im));
        }
    }
    out
}

#[test]
fn criterion_1_free_potential_spectra() {
    criterion("1 (free-potential spectra)", || {
        let started = Instant::now();
        let cases: [(BoundaryConditions, fn(usize) -> f64); 3] = [
            (BoundaryConditions::dirichlet_dirichlet(), |n| (n * n) as f64),
            (BoundaryConditions::neumann_dirichlet(), |n| {
                let t = n as f64 - 0.5;
                t * t
            }),
            (BoundaryConditions::neumann_neumann(), |n| ((n - 1) * (n - 1)) as f64),
        ];
        for (bc, exact) in cases {
            let spectrum = sturm::eigenvalues(&free(), &bc, 20).unwrap();
            for (i, a) in spectrum.values.iter().enumerate() {
                let t = exact(i + 1);
                assert!(
                    (a - t).abs() <= 1e-8,
                    "bc ({}, {}): eigenvalue {} = {a}, expected {t}",
                    bc.alpha,
                    bc.beta,
                    i + 1
                );
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        assert!(elapsed <= 10.0, "spectra took {elapsed:.1}s, budget 10s");
    });
}

#[test]
fn criterion_2_free_potential_masses() {
    criterion("2 (free-potential masses)", || {
        let dd = sturm::spectral_measure(&free(), &BoundaryConditions::dirichlet_dirichlet(), 20)
            .unwrap();
        for (i, (_, gamma)) in dd.entries.iter().enumerate() {
            let n = (i + 1) as f64;
            let t = 2.0 * n * n / PI;
            assert!(
                (gamma - t).abs() / t <= 1e-6,
                "μ_(0,0) mass {} = {gamma}, expected {t}",
                i + 1
            );
        }
        let nd = sturm::spectral_measure(&free(), &BoundaryConditions::neumann_dirichlet(), 20)
            .unwrap();
        for (i, (_, gamma)) in nd.entries.iter().enumerate() {
            let t = 2.0 / PI;
            assert!(
                (gamma - t).abs() / t <= 1e-6,
                "μ_(π/2,0) mass {} = {gamma}, expected {t}",
                i + 1
            );
        }
    });
}

#[test]
fn criterion_3_m_function_three_way_agreement() {
    criterion("3 (m-function three-way agreement)", || {
        let bc = pair_dd();
        for spec in [free(), cosine()] {
            let rep = weyl::calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
            let measure =
                sturm::spectral_measure(&spec, &bc.poles_bc(), 400).unwrap();
            let linear = weyl::m_direct(&spec, &bc, Complex64::new(0.0, 1.0)).unwrap().re;
            for z in grid_50() {
                let direct = weyl::m_direct(&spec, &bc, z).unwrap();
                let product = weyl::m_product(&rep, z, rep.len()).unwrap();
                let herglotz = weyl::m_herglotz(&measure, linear, z).unwrap();
                let gap_p = (direct - product).norm() / direct.norm();
                let gap_h = (direct - herglotz).norm() / direct.norm();
                assert!(gap_p <= 1e-3, "product gap {gap_p:.3e} at z = {z} ({spec:?})");
                assert!(gap_h <= 1e-3, "Herglotz gap {gap_h:.3e} at z = {z} ({spec:?})");
            }
        }
        let m = weyl::m_direct(&free(), &bc, Complex64::new(-1.0, 0.0)).unwrap();
        let target = -1.0 / PI.tanh();
        assert!(
            (m.re - target).abs() <= 1e-6 && m.im.abs() <= 1e-6,
            "m(−1) = {m}, expected {target}"
        );
    });
}

#[test]
fn criterion_4_herglotz_and_interlacing_properties() {
    criterion("4 (Herglotz/interlacing property suite)", || {
        let bc = pair_dd();
        for spec in [free(), cosine()] {
            for z in grid_50() {
                let m = weyl::m_direct(&spec, &bc, z).unwrap();
                assert!(m.im > 0.0, "Im m = {} at z = {z} ({spec:?})", m.im);
                let down = weyl::m_direct(&spec, &bc, z.conj()).unwrap();
                let gap = (down - m.conj()).norm() / m.norm();
                assert!(gap <= 1e-12, "conjugate symmetry gap {gap:.3e} at z = {z}");
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..5 {
            let spec = PotentialSpec::cosine(vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..0.5),
            ]);
            let bcs = [
                TripleBoundary::from_pair(0.0, 0.0).unwrap(),
                TripleBoundary::from_pair(FRAC_PI_2, 0.0).unwrap(),
                TripleBoundary::new(0.7, 2.3, 0.9).unwrap(),
            ];
            for bc in bcs {
                let zeros = sturm::eigenvalues(&spec, &bc.zeros_bc(), 15).unwrap();
                let poles = sturm::eigenvalues(&spec, &bc.poles_bc(), 15).unwrap();
                let order = if bc.zeros_first() {
                    InterlacingOrder::FirstBelowSecond
                } else {
                    InterlacingOrder::SecondBelowFirst
                };
                assert!(
                    interlacing_check(&zeros.values, &poles.values, order),
                    "trial {trial}: spectra of ({}, {}, {}) do not interlace",
                    bc.alpha1,
                    bc.alpha2,
                    bc.beta
                );
            }
        }
    });
}

#[test]
fn criterion_5_cebotarev_round_trip() {
    criterion("5 (Čebotarev product/partial-fraction exactness)", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for instance in 0..100 {
            let pairs = rng.random_range(4..9);
            let mut zeros = Vec::new();
            let mut poles = Vec::new();
            let mut x = rng.random_range(0.05..0.5);
            for _ in 0..pairs {
                x += rng.random_range(0.1..1.2);
                zeros.push(x);
                x += rng.random_range(0.1..1.2);
                poles.push(x);
            }
            let c = rng.random_range(0.3..3.0);
            let form = finite_product_to_form(&zeros, &poles, c).unwrap();
            for _ in 0..10 {
                let z = Complex64::new(
                    rng.random_range(-5.0..x + 3.0),
                    rng.random_range(0.3..3.0),
                );
                let mut product = Complex64::new(-c, 0.0);
                for (b, a) in zeros.iter().zip(&poles) {
                    product *= (z / b - 1.0) / (z / a - 1.0);
                }
                let value = form_eval(&form, z).unwrap();
                let gap = (product - value).norm() / (1.0 + product.norm());
                assert!(gap <= 1e-10, "instance {instance}: gap {gap:.3e} at z = {z}");
            }
        }
    });
}

fn hidden_data(
    spec: &PotentialSpec,
    bc: TripleBoundary,
    n_max: usize,
    hidden: &[usize],
) -> (MixedSpectralData, Vec<f64>) {
    let (poles, zeros, masses) = completion::forward_mixed_data(spec, &bc, n_max).unwrap();
    let mut known_zeros = BTreeMap::new();
    for (j, b) in zeros.iter().enumerate() {
        if !hidden.contains(&(j + 1)) {
            known_zeros.insert(j + 1, *b);
        }
    }
    let mut mass_map = BTreeMap::new();
    for &idx in hidden {
        mass_map.insert(idx, masses[idx - 1]);
    }
    let data = MixedSpectralData {
        spectrum: poles,
        bc,
        index_set: hidden.to_vec(),
        known_zeros,
        masses: mass_map,
        anchor: None,
        index_maps: None,
    };
    (data, zeros)
}

#[test]
fn criterion_6_matching_completion() {
    criterion("6 (matching completion, free and cosine)", || {
        let sets: [&[usize]; 3] = [&[1], &[2, 5], &[1, 3, 7]];
        for spec in [free(), cosine()] {
            for hidden in sets {
                let started = Instant::now();
                let (data, zeros) = hidden_data(&spec, pair_dd(), 40, hidden);
                let result =
                    completion::complete_matching(&data, &CompletionOptions::default()).unwrap();
                for (idx, value) in &result.recovered_zeros {
                    let t = zeros[idx - 1];
                    assert!(
                        (value - t).abs() <= 1e-3,
                        "A = {hidden:?} ({spec:?}): zero {idx} recovered {value}, truth {t}"
                    );
                }
                let elapsed = started.elapsed().as_secs_f64();
                assert!(
                    elapsed <= 60.0,
                    "A = {hidden:?} ({spec:?}) took {elapsed:.1}s, budget 60s"
                );
            }
        }
    });
}

#[test]
fn criterion_7_nonmatching_completion() {
    criterion("7 (non-matching completion)", || {
        let (mut data, zeros) = hidden_data(&free(), pair_dd(), 40, &[1, 2, 3]);
        data.index_set = Vec::new();
        data.index_maps = Some(CompletionMaps {
            k: IndexMap::new(vec![1, 2, 3], None).unwrap(),
            l: IndexMap::new(vec![1, 2, 3], None).unwrap(),
            equal_through: usize::MAX,
        });
        data.anchor = Some((1, zeros[0]));
        let result = completion::complete_nonmatching(
            &data,
            NonMatchingMode::Anchored,
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(result.recovered_zeros.len(), 2);
        for (idx, value) in &result.recovered_zeros {
            let t = zeros[idx - 1];
            assert!((value - t).abs() <= 1e-3, "anchored zero {idx}: {value} vs {t}");
        }

        let hidden: Vec<usize> = (1..=6).map(|n| n * n).collect();
        let (mut data, zeros) = hidden_data(&free(), pair_dd(), 40, &hidden);
        data.index_set = Vec::new();
        data.index_maps = Some(CompletionMaps {
            k: IndexMap::squares(),
            l: IndexMap::squares(),
            equal_through: 0,
        });
        let result = completion::complete_nonmatching(
            &data,
            NonMatchingMode::AbsolutelyConvergent,
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(result.recovered_zeros.len(), 6);
        for (idx, value) in &result.recovered_zeros {
            let t = zeros[idx - 1];
            assert!((value - t).abs() <= 1e-3, "sparse zero {idx}: {value} vs {t}");
        }

        let (mut data, _) = hidden_data(&free(), pair_dd(), 40, &(1..=40).collect::<Vec<_>>());
        data.index_set = Vec::new();
        data.index_maps = Some(CompletionMaps {
            k: IndexMap::identity(),
            l: IndexMap::identity(),
            equal_through: 0,
        });
        let err = completion::complete_nonmatching(
            &data,
            NonMatchingMode::AbsolutelyConvergent,
            &CompletionOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Hypothesis(_, Some(report)) => {
                assert!(!report.h3.holds, "identity maps must fail the H3 check")
            }
            other => panic!("expected a hypothesis refusal, got {other:?}"),
        }
    });
}

#[test]
fn criterion_8_shift_covariance() {
    criterion("8 (shift covariance of spectra and masses)", || {
        let shift = 2.7;
        let specs = [
            PotentialSpec::cosine(vec![0.3, 1.2, -0.4]),
            PotentialSpec::piecewise(vec![0.5, -0.2, 0.9]),
            PotentialSpec::constant(0.7),
        ];
        let bcs = [
            BoundaryConditions::dirichlet_dirichlet(),
            BoundaryConditions::neumann_dirichlet(),
            BoundaryConditions::new(0.7, 0.9).unwrap(),
        ];
        for spec in &specs {
            let shifted = spec.shift(shift);
            for bc in &bcs {
                let base = sturm::spectral_measure(spec, bc, 15).unwrap();
                let moved = sturm::spectral_measure(&shifted, bc, 15).unwrap();
                for (i, ((a0, g0), (a1, g1))) in
                    base.entries.iter().zip(&moved.entries).enumerate()
                {
                    assert!(
                        (a0 + shift - a1).abs() <= 1e-8,
                        "eigenvalue {} moved to {a1}, expected {}",
                        i + 1,
                        a0 + shift
                    );
                    assert!(
                        (g0 - g1).abs() / g0.abs() <= 1e-8,
                        "mass {} changed from {g0} to {g1}",
                        i + 1
                    );
                }
            }
        }
    });
}

#[test]
fn criterion_9_reconstruction_and_sensitivities() {
    criterion("9 (reconstruction and sensitivity gradients)", || {
        let truth = PotentialSpec::cosine(vec![1.0, 2.0]);
        let bc = pair_dd();
        let s1 = sturm::eigenvalues(&truth, &bc.zeros_bc(), 10).unwrap();
        let s2 = sturm::eigenvalues(&truth, &bc.poles_bc(), 10).unwrap();
        let problem = ReconstructionProblem {
            spectrum1: s1.values,
            spectrum2: s2.values,
            bc,
            family: PotentialFamily::Cosine { count: 2 },
            regularization: 1e-6,
        };
        let fit = reconstruct(&problem, &ReconstructOptions::default()).unwrap();
        let params = match &fit.spec {
            PotentialSpec::Cosine(p) => p.clone(),
            other => panic!("unexpected family {other:?}"),
        };
        assert!((params[0] - 1.0).abs() <= 1e-3, "c₀ = {}", params[0]);
        assert!((params[1] - 2.0).abs() <= 1e-3, "c₁ = {}", params[1]);

        let base = vec![0.5, 1.0, -0.3];
        let spec = PotentialSpec::cosine(base.clone());
        let dd = BoundaryConditions::dirichlet_dirichlet();
        let eps = 1e-5;
        for n in [1usize, 2, 5] {
            let s = eigenvalue_sensitivity(&spec, &dd, n).unwrap();
            for k in 0..3 {
                let mut bumped = base.clone();
                bumped[k] += eps;
                let shifted =
                    sturm::eigenvalues(&PotentialSpec::cosine(bumped), &dd, n).unwrap();
                let fd = (shifted.values[n - 1] - s.eigenvalue) / eps;
                let grad = s.inner(|x| if k == 0 { 1.0 } else { (k as f64 * x).cos() });
                let rel = (fd - grad).abs() / grad.abs().max(1.0);
                assert!(rel <= 1e-4, "n = {n}, k = {k}: fd {fd} vs gradient {grad}");
            }
        }
    });
}

fn read_csv_column(path: &Path, column: usize) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    text.lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .nth(column)
                .and_then(|v| v.parse().ok())
                .unwrap_or_else(|| panic!("bad row {line:?} in {path:?}"))
        })
        .collect()
}

#[test]
fn criterion_10_real_axis_scan_sign_changes() {
    criterion("10 (real-axis scan: sign changes at the markers)", || {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("free.json");
        std::fs::write(
            &input,
            r#"{ "potential": {"kind": "constant", "params": 0.0}, "bc": {"alpha": 0.0, "beta": 0.0} }"#,
        )
        .unwrap();
        let output = dir.path().join("scan.csv");
        let status = Command::new(env!("CARGO_BIN_EXE_spectralmix"))
            .args([
                "mfunc",
                "--input",
                input.to_str().unwrap(),
                "--output",
                output.to_str().unwrap(),
                "--grid",
                "0.05:29.95:600",
                "--n-max",
                "12",
            ])
            .status()
            .unwrap();
        assert!(status.success(), "mfunc exited with {status}");

        let xs = read_csv_column(&output, 0);
        let ms = read_csv_column(&output, 1);
        let zeros = read_csv_column(&dir.path().join("scan_zeros.csv"), 1);
        let poles = read_csv_column(&dir.path().join("scan_poles.csv"), 1);
        assert_eq!(zeros.len(), 12, "zero markers");
        assert_eq!(poles.len(), 12, "pole markers");

        let lo = *xs.first().unwrap();
        let hi = *xs.last().unwrap();
        let mut markers: Vec<f64> = zeros
            .iter()
            .chain(poles.iter())
            .copied()
            .filter(|m| *m > lo && *m < hi)
            .collect();
        markers.sort_by(f64::total_cmp);
        assert_eq!(markers.len(), 10, "markers inside ({lo}, {hi})");

        let mut flips = 0;
        for w in xs.windows(2).zip(ms.windows(2)) {
            let ((x0, x1), (m0, m1)) = ((w.0[0], w.0[1]), (w.1[0], w.1[1]));
            if m0 * m1 < 0.0 {
                flips += 1;
                let inside =
                    markers.iter().filter(|m| **m > x0 && **m < x1).count();
                assert_eq!(
                    inside, 1,
                    "sign change on ({x0}, {x1}) brackets {inside} markers"
                );
            }
        }
        assert_eq!(flips, markers.len(), "every marker must produce one sign change");

        for marker in &markers {
            let before = xs.iter().rposition(|x| x < marker).unwrap();
            let after = xs.iter().position(|x| x > marker).unwrap();
            assert!(
                ms[before] * ms[after] < 0.0,
                "no sign change across the marker at {marker}"
            );
        }
    });
}
