//! Free-potential golden suite: closed-form spectra and masses, m-function
//! values against the three evaluation routes, Herglotz structure checks, and
//! one completion round-trip. Prints one pass/fail line per item.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use num_complex::Complex64;

use spectralmix::{completion, sturm, weyl};
use spectralmix::{
    BoundaryConditions, CompletionOptions, MixedSpectralData, PotentialSpec, ProductForm,
    TripleBoundary,
};

use crate::CliResult;

pub struct Config {
    pub truncation: usize,
    pub tol: Option<f64>,
}

struct Item {
    name: String,
    outcome: Result<(), String>,
}

fn item(name: impl Into<String>, outcome: Result<(), String>) -> Item {
    Item { name: name.into(), outcome }
}

const PROBES: [(f64, f64); 5] = [(0.5, 0.5), (3.0, 2.0), (-2.0, 1.0), (10.0, 0.7), (6.0, 4.0)];

/// Runs the suite; returns exit code 0 when every item passes, 1 otherwise.
pub fn run(cfg: &Config) -> CliResult<i32> {
    if cfg.truncation == 0 {
        return Err(crate::CliError::Config("--truncation must be at least 1".into()));
    }
    if let Some(t) = cfg.tol {
        crate::positive("tol", t)?;
    }
    let tol = |default: f64| cfg.tol.unwrap_or(default);
    let started = Instant::now();
    let spec = PotentialSpec::zero();
    let bc = TripleBoundary::from_pair(0.0, 0.0).map_err(crate::CliError::Run)?;
    let mut items = Vec::new();

    items.push(item("sigma_dd_first_20", {
        check_spectrum(&spec, &BoundaryConditions::dirichlet_dirichlet(), |n| {
            (n * n) as f64
        }, tol(1e-8))
    }));
    items.push(item("sigma_nd_first_20", {
        check_spectrum(&spec, &BoundaryConditions::neumann_dirichlet(), |n| {
            let t = n as f64 - 0.5;
            t * t
        }, tol(1e-8))
    }));
    items.push(item("sigma_nn_first_20", {
        check_spectrum(&spec, &BoundaryConditions::neumann_neumann(), |n| {
            ((n - 1) * (n - 1)) as f64
        }, tol(1e-8))
    }));

    items.push(item("masses_dd_first_20", check_masses(&spec, 0.0, |n| {
        2.0 * (n * n) as f64 / PI
    }, tol(1e-6))));
    items.push(item("masses_nd_first_20", check_masses(&spec, FRAC_PI_2, |_| {
        2.0 / PI
    }, tol(1e-6))));

    items.push(item("m_direct_at_minus_one", {
        match weyl::m_direct(&spec, &bc, Complex64::new(-1.0, 0.0)) {
            Ok(m) => {
                let target = -1.0 / PI.tanh();
                let err = (m.re - target).abs().max(m.im.abs());
                expect(err <= tol(1e-6), format!("error {err:.3e} > {:.1e}", tol(1e-6)))
            }
            Err(e) => Err(e.to_string()),
        }
    }));

    let direct: Vec<Result<Complex64, String>> = PROBES
        .iter()
        .map(|&(re, im)| {
            weyl::m_direct(&spec, &bc, Complex64::new(re, im)).map_err(|e| e.to_string())
        })
        .collect();

    let rep_len = cfg.truncation.max(400);
    let rep = weyl::calibrated_product(&spec, &bc, rep_len, ProductForm::Plain)
        .map_err(crate::CliError::Run)?;
    for (i, ((re, im), d)) in PROBES.iter().zip(&direct).enumerate() {
        let name = format!("m_product_z{}", i + 1);
        let outcome = match d {
            Ok(md) => match weyl::m_product(&rep, Complex64::new(*re, *im), cfg.truncation) {
                Ok(mp) => {
                    let gap = (md - mp).norm() / md.norm();
                    expect(gap <= tol(1e-3), format!("rel gap {gap:.3e} > {:.1e}", tol(1e-3)))
                }
                Err(e) => Err(e.to_string()),
            },
            Err(e) => Err(e.clone()),
        };
        items.push(item(name, outcome));
    }

    let measure = sturm::spectral_measure(&spec, &BoundaryConditions::dirichlet_dirichlet(), 400)
        .map_err(crate::CliError::Run)?;
    let linear = weyl::m_direct(&spec, &bc, Complex64::new(0.0, 1.0))
        .map_err(crate::CliError::Run)?
        .re;
    for (i, ((re, im), d)) in PROBES.iter().zip(&direct).enumerate() {
        let name = format!("m_herglotz_z{}", i + 1);
        let outcome = match d {
            Ok(md) => match weyl::m_herglotz(&measure, linear, Complex64::new(*re, *im)) {
                Ok(mh) => {
                    let gap = (md - mh).norm() / md.norm();
                    expect(gap <= tol(1e-3), format!("rel gap {gap:.3e} > {:.1e}", tol(1e-3)))
                }
                Err(e) => Err(e.to_string()),
            },
            Err(e) => Err(e.clone()),
        };
        items.push(item(name, outcome));
    }

    items.push(item("herglotz_positivity", {
        direct.iter().try_for_each(|d| match d {
            Ok(m) if m.im > 0.0 => Ok(()),
            Ok(m) => Err(format!("Im m = {:.3e} not positive", m.im)),
            Err(e) => Err(e.clone()),
        })
    }));

    items.push(item("conjugate_symmetry", {
        PROBES.iter().try_for_each(|&(re, im)| {
            let z = Complex64::new(re, im);
            let up = weyl::m_direct(&spec, &bc, z).map_err(|e| e.to_string())?;
            let down = weyl::m_direct(&spec, &bc, z.conj()).map_err(|e| e.to_string())?;
            let gap = (down - up.conj()).norm() / up.norm();
            expect(gap <= tol(1e-12), format!("rel gap {gap:.3e} > {:.1e}", tol(1e-12)))
        })
    }));

    items.push(item("completion_roundtrip", completion_roundtrip(tol(1e-4))));

    let mut failures = 0;
    println!("free-potential self-test (truncation {})", cfg.truncation);
    for it in &items {
        match &it.outcome {
            Ok(()) => println!("{:<24} PASS", it.name),
            Err(why) => {
                failures += 1;
                println!("{:<24} FAIL  {why}", it.name);
            }
        }
    }
    println!(
        "{failures} of {} items failed ({:.1}s)",
        items.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(if failures == 0 { 0 } else { 1 })
}

fn expect(ok: bool, why: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why)
    }
}

fn check_spectrum(
    spec: &PotentialSpec,
    bc: &BoundaryConditions,
    exact: impl Fn(usize) -> f64,
    tol: f64,
) -> Result<(), String> {
    let spectrum = sturm::eigenvalues(spec, bc, 20).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, a) in spectrum.values.iter().enumerate() {
        worst = worst.max((a - exact(i + 1)).abs());
    }
    expect(worst <= tol, format!("max abs error {worst:.3e} > {tol:.1e}"))
}

fn check_masses(
    spec: &PotentialSpec,
    alpha: f64,
    exact: impl Fn(usize) -> f64,
    tol: f64,
) -> Result<(), String> {
    let bc = BoundaryConditions::new(alpha, 0.0).map_err(|e| e.to_string())?;
    let measure = sturm::spectral_measure(spec, &bc, 20).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, (_, gamma)) in measure.entries.iter().enumerate() {
        let target = exact(i + 1);
        worst = worst.max((gamma - target).abs() / target.abs());
    }
    expect(worst <= tol, format!("max rel error {worst:.3e} > {tol:.1e}"))
}

fn completion_roundtrip(tol: f64) -> Result<(), String> {
    let spec = PotentialSpec::zero();
    let bc = TripleBoundary::from_pair(0.0, 0.0).map_err(|e| e.to_string())?;
    let (poles, zeros, masses) =
        completion::forward_mixed_data(&spec, &bc, 40).map_err(|e| e.to_string())?;
    let mut known_zeros = BTreeMap::new();
    for (j, b) in zeros.iter().enumerate() {
        if j != 0 {
            known_zeros.insert(j + 1, *b);
        }
    }
    let data = MixedSpectralData {
        spectrum: poles,
        bc,
        index_set: vec![1],
        known_zeros,
        masses: BTreeMap::from([(1, masses[0])]),
        anchor: None,
        index_maps: None,
    };
    let result = completion::complete_matching(&data, &CompletionOptions::default())
        .map_err(|e| e.to_string())?;
    let recovered = result.recovered_zeros[0].1;
    let err = (recovered - zeros[0]).abs();
    expect(err <= tol, format!("recovered {recovered}, truth {}, error {err:.3e}", zeros[0]))
}
