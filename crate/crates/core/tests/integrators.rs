#![allow(clippy::needless_range_loop)]

use approx::assert_relative_eq;
use sodesync::{
    build_ou_paths, frame_convert, integrate_averaged, integrate_rode, integrate_sode_stratonovich, sample_wiener,
    DriftSpec, Frame, IntegratorOptions, NoiseGrid, OUPathSet, OuInit, StateVector, SystemSpec, TimeGrid,
    TrajectoryBundle,
};

fn linear_system(lambdas: &[f64], c: f64, nu: f64) -> SystemSpec<f64> {
    let drifts = lambdas.iter().map(|&l| DriftSpec::linear(l, 1).unwrap()).collect();
    SystemSpec::new(drifts, vec![vec![c]; lambdas.len()], nu).unwrap()
}

#[test]
fn synchronized_linear_start_decays_exactly() {
    let spec = linear_system(&[1.0; 4], 0.0, 3.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
    let ou = OUPathSet::zeros(grid, 4);
    let x0 = StateVector::uniform(Frame::Rode, 4, &[0.7]);
    let traj = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default()).unwrap();
    for k in 0..traj.len() {
        let expect = 0.7 * (-traj.grid().time(k)).exp();
        for j in 0..4 {
            assert!((traj.component(k, j)[0] - expect).abs() <= 1e-6);
        }
    }
}

#[test]
fn uncoupled_systems_evolve_independently() {
    let lambdas = [1.0, 2.0, 3.0];
    let spec = linear_system(&lambdas, 0.0, 0.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
    let ou = OUPathSet::zeros(grid, 3);
    let x0 = StateVector::new(Frame::Rode, 3, 1, vec![1.0, -2.0, 0.5]).unwrap();
    let traj = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default()).unwrap();
    let last = traj.last_state();
    for j in 0..3 {
        let expect = x0.component(j)[0] * (-lambdas[j]).exp();
        assert!((last.component(j)[0] - expect).abs() <= 1e-6);
    }
}

fn smooth_ou(grid: TimeGrid<f64>, n: usize) -> OUPathSet<f64> {
    let values = (0..n)
        .map(|j| grid.times().iter().map(|&t| 0.5 * (2.0 * t + j as f64).sin()).collect())
        .collect();
    OUPathSet::from_values(grid, values, vec![vec![1.0]; n]).unwrap()
}

fn subsampled(fine: &OUPathSet<f64>, stride: usize) -> OUPathSet<f64> {
    let g = fine.grid();
    let coarse = TimeGrid::new(g.t_min(), g.t_max(), g.step() * stride as f64).unwrap();
    let values = (0..fine.n_components())
        .map(|j| fine.path(j).iter().step_by(stride).copied().collect())
        .collect();
    OUPathSet::from_values(coarse, values, fine.coeffs().to_vec()).unwrap()
}

fn error_against(reference: &TrajectoryBundle<f64>, coarse: &TrajectoryBundle<f64>) -> f64 {
    let stride = ((coarse.grid().step() / reference.grid().step()).round()) as usize;
    (0..coarse.len())
        .map(|k| sodesync::scalar::distance(coarse.state(k), reference.state(k * stride)))
        .fold(0.0, f64::max)
}

fn observed_order(make_ou: impl Fn(usize) -> OUPathSet<f64>, spec: &SystemSpec<f64>, x0: &StateVector<f64>) -> f64 {
    // runs at h, h/2 against a reference at h/8 on the same driver
    let reference = integrate_rode(spec, &make_ou(1), x0, 0.0, 1.0, IntegratorOptions::default()).unwrap();
    let e1 = error_against(&reference, &integrate_rode(spec, &make_ou(8), x0, 0.0, 1.0, IntegratorOptions::default()).unwrap());
    let e2 = error_against(&reference, &integrate_rode(spec, &make_ou(4), x0, 0.0, 1.0, IntegratorOptions::default()).unwrap());
    (e1 / e2).log2()
}

#[test]
fn second_order_on_smooth_paths() {
    let drifts = vec![
        DriftSpec::cubic(1.0, 1.0, 1).unwrap(),
        DriftSpec::linear(2.0, 1).unwrap(),
        DriftSpec::cubic(0.5, 2.0, 1).unwrap(),
    ];
    let spec = SystemSpec::new(drifts, vec![vec![1.0]; 3], 2.0).unwrap();
    let x0 = StateVector::new(Frame::Rode, 3, 1, vec![1.0, -0.5, 0.25]).unwrap();
    let fine = smooth_ou(TimeGrid::new(0.0, 1.0, 1e-3 / 8.0).unwrap(), 3);
    let order = observed_order(|s| subsampled(&fine, s), &spec, &x0);
    assert!(order >= 1.7, "observed order {order}");
}

#[test]
fn first_order_on_ou_paths() {
    let spec = linear_system(&[1.0, 2.0, 1.5, 1.0], 1.0, 1.0);
    let x0 = StateVector::new(Frame::Rode, 4, 1, vec![1.0, -0.5, 0.25, 2.0]).unwrap();
    let mut orders = Vec::new();
    for seed in 0..5 {
        let noise = sample_wiener(seed, TimeGrid::new(0.0, 1.0, 1e-3 / 8.0).unwrap(), 1).unwrap();
        let fine = build_ou_paths(&noise, &vec![vec![1.0]; 4], OuInit::Stationary).unwrap();
        orders.push(observed_order(|s| subsampled(&fine, s), &spec, &x0));
    }
    orders.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(orders[2] >= 0.9, "orders {orders:?}");
}

#[test]
fn sode_matches_rode_without_noise() {
    let drifts = vec![
        DriftSpec::cubic(1.0, 1.0, 2).unwrap(),
        DriftSpec::linear(2.0, 2).unwrap(),
        DriftSpec::affine(1.0, 0.5, 2).unwrap(),
    ];
    let spec = SystemSpec::new(drifts, vec![vec![0.0]; 3], 4.0).unwrap();
    let noise = sample_wiener(3, TimeGrid::new(0.0, 1.0, 1e-3).unwrap(), 1).unwrap();
    let ou = build_ou_paths(&noise, spec.coeffs(), OuInit::Stationary).unwrap();
    let x0 = StateVector::new(Frame::Rode, 3, 2, vec![1.0, 0.0, -1.0, 0.5, 0.2, 2.0]).unwrap();
    let rode = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default()).unwrap();
    let x0s = frame_convert(&x0, &ou.at(0), Frame::Sode).unwrap();
    let sode = integrate_sode_stratonovich(&spec, &noise, &ou, &x0s, 0.0, 1.0).unwrap();
    let converted = rode.convert(&ou, Frame::Sode).unwrap();
    assert!(converted.sup_distance(&sode).unwrap() <= 1e-10);
}

#[test]
fn geometric_brownian_motion() {
    // X_t = X_0 exp(-λt + W_t) for dX = -λX dt + X ∘ dW
    let lambda = 1e-3;
    let spec = linear_system(&[lambda; 3], 1.0, 0.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-4).unwrap();
    for seed in 0..5 {
        let noise = sample_wiener(seed, grid, 1).unwrap();
        let ou = build_ou_paths(&noise, spec.coeffs(), OuInit::Stationary).unwrap();
        let x0 = StateVector::new(Frame::Sode, 3, 1, vec![1.0, 2.0, -0.5]).unwrap();
        let traj = integrate_sode_stratonovich(&spec, &noise, &ou, &x0, 0.0, 1.0).unwrap();
        let w = noise.wiener_path(0);
        for k in (0..traj.len()).step_by(100) {
            let factor = (-lambda * grid.time(k) + w[k]).exp();
            for j in 0..3 {
                let exact = x0.component(j)[0] * factor;
                assert_relative_eq!(traj.component(k, j)[0], exact, max_relative = 5e-3);
            }
        }
    }
}

#[test]
fn conjugate_frames_agree() {
    let spec = linear_system(&[1.0; 4], 0.5, 1.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-4).unwrap();
    for seed in 0..4 {
        let noise = sample_wiener(seed, grid, 1).unwrap();
        let ou = build_ou_paths(&noise, spec.coeffs(), OuInit::Stationary).unwrap();
        let x0 = StateVector::new(Frame::Rode, 4, 1, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
        let rode = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default()).unwrap();
        let x0s = frame_convert(&x0, &ou.at(0), Frame::Sode).unwrap();
        let sode = integrate_sode_stratonovich(&spec, &noise, &ou, &x0s, 0.0, 1.0).unwrap();
        let converted = rode.convert(&ou, Frame::Sode).unwrap();
        let rel = converted.sup_distance(&sode).unwrap() / sode.sup_norm();
        assert!(rel <= 1e-2, "seed {seed}: relative gap {rel}");
    }
}

#[test]
fn auto_substeps_resolve_stiff_coupling() {
    let spec = linear_system(&[1.0, 2.0, 3.0], 0.0, 1000.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-2).unwrap();
    let ou = OUPathSet::zeros(grid, 3);
    let x0 = StateVector::new(Frame::Rode, 3, 1, vec![1.0, 1.0, 1.0]).unwrap();
    let plain = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default());
    match plain {
        Err(e) => assert!(matches!(e, sodesync::SyncError::NumericRange { .. })),
        Ok(t) => assert!(t.sup_norm() > 1e10),
    }
    let auto = integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::auto()).unwrap();
    assert!(auto.last_state().as_slice().iter().all(|v| v.is_finite() && v.abs() < 1.0));
}

#[test]
fn averaged_linear_flow() {
    let spec = linear_system(&[1.0, 2.0, 3.0], 0.0, 1.0);
    let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
    let ou = OUPathSet::zeros(grid, 3);
    let z = integrate_averaged(&spec, &ou, &[1.5], 0.0, 1.0, IntegratorOptions::default()).unwrap();
    assert_eq!(z.n(), 1);
    assert!((z.last_state().as_slice()[0] - 1.5 * (-2.0f64).exp()).abs() <= 1e-6);
}

#[test]
fn integration_rejects_bad_input() {
    let spec = linear_system(&[1.0; 3], 1.0, 1.0);
    let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
    let ou = OUPathSet::zeros(grid, 3);
    let x0 = StateVector::zeros(Frame::Rode, 3, 1);
    assert!(integrate_rode(&spec, &ou, &x0, 0.05, 1.0, IntegratorOptions::default()).is_err());
    assert!(integrate_rode(&spec, &ou, &x0, 0.0, 2.0, IntegratorOptions::default()).is_err());
    assert!(integrate_rode(&spec, &OUPathSet::zeros(grid, 4), &x0, 0.0, 1.0, IntegratorOptions::default()).is_err());
    let sode_start = StateVector::zeros(Frame::Sode, 3, 1);
    assert!(integrate_rode(&spec, &ou, &sode_start, 0.0, 1.0, IntegratorOptions::default()).is_err());
    let nan = StateVector::new(Frame::Rode, 3, 1, vec![f64::NAN, 0.0, 0.0]).unwrap();
    assert!(integrate_rode(&spec, &ou, &nan, 0.0, 1.0, IntegratorOptions::default()).is_err());
    let noise = NoiseGrid::from_increments(grid, vec![vec![0.0; 10]], vec![0.0], 0).unwrap();
    let other = OUPathSet::zeros(TimeGrid::new(0.0, 1.0, 0.05).unwrap(), 3);
    assert!(integrate_sode_stratonovich(&spec, &noise, &other, &sode_start, 0.0, 1.0).is_err());
}

#[test]
fn overflowing_paths_are_flagged_with_time() {
    let spec = linear_system(&[1.0; 3], 1.0, 0.0);
    let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
    let mut path = vec![0.0; 11];
    path[6] = 800.0;
    let ou = OUPathSet::from_values(grid, vec![path, vec![0.0; 11], vec![0.0; 11]], vec![vec![1.0]; 3]).unwrap();
    let x0 = StateVector::uniform(Frame::Rode, 3, &[1.0]);
    match integrate_rode(&spec, &ou, &x0, 0.0, 1.0, IntegratorOptions::default()) {
        Err(sodesync::SyncError::NumericRange { time, .. }) => assert_relative_eq!(time, 0.5, epsilon = 1e-12),
        other => panic!("expected a numeric-range error, got {other:?}"),
    }
}
