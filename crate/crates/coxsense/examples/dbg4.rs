// debug binary for criterion 4
use std::sync::Arc;
use nalgebra::{DVector};
use coxsense::basis::{build_hat_basis, gamma_transform};
use coxsense::kernels::{Domain, KernelSpec};
use coxsense::posterior::{Observation, PosteriorModel};
use coxsense::samplers::{myula_sample, MyulaConfig, StepSize};

fn main() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let basis = build_hat_basis(&domain, 2).unwrap();
    let model = gamma_transform(basis, KernelSpec::squared_exponential(1.0)).unwrap().with_lower_bound(0.1);
    let mut post = PosteriorModel::new(Arc::new(model));
    let mut events = Vec::new();
    for i in 0..5 {
        events.push(vec![-0.95 + 0.01 * i as f64]);
        events.push(vec![0.91 + 0.01 * i as f64]);
    }
    post.observe(Observation { region: domain.as_region(), region_id: None, duration: 30.0, events }).unwrap();
    post.refresh(1e-9).unwrap();
    let map = post.cached_map().unwrap().clone();
    println!("map = {:?}", map.as_slice());
    println!("c_map = {:?}", (post.basis().gamma().transpose() * &map).as_slice());
    let hess = post.energy_hess(&map);
    println!("hess = [[{:.2},{:.2}],[{:.2},{:.2}]]", hess[(0,0)], hess[(0,1)], hess[(1,0)], hess[(1,1)]);
    let cfg = MyulaConfig { steps: 20_000, burn_in: 0.5, step_size: StepSize::Auto, power_iterations: 50, seed: 11 };
    let samples = myula_sample(&post, &cfg).unwrap();
    let n = samples.len() as f64;
    let mean: DVector<f64> = samples.iter().fold(DVector::zeros(2), |a, s| a + s) / n;
    println!("chain mean = {:?}", mean.as_slice());
    let mx = samples.iter().map(|s| s[0]).fold(f64::NEG_INFINITY, f64::max);
    println!("max theta0 = {mx}");
    // exposure sanity
    let (phi_d, psi_d) = post.basis().region_integral(&domain.as_region()).unwrap();
    println!("phi_D = {:?}, psi_D = {:?}", phi_d.as_slice(), psi_d.as_slice());
}
