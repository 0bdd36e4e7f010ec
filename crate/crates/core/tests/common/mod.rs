#![allow(dead_code)]

use twoclass_ar::model::{CharacteristicBasis, EquilibriumState, ModelParams};
use twoclass_ar::riemann::RiemannSystem;

pub fn benchmark() -> (ModelParams, EquilibriumState, CharacteristicBasis, RiemannSystem) {
    let p = ModelParams::benchmark();
    let [r1, r2] = ModelParams::BENCHMARK_DENSITIES;
    let eq = EquilibriumState::from_densities(r1, r2, &p).unwrap();
    let cb = CharacteristicBasis::new(&eq);
    let rs = RiemannSystem::build(&eq, &cb, p.length).unwrap();
    (p, eq, cb, rs)
}
