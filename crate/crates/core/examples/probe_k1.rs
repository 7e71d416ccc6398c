use mcf_core::exactflow::{flowmap_error, SphereSolution};
use mcf_core::femspace::make_quadrature;
use mcf_core::mesh::build_icosphere;
use mcf_core::solver::{run_flow, FlowConfig, Scheme};

fn main() {
    let sol = SphereSolution::new(1.0_f64).unwrap();
    let quad_hi = make_quadrature::<f64>(12).unwrap();
    for level in [2usize, 3] {
        let (mesh, x0) = build_icosphere::<f64>(level, 1, 1.0).unwrap();
        for tau in [1.0e-3, 5.0e-4] {
            let mut config = FlowConfig::new(Scheme::SemidiscreteRk4, 0.05, tau);
            config.cg_tolerance = 1e-14;
            let traj = run_flow(&mesh, &x0, &config, Some(&sol)).unwrap();
            let (l2, _) = flowmap_error(&mesh, &x0, &traj.final_state, &sol, 0.05, &quad_hi).unwrap();
            println!("L{level} tau={tau:.1e}: l2={l2:.6e}");
        }
    }
}
