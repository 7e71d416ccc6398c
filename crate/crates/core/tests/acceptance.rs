//! Acceptance suite: every exit criterion of the laboratory, one test per
//! criterion, each printing a PASS/FAIL line with its measured numbers.
//!
//! Criterion 1 is asserted exactly as specified: two-sided EOC windows
//! around the guaranteed geometric rates. On the projected-icosphere
//! family the k = 2 measure quotient and normal error superconverge by a
//! full order (the sphere's local expansion has no odd terms), so those
//! two sub-checks fail by exceeding their windows; the printed lines carry
//! the measured orders.

use std::sync::OnceLock;
use std::time::Instant;

use mcf_core::assembly::{intermediate_nodal, Assembler};
use mcf_core::exactflow::{self, SphereSolution};
use mcf_core::femspace::{make_quadrature, make_symmetric_quadrature, triangle_monomial_moment};
use mcf_core::linalg;
use mcf_core::mesh::{self, build_icosphere, icosahedral_orbits};
use mcf_core::nodal::NodalVector;
use mcf_core::solver::{
    self, run_flow, stability_limited_tau, CgParams, FlowConfig, Scheme,
};
use mcf_core::verify::{
    defect, eoc, mass_difference_identity, monotone_decomposition,
    norm_equivalence_probe, random_nodal, rescale_max_norm, seeded_rng,
    stiffness_difference_identity, trace_functional,
};

const T_END: f64 = 0.05;

fn default_quad(degree: usize) -> mcf_core::QuadratureRule64 {
    make_quadrature(2 * degree + 2).unwrap()
}

struct FlowCell {
    degree: usize,
    level: usize,
    h: f64,
    tau: f64,
    l2_error: f64,
    max_nodal_error: f64,
    final_area: f64,
    area_monotone: bool,
    /// Relative change of the L² error under τ-halving, where checked.
    guard_rel_change: Option<f64>,
}

fn run_cell(degree: usize, level: usize, with_guard: bool) -> FlowCell {
    let sol = SphereSolution::new(1.0_f64).unwrap();
    let (mesh, x0) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
    let quad = default_quad(degree);
    let assembler = Assembler::new(&mesh, quad.clone()).unwrap();
    let h = mesh::mesh_size(&mesh, &x0).unwrap().h_max;
    let tau = stability_limited_tau(&assembler, &x0, h).unwrap().min(T_END);

    let errors_at = |tau: f64| {
        let config = FlowConfig::new(Scheme::SemidiscreteRk4, T_END, tau);
        let traj = run_flow(&mesh, &x0, &config, Some(&sol)).unwrap();
        assert!(traj.aborted.is_none(), "k={degree} L{level} aborted");
        let monotone = traj
            .diagnostics
            .windows(2)
            .all(|w| w[1].area <= w[0].area * (1.0 + 1e-13));
        let (l2, nodal) =
            exactflow::flowmap_error(&mesh, &x0, &traj.final_state, &sol, T_END, &quad).unwrap();
        let area = traj.diagnostics.last().unwrap().area;
        (l2, nodal, area, monotone)
    };
    let (l2_error, max_nodal_error, final_area, area_monotone) = errors_at(tau);
    let guard_rel_change = with_guard.then(|| {
        let (l2_half, _, _, _) = errors_at(tau / 2.0);
        (l2_error - l2_half).abs() / l2_half
    });
    FlowCell {
        degree,
        level,
        h,
        tau,
        l2_error,
        max_nodal_error,
        final_area,
        area_monotone,
        guard_rel_change,
    }
}

fn flow_study() -> &'static Vec<FlowCell> {
    static STUDY: OnceLock<Vec<FlowCell>> = OnceLock::new();
    STUDY.get_or_init(|| {
        let mut cells = Vec::new();
        for degree in [1usize, 2, 3] {
            for level in 1..=4 {
                // The τ-halving guard reruns the cell at τ/2; one
                // representative level per degree keeps the temporal-error
                // check without tripling the cost of the finest cell
                // (temporal error scales as τ⁴ ~ h⁸, far below every
                // tracked spatial rate).
                let with_guard = level == 3;
                let start = Instant::now();
                let cell = run_cell(degree, level, with_guard);
                eprintln!(
                    "flow cell k={degree} L{level}: h={:.4} tau={:.3e} l2={:.3e} nodal={:.3e} [{:?}]",
                    cell.h,
                    cell.tau,
                    cell.l2_error,
                    cell.max_nodal_error,
                    start.elapsed()
                );
                cells.push(cell);
            }
        }
        cells
    })
}

struct DefectRow {
    degree: usize,
    h: f64,
    norm: f64,
}

fn defect_study() -> &'static Vec<DefectRow> {
    static STUDY: OnceLock<Vec<DefectRow>> = OnceLock::new();
    STUDY.get_or_init(|| {
        let sol = SphereSolution::new(1.0_f64).unwrap();
        let cg = CgParams::default();
        let mut rows = Vec::new();
        for degree in [2usize, 3] {
            for level in 1..=4 {
                let (mesh, x0) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
                let rep = defect(&mesh, &x0, &sol, T_END, &default_quad(degree), &cg).unwrap();
                rows.push(DefectRow {
                    degree,
                    h: rep.h,
                    norm: rep.norm_m_defect,
                });
            }
        }
        rows
    })
}

#[test]
fn criterion_1_geometric_approximation_orders() {
    let start = Instant::now();
    let sol = SphereSolution::new(1.0_f64).unwrap();
    let mut failures = Vec::new();
    for degree in [1usize, 2] {
        let mut rows_delta = Vec::new();
        let mut rows_normal = Vec::new();
        let mut rows_interp = Vec::new();
        for level in 1..=4 {
            let (mesh, x0) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
            let quad = default_quad(degree);
            let rep = exactflow::geometric_errors(&mesh, &x0, &sol, 0.0, &quad, |p: &[f64; 3]| {
                p[0] * p[0]
            })
            .unwrap();
            rows_delta.push((rep.h, rep.sup_one_minus_delta));
            rows_normal.push((rep.h, rep.sup_normal_error));
            rows_interp.push((rep.h, rep.interp_l2_error));
        }
        let k = degree as f64;
        let checks = [
            ("delta", rows_delta, k + 1.0),
            ("normal", rows_normal, k),
            ("interp", rows_interp, k + 1.0),
        ];
        for (name, rows, expected) in checks {
            let order = eoc(&rows).unwrap().final_order().unwrap();
            let pass = (order - expected).abs() <= 0.3;
            println!(
                "A1 {name} k={degree}: EOC {order:.2} (expected {expected} +- 0.3) -> {}",
                if pass { "PASS" } else { "FAIL" }
            );
            if !pass {
                failures.push(format!("{name} k={degree}: EOC {order:.2} vs {expected} +- 0.3"));
            }
        }
    }
    println!("A1 runtime: {:?}", start.elapsed());
    assert!(
        failures.is_empty(),
        "A1 sub-checks outside their windows (k=2 superconverges on this family, \
         the measured orders exceed the guaranteed rates): {failures:?}"
    );
}

#[test]
fn criterion_2_matrix_difference_identities() {
    let start = Instant::now();
    let orders = [2usize, 4, 8, 16];
    for (degree, level) in [(1usize, 2usize), (2, 2)] {
        let (mesh, x_star) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
        let quad = default_quad(degree);
        let h = mesh::mesh_size(&mesh, &x_star).unwrap().h_max;
        let mut worst_final = 0.0_f64;
        for trial in 0..10 {
            let mut rng = seeded_rng(1000 + trial);
            let e = rescale_max_norm(&random_nodal(mesh.node_count(), &mut rng), 0.05 * h);
            let x = NodalVector::lin_comb(1.0, &x_star, 1.0, &e);
            let w = random_nodal(mesh.node_count(), &mut rng);
            let z = random_nodal(mesh.node_count(), &mut rng);

            let mut prev_mass = f64::INFINITY;
            let mut prev_stiff = f64::INFINITY;
            for &order in &orders {
                let mass =
                    mass_difference_identity(&mesh, &x_star, &x, &w, &z, order, &quad).unwrap();
                let stiff =
                    stiffness_difference_identity(&mesh, &x_star, &x, &w, order, &quad).unwrap();
                // Residuals decrease monotonically until they hit the
                // 1e-13 problem-scale floor, where they jitter.
                assert!(
                    mass.rel_residual <= prev_mass || mass.at_residual_floor(),
                    "k={degree} trial {trial}: mass residual grew at order {order}: {} after {prev_mass}",
                    mass.rel_residual
                );
                assert!(
                    stiff.rel_residual <= prev_stiff || stiff.at_residual_floor(),
                    "k={degree} trial {trial}: stiffness residual grew at order {order}: {} after {prev_stiff}",
                    stiff.rel_residual
                );
                prev_mass = mass.rel_residual;
                prev_stiff = stiff.rel_residual;
                if order == 16 {
                    assert!(
                        mass.rel_residual <= 1e-8,
                        "k={degree} trial {trial}: mass residual {} at order 16",
                        mass.rel_residual
                    );
                    assert!(
                        stiff.rel_residual <= 1e-8,
                        "k={degree} trial {trial}: stiffness residual {} at order 16",
                        stiff.rel_residual
                    );
                    worst_final = worst_final.max(mass.rel_residual).max(stiff.rel_residual);
                }
            }
        }
        println!(
            "A2 k={degree} level={level}: 10 trials, residuals <= 1e-8 at theta-order 16 \
             (worst {worst_final:.2e}), non-increasing across orders {orders:?} -> PASS"
        );
    }
    println!("A2 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_3_monotone_decomposition() {
    let start = Instant::now();
    for (degree, level) in [(1usize, 2usize), (2, 2)] {
        let (mesh, x_star) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
        let quad = default_quad(degree);
        let h = mesh::mesh_size(&mesh, &x_star).unwrap().h_max;
        for trial in 0..10 {
            let mut rng = seeded_rng(2000 + trial);
            let e = rescale_max_norm(&random_nodal(mesh.node_count(), &mut rng), 0.05 * h);
            let x = NodalVector::lin_comb(1.0, &x_star, 1.0, &e);
            let rep = monotone_decomposition(&mesh, &x_star, &x, 16, &quad).unwrap();
            let normal = rep.breakdown["normal_part"];
            assert!(normal >= 0.0);
            assert!(
                rep.abs_residual <= 1e-8 * rep.lhs.abs().max(normal),
                "k={degree} trial {trial}: |lhs - (trace+normal)| = {} vs lhs {}, normal {normal}",
                rep.abs_residual,
                rep.lhs
            );
        }

        // Radial scaling: the error field is tangential on every
        // intermediate surface, so the whole identity sits in the trace
        // part and equals 2s²·area.
        let s = 0.01;
        let x = x_star.scaled(1.0 + s);
        let rep = monotone_decomposition(&mesh, &x_star, &x, 16, &quad).unwrap();
        let area = Assembler::new(&mesh, quad.clone())
            .unwrap()
            .area(&x_star)
            .unwrap();
        let expect = 2.0 * s * s * area;
        assert!(rep.breakdown["normal_part"] <= 1e-12 * rep.lhs.abs());
        assert!(
            (rep.lhs - expect).abs() <= 1e-6 * expect,
            "k={degree}: radial lhs {} vs 2s^2 area {expect}",
            rep.lhs
        );

        // Identity-field trace functional against the E = P oracle; the
        // claimed zero is reported, not asserted.
        let t_id = trace_functional(&mesh, &x_star, &x_star, &quad).unwrap();
        let tol = if degree == 1 { 1e-10 } else { 1e-8 };
        assert!(
            (t_id - 2.0 * area).abs() <= tol * area,
            "k={degree}: trace functional {t_id} vs 2·area {}",
            2.0 * area
        );
        println!(
            "A3 k={degree}: decomposition exact to 1e-8; radial case lhs = 2s²·area; \
             trace functional(identity) = {t_id:.6} = 2·area (claimed value in the \
             vanishing lemma: 0) -> PASS"
        );
    }
    println!("A3 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_4_flow_convergence() {
    let start = Instant::now();
    let cells = flow_study();
    for degree in [1usize, 2, 3] {
        let rows: Vec<&FlowCell> = cells.iter().filter(|c| c.degree == degree).collect();
        for w in rows.windows(2) {
            assert!(
                w[1].l2_error < w[0].l2_error,
                "k={degree}: L² error did not decrease: {} -> {}",
                w[0].l2_error,
                w[1].l2_error
            );
        }
        for c in &rows {
            if let Some(guard) = c.guard_rel_change {
                assert!(
                    guard < 0.01,
                    "k={degree} L{}: τ-halving changed the error by {guard:.2e}",
                    c.level
                );
            }
        }
        let table: Vec<(f64, f64)> = rows.iter().map(|c| (c.h, c.l2_error)).collect();
        let order = eoc(&table).unwrap().final_order().unwrap();
        let required = if degree == 1 {
            1.0
        } else {
            (degree as f64 - 1.0) - 0.3
        };
        assert!(
            order >= required,
            "k={degree}: flow-map EOC {order:.2} below {required}"
        );
        let nodal: Vec<String> = rows
            .iter()
            .map(|c| format!("{:.3e}", c.max_nodal_error))
            .collect();
        println!(
            "A4 k={degree}: L² errors {:?} EOC {order:.2} (required >= {required}); \
             max-nodal errors {nodal:?} -> PASS",
            rows.iter().map(|c| c.l2_error).collect::<Vec<_>>()
        );
    }
    println!("A4 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_5_defect_estimate() {
    let start = Instant::now();
    for degree in [2usize, 3] {
        let rows: Vec<(f64, f64)> = defect_study()
            .iter()
            .filter(|r| r.degree == degree)
            .map(|r| (r.h, r.norm))
            .collect();
        let order = eoc(&rows).unwrap().final_order().unwrap();
        let required = (degree as f64 - 1.0) - 0.3;
        assert!(
            order >= required,
            "k={degree}: defect EOC {order:.2} below {required}"
        );
        println!(
            "A5 k={degree}: defect norms {:?}, EOC {order:.2} (required >= {required}) -> PASS",
            rows.iter().map(|r| r.1).collect::<Vec<_>>()
        );
    }
    println!("A5 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_6_area_monotonicity_and_k1_area_order() {
    let start = Instant::now();
    let cells = flow_study();
    for c in cells.iter() {
        assert!(
            c.area_monotone,
            "k={} L{}: discrete area increased during the run",
            c.degree, c.level
        );
    }
    let exact = 4.0 * std::f64::consts::PI * (1.0 - 4.0 * T_END);
    let rows: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.degree == 1)
        .map(|c| (c.h, (c.final_area - exact).abs()))
        .collect();
    let order = eoc(&rows).unwrap().final_order().unwrap();
    assert!(
        (order - 2.0).abs() <= 0.3,
        "k=1 area-error EOC {order:.2} outside 2 +- 0.3"
    );
    println!(
        "A6: area non-increasing in every accepted step of all {} runs; \
         k=1 final area matches 4π(1-4t) with EOC {order:.2} -> PASS",
        cells.len()
    );
    println!("A6 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_7_norm_equivalence() {
    let start = Instant::now();
    let (mesh, x_star) = build_icosphere::<f64>(2, 1, 1.0).unwrap();
    let quad = default_quad(1);
    let assembler = Assembler::new(&mesh, quad.clone()).unwrap();
    let thetas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst = 0.0_f64;
    let mut worst_grad = 0.0_f64;
    // 10 seeded perturbations x 10 transported fields = 100 trials.
    for probe in 0..10u64 {
        let mut rng = seeded_rng(3000 + probe);
        let raw = random_nodal(mesh.node_count(), &mut rng);
        let sup = assembler.sup_gradient(&x_star, &raw).unwrap();
        let e = raw.scaled(0.45 / sup);
        let rep =
            norm_equivalence_probe(&mesh, &x_star, &e, 10, &thetas, 4000 + probe, &quad).unwrap();
        assert!(rep.hypothesis_sup_gradient <= 0.5);
        worst = worst.max(rep.linf_value_ratio_max);
        worst_grad = worst_grad.max(rep.linf_gradient_ratio_max);
    }
    assert!(
        worst <= 2.05,
        "max L∞ value ratio {worst} exceeds the bound 2.05"
    );
    println!(
        "A7: 100 seeded trials, max L∞ value-ratio {worst:.6} <= 2.05 \
         (gradient ratio {worst_grad:.3}, reported) -> PASS"
    );
    println!("A7 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_8_linearly_implicit_euler() {
    let start = Instant::now();
    let sol = SphereSolution::new(1.0_f64).unwrap();
    let (mesh, x0) = build_icosphere::<f64>(3, 2, 1.0).unwrap();
    // A relabeling-invariant rule makes the assembled system commute with
    // the icosahedral rotations; the collapsed tensor rule would break
    // per-orbit symmetry at its quadrature-error level (~1e-9).
    let quad = make_symmetric_quadrature(2 * 2 + 2).unwrap();
    let assembler = Assembler::new(&mesh, quad).unwrap();
    let h = mesh::mesh_size(&mesh, &x0).unwrap().h_max;
    let orbits = icosahedral_orbits(&mesh, &x0).unwrap();
    let orbit_count = orbits.iter().max().unwrap() + 1;

    // τ-converged explicit reference.
    let tau_ref = stability_limited_tau(&assembler, &x0, h).unwrap();
    let reference = |tau: f64| {
        let config = FlowConfig::new(Scheme::SemidiscreteRk4, T_END, tau);
        run_flow(&mesh, &x0, &config, Some(&sol)).unwrap().final_state
    };
    let x_ref = reference(tau_ref);
    let x_ref_check = reference(tau_ref / 2.0);
    let ref_drift = x_ref.max_distance(&x_ref_check);

    // The per-orbit symmetry check needs the solver's asymmetry noise
    // under 1e-12; Jacobi-CG on M + τA reaches 1e-14 without stalling.
    let cg = CgParams {
        tol: 1e-14,
        max_iter: 100_000,
    };
    let mut errors = Vec::new();
    for tau in [4e-3_f64, 2e-3, 1e-3] {
        let mut x = x0.clone();
        let mut t = 0.0_f64;
        // A final partial step lands exactly on t_end (0.05 is not an
        // integer multiple of 4e-3).
        while t < T_END - 1e-12 {
            let tau_step = tau.min(T_END - t);
            let (next, _) = solver::step_limplicit_euler(&assembler, &x, tau_step, &cg).unwrap();
            x = next;
            t += tau_step;
            // Per-orbit radii stay equal: the scheme commutes with the
            // icosahedral rotations, so symmetry is preserved step by step.
            let mut min_r = vec![f64::INFINITY; orbit_count];
            let mut max_r = vec![0.0_f64; orbit_count];
            for (i, p) in x.iter().enumerate() {
                let r = linalg::norm3(p);
                min_r[orbits[i]] = min_r[orbits[i]].min(r);
                max_r[orbits[i]] = max_r[orbits[i]].max(r);
            }
            for o in 0..orbit_count {
                let spread = (max_r[o] - min_r[o]) / max_r[o];
                assert!(
                    spread <= 1e-12,
                    "orbit {o}: radii spread {spread:.2e} after a step at tau {tau}"
                );
            }
        }
        errors.push((tau, x.max_distance(&x_ref)));
    }
    assert!(
        ref_drift < 0.01 * errors.last().unwrap().1,
        "reference not τ-converged: drift {ref_drift:.2e}"
    );
    let mut orders = Vec::new();
    for w in errors.windows(2) {
        orders.push((w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln());
    }
    for o in &orders {
        assert!(
            (o - 1.0).abs() <= 0.2,
            "temporal EOC {o:.3} outside 1 +- 0.2 (errors {errors:?})"
        );
    }
    let orders_fmt: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    println!(
        "A8: temporal EOC {orders_fmt:?} within 1 +- 0.2; per-orbit radii equal to 1e-12 \
         each step ({orbit_count} orbits) -> PASS"
    );
    println!("A8 runtime: {:?}", start.elapsed());
}

#[test]
fn criterion_9_structural_suite() {
    let start = Instant::now();

    // Mesh structure at several degrees and levels.
    for (degree, level) in [(1usize, 0usize), (1, 3), (2, 2), (3, 1), (6, 0)] {
        let (mesh, pos) = build_icosphere::<f64>(level, degree, 1.0).unwrap();
        mesh.check_structure().unwrap();
        let stats = mesh::mesh_size(&mesh, &pos).unwrap();
        assert!(!stats.degenerate);
        assert!(stats.h_max / stats.h_min < 2.0);
    }

    // SPD probes, kernel property, and the tangential-energy identity.
    let (mesh, pos) = build_icosphere::<f64>(2, 2, 1.0).unwrap();
    let quad = default_quad(2);
    let assembler = Assembler::new(&mesh, quad.clone()).unwrap();
    let (m, a) = assembler.mass_and_stiffness(&pos).unwrap();
    assert_eq!(m.symmetry_residual(), 0.0);
    assert_eq!(a.symmetry_residual(), 0.0);
    let mut rng = seeded_rng(77);
    for _ in 0..20 {
        let w = random_nodal::<f64>(mesh.node_count(), &mut rng);
        assert!(m.quad_form(&w, &w) > 0.0);
        assert!(a.quad_form(&w, &w) >= -1e-12);
    }
    assert!(
        solver::solve_spd(&m, &random_nodal(mesh.node_count(), &mut rng), &CgParams::default(), None)
            .is_ok()
    );
    assert!(a.ones_residual() <= 1e-11 * a.inf_norm());
    let area = assembler.area(&pos).unwrap();
    assert!((a.quad_form(&pos, &pos) - 2.0 * area).abs() <= 1e-11 * area);

    // Quadrature moments 1/24 and 1/180 against the factorial oracle.
    let q2 = make_quadrature::<f64>(2).unwrap();
    let xy: f64 = q2
        .points
        .iter()
        .zip(q2.weights.iter())
        .map(|(p, w)| w * p[1] * p[2])
        .sum();
    assert!((xy - 1.0 / 24.0).abs() < 1e-15);
    assert!((triangle_monomial_moment(1, 1) - 1.0 / 24.0).abs() < 1e-18);
    let q4 = make_quadrature::<f64>(4).unwrap();
    let x2y2: f64 = q4
        .points
        .iter()
        .zip(q4.weights.iter())
        .map(|(p, w)| w * p[1] * p[1] * p[2] * p[2])
        .sum();
    assert!((x2y2 - 1.0 / 180.0).abs() < 1e-15);
    assert!((triangle_monomial_moment(2, 2) - 1.0 / 180.0).abs() < 1e-18);

    // Lift idempotence.
    let sol = SphereSolution::new(1.0_f64).unwrap();
    let p = [0.4, -0.8, 0.3];
    let once = exactflow::lift_to_sphere(&p, &sol, 0.07).unwrap();
    let twice = exactflow::lift_to_sphere(&once, &sol, 0.07).unwrap();
    assert!(linalg::dist3(&once, &twice) <= 1e-14);

    // Intermediate vectors interpolate their endpoints.
    let e = rescale_max_norm(&random_nodal(mesh.node_count(), &mut rng), 0.01);
    let x = NodalVector::lin_comb(1.0, &pos, 1.0, &e);
    assert_eq!(intermediate_nodal(&pos, &x, 0.0), pos);
    assert_eq!(intermediate_nodal(&pos, &x, 1.0), x);

    println!(
        "A9: conformity/orientation/Euler checks, SPD probes, A·1 = 0, \
         xᵀA(x)x = 2·area, quadrature moments, lift idempotence -> PASS"
    );
    println!("A9 runtime: {:?}", start.elapsed());
}
