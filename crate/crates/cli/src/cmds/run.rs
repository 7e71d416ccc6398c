//! `mcf run`: a single flow run with trajectory CSV and final-state JSON.

use std::path::PathBuf;

use clap::Args;
use mcf_core::assembly::Assembler;
use mcf_core::exactflow::{flowmap_error, SphereSolution};
use mcf_core::femspace::make_quadrature;
use mcf_core::mesh::{build_icosphere, mesh_size, MeshFile};
use mcf_core::solver::{run_flow, stability_limited_tau, FlowConfig};

use super::{CliError, SchemeArg, TauRuleArg};
use crate::output::{opt_sci, CsvWriter};

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=8))]
    pub level: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=6))]
    pub degree: u32,
    /// Initial sphere radius R0.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Final time; must stay below the singular time R0²/4.
    #[arg(long, default_value_t = 0.05)]
    pub t_end: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Rk4)]
    pub scheme: SchemeArg,
    /// Fixed time step; derived from --tau-rule when omitted.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = TauRuleArg::Auto)]
    pub tau_rule: TauRuleArg,
    /// Quadrature exactness degree (default 2k + 2).
    #[arg(long)]
    pub quad_exactness: Option<usize>,
    /// Relabeling-invariant quadrature (six-fold points, exact symmetry
    /// preservation).
    #[arg(long)]
    pub symmetric_quad: bool,
    /// Keep every n-th state; error columns are evaluated at snapshots.
    #[arg(long, default_value_t = 10)]
    pub snapshot_stride: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub cg_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub quality_threshold: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let solution = SphereSolution::new(args.radius)?;
    if args.t_end >= solution.singular_time() {
        return Err(CliError::Usage(format!(
            "t_end {} is at or beyond the singular time {}",
            args.t_end,
            solution.singular_time()
        )));
    }
    let (mesh, x0) = build_icosphere::<f64>(args.level as usize, args.degree as usize, args.radius)?;
    let h = mesh_size(&mesh, &x0)?.h_max;
    let exactness = args.quad_exactness.unwrap_or(2 * mesh.degree() + 2);
    let quad = make_quadrature::<f64>(exactness)?;
    let tau = match args.tau {
        Some(tau) => tau,
        None => {
            let assembler = Assembler::new(&mesh, quad.clone())?;
            match args.tau_rule {
                TauRuleArg::Auto => stability_limited_tau(&assembler, &x0, h)?,
                TauRuleArg::H2Over8 => h * h / 8.0,
            }
            .min(args.t_end)
        }
    };
    if tau > args.t_end {
        return Err(CliError::Usage(format!(
            "time step {tau} exceeds t_end {}",
            args.t_end
        )));
    }

    let mut config = FlowConfig::new(args.scheme.to_core(), args.t_end, tau);
    config.cg_tolerance = args.cg_tol;
    config.quality_abort_threshold = args.quality_threshold;
    config.snapshot_stride = args.snapshot_stride.max(1);
    config.quadrature_exactness = Some(exactness);
    config.symmetric_quadrature = args.symmetric_quad;

    let trajectory = run_flow(&mesh, &x0, &config, Some(&solution))?;

    // Errors against the exact flow at every stored snapshot.
    let mut snapshot_errors: Vec<(usize, f64, f64)> = Vec::new();
    for (t, state) in &trajectory.snapshots {
        let (l2, nodal) = flowmap_error(&mesh, &x0, state, &solution, *t, &quad)?;
        let step = trajectory
            .diagnostics
            .iter()
            .find(|d| (d.t - *t).abs() <= 1e-14)
            .map(|d| d.step)
            .unwrap_or(usize::MAX);
        snapshot_errors.push((step, l2, nodal));
    }

    let config_repr = format!("{args:?}");
    let mut csv = CsvWriter::create(
        &args.out_dir.join("trajectory.csv"),
        &config_repr,
        "step,t,area,min_quality,cg_iterations,l2_error,max_nodal_error",
    )?;
    for d in &trajectory.diagnostics {
        let err = snapshot_errors.iter().find(|(s, _, _)| *s == d.step);
        csv.row(&format!(
            "{},{:e},{:e},{:e},{},{},{}",
            d.step,
            d.t,
            d.area,
            d.min_quality,
            d.cg_iterations,
            opt_sci(err.map(|e| e.1)),
            opt_sci(err.map(|e| e.2)),
        ))?;
    }
    csv.finish()?;

    let final_file = MeshFile::pack(&mesh, &trajectory.final_state);
    std::fs::write(
        args.out_dir.join("final.json"),
        serde_json::to_string(&final_file)?,
    )?;

    let last = trajectory.diagnostics.last().unwrap();
    let (l2, nodal) = snapshot_errors
        .last()
        .map(|(_, l2, nodal)| (*l2, *nodal))
        .unwrap_or((f64::NAN, f64::NAN));
    println!(
        "run: scheme={:?} k={} level={} tau={tau:.3e} steps={} final_area={:.6} l2_error={l2:.3e} max_nodal_error={nodal:.3e}",
        args.scheme,
        mesh.degree(),
        mesh.level(),
        last.step,
        last.area
    );
    if let Some(reason) = &trajectory.aborted {
        return Err(CliError::Numerical(format!("flow aborted: {reason}")));
    }
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
