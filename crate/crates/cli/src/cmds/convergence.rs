//! `mcf convergence`: per-(degree, level) flow runs against the shrinking
//! sphere, with EOC tables for the flow-map error, nodal error, defect
//! norm, geometric errors, and the final-area error.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use mcf_core::assembly::Assembler;
use mcf_core::exactflow::{flowmap_error, geometric_errors, SphereSolution};
use mcf_core::femspace::make_quadrature;
use mcf_core::mesh::{build_icosphere, mesh_size};
use mcf_core::solver::{run_flow, stability_limited_tau, CgParams, FlowConfig};
use mcf_core::verify::defect;

use super::{parse_usize_list, thread_cap, CliError, SchemeArg, TauRuleArg};
use crate::output::{plot_script, write_text, CsvWriter};

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    /// Comma-separated element degrees, e.g. 1,2,3.
    #[arg(long, default_value = "1,2,3")]
    pub degrees: String,
    /// Comma-separated refinement levels, e.g. 1,2,3,4.
    #[arg(long, default_value = "1,2,3,4")]
    pub levels: String,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.05)]
    pub t_end: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Rk4)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = TauRuleArg::Auto)]
    pub tau_rule: TauRuleArg,
    /// Check that halving τ changes the error by < 1%: at one
    /// representative level per degree, at every level, or never.
    #[arg(long, default_value = "representative")]
    pub tau_guard: String,
    /// Quadrature exactness degree (default 2k + 2).
    #[arg(long)]
    pub quad_exactness: Option<usize>,
    /// Seed recorded in the provenance line (the study is deterministic).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

struct Cell {
    degree: usize,
    level: usize,
    h: f64,
    tau: f64,
    l2_error: f64,
    max_nodal_error: f64,
    defect_norm: f64,
    sup_one_minus_delta: f64,
    sup_normal_error: f64,
    interp_l2_error: f64,
    area_error: f64,
    guard_rel_change: Option<f64>,
    area_monotone: bool,
}

fn run_cell(
    degree: usize,
    level: usize,
    args: &ConvergenceArgs,
    with_guard: bool,
) -> Result<Cell, CliError> {
    let solution = SphereSolution::new(args.radius)?;
    if args.t_end >= solution.singular_time() {
        return Err(CliError::Usage(format!(
            "t_end {} is at or beyond the singular time {}",
            args.t_end,
            solution.singular_time()
        )));
    }
    let (mesh, x0) = build_icosphere::<f64>(level, degree, args.radius)?;
    let exactness = args.quad_exactness.unwrap_or(2 * degree + 2);
    let quad = make_quadrature::<f64>(exactness)?;
    let assembler = Assembler::new(&mesh, quad.clone())?;
    let h = mesh_size(&mesh, &x0)?.h_max;
    let tau = match args.tau_rule {
        TauRuleArg::Auto => stability_limited_tau(&assembler, &x0, h)?,
        TauRuleArg::H2Over8 => h * h / 8.0,
    }
    .min(args.t_end);

    let flow_errors = |tau: f64| -> Result<(f64, f64, f64, bool), CliError> {
        let mut config = FlowConfig::new(args.scheme.to_core(), args.t_end, tau);
        config.quadrature_exactness = Some(exactness);
        let traj = run_flow(&mesh, &x0, &config, Some(&solution))?;
        if let Some(reason) = &traj.aborted {
            return Err(CliError::Numerical(format!(
                "k={degree} level={level}: {reason}"
            )));
        }
        let monotone = traj
            .diagnostics
            .windows(2)
            .all(|w| w[1].area <= w[0].area * (1.0 + 1e-13));
        let (l2, nodal) = flowmap_error(&mesh, &x0, &traj.final_state, &solution, args.t_end, &quad)?;
        Ok((l2, nodal, traj.diagnostics.last().unwrap().area, monotone))
    };
    let (l2_error, max_nodal_error, final_area, area_monotone) = flow_errors(tau)?;
    let guard_rel_change = if with_guard {
        let (l2_half, _, _, _) = flow_errors(tau / 2.0)?;
        Some((l2_error - l2_half).abs() / l2_half)
    } else {
        None
    };

    let defect_report = defect(&mesh, &x0, &solution, args.t_end, &quad, &CgParams::default())?;
    let geo = geometric_errors(&mesh, &x0, &solution, 0.0, &quad, |p: &[f64; 3]| p[0] * p[0])?;
    let r_end = solution.radius(args.t_end)?;
    let exact_area = 4.0 * std::f64::consts::PI * r_end * r_end;

    Ok(Cell {
        degree,
        level,
        h,
        tau,
        l2_error,
        max_nodal_error,
        defect_norm: defect_report.norm_m_defect,
        sup_one_minus_delta: geo.sup_one_minus_delta,
        sup_normal_error: geo.sup_normal_error,
        interp_l2_error: geo.interp_l2_error,
        area_error: (final_area - exact_area).abs(),
        guard_rel_change,
        area_monotone,
    })
}

fn eoc_column(rows: &[(f64, f64)]) -> Vec<Option<f64>> {
    let mut out = vec![None; rows.len()];
    for i in 1..rows.len() {
        let (h0, v0) = rows[i - 1];
        let (h1, v1) = rows[i];
        if v0 > 0.0 && v1 > 0.0 && h1 < h0 {
            out[i] = Some((v0 / v1).ln() / (h0 / h1).ln());
        }
    }
    out
}

pub fn run(args: ConvergenceArgs) -> Result<(), CliError> {
    let degrees = parse_usize_list(&args.degrees, "degree")?;
    let levels = parse_usize_list(&args.levels, "level")?;
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Usage("levels must be strictly increasing".into()));
    }
    let guard_mode = args.tau_guard.as_str();
    if !["none", "representative", "all"].contains(&guard_mode) {
        return Err(CliError::Usage(format!(
            "unknown tau-guard mode {guard_mode:?} (expected none|representative|all)"
        )));
    }

    // Representative guard level: the second-finest requested level keeps
    // the check meaningful without tripling the most expensive cell.
    let guard_level = if levels.len() >= 2 {
        levels[levels.len() - 2]
    } else {
        levels[0]
    };
    let cells: Vec<(usize, usize)> = degrees
        .iter()
        .flat_map(|&k| levels.iter().map(move |&l| (k, l)))
        .collect();

    // Independent cells may run in parallel under the MCF_THREADS cap;
    // results are collected by index, so output order is deterministic.
    let slots: Vec<Mutex<Option<Result<Cell, CliError>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let workers = thread_cap().min(cells.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let (degree, level) = cells[i];
                let with_guard = match guard_mode {
                    "all" => true,
                    "representative" => level == guard_level,
                    _ => false,
                };
                let result = run_cell(degree, level, &args, with_guard);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut results: Vec<Cell> = Vec::with_capacity(cells.len());
    for slot in slots {
        results.push(slot.into_inner().unwrap().expect("cell not computed")?);
    }

    let config_repr = format!("{args:?}");
    std::fs::create_dir_all(&args.out_dir)?;
    for &degree in &degrees {
        let rows: Vec<&Cell> = results.iter().filter(|c| c.degree == degree).collect();
        let col = |f: &dyn Fn(&Cell) -> f64| -> Vec<(f64, f64)> {
            rows.iter().map(|c| (c.h, f(*c))).collect()
        };
        let metrics: Vec<(&str, Vec<(f64, f64)>)> = vec![
            ("l2_error", col(&|c| c.l2_error)),
            ("max_nodal_error", col(&|c| c.max_nodal_error)),
            ("defect_norm", col(&|c| c.defect_norm)),
            ("sup_one_minus_delta", col(&|c| c.sup_one_minus_delta)),
            ("sup_normal_error", col(&|c| c.sup_normal_error)),
            ("interp_l2_error", col(&|c| c.interp_l2_error)),
            ("area_error", col(&|c| c.area_error)),
        ];
        let orders: Vec<Vec<Option<f64>>> =
            metrics.iter().map(|(_, rows)| eoc_column(rows)).collect();

        let header = format!(
            "level,h,tau,{},tau_guard_rel_change,area_monotone",
            metrics
                .iter()
                .map(|(name, _)| format!("{name},{name}_eoc"))
                .collect::<Vec<_>>()
                .join(",")
        );
        let mut csv = CsvWriter::create(
            &args.out_dir.join(format!("eoc_k{degree}.csv")),
            &config_repr,
            &header,
        )?;
        for (i, cell) in rows.iter().enumerate() {
            let mut fields = vec![
                cell.level.to_string(),
                format!("{:e}", cell.h),
                format!("{:e}", cell.tau),
            ];
            for (m, (_, values)) in metrics.iter().enumerate() {
                fields.push(format!("{:e}", values[i].1));
                fields.push(
                    orders[m][i]
                        .map(|o| format!("{o:.4}"))
                        .unwrap_or_default(),
                );
            }
            fields.push(
                cell.guard_rel_change
                    .map(|g| format!("{g:e}"))
                    .unwrap_or_default(),
            );
            fields.push(cell.area_monotone.to_string());
            csv.row(&fields.join(","))?;
        }
        csv.finish()?;

        println!("degree {degree}:");
        println!("  level      h        l2_error   eoc    defect    eoc    delta_h   eoc");
        for (i, cell) in rows.iter().enumerate() {
            let fmt_eoc = |o: Option<f64>| o.map(|o| format!("{o:5.2}")).unwrap_or("    -".into());
            println!(
                "  {:>5}  {:.4}  {:.3e}  {}  {:.3e}  {}  {:.3e}  {}",
                cell.level,
                cell.h,
                cell.l2_error,
                fmt_eoc(orders[0][i]),
                cell.defect_norm,
                fmt_eoc(orders[2][i]),
                cell.sup_one_minus_delta,
                fmt_eoc(orders[3][i]),
            );
        }
        for cell in &rows {
            if let Some(guard) = cell.guard_rel_change {
                println!(
                    "  tau-halving guard at level {}: relative error change {guard:.2e}",
                    cell.level
                );
            }
        }
    }
    write_text(&args.out_dir.join("plot.py"), plot_script())?;
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
