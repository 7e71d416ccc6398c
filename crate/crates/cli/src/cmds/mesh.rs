//! `mcf mesh`: icosphere generation.

use std::path::PathBuf;

use clap::Args;
use mcf_core::mesh::{build_icosphere, mesh_size, MeshFile};

use super::CliError;

#[derive(Args, Debug)]
pub struct MeshArgs {
    /// Refinement level of the icosphere (0 = icosahedron).
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=8))]
    pub level: u32,
    /// Element degree k.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=6))]
    pub degree: u32,
    /// Sphere radius.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: MeshArgs) -> Result<(), CliError> {
    let (mesh, positions) = build_icosphere::<f64>(args.level as usize, args.degree as usize, args.radius)?;
    let stats = mesh_size(&mesh, &positions)?;
    println!(
        "mesh: level={} degree={} vertices={} nodes={} elements={} h_max={:.6} h_min={:.6} quality={:.4}",
        mesh.level(),
        mesh.degree(),
        mesh.vertex_count(),
        mesh.node_count(),
        mesh.element_count(),
        stats.h_max,
        stats.h_min,
        stats.quality
    );
    let file = MeshFile::pack(&mesh, &positions);
    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string(&file)?;
    std::fs::write(&args.out, json)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
