use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use bimodal_core::analysis::{
    capability_table, payload_capacity, quadrant_map, write_capability_csv, write_quadrant_csv,
};
use bimodal_core::model::ActuatorMode;
use bimodal_core::sim::{check_expectations, energy_audit, run_batch, summary_text, Scenario};
use bimodal_core::valve::ValveMassModel;
use bimodal_core::{derived_constants, Config, Error, Execution};

/// Simulation and design analysis of a two-speed hydrostatic leg actuator.
#[derive(Parser, Debug)]
#[command(name = "bimodal", version)]
struct Cli {
    /// Configuration file (TOML). Defaults to the built-in prototype.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--override valve.k_open=0.1`.
    #[arg(long = "override", global = true, value_name = "K=V")]
    overrides: Vec<String>,

    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Run sweeps and batches on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run built-in or file scenarios and write `<name>_trace.csv` and `<name>_summary.txt`.
    Simulate {
        /// Built-in name (gait, drop, swing-only, lift-only) or a scenario file.
        #[arg(required = true)]
        scenarios: Vec<String>,

        /// Integrator step in seconds. Must divide the control period.
        #[arg(long, value_name = "SECONDS")]
        dt: Option<f64>,

        /// Exit with status 3 if a scenario misses any of its expectations.
        #[arg(long)]
        strict: bool,
    },
    /// Write one of the static analyses as CSV.
    Analyze {
        #[arg(value_enum)]
        which: Analysis,

        /// Valve body material for the mass map (a `material.<name>` entry).
        #[arg(long)]
        material: Option<String>,

        /// Bore diameter range of the mass map, mm.
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [4.0, 16.0])]
        bore_mm: Vec<f64>,

        /// Switching time range of the mass map, s.
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [0.02, 0.5])]
        cycle_s: Vec<f64>,

        /// Grid points along bore and switching time.
        #[arg(long, num_args = 2, value_names = ["BORE", "CYCLE"], default_values_t = [301, 241])]
        points: Vec<usize>,
    },
    /// Validate the configuration and print the derived constants.
    Check,
    /// Print the fully resolved configuration as TOML.
    DumpConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Analysis {
    Capability,
    Quadrant,
    ValveMap,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_UNSTABLE: u8 = 2;
const EXIT_STRICT: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let unstable = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Instability { .. })));
            ExitCode::from(if unstable { EXIT_UNSTABLE } else { EXIT_CONFIG })
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let cfg = match &cli.config {
        Some(path) => Config::load_with_overrides(path, &cli.overrides)
            .with_context(|| format!("loading {}", path.display()))?,
        None => Config::default().with_overrides(&cli.overrides)?,
    };
    Ok(cfg)
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = load_config(&cli)?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Simulate {
            scenarios,
            dt,
            strict,
        } => simulate(&cli, &cfg, scenarios, *dt, *strict, exec),
        Command::Analyze {
            which,
            material,
            bore_mm,
            cycle_s,
            points,
        } => {
            create_out(&cli.out)?;
            match which {
                Analysis::Capability => analyze_capability(&cli.out, &cfg)?,
                Analysis::Quadrant => analyze_quadrant(&cli.out, &cfg)?,
                Analysis::ValveMap => {
                    let grid = MapGrid {
                        bore: (bore_mm[0] * 1e-3, bore_mm[1] * 1e-3),
                        cycle: (cycle_s[0], cycle_s[1]),
                        points: (points[0], points[1]),
                    };
                    analyze_valve_map(&cli.out, &cfg, material.as_deref(), grid, exec)?
                }
            }
            Ok(0)
        }
        Command::Check => {
            check(&cfg);
            Ok(0)
        }
        Command::DumpConfig => {
            print!("{}", cfg.to_toml_string());
            Ok(0)
        }
    }
}

fn simulate(
    cli: &Cli,
    cfg: &Config,
    names: &[String],
    dt: Option<f64>,
    strict: bool,
    exec: Execution,
) -> anyhow::Result<u8> {
    let mut scenarios = names
        .iter()
        .map(|n| Scenario::resolve(n).with_context(|| format!("scenario `{n}`")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(dt) = dt {
        if dt.is_nan() || dt <= 0.0 {
            bail!("--dt must be > 0 (got {dt})");
        }
        for s in &mut scenarios {
            s.dt = Some(dt);
        }
    }
    create_out(&cli.out)?;

    let traces = run_batch(&scenarios, cfg, exec);
    let mut violations = 0;
    for (scenario, trace) in scenarios.iter().zip(traces) {
        let trace = trace.with_context(|| format!("simulating `{}`", scenario.name))?;
        let trace_path = cli.out.join(format!("{}_trace.csv", scenario.name));
        trace.write_csv(create_file(&trace_path)?)?;
        let ledger = energy_audit(&trace);
        let mut summary = summary_text(&trace, &ledger);
        let missed = check_expectations(&trace, scenario, &ledger);
        for m in &missed {
            summary.push_str(&format!("expectation_missed: {m}\n"));
        }
        let summary_path = cli.out.join(format!("{}_summary.txt", scenario.name));
        fs::write(&summary_path, &summary)
            .with_context(|| format!("writing {}", summary_path.display()))?;
        log::info!(
            "wrote {} and {}",
            trace_path.display(),
            summary_path.display()
        );

        println!("{}", scenario.name);
        for line in summary.lines().filter(|l| is_headline(l)) {
            println!("  {line}");
        }
        violations += missed.len();
    }
    if strict && violations > 0 {
        eprintln!("{violations} expectation(s) missed");
        return Ok(EXIT_STRICT);
    }
    Ok(0)
}

fn is_headline(line: &str) -> bool {
    [
        "contact_",
        "missed_contact",
        "downshift_",
        "upshift_",
        "min_force",
        "peak_",
        "energy_residual_fraction",
        "warning",
        "rejected",
        "expectation_missed",
    ]
    .iter()
    .any(|p| line.starts_with(p))
}

fn analyze_capability(out: &Path, cfg: &Config) -> anyhow::Result<()> {
    let rows = capability_table(&cfg.params, &cfg.analysis);
    let path = out.join("capability_table.csv");
    write_capability_csv(&rows, create_file(&path)?)?;
    println!(
        "{:<4} {:>9} {:>9} {:>9} {:>16} {:>16}",
        "mode", "m_A kg", "F_max N", "v_max m/s", "a_swing (print)", "a_stance (print)"
    );
    for r in &rows {
        println!(
            "{:<4} {:>9.2} {:>9.1} {:>9.4} {:>8.3} ({:>5.1}) {:>8.3} ({:>5.1})",
            r.mode,
            r.reflected_mass_kg,
            r.max_force_n,
            r.v_max_mps,
            r.a_swing_mps2,
            r.a_swing_printed_mps2,
            r.a_stance_mps2,
            r.a_stance_printed_mps2
        );
    }
    println!("accelerations in the {} frame", rows[0].frame);
    let (hs, hf) = payload_capacity(&cfg.params, cfg.analysis.force_per_kg)?;
    println!(
        "payload at {} N/kg: HS {hs:.2} kg, HF {hf:.1} kg",
        cfg.analysis.force_per_kg
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_quadrant(out: &Path, cfg: &Config) -> anyhow::Result<()> {
    let regions = quadrant_map(&cfg.params, cfg.analysis.braking_angle);
    let path = out.join("quadrant_regions.csv");
    write_quadrant_csv(&regions, create_file(&path)?)?;
    for r in &regions {
        println!("{:<11} {} vertices", r.label, r.boundary.len());
    }
    println!("wrote {}", path.display());
    Ok(())
}

struct MapGrid {
    bore: (f64, f64),
    cycle: (f64, f64),
    points: (usize, usize),
}

fn analyze_valve_map(
    out: &Path,
    cfg: &Config,
    material: Option<&str>,
    grid: MapGrid,
    exec: Execution,
) -> anyhow::Result<()> {
    let name = material.unwrap_or(&cfg.params.valve_sizing.body_material);
    let spec = cfg.params.material(name).ok_or_else(|| {
        let known: Vec<_> = cfg.params.materials.keys().map(String::as_str).collect();
        anyhow!("unknown material `{name}` (known: {})", known.join(", "))
    })?;
    let model = ValveMassModel::from_params(&cfg.params)?;
    let map = model.mass_map(grid.bore, grid.cycle, spec, grid.points, exec)?;
    let path = out.join("valve_mass_map.csv");
    map.write_csv(create_file(&path)?)?;

    let bore = cfg.params.valve.bore_diameter;
    let cycle = cfg.params.valve.commutation_time();
    let exact = model.unit_mass(bore, cycle, spec)?;
    let near = map.nearest(bore, cycle);
    println!(
        "{name}: {} x {} cells, total {:.1} g to {:.1} g",
        map.diameters.len(),
        map.cycle_times.len(),
        map.cells
            .iter()
            .map(|c| c.masses.total)
            .fold(f64::INFINITY, f64::min)
            * 1e3,
        map.cells.iter().map(|c| c.masses.total).fold(0.0, f64::max) * 1e3,
    );
    println!(
        "installed valve d = {:.2} mm, switching {:.3} s: {:.1} g (motor {:.1}, gearbox {:.1}, body {:.1})",
        bore * 1e3,
        cycle,
        exact.masses.total * 1e3,
        exact.masses.motor * 1e3,
        exact.masses.gearbox * 1e3,
        exact.masses.body * 1e3
    );
    println!(
        "nearest cell d = {:.2} mm, {:.3} s: {:.1} g",
        near.bore_diameter * 1e3,
        near.cycle_time,
        near.masses.total * 1e3
    );
    if map.cells.iter().any(|c| c.extrapolated) {
        println!("note: part of the grid lies outside the bore range of the fits");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn check(cfg: &Config) {
    let d = derived_constants(&cfg.params);
    println!("T1 = {:.2} 1/m", d.t1);
    println!("T2 = {:.1} 1/m", d.t2);
    for mode in [ActuatorMode::HighSpeed, ActuatorMode::HighForce] {
        let m = d.mode(mode);
        println!(
            "{}: m_A = {:.2} kg, F_max = {:.1} N, v_max = {:.4} m/s",
            mode.label(),
            m.reflected_mass,
            m.max_force,
            m.max_speed
        );
    }
    println!(
        "valve switching time = {:.3} s",
        cfg.params.valve.commutation_time()
    );
    let warnings = cfg.warnings();
    if warnings.is_empty() {
        println!("no warnings");
    }
    for w in warnings {
        println!("warning: {w}");
    }
}
