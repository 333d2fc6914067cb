//! Command-line front end: file-based access to parsing, state-space
//! construction, reduction, integration and simulation.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad network, unbounded
//! state space, solver failure), 2 on a usage error.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io;
use crate::network::{parse_network, ReactionNetwork};
use crate::reduction::{lift_distribution, reduce_network, reduced_moments};
use crate::statespace::{explore_with, ExploreOptions};
use crate::{dynamics, ssa};

#[derive(Parser)]
#[command(name = "slowscale", version, about = "Master-equation generators, slow-scale reduction and stochastic simulation for fast/slow reaction networks")]
pub struct Cli {
    /// Cap the rayon worker count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Print structural information: ranks, deficiency, conservation laws.
    Netinfo {
        file: PathBuf,
    },
    /// Enumerate accessible states and emit the generator.
    States {
        file: PathBuf,
        /// Write the full generator K in Matrix Market format.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the state table as CSV.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Write the fast part K^f in Matrix Market format.
        #[arg(long)]
        fast_out: Option<PathBuf>,
        /// Write the slow part K^s in Matrix Market format.
        #[arg(long)]
        slow_out: Option<PathBuf>,
        /// Hard limit on the number of states.
        #[arg(long, default_value_t = 5_000_000)]
        max_states: usize,
        /// Treat any transition leaving the cap box as an error.
        #[arg(long)]
        strict_caps: bool,
    },
    /// Classify the fast graph: components, strong components, simplexes.
    Structure {
        file: PathBuf,
        /// Write the fast-graph condensation in DOT format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Build the reduced slow-scale generator K~ = L K^s Pi.
    Reduce {
        file: PathBuf,
        /// Write K~ in Matrix Market format (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the aggregated-state table as CSV (default: stdout).
        #[arg(long)]
        agg_out: Option<PathBuf>,
        /// Also write L and Pi as <PREFIX>.l.mtx and <PREFIX>.pi.mtx.
        #[arg(long, value_name = "PREFIX")]
        full_operators: Option<PathBuf>,
    },
    /// Integrate the master equation and print species moments over time.
    Solve(SolveArgs),
    /// Integrate both the full and the reduced equation and report errors.
    Compare {
        file: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        steps: usize,
        /// Write the error report CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stochastic simulation ensembles (exact or slow-scale).
    Ssa(SsaArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub t_end: f64,
    #[arg(long)]
    pub steps: usize,
    /// Integrate the reduced equation instead of the full one.
    #[arg(long)]
    pub reduced: bool,
    /// Initial distribution: point mass on the init state, or uniform.
    #[arg(long, value_enum, default_value_t = P0::State)]
    pub p0: P0,
    /// Dense matrix-exponential path (small systems only).
    #[arg(long)]
    pub dense: bool,
    /// Write the moment CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write distribution snapshots (long-form CSV).
    #[arg(long)]
    pub dist_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SsaArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub t_end: f64,
    /// Number of realizations.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Simulate the reduced chain instead of the full network.
    #[arg(long)]
    pub slow_scale: bool,
    /// With --slow-scale: compute simplex rates lazily instead of building
    /// the full state space.
    #[arg(long, requires = "slow_scale")]
    pub on_the_fly: bool,
    /// Number of grid points for the statistics.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Write the ensemble CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dump raw jump sequences as CSV (realization,time,state_index).
    #[arg(long)]
    pub paths_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum P0 {
    State,
    Uniform,
}

/// Parse arguments, dispatch, and map errors onto exit codes.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(file: &PathBuf) -> Result<ReactionNetwork> {
    let text = fs::read_to_string(file)?;
    let net = parse_network(&text)?;
    for w in &net.warnings {
        eprintln!("warning: {w}");
    }
    Ok(net)
}

fn emit(target: &Option<PathBuf>, content: &str) -> Result<()> {
    match target {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn grid(t_end: f64, steps: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || steps == 0 {
        return Err(Error::Invalid("t_end and steps must be positive".into()));
    }
    Ok((1..=steps).map(|i| t_end * i as f64 / steps as f64).collect())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Netinfo { file } => netinfo(&file),
        Command::States {
            file,
            out,
            states,
            fast_out,
            slow_out,
            max_states,
            strict_caps,
        } => {
            let net = load(&file)?;
            let opts = ExploreOptions {
                max_states,
                strict_caps,
            };
            let ex = explore_with(&net, &opts)?;
            println!("states: {}", ex.space.len());
            println!("transitions: {}", ex.split.full.nnz());
            println!(
                "truncated_transitions: {} (total rate {})",
                ex.truncated_transitions, ex.truncated_rate
            );
            if let Some(p) = &out {
                fs::write(p, io::generator_matrix_market(&ex.split.full))?;
            }
            if let Some(p) = &fast_out {
                fs::write(p, io::generator_matrix_market(&ex.split.fast))?;
            }
            if let Some(p) = &slow_out {
                fs::write(p, io::generator_matrix_market(&ex.split.slow))?;
            }
            if let Some(p) = &states {
                fs::write(p, io::states_csv(&net, &ex.space))?;
            }
            Ok(())
        }
        Command::Structure { file, dot } => {
            let net = load(&file)?;
            let red = reduce_network(&net)?;
            print!("{}", io::structure_csv(&red.structure, &red.simplexes));
            if let Some(p) = &dot {
                fs::write(p, io::condensation_dot(&red.structure, &red.split.fast))?;
            }
            Ok(())
        }
        Command::Reduce {
            file,
            out,
            agg_out,
            full_operators,
        } => {
            let net = load(&file)?;
            let red = reduce_network(&net)?;
            emit(&out, &io::generator_matrix_market(&red.reduced.generator))?;
            emit(&agg_out, &io::aggregated_csv(&red.reduced, &red.space))?;
            if let Some(prefix) = &full_operators {
                let mut l_path = prefix.as_os_str().to_owned();
                l_path.push(".l.mtx");
                let mut pi_path = prefix.as_os_str().to_owned();
                pi_path.push(".pi.mtx");
                fs::write(l_path, io::dense_matrix_market(&red.pair.l))?;
                fs::write(pi_path, io::dense_matrix_market(&red.pair.pi))?;
            }
            Ok(())
        }
        Command::Solve(args) => solve(args),
        Command::Compare {
            file,
            t_end,
            steps,
            out,
        } => {
            let net = load(&file)?;
            let red = reduce_network(&net)?;
            let times = grid(t_end, steps)?;
            let mut p0 = vec![0.0; red.space.len()];
            p0[0] = 1.0;
            let full = dynamics::integrate(&red.split.full, &p0, &times)?;
            let p0_red: Vec<f64> = (0..red.pair.aggregated_count())
                .map(|a| {
                    (0..red.space.len())
                        .map(|s| red.pair.l[(a, s)] * p0[s])
                        .sum()
                })
                .collect();
            let reduced = dynamics::integrate(&red.reduced.generator, &p0_red, &times)?;
            let report = dynamics::compare_full_reduced(&full, &red.pair, &red.space, &reduced)?;
            emit(&out, &io::compare_csv(&times, &report.aggregated_linf))?;
            eprintln!("sup |L p - p~|_inf = {}", report.sup_aggregated);
            for (k, err) in report.per_species.iter().enumerate() {
                eprintln!(
                    "species {}: sup |mean diff| = {}, sup |var diff| = {}",
                    net.species[k].name, err.mean, err.variance
                );
            }
            Ok(())
        }
        Command::Ssa(args) => run_ssa(args),
    }
}

fn netinfo(file: &PathBuf) -> Result<()> {
    let net = load(file)?;
    let s = crate::network::structure(&net);
    println!("m: {}", net.species_count());
    println!("r: {}", net.reaction_count());
    println!("p: {}", net.complex_count());
    println!("rank_E: {}", crate::linalg::rank(&s.incidence));
    println!("rank_nuE: {}", crate::linalg::rank(&s.nu_e));
    println!("deficiency: {}", crate::network::deficiency(&net));
    let conservation = crate::network::conservation_basis(&s.nu_e);
    if conservation.is_empty() {
        println!("conservation: none");
    }
    for row in &conservation {
        println!(
            "conservation: {}",
            row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
        );
    }
    match crate::network::fast_invariant_matrix(&net) {
        Ok(af) => {
            for row in &af {
                println!(
                    "fast_invariant: {}",
                    row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
                );
            }
        }
        Err(Error::NoFastSubsystem) => println!("fast_invariant: none"),
        Err(e) => return Err(e),
    }
    println!("bounded: {}", crate::network::provably_bounded(&net));
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let net = load(&args.file)?;
    let times = grid(args.t_end, args.steps)?;
    let names: Vec<&str> = net.species.iter().map(|s| s.name.as_str()).collect();
    if args.reduced {
        let red = reduce_network(&net)?;
        let p0_full = initial_distribution(args.p0, red.space.len());
        let p0: Vec<f64> = (0..red.pair.aggregated_count())
            .map(|a| {
                (0..red.space.len())
                    .map(|s| red.pair.l[(a, s)] * p0_full[s])
                    .sum()
            })
            .collect();
        let opts = dynamics::IntegrateOptions {
            dense: args.dense,
            ..Default::default()
        };
        let traj = dynamics::integrate_with(&red.reduced.generator, &p0, &times, &opts)?;
        let moments: Vec<Vec<(f64, f64)>> = traj
            .distributions
            .iter()
            .map(|pt| reduced_moments(&red.pair, &red.space, pt))
            .collect::<Result<_>>()?;
        emit(&args.out, &io::moments_csv(&names, &times, &moments))?;
        if let Some(p) = &args.dist_out {
            // Snapshots of the lifted distribution.
            let lifted: Vec<Vec<f64>> = traj
                .distributions
                .iter()
                .map(|pt| lift_distribution(&red.pair, pt))
                .collect::<Result<_>>()?;
            fs::write(p, io::distribution_csv(&times, &lifted))?;
        }
    } else {
        let ex = explore_with(&net, &ExploreOptions::default())?;
        let p0 = initial_distribution(args.p0, ex.space.len());
        let opts = dynamics::IntegrateOptions {
            dense: args.dense,
            ..Default::default()
        };
        let traj = dynamics::integrate_with(&ex.split.full, &p0, &times, &opts)?;
        let moments: Vec<Vec<(f64, f64)>> = traj
            .distributions
            .iter()
            .map(|pt| {
                (0..net.species_count())
                    .map(|k| {
                        let mean: f64 = pt
                            .iter()
                            .zip(&ex.space.states)
                            .map(|(&p, s)| p * s[k] as f64)
                            .sum();
                        let second: f64 = pt
                            .iter()
                            .zip(&ex.space.states)
                            .map(|(&p, s)| p * (s[k] as f64).powi(2))
                            .sum();
                        (mean, (second - mean * mean).max(0.0))
                    })
                    .collect()
            })
            .collect();
        emit(&args.out, &io::moments_csv(&names, &times, &moments))?;
        if let Some(p) = &args.dist_out {
            fs::write(p, io::distribution_csv(&times, &traj.distributions))?;
        }
    }
    Ok(())
}

fn initial_distribution(p0: P0, dim: usize) -> Vec<f64> {
    match p0 {
        P0::State => {
            let mut p = vec![0.0; dim];
            p[0] = 1.0;
            p
        }
        P0::Uniform => vec![1.0 / dim as f64; dim],
    }
}

fn run_ssa(args: SsaArgs) -> Result<()> {
    let net = load(&args.file)?;
    let times = grid(args.t_end, args.grid)?;
    let names: Vec<&str> = net.species.iter().map(|s| s.name.as_str()).collect();
    if args.slow_scale && args.on_the_fly {
        if args.paths_out.is_some() {
            return Err(Error::Invalid(
                "--paths-out is not available with --on-the-fly".into(),
            ));
        }
        let stats = ssa::ensemble_slow_otf(&net, &net.initial_state, &times, args.n, args.seed)?;
        emit(&args.out, &io::ensemble_csv(&names, &stats))?;
    } else if args.slow_scale {
        let red = reduce_network(&net)?;
        let init_state = red
            .space
            .index_of(&net.initial_state)
            .expect("initial state is in the space");
        let scc = red.structure.scc_of_state[init_state];
        let init_agg = red
            .pair
            .aggregated
            .iter()
            .find(|a| a.scc_id == scc)
            .ok_or_else(|| {
                Error::Invalid(
                    "initial state lies outside every absorbing component; \
                     pick an initial state inside a fast simplex"
                        .into(),
                )
            })?
            .index;
        let stats = ssa::ensemble_slow(
            &red.reduced,
            &red.space,
            init_agg,
            &times,
            args.n,
            args.seed,
        )?;
        emit(&args.out, &io::ensemble_csv(&names, &stats))?;
        if let Some(p) = &args.paths_out {
            let mut csv = String::from("realization,time,state_index\n");
            for r in 0..args.n {
                let path = ssa::ssa_slow(
                    &red.reduced,
                    init_agg,
                    args.t_end,
                    args.seed.wrapping_add(r as u64),
                )?;
                for (t, s) in path.jump_times.iter().zip(&path.states) {
                    csv.push_str(&format!("{r},{t},{s}\n"));
                }
            }
            fs::write(p, csv)?;
        }
    } else {
        let stats = ssa::ensemble_exact(&net, &net.initial_state, &times, args.n, args.seed)?;
        emit(&args.out, &io::ensemble_csv(&names, &stats))?;
        if let Some(p) = &args.paths_out {
            // State indices refer to the breadth-first state table
            // (`states --states`).
            let ex = explore_with(&net, &ExploreOptions::default())?;
            let mut csv = String::from("realization,time,state_index\n");
            for r in 0..args.n {
                let path = ssa::ssa_exact(
                    &net,
                    &net.initial_state,
                    args.t_end,
                    args.seed.wrapping_add(r as u64),
                )?;
                for (t, s) in path.jump_times.iter().zip(&path.states) {
                    let idx = ex
                        .space
                        .index_of(s)
                        .map(|i| i.to_string())
                        .unwrap_or_else(|| "?".into());
                    csv.push_str(&format!("{r},{t},{idx}\n"));
                }
            }
            fs::write(p, csv)?;
        }
    }
    Ok(())
}
