use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bcube::bandwidth::{min_max_ibw, CapacityView, RoutingMode};
use bcube::config::ExperimentConfig;
use bcube::error::{Error, Result};
use bcube::montecarlo::{half_lives_for_variant, read_agg_csv, run_experiment, write_agg_csv, write_rows_csv, Metric};
use bcube::structure::PairClass;
use bcube::topology::{Topology, TopologyParams, Variant};
use bcube::verify::{verify, VerifyGrid};

#[derive(Parser)]
#[command(name = "bcube", version, about = "BCube topology builder, bandwidth analysis and resilience simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a topology and write it as JSON or an edge list.
    Build {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check link counts, hop lengths and min-max IBW over a parameter grid.
    Verify {
        /// Comma-separated variants or `all`.
        #[arg(long, default_value = "all")]
        variants: String,
        #[arg(long = "kS", alias = "k-s", value_delimiter = ',', default_values_t = [2u32])]
        k_s: Vec<u32>,
        #[arg(long = "k1G", alias = "k-1g", value_delimiter = ',', default_values_t = [4u32])]
        k_1g: Vec<u32>,
        #[arg(long = "k10G", alias = "k-10g", value_delimiter = ',', default_values_t = [4u32])]
        k_10g: Vec<u32>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Minimum over all pairs of a class of the pair's IBW.
    Ibw {
        #[command(flatten)]
        params: OptParamArgs,
        /// Topology JSON written by `build`, instead of parameter flags.
        #[arg(long, conflicts_with = "variant")]
        topology: Option<PathBuf>,
        #[arg(long, default_value = "srv-srv")]
        class: PairClass,
        #[arg(long, default_value = "multi-path")]
        mode: RoutingMode,
    },
    /// Run a Monte-Carlo experiment described by a config file.
    Simulate {
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, env = "BCUBE_WORKERS")]
        workers: Option<usize>,
    },
    /// Time for a metric's mean to fall to half its initial value.
    Halflife {
        /// Path to an agg.csv.
        #[arg(long)]
        agg: PathBuf,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        variant: Variant,
        /// Restrict to one congestion level.
        #[arg(long)]
        gamma: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Edges,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    variant: Variant,
    #[arg(long = "kS", alias = "k-s")]
    k_s: u32,
    #[arg(long = "k1G", alias = "k-1g")]
    k_1g: u32,
    #[arg(long = "k10G", alias = "k-10g", default_value_t = 0)]
    k_10g: u32,
    /// Hybrid horizontal ports; defaults to an even split of k10G.
    #[arg(long = "k10GH", alias = "k-10g-h")]
    k_10g_h: Option<u32>,
    #[arg(long = "k10GV", alias = "k-10g-v")]
    k_10g_v: Option<u32>,
}

#[derive(Args)]
struct OptParamArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long = "kS", alias = "k-s", requires = "variant")]
    k_s: Option<u32>,
    #[arg(long = "k1G", alias = "k-1g", requires = "variant")]
    k_1g: Option<u32>,
    #[arg(long = "k10G", alias = "k-10g", default_value_t = 0)]
    k_10g: u32,
    #[arg(long = "k10GH", alias = "k-10g-h")]
    k_10g_h: Option<u32>,
    #[arg(long = "k10GV", alias = "k-10g-v")]
    k_10g_v: Option<u32>,
}

fn params_from(variant: Variant, k_s: u32, k_1g: u32, k_10g: u32, h: Option<u32>, v: Option<u32>) -> TopologyParams {
    let base = TopologyParams::classic(k_s, k_1g);
    match (variant, h, v) {
        (Variant::Hybrid, Some(h), Some(v)) => TopologyParams::hybrid(k_s, k_1g, h, v),
        (Variant::Hybrid, Some(h), None) => TopologyParams::hybrid(k_s, k_1g, h, k_10g.saturating_sub(h)),
        (Variant::Hybrid, None, Some(v)) => TopologyParams::hybrid(k_s, k_1g, k_10g.saturating_sub(v), v),
        _ => base.with_variant(variant, k_10g),
    }
}

impl ParamArgs {
    fn params(&self) -> TopologyParams {
        params_from(self.variant, self.k_s, self.k_1g, self.k_10g, self.k_10g_h, self.k_10g_v)
    }
}

enum Failure {
    Usage(Error),
    Verification,
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Build { params, format, output } => {
            let topo = Topology::build(&params.params())?;
            let text = match format {
                Format::Json => topo.to_json()? + "\n",
                Format::Edges => topo.to_edge_list(),
            };
            emit(output.as_ref(), &text)?;
        }
        Command::Verify {
            variants,
            k_s,
            k_1g,
            k_10g,
            json,
        } => {
            let grid = VerifyGrid {
                variants: parse_variants(&variants)?,
                k_s,
                k_1g,
                k_10g,
            };
            let report = verify(&grid);
            let text = if json { report.to_json()? + "\n" } else { report.to_text() };
            emit(None, &text)?;
            if report.has_failures() {
                return Err(Failure::Verification);
            }
        }
        Command::Ibw {
            params,
            topology,
            class,
            mode,
        } => {
            let topo = match (topology, params.variant) {
                (Some(path), _) => Topology::from_json(&fs::read_to_string(path)?)?,
                (None, Some(variant)) => {
                    let (Some(k_s), Some(k_1g)) = (params.k_s, params.k_1g) else {
                        return Err(Error::Parse("--kS and --k1G are required with --variant".into()).into());
                    };
                    let p = params_from(variant, k_s, k_1g, params.k_10g, params.k_10g_h, params.k_10g_v);
                    Topology::build(&p)?
                }
                (None, None) => return Err(Error::Parse("either --topology or --variant is required".into()).into()),
            };
            let r = min_max_ibw(&CapacityView::nominal(&topo), class, mode)?;
            let doc = serde_json::json!({
                "params": topo.params(),
                "class": class,
                "mode": mode,
                "value_gbps": r.value_gbps,
                "witness": [r.witness.0.to_string(), r.witness.1.to_string()],
            });
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
        }
        Command::Simulate {
            config,
            output,
            workers,
        } => {
            if !config.is_file() {
                let msg = format!("{}: config file not found", config.display());
                return Err(std::io::Error::new(std::io::ErrorKind::NotFound, msg).into());
            }
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| PathBuf::from(&cfg.output));
            fs::create_dir_all(&dir)?;
            let result = run_experiment(&cfg.plan(), workers)?;
            for s in &result.skipped {
                eprintln!("skipped {}: {}", s.params, s.reason);
            }
            fs::write(dir.join("effective-config.json"), cfg.to_json()? + "\n")?;
            write_rows_csv(&result.rows, fs::File::create(dir.join("rows.csv"))?)?;
            write_agg_csv(&result.aggregates, fs::File::create(dir.join("agg.csv"))?)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), dir.display());
        }
        Command::Halflife {
            agg,
            metric,
            variant,
            gamma,
        } => {
            let aggs = read_agg_csv(fs::File::open(&agg)?)?;
            let mut out = String::new();
            for (p, g, h) in half_lives_for_variant(&aggs, variant, metric) {
                if gamma.is_some_and(|want| want != g) {
                    continue;
                }
                let value = match h {
                    Ok(v) if v.is_infinite() => "inf".to_string(),
                    Ok(v) => v.to_string(),
                    Err(e) => format!("undefined ({e})"),
                };
                out.push_str(&format!("{p} gamma={g} {metric}: {value}\n"));
            }
            if out.is_empty() {
                return Err(Error::Parse(format!("no {metric} series for {variant} in {}", agg.display())).into());
            }
            emit(None, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
