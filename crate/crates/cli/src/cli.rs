//! Command-line surface. Every command opens the same [`Engine`] the HTTP
//! service uses, writes its artifacts under `--out`, and prints a summary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use histrel_core::eda::{network_export, NetworkMode};
use histrel_core::expansion::merge_tables;
use histrel_core::learn::evaluate_grid;
use histrel_core::{Engine, EntityId, Error, FeatureSpec, ModelChoice, ModelKind, Result, RunConfig, Unit};

#[derive(Debug, Parser)]
#[command(name = "histrel", version, about = "Relation discovery between art historians and their collections")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dump manifest; overrides the config file.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Historian,
    Collection,
}

impl From<UnitArg> for Unit {
    fn from(u: UnitArg) -> Unit {
        match u {
            UnitArg::Historian => Unit::HistorianPair,
            UnitArg::Collection => Unit::CollectionPair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Store,
    Datasets,
    Report,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dump, then write a store snapshot.
    Ingest,
    /// Write the candidate pair tables.
    Expand,
    /// Exploratory statistics and network exports.
    Eda,
    /// Fit one model on every labeled row.
    Train {
        #[arg(long)]
        spec: String,
        /// lr, nb, dt or auto.
        #[arg(long, default_value = "auto")]
        model: String,
        #[arg(long, value_enum, default_value = "historian")]
        unit: UnitArg,
    },
    /// Cross-validate the model grid, or a single spec.
    Evaluate {
        #[arg(long, conflicts_with = "spec")]
        grid: bool,
        #[arg(long)]
        spec: Option<String>,
        /// Restrict to one unit; both by default.
        #[arg(long, value_enum)]
        unit: Option<UnitArg>,
    },
    /// Ranked recommendations for one entity.
    Recommend {
        #[arg(long)]
        entity: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    Export {
        #[arg(long, value_enum)]
        what: ExportWhat,
    },
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::read(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            config.manifest = Some(m.clone());
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        if let Some(s) = self.seed {
            config = config.with_seed(s);
        }
        Ok(config)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let body = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn units(unit: Option<UnitArg>) -> Vec<Unit> {
    match unit {
        Some(u) => vec![u.into()],
        None => vec![Unit::HistorianPair, Unit::CollectionPair],
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.run_config()?;
    let out = config.out_dir.clone();
    if let Command::Serve { port, host } = &cli.command {
        return crate::server::serve(config, host, *port);
    }
    let engine = Engine::open(config)?;
    match cli.command {
        Command::Ingest => {
            let manifest = engine.export_store(&out.join("store"))?;
            println!("{}", serde_json::to_string_pretty(&engine.summary()).unwrap_or_default());
            println!("wrote {}", manifest.display());
        }
        Command::Expand => {
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let merged = merge_tables(engine.topics(), engine.institutions())?;
            for (name, d) in [("topics", engine.topics()), ("institutions", engine.institutions()), ("merged", &merged)] {
                let path = out.join(format!("{name}.csv"));
                d.export_csv(&path)?;
                println!("{name}: {} rows, {} pairs -> {}", d.len(), d.unique_pairs().len(), path.display());
            }
        }
        Command::Eda => {
            let report = engine.eda_report()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let txt = out.join("eda.txt");
            std::fs::write(&txt, report.render()).map_err(|e| Error::io(&txt, e))?;
            write_json(&out.join("eda.json"), &report)?;
            for (name, data, mode) in [
                ("topics", engine.topics(), NetworkMode::Topics),
                ("institutions", engine.institutions(), NetworkMode::Institutions),
            ] {
                write_json(&out.join(format!("network_{name}.json")), &network_export(engine.store(), data, mode)?)?;
            }
            print!("{}", report.render());
            println!("wrote {}", txt.display());
        }
        Command::Train { spec, model, unit } => {
            let spec = FeatureSpec::parse(&spec)?;
            let choice: ModelChoice = model.parse()?;
            let unit: Unit = unit.into();
            let outcome = engine.train(unit, &spec, choice)?;
            let path = out.join("models").join(format!(
                "{}_{}_{}.json",
                unit.as_str(),
                spec.name().replace('+', "_"),
                outcome.model.kind
            ));
            write_json(&path, &outcome)?;
            println!("trained {} on {} ({} rows)", outcome.model.kind, spec, outcome.rows);
            if let Some(m) = outcome.cv {
                println!("cv p {:.3} p1 {:.3} r1 {:.3} a {:.3}", m.p, m.p1, m.r1, m.a);
            }
            println!("wrote {}", path.display());
        }
        Command::Evaluate { grid, spec, unit } => {
            for u in units(unit) {
                let (g, dir) = match (&spec, grid) {
                    (Some(name), _) => {
                        let s = FeatureSpec::parse(name)?;
                        let data = engine.labeled(u, &s)?;
                        let g = evaluate_grid(u, std::slice::from_ref(&data), &ModelKind::ALL, &engine.config().learn);
                        (g, out.join(format!("eval_{}_{}", u.as_str(), s.name().replace('+', "_"))))
                    }
                    (None, true) => (engine.grid(u)?, out.join(format!("grid_{}", u.as_str()))),
                    (None, false) => return Err(Error::Parameter("evaluate needs --grid or --spec".into())),
                };
                print!("{}", g.render());
                g.write_report(&dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Recommend { entity, limit } => {
            let id = EntityId::new(&entity)?;
            let recs = engine.recommend(&id, limit)?;
            let path = out.join(format!("recommendations_{id}.json"));
            write_json(&path, &recs)?;
            for r in &recs {
                let known = if r.known { "known" } else { "unknown" };
                println!("{:.3}\t{}\t{}\t{known}", r.score, r.pair, r.predicate.as_str());
            }
            println!("wrote {}", path.display());
        }
        Command::Export { what } => {
            let paths = match what {
                ExportWhat::Store => vec![engine.export_store(&out.join("store"))?],
                ExportWhat::Datasets => engine.export_datasets(&out.join("datasets"))?,
                ExportWhat::Report => engine.export_report(&out.join("report"))?,
            };
            print_paths(&paths);
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}
