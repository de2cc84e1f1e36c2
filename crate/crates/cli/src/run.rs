use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use asa_core::controller::{AssetBundle, Mode, OperatingPoint};
use asa_core::error::{Error, Result};
use asa_core::eval::{
    delta_logit_experiment, fnv1a, report_paths, run_ablations, run_sweep, save_summary_csv, score_generation_log,
    write_generation_log, write_json, write_samples_csv, EvalReport, GenerationRecord, Harness, RunSpec, SweepGrid,
    DEFAULT_ALPHAS, DEFAULT_TAUS,
};
use asa_core::parser::ToolSchema;
use asa_core::pipeline::{run_pipeline, train_bundle, PipelineConfig};
use asa_core::probe::{layer_sweep, TrainConfig};
use asa_core::scalar::{lift, norm};
use asa_core::steering::{build_vector, Scope, VectorSet, GLOBAL};
use asa_core::store::{load_records, write_records, Dataset, MultiLayerDump, Purpose, Split};
use asa_core::synth::{build_world, World, WorldConfig};
use asa_core::wire::{serve_stream, serve_tcp, Responder, ServeConfig};
use asa_core::Bundle;
use serde::Serialize;

use crate::{Cli, Command, Global, WorldArgs};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn world(args: &WorldArgs, seed: u64) -> Result<World> {
    let mut cfg = match &args.world {
        Some(p) => WorldConfig::load(p)?,
        None => WorldConfig::default(),
    };
    cfg.seed = seed;
    build_world(&cfg)
}

fn schema(g: &Global) -> Result<ToolSchema> {
    g.schema.as_ref().map_or_else(|| Ok(ToolSchema::default()), ToolSchema::load)
}

fn bundle_path(g: &Global) -> Result<&Path> {
    g.bundle.as_deref().ok_or_else(|| Error::InvalidParameter("--bundle is required".into()))
}

fn load_bundle(g: &Global) -> Result<Bundle> {
    Bundle::load(bundle_path(g)?)
}

/// JSON to `--report-out` (CSV alongside when one is provided) or stdout.
fn emit<T: Serialize>(g: &Global, value: &T) -> Result<()> {
    emit_with_csv(g, value, |_| Ok(()))
}

fn emit_with_csv<T: Serialize>(g: &Global, value: &T, csv: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    match &g.report_out {
        Some(out) => {
            let (json, csv_path) = report_paths(out);
            if let Some(dir) = json.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            write_json(&json, value)?;
            csv(&csv_path)?;
            eprintln!("wrote {}", json.display());
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)?;
            writeln!(lock).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn reports_csv<'a>(reports: Vec<&'a EvalReport>) -> impl Fn(&Path) -> Result<()> + 'a {
    move |p: &Path| save_summary_csv(p, &reports)
}

/// Shortest decimal that round-trips the stored f32, so 0.7 reports as 0.7.
fn widen(x: f32) -> f64 {
    x.to_string().parse().unwrap_or(f64::from(x))
}

fn operating_point(bundle: &Bundle, alpha: Option<f64>, tau: Option<f64>) -> (f64, f64) {
    (alpha.unwrap_or_else(|| widen(bundle.alpha)), tau.unwrap_or_else(|| widen(bundle.tau)))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { world: w, n_per_cell, splits, all_layers, out, generations } => {
            let world = world(&w, g.seed)?;
            let props: [f64; 4] = splits
                .try_into()
                .map_err(|_| Error::InvalidParameter("--splits needs four proportions".into()))?;
            let records = if all_layers {
                world.sample_layer_dump(n_per_cell, props)?.layers().flat_map(|(_, d)| d.records().to_vec()).collect()
            } else {
                world.sample_records(n_per_cell, props)?.into_records()
            };
            let file = File::create(&out).map_err(io_err(&out))?;
            let mut w = BufWriter::new(file);
            write_records(&mut w, &records).map_err(io_err(&out))?;
            w.flush().map_err(io_err(&out))?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            if let Some(path) = generations {
                let log = records
                    .iter()
                    .filter(|r| r.layer == world.config.layer)
                    .map(|r| {
                        Ok(GenerationRecord {
                            id: r.id.clone(),
                            domain: r.domain.clone(),
                            label: r.label,
                            reference_tool: r.reference_tool.clone(),
                            text: world.oracle.generate_text(&lift::<f64>(&r.hidden), &r.domain, fnv1a(&r.id))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_generation_log(&path, &log)?;
                eprintln!("wrote {} generations to {}", log.len(), path.display());
            }
            Ok(())
        }
        Command::Run { config } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
                    serde_json::from_str::<PipelineConfig>(&text)?
                }
                None => PipelineConfig::default(),
            };
            cfg.seed = g.seed;
            cfg.world.seed = g.seed;
            let report = run_pipeline::<f32>(&cfg)?;
            let mut reports = vec![&report.ablation.baseline];
            reports.extend(&report.ablation.modes);
            emit_with_csv(g, &report, reports_csv(reports))
        }
        Command::BuildVectors { data, out } => {
            let ds = load_records(&data, None)?;
            let cal = ds.split(Split::Cal);
            let mut vectors = vec![build_vector::<f64>(&cal, &Scope::Global)?];
            for d in ds.domains() {
                vectors.push(build_vector::<f64>(&cal, &Scope::Domain(d))?);
            }
            let layer = ds.records().first().map_or(0, |r| r.layer);
            let set = VectorSet::from_vectors(layer, &vectors);
            set.save(&out)?;
            let summary: Vec<_> = vectors
                .iter()
                .map(|v| serde_json::json!({"name": v.name, "raw_norm": norm(&v.raw), "source_counts": v.source_counts}))
                .collect();
            emit(g, &summary)
        }
        Command::Train { data, vectors, beta, alpha, tau, precision } => {
            let ds = load_records(&data, None)?;
            let mut bundle = train_bundle::<f32>(&ds, beta, &TrainConfig::default())?.bundle;
            if let Some(p) = vectors {
                apply_vectors(&mut bundle, &VectorSet::load(&p)?)?;
            }
            bundle.alpha = alpha as f32;
            bundle.tau = tau as f32;
            let bundle = bundle.with_precision(precision);
            let path = bundle_path(g)?;
            bundle.save(path)?;
            eprintln!("wrote bundle to {}", path.display());
            Ok(())
        }
        Command::SweepLayers { data } => {
            let dump = MultiLayerDump::load(&data)?;
            let result = layer_sweep::<f32>(&dump, &TrainConfig::default())?;
            emit_with_csv(g, &result, |p: &Path| result.write_csv(File::create(p).map_err(io_err(p))?))
        }
        Command::Tune { world: w, data, alphas, taus, modes, out } => {
            let world = world(&w, g.seed)?;
            let (ds, mut bundle, schema) = (load_data(&data)?, load_bundle(g)?, schema(g)?);
            let grid = SweepGrid {
                alphas: alphas.unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()),
                taus: taus.unwrap_or_else(|| DEFAULT_TAUS.to_vec()),
                modes,
            };
            let result = {
                let h = Harness::new(&bundle, &world.oracle, &schema, g.seed);
                run_sweep(&grid, &h, &ds.split(Split::Val), &ds.split(Split::Test))?
            };
            if let Some(out) = out {
                bundle.alpha = result.selected.alpha as f32;
                bundle.tau = result.selected.tau as f32;
                bundle.save(&out)?;
                eprintln!("wrote tuned bundle to {}", out.display());
            }
            let reports = vec![&result.val_baseline, &result.test_baseline, &result.test];
            emit_with_csv(g, &result, reports_csv(reports))
        }
        Command::Eval { world: w, data, mode, alpha, tau, generations } => {
            let schema = schema(g)?;
            if let Some(path) = generations {
                let log = asa_core::eval::read_generation_log(&path)?;
                let report = score_generation_log(&log, &schema, "generations")?;
                return emit_with_csv(g, &report, samples_and_summary(&report));
            }
            let data = data.expect("clap enforces --data without --generations");
            let world = world(&w, g.seed)?;
            let (ds, bundle) = (load_data(&data)?, load_bundle(g)?);
            let (alpha, tau) = operating_point(&bundle, alpha, tau);
            let h = Harness::new(&bundle, &world.oracle, &schema, g.seed);
            let test = ds.split(Split::Test);
            let baseline = h.evaluate(&test, RunSpec::Baseline, Purpose::Reporting)?;
            let report = h
                .evaluate(&test, RunSpec::Steered { mode, alpha, tau }, Purpose::Reporting)?
                .with_deltas(&baseline);
            let both = serde_json::json!({"baseline": baseline, "steered": report});
            emit_with_csv(g, &both, reports_csv(vec![&baseline, &report]))
        }
        Command::Ablate { world: w, data, modes, alpha, tau } => {
            let world = world(&w, g.seed)?;
            let (ds, bundle, schema) = (load_data(&data)?, load_bundle(g)?, schema(g)?);
            let (alpha, tau) = operating_point(&bundle, alpha, tau);
            let modes = modes.unwrap_or_else(|| Mode::ALL.to_vec());
            let h = Harness::new(&bundle, &world.oracle, &schema, g.seed);
            let result = run_ablations(&modes, alpha, tau, &h, &ds.split(Split::Test))?;
            let mut reports = vec![&result.baseline];
            reports.extend(&result.modes);
            emit_with_csv(g, &result, reports_csv(reports))
        }
        Command::DiagnoseDeltaLogit { world: w, data, alphas, n, direction } => {
            let world = world(&w, g.seed)?;
            let (ds, bundle) = (load_data(&data)?, load_bundle(g)?);
            let v = if direction == GLOBAL {
                bundle.v_global.clone()
            } else {
                bundle.v_domain.get(&direction).cloned().ok_or(Error::UnknownDomain(direction))?
            };
            let test = ds.split(Split::Test);
            let step = (test.len() / n.max(1)).max(1);
            let states: Vec<Vec<f32>> = test.iter().step_by(step).take(n).map(|r| r.hidden.clone()).collect();
            let table = delta_logit_experiment(&world.oracle, &states, &v, &alphas, g.seed)?;
            emit(g, &table)
        }
        Command::Serve { listen, stdio, mode, alpha, tau } => {
            let bundle = load_bundle(g)?;
            let operating_point = alpha.zip(tau).map(|(alpha, tau)| OperatingPoint { alpha, tau });
            let responder = Responder::new(bundle, ServeConfig { mode, operating_point, seed: g.seed })?;
            if stdio {
                let stdin = std::io::stdin();
                serve_stream(&responder, BufReader::new(stdin.lock()), std::io::stdout().lock())?;
                return write_results(g, &responder);
            }
            let addr = listen.unwrap_or_else(|| "127.0.0.1:7878".into());
            let listener = TcpListener::bind(&addr).map_err(io_err(Path::new(&addr)))?;
            eprintln!("serving {} on {}", asa_core::wire::PROTOCOL, listener.local_addr().map_err(io_err(Path::new(&addr)))?);
            serve_tcp(Arc::new(responder), listener)
        }
        Command::Export { out, precision } => {
            let bundle = load_bundle(g)?.with_precision(precision);
            bundle.save(&out)?;
            let bytes = std::fs::metadata(&out).map_err(io_err(&out))?.len();
            eprintln!("wrote {} ({} bytes, {})", out.display(), bytes, precision.as_str());
            Ok(())
        }
        Command::Import { input, precision } => {
            let bundle = Bundle::load(&input)?.with_precision(precision);
            let path = bundle_path(g)?;
            bundle.save(path)?;
            eprintln!("imported {} into {}", input.display(), path.display());
            Ok(())
        }
    }
}

fn load_data(path: &PathBuf) -> Result<Dataset> {
    load_records(path, None)
}

fn samples_and_summary(report: &EvalReport) -> impl Fn(&Path) -> Result<()> + '_ {
    move |p: &Path| {
        save_summary_csv(p, &[report])?;
        let samples = p.with_extension("samples.csv");
        write_samples_csv(File::create(&samples).map_err(io_err(&samples))?, report)
    }
}

fn write_results(g: &Global, responder: &Responder<f32>) -> Result<()> {
    let results = responder.take_results();
    match &g.report_out {
        Some(_) => emit(g, &results),
        None => Ok(()),
    }
}

/// Replaces the bundle's directions with externally estimated ones.
fn apply_vectors(bundle: &mut AssetBundle<f32>, set: &VectorSet) -> Result<()> {
    let get = |name: &str| -> Result<Vec<f32>> {
        let v = set.get(name).ok_or_else(|| Error::InvalidParameter(format!("vector set lacks {name:?}")))?;
        if v.unit.len() != bundle.dim {
            return Err(Error::dim(bundle.dim, v.unit.len(), format!("vector {name:?}")));
        }
        Ok(v.unit.iter().map(|&x| x as f32).collect())
    };
    bundle.v_global = get(GLOBAL)?;
    for d in bundle.domain_order.clone() {
        let v = get(&d)?;
        bundle.v_domain.insert(d, v);
    }
    bundle.validate()
}
