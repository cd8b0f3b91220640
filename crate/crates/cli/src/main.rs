//! Command-line front end: key management, embedding, detection,
//! single-image attacks, benchmark scenario runs, calibration, and report
//! regeneration. Sidecar modes let this binary serve the wire protocol for
//! protocol checks and as a reference implementation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use zbwm::adapter::SurrogateDecoder;
use zbwm::attacks::{DownUpPurifier, ValuemetricOp};
use zbwm::bench::{
    attack_curves, calibrate, envelope, parse_config, read_results_log, run_scenario,
    write_curves_csv, write_results_log, write_summary_json, write_svg, ConfigMap, CorpusSource,
    DetectorSpec, DEFAULT_BIN_RANGE, DEFAULT_BIN_WIDTH,
};
use zbwm::broken_arrows::{
    ba_detect, ba_embed, ba_keygen, ba_optimal_attack, default_attack_margin, BaKey, BaParams,
};
use zbwm::image::{load_image, psnr, save_image};
use zbwm::transforms::quant_tables_for_quality;
use zbwm::{Decibels, Error};

#[derive(Parser)]
#[command(
    name = "zbwm",
    about = "Zero-bit image watermarking toolkit and attack benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a watermarking key record.
    Keygen(KeygenArgs),
    /// Embed a watermark at a fixed PSNR.
    Embed(EmbedArgs),
    /// Detect a watermark and report the p-value.
    Detect(DetectArgs),
    /// Attack a single watermarked image.
    Attack(AttackArgs),
    /// Run a benchmark scenario from a config file.
    Bench(BenchArgs),
    /// Measure empirical false-alarm rates on unwatermarked images.
    Calibrate(CalibrateArgs),
    /// Regenerate curves and summaries from a results log.
    Report(ReportArgs),
    /// Serve the sidecar wire protocol on stdin/stdout.
    Sidecar(SidecarArgs),
    /// Print the JPEG quantization tables at a quality factor.
    JpegTables { quality: u8 },
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    seed: u64,
    /// Subspace dimension M.
    #[arg(long, default_value_t = 128)]
    m: usize,
    /// Embedding coefficient count N_f.
    #[arg(long, default_value_t = 60492)]
    nf: usize,
    /// Cone count N_c.
    #[arg(long, default_value_t = 50)]
    nc: usize,
    /// Output key file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Embedding strength as the target PSNR in dB.
    #[arg(long, default_value_t = 42.0)]
    psnr: f64,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    alpha: f64,
}

#[derive(Args)]
struct AttackArgs {
    /// Key file (the white-box attack and result scoring need it).
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// One of: ba-optimal, jpeg:<q>, gamma:<g>, sharpen:<a>, purify:<n>.
    #[arg(long, default_value = "ba-optimal")]
    attack: String,
    #[arg(long, default_value_t = 1e-6)]
    alpha: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Config file (key = value with [attack.*] sections).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set seed=7 or
    /// --set attack.jpeg.quality=5,50.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Also write an SVG plot per run.
    #[arg(long)]
    svg: bool,
    /// Desk-scale profile: 256x256 images with the reduced coefficient
    /// count.
    #[arg(long)]
    small: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// broken-arrows, surrogate, or external (reads ZBWM_SIDECAR).
    #[arg(long, default_value = "broken-arrows")]
    detector: String,
    /// Directory of images, or synthetic:<count>.
    #[arg(long, default_value = "synthetic:32")]
    corpus: String,
    #[arg(long, default_value_t = 256)]
    image_size: usize,
    /// Comma-separated test levels.
    #[arg(long, default_value = "0.1,0.01,0.001")]
    alphas: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Results log produced by `bench`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    #[arg(long)]
    svg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidecarMode {
    /// Serve the built-in surrogate decoder.
    Surrogate,
    /// Respond with a fixed vector regardless of input.
    Echo,
    /// Serve the built-in down-up purifier.
    Purifier,
}

#[derive(Args)]
struct SidecarArgs {
    #[arg(long, value_enum, default_value = "surrogate")]
    mode: SidecarMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value_t = 1024)]
    height: usize,
    #[arg(long, default_value_t = 1024)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Fixed response vector for echo mode, comma separated.
    #[arg(long)]
    vector: Option<String>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Corpus(_) | Error::ImageFormat(_) | Error::EmptyImage => 2,
        Error::Protocol(_) | Error::SidecarTimeout(_) => 3,
        _ => 1,
    }
}

fn load_key(path: &PathBuf) -> zbwm::Result<BaKey> {
    let mut f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    BaKey::read_from(&mut f)
}

fn parse_corpus(s: &str) -> zbwm::Result<CorpusSource> {
    if let Some(count) = s.strip_prefix("synthetic:") {
        Ok(CorpusSource::Synthetic {
            count: count
                .parse()
                .map_err(|_| Error::Config(format!("bad corpus `{s}`")))?,
        })
    } else {
        Ok(CorpusSource::Directory(s.into()))
    }
}

fn run(cli: Cli) -> zbwm::Result<()> {
    match cli.command {
        Command::Keygen(a) => {
            let key = ba_keygen(
                a.seed,
                BaParams {
                    subspace_dim: a.m,
                    coeff_count: a.nf,
                    cone_count: a.nc,
                },
            )?;
            let mut f = std::fs::File::create(&a.out).map_err(|source| Error::Io {
                path: a.out.clone(),
                source,
            })?;
            key.write_to(&mut f).map_err(|source| Error::Io {
                path: a.out.clone(),
                source,
            })?;
            println!(
                "wrote key seed={} M={} N_f={} N_c={} to {}",
                a.seed,
                a.m,
                a.nf,
                a.nc,
                a.out.display()
            );
            Ok(())
        }
        Command::Embed(a) => {
            let key = load_key(&a.key)?;
            let img = load_image(&a.input)?;
            let wm = ba_embed(&img, &key, Decibels(a.psnr))?;
            let achieved = psnr(&img, &wm)?;
            save_image(&wm, &a.output)?;
            println!("embedded at {achieved} -> {}", a.output.display());
            Ok(())
        }
        Command::Detect(a) => {
            let key = load_key(&a.key)?;
            let img = load_image(&a.input)?;
            let p = ba_detect(&img, &key)?;
            let detected = p.detects_at(a.alpha);
            println!(
                "p-value = {:.6e} (log10 = {:.3}); {} at alpha = {:e}",
                p.value(),
                p.log10_value(),
                if detected { "DETECTED" } else { "not detected" },
                a.alpha
            );
            Ok(())
        }
        Command::Attack(a) => {
            let img = load_image(&a.input)?;
            let key_path = a
                .key
                .as_ref()
                .ok_or_else(|| Error::Config("--key is required to score the attack".into()))?;
            let key = load_key(key_path)?;
            let record = if a.attack == "ba-optimal" {
                let margin = default_attack_margin(a.alpha, &key)?;
                ba_optimal_attack(&img, &key, a.alpha, margin)?
            } else {
                let op = parse_valuemetric(&a.attack)?;
                let det = zbwm::detector::BaDetector::new(key);
                zbwm::attacks::valuemetric(
                    &img,
                    &op,
                    Some(&DownUpPurifier::default()),
                    &det,
                    a.alpha,
                )?
            };
            save_image(&record.attacked, &a.output)?;
            println!(
                "{}: psnr_vs_watermarked = {}, queries = {}, log10 p = {:.3}, success = {}",
                record.attack_name,
                record.psnr_vs_watermarked,
                record.queries_used,
                record.final_pvalue.log10_value(),
                record.success
            );
            Ok(())
        }
        Command::Bench(a) => {
            let text = match &a.config {
                Some(path) => std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?,
                None => String::new(),
            };
            let mut map = ConfigMap::parse(&text)?;
            if a.small {
                map.apply_override("image_size=256")?;
            }
            for o in &a.overrides {
                map.apply_override(o)?;
            }
            let cfg = parse_config(&map)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|source| Error::Io {
                path: a.out_dir.clone(),
                source,
            })?;
            let out = run_scenario(&cfg)?;
            let log_path = a.out_dir.join("results.jsonl");
            write_results_log(&log_path, &out)?;
            let curves =
                attack_curves(&out.records, cfg.alpha, DEFAULT_BIN_WIDTH, DEFAULT_BIN_RANGE);
            let mut all_curves = curves.clone();
            all_curves.extend(envelope(&curves));
            write_curves_csv(&a.out_dir.join("curves.csv"), &all_curves)?;
            write_summary_json(&a.out_dir.join("summary.json"), &out, cfg.alpha)?;
            if a.svg {
                write_svg(
                    &a.out_dir.join(format!("{}.svg", out.header.scenario)),
                    &format!("{} scenario, {}", out.header.scenario, out.header.detector),
                    &all_curves,
                )?;
            }
            println!(
                "{} records, {} embedding failures -> {}",
                out.records.len(),
                out.embed_failures.len(),
                a.out_dir.display()
            );
            Ok(())
        }
        Command::Calibrate(a) => {
            let detector = match a.detector.as_str() {
                "broken-arrows" => DetectorSpec::BrokenArrows {
                    params: if a.image_size >= 1024 {
                        BaParams::full_scale()
                    } else {
                        BaParams::small_scale()
                    },
                },
                "surrogate" => DetectorSpec::Surrogate {
                    m: 256,
                    tanh_gain: None,
                },
                "external" => DetectorSpec::External,
                other => {
                    return Err(Error::Config(format!("unknown detector `{other}`")));
                }
            };
            let alphas: Vec<f64> = a
                .alphas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad alpha `{s}`")))
                })
                .collect::<zbwm::Result<_>>()?;
            let corpus = parse_corpus(&a.corpus)?;
            let points = calibrate(&detector, &corpus, a.image_size, &alphas, a.trials, a.seed)?;
            println!("alpha, n, hits, rate, 3sigma, note");
            for p in points {
                println!(
                    "{:e}, {}, {}, {:.6}, {:.6}, {}",
                    p.alpha,
                    p.n,
                    p.hits,
                    p.rate,
                    p.sigma3,
                    if p.below_resolution {
                        "below measurable resolution"
                    } else {
                        "ok"
                    }
                );
            }
            Ok(())
        }
        Command::Report(a) => {
            let (header, records, failures) = read_results_log(&a.log)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|source| Error::Io {
                path: a.out_dir.clone(),
                source,
            })?;
            let curves =
                attack_curves(&records, header.alpha, DEFAULT_BIN_WIDTH, DEFAULT_BIN_RANGE);
            let mut all_curves = curves.clone();
            all_curves.extend(envelope(&curves));
            write_curves_csv(&a.out_dir.join("curves.csv"), &all_curves)?;
            let out = zbwm::bench::RunOutput {
                header: header.clone(),
                records,
                embed_failures: failures,
            };
            write_summary_json(&a.out_dir.join("summary.json"), &out, header.alpha)?;
            if a.svg {
                write_svg(
                    &a.out_dir.join(format!("{}.svg", header.scenario)),
                    &format!("{} scenario, {}", header.scenario, header.detector),
                    &all_curves,
                )?;
            }
            println!("report regenerated in {}", a.out_dir.display());
            Ok(())
        }
        Command::Sidecar(a) => {
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            match a.mode {
                SidecarMode::Surrogate => {
                    let dec =
                        SurrogateDecoder::new(a.seed, a.m, a.height, a.width, a.channels, None)?;
                    zbwm::sidecar::serve_decoder(stdin, stdout, a.m, move |img| {
                        dec.decode(img)
                            .map(|v| v.into_iter().map(|x| x as f32).collect())
                            .unwrap_or_else(|_| vec![f32::NAN; a.m])
                    })
                }
                SidecarMode::Echo => {
                    let vector: Vec<f32> = a
                        .vector
                        .as_deref()
                        .unwrap_or("0")
                        .split(',')
                        .map(|s| s.trim().parse().unwrap_or(0.0))
                        .collect();
                    let m = vector.len();
                    zbwm::sidecar::serve_decoder(stdin, stdout, m, move |_| vector.clone())
                }
                SidecarMode::Purifier => {
                    use zbwm::attacks::Purifier;
                    let p = DownUpPurifier::default();
                    zbwm::sidecar::serve_purifier(stdin, stdout, move |img| {
                        p.apply(img).unwrap_or_else(|_| img.clone())
                    })
                }
            }
        }
        Command::JpegTables { quality } => {
            let (luma, chroma) = quant_tables_for_quality(quality);
            println!("luminance table at quality {quality}:");
            for row in luma.chunks(8) {
                println!("  {row:>4?}");
            }
            println!("chrominance table at quality {quality}:");
            for row in chroma.chunks(8) {
                println!("  {row:>4?}");
            }
            Ok(())
        }
    }
}

fn parse_valuemetric(s: &str) -> zbwm::Result<ValuemetricOp> {
    let (name, param) = s.split_once(':').unwrap_or((s, ""));
    let parse_f = |p: &str| -> zbwm::Result<f64> {
        p.parse()
            .map_err(|_| Error::Config(format!("bad parameter in `{s}`")))
    };
    match name {
        "jpeg" => Ok(ValuemetricOp::Jpeg {
            quality: param
                .parse()
                .map_err(|_| Error::Config(format!("bad quality in `{s}`")))?,
        }),
        "gamma" => Ok(ValuemetricOp::Gamma {
            gamma: parse_f(param)?,
        }),
        "sharpen" => Ok(ValuemetricOp::Sharpen {
            amount: parse_f(param)?,
        }),
        "purify" => Ok(ValuemetricOp::Purify {
            steps: param
                .parse()
                .map_err(|_| Error::Config(format!("bad steps in `{s}`")))?,
        }),
        other => Err(Error::Config(format!("unknown attack `{other}`"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with code 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
