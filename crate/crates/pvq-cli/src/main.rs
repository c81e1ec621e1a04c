//! Command-line front end. Every subcommand is a thin adapter over the
//! library; outputs are deterministic, so identical inputs give
//! byte-identical files and stdout.
//!
//! Exit codes: 0 success, 1 usage, 2 data/format error.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use pvq::convolve::{self, Kernel};
use pvq::detect::{self, LinearSvm};
use pvq::dot::{pvq_dot, CostMeter};
use pvq::matching::{self, DescriptorDb};
use pvq::pgm::{self, GrayImage};
use pvq::pyramid::{self, PvqVector};
use pvq::transform::{PixelBlock, TransformKind, TransformSpec};
use pvq::{codec, Error as PvqError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt::Display;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "pvq", version, about = "PVQ compressed-domain vision toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Dct,
    Wht,
}

impl TransformArg {
    fn kind(self) -> TransformKind {
        match self {
            TransformArg::Dct => TransformKind::Dct2,
            TransformArg::Wht => TransformKind::Wht,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchWhat {
    Dot,
    Conv,
    Window,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print N_p(n, k) and the packed index bit width
    Count {
        #[arg(short)]
        n: usize,
        #[arg(short)]
        k: usize,
    },
    /// Compress a PGM image into a fixed-rate PVQ bitstream
    Encode {
        input: PathBuf,
        /// Block side (the transform size)
        #[arg(short)]
        m: usize,
        /// Pulses per block
        #[arg(short)]
        k: usize,
        #[arg(short = 't', long = "transform", value_enum, default_value = "dct")]
        transform: TransformArg,
        #[arg(long, default_value_t = 8)]
        dc_bits: u8,
        #[arg(long, default_value_t = 8)]
        r_bits: u8,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Decode a PVQ bitstream back to a PGM image
    Decode {
        input: PathBuf,
        /// Transform the stream was encoded with (the header does not record it)
        #[arg(short = 't', long = "transform", value_enum, default_value = "dct")]
        transform: TransformArg,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Peak signal-to-noise ratio between two PGM images
    Psnr { a: PathBuf, b: PathBuf },
    /// Slide a kernel over a PVQ bitstream in the compressed domain
    Conv {
        input: PathBuf,
        /// Kernel file: first line m1, then m1 rows of reals
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(short = 't', long = "transform", value_enum, default_value = "dct")]
        transform: TransformArg,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Full-image convolution through a sparsified DFT spectrum
    Fftconv {
        input: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        /// Fraction of spectral coefficients to keep, in (0, 1]
        #[arg(long)]
        retain: f64,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Extract PVQ-encoded HOG features from a PGM image
    Hog {
        input: PathBuf,
        /// Pulses per 36-dimensional feature
        #[arg(short)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        cell_size: usize,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Run a linear SVM over a feature grid; writes "i j score" lines
    Detect {
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Add a descriptor (whitespace-separated reals) to a database
    DbAdd {
        db: PathBuf,
        #[arg(long)]
        id: u64,
        #[arg(long)]
        vector: PathBuf,
        /// Descriptor dimension (required when creating a new database)
        #[arg(short)]
        n: Option<usize>,
        /// Pulses per descriptor (required when creating a new database)
        #[arg(short)]
        k: Option<usize>,
    },
    /// Find the best-matching descriptor for a query vector
    DbQuery {
        db: PathBuf,
        #[arg(long)]
        vector: PathBuf,
    },
    /// Count arithmetic operations of a core primitive (key=value output)
    Bench {
        what: BenchWhat,
        #[arg(short, default_value_t = 63)]
        n: usize,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(short, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        kernel_size: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<PvqError> for CliError {
    fn from(e: PvqError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn at_path(path: &Path, e: impl Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    match run(cli.command) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn load_image(path: &Path) -> Result<GrayImage, CliError> {
    pgm::load_pgm(path).map_err(|e| at_path(path, e))
}

fn load_kernel(path: &Path) -> Result<Kernel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| at_path(path, e))?;
    Kernel::parse(&text).map_err(|e| at_path(path, e))
}

fn load_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| at_path(path, e))?;
    let values: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err(at_path(path, "empty vector file")),
        Err(e) => Err(at_path(path, e)),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| at_path(path, e))
}

/// Integer when the division is exact, four decimals otherwise.
fn per_trial(total: u64, trials: u64) -> String {
    if total % trials == 0 {
        (total / trials).to_string()
    } else {
        format!("{:.4}", total as f64 / trials as f64)
    }
}

fn print_meter(meter: &CostMeter, trials: u64) {
    println!("trials={trials}");
    println!("additions={}", meter.additions);
    println!("multiplications={}", meter.multiplications);
    println!("table_lookups={}", meter.table_lookups);
    println!("additions_per_trial={}", per_trial(meter.additions, trials));
    println!("multiplications_per_trial={}", per_trial(meter.multiplications, trials));
    println!("table_lookups_per_trial={}", per_trial(meter.table_lookups, trials));
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Count { n, k } => {
            let np = pyramid::count_points(n, k)?;
            let bits = pyramid::bits_required(n, k)?;
            println!("{np}");
            println!("bits: {bits}");
            Ok(())
        }
        Cmd::Encode { input, m, k, transform, dc_bits, r_bits, output } => {
            let spec = TransformSpec::new(transform.kind(), m).map_err(|e| usage(e.to_string()))?;
            if k == 0 || k > u16::MAX as usize {
                return Err(usage("k must be between 1 and 65535"));
            }
            if dc_bits > 16 || r_bits > 16 {
                return Err(usage("scalar quantizers support at most 16 bits"));
            }
            let img = load_image(&input)?;
            let enc = codec::encode_image(&img, spec, k, dc_bits, r_bits)?;
            write_file(&output, &codec::pack(&enc)?)
        }
        Cmd::Decode { input, transform, output } => {
            let bytes = std::fs::read(&input).map_err(|e| at_path(&input, e))?;
            let enc = codec::unpack(&bytes).map_err(|e| at_path(&input, e))?;
            let spec = TransformSpec::new(transform.kind(), enc.m())
                .map_err(|e| at_path(&input, e))?;
            let img = codec::decode_image(&enc, spec)?;
            pgm::save_pgm(&img, &output).map_err(|e| at_path(&output, e))
        }
        Cmd::Psnr { a, b } => {
            let ia = load_image(&a)?;
            let ib = load_image(&b)?;
            let v = pgm::psnr(&ia, &ib)?;
            println!("psnr: {v:.4} dB");
            Ok(())
        }
        Cmd::Conv { input, kernel, stride, transform, output } => {
            if stride == 0 {
                return Err(usage("stride must be >= 1"));
            }
            let bytes = std::fs::read(&input).map_err(|e| at_path(&input, e))?;
            let enc = codec::unpack(&bytes).map_err(|e| at_path(&input, e))?;
            let spec = TransformSpec::new(transform.kind(), enc.m())
                .map_err(|e| at_path(&input, e))?;
            let c = load_kernel(&kernel)?;
            let mut meter = CostMeter::new();
            let map = convolve::conv_image(&c, &enc, spec, stride, &mut meter)?;
            let mut buf = Vec::new();
            convolve::write_response_map(&map, &mut buf)?;
            write_file(&output, &buf)
        }
        Cmd::Fftconv { input, kernel, retain, output } => {
            if !(retain > 0.0 && retain <= 1.0) {
                return Err(usage("--retain must be in (0, 1]"));
            }
            let img = load_image(&input)?;
            let c = load_kernel(&kernel)?;
            let padded =
                img.width().next_power_of_two() * img.height().next_power_of_two();
            let count = ((padded as f64 * retain).round() as usize).clamp(1, padded);
            let map = convolve::conv_fft_sparse(&img, &c, count)?;
            let mut buf = Vec::new();
            convolve::write_response_map(&map, &mut buf)?;
            write_file(&output, &buf)
        }
        Cmd::Hog { input, k, cell_size, output } => {
            if k == 0 {
                return Err(usage("k must be >= 1"));
            }
            let img = load_image(&input)?;
            let cells = detect::hog_cells(&img, cell_size)?;
            let feats = detect::pvq_features(&cells, k)?;
            detect::save_features(&feats, &output).map_err(|e| at_path(&output, e))
        }
        Cmd::Detect { features, model, step, output } => {
            if step == 0 {
                return Err(usage("step must be >= 1"));
            }
            let feats = detect::load_features(&features).map_err(|e| at_path(&features, e))?;
            let svm = detect::load_model(&model).map_err(|e| at_path(&model, e))?;
            let mut meter = CostMeter::new();
            let dets = detect::slide_detect(&feats, &svm, step, &mut meter)?;
            let mut text = String::new();
            for (i, j, score) in &dets {
                text.push_str(&format!("{i} {j} {score:.6}\n"));
            }
            write_file(&output, text.as_bytes())?;
            println!("detections={}", dets.len());
            Ok(())
        }
        Cmd::DbAdd { db, id, vector, n, k } => {
            let mut database = if db.exists() {
                matching::load_db(&db).map_err(|e| at_path(&db, e))?
            } else {
                let n = n.ok_or_else(|| usage("-n is required when creating a new database"))?;
                let k = k.ok_or_else(|| usage("-k is required when creating a new database"))?;
                DescriptorDb::new(n, k)?
            };
            let raw = load_vector(&vector)?;
            database.add_descriptor(&raw, id)?;
            matching::save_db(&database, &db).map_err(|e| at_path(&db, e))
        }
        Cmd::DbQuery { db, vector } => {
            let database = matching::load_db(&db).map_err(|e| at_path(&db, e))?;
            let query = load_vector(&vector)?;
            let mut meter = CostMeter::new();
            let (id, score) = matching::best_match(&database, &query, &mut meter)?;
            let qnorm = query.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cosine = score / qnorm;
            println!("id={id}");
            println!("score={score}");
            println!("cosine={cosine}");
            println!("distance={}", matching::distance_from_cosine(cosine)?);
            Ok(())
        }
        Cmd::Bench { what, n, k, m, kernel_size, trials, seed } => {
            if trials == 0 {
                return Err(usage("--trials must be >= 1"));
            }
            if k == 0 {
                return Err(usage("k must be >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut meter = CostMeter::new();
            match what {
                BenchWhat::Dot => {
                    if n == 0 {
                        return Err(usage("n must be >= 1"));
                    }
                    for _ in 0..trials {
                        let y: Vec<f64> = (0..n)
                            .map(|_| {
                                let mag = rng.gen_range(0.05..2.0);
                                if rng.gen() {
                                    mag
                                } else {
                                    -mag
                                }
                            })
                            .collect();
                        let v = PvqVector::new(
                            rng.gen_range(0.1..8.0),
                            pyramid::encode(&y, k)?,
                        )?;
                        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                        pvq_dot(&x, &v, &mut meter)?;
                    }
                }
                BenchWhat::Conv => {
                    let spec = TransformSpec::new(TransformKind::Dct2, m)
                        .map_err(|e| usage(e.to_string()))?;
                    if kernel_size == 0 || kernel_size > m {
                        return Err(usage("--kernel-size must be in 1..=m"));
                    }
                    for _ in 0..trials {
                        let x = PixelBlock::new(
                            m,
                            (0..m * m).map(|_| rng.gen_range(0.0..255.0)).collect(),
                        )?;
                        let b = codec::encode_block(&x, spec, k)?;
                        let mut values = vec![0.0; m * m];
                        for i in 0..kernel_size {
                            for j in 0..kernel_size {
                                values[i * m + j] = rng.gen_range(-2.0..2.0);
                            }
                        }
                        let padded = PixelBlock::new(m, values)?;
                        let responses = pvq::transform::basis_responses(&padded, spec)?;
                        convolve::conv_pvq_basis(&responses, &b, &mut meter)?;
                    }
                }
                BenchWhat::Window => {
                    let dims = detect::FEATURE_DIMS;
                    for _ in 0..trials {
                        let hist: Vec<f64> = (0..8 * 16 * detect::HOG_BINS)
                            .map(|_| rng.gen_range(0.1..4.0))
                            .collect();
                        let cells = detect::CellGrid::new(8, 16, hist)?;
                        let feats = detect::pvq_features(&cells, k)?;
                        let weights: Vec<f64> =
                            (0..7 * 15 * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let model =
                            LinearSvm::new(weights, rng.gen_range(-0.5..0.5), 7, 15, dims)?;
                        detect::svm_window_score(&feats, (0, 0), &model, &mut meter)?;
                    }
                }
            }
            print_meter(&meter, trials);
            Ok(())
        }
    }
}
