//! Command-line front door for the metric-frames library: reads JSON
//! documents, dispatches to library operations, and emits JSON reports.
//!
//! Exit codes: 0 when every requested certification passes, 1 when a
//! mathematical check fails (the report carries witnesses), 2 for usage
//! and input-shape errors. Reports are deterministic given the inputs and
//! the seed.

use std::io::Read;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use metric_frames::construct::{geometric_frame, kuratowski_frame, log_frame};
use metric_frames::frame::{
    certify, certify_with_decoder, combine, frame_bounds, is_bessel, precompose, scale,
    FrameSystem,
};
use metric_frames::free::{correspondence_check, free_norm, free_norm_oracle, FreeNormCertificate};
use metric_frames::json::{
    self, parse_frame, parse_molecule, parse_space, render_frame, SpaceInput,
};
use metric_frames::norms::SequenceNormSpec;
use metric_frames::perturb::{
    bessel_perturb, perturb_and_certify, quadratic_closeness, verify_perturbation_hypothesis,
    PerturbationParams,
};
use metric_frames::space::validate_metric_with_tolerance;
use metric_frames::stability::{stability_reconstruct, FieldFamily, LinearDecoder, ScalarField};
use metric_frames::{Error, Result};

#[derive(Parser)]
#[command(
    name = "metric-frames",
    version,
    about = "Frame bounds, constructions, perturbation, and free-space calculations on finite metric spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the metric axioms of a space document.
    Validate {
        /// Space JSON path, or - for stdin.
        #[arg(long, short)]
        input: String,
        /// Slack allowed in the triangle check.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Build a frame and print its JSON document.
    Construct {
        /// One of: log, geometric, kuratowski.
        #[arg(long)]
        family: String,
        /// Interval endpoints for log and geometric families.
        #[arg(long, num_args = 2)]
        interval: Option<Vec<f64>>,
        /// Sample-grid size for log and geometric families.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Number of non-constant maps for log and geometric families.
        #[arg(long, default_value_t = 40)]
        truncation: usize,
        /// Sequence-norm exponent: a positive number or inf.
        #[arg(long, default_value = "1")]
        p: String,
        /// Space JSON path for the Kuratowski family.
        #[arg(long)]
        space: Option<String>,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Compute frame bounds with witnesses.
    Bounds {
        /// Frame JSON path, or - for stdin.
        #[arg(long, short)]
        input: String,
        /// Write a pairwise-ratio table to this path; - replaces the
        /// JSON report on stdout.
        #[arg(long)]
        csv: Option<String>,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Certify claimed frame bounds.
    Certify {
        #[arg(long, short)]
        input: String,
        /// Claimed lower and upper bounds.
        #[arg(long, num_args = 2)]
        claimed: Vec<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Certify a claimed Bessel (upper) bound.
    Bessel {
        #[arg(long, short)]
        input: String,
        #[arg(long)]
        claimed: f64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Scale, permute, or combine frames; prints the transformed frame
    /// document and the predicted bounds on stderr.
    Transform {
        #[arg(long, short)]
        input: String,
        /// Multiply every map by this factor.
        #[arg(long)]
        scale: Option<f64>,
        /// Precompose with a point permutation, given as a JSON index array.
        #[arg(long)]
        permute: Option<String>,
        /// Add lambda times another frame, given by its JSON path.
        #[arg(long)]
        combine: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Verify the perturbation hypothesis and certify predicted bounds.
    Perturb {
        /// Reference frame JSON path.
        #[arg(long, short)]
        input: String,
        /// Perturbed frame JSON path.
        #[arg(long)]
        perturbed: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Certify only the upper (Bessel) bound.
        #[arg(long)]
        bessel_only: bool,
        /// Use measured per-map Lipschitz distances instead of the
        /// three-parameter hypothesis.
        #[arg(long)]
        quadratic: bool,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Run the stability-reconstruction certificate on an instance document.
    Stability {
        #[arg(long, short)]
        input: String,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Compute the free norm of a molecule with its attaining function.
    FreeNorm {
        /// Space JSON path.
        #[arg(long)]
        space: String,
        /// Molecule as an inline JSON array or object.
        #[arg(long)]
        molecule: String,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Also run the vertex-enumeration oracle and compare.
        #[arg(long)]
        oracle: bool,
        #[arg(long, short)]
        output: Option<String>,
    },
    /// Compare frame bounds before and after embedding into the free space.
    Correspond {
        #[arg(long, short)]
        input: String,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, short)]
        output: Option<String>,
    },
}

fn main() {
    if let Ok(v) = std::env::var("METRIC_FRAMES_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    let cli = Cli::parse();
    std::process::exit(run(cli.command));
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Structural(_) => "structural",
        Error::InvalidMetric { .. } => "invalid-metric",
        Error::Domain(_) => "domain",
        Error::NotNormalized(_) => "not-normalized",
        Error::InfeasibleExtension { .. } => "infeasible-extension",
        Error::QuasiNorm(_) => "quasi-norm",
        Error::Hypothesis(_) => "hypothesis",
        Error::Degenerate(_) => "degenerate",
        Error::Solver(_) => "solver",
        Error::NoConvergence { .. } => "no-convergence",
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Structural(_) | Error::Domain(_) | Error::QuasiNorm(_) => 2,
        _ => 1,
    }
}

fn envelope<T: Serialize>(command: &str, seed: Option<u64>, report: &T) -> String {
    #[derive(Serialize)]
    struct Envelope<'a, T: Serialize> {
        schema_version: u32,
        command: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        report: &'a T,
    }
    serde_json::to_string_pretty(&Envelope {
        schema_version: json::SCHEMA_VERSION,
        command,
        seed,
        report,
    })
    .expect("reports serialize")
        + "\n"
}

fn error_envelope(command: &str, e: &Error) -> String {
    #[derive(Serialize)]
    struct Failure<'a> {
        schema_version: u32,
        command: &'a str,
        error: ErrorBody<'a>,
    }
    #[derive(Serialize)]
    struct ErrorBody<'a> {
        kind: &'a str,
        message: String,
    }
    serde_json::to_string_pretty(&Failure {
        schema_version: json::SCHEMA_VERSION,
        command,
        error: ErrorBody {
            kind: error_kind(e),
            message: e.to_string(),
        },
    })
    .expect("errors serialize")
        + "\n"
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| Error::Structural(format!("reading stdin: {e}")))?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Structural(format!("reading {path}: {e}")))
    }
}

/// A closed pipe (`| head`) counts as success: the consumer has all it wanted
/// and the computed verdict is unchanged.
fn emit_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().write_all(text.as_bytes()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Error::Structural(format!("writing stdout: {e}"))),
    }
}

fn write_output(path: Option<&str>, text: &str) -> Result<()> {
    match path {
        None | Some("-") => emit_stdout(text),
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::Structural(format!("writing {p}: {e}"))),
    }
}

fn parse_norm_flag(p: &str) -> Result<SequenceNormSpec> {
    if p == "inf" {
        return Ok(SequenceNormSpec::infinity());
    }
    let value: f64 = p
        .parse()
        .map_err(|_| Error::Structural(format!("norm exponent {p:?} is not a number or inf")))?;
    SequenceNormSpec::new(value)
}

fn run(command: Command) -> i32 {
    let name = command_name(&command);
    match dispatch(command) {
        Ok((text, out, code)) => {
            if write_output(out.as_deref(), &text).is_err() {
                return 2;
            }
            code
        }
        Err(e) => {
            let _ = emit_stdout(&error_envelope(name, &e));
            exit_code_for(&e)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Construct { .. } => "construct",
        Command::Bounds { .. } => "bounds",
        Command::Certify { .. } => "certify",
        Command::Bessel { .. } => "bessel",
        Command::Transform { .. } => "transform",
        Command::Perturb { .. } => "perturb",
        Command::Stability { .. } => "stability",
        Command::FreeNorm { .. } => "free-norm",
        Command::Correspond { .. } => "correspond",
    }
}

fn dispatch(command: Command) -> Result<(String, Option<String>, i32)> {
    match command {
        Command::Validate {
            input,
            tolerance,
            output,
        } => cmd_validate(&input, tolerance).map(|(t, c)| (t, output, c)),
        Command::Construct {
            family,
            interval,
            grid,
            truncation,
            p,
            space,
            output,
        } => cmd_construct(&family, interval, grid, truncation, &p, space.as_deref())
            .map(|(t, c)| (t, output, c)),
        Command::Bounds { input, csv, output } => {
            cmd_bounds(&input, csv.as_deref()).map(|(t, c)| (t, output, c))
        }
        Command::Certify {
            input,
            claimed,
            tolerance,
            seed,
            output,
        } => cmd_certify(&input, &claimed, tolerance, seed).map(|(t, c)| (t, output, c)),
        Command::Bessel {
            input,
            claimed,
            tolerance,
            output,
        } => cmd_bessel(&input, claimed, tolerance).map(|(t, c)| (t, output, c)),
        Command::Transform {
            input,
            scale,
            permute,
            combine,
            lambda,
            output,
        } => cmd_transform(&input, scale, permute.as_deref(), combine.as_deref(), lambda)
            .map(|(t, c)| (t, output, c)),
        Command::Perturb {
            input,
            perturbed,
            alpha,
            beta,
            gamma,
            tolerance,
            bessel_only,
            quadratic,
            output,
        } => cmd_perturb(
            &input, &perturbed, alpha, beta, gamma, tolerance, bessel_only, quadratic,
        )
        .map(|(t, c)| (t, output, c)),
        Command::Stability {
            input,
            tolerance,
            output,
        } => cmd_stability(&input, tolerance).map(|(t, c)| (t, output, c)),
        Command::FreeNorm {
            space,
            molecule,
            tolerance,
            oracle,
            output,
        } => cmd_free_norm(&space, &molecule, tolerance, oracle).map(|(t, c)| (t, output, c)),
        Command::Correspond {
            input,
            tolerance,
            output,
        } => cmd_correspond(&input, tolerance).map(|(t, c)| (t, output, c)),
    }
}

fn euclidean_rows(coords: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = coords.len();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            rows[i][j] = d;
            rows[j][i] = d;
        }
    }
    rows
}

fn cmd_validate(input: &str, tolerance: f64) -> Result<(String, i32)> {
    let text = read_input(input)?;
    let parsed: SpaceInput = serde_json::from_str(&text).map_err(|e| {
        Error::Structural(format!(
            "space JSON matches neither the distances form nor the coords form: {e}"
        ))
    })?;
    let rows = match &parsed {
        SpaceInput::Distances {
            schema_version,
            points,
            base,
            distances,
        } => {
            check_version(*schema_version)?;
            base.resolve(points)?;
            distances.clone()
        }
        SpaceInput::Coords {
            schema_version,
            coords,
            base,
            metric,
        } => {
            check_version(*schema_version)?;
            if metric != "euclidean" {
                return Err(Error::Structural(format!(
                    "unknown metric {metric:?}; coordinate inputs support \"euclidean\""
                )));
            }
            let ids: Vec<String> = (0..coords.len()).map(|i| format!("p{i}")).collect();
            base.resolve(&ids)?;
            euclidean_rows(coords)
        }
    };
    // Coordinate-derived distances are individually rounded, so they get
    // the same ulp-scale slack the point builders use; user matrices stay
    // at the flag's value (exact by default).
    let tolerance = if matches!(parsed, SpaceInput::Coords { .. }) {
        let diameter = rows.iter().flatten().fold(0.0f64, |m, &d| m.max(d));
        tolerance.max(16.0 * f64::EPSILON * diameter.max(1.0))
    } else {
        tolerance
    };
    let report = validate_metric_with_tolerance(&rows, tolerance)?;
    let code = if report.valid { 0 } else { 1 };
    Ok((envelope("validate", None, &report), code))
}

fn check_version(v: u32) -> Result<()> {
    if v != json::SCHEMA_VERSION {
        return Err(Error::Structural(format!(
            "unsupported schema_version {v}; this build reads version {}",
            json::SCHEMA_VERSION
        )));
    }
    Ok(())
}

fn cmd_construct(
    family: &str,
    interval: Option<Vec<f64>>,
    grid: usize,
    truncation: usize,
    p: &str,
    space: Option<&str>,
) -> Result<(String, i32)> {
    let norm = parse_norm_flag(p)?;
    match family {
        "log" | "geometric" => {
            let Some(iv) = interval else {
                return Err(Error::Structural(format!(
                    "--interval c d is required for the {family} family"
                )));
            };
            let (c, d) = (iv[0], iv[1]);
            let system = if family == "log" {
                log_frame(c, d, grid, truncation, norm)?.0
            } else {
                geometric_frame(c, d, grid, truncation, norm)?
            };
            Ok((render_frame(&system), 0))
        }
        "kuratowski" => {
            let Some(path) = space else {
                return Err(Error::Structural(
                    "--space is required for the kuratowski family".into(),
                ));
            };
            let m = parse_space(&read_input(path)?, 0.0)?;
            let (system, _, checks) = kuratowski_frame(&std::sync::Arc::new(m))?;
            if !checks.all_ok() {
                return Err(Error::Hypothesis(format!(
                    "construction self-checks failed: {checks:?}"
                )));
            }
            Ok((render_frame(&system), 0))
        }
        other => Err(Error::Structural(format!(
            "unknown family {other:?}; expected log, geometric, or kuratowski"
        ))),
    }
}

fn pairwise_csv(system: &FrameSystem) -> String {
    let space = system.space();
    let mut out = String::from("i,j,point_i,point_j,distance,image_distance,ratio\n");
    for (i, j) in space.pairs() {
        let d = space.d(i, j);
        let image = system.diff_norm(i, j);
        out.push_str(&format!(
            "{i},{j},{},{},{d},{image},{}\n",
            space.point_ids()[i],
            space.point_ids()[j],
            image / d
        ));
    }
    out
}

fn cmd_bounds(input: &str, csv: Option<&str>) -> Result<(String, i32)> {
    let (system, _) = parse_frame(&read_input(input)?)?;
    let bounds = frame_bounds(&system);
    match csv {
        Some("-") => Ok((pairwise_csv(&system), 0)),
        Some(path) => {
            std::fs::write(path, pairwise_csv(&system))
                .map_err(|e| Error::Structural(format!("writing {path}: {e}")))?;
            Ok((envelope("bounds", None, &bounds), 0))
        }
        None => Ok((envelope("bounds", None, &bounds), 0)),
    }
}

fn cmd_certify(input: &str, claimed: &[f64], tolerance: f64, seed: u64) -> Result<(String, i32)> {
    if claimed.len() != 2 {
        return Err(Error::Structural(
            "--claimed takes exactly two values: the lower and upper bounds".into(),
        ));
    }
    let (system, decoder) = parse_frame(&read_input(input)?)?;
    let (report, seed_used) = match decoder {
        Some(s) => (
            certify_with_decoder(&system, &s, claimed[0], claimed[1], tolerance, seed)?,
            Some(seed),
        ),
        None => (certify(&system, claimed[0], claimed[1], tolerance)?, None),
    };
    let code = if report.verdict { 0 } else { 1 };
    Ok((envelope("certify", seed_used, &report), code))
}

fn cmd_bessel(input: &str, claimed: f64, tolerance: f64) -> Result<(String, i32)> {
    let (system, _) = parse_frame(&read_input(input)?)?;
    let report = is_bessel(&system, claimed, tolerance)?;
    let code = if report.ok { 0 } else { 1 };
    Ok((envelope("bessel", None, &report), code))
}

fn cmd_transform(
    input: &str,
    scale_by: Option<f64>,
    permute: Option<&str>,
    combine_with: Option<&str>,
    lambda: f64,
) -> Result<(String, i32)> {
    let chosen =
        usize::from(scale_by.is_some()) + usize::from(permute.is_some()) + usize::from(combine_with.is_some());
    if chosen != 1 {
        return Err(Error::Structural(
            "pass exactly one of --scale, --permute, --combine".into(),
        ));
    }
    let (system, _) = parse_frame(&read_input(input)?)?;
    let (transformed, predicted) = if let Some(factor) = scale_by {
        scale(&system, factor)?
    } else if let Some(indices) = permute {
        let a: Vec<usize> = serde_json::from_str(indices)
            .map_err(|e| Error::Structural(format!("--permute must be a JSON index array: {e}")))?;
        let (sys, predicted, _) = precompose(&system, &a)?;
        (sys, predicted)
    } else {
        let path = combine_with.expect("checked above");
        let (other, _) = parse_frame(&read_input(path)?)?;
        combine(&system, &other, lambda)?
    };
    eprintln!(
        "{}",
        serde_json::json!({
            "command": "transform",
            "predicted_bounds": [predicted.0, predicted.1],
        })
    );
    Ok((render_frame(&transformed), 0))
}

#[derive(Serialize)]
struct QuadraticReport {
    closeness: metric_frames::perturb::QuadraticCloseness,
    #[serde(skip_serializing_if = "Option::is_none")]
    certification: Option<metric_frames::frame::CertificationReport>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_perturb(
    input: &str,
    perturbed: &str,
    alpha: f64,
    beta: f64,
    gamma: f64,
    tolerance: f64,
    bessel_only: bool,
    quadratic: bool,
) -> Result<(String, i32)> {
    if bessel_only && quadratic {
        return Err(Error::Structural(
            "--bessel-only and --quadratic are mutually exclusive".into(),
        ));
    }
    let (f, _) = parse_frame(&read_input(input)?)?;
    let (g, _) = parse_frame(&read_input(perturbed)?)?;
    if quadratic {
        let closeness = quadratic_closeness(&f, &g, f.norm())?;
        let Some((lo, hi)) = closeness.predicted else {
            let report = QuadraticReport {
                closeness,
                certification: None,
            };
            return Ok((envelope("perturb", None, &report), 1));
        };
        let cert = certify(&g, lo, hi, tolerance)?;
        let code = if cert.verdict { 0 } else { 1 };
        let report = QuadraticReport {
            closeness,
            certification: Some(cert),
        };
        return Ok((envelope("perturb", None, &report), code));
    }
    let params = PerturbationParams::new(alpha, beta, gamma)?;
    if bessel_only {
        let report = bessel_perturb(&f, &g, &params, tolerance)?;
        let code = if report.ok { 0 } else { 1 };
        return Ok((envelope("perturb", None, &report), code));
    }
    let hypothesis = verify_perturbation_hypothesis(&f, &g, &params)?;
    if !hypothesis.holds {
        return Ok((envelope("perturb", None, &hypothesis), 1));
    }
    let report = perturb_and_certify(&f, &g, &params, tolerance)?;
    let code = if report.verdict { 0 } else { 1 };
    Ok((envelope("perturb", None, &report), code))
}

#[derive(Deserialize)]
struct StabilityDocument {
    schema_version: u32,
    sample: Vec<Vec<f64>>,
    reference: Vec<ScalarField>,
    perturbed: Vec<ScalarField>,
    decoder: Vec<Vec<f64>>,
    alpha: f64,
    gamma: f64,
    norm: SequenceNormSpec,
}

fn cmd_stability(input: &str, tolerance: f64) -> Result<(String, i32)> {
    let doc: StabilityDocument = serde_json::from_str(&read_input(input)?)
        .map_err(|e| Error::Structural(format!("stability instance JSON is malformed: {e}")))?;
    check_version(doc.schema_version)?;
    let Some(first) = doc.sample.first() else {
        return Err(Error::Structural("sample is empty".into()));
    };
    let dim = first.len();
    let reference = FieldFamily::new(dim, doc.reference)?;
    let perturbed = FieldFamily::new(dim, doc.perturbed)?;
    let decoder = LinearDecoder::new(doc.decoder)?;
    let report = stability_reconstruct(
        &doc.sample,
        &reference,
        &decoder,
        &perturbed,
        doc.alpha,
        doc.gamma,
        &doc.norm,
        tolerance,
    )?;
    let code = if report.verdict { 0 } else { 1 };
    Ok((envelope("stability", None, &report), code))
}

#[derive(Serialize)]
struct FreeNormReport {
    certificate: FreeNormCertificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
}

fn cmd_free_norm(
    space: &str,
    molecule: &str,
    tolerance: f64,
    oracle: bool,
) -> Result<(String, i32)> {
    let m = parse_space(&read_input(space)?, 0.0)?;
    let mol = parse_molecule(molecule)?;
    let certificate = free_norm(&m, &mol, tolerance)?;
    let (oracle_value, oracle_agrees) = if oracle {
        let value = free_norm_oracle(&m, &mol)?;
        let agrees = (value - certificate.value).abs() <= tolerance.max(1e-8);
        (Some(value), Some(agrees))
    } else {
        (None, None)
    };
    let code = if oracle_agrees == Some(false) { 1 } else { 0 };
    let report = FreeNormReport {
        certificate,
        oracle: oracle_value,
        oracle_agrees,
    };
    Ok((envelope("free-norm", None, &report), code))
}

fn cmd_correspond(input: &str, tolerance: f64) -> Result<(String, i32)> {
    let (system, _) = parse_frame(&read_input(input)?)?;
    let report = correspondence_check(&system, tolerance)?;
    let code = if report.agree { 0 } else { 1 };
    Ok((envelope("correspond", None, &report), code))
}
