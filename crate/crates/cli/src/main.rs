use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use subriemann::connection::{christoffels, horizontal_gradient, horizontal_hessian, sublaplacian};
use subriemann::connectivity::{
    ballbox_probe, commutator_flow, dc_lower, dh_upper, steer, BallBoxOptions, DhOptions, DistanceMethod, DistanceOptions,
    SteerOptions,
};
use subriemann::convexity::{
    lipschitz_estimate, lower_bound_check, nconvexity_by_geodesics, nconvexity_by_hessian, ConvexityOptions,
};
use subriemann::geodesic::{
    geodesic_from_constraints, horizontal_exponential_with_step, nonholonomic_geodesic, riemannian_geodesic,
    HorizontalCurve, DEFAULT_STEP,
};
use subriemann::geometry::{bracket_field, growth_vector};
use subriemann::models::{builtin, heisenberg_dc, heisenberg_n, heisenberg_plan};
use subriemann::rng::DEFAULT_SEED;
use subriemann::verify::{Scope, Status, Suite};
use subriemann::{parse_expression, parse_model, Error, Expr, MultiIndex, StructureSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "subriemann", version, about = "Sub-Riemannian geometry workbench")]
struct Cli {
    /// Built-in model name (heisenberg-<n>, engel, perturbed-heisenberg) or path to a model file.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Integration step.
    #[arg(long, global = true, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Omit the timestamp from the output header.
    #[arg(long, global = true)]
    quiet_timestamps: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Right-nested bracket field E_I, symbolically and optionally at a point.
    Bracket {
        /// 1-based multi-index, e.g. 1,2 for [X1,X2].
        #[arg(long, allow_hyphen_values = true)]
        index: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
    },
    /// Growth vector of the distribution at a point.
    Growth {
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Christoffel symbols of the horizontal connection.
    Christoffel {
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
        /// Include the full m-dimensional table.
        #[arg(long)]
        full: bool,
    },
    /// Nonholonomic geodesic from frame-coefficient initial velocity.
    Geodesic {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        v0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        v0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        t: f64,
        /// Keep every n-th sample in the output.
        #[arg(long, allow_hyphen_values = true, default_value_t = 1)]
        every: usize,
    },
    /// Horizontal exponential map: endpoint at time 1.
    Exp {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        v: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        v_file: Option<PathBuf>,
    },
    /// Geodesic of the full Riemannian extension, initial velocity in all frame coordinates.
    Riemannian {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        w0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        w0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        t: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1)]
        every: usize,
    },
    /// Nonholonomic geodesic from the constrained (multiplier) formulation.
    ConstraintGeodesic {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        v0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        v0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        t: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1)]
        every: usize,
    },
    /// Commutator flow Psi_I(t) as a concatenation of legs.
    Flow {
        #[arg(long, allow_hyphen_values = true)]
        index: String,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
    },
    /// Broken geodesic from p to q by inverting the commutator-flow map.
    Steer {
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        p_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        q_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 50)]
        maxiter: usize,
    },
    /// Distance estimates: broken-geodesic upper bound, lower bound and exact value where known.
    Dist {
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        p_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        q_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 8)]
        budget: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 4)]
        restarts: usize,
        /// Also run the Heisenberg planner with this polygon size.
        #[arg(long, allow_hyphen_values = true)]
        ngon: Option<usize>,
    },
    /// Ball-box probe at a point.
    Ballbox {
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 200)]
        samples: usize,
    },
    /// Horizontal Hessian of f at a point.
    Hess {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
    },
    /// Horizontal gradient of f at a point (frame coefficients).
    Grad {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
    },
    /// Sub-Laplacian of f at a point.
    Sublap {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point_file: Option<PathBuf>,
    },
    /// Convexity test by the Hessian route, the geodesic route, or both.
    Convexity {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true, value_enum, default_value_t = RouteArg::Both)]
        route: RouteArg,
        #[arg(long, allow_hyphen_values = true, default_value_t = 200)]
        samples: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 200)]
        geodesics: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 21)]
        points_per_geodesic: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 2.0)]
        span: f64,
        #[arg(long, allow_hyphen_values = true)]
        tol: Option<f64>,
    },
    /// Empirical Lipschitz quotient of f over a chart ball.
    Lipschitz {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        centre: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        centre_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        radius: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 200)]
        pairs: usize,
        /// Distance estimate: `steer`, or `dh` for the optimised upper bound.
        #[arg(long, allow_hyphen_values = true, value_enum, default_value_t = MethodArg::Steer)]
        method: MethodArg,
        #[arg(long, allow_hyphen_values = true, default_value_t = 8)]
        budget: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 4)]
        restarts: usize,
    },
    /// Lower bound f(p) >= 2^N f(y0) - (2^N - 1) C near y0.
    LowerBound {
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, allow_hyphen_values = true)]
        y0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y0_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        radius: f64,
        /// Upper bound C of f on the ball; sampled when omitted.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 500)]
        samples: usize,
    },
    /// Heisenberg planner: straight lift plus a regular polygon loop.
    Plan {
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        p_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        q_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 32)]
        ngon: usize,
    },
    /// Run the acceptance suite; without --model every criterion runs on its named models.
    Verify {
        /// Comma-separated criterion numbers; all when omitted.
        #[arg(long, allow_hyphen_values = true)]
        criteria: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RouteArg {
    Hessian,
    Geodesic,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Steer,
    Dh,
}

enum Failure {
    Usage(String),
    Numerical(Value),
    Invariant,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Syntax { .. }
            | Error::Schema(_)
            | Error::Dimension(_)
            | Error::UnknownModel(_)
            | Error::NotCarnot(_)
            | Error::InvalidInput(_)
            | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(diagnostic(&other)),
        }
    }
}

fn diagnostic(e: &Error) -> Value {
    let kind = match e {
        Error::Eval(_) => "evaluation",
        Error::DegenerateFrame { .. } => "degenerate-frame",
        Error::SingularFrame(_) => "singular-frame",
        Error::NotBracketGenerating { .. } => "not-bracket-generating",
        Error::DomainExit { .. } => "domain-exit",
        Error::BlowUp { .. } => "blow-up",
        Error::NoConvergence { .. } => "no-convergence",
        Error::Sampling(_) => "sampling",
        _ => "other",
    };
    json!({ "error": kind, "message": e.to_string() })
}

type Outcome = Result<Output, Failure>;

/// Command result: a JSON document plus an optional CSV table.
struct Output {
    json: Value,
    csv: Option<String>,
}

impl Output {
    fn json(json: Value) -> Output {
        Output { json, csv: None }
    }
}

fn parse_reals(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        return parse_reals(inner, what);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Failure::Usage(format!("--{what}: '{s}' is not a real number"))))
        .collect()
}

/// Inline value or file contents; giving both is an error.
fn vector(inline: &Option<String>, file: &Option<PathBuf>, what: &str) -> Result<Vec<f64>, Failure> {
    match (inline, file) {
        (Some(_), Some(_)) => Err(Failure::Usage(format!("--{what} and --{what}-file are mutually exclusive"))),
        (Some(s), None) => parse_reals(s, what),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_reals(&text, what)
        }
        (None, None) => Err(Failure::Usage(format!("--{what} or --{what}-file is required"))),
    }
}

fn indices(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Failure::Usage(format!("'{s}' is not a positive integer"))))
        .collect()
}

fn function(text: &str) -> Result<Expr, Failure> {
    Ok(parse_expression(text)?)
}

/// `(spec, document)`; the document is kept for file models so the header
/// reproduces the run.
fn load_model(name: &str) -> Result<(StructureSpec, Option<Value>), Failure> {
    let path = PathBuf::from(name);
    if path.is_file() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        let spec = parse_model(&text)?;
        let doc = serde_json::from_str(&spec.to_json()).map_err(Error::from)?;
        Ok((spec, Some(doc)))
    } else {
        Ok((builtin(name)?, None))
    }
}

fn curve_json(c: &HorizontalCurve, every: usize) -> Value {
    let every = every.max(1);
    let keep: Vec<usize> = (0..c.len()).filter(|i| i % every == 0 || *i + 1 == c.len()).collect();
    json!({
        "step": c.step,
        "truncated": c.truncated,
        "exit_time": c.exit_time,
        "final_time": c.final_time(),
        "endpoint": c.endpoint(),
        "final_velocity_frame": c.final_velocity(),
        "speed_drift": c.speed_drift(),
        "times": keep.iter().map(|&i| c.times[i]).collect::<Vec<_>>(),
        "points": keep.iter().map(|&i| &c.points[i]).collect::<Vec<_>>(),
        "velocities_frame": keep.iter().map(|&i| &c.velocities[i]).collect::<Vec<_>>(),
    })
}

fn curve_output(c: HorizontalCurve, every: usize) -> Output {
    Output { json: json!({ "curve": curve_json(&c, every) }), csv: Some(c.to_csv()) }
}

fn steer_opts(cli: &Cli) -> SteerOptions {
    SteerOptions { step: cli.step, ..SteerOptions::default() }
}

fn run(cli: &Cli, spec: Option<&StructureSpec>) -> Outcome {
    let need = || spec.ok_or_else(|| Failure::Usage("--model is required".into()));
    match &cli.command {
        Command::Bracket { index, point, point_file } => {
            let spec = need()?;
            let idx = MultiIndex::from_one_based(&indices(index)?, spec.rank())?;
            let field = bracket_field(spec, &idx);
            let symbolic: Vec<String> = field.components.iter().map(|e| e.to_string()).collect();
            let value = match (point, point_file) {
                (None, None) => None,
                _ => Some(field.eval(&vector(point, point_file, "point")?)?),
            };
            Ok(Output::json(json!({ "index": idx.one_based(), "weight": idx.weight(), "components": symbolic, "value": value })))
        }
        Command::Growth { point, point_file, tol } => {
            let spec = need()?;
            let gv = growth_vector(spec, &vector(point, point_file, "point")?, *tol)?;
            let csv = format!("layer,cumulative_rank\n{}", gv.layers.iter().enumerate().map(|(i, n)| format!("{},{n}\n", i + 1)).collect::<String>());
            Ok(Output {
                json: json!({
                    "growth_vector": gv.layers,
                    "step": gv.step(),
                    "bracket_generating": gv.bracket_generating,
                    "rank_tol": gv.tol,
                    "depth_cap": gv.depth_cap,
                }),
                csv: Some(csv),
            })
        }
        Command::Christoffel { point, point_file, full } => {
            let spec = need()?;
            let table = christoffels(spec, &vector(point, point_file, "point")?)?;
            let k = spec.rank();
            let mut csv = String::from("r,i,j,gamma\n");
            for r in 0..k {
                for i in 0..k {
                    for j in 0..k {
                        csv.push_str(&format!("{},{},{},{}\n", r + 1, i + 1, j + 1, table.horizontal(r, i, j)));
                    }
                }
            }
            let mut doc = json!({
                "horizontal_gamma_r_i_j": table.horizontal_nested(),
                "max_abs_horizontal": table.max_abs_horizontal(),
            });
            if *full {
                doc["full_gamma_c_a_b"] = json!(table.full_nested());
            }
            Ok(Output { json: doc, csv: Some(csv) })
        }
        Command::Geodesic { x0, x0_file, v0, v0_file, t, every } => {
            let spec = need()?;
            let c = nonholonomic_geodesic(spec, &vector(x0, x0_file, "x0")?, &vector(v0, v0_file, "v0")?, *t, cli.step)?;
            Ok(curve_output(c, *every))
        }
        Command::Exp { x0, x0_file, v, v_file } => {
            let spec = need()?;
            let end = horizontal_exponential_with_step(spec, &vector(x0, x0_file, "x0")?, &vector(v, v_file, "v")?, cli.step)?;
            Ok(Output::json(json!({ "endpoint": end })))
        }
        Command::Riemannian { x0, x0_file, w0, w0_file, t, every } => {
            let spec = need()?;
            let c = riemannian_geodesic(spec, &vector(x0, x0_file, "x0")?, &vector(w0, w0_file, "w0")?, *t, cli.step)?;
            Ok(curve_output(c, *every))
        }
        Command::ConstraintGeodesic { x0, x0_file, v0, v0_file, t, every } => {
            let spec = need()?;
            let c = geodesic_from_constraints(spec, &vector(x0, x0_file, "x0")?, &vector(v0, v0_file, "v0")?, *t, cli.step)?;
            Ok(curve_output(c, *every))
        }
        Command::Flow { index, t, point, point_file } => {
            let spec = need()?;
            let idx = MultiIndex::from_one_based(&indices(index)?, spec.rank())?;
            let (end, plan) = commutator_flow(spec, &idx, *t, &vector(point, point_file, "point")?, cli.step)?;
            Ok(Output::json(json!({
                "index": idx.one_based(),
                "t": t,
                "endpoint": end,
                "legs": plan.segments.len(),
                "length": plan.length(),
                "plan": plan,
            })))
        }
        Command::Steer { p, p_file, q, q_file, tol, maxiter } => {
            let spec = need()?;
            let opts = SteerOptions { tol: *tol, maxiter: *maxiter, ..steer_opts(cli) };
            let st = steer(spec, &vector(p, p_file, "p")?, &vector(q, q_file, "q")?, &opts)?;
            let doc = json!({
                "converged": st.converged,
                "residual_chart": st.residual,
                "iterations": st.iterations,
                "max_hop_iterations": st.max_hop_iterations,
                "hops": st.hops(),
                "params": st.params,
                "length": st.plan.length(),
                "weights": st.frame.weights,
                "bracket_indices": st.frame.indices.iter().map(|i| i.one_based()).collect::<Vec<_>>(),
                "plan": st.plan,
            });
            if st.converged {
                Ok(Output::json(doc))
            } else {
                Err(Failure::Numerical(json!({ "error": "no-convergence", "result": doc })))
            }
        }
        Command::Dist { p, p_file, q, q_file, budget, restarts, ngon } => {
            let spec = need()?;
            let p = vector(p, p_file, "p")?;
            let q = vector(q, q_file, "q")?;
            let opts = DhOptions {
                budget: *budget,
                restarts: *restarts,
                step: cli.step,
                seed: cli.seed,
                steer: steer_opts(cli),
                ..DhOptions::default()
            };
            let dh = dh_upper(spec, &p, &q, &opts)?;
            let lower = dc_lower(spec, &p, &q)?;
            let planner = match ngon {
                Some(n) if heisenberg_n(spec).is_some() => Some(heisenberg_plan(&p, &q, *n)?.length()),
                Some(_) => return Err(Failure::Usage("--ngon needs a heisenberg-<n> model".into())),
                None => None,
            };
            let oracle = if heisenberg_n(spec) == Some(1) { Some(heisenberg_dc(&p, &q, 1e-14)?) } else { None };
            let upper = planner.map_or(dh.length, |l| l.min(dh.length));
            Ok(Output::json(json!({
                "upper": upper,
                "dh_upper": dh.length,
                "dh_gap_chart": dh.gap,
                "steer_length": dh.steer_length,
                "infeasible_budget": dh.infeasible_budget,
                "planner_length": planner,
                "lower": lower,
                "oracle": oracle,
                "plan": dh.plan,
            })))
        }
        Command::Ballbox { point, point_file, eps, samples } => {
            let spec = need()?;
            let opts = BallBoxOptions { samples: *samples, step: cli.step, seed: cli.seed, steer: steer_opts(cli), ..BallBoxOptions::default() };
            let report = ballbox_probe(spec, &vector(point, point_file, "point")?, *eps, &opts)?;
            let csv = report.to_csv();
            Ok(Output { json: json!({ "ballbox": report }), csv: Some(csv) })
        }
        Command::Hess { f, point, point_file } => {
            let spec = need()?;
            let h = horizontal_hessian(spec, &function(f)?, &vector(point, point_file, "point")?)?;
            let eig = h.min_eigenvalue();
            Ok(Output::json(json!({ "hessian_frame": h.matrix, "trace": h.trace(), "min_eigenvalue": eig, "point": h.point })))
        }
        Command::Grad { f, point, point_file } => {
            let spec = need()?;
            let g = horizontal_gradient(spec, &function(f)?, &vector(point, point_file, "point")?)?;
            Ok(Output::json(json!({ "gradient_frame": g })))
        }
        Command::Sublap { f, point, point_file } => {
            let spec = need()?;
            let v = sublaplacian(spec, &function(f)?, &vector(point, point_file, "point")?)?;
            Ok(Output::json(json!({ "sublaplacian": v })))
        }
        Command::Convexity { f, route, samples, geodesics, points_per_geodesic, span, tol } => {
            let spec = need()?;
            let f = function(f)?;
            let opts = ConvexityOptions {
                samples: *samples,
                geodesics: *geodesics,
                points_per_geodesic: *points_per_geodesic,
                span: *span,
                step: cli.step,
                tol: *tol,
                seed: cli.seed,
            };
            let hess = match route {
                RouteArg::Geodesic => None,
                _ => Some(nconvexity_by_hessian(spec, &f, &opts)?),
            };
            let geo = match route {
                RouteArg::Hessian => None,
                _ => Some(nconvexity_by_geodesics(spec, &f, &opts)?),
            };
            let agree = match (&hess, &geo) {
                (Some(a), Some(b)) => Some(a.verdict == b.verdict),
                _ => None,
            };
            Ok(Output::json(json!({ "hessian": hess, "geodesic": geo, "routes_agree": agree })))
        }
        Command::Lipschitz { f, centre, centre_file, radius, pairs, method, budget, restarts } => {
            let spec = need()?;
            let method = match method {
                MethodArg::Steer => DistanceMethod::Steer,
                MethodArg::Dh => DistanceMethod::DhUpper { budget: *budget, restarts: *restarts },
            };
            let dist = DistanceOptions { method, steer: steer_opts(cli), seed: cli.seed };
            let report = lipschitz_estimate(spec, &function(f)?, &vector(centre, centre_file, "centre")?, *radius, *pairs, &dist)?;
            Ok(Output::json(json!({ "lipschitz": report })))
        }
        Command::LowerBound { f, y0, y0_file, radius, c, samples } => {
            let spec = need()?;
            let report = lower_bound_check(spec, &function(f)?, &vector(y0, y0_file, "y0")?, *radius, *c, *samples, cli.seed, cli.step)?;
            let mut csv = String::from("index,point,distance,value,ok\n");
            for (i, s) in report.samples.iter().enumerate() {
                let pt: Vec<String> = s.point.iter().map(f64::to_string).collect();
                csv.push_str(&format!("{i},{},{},{},{}\n", pt.join(" "), s.distance, s.value, s.ok));
            }
            let violations = report.violations;
            let out = Output { json: json!({ "lower_bound": report }), csv: Some(csv) };
            if violations > 0 {
                emit(cli, Some(spec), &out);
                return Err(Failure::Invariant);
            }
            Ok(out)
        }
        Command::Plan { p, p_file, q, q_file, ngon } => {
            let spec = need()?;
            if heisenberg_n(spec).is_none() {
                return Err(Failure::Usage("the planner needs a heisenberg-<n> model".into()));
            }
            let p = vector(p, p_file, "p")?;
            let q = vector(q, q_file, "q")?;
            let plan = heisenberg_plan(&p, &q, *ngon)?;
            let gap = plan.endpoint().iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let oracle = if heisenberg_n(spec) == Some(1) { Some(heisenberg_dc(&p, &q, 1e-14)?) } else { None };
            Ok(Output::json(json!({
                "length": plan.length(),
                "oracle": oracle,
                "ratio": oracle.map(|o| if o > 0.0 { plan.length() / o } else { 1.0 }),
                "gap_chart": gap,
                "segments": plan.segments.len(),
                "plan": plan,
            })))
        }
        Command::Verify { criteria } => {
            let suite = Suite { scope: spec.map_or(Scope::All, Scope::Model), seed: cli.seed };
            let ids: Vec<u8> = match criteria {
                Some(text) => indices(text)?.into_iter().map(|i| i as u8).collect(),
                None => (1..=13).collect(),
            };
            let mut reports = Vec::new();
            for id in ids {
                reports.push(suite.run(id)?);
            }
            let failed = reports.iter().any(|r| r.status == Status::Fail);
            let mut table = String::new();
            for r in &reports {
                table.push_str(&r.summary());
                table.push('\n');
                for c in &r.checks {
                    let m: Vec<String> = c.metrics.iter().map(|(k, v)| format!("{k}={}", number(*v))).collect();
                    table.push_str(&format!("       {}: {} [{}]\n", c.model, c.note, m.join(" ")));
                }
            }
            let mut csv = String::from("criterion,name,model,passed,metric,value\n");
            for r in &reports {
                for c in &r.checks {
                    for (k, v) in &c.metrics {
                        csv.push_str(&format!("{},{},{},{},{k},{v}\n", r.id, r.name, c.model, c.passed));
                    }
                }
            }
            let out = Output {
                json: json!({ "criteria": reports, "passed": !failed, "table": table }),
                csv: Some(csv),
            };
            if failed {
                emit(cli, spec, &out);
                return Err(Failure::Invariant);
            }
            Ok(out)
        }
    }
}

fn number(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.6e}")
    } else {
        format!("{v}")
    }
}

fn header(cli: &Cli, spec: Option<&StructureSpec>, model_doc: Option<&Value>) -> Value {
    let mut h = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "model": cli.model,
        "model_name": spec.map(|s| s.name.clone()),
        "seed": cli.seed,
        "step": cli.step,
        "format": cli.format.unwrap_or(Format::Json),
        "params": cli.command,
    });
    if let Some(doc) = model_doc {
        h["model_document"] = doc.clone();
    }
    if !cli.quiet_timestamps {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        h["timestamp_unix"] = json!(secs);
    }
    h
}

thread_local! {
    static MODEL_DOC: std::cell::RefCell<Option<Value>> = const { std::cell::RefCell::new(None) };
}

fn emit(cli: &Cli, spec: Option<&StructureSpec>, out: &Output) {
    let doc = MODEL_DOC.with(|d| d.borrow().clone());
    let h = header(cli, spec, doc.as_ref());
    let verify_table = matches!(cli.command, Command::Verify { .. }) && cli.format.is_none();
    match (cli.format, &out.csv) {
        (Some(Format::Csv), Some(csv)) => {
            println!("# {}", serde_json::to_string(&h).expect("header serialises"));
            print!("{csv}");
        }
        _ if verify_table => {
            println!("# {}", serde_json::to_string(&h).expect("header serialises"));
            print!("{}", out.json["table"].as_str().unwrap_or_default());
        }
        _ => {
            let doc = json!({ "config": h, "result": out.json });
            println!("{}", serde_json::to_string(&doc).expect("output serialises"));
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let loaded = match cli.model.as_deref().map(load_model).transpose() {
        Ok(l) => l,
        Err(f) => return fail(f),
    };
    let spec = loaded.as_ref().map(|(s, _)| s);
    MODEL_DOC.with(|d| *d.borrow_mut() = loaded.as_ref().and_then(|(_, doc)| doc.clone()));
    if cli.format == Some(Format::Csv) && !csv_supported(&cli.command) {
        return fail(Failure::Usage("this command has no CSV output; use --format json".into()));
    }
    match run(&cli, spec) {
        Ok(out) => {
            emit(&cli, spec, &out);
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn csv_supported(c: &Command) -> bool {
    matches!(
        c,
        Command::Growth { .. }
            | Command::Christoffel { .. }
            | Command::Geodesic { .. }
            | Command::Riemannian { .. }
            | Command::ConstraintGeodesic { .. }
            | Command::Ballbox { .. }
            | Command::LowerBound { .. }
            | Command::Verify { .. }
    )
}

fn fail(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Failure::Numerical(diag) => {
            eprintln!("{}", serde_json::to_string(&diag).expect("diagnostic serialises"));
            ExitCode::from(EXIT_NUMERICAL)
        }
        Failure::Invariant => ExitCode::from(EXIT_INVARIANT),
    }
}
