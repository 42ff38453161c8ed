//! `mcalc` — one-shot commands over the matrix-calculus engine.
//!
//! Subcommands: `diff`, `grad`, `hess` (symbolic derivatives of a parsed
//! expression), `expand` (order-k operator expansion of `D^k(f∘g)`),
//! `verify` (finite-difference verification stream), and `counterexample`
//! (the Gâteaux-but-not-Fréchet demonstration).
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/parse error.

use clap::{Parser, Subcommand, ValueEnum};
use mcalc_core::expr::{
    dir_name, eval_scalar, evaluate, expr_to_json, format_expr, format_expr_latex, parse,
    parse_decls, Decls, Env, Expr, MatExpr, Role, Value,
};
use mcalc_core::frechet::{d, gradient, hessian, HessianOperator};
use mcalc_core::numcheck::{
    counterexample_demo, fd_step_first, fd_step_second, stream_seed, Verdict, VerifyReport,
};
use mcalc_core::opcalc::{
    expand_composition, format_op_sum, format_op_sum_latex, op_sum_to_json, FuncSymbol,
};
use nalgebra::DMatrix;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mcalc", version, about = "Coordinate-free matrix calculus")]
struct Cli {
    /// Symbol declaration NAME:RxC:{const|var|dir}; repeatable.
    /// Defaults add A, B as 3x3 constants and X as a 3x3 variable.
    #[arg(long, global = true, value_name = "DECL")]
    sym: Vec<String>,

    /// Seed for all sampled randomness.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Latex,
}

#[derive(Subcommand)]
enum Cmd {
    /// Directional derivative of order k (directions Z, T, Z3).
    Diff {
        expr: String,
        #[arg(long)]
        wrt: String,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=3))]
        order: u32,
    },
    /// Gradient under the trace inner product.
    Grad {
        expr: String,
        #[arg(long)]
        wrt: String,
    },
    /// Hessian operator T -> H(T).
    Hess {
        expr: String,
        #[arg(long)]
        wrt: String,
    },
    /// Order-k expansion of D^k(f∘g) in the operator calculus.
    Expand {
        #[arg(value_parser = clap::value_parser!(u32).range(1..=6))]
        k: u32,
    },
    /// Verify symbolic derivatives against finite differences.
    Verify {
        expr: String,
        #[arg(long)]
        wrt: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// First-order tolerance override (default 1e-6).
        #[arg(long)]
        tol: Option<f64>,
        /// Test hook: corrupt the symbolic derivative by this relative amount.
        #[arg(long)]
        perturb: Option<f64>,
        /// Square variables to sample symmetric positive definite; repeatable.
        #[arg(long)]
        spd: Vec<String>,
    },
    /// Demonstrate a function with zero directional derivatives that is not
    /// Fréchet differentiable at the origin.
    Counterexample {
        #[arg(long, default_value_t = 1000)]
        n_max: usize,
    },
}

fn main() -> ExitCode {
    // Die silently on a closed pipe, like other line-oriented tools.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn session_decls(cli: &Cli) -> Result<Decls, String> {
    let mut decls = parse_decls(&cli.sym).map_err(|e| e.to_string())?;
    for default in ["A:3x3:const", "B:3x3:const", "X:3x3:var"] {
        let name = default.split(':').next().unwrap();
        if decls.get(name).is_none() {
            decls
                .insert(
                    parse_decls(&[default.to_string()])
                        .map_err(|e| e.to_string())?
                        .iter()
                        .next()
                        .unwrap()
                        .clone(),
                )
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(decls)
}

fn parse_input(text: &str, decls: &Decls) -> Result<Expr, String> {
    parse(text, decls).map_err(|e| e.to_string())
}

fn require_var(decls: &Decls, wrt: &str) -> Result<(), String> {
    match decls.get(wrt) {
        Some(d) if d.role == Role::Var => Ok(()),
        Some(_) => Err(format!("{wrt} is not declared as a variable")),
        None => Err(format!("{wrt} is not declared")),
    }
}

fn print_expr(e: &Expr, format: Format) -> Result<(), String> {
    match format {
        Format::Text => println!("{}", format_expr(e)),
        Format::Latex => println!("{}", format_expr_latex(e)),
        Format::Json => {
            let v = expr_to_json(e).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string(&v).expect("json"));
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.cmd {
        Cmd::Diff { expr, wrt, order } => {
            let decls = session_decls(cli)?;
            require_var(&decls, wrt)?;
            let mut e = parse_input(expr, &decls)?;
            for k in 1..=*order {
                e = d(&e, wrt, k as usize).map_err(|e| e.to_string())?.expr;
            }
            print_expr(&e, cli.format)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Grad { expr, wrt } => {
            let decls = session_decls(cli)?;
            require_var(&decls, wrt)?;
            let e = parse_input(expr, &decls)?;
            let Expr::Scalar(f) = e else {
                return Err("grad requires a scalar-valued expression".to_string());
            };
            let g = gradient(&f, wrt).map_err(|e| e.to_string())?;
            print_expr(&Expr::Mat(g), cli.format)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Hess { expr, wrt } => {
            let decls = session_decls(cli)?;
            require_var(&decls, wrt)?;
            let e = parse_input(expr, &decls)?;
            let Expr::Scalar(f) = e else {
                return Err("hess requires a scalar-valued expression".to_string());
            };
            let h = hessian(&f, wrt).map_err(|e| e.to_string())?;
            match cli.format {
                Format::Text => println!("T ↦ {}", format_expr(&Expr::Mat(h.expr))),
                Format::Latex => {
                    println!("T \\mapsto {}", format_expr_latex(&Expr::Mat(h.expr)))
                }
                Format::Json => {
                    let v = expr_to_json(&Expr::Mat(h.expr)).map_err(|e| e.to_string())?;
                    println!("{}", serde_json::to_string(&v).expect("json"));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Expand { k } => {
            let f = FuncSymbol::new("f", "V", "W");
            let g = FuncSymbol::new("g", "U", "V");
            let sum = expand_composition(&f, &g, *k).map_err(|e| e.to_string())?;
            match cli.format {
                Format::Text => println!("{}", format_op_sum(&sum)),
                Format::Latex => println!("{}", format_op_sum_latex(&sum)),
                Format::Json => {
                    println!(
                        "{}",
                        serde_json::to_string(&op_sum_to_json(&sum)).expect("json")
                    )
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify {
            expr,
            wrt,
            samples,
            tol,
            perturb,
            spd,
        } => {
            let decls = session_decls(cli)?;
            require_var(&decls, wrt)?;
            let e = parse_input(expr, &decls)?;
            let reports = run_verify(&decls, &e, wrt, *samples, cli.seed, *tol, *perturb, spd)?;
            let mut all_pass = true;
            for r in &reports {
                all_pass &= r.passed();
                match cli.format {
                    Format::Json => println!("{}", r.to_json_line()),
                    _ => println!(
                        "{}: {} (estimate {:.6e}, reference {:.6e}, rel {:.3e}, tol {:.1e})",
                        r.name,
                        if r.passed() { "PASS" } else { "FAIL" },
                        r.estimate,
                        r.reference,
                        r.rel_error,
                        r.tolerance
                    ),
                }
            }
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Counterexample { n_max } => {
            let reports = counterexample_demo(*n_max, cli.seed).map_err(|e| e.to_string())?;
            let mut all_pass = true;
            for r in &reports {
                all_pass &= r.passed();
                match cli.format {
                    Format::Json => println!("{}", r.to_json_line()),
                    _ => println!(
                        "{}: {} (estimate {:.6e}, reference {:.6e}, tol {:.1e})",
                        r.name,
                        if r.passed() { "PASS" } else { "FAIL" },
                        r.estimate,
                        r.reference,
                        r.tolerance
                    ),
                }
            }
            if all_pass {
                println!(
                    "directional derivatives at the origin all vanish (linear Gâteaux \
                     derivative 0) yet the remainder ratio tends to 1: no Fréchet derivative"
                );
            }
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_verify(
    decls: &Decls,
    e: &Expr,
    wrt: &str,
    samples: usize,
    seed: u64,
    tol: Option<f64>,
    perturb: Option<f64>,
    spd: &[String],
) -> Result<Vec<VerifyReport>, String> {
    let tol1 = tol.unwrap_or(1e-6);
    let tol2 = 1e-4;
    let var_shape = decls.get(wrt).expect("checked").shape;
    let mut eval_decls = decls.clone();
    eval_decls
        .declare_directions(var_shape, 2)
        .map_err(|e| e.to_string())?;

    let d1 = d(e, wrt, 1).map_err(|e| e.to_string())?;
    let (grad, hess_op): (Option<MatExpr>, Option<HessianOperator>) = match e {
        Expr::Scalar(f) => (gradient(f, wrt).ok(), hessian(f, wrt).ok()),
        Expr::Mat(_) => (None, None),
    };

    let mut reports = Vec::new();
    for i in 0..samples {
        let sample_seed = stream_seed(seed, i as u64);
        let env = Env::random(&eval_decls, spd, sample_seed);
        let x0 = env.get(wrt).expect("bound").clone();
        let z = env.get(&dir_name(1)).expect("bound").clone();
        let t = env.get(&dir_name(2)).expect("bound").clone();
        let h = fd_step_first(x0.norm());

        let sym = evaluate(&d1.expr, &env).map_err(|e| e.to_string())?;
        match (&sym, e) {
            (Value::Scalar(reference), Expr::Scalar(f)) => {
                let mut reference = *reference;
                if let Some(eps) = perturb {
                    reference += eps * (1.0 + reference.abs());
                }
                let at = |x: &DMatrix<f64>| {
                    eval_scalar(f, &env.with_bound(wrt, x.clone())).map_err(|e| e.to_string())
                };
                let estimate = (at(&(&x0 + &z * h))? - at(&(&x0 - &z * h))?) / (2.0 * h);
                reports.push(
                    VerifyReport::compare(
                        &format!("fd[{i}]"),
                        estimate,
                        reference,
                        tol1,
                        sample_seed,
                    )
                    .with_h(h)
                    .with_dims(&[var_shape.rows, var_shape.cols]),
                );
            }
            (Value::Matrix(reference), Expr::Mat(m)) => {
                let mut reference = reference.clone();
                if let Some(eps) = perturb {
                    reference.apply(|v| *v += eps * (1.0 + v.abs()));
                }
                let at = |x: &DMatrix<f64>| -> Result<DMatrix<f64>, String> {
                    match evaluate(&Expr::Mat(m.clone()), &env.with_bound(wrt, x.clone())) {
                        Ok(Value::Matrix(v)) => Ok(v),
                        Ok(Value::Scalar(_)) => unreachable!(),
                        Err(e) => Err(e.to_string()),
                    }
                };
                let fd = (at(&(&x0 + &z * h))? - at(&(&x0 - &z * h))?) / (2.0 * h);
                let rel = (&fd - &reference).norm() / (1.0 + reference.norm());
                reports.push(
                    VerifyReport::compare(&format!("fd[{i}]"), rel, 0.0, tol1, sample_seed)
                        .with_h(h)
                        .with_dims(&[var_shape.rows, var_shape.cols]),
                );
            }
            _ => unreachable!("derivative preserves sort"),
        }

        if let (Some(g), Expr::Scalar(_)) = (&grad, e) {
            let Value::Scalar(dval) = evaluate(&d1.expr, &env).map_err(|e| e.to_string())? else {
                unreachable!()
            };
            let ip = mcalc_core::frechet::inner_product_form(g, 1, var_shape);
            let gval = eval_scalar(&ip, &env).map_err(|e| e.to_string())?;
            reports.push(VerifyReport::compare(
                &format!("grad_consistency[{i}]"),
                gval,
                dval,
                1e-10,
                sample_seed,
            ));
        }

        if let Some(hop) = &hess_op {
            let bilinear = |zm: &DMatrix<f64>, tm: &DMatrix<f64>| -> Result<f64, String> {
                let env = env
                    .with_bound(&dir_name(1), zm.clone())
                    .with_bound(&dir_name(2), tm.clone());
                match evaluate(&Expr::Mat(hop.expr.clone()), &env) {
                    Ok(Value::Matrix(hval)) => Ok((zm.transpose() * hval).trace()),
                    Ok(Value::Scalar(_)) => unreachable!(),
                    Err(e) => Err(e.to_string()),
                }
            };
            let bzt = bilinear(&z, &t)?;
            let btz = bilinear(&t, &z)?;
            let sym_err = (bzt - btz).abs();
            let sym_pass = sym_err <= 1e-8 * (1.0 + bzt.abs());
            reports.push(VerifyReport {
                name: format!("hess_symmetry[{i}]"),
                estimate: bzt,
                reference: btz,
                abs_error: sym_err,
                rel_error: sym_err / (1.0 + bzt.abs()),
                tolerance: 1e-8,
                verdict: if sym_pass {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                seed: sample_seed,
                h: None,
                dims: vec![var_shape.rows, var_shape.cols],
            });

            if let Expr::Scalar(f) = e {
                let h2 = fd_step_second(x0.norm());
                let at = |s: f64, u: f64| -> Result<f64, String> {
                    eval_scalar(f, &env.with_bound(wrt, &x0 + &t * s + &z * u))
                        .map_err(|e| e.to_string())
                };
                let stencil =
                    (at(h2, h2)? - at(h2, -h2)? - at(-h2, h2)? + at(-h2, -h2)?) / (4.0 * h2 * h2);
                reports.push(
                    VerifyReport::compare(
                        &format!("hess_fd[{i}]"),
                        stencil,
                        bzt,
                        tol2,
                        sample_seed,
                    )
                    .with_h(h2),
                );
            }
        }
    }
    Ok(reports)
}
