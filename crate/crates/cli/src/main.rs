//! Command line front end: branch-of-log values, canonical transport,
//! iterated integrals, polylogarithms, Frobenius-structure checks and
//! (phi,N)-module analysis.
//!
//! Exit codes: 0 success, 2 parse error, 3 precondition violation,
//! 4 precision exhaustion, 5 uniqueness failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::{json, Value};

use coleman_core::connection::{is_unipotent, local_transport, residue, LogConnection};
use coleman_core::error::{Error, Result};
use coleman_core::formexpr::parse_connection;
use coleman_core::frobenius::{check_horizontality, frobenius_structure, phi_on_psi, FrobLift};
use coleman_core::mat::Mat;
use coleman_core::padic::parse_padic;
use coleman_core::phimod::{
    canonical_element, is_mixed, is_pure, is_weakly_admissible, monodromy_filtration,
    parse_module, t_h, t_n, weight_decomposition, Basis,
};
use coleman_core::transport::{
    gm_tower, gm_tower_degenerate, iterated_integral, polylog, CurveSpec, Word,
};
use coleman_core::{plog, KstElement, PadicContext, PadicNumber};

#[derive(Parser)]
#[command(
    name = "coleman",
    about = "canonical p-adic parallel transport of unipotent connections",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print Log x as an element of K_st = K[L].
    Plog {
        #[arg(long)]
        prime: u64,
        #[arg(long)]
        precision: u32,
        /// point, as a rational or a p-adic literal
        x: String,
        #[arg(long)]
        json: bool,
    },
    /// Canonical transport matrix for a connection file.
    Transport {
        #[arg(long)]
        connection: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// expected unipotency level; checked against the residue
        #[arg(long)]
        level: Option<u32>,
        /// expansion center (rational), default 0
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Li_k(z) normalized by the convergent series at the base point.
    Polylog {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        prime: u64,
        #[arg(long)]
        precision: u32,
        z: String,
        /// base point in the residue disk of 0 (default p)
        #[arg(long)]
        base: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Iterated integral of a comma-separated word of dlog forms.
    Integrate {
        #[arg(long)]
        word: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        prime: u64,
        #[arg(long, default_value_t = 20)]
        precision: u32,
        #[arg(long)]
        json: bool,
    },
    /// Analyze a (phi,N)-module file: filtrations, weights, admissibility.
    Phimod {
        #[arg(long)]
        module: PathBuf,
        #[arg(long)]
        analyze: bool,
        #[arg(long)]
        json: bool,
    },
    /// Check the Frobenius structure of a connection file.
    Fcrystal {
        #[arg(long)]
        connection: PathBuf,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        json: bool,
    },
    /// Canonical element of the two-point transport tower on G_m.
    Tower {
        #[arg(long)]
        prime: u64,
        #[arg(long)]
        precision: u32,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 3)]
        level: usize,
        /// replace the top Frobenius by a degenerate one (fixed kernel line)
        #[arg(long)]
        degenerate: bool,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn ctx_for(prime: u64, precision: u32) -> Result<Arc<PadicContext>> {
    PadicContext::new(prime, precision)
}

/// A point given either as a rational in lowest terms or as a p-adic
/// literal in the library's display form.
fn parse_point(ctx: &Arc<PadicContext>, s: &str) -> Result<PadicNumber> {
    let s = s.trim();
    if s.contains('*') {
        return parse_padic(ctx, s);
    }
    let q: BigRational = s.parse().map_err(|_| Error::Parse {
        line: 1,
        col: 1,
        msg: format!("expected a rational or p-adic literal, got `{s}`"),
    })?;
    PadicNumber::from_rational(ctx, &q)
}

fn parse_rational(s: &str) -> Result<BigRational> {
    s.trim().parse().map_err(|_| Error::Parse {
        line: 1,
        col: 1,
        msg: format!("expected a rational, got `{s}`"),
    })
}

fn read_file(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::precondition(format!("cannot read {}: {e}", path.display())))
}

fn kst_json(v: &KstElement) -> Value {
    json!({
        "value": v.to_string(),
        "coeffs": v.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
    })
}

fn mat_kst_json(m: &Mat<KstElement>) -> Value {
    let rows: Vec<Vec<String>> = (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.at(i, j).to_string()).collect())
        .collect();
    json!(rows)
}

fn mat_padic_json(m: &Mat<PadicNumber>) -> Value {
    let rows: Vec<Vec<String>> = (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.at(i, j).to_string()).collect())
        .collect();
    json!(rows)
}

fn print_mat_kst(m: &Mat<KstElement>) {
    for i in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|j| m.at(i, j).to_string()).collect();
        println!("[ {} ]", row.join(", "));
    }
}

fn print_mat_padic(m: &Mat<PadicNumber>) {
    for i in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|j| m.at(i, j).to_string()).collect();
        println!("[ {} ]", row.join(", "));
    }
}

fn basis_json(b: &Basis) -> Value {
    let rows: Vec<Vec<String>> = b
        .iter()
        .map(|v| v.iter().map(|c| c.to_string()).collect())
        .collect();
    json!(rows)
}

fn series_trunc(precision: u32) -> usize {
    precision as usize + 32
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Plog {
            prime,
            precision,
            x,
            json,
        } => {
            let ctx = ctx_for(prime, precision)?;
            let pt = parse_point(&ctx, &x)?;
            let v = plog(&pt)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": prime,
                        "precision": precision,
                        "log": kst_json(&v),
                    })
                );
            } else {
                println!("{v}");
            }
            Ok(())
        }

        Cmd::Transport {
            connection,
            from,
            to,
            level,
            center,
            json,
        } => {
            let doc = read_file(&connection)?;
            let file = parse_connection(&doc)?;
            let ctx = ctx_for(file.prime, file.precision)?;
            let c = match center {
                Some(s) => parse_rational(&s)?,
                None => BigRational::zero(),
            };
            let trunc = series_trunc(file.precision);
            let conn = LogConnection::expand_at(&file, &c, &ctx, trunc, BigRational::one())?;
            let res = residue(&conn)?;
            let found_level = res.nilpotency_index.ok_or(Error::NonNilpotentResidue)?;
            if let Some(r) = level {
                if r < found_level {
                    return Err(Error::precondition(format!(
                        "requested level {r} is below the residue nilpotency index {found_level}"
                    )));
                }
            }
            let cpt = PadicNumber::from_rational(&ctx, &c)?;
            let x0 = parse_point(&ctx, &from)?.sub(&cpt)?;
            let x1 = parse_point(&ctx, &to)?.sub(&cpt)?;
            // purely logarithmic connections transport globally through
            // the branch homomorphism; otherwise use the canonical frame
            let pure_log = conn
                .matrix
                .iter()
                .flatten()
                .all(|w| w.regular.is_zero());
            let t = if pure_log {
                let curve = CurveSpec::gm(&ctx, res.n0.clone())?;
                coleman_core::transport::canonical_transport(&curve, &x0, &x1)?.matrix
            } else {
                local_transport(&conn, &x0, &x1)?
            };
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": file.prime,
                        "precision": file.precision,
                        "level": found_level,
                        "matrix": mat_kst_json(&t),
                    })
                );
            } else {
                println!("level {found_level} transport:");
                print_mat_kst(&t);
            }
            Ok(())
        }

        Cmd::Polylog {
            k,
            prime,
            precision,
            z,
            base,
            json,
        } => {
            let ctx = ctx_for(prime, precision)?;
            let zp = parse_point(&ctx, &z)?;
            let basep = match base {
                Some(s) => Some(parse_point(&ctx, &s)?),
                None => None,
            };
            let v = polylog(k, &zp, basep.as_ref())?;
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": prime,
                        "precision": precision,
                        "k": k,
                        "polylog": kst_json(&v),
                    })
                );
            } else {
                println!("{v}");
            }
            Ok(())
        }

        Cmd::Integrate {
            word,
            from,
            to,
            prime,
            precision,
            json,
        } => {
            let ctx = ctx_for(prime, precision)?;
            let w = Word::parse(&word)?;
            let x0 = parse_point(&ctx, &from)?;
            let x1 = parse_point(&ctx, &to)?;
            let v = iterated_integral(&ctx, &w, &x0, &x1)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": prime,
                        "precision": precision,
                        "word": word,
                        "integral": kst_json(&v),
                    })
                );
            } else {
                println!("{v}");
            }
            Ok(())
        }

        Cmd::Phimod {
            module,
            analyze: _,
            json,
        } => {
            let doc = read_file(&module)?;
            let m = parse_module(&doc)?;
            let mono = monodromy_filtration(&m.n)?;
            let gr: BTreeMap<i64, usize> = mono.gr_dims();

            let weights = match weight_decomposition(&m) {
                Ok(wd) => {
                    let dims: BTreeMap<i64, usize> =
                        wd.pieces.iter().map(|(w, b)| (*w, b.len())).collect();
                    Ok(dims)
                }
                Err(e) => Err(e.to_string()),
            };
            let purity: Vec<(i64, bool)> = match &weights {
                Ok(dims) => dims
                    .keys()
                    .map(|&i| Ok((i, is_pure(&m, i)?)))
                    .collect::<Result<_>>()?,
                Err(_) => Vec::new(),
            };
            let mixed = if m.weights.is_some() {
                match is_mixed(&m) {
                    Ok(b) => Some(b),
                    Err(_) => Some(false),
                }
            } else {
                None
            };
            let newton = t_n(&m)?;
            let hodge = if m.hodge.is_some() { Some(t_h(&m)?) } else { None };
            let adm = if m.hodge.is_some() {
                Some(is_weakly_admissible(&m, &[])?)
            } else {
                None
            };

            if json {
                let mut out = json!({
                    "dim": m.dim,
                    "h1_relation": m.has_h1_relation()?,
                    "monodromy_graded_dims": gr.iter()
                        .map(|(k, v)| (k.to_string(), *v))
                        .collect::<BTreeMap<String, usize>>(),
                    "t_N": newton.to_string(),
                });
                match &weights {
                    Ok(dims) => {
                        out["weights"] = json!(dims
                            .iter()
                            .map(|(k, v)| (k.to_string(), *v))
                            .collect::<BTreeMap<String, usize>>());
                        out["pure"] = json!(purity
                            .iter()
                            .map(|(i, b)| (i.to_string(), *b))
                            .collect::<BTreeMap<String, bool>>());
                    }
                    Err(e) => out["weights_error"] = json!(e),
                }
                if let Some(b) = mixed {
                    out["mixed"] = json!(b);
                }
                if let Some(th) = hodge {
                    out["t_H"] = json!(th);
                }
                if let Some((ok, witness)) = &adm {
                    out["weakly_admissible"] = json!(ok);
                    if let Some(w) = witness {
                        out["violating_subobject"] = basis_json(w);
                    }
                }
                println!("{out}");
            } else {
                println!("dimension: {}", m.dim);
                println!("N phi = p phi N: {}", m.has_h1_relation()?);
                let grs: Vec<String> =
                    gr.iter().map(|(k, v)| format!("gr_{k} = {v}")).collect();
                println!("monodromy graded dims: {}", grs.join(", "));
                match &weights {
                    Ok(dims) => {
                        let ws: Vec<String> = dims
                            .iter()
                            .map(|(k, v)| format!("weight {k} (dim {v})"))
                            .collect();
                        println!("Frobenius weights: {}", ws.join(", "));
                        for (i, b) in &purity {
                            println!("pure of weight {i}: {b}");
                        }
                    }
                    Err(e) => println!("Frobenius weights: not determined ({e})"),
                }
                if let Some(b) = mixed {
                    println!("mixed (weight filtration with pure gradeds): {b}");
                }
                println!("t_N = {newton}");
                if let Some(th) = hodge {
                    println!("t_H = {th}");
                }
                if let Some((ok, witness)) = &adm {
                    println!("weakly admissible: {ok}");
                    if let Some(w) = witness {
                        println!("violating subobject basis:");
                        for v in w {
                            let row: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                            println!("  [ {} ]", row.join(", "));
                        }
                    }
                }
            }
            Ok(())
        }

        Cmd::Fcrystal {
            connection,
            check: _,
            json,
        } => {
            let doc = read_file(&connection)?;
            let file = parse_connection(&doc)?;
            let ctx = ctx_for(file.prime, file.precision)?;
            let trunc = series_trunc(file.precision);
            let conn = LogConnection::expand_at(
                &file,
                &BigRational::zero(),
                &ctx,
                trunc,
                BigRational::one(),
            )?;
            let (unip, level) = is_unipotent(&conn)?;
            if !unip {
                return Err(Error::NonNilpotentResidue);
            }
            let lift =
                FrobLift::from_rational(&file.frobenius_lift, &ctx, trunc, BigRational::one())?;
            let seed = graded_seed(&ctx, &residue(&conn)?.n0)?;
            let cr = frobenius_structure(&conn, &lift, seed)?;
            let deficit = check_horizontality(&cr)?;
            let pp = phi_on_psi(&cr)?;
            let p_num = PadicNumber::from_i64(&ctx, ctx.p as i64);
            let lhs = pp.n_psi.mul(&pp.matrix)?;
            let rhs = pp
                .matrix
                .mul(&pp.n_psi.map(|c| c.frobenius()))?
                .scale(&p_num)?;
            let relation = lhs.sub(&rhs)?.is_zero();
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": file.prime,
                        "precision": file.precision,
                        "level": level,
                        "horizontality_deficit": deficit,
                        "phi_psi": mat_padic_json(&pp.matrix),
                        "n_psi": mat_padic_json(&pp.n_psi),
                        "h1_relation": relation,
                    })
                );
            } else {
                println!("unipotency level: {level}");
                println!("horizontality deficit (valuation): {deficit}");
                println!("phi on nearby cycles:");
                print_mat_padic(&pp.matrix);
                println!("N on nearby cycles:");
                print_mat_padic(&pp.n_psi);
                println!("N phi = p phi sigma(N): {relation}");
            }
            Ok(())
        }

        Cmd::Tower {
            prime,
            precision,
            from,
            to,
            level,
            degenerate,
            json,
        } => {
            let ctx = ctx_for(prime, precision)?;
            let x0 = parse_point(&ctx, &from)?;
            let x1 = parse_point(&ctx, &to)?;
            let tower = if degenerate {
                gm_tower_degenerate(&x0, &x1, level)?
            } else {
                gm_tower(&x0, &x1, level)?
            };
            let v = canonical_element(&tower)?;
            if json {
                println!(
                    "{}",
                    json!({
                        "prime": prime,
                        "precision": precision,
                        "level": level,
                        "canonical_element": v.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                    })
                );
            } else {
                let row: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                println!("[ {} ]", row.join(", "));
            }
            Ok(())
        }
    }
}

/// Graded Frobenius seed for a nilpotent residue: a diagonal
/// diag(p^{k_i}) with k_j = k_i + 1 for every nonzero entry N0[i][j],
/// found by propagation over the support graph.
fn graded_seed(ctx: &Arc<PadicContext>, n0: &Mat<PadicNumber>) -> Result<Mat<PadicNumber>> {
    let r = n0.rows;
    let mut k: Vec<Option<i64>> = vec![None; r];
    let edges: Vec<(usize, usize)> = (0..r)
        .flat_map(|i| (0..r).map(move |j| (i, j)))
        .filter(|&(i, j)| !n0.at(i, j).is_zero())
        .collect();
    for start in 0..r {
        if k[start].is_some() {
            continue;
        }
        k[start] = Some(0);
        let mut queue = vec![start];
        while let Some(v) = queue.pop() {
            let kv = k[v].unwrap();
            for &(i, j) in &edges {
                // constraint k_j = k_i + 1
                let (other, val) = if i == v {
                    (j, kv + 1)
                } else if j == v {
                    (i, kv - 1)
                } else {
                    continue;
                };
                match k[other] {
                    None => {
                        k[other] = Some(val);
                        queue.push(other);
                    }
                    Some(existing) if existing != val => {
                        return Err(Error::precondition(
                            "no graded Frobenius seed: residue support has inconsistent cycles",
                        ));
                    }
                    _ => {}
                }
            }
        }
    }
    let min = k.iter().map(|v| v.unwrap_or(0)).min().unwrap_or(0);
    let p = PadicNumber::from_i64(ctx, ctx.p as i64);
    let zero = PadicNumber::zero(ctx);
    let mut seed = Mat::zero(r, r, &zero);
    for i in 0..r {
        let e = (k[i].unwrap_or(0) - min) as u64;
        seed.set(i, i, p.pow_u64(e)?);
    }
    Ok(seed)
}
