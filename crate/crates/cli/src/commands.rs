use std::path::Path;

use spdekit::assembly::FemMatrices;
use spdekit::fractional::build_fractional;
use spdekit::inference::{
    condition, fit_theta, flat_prior, posterior_marginals, predict, FitOptions, GaussianPrior,
    HyperParams, StationaryBuilder,
};
use spdekit::io;
use spdekit::mesh::{load_mesh, Mesh};
use spdekit::non_gaussian::{
    sample_mixing, sample_type_g_field, MixingFamily, TypeGField, TypeGNoise,
};
use spdekit::oracles::{matern_sigma2, tau_for_variance};
use spdekit::pointprocess::{lgcp_fit_eta, simulate_lgcp, NewtonOptions, PointPattern};
use spdekit::precision::{
    build_precision, build_spacetime_precision_capped, FieldModel, SpaceTimeModel,
};
use spdekit::rng::derive_seed;
use spdekit::sparse::matrix_market::{write_general, write_symmetric};
use spdekit::sparse::{CholeskyFactor, Ordering, SparseSymMatrix};
use spdekit::validation::{run_suite_report, SUITES};

use crate::error::CliError;
use crate::output::{file_name, read_text, Artifacts};
use crate::{Command, Family, ModelArgs};

type Result<T> = std::result::Result<T, CliError>;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn builtin_mesh(generator: &str) -> Result<Mesh> {
    let parts: Vec<&str> = generator.split(':').collect();
    let nums = |expected: usize| -> Result<Vec<f64>> {
        if parts.len() != expected + 1 {
            return Err(config(format!(
                "mesh generator '{generator}' expects {expected} parameters"
            )));
        }
        parts[1..]
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| config(format!("invalid number '{p}' in '{generator}'")))
            })
            .collect()
    };
    let count = |x: f64| -> Result<usize> {
        if x.fract() == 0.0 && x >= 0.0 {
            Ok(x as usize)
        } else {
            Err(config(format!("'{x}' is not a count in '{generator}'")))
        }
    };
    let mesh = match parts[0] {
        "unit-square" => Mesh::unit_square(count(nums(1)?[0])?)?,
        "rectangle" => {
            let v = nums(6)?;
            Mesh::rectangle(v[0], v[1], v[2], v[3], count(v[4])?, count(v[5])?)?
        }
        "interval" => {
            let v = nums(3)?;
            Mesh::interval(v[0], v[1], count(v[2])?)?
        }
        "icosphere" => Mesh::icosphere(count(nums(1)?[0])?)?,
        other => return Err(config(format!("unknown mesh generator '{other}'"))),
    };
    Ok(mesh)
}

fn load_mesh_arg(arg: &str) -> Result<Mesh> {
    match arg.strip_prefix("builtin:") {
        Some(generator) => builtin_mesh(generator),
        None => Ok(load_mesh(&read_text(Path::new(arg))?)?),
    }
}

fn vertex_file(path: &Path, n: usize) -> Result<Vec<f64>> {
    Ok(io::read_vertex_values(&read_text(path)?, n)?)
}

/// Mesh and model from the shared flags.
fn resolve_model(args: &ModelArgs) -> Result<(Mesh, FieldModel)> {
    let mesh = load_mesh_arg(&args.mesh)?;
    let n = mesh.n_vertices();
    let d = mesh.dimension() as f64;
    let nu = args.alpha - d / 2.0;
    let kappa = match (args.kappa, args.range, &args.kappa_file) {
        (Some(k), None, None) => vec![k; n],
        (None, Some(r), None) => {
            if !(nu > 0.0 && r > 0.0) {
                return Err(config("--range needs alpha > d/2 and a positive range"));
            }
            vec![(8.0 * nu).sqrt() / r; n]
        }
        (None, None, Some(path)) => vertex_file(path, n)?,
        _ => {
            return Err(config(
                "give exactly one of --kappa, --range or --kappa-file",
            ))
        }
    };
    let tau = match (args.tau, args.sigma2, &args.tau_file) {
        (Some(t), None, None) => vec![t; n],
        (None, Some(s2), None) => {
            if kappa.iter().any(|k| *k != kappa[0]) {
                return Err(config("--sigma2 needs a constant kappa"));
            }
            vec![tau_for_variance(kappa[0], args.alpha, mesh.dimension(), s2)?; n]
        }
        (None, None, Some(path)) => vertex_file(path, n)?,
        (None, None, None) => vec![1.0; n],
        _ => return Err(config("give at most one of --tau, --sigma2 or --tau-file")),
    };
    let model = FieldModel::nonstationary(&mesh, args.alpha, kappa, tau)?;
    Ok((mesh, model))
}

fn integer_precision(model: &FieldModel, fem: &FemMatrices) -> Result<SparseSymMatrix> {
    if !model.is_integer_alpha() {
        return Err(config(format!(
            "alpha = {} is fractional; use the fractional subcommand",
            model.alpha
        )));
    }
    Ok(build_precision(model, fem)?)
}

fn stats(q: &SparseSymMatrix, factor: &CholeskyFactor) -> String {
    let text = factor.stats_text();
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    format!("{first}\nnnz={}\n{rest}", q.nnz_full())
}

fn replicate_names(count: u64) -> Vec<String> {
    (0..count).map(|r| format!("sample_{r}")).collect()
}

fn table(names: &[String], columns: &[Vec<f64>]) -> String {
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    io::write_vertex_table(&names, &cols)
}

fn check_replicates(r: u64) -> Result<()> {
    if r == 0 {
        return Err(config("--replicates must be at least 1"));
    }
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Assemble { model, fem, out } => assemble(&model, fem, &out),
        Command::Sample {
            model,
            order,
            seed,
            replicates,
            out,
        } => sample(&model, order, seed, replicates, &out),
        Command::Krige {
            model,
            obs,
            noise_precision,
            prior_mean,
            predict,
            out,
        } => krige(
            &model,
            &obs,
            noise_precision,
            prior_mean,
            predict.as_deref(),
            &out,
        ),
        Command::Fit {
            model,
            obs,
            tau_e,
            prior_sd,
            max_iter,
            tol,
            out,
        } => fit(&model, &obs, tau_e, prior_sd, max_iter, tol, &out),
        Command::Spacetime {
            model,
            time_steps,
            phi,
            h_t,
            damping,
            cap,
            samples,
            seed,
            out,
        } => spacetime(
            &model,
            time_steps,
            phi,
            h_t.zip(damping),
            cap,
            samples,
            seed,
            &out,
        ),
        Command::LgcpSim {
            mesh,
            eta,
            eta_file,
            seed,
            replicates,
            out,
        } => lgcp_sim(&mesh, eta, eta_file.as_deref(), seed, replicates, &out),
        Command::LgcpFit {
            model,
            pattern,
            prior_mean,
            max_iter,
            out,
        } => lgcp_fit(&model, &pattern, prior_mean, max_iter, &out),
        Command::Fractional {
            model,
            order,
            samples,
            seed,
            out,
        } => fractional(&model, order, samples, seed, &out),
        Command::TypegSample {
            model,
            family,
            mixing,
            gamma,
            mu,
            sigma,
            seed,
            replicates,
            out,
        } => {
            let family = match family {
                Family::Nig => MixingFamily::Nig { eta: mixing },
                Family::Gal => MixingFamily::Gal { nu: mixing },
            };
            let noise = TypeGNoise::new(family, gamma, mu, sigma)?;
            typeg_sample(&model, noise, seed, replicates, &out)
        }
        Command::Validate { suite, out } => validate(&suite, out.as_deref()),
    }
}

fn assemble(args: &ModelArgs, write_fem: bool, out: &Path) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    let q = integer_precision(&model, &fem)?;
    let factor = CholeskyFactor::factorize(&q, Ordering::Amd)?;
    let mut art = Artifacts::beside(out)?;
    art.write(&file_name(out)?, &write_symmetric(&q))?;
    let s = stats(&q, &factor);
    art.write("stats.txt", &s)?;
    if write_fem {
        art.write("C.mtx", &write_symmetric(&fem.c_consistent))?;
        art.write(
            "C_lumped.mtx",
            &write_symmetric(&SparseSymMatrix::diagonal(&fem.c_lumped)),
        )?;
        art.write("G.mtx", &write_symmetric(&fem.g))?;
    }
    art.finish()?;
    print!("{s}");
    Ok(())
}

fn sample(args: &ModelArgs, order: usize, seed: u64, replicates: u64, out: &Path) -> Result<()> {
    check_replicates(replicates)?;
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    let draws: Vec<Vec<f64>> = if model.is_integer_alpha() {
        let factor = CholeskyFactor::factorize(&build_precision(&model, &fem)?, Ordering::Amd)?;
        (0..replicates)
            .map(|r| factor.sample(derive_seed(seed, r)))
            .collect()
    } else {
        let op = build_fractional(&model, &fem, order)?;
        (0..replicates)
            .map(|r| op.sample(derive_seed(seed, r)))
            .collect()
    };
    let mut art = Artifacts::beside(out)?;
    art.write(
        &file_name(out)?,
        &table(&replicate_names(replicates), &draws),
    )?;
    art.finish()?;
    println!(
        "n={}\nreplicates={replicates}\nseed={seed}",
        mesh.n_vertices()
    );
    Ok(())
}

fn krige(
    args: &ModelArgs,
    obs_path: &Path,
    noise_precision: f64,
    prior_mean: f64,
    predict_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    let q = integer_precision(&model, &fem)?;
    let obs = io::read_observations(&read_text(obs_path)?, noise_precision)?;
    let a = mesh.evaluate_basis(&obs.locations);
    let mu = vec![prior_mean; mesh.n_vertices()];
    let post = condition(&q, &mu, &a, &obs)?;
    let (mean, sd) = posterior_marginals(&post);
    let mut art = Artifacts::beside(out)?;
    let vertex_table = io::write_vertex_table(&["mean", "sd"], &[&mean, &sd]);
    match predict_path {
        Some(path) => {
            let points = io::read_points(&read_text(path)?)?;
            let pred = predict(&post, &mesh, &points);
            let exterior = pred.exterior.iter().filter(|e| **e).count();
            if exterior > 0 {
                eprintln!("spdekit: {exterior} prediction point(s) outside the mesh are flagged");
            }
            art.write(
                &file_name(out)?,
                &io::write_predictions(&points, &pred, mesh.kind().coords()),
            )?;
            art.write("posterior.csv", &vertex_table)?;
        }
        None => art.write(&file_name(out)?, &vertex_table)?,
    }
    art.finish()?;
    println!("n={}\nobservations={}", mesh.n_vertices(), obs.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    args: &ModelArgs,
    obs_path: &Path,
    tau_e: f64,
    prior_sd: Option<f64>,
    max_iter: usize,
    tol: f64,
    out: &Path,
) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    if !model.is_stationary() {
        return Err(config("fit supports stationary models only"));
    }
    if !model.is_integer_alpha() {
        return Err(config("fit needs an integer alpha"));
    }
    if !(tau_e > 0.0) {
        return Err(config("--tau-e must be positive"));
    }
    let fem = model.assemble(&mesh)?;
    let obs = io::read_observations(&read_text(obs_path)?, 1.0)?;
    let a = mesh.evaluate_basis(&obs.locations);
    let a = a.interior()?;
    let builder = StationaryBuilder {
        mesh: &mesh,
        fem: &fem,
        alpha: model.alpha,
    };
    let init = HyperParams::new(model.kappa[0].ln(), model.tau[0].ln(), tau_e.ln());
    let options = FitOptions {
        max_iterations: max_iter,
        tolerance: tol,
        ..FitOptions::default()
    };
    let result = match prior_sd {
        Some(sd) => {
            if !(sd > 0.0) {
                return Err(config("--prior-sd must be positive"));
            }
            let prior = GaussianPrior {
                mean: init.to_vec(),
                sd: vec![sd; 3],
            };
            fit_theta(
                &builder,
                a,
                &obs.values,
                &init,
                &|t| prior.log_density(t),
                &options,
            )?
        }
        None => fit_theta(&builder, a, &obs.values, &init, &flat_prior, &options)?,
    };
    let theta = &result.theta;
    let d = mesh.dimension();
    let nu = model.alpha - d as f64 / 2.0;
    let mut text = theta.to_text();
    text.push_str(&format!(
        "kappa={:.16e}\ntau={:.16e}\ntau_e={:.16e}\n",
        theta.kappa(),
        theta.tau(),
        theta.log_tau_e.exp()
    ));
    if nu > 0.0 {
        text.push_str(&format!(
            "sigma2={:.16e}\nrange={:.16e}\n",
            matern_sigma2(theta.kappa(), theta.tau(), model.alpha, d)?,
            (8.0 * nu).sqrt() / theta.kappa()
        ));
    }
    text.push_str(&format!(
        "log_posterior={:.16e}\nconverged={}\niterations={}\nevaluations={}\n",
        result.log_posterior,
        result.converged,
        result.iterations,
        result.trace.len()
    ));
    if !result.converged {
        eprintln!(
            "spdekit: optimiser stopped after {} iterations without converging",
            result.iterations
        );
    }
    let mut art = Artifacts::beside(out)?;
    art.write(&file_name(out)?, &text)?;
    art.write("trace.txt", &result.trace_text())?;
    art.finish()?;
    print!("{text}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn spacetime(
    args: &ModelArgs,
    time_steps: usize,
    phi: Option<f64>,
    dynamics: Option<(f64, f64)>,
    cap: usize,
    samples: u64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    integer_precision(&model, &fem)?;
    let st = match (phi, dynamics) {
        (Some(phi), None) => SpaceTimeModel::from_phi(model, time_steps, phi)?,
        (None, Some((h_t, damping))) => SpaceTimeModel::new(model, time_steps, h_t, damping)?,
        _ => return Err(config("give --phi, or both --h-t and --damping")),
    };
    let q = build_spacetime_precision_capped(&st, &fem, cap)?;
    let factor = CholeskyFactor::factorize(&q, Ordering::Amd)?;
    let mut art = Artifacts::beside(out)?;
    art.write(&file_name(out)?, &write_symmetric(&q))?;
    let s = format!(
        "time_steps={time_steps}\nphi={:.16e}\n{}",
        st.phi(),
        stats(&q, &factor)
    );
    art.write("stats.txt", &s)?;
    if samples > 0 {
        let n = mesh.n_vertices();
        let draws: Vec<Vec<f64>> = (0..samples)
            .map(|r| factor.sample(derive_seed(seed, r)))
            .collect();
        let mut text = format!("t,vertex,{}\n", replicate_names(samples).join(","));
        for k in 0..q.n() {
            let vals: Vec<String> = draws.iter().map(|d| format!("{:.16e}", d[k])).collect();
            text.push_str(&format!("{},{},{}\n", k / n, k % n, vals.join(",")));
        }
        art.write("samples.csv", &text)?;
    }
    art.finish()?;
    print!("{s}");
    Ok(())
}

fn lgcp_sim(
    mesh_arg: &str,
    eta: Option<f64>,
    eta_file: Option<&Path>,
    seed: u64,
    replicates: u64,
    out: &Path,
) -> Result<()> {
    check_replicates(replicates)?;
    let mesh = load_mesh_arg(mesh_arg)?;
    let n = mesh.n_vertices();
    let eta = match (eta, eta_file) {
        (Some(e), None) => vec![e; n],
        (None, Some(p)) => vertex_file(p, n)?,
        _ => return Err(config("give --eta or --eta-file")),
    };
    let dim = mesh.kind().coords();
    let coords = ["x", "y", "z"][..dim].join(",");
    let mut text = format!("replicate,{coords}\n");
    let mut counts = Vec::new();
    for r in 0..replicates {
        let pattern = simulate_lgcp(&eta, &mesh, derive_seed(seed, r))?;
        counts.push(pattern.len());
        for p in &pattern.points {
            let c: Vec<String> = p[..dim].iter().map(|v| format!("{v:.16e}")).collect();
            text.push_str(&format!("{r},{}\n", c.join(",")));
        }
    }
    let mut art = Artifacts::beside(out)?;
    art.write(&file_name(out)?, &text)?;
    art.finish()?;
    let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
    println!("counts={}", counts.join(","));
    Ok(())
}

fn lgcp_fit(
    args: &ModelArgs,
    pattern_path: &Path,
    prior_mean: Option<f64>,
    max_iter: usize,
    out: &Path,
) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    let q = integer_precision(&model, &fem)?;
    let pattern = PointPattern::new(io::read_points(&read_text(pattern_path)?)?);
    let mean = match prior_mean {
        Some(m) => m,
        None if pattern.is_empty() => {
            return Err(config("empty pattern: give --prior-mean explicitly"));
        }
        None => (pattern.len() as f64 / mesh.total_measure()).ln(),
    };
    let options = NewtonOptions {
        max_iterations: max_iter,
        ..NewtonOptions::default()
    };
    let fit = lgcp_fit_eta(
        &q,
        &vec![mean; mesh.n_vertices()],
        &mesh,
        &pattern,
        &options,
    )?;
    let sd = fit.marginal_sd();
    let mut art = Artifacts::beside(out)?;
    art.write(
        &file_name(out)?,
        &io::write_vertex_table(&["mode", "sd"], &[&fit.eta, &sd]),
    )?;
    let summary = format!(
        "points={}\nprior_mean={mean:.16e}\niterations={}\nobjective={:.16e}\n",
        pattern.len(),
        fit.iterations,
        fit.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    art.write("summary.txt", &summary)?;
    art.finish()?;
    print!("{summary}");
    Ok(())
}

fn fractional(args: &ModelArgs, order: usize, samples: u64, seed: u64, out: &Path) -> Result<()> {
    let (mesh, model) = resolve_model(args)?;
    let fem = model.assemble(&mesh)?;
    let op = build_fractional(&model, &fem, order)?;
    let mut art = Artifacts::beside(out)?;
    let header = op.header_text();
    art.write(&file_name(out)?, &header)?;
    art.write("P.mtx", &write_general(&op.p))?;
    art.write("Qx.mtx", &write_symmetric(&op.q_x))?;
    if samples > 0 {
        let draws: Vec<Vec<f64>> = (0..samples)
            .map(|r| op.sample(derive_seed(seed, r)))
            .collect();
        art.write("samples.csv", &table(&replicate_names(samples), &draws))?;
    }
    art.finish()?;
    print!("{header}");
    Ok(())
}

fn typeg_sample(
    args: &ModelArgs,
    noise: TypeGNoise,
    seed: u64,
    replicates: u64,
    out: &Path,
) -> Result<()> {
    check_replicates(replicates)?;
    let (mesh, model) = resolve_model(args)?;
    if model.alpha != 2.0 {
        return Err(config("type-G fields support alpha = 2 only"));
    }
    if !model.is_stationary() {
        return Err(config("type-G sampling needs constant kappa and tau"));
    }
    let fem = model.assemble(&mesh)?;
    let field = TypeGField::from_fem(&fem, model.kappa[0], model.tau[0], noise)?;
    let mut draws = Vec::new();
    let mut mixing = Vec::new();
    for r in 0..replicates {
        let s = derive_seed(seed, r);
        draws.push(sample_type_g_field(&field, s)?);
        mixing.push(sample_mixing(&field.noise, &field.h, s)?);
    }
    let names = replicate_names(replicates);
    let mut art = Artifacts::beside(out)?;
    art.write(&file_name(out)?, &table(&names, &draws))?;
    art.write("mixing.csv", &table(&names, &mixing))?;
    art.finish()?;
    println!(
        "n={}\nreplicates={replicates}\nseed={seed}",
        mesh.n_vertices()
    );
    Ok(())
}

fn validate(suite: &str, out: Option<&Path>) -> Result<()> {
    let selected: Vec<&'static str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        match SUITES.iter().find(|s| **s == suite) {
            Some(s) => vec![*s],
            None => {
                return Err(config(format!(
                    "unknown suite '{suite}' (expected all or one of {})",
                    SUITES.join(", ")
                )))
            }
        }
    };
    let mut report = String::new();
    let mut failed = 0;
    for name in selected.iter().copied() {
        let r = run_suite_report(name);
        println!("{}", r.line());
        report.push_str(&r.line());
        report.push('\n');
        if !r.passed {
            failed += 1;
        }
    }
    if let Some(path) = out {
        let mut art = Artifacts::beside(path)?;
        art.write(&file_name(path)?, &report)?;
        art.finish()?;
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} checks failed",
            selected.len()
        )));
    }
    Ok(())
}
