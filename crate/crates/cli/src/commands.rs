use std::path::Path;

use garch_tail::clusters::{cluster_report, delta};
use garch_tail::empirical::{empirical_extremogram, log_grid, runs_estimator, tail_qq};
use garch_tail::pipeline::{contour, kappa_stderr, report};
use garch_tail::spectral::{find_kappa, init_ensemble, iterate, InitConfig, KappaConfig};
use garch_tail::stationarity::{gamma_naive, stationarity_report, StableConfig, Verdict};
use garch_tail::stats::quantile;
use garch_tail::tailchain::batch_chains;
use garch_tail::{
    simulate, ChainConfig, Condition, ContourConfig, DeltaMethod, Domain, Error, GarchSpec,
    Innovation, InnovationConfig, InnovationKind, ModelFile, ParticleEnsemble, ReportConfig,
    SeedStream,
};
use serde::Serialize;

use crate::output::{num, Meta, ModelMeta, Sink};
use crate::{ChainArgs, CliError, Command, Common, ConditionArg, InitArgs, KappaArgs};

struct Ctx {
    spec: GarchSpec,
    file: ModelFile,
    seeds: SeedStream,
    sink: Sink,
}

fn setup_threads(threads: usize) -> Result<usize, CliError> {
    let n = if threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        threads
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
    Ok(n)
}

fn sink(
    command: &'static str,
    common: &Common,
    model: Option<ModelMeta>,
) -> Result<Sink, CliError> {
    let threads = setup_threads(common.threads)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    let meta = Meta {
        tool: "garch-tail",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: common.seed,
        threads,
        model,
    };
    Ok(Sink {
        dir: common.out.clone(),
        format: common.format,
        meta,
    })
}

fn load(command: &'static str, path: &Path, common: &Common) -> Result<Ctx, CliError> {
    let file = ModelFile::load(path)?;
    let spec = file.spec()?;
    let sink = sink(
        command,
        common,
        Some(ModelMeta::new(&file, spec.innovation)),
    )?;
    Ok(Ctx {
        spec,
        file,
        seeds: SeedStream::new(common.seed),
        sink,
    })
}

fn init_config(a: &InitArgs) -> InitConfig {
    InitConfig {
        n: a.init_n,
        u_quantile: a.init_quantile,
        ..InitConfig::default()
    }
}

fn kappa_config(a: &KappaArgs, j: usize) -> KappaConfig {
    let mut c = KappaConfig {
        lo: a.grid.0,
        hi: a.grid.1,
        grid_step: a.grid.2,
        tol: a.tol,
        ..KappaConfig::default()
    };
    c.refine_average = a.refine_average;
    c.spectral.j = j;
    c
}

fn chain_config(a: &ChainArgs, condition: Condition) -> ChainConfig {
    ChainConfig {
        t_max: a.t,
        condition,
        ..ChainConfig::default()
    }
}

/// Converged ensemble at `kappa`, estimating `kappa` first when it is not given.
fn ensemble_at(
    ctx: &Ctx,
    kappa: Option<f64>,
    init: &InitArgs,
    search: &KappaArgs,
) -> Result<(f64, garch_tail::spectral::SpectralRun), CliError> {
    let start = init_ensemble(&ctx.spec, &init_config(init), &ctx.seeds)?;
    let kc = kappa_config(search, init.j);
    let kappa = match kappa {
        Some(k) if k > 0.0 => k,
        Some(k) => return Err(Error::Config(format!("kappa must be positive, got {k}")).into()),
        None => find_kappa(&ctx.spec, &start, &kc, &ctx.seeds)?.kappa_hat,
    };
    let run = iterate(
        &ctx.spec,
        kappa,
        &start,
        &kc.spectral,
        &ctx.seeds.child(Domain::Kappa, 1),
    )?;
    if run.converged_at.is_none() {
        log::warn!(
            "particle filter did not settle within {} iterations",
            kc.spectral.max_s
        );
    }
    Ok((kappa, run))
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate {
            model,
            n,
            burn,
            common,
        } => {
            let ctx = load("simulate", &model.model, &common)?;
            simulate_cmd(&ctx, n, burn)
        }
        Command::Stationarity {
            model,
            t,
            replicates,
            naive_t,
            common,
        } => {
            let ctx = load("stationarity", &model.model, &common)?;
            stationarity_cmd(&ctx, t, replicates, naive_t)
        }
        Command::Kappa {
            model,
            init,
            kappa,
            common,
        } => {
            let ctx = load("kappa", &model.model, &common)?;
            kappa_cmd(&ctx, &init, &kappa)
        }
        Command::Spectral {
            model,
            kappa,
            init,
            kappa_search,
            common,
        } => {
            let ctx = load("spectral", &model.model, &common)?;
            spectral_cmd(&ctx, kappa, &init, &kappa_search)
        }
        Command::Tailchain {
            model,
            kappa,
            init,
            kappa_search,
            chains,
            condition,
            keep,
            common,
        } => {
            let ctx = load("tailchain", &model.model, &common)?;
            let condition = match condition {
                ConditionArg::X2 => Condition::OnX2,
                ConditionArg::Sigma2 => Condition::OnSigma2,
            };
            tailchain_cmd(&ctx, kappa, &init, &kappa_search, &chains, condition, keep)
        }
        Command::Clusters {
            model,
            kappa,
            init,
            kappa_search,
            chains,
            taumax,
            imax,
            delta,
            common,
        } => {
            let ctx = load("clusters", &model.model, &common)?;
            clusters_cmd(
                &ctx,
                kappa,
                &init,
                &kappa_search,
                &chains,
                taumax,
                imax,
                delta.into(),
            )
        }
        Command::Validate {
            model,
            n,
            burn,
            m,
            quantiles,
            taumax,
            qq_quantile,
            qq_rmax,
            common,
        } => {
            let ctx = load("validate", &model.model, &common)?;
            validate_cmd(&ctx, n, burn, &m, &quantiles, taumax, qq_quantile, qq_rmax)
        }
        Command::Report {
            model,
            lyap_t,
            replicates,
            init,
            kappa,
            chains,
            taumax,
            delta,
            common,
        } => {
            let ctx = load("report", &model.model, &common)?;
            let mut cfg = ReportConfig {
                stable: StableConfig {
                    t: lyap_t,
                    replicates,
                    ..StableConfig::default()
                },
                init: init_config(&init),
                kappa: kappa_config(&kappa, init.j),
                chains: chain_config(&chains, Condition::OnX2),
                n_chains: chains.n,
                tau_max: taumax,
                ..ReportConfig::default()
            };
            cfg.delta = delta.into();
            report_cmd(&ctx, &cfg)
        }
        Command::Contour {
            alpha1,
            beta1,
            alpha2,
            beta2,
            innovation,
            nu,
            xi,
            init_n,
            init_quantile,
            j,
            n,
            common,
        } => {
            let kind = match innovation.as_str() {
                "gaussian" => InnovationKind::Gaussian,
                "scaled_t" | "t" | "student_t" => InnovationKind::ScaledT,
                "skew_t" => InnovationKind::SkewT,
                other => return Err(CliError::Usage(format!("unknown innovation {other:?}"))),
            };
            let inn = Innovation::try_from(InnovationConfig { kind, nu, xi })?;
            let mut cfg = ContourConfig {
                alpha1,
                beta1,
                alpha2,
                beta2,
                ..ContourConfig::default()
            };
            cfg.report.init.n = init_n;
            cfg.report.init.u_quantile = init_quantile;
            cfg.report.kappa.spectral.j = j;
            cfg.report.n_chains = n;
            let sink = sink("contour", &common, None)?;
            contour_cmd(&cfg, inn, &SeedStream::new(common.seed), &sink)
        }
    }
}

#[derive(Serialize)]
struct PathSummary {
    n: usize,
    burn_in: usize,
    mean_x2: f64,
    quantiles_x2: Vec<(f64, f64)>,
    max_x2: f64,
}

fn simulate_cmd(ctx: &Ctx, n: usize, burn: usize) -> Result<(), CliError> {
    let path = simulate(
        &ctx.spec,
        n + burn,
        burn,
        ctx.seeds.rng(Domain::Simulate, 0),
    )?;
    let x2 = path.kept_x2();
    let qs = [0.5, 0.9, 0.99, 0.999];
    let summary = PathSummary {
        n,
        burn_in: burn,
        mean_x2: x2.iter().sum::<f64>() / x2.len() as f64,
        quantiles_x2: qs.iter().map(|&q| (q, quantile(x2, q))).collect(),
        max_x2: x2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    ctx.sink.json(&summary)?;
    ctx.sink.csv(
        "path.csv",
        &[
            "t [step]",
            "x2 [squared return]",
            "sigma2 [conditional variance]",
        ],
        x2.iter()
            .zip(path.kept_sigma2())
            .enumerate()
            .map(|(t, (x, s))| vec![t.to_string(), num(*x), num(*s)]),
    )
}

#[derive(Serialize)]
struct NaiveSummary {
    t: usize,
    replicates: usize,
    underflows: usize,
    underflow_at: Vec<Option<usize>>,
    gamma: Vec<f64>,
}

#[derive(Serialize)]
struct StationarityResult {
    verdict: Verdict,
    phi: f64,
    beta_sum: f64,
    gamma: Option<garch_tail::GammaReport>,
    naive: Option<NaiveSummary>,
}

fn stationarity_cmd(
    ctx: &Ctx,
    t: usize,
    replicates: usize,
    naive_t: usize,
) -> Result<(), CliError> {
    let cfg = StableConfig {
        t,
        replicates,
        ..StableConfig::default()
    };
    let (verdict, gamma) = stationarity_report(&ctx.spec, &cfg, &ctx.seeds)?;
    let naive = (naive_t > 0).then(|| {
        let reps = gamma_naive(&ctx.spec, naive_t, replicates, &ctx.seeds);
        NaiveSummary {
            t: naive_t,
            replicates,
            underflows: reps.iter().filter(|r| r.underflow_at.is_some()).count(),
            underflow_at: reps.iter().map(|r| r.underflow_at).collect(),
            gamma: reps.iter().map(|r| r.gamma).collect(),
        }
    });
    let res = StationarityResult {
        verdict,
        phi: ctx.spec.phi(),
        beta_sum: ctx.spec.beta_sum(),
        gamma,
        naive,
    };
    ctx.sink.json(&res)?;
    if let Some(g) = &res.gamma {
        ctx.sink.csv(
            "trace.csv",
            &[
                "t [step]",
                "gamma_t [log growth per step]",
                "eta_t [log growth per step]",
                "log_c_t [log growth per step]",
            ],
            g.trace.iter().map(|p| {
                vec![
                    p.t.to_string(),
                    num(p.gamma_t),
                    num(p.eta_t),
                    num(p.log_c_t),
                ]
            }),
        )?;
    }
    if verdict == Verdict::NotStationary {
        let detail = match &res.gamma {
            Some(g) => format!("gamma = {:.4} ± {:.4}", g.gamma_theorem1, g.mc_stderr),
            None => format!("sum of beta = {:.4} ≥ 1", ctx.spec.beta_sum()),
        };
        return Err(Error::NotStationary(detail).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct KappaResult {
    kappa: f64,
    kappa_stderr: f64,
    curve: garch_tail::RhoCurve,
}

fn kappa_cmd(ctx: &Ctx, init: &InitArgs, args: &KappaArgs) -> Result<(), CliError> {
    let start = init_ensemble(&ctx.spec, &init_config(init), &ctx.seeds)?;
    let curve = find_kappa(&ctx.spec, &start, &kappa_config(args, init.j), &ctx.seeds)?;
    let res = KappaResult {
        kappa: curve.kappa_hat,
        kappa_stderr: kappa_stderr(&curve),
        curve,
    };
    ctx.sink.json(&res)?;
    ctx.sink.csv(
        "rho.csv",
        &[
            "k [tail index]",
            "rho [ratio]",
            "stderr [ratio]",
            "averaged [iterations]",
            "diverging [bool]",
        ],
        res.curve.points.iter().map(|p| {
            vec![
                num(p.k),
                num(p.rho),
                num(p.stderr),
                p.averaged.to_string(),
                p.diverging.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct SpectralResult<'a> {
    kappa: f64,
    particles: usize,
    ess: f64,
    converged_at: Option<usize>,
    trace: &'a [garch_tail::spectral::IterationTrace],
}

fn spectral_cmd(
    ctx: &Ctx,
    kappa: Option<f64>,
    init: &InitArgs,
    search: &KappaArgs,
) -> Result<(), CliError> {
    let (kappa, run) = ensemble_at(ctx, kappa, init, search)?;
    let ens = &run.ensemble;
    let res = SpectralResult {
        kappa,
        particles: ens.len(),
        ess: ens.ess(),
        converged_at: run.converged_at,
        trace: &run.trace,
    };
    ctx.sink.json(&res)?;
    particles_csv(&ctx.sink, ens)
}

fn particles_csv(sink: &Sink, ens: &ParticleEnsemble) -> Result<(), CliError> {
    let names: Vec<String> = (1..=ens.dim)
        .map(|i| format!("theta_{i} [share of norm]"))
        .collect();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push("weight [probability]");
    sink.csv(
        "particles.csv",
        &header,
        (0..ens.len()).map(|j| {
            let mut r: Vec<String> = ens.particle(j).iter().map(|v| num(*v)).collect();
            r.push(num(ens.weights[j]));
            r
        }),
    )
}

#[derive(Serialize)]
struct TailchainResult<'a> {
    kappa: f64,
    acceptance_rate: f64,
    alive_at_horizon: f64,
    summary: &'a garch_tail::ChainSummary,
}

fn tailchain_cmd(
    ctx: &Ctx,
    kappa: Option<f64>,
    init: &InitArgs,
    search: &KappaArgs,
    chains: &ChainArgs,
    condition: Condition,
    keep: usize,
) -> Result<(), CliError> {
    let (kappa, run) = ensemble_at(ctx, kappa, init, search)?;
    let cfg = chain_config(chains, condition);
    let batch = batch_chains(
        &ctx.spec,
        kappa,
        &run.ensemble,
        &cfg,
        chains.n,
        keep,
        &ctx.seeds,
    )?;
    let s = &batch.summary;
    let res = TailchainResult {
        kappa,
        acceptance_rate: s.acceptance_rate(),
        alive_at_horizon: s.alive_at_horizon(),
        summary: s,
    };
    ctx.sink.json(&res)?;
    ctx.sink.csv(
        "exceedances.csv",
        &[
            "tau [step]",
            "x2 [chains above 1]",
            "sigma2 [chains above 1]",
        ],
        (0..=s.t_max).map(|t| {
            let sig = s
                .exceed_sigma2
                .get(t)
                .map(|v| v.to_string())
                .unwrap_or_default();
            vec![t.to_string(), s.exceed_x2[t].to_string(), sig]
        }),
    )?;
    if keep > 0 {
        ctx.sink.csv(
            "chains.csv",
            &[
                "chain [index]",
                "t [step]",
                "x2hat [multiple of threshold]",
                "sigma2hat [multiple of threshold]",
            ],
            batch.chains.iter().enumerate().flat_map(|(i, ch)| {
                (0..ch.x2hat.len()).map(move |t| {
                    let sig = ch.sigma2hat.get(t).map(|v| num(*v)).unwrap_or_default();
                    vec![i.to_string(), t.to_string(), num(ch.x2hat[t]), sig]
                })
            }),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClustersResult<'a> {
    kappa: f64,
    report: &'a garch_tail::ClusterReport,
}

#[allow(clippy::too_many_arguments)]
fn clusters_cmd(
    ctx: &Ctx,
    kappa: Option<f64>,
    init: &InitArgs,
    search: &KappaArgs,
    chains: &ChainArgs,
    tau_max: usize,
    i_max: usize,
    method: DeltaMethod,
) -> Result<(), CliError> {
    let (kappa, run) = ensemble_at(ctx, kappa, init, search)?;
    let cfg = chain_config(chains, Condition::OnX2);
    let batch = batch_chains(
        &ctx.spec,
        kappa,
        &run.ensemble,
        &cfg,
        chains.n,
        0,
        &ctx.seeds,
    )?;
    let method = if ctx.spec.p == 0 && method == DeltaMethod::TailChain {
        DeltaMethod::Breiman
    } else {
        method
    };
    let d = delta(
        &ctx.spec,
        kappa,
        &run.ensemble,
        Some(&batch.summary),
        method,
        &ctx.seeds,
    )?;
    let rep = cluster_report(&batch.summary, tau_max, i_max, d, method)?;
    ctx.sink.json(&ClustersResult {
        kappa,
        report: &rep,
    })?;
    cluster_csvs(&ctx.sink, &rep)
}

fn cluster_csvs(sink: &Sink, rep: &garch_tail::ClusterReport) -> Result<(), CliError> {
    sink.csv(
        "extremogram.csv",
        &[
            "tau [step]",
            "chi_x2 [probability]",
            "chi_x2_stderr [probability]",
            "chi_up [probability]",
            "chi_lo [probability]",
        ],
        rep.chi_x2.iter().enumerate().map(|(t, c)| {
            vec![
                t.to_string(),
                num(c.value),
                num(c.stderr),
                num(rep.chi_up[t]),
                num(rep.chi_lo[t]),
            ]
        }),
    )?;
    let n = rep.pi_x2.len();
    let at = |v: &[f64], i: usize| v.get(i).map(|x| num(*x)).unwrap_or_default();
    sink.csv(
        "cluster_sizes.csv",
        &[
            "i [exceedances]",
            "theta_ladder [probability]",
            "pi_x2 [probability]",
            "pi_up [probability]",
            "pi_lo [probability]",
        ],
        (0..n).map(|i| {
            vec![
                (i + 1).to_string(),
                at(&rep.theta_ladder, i),
                at(&rep.pi_x2, i),
                at(&rep.pi_up, i),
                at(&rep.pi_lo, i),
            ]
        }),
    )
}

#[derive(Serialize)]
struct RunsRow {
    quantile: f64,
    #[serde(flatten)]
    estimate: garch_tail::RunsEstimate,
}

#[derive(Serialize)]
struct ExtremogramRow {
    quantile: f64,
    u: f64,
    chi: Vec<f64>,
}

#[derive(Serialize)]
struct ValidateResult {
    n: usize,
    runs: Vec<RunsRow>,
    extremogram: Vec<ExtremogramRow>,
    tail_qq: garch_tail::TailQq,
}

#[allow(clippy::too_many_arguments)]
fn validate_cmd(
    ctx: &Ctx,
    n: usize,
    burn: usize,
    ms: &[usize],
    quantiles: &[f64],
    tau_max: usize,
    qq_quantile: f64,
    qq_rmax: f64,
) -> Result<(), CliError> {
    if let Some(q) = quantiles
        .iter()
        .chain([&qq_quantile])
        .find(|q| !(**q > 0.5 && **q < 1.0))
    {
        return Err(
            Error::Config(format!("threshold quantiles must lie in (0.5, 1), got {q}")).into(),
        );
    }
    let path = simulate(
        &ctx.spec,
        n + burn,
        burn,
        ctx.seeds.rng(Domain::Simulate, 0),
    )?;
    let x2 = path.kept_x2();
    let mut runs = Vec::new();
    let mut extremogram = Vec::new();
    for &q in quantiles {
        let u = quantile(x2, q);
        for &m in ms {
            runs.push(RunsRow {
                quantile: q,
                estimate: runs_estimator(x2, u, m, &ctx.seeds)?,
            });
        }
        extremogram.push(ExtremogramRow {
            quantile: q,
            u,
            chi: empirical_extremogram(x2, u, tau_max)?,
        });
    }
    let tail_qq = tail_qq(x2, qq_quantile, &log_grid(qq_rmax, 40))?;
    let res = ValidateResult {
        n,
        runs,
        extremogram,
        tail_qq,
    };
    ctx.sink.json(&res)?;
    ctx.sink.csv(
        "runs.csv",
        &[
            "quantile [probability]",
            "u [squared return]",
            "m [steps]",
            "theta [probability]",
            "ci_lo [probability]",
            "ci_hi [probability]",
            "n_exceed [count]",
        ],
        res.runs.iter().map(|r| {
            let e = &r.estimate;
            vec![
                num(r.quantile),
                num(e.u),
                e.m.to_string(),
                num(e.theta_tilde),
                num(e.ci95.0),
                num(e.ci95.1),
                e.n_exceed.to_string(),
            ]
        }),
    )?;
    ctx.sink.csv(
        "extremogram_empirical.csv",
        &["quantile [probability]", "tau [step]", "chi [probability]"],
        res.extremogram.iter().flat_map(|e| {
            e.chi
                .iter()
                .enumerate()
                .map(move |(t, c)| vec![num(e.quantile), t.to_string(), num(*c)])
        }),
    )?;
    ctx.sink.csv(
        "tail_qq.csv",
        &["log_r [log ratio]", "log_survival [log probability]"],
        res.tail_qq
            .points
            .iter()
            .map(|(a, b)| vec![num(*a), num(*b)]),
    )
}

#[derive(Serialize)]
struct ReportResult {
    config: ReportConfig,
    expected: Option<garch_tail::Expected>,
    report: garch_tail::Report,
}

fn report_cmd(ctx: &Ctx, cfg: &ReportConfig) -> Result<(), CliError> {
    let label = ctx.file.label();
    let rep = report(&ctx.spec, &label, cfg, &ctx.seeds)?;
    let res = ReportResult {
        config: *cfg,
        expected: ctx.file.expected.clone(),
        report: rep,
    };
    ctx.sink.json(&res)?;
    let r = &res.report.row;
    ctx.sink.csv(
        "row.csv",
        &[
            "label [text]",
            "gamma [log growth per step]",
            "eta [log growth per step]",
            "kappa [tail index]",
            "theta_x2 [probability]",
            "theta_up [probability]",
            "theta_lo [probability]",
            "delta [probability]",
            "gamma_product [log growth per step]",
            "eta_product [log growth per step]",
        ],
        [vec![
            r.label.clone(),
            num(r.gamma.value),
            num(r.eta.value),
            num(r.kappa.value),
            num(r.theta_x2.value),
            num(r.theta_up.value),
            num(r.theta_lo.value),
            num(r.delta),
            r.gamma_product.map(|e| num(e.value)).unwrap_or_default(),
            r.eta_product.map(|e| num(e.value)).unwrap_or_default(),
        ]],
    )?;
    cluster_csvs(&ctx.sink, &res.report.clusters)
}

#[derive(Serialize)]
struct ContourResult<'a> {
    config: &'a ContourConfig,
    innovation: Innovation,
    points: Vec<garch_tail::ContourPoint>,
}

fn contour_cmd(
    cfg: &ContourConfig,
    inn: Innovation,
    seeds: &SeedStream,
    sink: &Sink,
) -> Result<(), CliError> {
    let points = contour(cfg, inn, seeds)?;
    let res = ContourResult {
        config: cfg,
        innovation: inn,
        points,
    };
    sink.json(&res)?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    sink.csv(
        "contour.csv",
        &[
            "alpha1 [coefficient]",
            "beta1 [coefficient]",
            "phi [persistence]",
            "kappa [tail index]",
            "theta_x2 [probability]",
            "theta_up [probability]",
            "theta_up_stderr [probability]",
            "failure [text]",
        ],
        res.points.iter().map(|p| {
            vec![
                num(p.alpha1),
                num(p.beta1),
                num(p.phi),
                opt(p.kappa),
                opt(p.theta_x2.map(|e| e.value)),
                opt(p.theta_up.map(|e| e.value)),
                opt(p.theta_up.map(|e| e.stderr)),
                p.failure.clone().unwrap_or_default(),
            ]
        }),
    )
}
