//! The four subcommands. Each turns a resolved config into result tables.

use msrds_core::mc_sim::{reference_moments, simulate_ensemble, z_score, InitialCondition, SimulationConfig};
use msrds_core::moment::MomentState;
use msrds_core::pitchfork::{analytic_spectrum, bifurcation_sweep, pullback_run, PullbackOptions};
use msrds_core::spectrum::{
    autonomous_spectrum, finite_time_estimate, gamma_bound, EigenLiftOptions, FiniteTimeOptions, SpectrumEstimate,
};

use crate::config::{ModelConfig, RunConfig};
use crate::error::CliError;
use crate::table::{Cell, PlotSpec, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Simulate,
    Pullback,
    Bifurcate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::Pullback => "pullback",
            Command::Bifurcate => "bifurcate",
        }
    }
}

pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<ResultTable, CliError> {
    let mut table = match cmd {
        Command::Spectrum => cmd_spectrum(cfg),
        Command::Simulate => cmd_simulate(cfg),
        Command::Pullback => cmd_pullback(cfg),
        Command::Bifurcate => cmd_bifurcate(cfg),
    }?;
    let mut header = vec![
        ("tool".to_string(), format!("msrds {}", env!("CARGO_PKG_VERSION"))),
        ("command".to_string(), cmd.as_str().to_string()),
        ("config_sha256".to_string(), cfg.hash()),
        ("seed".to_string(), cfg.seed.to_string()),
    ];
    header.append(&mut table.provenance);
    table.provenance = header;
    Ok(table)
}

fn push_estimate(table: &mut ResultTable, est: &SpectrumEstimate, gamma: f64) {
    for (k, iv) in est.intervals.iter().enumerate() {
        let detail = &est.details[k];
        let verdict = detail.verdict.map_or("n/a", |v| v.as_str());
        table.push(vec![
            iv.lower.into(),
            iv.upper.into(),
            est.method.as_str().into(),
            detail.multiplicity.into(),
            verdict.into(),
            gamma.into(),
            est.stable_dims[k].into(),
        ]);
    }
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    let sys = cfg.linear_system()?;
    let gamma = gamma_bound(&sys);
    let mut table = ResultTable::new(
        "spectrum",
        &["lower", "upper", "method", "multiplicity", "admissibility_verdict", "gamma_bound", "stable_dim_below"],
    );
    let pitchfork = cfg.pitchfork();
    if let Some(p) = pitchfork {
        let analytic = analytic_spectrum(&p);
        for (k, iv) in analytic.intervals.iter().enumerate() {
            table.push(vec![
                iv.lower.into(),
                iv.upper.into(),
                "analytic".into(),
                1usize.into(),
                "n/a".into(),
                gamma.into(),
                analytic.stable_dims[k].into(),
            ]);
        }
    }
    if sys.is_autonomous() {
        let sp = &cfg.spectrum;
        let opts = EigenLiftOptions {
            merge_tol: sp.merge_tol,
            cone_samples: sp.cone_samples,
            cone_seed: cfg.seed,
            ..EigenLiftOptions::default()
        };
        let est = autonomous_spectrum(&sys, &opts)?;
        if est.has_inconclusive() {
            table.provenance.push((
                "note".into(),
                "some eigen-lift candidates could not be decided against the admissible cone and are kept".into(),
            ));
        }
        push_estimate(&mut table, &est, gamma);
    }
    if cfg.spectrum.finite_time || pitchfork.is_some() || !sys.is_autonomous() {
        let opts = FiniteTimeOptions {
            horizon: cfg.spectrum.horizon,
            n_samples: cfg.spectrum.samples,
            seed: cfg.seed,
            cluster_width: cfg.spectrum.cluster_width,
            tol: cfg.tol(),
        };
        let est = finite_time_estimate(&sys, &opts)?;
        push_estimate(&mut table, &est, gamma);
    }
    table.plot = Some(PlotSpec::Intervals {
        lower: "lower".into(),
        upper: "upper".into(),
        lane: "method".into(),
    });
    Ok(table)
}

fn upper_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect()
}

fn moment_cells(state: &MomentState, pairs: &[(usize, usize)]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = state.m.iter().map(|&v| v.into()).collect();
    cells.extend(pairs.iter().map(|&(i, j)| state.s[(i, j)].into()));
    cells
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    let model = cfg.model_spec()?;
    let init = cfg.simulate_init();
    let d = cfg.dim();
    let sim = &cfg.simulate;
    let pairs = upper_pairs(d);
    let mean_names: Vec<String> = (1..=d).map(|i| format!("mean_{i}")).collect();
    let sec_names: Vec<String> = pairs.iter().map(|(i, j)| format!("secmom_{}{}", i + 1, j + 1)).collect();
    let mut columns = vec!["t".to_string()];
    for prefix in ["", "se_", "ode_", "z_"] {
        columns.extend(mean_names.iter().map(|n| format!("{prefix}{n}")));
        columns.extend(sec_names.iter().map(|n| format!("{prefix}{n}")));
    }
    columns.extend(["ms_norm".to_string(), "ode_ms_norm".to_string()]);
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = ResultTable::new("simulate", &cols);

    let traj = simulate_ensemble(
        &model,
        &InitialCondition::Moments(init.clone()),
        &SimulationConfig {
            s: sim.s,
            t: sim.t,
            dt: sim.dt,
            n: sim.n,
            seed: cfg.seed,
            record_every: sim.record_every,
        },
    )?;
    for (&t, est) in traj.times.iter().zip(&traj.snapshots) {
        let ode = reference_moments(&model, &init, sim.s, t, cfg.tol())?;
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(moment_cells(&est.state, &pairs));
        row.extend(est.se_mean.iter().map(|&v| v.into()));
        row.extend(pairs.iter().map(|&(i, j)| est.se_secmom[(i, j)].into()));
        row.extend(moment_cells(&ode, &pairs));
        row.extend((0..d).map(|i| z_score(est.state.m[i], ode.m[i], est.se_mean[i]).into()));
        row.extend(
            pairs
                .iter()
                .map(|&(i, j)| z_score(est.state.s[(i, j)], ode.s[(i, j)], est.se_secmom[(i, j)]).into()),
        );
        row.push(est.state.s.trace().max(0.0).sqrt().into());
        row.push(ode.s.trace().max(0.0).sqrt().into());
        table.push(row);
    }
    table.provenance.push(("particles".into(), sim.n.to_string()));
    table.provenance.push(("dt".into(), format!("{:?}", sim.dt)));
    table.plot = Some(PlotSpec::Lines {
        x: "t".into(),
        ys: vec!["ms_norm".into(), "ode_ms_norm".into()],
    });
    Ok(table)
}

fn require_pitchfork(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    match cfg.model {
        ModelConfig::Pitchfork { beta, .. } if beta == 1.0 => Ok(()),
        ModelConfig::Pitchfork { beta, .. } => Err(CliError::Config(format!(
            "{what} runs need the pitchfork model with beta = 1, got beta = {beta}"
        ))),
        ModelConfig::Linear { .. } => Err(CliError::Config(format!("{what} runs need the pitchfork model"))),
    }
}

pub fn cmd_pullback(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    require_pitchfork(cfg, "pullback")?;
    let params = cfg.pitchfork().expect("pitchfork model");
    let pb = &cfg.pullback;
    let opts = PullbackOptions {
        classify_tol: pb.classify_tol,
        tol: cfg.tol(),
    };
    let init = pb.init.into();
    let run = pullback_run(&params, |_| init, pb.t, &pb.start_times, &opts)?;
    let mut table = ResultTable::new("pullback", &["s", "limit_x", "limit_y", "classification"]);
    for ((&s, l), c) in run.start_times.iter().zip(&run.limits).zip(&run.classifications) {
        table.push(vec![s.into(), l.x.into(), l.y.into(), c.as_str().into()]);
    }
    table.provenance.push(("converged_to".into(), run.converged_to.as_str().into()));
    table.provenance.push(("monotone".into(), run.monotone.to_string()));
    table.plot = Some(PlotSpec::Lines {
        x: "s".into(),
        ys: vec!["limit_x".into(), "limit_y".into()],
    });
    Ok(table)
}

pub fn cmd_bifurcate(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    require_pitchfork(cfg, "bifurcation")?;
    let bf = &cfg.bifurcate;
    let opts = PullbackOptions {
        classify_tol: bf.classify_tol,
        tol: cfg.tol(),
    };
    let rows = bifurcation_sweep(&bf.alphas, bf.init.into(), bf.depth, &opts)?;
    let mut table = ResultTable::new("bifurcate", &["alpha", "classification", "limit_x", "limit_y", "ms_norm"]);
    for r in rows {
        table.push(vec![
            r.alpha.into(),
            r.classification.as_str().into(),
            r.limit.x.into(),
            r.limit.y.into(),
            r.ms_norm.into(),
        ]);
    }
    table.plot = Some(PlotSpec::Grouped {
        x: "alpha".into(),
        y: "ms_norm".into(),
        group: "classification".into(),
    });
    Ok(table)
}
