use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use eventattr::attribution::{EventDefinition, EventSource};
use eventattr::data::{
    covariate_ramp, simulate_study, write_series, AnalyticAttribution, MemberLaw, ScenarioSeries, ScenarioTruth,
    StudyTruth,
};
use eventattr::evd::EvdParams;
use eventattr::fitting::CovariateMode;
use serde::Serialize;

use crate::config::{DataSection, EventSection, FitSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{Cell, Output, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Five trending members over 1901-2012 against twelve stationary
    /// counterfactual centuries, bounded tails.
    PaperLike,
    /// Stationary scenarios with unbounded tails.
    WellBehaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Law {
    Gev,
    PointProcess,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Built-in truth used when no manifest is given with --config.
    #[arg(long, value_enum, default_value_t = Preset::PaperLike)]
    pub preset: Preset,
    /// Event probability of the preset.
    #[arg(long, default_value_t = 0.1)]
    pub probability: f64,
    /// Member law of the preset.
    #[arg(long, value_enum, default_value_t = Law::PointProcess)]
    pub law: Law,
}

fn preset(args: &SimulateArgs) -> CliResult<StudyTruth> {
    let law = match args.law {
        Law::Gev => MemberLaw::Gev,
        Law::PointProcess => MemberLaw::PointProcess,
    };
    let p = |beta: Vec<f64>, sigma: f64, xi: f64| EvdParams::new(beta, sigma, xi).map_err(CliError::from);
    let truth = match args.preset {
        Preset::PaperLike => {
            let years: Vec<i32> = (1901..=2012).collect();
            let cov = covariate_ramp(years.len(), -0.1, 0.93, 2.0);
            StudyTruth {
                observation: Some(ScenarioTruth {
                    params: p(vec![0.9, 1.0], 0.45, -0.2)?,
                    members: 1,
                    years: years.clone(),
                    covariate: Some(cov.clone()),
                    law: MemberLaw::Gev,
                }),
                actual: ScenarioTruth {
                    params: p(vec![1.263, 1.382], 0.926, -0.197)?,
                    members: 5,
                    years,
                    covariate: Some(cov),
                    law,
                },
                counterfactual: ScenarioTruth {
                    params: p(vec![1.415], 0.638, -0.179)?,
                    members: 12,
                    years: (1..=100).collect(),
                    covariate: None,
                    law,
                },
                event: EventDefinition::probability(args.probability, Some(2011)),
            }
        }
        Preset::WellBehaved => StudyTruth {
            observation: None,
            actual: ScenarioTruth {
                params: p(vec![2.0], 0.8, 0.05)?,
                members: 12,
                years: (1..=100).collect(),
                covariate: None,
                law,
            },
            counterfactual: ScenarioTruth {
                params: p(vec![1.4], 0.75, 0.05)?,
                members: 12,
                years: (1..=100).collect(),
                covariate: None,
                law,
            },
            event: EventDefinition::probability(args.probability, None),
        },
    };
    truth.event.validate()?;
    Ok(truth)
}

fn load_manifest(path: &Path) -> CliResult<StudyTruth> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    truth: &'a StudyTruth,
    analytic: AnalyticAttribution,
}

fn save(out: &mut Output, name: &str, series: &ScenarioSeries) -> CliResult<PathBuf> {
    let mut buf = Vec::new();
    write_series(series, &mut buf)?;
    out.write(name, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    Ok(PathBuf::from(name))
}

fn mode_of(truth: &ScenarioTruth) -> CovariateMode {
    if truth.params.is_stationary() {
        CovariateMode::Stationary
    } else {
        CovariateMode::Linear
    }
}

/// Draw a study, write it in the ingestion schema next to a truth sidecar
/// and a run config that analyses it.
pub fn run(manifest: Option<&Path>, args: &SimulateArgs, seed: u64, out: &mut Output) -> CliResult<()> {
    let truth = match manifest {
        Some(path) => load_manifest(path)?,
        None => preset(args)?,
    };
    let study = simulate_study(&truth, seed)?;
    let mut data = DataSection {
        actual: Some(save(out, "actual.csv", &study.actual)?),
        counterfactual: Some(save(out, "counterfactual.csv", &study.counterfactual)?),
        ..Default::default()
    };
    if let Some(obs) = &study.observation {
        data.observation = Some(save(out, "observation.csv", obs)?);
    }
    out.json(
        "truth.json",
        &Sidecar {
            seed,
            truth: &truth,
            analytic: study.truth,
        },
    )?;

    let event = match truth.event.source {
        EventSource::Probability(p) => EventSection {
            magnitude: None,
            probability: Some(p),
            year: truth.event.year,
        },
        EventSource::Magnitude(z) => EventSection {
            magnitude: Some(z),
            probability: None,
            year: truth.event.year,
        },
    };
    let fit = FitSection {
        observation_mode: truth.observation.as_ref().map(mode_of).unwrap_or(CovariateMode::Linear),
        actual_mode: mode_of(&truth.actual),
        ..FitSection::default()
    };
    let mut config = RunConfig {
        seed,
        output: Some(PathBuf::from("results")),
        data,
        event: Some(event),
        fit,
        uncertainty: Default::default(),
        sensitivity: Default::default(),
        diagnose: Default::default(),
    };
    config.sync_bootstrap();
    let toml_text = toml::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
    out.write("run.toml", &toml_text)?;

    let a = study.truth;
    let mut t = Table::new("Analytic attribution of the generating models", &["quantity", "value"]);
    for (name, v) in [("p_A", a.p_a), ("z_A", a.z_a), ("p_C", a.p_c), ("log2 RR", a.log2_rr), ("RR", a.rr)] {
        t.push(vec![name.into(), Cell::num(v)]);
    }
    t.note(format!("wrote {} files to {}", out.written().len(), out.dir().display()));
    print!("{}", t.to_text());
    Ok(())
}
