//! Command-line workbench around `strateval`: stored datasets, model sets,
//! evaluation records and run manifests under one data root.

pub mod cli;
pub mod commands;
pub mod config;
pub mod failure;
pub mod manifest;
pub mod store;
pub mod tables;

use std::path::PathBuf;

use cli::{Cli, Command};
use commands::Env;
use config::RunConfig;
use failure::Outcome;
use store::{Home, DEFAULT_HOME};

/// Runs one parsed command and returns what it prints.
pub fn run(cli: &Cli) -> Outcome<String> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let home = Home::new(cli.home.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_HOME)));
    let env = Env { home, config, config_path: cli.config.clone() };
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&env, a),
        Command::Simulate(a) => commands::simulate(&env, a),
        Command::Propensity(a) => commands::propensity(&env, a),
        Command::Stratify(a) => commands::stratify(&env, a),
        Command::Train(a) => commands::train(&env, a),
        Command::Evaluate(a) => commands::evaluate(&env, a),
        Command::Compare(a) => commands::compare(&env, a),
        Command::Report(a) => commands::report(&env, a),
    }
}
