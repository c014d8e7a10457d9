mod args;
mod settings;
mod stages;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use idlink::synthgen::{generate_pair, SynthConfig};
use idlink::ErrorClass;

use args::{Cli, Command, Stage, SynthArgs};
use stages::{MissingPrerequisite, Runner};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<idlink::Error>() {
            return match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<MissingPrerequisite>() || cause.is::<std::io::Error>() {
            return EXIT_DATA;
        }
    }
    1
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_users: a.users,
        attachment_m: a.attachment_m,
        edge_drop_p: a.edge_drop,
        attr_drop_p: a.attr_drop,
        char_noise_p: a.char_noise,
        word_swap_p: a.word_swap,
        n_topics: a.topics,
        seed: cli.seed.unwrap_or(1),
    };
    let pair = generate_pair(&cfg)?;
    let paths = pair.write(&cli.out_dir)?;
    log::info!(
        "wrote {} + {} users, {} + {} edges, {} true pairs",
        pair.x.n_users(),
        pair.y.n_users(),
        pair.x.edges().len(),
        pair.y.edges().len(),
        pair.truth.len()
    );
    println!("{}", paths.pairs.parent().unwrap_or(&cli.out_dir).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    if let Command::Synth(a) = &cli.command {
        return match synth(&cli, a) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                log::error!("{e:#}");
                ExitCode::from(exit_code(&e))
            }
        };
    }

    let cfg = match settings::resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            log::error!("{e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if let Command::Config = cli.command {
        for line in cfg.to_lines() {
            println!("{line}");
        }
        return ExitCode::SUCCESS;
    }

    let stage = match &cli.command {
        Command::Embed => Some(Stage::Embed),
        Command::Fuse => Some(Stage::Fuse),
        Command::Train => Some(Stage::Train),
        Command::Match => Some(Stage::Match),
        Command::Eval => Some(Stage::Eval),
        Command::Run { stage } => *stage,
        Command::Synth(_) | Command::Config => unreachable!(),
    };

    let result = Runner::new(cfg, &cli.out_dir, cli.csv).and_then(|mut runner| runner.run(stage));
    match result {
        Ok(dir) => {
            log::info!("artifacts in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
