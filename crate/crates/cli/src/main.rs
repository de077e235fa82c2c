use std::io;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use popbo::bench::{episode_setup, InstanceKind};
use popbo::session::Session;
use popbo_cli::cli::{base_seed, run_bench, Cli, Command, InteractiveArgs};
use popbo_cli::service::{self, AppState};
use popbo_cli::{interactive, store, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Bench(args) => {
            let (dir, summary) = run_bench(&args, base_seed()?)?;
            println!("wrote {}", dir.display());
            println!(
                "final reported suboptimality: {:.4} (std {:.4})",
                summary.final_report_subopt.mean, summary.final_report_subopt.std
            );
            println!(
                "final cumulative regret: {:.4} (std {:.4})",
                summary.final_cumulative_regret.mean, summary.final_cumulative_regret.std
            );
            if let Some(slope) = summary.regret_slope {
                println!("regret log-log slope: {slope:.3}");
            }
            Ok(())
        }
        Command::Interactive(args) => run_interactive(&args),
        Command::Serve(args) => {
            let state = Arc::new(AppState::open(&args.checkpoint_dir)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(state, args.port))
        }
    }
}

fn checkpoint_name(kind: InstanceKind) -> String {
    format!("interactive-{kind}.json")
}

fn run_interactive(args: &InteractiveArgs) -> Result<(), CliError> {
    let path = args.checkpoint_dir.join(checkpoint_name(args.instance));
    let mut session = if path.exists() {
        let s = store::load(&path)?;
        println!("Resuming from {} after {} answers.", path.display(), s.t());
        s
    } else {
        let setup = episode_setup(args.instance, base_seed()?, &args.tuning.overrides()?)?;
        Session::new(setup.config)?
    };
    interactive::run(&mut session, args.horizon, &path, io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}
