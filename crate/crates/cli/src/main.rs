use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use storyweave_api::view::Annotator;
use storyweave_api::{serve, AppState, Service};
use storyweave_core::genai::{ProviderConfig, ProviderRegistry};
use storyweave_core::model::StoryProject;
use storyweave_core::{ComponentRef, Store, Studio};

#[derive(Parser)]
#[command(name = "storyweave", version, about = "Co-create illustrated six-scene stories")]
struct Cli {
    /// Data directory holding `projects/`.
    #[arg(long, global = true, env = "STORYWEAVE_STORE", default_value = "storyweave-data")]
    store: PathBuf,

    #[arg(long, global = true, default_value = "mock")]
    provider: String,

    /// Seed for the mock provider.
    #[arg(long = "seed-rng", global = true, default_value_t = 0)]
    seed_rng: u64,

    /// Project id; defaults to the session's current project.
    #[arg(long, global = true)]
    project: Option<String>,

    /// Fixture directory for `--provider replay` (default `<store>/fixtures`).
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,

    /// Record every provider reply into this fixture directory.
    #[arg(long, global = true)]
    record: Option<PathBuf>,

    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a new project from a seed idea.
    New {
        /// Seed text. Omit to use `--idea`.
        seed: Vec<String>,
        /// Use suggestion N (1-4) from `ideas`.
        #[arg(long, conflicts_with = "seed")]
        idea: Option<usize>,
    },
    /// Print four seed suggestions.
    Ideas,
    /// Print the project, or one component with its entity references.
    Show { component: Option<String> },
    /// Revise a component by instruction.
    Revise {
        component: String,
        #[arg(required = true)]
        instruction: Vec<String>,
    },
    /// Regenerate one scene, or every stale scene when none is given.
    Regen { scene: Option<String> },
    /// Write the 3x2 storyboard document.
    Export {
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Revert the latest revision.
    Undo,
    /// Archive the project and clear the session.
    StartOver,
    /// Serve the `/v1` HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn service(cli: &Cli) -> Result<Service> {
    let store = Store::open(&cli.store).with_context(|| format!("opening store {}", cli.store.display()))?;
    let config = ProviderConfig {
        seed: cli.seed_rng,
        fixtures: Some(cli.fixtures.clone().unwrap_or_else(|| cli.store.join("fixtures"))),
        record_to: cli.record.clone(),
    };
    let provider = ProviderRegistry::with_builtin().build(&cli.provider, &config)?;
    Ok(Service::new(store, Studio::new(provider)))
}

fn current(cli: &Cli, svc: &Service) -> Result<String> {
    cli.project
        .clone()
        .or(svc.session().current)
        .ok_or_else(|| anyhow!("no current project; pass --project <id> or run `new`"))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializes"));
}

fn summary(p: &StoryProject, archived: bool) -> String {
    let mut out = format!(
        "project {}{}\nseed: {}\n",
        p.id,
        if archived { " (archived)" } else { "" },
        p.seed.text
    );
    if let Some(s) = &p.storyline {
        let tones: Vec<&str> = s.tones.iter().map(|t| t.as_str()).collect();
        out.push_str(&format!("\nstoryline [{}]\n  {}\n", tones.join(", "), s.text));
    }
    if !p.personas.is_empty() {
        out.push_str("\npersonas\n");
        for x in &p.personas {
            out.push_str(&format!(
                "  {}  {}: {}; {}; {}; {}\n",
                x.id, x.name, x.age, x.clothing, x.skin, x.hair
            ));
        }
    }
    if !p.locations.is_empty() {
        out.push_str("\nlocations\n");
        for x in &p.locations {
            out.push_str(&format!("  {}  {}: {}\n", x.id, x.name, x.description));
        }
    }
    if !p.scenes.is_empty() {
        out.push_str("\nscenes\n");
    }
    for s in &p.scenes {
        let mut flags = Vec::new();
        if s.stale {
            flags.push("stale");
        }
        if s.possibly_inconsistent {
            flags.push("possibly inconsistent");
        }
        let flags = if flags.is_empty() {
            String::new()
        } else {
            format!(" [{}]", flags.join(", "))
        };
        out.push_str(&format!(
            "  scene-{}{flags}\n    prompt: {}\n    narration: {}\n",
            s.index, s.image_prompt, s.narration
        ));
    }
    out
}

fn report(cli: &Cli, applied: Option<&storyweave_core::Applied>, project: &StoryProject) {
    let view = Annotator::new(project).mutation(applied.map(|a| &a.revision));
    if cli.json {
        return print_json(&view);
    }
    let Some(a) = applied else {
        println!("nothing to do");
        return;
    };
    let r = &a.revision;
    println!("revision {} on {}", r.id, r.target);
    let dirty: Vec<String> = r
        .propagation
        .dirty_scenes
        .iter()
        .map(|i| format!("scene-{i}"))
        .collect();
    if !dirty.is_empty() {
        println!("dirty: {}", dirty.join(", "));
    }
    let changed: Vec<&str> = view.changed.iter().map(|c| c.reference.as_str()).collect();
    println!("changed: {}", changed.join(", "));
}

fn run(cli: Cli) -> Result<()> {
    let svc = service(&cli)?;
    match &cli.command {
        Command::New { seed, idea } => {
            let seed = match idea {
                Some(n) => {
                    let ideas = svc.ideas()?;
                    let pick = ideas
                        .get(n.wrapping_sub(1))
                        .ok_or_else(|| anyhow!("--idea takes 1..={}", ideas.len()))?;
                    svc.seed(None, Some(&pick.id))?
                }
                None => svc.seed(Some(&seed.join(" ")), None)?,
            };
            let project = svc.create(seed)?;
            if cli.json {
                print_json(&Annotator::new(&project).project(false));
            } else {
                print!("{}", summary(&project, false));
            }
        }
        Command::Ideas => {
            let ideas = svc.ideas()?;
            if cli.json {
                print_json(&ideas);
            } else {
                for (i, idea) in ideas.iter().enumerate() {
                    println!("{}. {}", i + 1, idea.text);
                }
            }
        }
        Command::Show { component } => {
            let id = current(&cli, &svc)?;
            let project = svc.load(&id)?;
            let archived = svc.archived(&id).is_some();
            let a = Annotator::new(&project);
            match component {
                Some(c) => {
                    let target: ComponentRef = c.parse().map_err(storyweave_api::ApiError::from)?;
                    print_json(&a.component(&target).map_err(storyweave_api::ApiError::from)?);
                }
                None if cli.json => print_json(&a.project(archived)),
                None => print!("{}", summary(&project, archived)),
            }
        }
        Command::Revise { component, instruction } => {
            let id = current(&cli, &svc)?;
            let applied = svc.revise(&id, component, &instruction.join(" "))?;
            report(&cli, Some(&applied), &applied.project);
        }
        Command::Regen { scene } => {
            let id = current(&cli, &svc)?;
            match scene {
                Some(s) => {
                    let index = s.strip_prefix("scene-").unwrap_or(s);
                    let applied = svc.regenerate_scene(&id, index)?;
                    report(&cli, Some(&applied), &applied.project);
                }
                None => {
                    let (project, applied) = svc.regenerate_stale(&id)?;
                    report(&cli, applied.as_ref(), &project);
                }
            }
        }
        Command::Export { format, out } => {
            let id = current(&cli, &svc)?;
            let assets = svc.store().project_dir(&id).join("assets");
            let base = format!("{}/", assets.display());
            let (_, body) = svc.export(&id, format, &base)?;
            match out {
                Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{body}"),
            }
        }
        Command::Undo => {
            let id = current(&cli, &svc)?;
            let applied = svc.undo(&id)?;
            report(&cli, Some(&applied), &applied.project);
        }
        Command::StartOver => {
            let id = current(&cli, &svc)?;
            let s = svc.start_over(&id)?;
            if cli.json {
                print_json(&s);
            } else if s.already_archived {
                println!("{id} was already archived");
            } else {
                println!("archived {id}");
            }
        }
        Command::Serve { addr } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(*addr, AppState::new(svc)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if cli.provider == "replay" && cli.record.is_some() {
        eprintln!("error: --record needs a provider that makes real calls");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
