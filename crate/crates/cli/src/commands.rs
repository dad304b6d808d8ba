use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use recompose::collect::{
    collect_episodes, copy_keyframe_images, corpus_stats, read_episodes, ChatAnnotator,
};
use recompose::coverage::build_static_library;
use recompose::pipeline::{
    eval_batch, run_query, write_synthetic_workspace, Context, EmbeddingSpec, PipelineConfig, Providers,
    QueryManifest, QuerySpec,
};
use recompose::providers::{build_chat_model, EmbedSource, Embedder, Planner};
use recompose::retrieval::rank_all;
use recompose::{load_library, save_library, DemoLibrary, EmbeddingVector, SkillSequence, StaticLibrary};

use crate::exit::{Category, CliError};
use crate::{
    BuildStaticArgs, Cli, CollectArgs, Command, EvalArgs, InferArgs, Overrides, QueryArgs, RetrieveArgs,
    SynthArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Synth(args) = &cli.command {
        return synth(args);
    }
    let (cfg, synthetic_manifest) = match &cli.command {
        Command::Eval(EvalArgs { synthetic: Some(n), seed, out, .. }) => {
            let dir = report_dir(out.as_deref(), &cli.overrides).join("workspace");
            if cli.config.is_some() {
                log::warn!("--config is ignored with --synthetic; using the generated workspace config");
            }
            let path = write_synthetic_workspace(&dir, *seed, *n)?;
            (load_config(Some(&path), &cli.overrides)?, Some(dir.join("queries.json")))
        }
        _ => (load_config(cli.config.as_deref(), &cli.overrides)?, None),
    };
    match cli.command {
        Command::DumpConfig => {
            println!("{}", cfg.effective_dump());
            Ok(())
        }
        Command::Collect(args) => collect(&args, &cfg),
        Command::BuildStatic(args) => build_static(&args, &cfg),
        Command::Retrieve(args) => retrieve(&args, &cfg),
        Command::Infer(args) => infer(&args, &cfg),
        Command::Eval(args) => eval(&args, &cfg, synthetic_manifest),
        Command::Validate => validate(&cfg),
        Command::Stats => stats(&cfg),
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    apply_overrides(&mut cfg, o);
    cfg.validate()?;
    log::info!(
        "effective config: {}",
        serde_json::to_string(&cfg).unwrap_or_else(|e| format!("<unprintable: {e}>"))
    );
    Ok(cfg)
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &Overrides) {
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.lambda, o.lambda);
    set(&mut cfg.alpha, o.alpha);
    set(&mut cfg.beta, o.beta);
    set(&mut cfg.gamma, o.gamma);
    set(&mut cfg.velocity_threshold, o.velocity_threshold);
    if let Some(k) = o.k_sim {
        cfg.k_sim = k;
    }
    if let Some(k) = o.k_cov {
        cfg.k_cov = k;
    }
    cfg.total_demos = match o.total_demos {
        Some(t) => t,
        None if o.k_sim.is_some() || o.k_cov.is_some() => cfg.k_sim + cfg.k_cov,
        None => cfg.total_demos,
    };
    if let Some(p) = o.parallelism {
        cfg.parallelism = p;
    }
    if o.library.is_some() {
        cfg.paths.library = o.library.clone();
    }
    if o.static_library.is_some() {
        cfg.paths.static_library = o.static_library.clone();
    }
    if o.output.is_some() {
        cfg.paths.output = o.output.clone();
    }
}

fn config_path<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| {
        CliError::new(
            Category::Config,
            format!("no {what} path: set paths.{what} in the config or pass --{}", what.replace('_', "-")),
        )
    })
}

fn library(cfg: &PipelineConfig) -> Result<DemoLibrary> {
    let dir = config_path(&cfg.paths.library, "library")?;
    if !dir.is_dir() {
        return Err(CliError::new(Category::Io, format!("library directory {} not found", dir.display())));
    }
    let lib = load_library(dir)?;
    if lib.codec() != &cfg.codec {
        log::warn!("library codec differs from the configured codec; using the library's");
    }
    Ok(lib)
}

/// Loads the configured static library, or builds one in memory.
fn static_library(cfg: &PipelineConfig, lib: &DemoLibrary) -> Result<StaticLibrary> {
    match &cfg.paths.static_library {
        Some(p) => Ok(StaticLibrary::load(p)?),
        None => {
            log::info!("no static library configured; building one from the library");
            Ok(build_static_library(lib, cfg.beta, cfg.gamma, cfg.static_budget)?)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn collect(args: &CollectArgs, cfg: &PipelineConfig) -> Result<()> {
    let annotator_cfg = cfg
        .providers
        .annotator
        .as_ref()
        .ok_or_else(|| CliError::new(Category::Config, "no annotator provider configured"))?;
    let annotator = ChatAnnotator::new(build_chat_model(annotator_cfg)?);
    let out = match &args.out {
        Some(p) => p.as_path(),
        None => config_path(&cfg.paths.library, "library")?,
    };
    let episodes = read_episodes(&args.raw)?;
    log::info!("annotating {} episodes from {}", episodes.len(), args.raw.display());
    let demos = collect_episodes(&episodes, &annotator, &cfg.codec, cfg.velocity_threshold, &args.raw)?;
    for (ep, demo) in episodes.iter().zip(&demos) {
        copy_keyframe_images(ep, demo, &args.raw, out)?;
    }
    let stats = corpus_stats(&demos);
    let source = format!("collected from {}", args.raw.display());
    let lib = DemoLibrary::new(demos, cfg.codec, args.created.clone(), source)?;
    save_library(&lib, out)?;
    println!(
        "wrote {} demos ({} segments, {} distinct verbs) to {}",
        lib.len(),
        stats.total_segments,
        stats.verbs.len(),
        out.display()
    );
    Ok(())
}

fn build_static(args: &BuildStaticArgs, cfg: &PipelineConfig) -> Result<()> {
    let lib = library(cfg)?;
    let budget = args.budget.or(cfg.static_budget);
    let st = build_static_library(&lib, cfg.beta, cfg.gamma, budget)?;
    let out = match &args.out {
        Some(p) => p.as_path(),
        None => config_path(&cfg.paths.static_library, "static_library")?,
    };
    st.save(out)?;
    println!(
        "selected {} of {} demos covering {} tokens; wrote {}",
        st.entries.len(),
        lib.len(),
        st.covered_tokens().len(),
        out.display()
    );
    for id in st.ids() {
        println!("{id}");
    }
    Ok(())
}

fn parse_object(text: &str) -> Result<(String, [u32; 3])> {
    let usage = || CliError::new(Category::Usage, format!("--object expects NAME=IX,IY,IZ, got {text:?}"));
    let (name, coords) = text.split_once('=').ok_or_else(usage)?;
    let v: Vec<u32> = coords
        .split(',')
        .map(|c| c.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage())?;
    let xyz: [u32; 3] = v.try_into().map_err(|_| usage())?;
    if name.trim().is_empty() {
        return Err(usage());
    }
    Ok((name.trim().to_string(), xyz))
}

fn query_spec(args: &QueryArgs) -> Result<QuerySpec> {
    if let Some(path) = &args.query {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut q: QuerySpec = serde_json::from_str(&text)
            .map_err(|e| CliError::new(Category::Validation, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut q.embedding {
            EmbeddingSpec::Precomputed(p) | EmbeddingSpec::Image(p) if p.is_relative() => *p = base.join(&*p),
            _ => {}
        }
        return Ok(q);
    }
    let instruction = args
        .instruction
        .clone()
        .ok_or_else(|| CliError::new(Category::Usage, "pass --query FILE or --instruction"))?;
    let embedding = match (&args.embedding, &args.image) {
        (Some(p), _) => EmbeddingSpec::Precomputed(p.clone()),
        (None, Some(p)) => EmbeddingSpec::Image(p.clone()),
        (None, None) => return Err(CliError::new(Category::Usage, "pass --embedding FILE or --image FILE")),
    };
    let objects: BTreeMap<String, [u32; 3]> =
        args.objects.iter().map(|o| parse_object(o)).collect::<Result<_>>()?;
    Ok(QuerySpec {
        id: args.id.clone(),
        instruction,
        task_name: args.task_name.clone(),
        objects,
        gripper_open: !args.gripper_closed,
        embedding,
        oracle_actions: None,
    })
}

fn parse_plan_flag(text: &str) -> Result<SkillSequence> {
    let labels: Vec<&str> = text.split("->").map(str::trim).filter(|s| !s.is_empty()).collect();
    SkillSequence::parse_all(&labels).map_err(|e| CliError::new(Category::Usage, format!("--plan: {e}")))
}

fn retrieve(args: &RetrieveArgs, cfg: &PipelineConfig) -> Result<()> {
    let lib = library(cfg)?;
    let q = query_spec(&args.query)?;
    let plan = match &args.plan {
        Some(text) => parse_plan_flag(text)?,
        None => {
            let planner_cfg = cfg.providers.planner.as_ref().ok_or_else(|| {
                CliError::new(Category::Config, "no planner provider configured; pass --plan")
            })?;
            Planner::from_config(planner_cfg)?.plan(&q.instruction, &q.scene_text())?.plan
        }
    };
    log::info!("plan: {}", plan.render_chain());
    let embedder = Embedder::from_config(&cfg.providers.embedder)?;
    let source = match &q.embedding {
        EmbeddingSpec::Precomputed(p) => EmbedSource::Precomputed(p),
        EmbeddingSpec::Image(p) => EmbedSource::Image(p),
    };
    let v = EmbeddingVector::new(embedder.embed(source)?)
        .ok_or_else(|| CliError::new(Category::Validation, "query embedding has zero norm"))?;
    let exclude = q.task_name.as_deref().filter(|_| cfg.exclude_same_task);
    let mut ranked = rank_all(&v, &plan, &lib, &cfg.retrieval_params(), exclude)
        .map_err(|e| CliError::new(Category::Validation, e.to_string()))?;
    if !args.all {
        ranked.truncate(cfg.k_sim);
    }
    println!("demo_id\ts_vis\ts_vis_norm\ts_plan\tfused");
    for c in &ranked {
        println!("{}", c.tsv_row());
    }
    Ok(())
}

fn infer(args: &InferArgs, cfg: &PipelineConfig) -> Result<()> {
    let lib = library(cfg)?;
    let st = static_library(cfg, &lib)?;
    let providers = Providers::from_config(&cfg.providers)?;
    let q = query_spec(&args.query)?;
    let ctx = Context { library: &lib, static_library: &st, providers: &providers, config: cfg };
    let outcome = run_query(&q, &ctx);
    let result = match &outcome {
        Ok(r) => r,
        Err(f) => &*f.partial,
    };
    if let (Some(path), Some(bundle)) = (&args.dump_prompt, &result.prompt_bundle) {
        write_text(path, &bundle.render())?;
    }
    let r = outcome?;
    let json = r.to_json();
    match &args.out {
        Some(path) => write_text(path, &json)?,
        None => println!("{json}"),
    }
    for flag in &r.flags {
        log::warn!("{}: {flag}", r.query_id);
    }
    Ok(())
}

fn report_dir(out: Option<&Path>, o: &Overrides) -> PathBuf {
    out.map(Path::to_path_buf).or_else(|| o.output.clone()).unwrap_or_else(|| PathBuf::from("eval-out"))
}

fn eval(args: &EvalArgs, cfg: &PipelineConfig, synthetic_manifest: Option<PathBuf>) -> Result<()> {
    let manifest_path = match (&args.manifest, synthetic_manifest) {
        (_, Some(p)) => p,
        (Some(p), None) => p.clone(),
        (None, None) => return Err(CliError::new(Category::Usage, "pass --manifest FILE or --synthetic N")),
    };
    let manifest = QueryManifest::load(&manifest_path)?;
    let out =
        args.out.clone().or_else(|| cfg.paths.output.clone()).unwrap_or_else(|| PathBuf::from("eval-out"));
    let lib = library(cfg)?;
    let st = static_library(cfg, &lib)?;
    let providers = Providers::from_config(&cfg.providers)?;
    let ctx = Context { library: &lib, static_library: &st, providers: &providers, config: cfg };
    let (report, outcomes) = eval_batch(&manifest, &ctx)?;
    let table = report.to_table();
    write_text(&out.join("report.json"), &report.to_json())?;
    write_text(&out.join("report.txt"), &table)?;
    for outcome in outcomes.iter().flatten() {
        write_text(&out.join("results").join(format!("{}.json", outcome.query_id)), &outcome.to_json())?;
    }
    print!("{table}");
    log::info!("reports written to {}", out.display());
    let s = &report.summary;
    if s.failed > 0 {
        return Err(CliError::new(
            Category::PartialBatch,
            format!("{} of {} queries failed", s.failed, s.queries),
        ));
    }
    Ok(())
}

fn validate(cfg: &PipelineConfig) -> Result<()> {
    let lib = library(cfg)?;
    println!("library: {} demos, valid", lib.len());
    if let Some(p) = &cfg.paths.static_library {
        let st = StaticLibrary::load(p)?;
        let ids: BTreeSet<&str> = lib.demos().iter().map(|d| d.id.as_str()).collect();
        let unknown: Vec<&str> = st.ids().filter(|id| !ids.contains(id)).collect();
        if !unknown.is_empty() {
            return Err(CliError::new(
                Category::Validation,
                format!("static library references unknown demos: {}", unknown.join(", ")),
            ));
        }
        println!("static library: {} demos, valid", st.entries.len());
    }
    Ok(())
}

fn stats(cfg: &PipelineConfig) -> Result<()> {
    let lib = library(cfg)?;
    let s = corpus_stats(lib.demos());
    println!("demos\t{}\nsegments\t{}", lib.len(), s.total_segments);
    for (verb, n) in &s.verbs {
        println!("verb\t{verb}\t{n}");
    }
    for (label, n) in &s.labels {
        println!("label\t{label}\t{n}");
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let path = write_synthetic_workspace(&args.out, args.seed, args.queries)?;
    println!("{}", path.display());
    Ok(())
}
