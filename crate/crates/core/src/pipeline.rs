//! End-to-end query processing: plan, retrieve, fill coverage gaps, prompt
//! the completer and decode its actions; plus the batch evaluation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_action, CodecConfig, CodecError, ContinuousControl, DiscreteAction};
use crate::coverage::{
    coverage_gap, fill_gaps, tokens_of, CoverageError, StaticLibrary, TokenSet, DEFAULT_BETA, DEFAULT_GAMMA,
};
use crate::demo::{
    canonical_json, save_library, DemoError, DemoLibrary, Demonstration, DEFAULT_VELOCITY_THRESHOLD,
};
use crate::prompt::{
    assemble_prompt, build_query_block, parse_action_response, scene_state_text, ClipEvent, PromptBundle,
    PromptError,
};
use crate::providers::{
    Completer, EmbedSource, Embedder, MockRule, MockScript, Planner, ProviderConfig, ProviderError,
};
use crate::retrieval::{rank_and_select, EmbeddingVector, RankedCandidate, RetrievalError, RetrievalParams};
use crate::skill::SkillSequence;
use crate::synthetic;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    Missing(PathBuf),
    #[error("config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<ProviderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completer: Option<ProviderConfig>,
    #[serde(default = "ProviderConfig::precomputed")]
    pub embedder: ProviderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<ProviderConfig>,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self { planner: None, completer: None, embedder: ProviderConfig::precomputed(), annotator: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_library: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_sim: usize,
    pub k_cov: usize,
    pub total_demos: usize,
    pub velocity_threshold: f64,
    pub codec: CodecConfig,
    /// Cap on the offline static library size; `None` is uncapped.
    pub static_budget: Option<usize>,
    pub max_prompt_chars: Option<usize>,
    /// Reject out-of-range action values instead of clipping them.
    pub strict_parse: bool,
    /// Leave demos of the query's own task out of retrieval.
    pub exclude_same_task: bool,
    /// Concurrent queries in `eval_batch`.
    pub parallelism: usize,
    pub providers: ProvidersConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            alpha: 0.5,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            k_sim: 17,
            k_cov: 3,
            total_demos: 20,
            velocity_threshold: DEFAULT_VELOCITY_THRESHOLD,
            codec: CodecConfig::default(),
            static_budget: None,
            max_prompt_chars: None,
            strict_parse: false,
            exclude_same_task: true,
            parallelism: 1,
            providers: ProvidersConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|_| ConfigError::Missing(path.to_path_buf()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.paths.library);
        resolve(base, &mut self.paths.static_library);
        resolve(base, &mut self.paths.output);
        let p = &mut self.providers;
        for cfg in [&mut p.planner, &mut p.completer, &mut p.annotator].into_iter().flatten() {
            cfg.resolve_paths(base);
        }
        p.embedder.resolve_paths(base);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.k_sim + self.k_cov != self.total_demos {
            return invalid(format!(
                "k_sim ({}) + k_cov ({}) must equal total_demos ({})",
                self.k_sim, self.k_cov, self.total_demos
            ));
        }
        if let Err(e) = self.retrieval_params().validate() {
            return invalid(e.to_string());
        }
        if self.beta.is_nan() || self.gamma.is_nan() || self.beta < 0.0 || self.gamma < 0.0 {
            return invalid(format!("beta and gamma must be >= 0, got {} and {}", self.beta, self.gamma));
        }
        if self.velocity_threshold.is_nan() || self.velocity_threshold <= 0.0 {
            return invalid(format!("velocity_threshold must be positive, got {}", self.velocity_threshold));
        }
        if self.parallelism == 0 {
            return invalid("parallelism must be >= 1".into());
        }
        if let Err(e) = self.codec.validate() {
            return invalid(e.to_string());
        }
        let p = &self.providers;
        for cfg in [&p.planner, &p.completer, &p.annotator].into_iter().flatten() {
            cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        p.embedder.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams { k_sim: self.k_sim, lambda: self.lambda, alpha: self.alpha }
    }

    /// Canonical JSON of every effective setting.
    pub fn effective_dump(&self) -> String {
        canonical_json(self)
    }
}

/// Runtime model clients for one pipeline.
pub struct Providers {
    pub planner: Planner,
    pub completer: Completer,
    pub embedder: Embedder,
}

impl Providers {
    pub fn from_config(cfg: &ProvidersConfig) -> Result<Self, ProviderError> {
        let need = |c: &Option<ProviderConfig>, role: &str| {
            c.clone().ok_or_else(|| ProviderError::Config(format!("no {role} provider configured")))
        };
        Ok(Self {
            planner: Planner::from_config(&need(&cfg.planner, "planner")?)?,
            completer: Completer::from_config(&need(&cfg.completer, "completer")?)?,
            embedder: Embedder::from_config(&cfg.embedder)?,
        })
    }
}

/// Where a query's visual embedding comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Precomputed(PathBuf),
    Image(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub id: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_name: Option<String>,
    #[serde(default)]
    pub objects: BTreeMap<String, [u32; 3]>,
    #[serde(default = "default_open")]
    pub gripper_open: bool,
    pub embedding: EmbeddingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_actions: Option<Vec<DiscreteAction>>,
}

fn default_open() -> bool {
    true
}

impl QuerySpec {
    pub fn scene_text(&self) -> String {
        scene_state_text(&self.objects, self.gripper_open)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = match &mut self.embedding {
            EmbeddingSpec::Precomputed(p) | EmbeddingSpec::Image(p) => p,
        };
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryManifest {
    pub queries: Vec<QuerySpec>,
}

impl QueryManifest {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|_| ConfigError::Missing(path.to_path_buf()))?;
        let mut m: Self = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for q in &mut m.queries {
            q.resolve_paths(base);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Plan,
    Retrieve,
    Cover,
    Infer,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plan => "plan",
            Self::Retrieve => "retrieve",
            Self::Cover => "cover",
            Self::Infer => "infer",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("embedding has zero norm")]
    DegenerateEmbedding,
    #[error("static library references {0}, which is not in the demo library")]
    UnknownDemo(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptStats {
    pub dynamic_blocks: usize,
    pub coverage_blocks: usize,
    pub total_chars: usize,
}

/// Provenance of one query. Fields of phases that did not run stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub instruction: String,
    pub scene: String,
    pub plan: SkillSequence,
    pub plan_skipped_lines: Vec<String>,
    pub dynamic: Vec<RankedCandidate>,
    pub coverage_ids: Vec<String>,
    pub gap_before: TokenSet,
    pub gap_after: TokenSet,
    pub prompt: PromptStats,
    pub response: String,
    pub actions: Vec<DiscreteAction>,
    pub controls: Vec<ContinuousControl>,
    pub clips: Vec<ClipEvent>,
    pub skipped_groups: Vec<String>,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub prompt_bundle: Option<PromptBundle>,
}

impl QueryResult {
    pub fn dynamic_ids(&self) -> Vec<&str> {
        self.dynamic.iter().map(|c| c.demo_id.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        canonical_json(self)
    }
}

#[derive(Debug, Error)]
#[error("query {} failed in phase {phase}: {error}", partial.query_id)]
pub struct QueryFailure {
    pub phase: Phase,
    #[source]
    pub error: PipelineError,
    /// Everything produced before the failing phase.
    pub partial: Box<QueryResult>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub plan_ms: f64,
    pub retrieve_ms: f64,
    pub cover_ms: f64,
    pub infer_ms: f64,
}

/// Inputs that stay fixed across queries.
pub struct Context<'a> {
    pub library: &'a DemoLibrary,
    pub static_library: &'a StaticLibrary,
    pub providers: &'a Providers,
    pub config: &'a PipelineConfig,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one query, also reporting per-phase wall time.
pub fn run_query_timed(
    query: &QuerySpec,
    ctx: &Context<'_>,
) -> (Result<QueryResult, QueryFailure>, PhaseTimings) {
    let mut timings = PhaseTimings::default();
    let mut r = QueryResult {
        query_id: query.id.clone(),
        instruction: query.instruction.clone(),
        scene: query.scene_text(),
        ..Default::default()
    };
    let outcome = run_phases(query, ctx, &mut r, &mut timings);
    let result = match outcome {
        Ok(()) => Ok(r),
        Err((phase, error)) => Err(QueryFailure { phase, error, partial: Box::new(r) }),
    };
    (result, timings)
}

pub fn run_query(query: &QuerySpec, ctx: &Context<'_>) -> Result<QueryResult, QueryFailure> {
    run_query_timed(query, ctx).0
}

fn run_phases(
    query: &QuerySpec,
    ctx: &Context<'_>,
    r: &mut QueryResult,
    timings: &mut PhaseTimings,
) -> Result<(), (Phase, PipelineError)> {
    let cfg = ctx.config;
    let at = |phase: Phase| move |e: PipelineError| (phase, e);

    let t = Instant::now();
    let planned =
        ctx.providers.planner.plan(&query.instruction, &r.scene).map_err(|e| (Phase::Plan, e.into()))?;
    r.plan = planned.plan;
    r.plan_skipped_lines = planned.skipped;
    if r.plan.is_empty() {
        r.flags.push("plan-empty".into());
    }
    timings.plan_ms = ms(t);

    let t = Instant::now();
    let selected = retrieve(query, &r.plan, ctx).map_err(at(Phase::Retrieve))?;
    r.dynamic = selected;
    timings.retrieve_ms = ms(t);

    let t = Instant::now();
    let dynamic: Vec<&Demonstration> = r
        .dynamic
        .iter()
        .map(|c| lookup(ctx.library, &c.demo_id))
        .collect::<Result<_, _>>()
        .map_err(at(Phase::Cover))?;
    let covered: TokenSet = dynamic.iter().flat_map(|d| tokens_of(&d.skills)).collect();
    r.gap_before = coverage_gap(&tokens_of(&r.plan), &covered);
    let excluded: BTreeSet<&str> = r.dynamic.iter().map(|c| c.demo_id.as_str()).collect();
    let fill = fill_gaps(&r.gap_before, ctx.static_library, cfg.k_cov, &excluded);
    r.coverage_ids = fill.ids;
    r.gap_after = fill.remaining_gap;
    if !r.gap_after.is_empty() {
        r.flags.push("gap-unfilled".into());
    }
    let coverage: Vec<&Demonstration> = r
        .coverage_ids
        .iter()
        .map(|id| lookup(ctx.library, id))
        .collect::<Result<_, _>>()
        .map_err(at(Phase::Cover))?;
    timings.cover_ms = ms(t);

    let t = Instant::now();
    let infer = |r: &mut QueryResult| -> Result<(), PipelineError> {
        let query_block = build_query_block(&query.instruction, &r.scene, &r.plan);
        let bundle = assemble_prompt(&dynamic, &coverage, query_block, cfg.max_prompt_chars)?;
        r.prompt = PromptStats {
            dynamic_blocks: dynamic.len(),
            coverage_blocks: coverage.len(),
            total_chars: bundle.total_chars,
        };
        r.prompt_bundle = Some(bundle);
        let bundle = r.prompt_bundle.as_ref().expect("just set");
        r.response = ctx.providers.completer.complete(bundle)?;
        let parsed = parse_action_response(&r.response, &cfg.codec, cfg.strict_parse)?;
        if !parsed.clips.is_empty() {
            r.flags.push("actions-clipped".into());
        }
        r.controls = parsed.actions.iter().map(|a| decode_action(a, &cfg.codec)).collect::<Result<_, _>>()?;
        r.actions = parsed.actions;
        r.clips = parsed.clips;
        r.skipped_groups = parsed.skipped;
        Ok(())
    };
    let out = infer(r).map_err(at(Phase::Infer));
    timings.infer_ms = ms(t);
    out
}

fn lookup<'a>(lib: &'a DemoLibrary, id: &str) -> Result<&'a Demonstration, PipelineError> {
    lib.get(id).ok_or_else(|| PipelineError::UnknownDemo(id.to_string()))
}

fn retrieve(
    query: &QuerySpec,
    plan: &SkillSequence,
    ctx: &Context<'_>,
) -> Result<Vec<RankedCandidate>, PipelineError> {
    let source = match &query.embedding {
        EmbeddingSpec::Precomputed(p) => EmbedSource::Precomputed(p),
        EmbeddingSpec::Image(p) => EmbedSource::Image(p),
    };
    let v = ctx.providers.embedder.embed(source)?;
    let v = EmbeddingVector::new(v).ok_or(PipelineError::DegenerateEmbedding)?;
    let exclude = query.task_name.as_deref().filter(|_| ctx.config.exclude_same_task);
    Ok(rank_and_select(&v, plan, ctx.library, &ctx.config.retrieval_params(), exclude)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timings: PhaseTimings,
    pub dynamic_count: usize,
    pub coverage_count: usize,
    pub gap_before: usize,
    pub gap_after: usize,
    pub action_count: usize,
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    /// Largest per-element difference over aligned tuples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linf: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub queries: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub with_oracle: usize,
    pub exact_matches: usize,
    pub gaps_filled: usize,
    pub mean_coverage_demos: f64,
    /// Number of queries per predicted action count.
    pub action_counts: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub summary: BatchSummary,
    pub queries: Vec<QueryReport>,
}

/// Exact match and L∞ distance between predicted and oracle tuples. A
/// length mismatch is never an exact match; L∞ covers the aligned prefix.
pub fn compare_actions(pred: &[DiscreteAction], oracle: &[DiscreteAction]) -> (bool, u32) {
    let linf = pred
        .iter()
        .zip(oracle)
        .flat_map(|(p, o)| p.to_array().into_iter().zip(o.to_array()))
        .map(|(a, b)| a.abs_diff(b))
        .max()
        .unwrap_or(0);
    (pred == oracle, linf)
}

fn report_for(
    query: &QuerySpec,
    outcome: &Result<QueryResult, QueryFailure>,
    timings: PhaseTimings,
) -> QueryReport {
    let (r, failure) = match outcome {
        Ok(r) => (r, None),
        Err(f) => (&*f.partial, Some(f)),
    };
    let oracle = query.oracle_actions.as_deref().filter(|_| failure.is_none());
    let cmp = oracle.map(|o| compare_actions(&r.actions, o));
    QueryReport {
        query_id: query.id.clone(),
        ok: failure.is_none(),
        failed_phase: failure.map(|f| f.phase),
        error: failure.map(|f| f.error.to_string()),
        timings,
        dynamic_count: r.dynamic.len(),
        coverage_count: r.coverage_ids.len(),
        gap_before: r.gap_before.len(),
        gap_after: r.gap_after.len(),
        action_count: r.actions.len(),
        flags: r.flags.clone(),
        exact_match: cmp.map(|c| c.0),
        linf: cmp.map(|c| c.1),
    }
}

/// Runs every query, isolating failures, with up to `config.parallelism`
/// queries in flight. Reports are ordered by query id.
pub fn eval_batch(
    manifest: &QueryManifest,
    ctx: &Context<'_>,
) -> Result<(BatchReport, Vec<Result<QueryResult, QueryFailure>>), PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.config.parallelism)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    let mut runs: Vec<(QueryReport, Result<QueryResult, QueryFailure>)> = pool.install(|| {
        manifest
            .queries
            .par_iter()
            .map(|q| {
                let (outcome, timings) = run_query_timed(q, ctx);
                if let Err(f) = &outcome {
                    log::warn!("{f}");
                }
                (report_for(q, &outcome, timings), outcome)
            })
            .collect()
    });
    runs.sort_by(|a, b| a.0.query_id.cmp(&b.0.query_id));
    let (queries, outcomes): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let mut s = BatchSummary { queries: queries.len(), ..Default::default() };
    for q in queries.iter().filter(|q| q.ok) {
        s.succeeded += 1;
        *s.action_counts.entry(q.action_count).or_insert(0) += 1;
        s.mean_coverage_demos += q.coverage_count as f64;
        if q.gap_before > 0 && q.gap_after == 0 {
            s.gaps_filled += 1;
        }
        if let Some(m) = q.exact_match {
            s.with_oracle += 1;
            s.exact_matches += usize::from(m);
        }
    }
    s.failed = s.queries - s.succeeded;
    if s.succeeded > 0 {
        s.mean_coverage_demos /= s.succeeded as f64;
    }
    Ok((BatchReport { summary: s, queries }, outcomes))
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    /// Fixed-width human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:<6} {:>4} {:>4} {:>5} {:>5} {:>4} {:>5} {:>5} {:>9}\n",
            "query", "status", "dyn", "cov", "gap0", "gap1", "acts", "exact", "linf", "total_ms"
        );
        for q in &self.queries {
            let status = match q.failed_phase {
                None => "ok".to_string(),
                Some(p) => format!("F:{p}"),
            };
            let t = q.timings;
            out.push_str(&format!(
                "{:<12} {:<6} {:>4} {:>4} {:>5} {:>5} {:>4} {:>5} {:>5} {:>9.3}\n",
                q.query_id,
                status,
                q.dynamic_count,
                q.coverage_count,
                q.gap_before,
                q.gap_after,
                q.action_count,
                q.exact_match.map_or("-".into(), |m| if m { "yes" } else { "no" }.to_string()),
                q.linf.map_or("-".into(), |v| v.to_string()),
                t.plan_ms + t.retrieve_ms + t.cover_ms + t.infer_ms,
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "queries {}  ok {}  failed {}  exact {}/{}  gaps filled {}  mean coverage demos {:.3}\n",
            s.queries,
            s.succeeded,
            s.failed,
            s.exact_matches,
            s.with_oracle,
            s.gaps_filled,
            s.mean_coverage_demos
        ));
        out
    }
}

/// Mock planner script answering each query's instruction with its plan.
pub fn planner_script(queries: &[synthetic::SyntheticQuery]) -> MockScript {
    MockScript {
        rules: queries
            .iter()
            .map(|q| MockRule {
                contains: format!("Instruction: {}\n", q.instruction),
                reply: Some(q.plan_text()),
                error: None,
            })
            .collect(),
        ..Default::default()
    }
}

/// Mock completer script keyed on each query's instruction and scene.
pub fn completer_script(queries: &[synthetic::SyntheticQuery]) -> MockScript {
    MockScript {
        rules: queries
            .iter()
            .map(|q| MockRule {
                contains: format!(
                    "Instruction: {}\nObservation: {}",
                    q.instruction,
                    scene_state_text(&q.objects, q.gripper_open)
                ),
                reply: Some(q.actions_text()),
                error: None,
            })
            .collect(),
        ..Default::default()
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DemoError::Io { path: parent.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| DemoError::Io { path: path.to_path_buf(), source: e }.into())
}

/// Writes a self-contained synthetic workspace under `dir`: planted-gap
/// library with placeholder images, static library, query embeddings and
/// manifest, mock scripts and `config.json`. Returns the config path.
pub fn write_synthetic_workspace(dir: &Path, seed: u64, n_queries: usize) -> Result<PathBuf, PipelineError> {
    let mut cfg = PipelineConfig::default();
    let demos = synthetic::generate_demos(seed, &synthetic::PLANTED_GAP_COUNTS, &cfg.codec);
    let lib = DemoLibrary::new(demos, cfg.codec, "synthetic", format!("synthetic seed {seed}"))?;
    let lib_dir = dir.join("library");
    save_library(&lib, &lib_dir)?;
    synthetic::write_placeholder_images(lib.demos(), &lib_dir)
        .map_err(|e| DemoError::Io { path: lib_dir.clone(), source: e })?;
    let st = crate::coverage::build_static_library(&lib, cfg.beta, cfg.gamma, cfg.static_budget)?;
    st.save(&dir.join("static.json"))?;

    let queries = synthetic::generate_queries(seed, n_queries, &cfg.codec);
    let specs = queries
        .iter()
        .map(|q| {
            let emb = format!("queries/{}.json", q.id);
            write(&dir.join(&emb), &canonical_json(&q.embedding))?;
            Ok(QuerySpec {
                id: q.id.clone(),
                instruction: q.instruction.clone(),
                task_name: Some(q.task_name.clone()),
                objects: q.objects.clone(),
                gripper_open: q.gripper_open,
                embedding: EmbeddingSpec::Precomputed(emb.into()),
                oracle_actions: Some(q.actions.clone()),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    write(&dir.join("queries.json"), &canonical_json(&QueryManifest { queries: specs }))?;
    write(&dir.join("planner.json"), &canonical_json(&planner_script(&queries)))?;
    write(&dir.join("completer.json"), &canonical_json(&completer_script(&queries)))?;

    cfg.providers.planner = Some(ProviderConfig::mock("planner.json"));
    cfg.providers.completer = Some(ProviderConfig::mock("completer.json"));
    cfg.paths.library = Some("library".into());
    cfg.paths.static_library = Some("static.json".into());
    let path = dir.join("config.json");
    write(&path, &cfg.effective_dump())?;
    Ok(path)
}
