"""End-to-end train / classify / explain / evaluate runs driven by one config file.

Input paths in the config resolve against the config file's directory;
``models`` and ``outputs`` resolve against the working directory.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import yaml

from . import plotting
from .classifier import ClassifierModel, FocalLossParams, TrainingConfig, candidate_labels, train
from .corpus import (Article, CorpusError, GoldAnnotation, load_articles, load_corpus,
                     read_annotations, read_article, split, write_annotations)
from .embedding import Embedder, EmbedderConfig, make_embedder
from .evaluation import (classification_report, compare_runs, detail_rows, format_console,
                         generation_report, generation_rows, write_table)
from .llm import (ChatBackend, ChatBackendConfig, Explanation, RefinementResult,
                  build_react_prompt, generate_explanation, make_chat_backend, refine)
from .retrieval import RetrievalConfig, SentenceIndex, index_article, retrieve_dual_pass
from .taxonomy import Taxonomy, domain_of_label, load_taxonomy, merge_taxonomies

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    taxonomy_cc: Path
    taxonomy_urw: Path
    articles: Path | None = None
    annotations: Path | None = None
    models: Path = Path("narrlens-out/models")
    outputs: Path = Path("narrlens-out")


@dataclass
class PipelineConfig:
    paths: Paths
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    chat: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    loss: FocalLossParams = field(default_factory=FocalLossParams)
    eval_average: str = "samples"
    parallelism: int = 4
    split_ratio: float = 0.8
    fallback_k: int = 3
    language_default: str = "EN"
    seed: int = 0
    offline: bool = False

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def with_overrides(self, seed: int | None = None, offline: bool | None = None) -> "PipelineConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, training=replace(cfg.training, seed=seed))
        if offline:
            cfg = replace(cfg, offline=True, embedder=replace(cfg.embedder, backend="deterministic"))
        return cfg


def _section(cls, raw: dict | None, name: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    base = path.resolve().parent
    p = dict(raw.pop("paths", {}) or {})
    for key in ("taxonomy_cc", "taxonomy_urw"):
        if key not in p:
            raise ConfigError(f"paths.{key} is required")
    resolved = {}
    for key, value in p.items():
        if value is None:
            continue
        value = Path(value)
        if key in ("models", "outputs"):
            resolved[key] = value
        else:
            resolved[key] = value if value.is_absolute() else base / value
    paths = _section(Paths, resolved, "paths")
    chat_raw = dict(raw.pop("chat", {}) or {})
    if chat_raw.get("mock_script"):
        script = Path(chat_raw["mock_script"])
        chat_raw["mock_script"] = str(script if script.is_absolute() else base / script)
    seed = raw.pop("seed", 0)
    top = {f.name for f in fields(PipelineConfig)} - {"paths", "seed"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    training_raw = dict(raw.pop("training", {}) or {})
    training_raw.setdefault("seed", seed)
    return PipelineConfig(
        paths=paths,
        embedder=_section(EmbedderConfig, raw.pop("embedder", None), "embedder"),
        chat=_section(ChatBackendConfig, chat_raw, "chat"),
        retrieval=_section(RetrievalConfig, raw.pop("retrieval", None), "retrieval"),
        training=_section(TrainingConfig, training_raw, "training"),
        loss=_section(FocalLossParams, raw.pop("loss", None), "loss"),
        seed=seed,
        **{k: v for k, v in raw.items()},
    )


def load_taxonomies(cfg: PipelineConfig) -> dict[str, Taxonomy]:
    return {
        "CC": load_taxonomy(cfg.paths.taxonomy_cc, "CC"),
        "URW": load_taxonomy(cfg.paths.taxonomy_urw, "URW"),
    }


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} path not configured")
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


# --------------------------------------------------------------------------- train


def run_train(cfg: PipelineConfig, embedder: Embedder | None = None) -> dict[str, Path]:
    taxonomies = load_taxonomies(cfg)
    dataset = load_corpus(_require(cfg.paths.articles, "articles directory"),
                          _require(cfg.paths.annotations, "annotations file"),
                          taxonomies["CC"], taxonomies["URW"], cfg.language_default)
    embedder = embedder or make_embedder(cfg.embedder, cfg.offline)
    cfg.paths.models.mkdir(parents=True, exist_ok=True)
    cfg.paths.outputs.mkdir(parents=True, exist_ok=True)

    written, summary = {}, {"seed": cfg.seed, "domains": {}}
    for domain, taxonomy in taxonomies.items():
        if not any(a.domain == domain for a in dataset):
            log.warning("no %s articles in corpus; skipping the %s model", domain, domain)
            continue
        subset = dataset.by_domain(domain)
        train_set, val_set = split(subset, cfg.split_ratio, cfg.seed)
        model = train(train_set, val_set, embedder, taxonomy, cfg.training, cfg.loss)
        model_path = cfg.paths.models / f"{domain}.json"
        model.save(model_path)
        written[domain] = model_path
        summary["domains"][domain] = {
            "train_articles": len(train_set),
            "validation_articles": len(val_set),
            "loss_curve": model.loss_curve,
            "thresholds": dict(zip(model.vocab, model.thresholds.values.tolist())),
        }
    (cfg.paths.outputs / "training_summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if written:
        plotting.plot_loss_curves({d: summary["domains"][d]["loss_curve"] for d in written},
                                  cfg.paths.outputs / "loss_curve.png")
    return written


# ------------------------------------------------------------------------ classify


@dataclass
class ArticleOutcome:
    filename: str
    candidates: list[str] = field(default_factory=list)
    stage1: list[str] = field(default_factory=list)
    result: RefinementResult | None = None
    error: str | None = None


@dataclass
class ClassifyRun:
    predictions: Path
    errors: Path
    outcomes: list[ArticleOutcome]

    @property
    def failed(self) -> list[ArticleOutcome]:
        return [o for o in self.outcomes if o.error]


def load_models(cfg: PipelineConfig) -> dict[str, ClassifierModel]:
    models = {}
    for domain in ("CC", "URW"):
        path = cfg.paths.models / f"{domain}.json"
        if path.is_file():
            models[domain] = ClassifierModel.load(path)
    if not models:
        raise ConfigError(f"no trained models in {cfg.paths.models}; run `narrlens train` first")
    return models


def _ordered_map(fn: Callable, items: Sequence, parallelism: int) -> list:
    if parallelism == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def _write_errors(path: Path, outcomes) -> None:
    lines = [f"{o.filename}\t{' '.join(o.error.split())}" for o in outcomes if o.error]
    path.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def classify_article(article: Article, models: dict[str, ClassifierModel],
                     taxonomies: dict[str, Taxonomy], embedder: Embedder, backend: ChatBackend,
                     fallback_k: int = 3) -> ArticleOutcome:
    outcome = ArticleOutcome(f"{article.id}.txt")
    try:
        vector = embedder.embed([article.text])[0]
        domains = [article.domain] if article.domain in models else list(models)
        candidates: list[str] = []
        for d in domains:
            for lab in candidate_labels(models[d], vector, fallback_k):
                if lab not in candidates:
                    candidates.append(lab)
        taxonomy = (taxonomies[domains[0]] if len(domains) == 1
                    else merge_taxonomies(*(taxonomies[d] for d in domains)))
        outcome.candidates = candidates
        outcome.stage1, outcome.result = refine(backend, article, candidates, taxonomy)
    except Exception as exc:  # recorded per article, never fatal for the batch
        log.error("%s: %s", outcome.filename, exc)
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


def run_classify(cfg: PipelineConfig, articles_dir: str | Path, output: str | Path | None = None,
                 embedder: Embedder | None = None, backend: ChatBackend | None = None,
                 domain: str | None = None) -> ClassifyRun:
    taxonomies = load_taxonomies(cfg)
    models = load_models(cfg)
    articles = load_articles(articles_dir, cfg.language_default)
    if domain:
        articles = [replace(a, domain=domain) for a in articles]
    embedder = embedder or make_embedder(cfg.embedder, cfg.offline)
    backend = backend or make_chat_backend(cfg.chat, cfg.offline)
    output = Path(output) if output else cfg.paths.outputs / "predictions.tsv"
    output.parent.mkdir(parents=True, exist_ok=True)

    outcomes = _ordered_map(
        lambda a: classify_article(a, models, taxonomies, embedder, backend, cfg.fallback_k),
        articles, cfg.parallelism)
    write_annotations(output, [(o.filename, o.result.narratives, o.result.subs)
                               for o in outcomes if o.result])
    errors = output.with_name(output.name + ".errors.tsv")
    _write_errors(errors, outcomes)
    return ClassifyRun(output, errors, outcomes)


# ------------------------------------------------------------------------- explain


@dataclass
class ExplainOutcome:
    filename: str
    explanation: Explanation | None = None
    index: SentenceIndex | None = None
    error: str | None = None


@dataclass
class ExplainRun:
    explanations: Path
    errors: Path
    outcomes: list[ExplainOutcome]

    @property
    def failed(self) -> list[ExplainOutcome]:
        return [o for o in self.outcomes if o.error]


def read_explain_requests(path: str | Path) -> list[tuple[str, str, list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"explain input not found: {path}")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) not in (2, 3):
            raise CorpusError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
        subs = [s.strip() for s in cells[2].split(";") if s.strip()] if len(cells) == 3 else []
        out.append((cells[0].strip(), cells[1].strip(), subs))
    return out


def explain_article(filename: str, dominant: str, subs: list[str], articles_dir: Path,
                    taxonomies: dict[str, Taxonomy], embedder: Embedder, backend: ChatBackend,
                    rcfg: RetrievalConfig, language_default: str) -> ExplainOutcome:
    outcome = ExplainOutcome(filename)
    try:
        path = articles_dir / filename
        if not path.is_file():
            raise CorpusError(f"article file not found: {filename}")
        article = read_article(path, language_default)
        d = domain_of_label(dominant)
        taxonomy = taxonomies[d] if d else merge_taxonomies(*taxonomies.values())
        idx = index_article(article, embedder, rcfg)
        outcome.index = idx
        try:
            evidence = retrieve_dual_pass(idx, taxonomy, dominant, subs, embedder, rcfg)
        finally:
            idx.drop()
        bundle = build_react_prompt(evidence, dominant, subs, taxonomy)
        outcome.explanation = generate_explanation(backend, bundle, evidence)
    except Exception as exc:  # recorded per article
        log.error("%s: %s", filename, exc)
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


def run_explain(cfg: PipelineConfig, requests_file: str | Path, articles_dir: str | Path | None = None,
                output: str | Path | None = None, embedder: Embedder | None = None,
                backend: ChatBackend | None = None) -> ExplainRun:
    taxonomies = load_taxonomies(cfg)
    requests = read_explain_requests(requests_file)
    articles_dir = Path(articles_dir) if articles_dir else _require(cfg.paths.articles, "articles directory")
    embedder = embedder or make_embedder(cfg.embedder, cfg.offline)
    backend = backend or make_chat_backend(cfg.chat, cfg.offline)
    output = Path(output) if output else cfg.paths.outputs / "explanations.tsv"
    output.parent.mkdir(parents=True, exist_ok=True)

    outcomes = _ordered_map(
        lambda r: explain_article(r[0], r[1], r[2], articles_dir, taxonomies, embedder, backend,
                                  cfg.retrieval, cfg.language_default),
        requests, cfg.parallelism)
    lines = [f"{o.filename}\t{o.explanation.text}" for o in outcomes if o.explanation]
    output.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")
    errors = output.with_name(output.name + ".errors.tsv")
    _write_errors(errors, outcomes)
    return ExplainRun(output, errors, outcomes)


# ------------------------------------------------------------------------ evaluate


def read_predictions(path: str | Path) -> dict[str, tuple]:
    return {ann.article_id: (ann.narratives, ann.sub_narratives) for _, ann in read_annotations(path)}


def read_text_pairs(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 2 or not cells[1].strip():
            raise CorpusError(f"{path}:{lineno}: expected `<filename>\\t<text>`")
        out[cells[0].strip()] = cells[1].strip()
    return out


def run_evaluate(cfg: PipelineConfig, predictions: dict[str, str | Path] | str | Path,
                 gold: str | Path, explanations: str | Path | None = None,
                 references: str | Path | None = None, fmt: str = "tsv",
                 output_dir: str | Path | None = None, embedder: Embedder | None = None) -> dict[str, Path]:
    if not isinstance(predictions, dict):
        predictions = {"run": predictions}
    out_dir = Path(output_dir) if output_dir else cfg.paths.outputs
    out_dir.mkdir(parents=True, exist_ok=True)
    gold_path = Path(gold)
    if not gold_path.is_file():
        raise CorpusError(f"gold file not found: {gold_path}")
    golds: dict[str, GoldAnnotation] = {ann.article_id: ann for _, ann in read_annotations(gold_path)}
    runs = {name: read_predictions(p) for name, p in predictions.items()}

    ext = "json" if fmt == "json" else "tsv"
    written = {}
    header, rows = compare_runs(runs, golds, cfg.eval_average)
    written["classification"] = write_table(out_dir / f"classification_report.{ext}", header, rows, fmt)
    reports = {name: classification_report(p, golds, cfg.eval_average) for name, p in runs.items()}
    dh, drows = detail_rows(reports)
    written["classification_details"] = write_table(out_dir / f"classification_details.{ext}", dh, drows, fmt)
    written["classification_figure"] = plotting.plot_run_comparison(
        header, rows, out_dir / "classification_report.png")
    print(format_console(header, rows))

    if (explanations is None) != (references is None):
        raise ConfigError("explanations and references must be given together")
    if explanations is not None:
        cands, refs = read_text_pairs(explanations), read_text_pairs(references)
        if set(cands) != set(refs):
            raise CorpusError(f"explanation/reference id mismatch: {sorted(set(cands) ^ set(refs))[:5]}")
        embedder = embedder or make_embedder(cfg.embedder, cfg.offline)
        report = generation_report({k: (cands[k], refs[k]) for k in sorted(cands)}, embedder)
        gh, grows = generation_rows(report)
        written["generation"] = write_table(out_dir / f"generation_report.{ext}", gh, grows, fmt)
        written["generation_figure"] = plotting.plot_generation(report, out_dir / "generation_report.png")
        print()
        print(format_console(gh, grows))
    return written
