"""Command-line pipeline orchestration.

Each subcommand reads the single JSON configuration, consumes upstream
artifacts (verifying their provenance chains), and writes its own artifact
plus a provenance sidecar. Exit status is nonzero exactly when a pipeline
error contract fires.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import provenance
from .classifier import TrainConfig, fine_tune, load_model, predict_batch, save_model, write_predictions
from .config import PipelineConfig, load_config, write_default_config
from .encoder import EncoderConfig, pretrain_encoder
from .errors import DependencyError, PipelineError
from .evaluation import paired_battery, plot_decomposition, run_cross_validation, write_report
from .ingest import (FixtureSource, GitHubSource, IssueFilter, IssueReport,
                     ProjectFilter, SecurityTagSet, build_balanced_corpus, fetch_issues,
                     load_tag_file, read_corpus, write_corpus)
from .labels import NON_SECURITY, SECURITY
from .masking import apply_masks, apply_masks_label_free, apply_random_masks, read_masked, write_masked
from .preprocess import (Preprocessor, default_stopwords, parse_wordlist, preprocess_corpus,
                         read_preprocessed, write_preprocessed)
from .surrogates import (rake_extract, read_lexicon, read_random_lists, resolve_conflicts,
                         sample_random_keywords, select_top_k, write_lexicon, write_random_lists)
from .synthetic import SyntheticConfig, generate_synthetic_corpus

LOGGER = logging.getLogger(__name__)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing upstream artifact {what} at {path}; "
                              f"run the producing command first", artifact=what)
    return path


def _check_fresh(path: Path, what: str) -> None:
    """An artifact is stale when any input recorded in its provenance sidecar
    no longer hashes to the recorded value."""
    meta = provenance.read_meta(path)
    if not meta:
        return
    for name, recorded in meta.get("inputs", {}).items():
        input_path = meta.get("input_paths", {}).get(name)
        if not input_path or not Path(input_path).exists():
            continue
        if provenance.hash_file(input_path) != recorded:
            raise DependencyError(
                f"artifact {what} at {path} is stale: input {name!r} changed since it was built",
                artifact=what,
            )


def _consume(path: Path, what: str) -> Path:
    _require(path, what)
    _check_fresh(path, what)
    return path


def _build_preprocessor(config: PipelineConfig) -> Preprocessor:
    section = config["preprocess"]
    stop_path = config.optional_path("preprocess", "stop_words_file")
    stops = (frozenset(parse_wordlist(stop_path.read_text("utf-8")))
             if stop_path else default_stopwords())
    from .lemmas import Lemmatizer

    return Preprocessor(
        stop_words=stops,
        symbol_density_threshold=float(section["symbol_density_threshold"]),
        trace_score_threshold=float(section["trace_score_threshold"]),
        lemmatizer=Lemmatizer(section["lemmatizer_backend"]),
    )


def _train_config(config: PipelineConfig, encoder_dir: Path,
                  seed: int | None, epochs: int | None) -> TrainConfig:
    section = dict(config["train"])
    if seed is not None:
        section["seed"] = seed
    if epochs is not None:
        section["epochs"] = epochs
    return TrainConfig(encoder_id=str(encoder_dir), **{
        k: section[k] for k in ("epochs", "batch_size", "learning_rate",
                                "max_sequence_length", "seed", "data_workers",
                                "cls_loss_weight", "weight_decay", "gradient_clip")
    })


pass_config = click.make_pass_decorator(PipelineConfig)


@click.group()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Pipeline config JSON.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, config_path, verbose):
    """Security-issue triage pipeline: mine, preprocess, mask, train, evaluate."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = load_config(config_path)
    ctx.obj.path("workdir").mkdir(parents=True, exist_ok=True)


@main.command("init-config")
@click.argument("out", type=click.Path())
def cmd_init_config(out):
    """Write a default configuration file to OUT."""
    write_default_config(out)
    click.echo(f"wrote default config to {out}")


@main.command("ingest")
@click.option("--offline", is_flag=True, help="Replay recorded fixture payloads instead of live HTTP.")
@click.option("--quota", type=int, default=None, help="Override fetch quota.")
@pass_config
def cmd_ingest(config, offline, quota):
    """Fetch issues, adjudicate labels, and persist a balanced corpus."""
    section = config["ingest"]
    tag_path = config.optional_path("ingest", "tag_file")
    tags = load_tag_file(tag_path) if tag_path else None
    tag_set = (SecurityTagSet(tags=frozenset(tags), match_mode=section["match_mode"])
               if tags else SecurityTagSet(match_mode=section["match_mode"]))

    issue_filter = IssueFilter(window_start=section["window_start"],
                               window_end=section["window_end"])
    project_filter = ProjectFilter(**section["project_filter"]) if section["project_filter"] else None

    if offline or section["fixture_dir"]:
        fixture_dir = config.optional_path("ingest", "fixture_dir")
        if fixture_dir is None:
            raise DependencyError("offline ingestion requires ingest.fixture_dir",
                                  artifact="fixture_dir")
        source = FixtureSource(fixture_dir)
    else:
        source = GitHubSource()

    issues = fetch_issues(section["repo_query"], issue_filter, tag_set,
                          quota or section["quota"], project_filter, source=source)
    pools = {
        SECURITY: [i for i in issues if i.label == SECURITY],
        NON_SECURITY: [i for i in issues if i.label == NON_SECURITY],
    }
    corpus = build_balanced_corpus(pools, section["per_class"], section["balance_seed"],
                                   provenance={
                                       "window": [section["window_start"], section["window_end"]],
                                       "tag_set_hash": tag_set.content_hash(),
                                       "repo_query": section["repo_query"],
                                   })
    out = config.path("corpus")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(out, corpus)
    provenance.write_meta(out, {}, config=config.snapshot())
    click.echo(f"wrote {len(corpus.issues)} issues to {out}")


@main.command("synth-corpus")
@click.option("--n-issues", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=20240101, show_default=True)
@pass_config
def cmd_synth_corpus(config, n_issues, seed):
    """Generate the seeded synthetic corpus (offline demo and acceptance runs)."""
    corpus = generate_synthetic_corpus(SyntheticConfig(n_issues=n_issues, seed=seed))
    out = config.path("corpus")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(out, corpus)
    provenance.write_meta(out, {}, config=config.snapshot())
    click.echo(f"wrote {len(corpus.issues)} synthetic issues to {out}")


@main.command("preprocess")
@pass_config
def cmd_preprocess(config):
    """Normalize and lemmatize the corpus into token streams."""
    corpus_path = _consume(config.path("corpus"), "corpus")
    corpus = read_corpus(corpus_path)
    pre = _build_preprocessor(config)
    items = preprocess_corpus(corpus.issues, pre)
    out = config.path("preprocessed")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_preprocessed(out, items)
    provenance.write_meta(out, {"corpus": corpus_path}, config=config.snapshot())
    click.echo(f"wrote {len(items)} preprocessed issues to {out}")


@main.command("mine-surrogates")
@pass_config
def cmd_mine_surrogates(config):
    """Extract, deduplicate, and rank the per-class keyword lexicon; also
    sample the seeded random keyword lists for the ablation."""
    section = config["surrogates"]
    pre_path = _consume(config.path("preprocessed"), "preprocessed")
    items = read_preprocessed(pre_path)
    stops = set(default_stopwords()) | {w.lower() for w in section["extra_miner_stops"]}

    docs = {label: [p.tokens for p in items if p.label == label]
            for label in (SECURITY, NON_SECURITY)}
    for label, class_docs in docs.items():
        if not class_docs:
            raise DependencyError(f"no preprocessed issues labeled {label}",
                                  artifact="preprocessed")
    rake = {label: rake_extract(class_docs, stops) for label, class_docs in docs.items()}
    disjoint = resolve_conflicts(rake[SECURITY], rake[NON_SECURITY])

    allow_path = config.optional_path("surrogates", "allow_file")
    deny_path = config.optional_path("surrogates", "deny_file")
    allow = parse_wordlist(allow_path.read_text("utf-8")) if allow_path else ()
    deny = parse_wordlist(deny_path.read_text("utf-8")) if deny_path else ()
    lexicon = select_top_k(disjoint, section["k"], allow=allow, deny=deny,
                           provenance={"preprocessed": provenance.hash_file(pre_path)})
    lex_out = config.path("lexicon")
    write_lexicon(lex_out, lexicon)
    provenance.write_meta(lex_out, {"preprocessed": pre_path}, config=config.snapshot())

    vocabulary = {label: rake[label].vocabulary for label in rake}
    random_lists = sample_random_keywords(vocabulary, lexicon, section["k"],
                                          section["random_seed"])
    rnd_out = config.path("random_keywords")
    write_random_lists(rnd_out, random_lists)
    provenance.write_meta(rnd_out, {"preprocessed": pre_path, "lexicon": lex_out},
                          config=config.snapshot())
    for label in (SECURITY, NON_SECURITY):
        flag = " (truncated)" if lexicon.truncated.get(label) else ""
        click.echo(f"{label}: {len(lexicon.entries[label])} keywords{flag}")
    click.echo(f"wrote lexicon to {lex_out} and random lists to {rnd_out}")


@main.command("mask")
@click.option("--random", "use_random", is_flag=True,
              help="Mask the seeded random keyword lists instead of the lexicon.")
@pass_config
def cmd_mask(config, use_random):
    """Replace keyword occurrences with the [MASK] sentinel."""
    pre_path = _consume(config.path("preprocessed"), "preprocessed")
    items = read_preprocessed(pre_path)
    if use_random:
        src_path = _consume(config.path("random_keywords"), "random_keywords")
        source = read_random_lists(src_path)
        instances = [apply_random_masks(p, source) for p in items]
        out = config.path("masked_random")
    else:
        src_path = _consume(config.path("lexicon"), "lexicon")
        source = read_lexicon(src_path)
        instances = [apply_masks(p, source) for p in items]
        out = config.path("masked")
    write_masked(out, instances)
    provenance.write_meta(out, {"preprocessed": pre_path, "keywords": src_path},
                          config=config.snapshot())
    masked_count = sum(1 for i in instances if i.mask_positions)
    click.echo(f"wrote {len(instances)} instances ({masked_count} with masks) to {out}")


@main.command("build-encoder")
@pass_config
def cmd_build_encoder(config):
    """Pretrain the miniature bidirectional encoder checkpoint from the
    preprocessed token streams."""
    pre_path = _consume(config.path("preprocessed"), "preprocessed")
    items = read_preprocessed(pre_path)
    encoder_config = EncoderConfig(**config["encoder"])
    out = pretrain_encoder([p.tokens for p in items], encoder_config, config.path("encoder"))
    provenance.write_meta(out / "encoder.pt", {"preprocessed": pre_path},
                          config=config.snapshot())
    click.echo(f"pretrained encoder checkpoint at {out}")


@main.command("train")
@click.option("--random", "use_random", is_flag=True, help="Train on the random-masked dataset.")
@click.option("--seed", type=int, default=None, help="Override training seed.")
@click.option("--epochs", type=int, default=None, help="Override epoch count.")
@pass_config
def cmd_train(config, use_random, seed, epochs):
    """Fine-tune the classifier on the masked dataset."""
    masked_path = _consume(config.path("masked_random" if use_random else "masked"), "masked")
    encoder_dir = config.path("encoder")
    _consume(encoder_dir / "encoder.pt", "encoder")
    instances = read_masked(masked_path)
    train_config = _train_config(config, encoder_dir, seed, epochs)
    model = fine_tune(instances, train_config)
    out = save_model(model, config.path("checkpoint"))
    provenance.write_meta(out / "model.json",
                          {"masked": masked_path, "encoder": encoder_dir / "encoder.pt"},
                          config=config.snapshot())
    click.echo(f"saved checkpoint to {out} (initial digest {model.initial_weights_digest[:12]})")


@main.command("evaluate")
@click.option("--ablation", is_flag=True,
              help="Run keyword-masked and random-masked conditions on identical "
                   "folds and emit the paired statistical comparison.")
@click.option("--folds", type=int, default=None, help="Override fold count.")
@click.option("--seed", type=int, default=None, help="Override training seed.")
@click.option("--epochs", type=int, default=None, help="Override epoch count.")
@pass_config
def cmd_evaluate(config, ablation, folds, seed, epochs):
    """Cross-validate the classifier; optionally compare masking conditions."""
    section = config["evaluate"]
    pre_path = _consume(config.path("preprocessed"), "preprocessed")
    lex_path = _consume(config.path("lexicon"), "lexicon")
    encoder_dir = config.path("encoder")
    _consume(encoder_dir / "encoder.pt", "encoder")

    items = read_preprocessed(pre_path)
    lexicon = read_lexicon(lex_path)
    train_config = _train_config(config, encoder_dir, seed, epochs)
    n_folds = folds or section["folds"]

    report = run_cross_validation(items, lexicon, train_config, folds=n_folds,
                                  fold_seed=section["fold_seed"],
                                  threshold=section["threshold"],
                                  provenance={"lexicon": provenance.hash_file(lex_path)})
    if ablation:
        rnd_path = _consume(config.path("random_keywords"), "random_keywords")
        random_lists = read_random_lists(rnd_path)
        random_report = run_cross_validation(items, random_lists, train_config,
                                             folds=n_folds, fold_seed=section["fold_seed"],
                                             threshold=section["threshold"])
        pairs = {
            metric: ([getattr(f, metric) for f in report.folds],
                     [getattr(f, metric) for f in random_report.folds])
            for metric in ("precision", "recall", "f1")
        }
        report.stats = {
            "comparison": "keyword_masking_vs_random_masking",
            "battery": paired_battery(pairs),
            "random_condition": {"means": random_report.means, "stds": random_report.stds},
        }
    out = config.path("report")
    write_report(out, report)
    provenance.write_meta(out, {"preprocessed": pre_path, "lexicon": lex_path},
                          config=config.snapshot())
    if section["plots"]:
        paths = plot_decomposition(report.decomposition, config.path("workdir") / "plots")
        click.echo("plots: " + ", ".join(str(p) for p in paths))
    click.echo(json.dumps({"means": report.means, "stds": report.stds}, indent=2, sort_keys=True))
    click.echo(f"wrote evaluation report to {out}")


@main.command("classify")
@click.option("--input", "input_path", required=True, type=click.Path(),
              help="JSONL of raw issues to classify (labels not required).")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), default=None,
              help="Classifier checkpoint directory (defaults to the configured path).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output predictions JSONL (defaults to the configured path).")
@pass_config
def cmd_classify(config, input_path, checkpoint_path, out_path):
    """Classify unlabeled issues with majority voting over masked keyword
    occurrences, falling back to the sequence head when nothing matches."""
    lex_path = _consume(config.path("lexicon"), "lexicon")
    ckpt = Path(checkpoint_path) if checkpoint_path else config.path("checkpoint")
    _require(ckpt / "model.json", "checkpoint")
    model = load_model(ckpt)
    lexicon = read_lexicon(lex_path)
    pre = _build_preprocessor(config)

    issues = []
    with open(input_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                issues.append(IssueReport(
                    id=record.get("id", f"input#{len(issues)}"),
                    repo=record.get("repo", ""),
                    title=record.get("title", ""),
                    body=record.get("body", ""),
                    tags=[t.lower() for t in record.get("tags", [])],
                    created_at=record.get("created_at", ""),
                    is_pull_request=record.get("is_pull_request", False),
                    label=record.get("label"),
                ))
    preprocessed = preprocess_corpus(issues, pre)
    instances = [apply_masks_label_free(p, lexicon) for p in preprocessed]
    outcomes = predict_batch(model, instances, threshold=config["classify"]["threshold"])
    out = Path(out_path) if out_path else config.path("predictions")
    write_predictions(out, outcomes)
    provenance.write_meta(out, {"lexicon": lex_path, "checkpoint": ckpt / "model.json"},
                          config=config.snapshot())
    tally = {SECURITY: 0, NON_SECURITY: 0}
    for o in outcomes:
        tally[o.final_label] += 1
    click.echo(f"classified {len(outcomes)} issues ({tally[SECURITY]} security, "
               f"{tally[NON_SECURITY]} non-security) -> {out}")


@main.command("verify")
@pass_config
def cmd_verify(config):
    """Re-check the provenance hash chain of every artifact on disk."""
    checked = 0
    for name in ("corpus", "preprocessed", "lexicon", "random_keywords",
                 "masked", "masked_random", "report", "predictions"):
        path = config.path(name)
        if not path.exists():
            continue
        _check_fresh(path, name)
        checked += 1
    for name, sub in (("encoder", "encoder.pt"), ("checkpoint", "model.json")):
        path = config.path(name) / sub
        if path.exists():
            _check_fresh(path, name)
            checked += 1
    click.echo(f"verified {checked} artifacts: provenance chain intact")


@main.command("ablation-experiment")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Working directory (defaults to workdir/ablation).")
@pass_config
def cmd_ablation_experiment(config, out_dir):
    """Run the full synthetic end-to-end masking comparison used by the
    acceptance suite."""
    from .experiment import run_masking_ablation

    work = Path(out_dir) if out_dir else config.path("workdir") / "ablation"
    summary = run_masking_ablation(work)
    click.echo(json.dumps({
        "surrogate_mean_f1": summary["surrogate"]["mean_f1"],
        "random_mean_f1": summary["random"]["mean_f1"],
        "gap_f1": summary["gap_f1"],
    }, indent=2))


def entrypoint():
    try:
        main(standalone_mode=False)
    except PipelineError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":
    entrypoint()
