"""Pipeline CLI: one command per stage over hash-chained file artifacts.

Stages read the previous stage's files, re-hash them against the
upstream metadata sidecar, and write their own outputs atomically plus a
<stage>.meta.json recording config and content hashes. Exit codes:
2 missing artifact, 3 hash mismatch, 4 dangling cluster id.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import artifacts, clustering, corpus, embedding, evaluation, extraction
from . import landscape as landscape_mod
from . import validation
from .config import (
    RunConfig,
    make_embedding_backend,
    make_qa_backend,
    make_tagger_backend,
    resolve_config,
)
from .errors import (
    ArtifactError,
    BackendConfigError,
    CorpusError,
    MappingOpError,
    RecordError,
    UnmappedClusterError,
)

logger = logging.getLogger(__name__)

DIALOGUES_FILE = "dialogues.jsonl"
CANDIDATES_FILE = "candidates.jsonl"
VALID_SPANS_FILE = "valid_spans.jsonl"
FUNNEL_FILE = "funnel.json"
VECTORS_FILE = "vectors.bin"
VECTORS_REFS_FILE = "vectors.bin.refs.jsonl"
CLUSTERS_FILE = "clusters.json"
DENDROGRAM_FILE = "dendrogram.json"
TAXONOMY_FILE = "taxonomy.json"
MAPPING_FILE = "mapping.json"
LANDSCAPE_FILE = "landscape.json"
REPORT_FILE = "report.json"
REVIEW_EXPORT_FILE = "review_export.json"


def _fail(exc: Exception, exit_code: int = 1) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exit_code)


def _config_from_ctx(ctx: click.Context, **flags) -> RunConfig:
    root = ctx.obj or {}
    if root.get("seed") is not None:
        flags.setdefault("seed", root["seed"])
    try:
        return resolve_config(
            cli_flags=flags,
            config_path=root.get("config_path"),
            preset=root.get("preset"),
        )
    except BackendConfigError as exc:
        _fail(exc)
        raise  # unreachable


def _atomic_json(path: Path, payload) -> None:
    artifacts.atomic_write_text(path, artifacts.canonical_json(payload))


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with RunConfig fields.")
@click.option("--preset", type=str, default=None,
              help="Domain preset: airline, media, insurance, finance, software.")
@click.option("--seed", type=int, default=None, help="Run seed recorded in metadata.")
@click.option("--force", is_flag=True, default=False,
              help="Continue past artifact hash mismatches.")
@click.option("-v", "--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx: click.Context, config_path: str | None, preset: str | None,
         seed: int | None, force: bool, verbose: bool) -> None:
    """Intent landscape pipeline over staged artifacts."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.obj = {
        "config_path": config_path,
        "preset": preset,
        "seed": seed,
        "force": force,
    }


def _workdir_option(fn):
    return click.option(
        "-w", "--workdir", type=click.Path(file_okay=False), default=".",
        help="Directory holding the run's artifacts.",
    )(fn)


@main.command("ingest")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@_workdir_option
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default=None,
              help="Source format; default follows the file suffix.")
@click.pass_context
def cmd_ingest(ctx: click.Context, source: str, workdir: str, fmt: str | None) -> None:
    """Parse a two-channel corpus into the normalized dialogues file."""
    cfg = _config_from_ctx(ctx)
    wd = Path(workdir)
    wd.mkdir(parents=True, exist_ok=True)
    src = Path(source)
    try:
        if fmt is None:
            dialogues = corpus.load_corpus(src)
        else:
            with src.open("rb") as fh:
                dialogues = corpus.parse_corpus(fh, fmt)
    except (CorpusError, RecordError) as exc:
        _fail(exc)
        return
    out = wd / DIALOGUES_FILE
    tmp = out.with_name(out.name + ".tmp")
    corpus.write_dialogues(tmp, dialogues)
    os.replace(tmp, out)
    artifacts.write_stage_meta(
        wd, "ingest", cfg.to_dict(), inputs={"source": src}, outputs={DIALOGUES_FILE: out}
    )
    click.echo(f"ingested {len(dialogues)} dialogues -> {out}")


@main.command("extract")
@_workdir_option
@click.option("--qa-backend", type=str, default=None,
              help="replay://FILE or an http(s) URL; default is the env QA URL.")
@click.option("--question", type=str, default=None, help="Prompt question text.")
@click.option("--question-index", type=int, default=None,
              help="Pick one of the stock questions (0-2) instead of --question.")
@click.option("--top-k", type=int, default=None)
@click.pass_context
def cmd_extract(ctx: click.Context, workdir: str, qa_backend: str | None,
                question: str | None, question_index: int | None,
                top_k: int | None) -> None:
    """Pull top-K candidate spans per dialogue from the QA backend."""
    if question_index is not None:
        stock = extraction.default_questions()
        if not (0 <= question_index < len(stock)):
            _fail(ValueError(f"question index {question_index} out of range"))
        question = stock[question_index]
    cfg = _config_from_ctx(
        ctx, qa_backend=qa_backend, question=question, top_k=top_k
    )
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        artifacts.verify_chain(wd, "ingest", {DIALOGUES_FILE: wd / DIALOGUES_FILE}, force)
        dialogues = corpus.load_corpus(wd / DIALOGUES_FILE)
        ctxs = [corpus.render_context(d) for d in dialogues]
        backend = make_qa_backend(cfg.qa_backend)
        ex_cfg = extraction.ExtractionConfig(question=cfg.question, top_k=cfg.top_k)
        spans = extraction.extract_corpus(ctxs, ex_cfg, backend)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    except (BackendConfigError, extraction.ExtractionError) as exc:
        _fail(exc)
        return
    out = wd / CANDIDATES_FILE
    tmp = out.with_name(out.name + ".tmp")
    extraction.write_candidates(tmp, spans)
    os.replace(tmp, out)
    artifacts.write_stage_meta(
        wd, "extract", cfg.to_dict(),
        inputs={DIALOGUES_FILE: wd / DIALOGUES_FILE},
        outputs={CANDIDATES_FILE: out},
    )
    total = sum(len(v) for v in spans.values())
    click.echo(f"extracted {total} candidates over {len(spans)} dialogues -> {out}")


@main.command("validate")
@_workdir_option
@click.option("--tagger-backend", type=str, default=None,
              help="baseline:// (default) or an http(s) URL.")
@click.pass_context
def cmd_validate(ctx: click.Context, workdir: str, tagger_backend: str | None) -> None:
    """Run the four-stage validation funnel over extracted candidates."""
    cfg = _config_from_ctx(ctx, tagger_backend=tagger_backend)
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        artifacts.verify_chain(wd, "ingest", {DIALOGUES_FILE: wd / DIALOGUES_FILE}, force)
        artifacts.verify_chain(wd, "extract", {CANDIDATES_FILE: wd / CANDIDATES_FILE}, force)
        extract_meta = artifacts.read_stage_meta(wd, "extract")
        dialogues = corpus.load_corpus(wd / DIALOGUES_FILE)
        ctxs = {d.id: corpus.render_context(d) for d in dialogues}
        candidates = extraction.read_candidates(wd / CANDIDATES_FILE)
        tagger = make_tagger_backend(cfg.tagger_backend)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    except BackendConfigError as exc:
        _fail(exc)
        return
    report, valid = validation.run_funnel(candidates, ctxs, tagger)
    spans_out = wd / VALID_SPANS_FILE
    tmp = spans_out.with_name(spans_out.name + ".tmp")
    validation.write_valid_spans(tmp, valid)
    os.replace(tmp, spans_out)
    funnel_out = wd / FUNNEL_FILE
    funnel_meta = {
        "question": extract_meta.get("config", {}).get("question", cfg.question),
        "qa_backend": extract_meta.get("config", {}).get("qa_backend", ""),
        "tagger_backend": cfg.tagger_backend,
        "domain": cfg.preset,
    }
    tmp = funnel_out.with_name(funnel_out.name + ".tmp")
    validation.write_funnel_report(tmp, report, funnel_meta)
    os.replace(tmp, funnel_out)
    artifacts.write_stage_meta(
        wd, "validate", cfg.to_dict(),
        inputs={DIALOGUES_FILE: wd / DIALOGUES_FILE, CANDIDATES_FILE: wd / CANDIDATES_FILE},
        outputs={VALID_SPANS_FILE: spans_out, FUNNEL_FILE: funnel_out},
    )
    pct = report.percentages
    click.echo(
        "funnel: "
        f"{report.initial_dialogues} -> {report.after_impossible} -> {report.after_pos}"
        f" -> {report.after_sentence} -> {report.after_channel}"
        f" ({pct[0]:.1f}/{pct[1]:.1f}/{pct[2]:.1f}/{pct[3]:.1f}%)"
    )


@main.command("embed")
@_workdir_option
@click.option("--embedding-backend", type=str, default=None,
              help="mock://[dim=D,spread=S], file://VECTORS, or an http(s) URL.")
@click.pass_context
def cmd_embed(ctx: click.Context, workdir: str, embedding_backend: str | None) -> None:
    """Embed every valid span into the vector file."""
    cfg = _config_from_ctx(ctx, embedding_backend=embedding_backend)
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        artifacts.verify_chain(wd, "validate", {VALID_SPANS_FILE: wd / VALID_SPANS_FILE}, force)
        valid = validation.read_valid_spans(wd / VALID_SPANS_FILE)
        backend = make_embedding_backend(cfg.embedding_backend)
        flat = [s for spans in valid.values() for s in spans]
        embedded = embedding.embed_spans(flat, backend)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    except (BackendConfigError, extraction.ExtractionError) as exc:
        _fail(exc)
        return
    out = wd / VECTORS_FILE
    refs = [e.span_ref for e in embedded]
    matrix = np.asarray([e.vector for e in embedded]) if embedded else np.zeros((0, 2))
    tmp_base = wd / (VECTORS_FILE + ".tmp")
    embedding.write_vector_file(tmp_base, refs, matrix)
    os.replace(tmp_base, out)
    os.replace(
        wd / (VECTORS_FILE + ".tmp.refs.jsonl"), wd / VECTORS_REFS_FILE
    )
    artifacts.write_stage_meta(
        wd, "embed", cfg.to_dict(),
        inputs={VALID_SPANS_FILE: wd / VALID_SPANS_FILE},
        outputs={VECTORS_FILE: out, VECTORS_REFS_FILE: wd / VECTORS_REFS_FILE},
    )
    click.echo(f"embedded {len(refs)} spans -> {out}")


@main.command("cluster")
@_workdir_option
@click.option("--min-cluster-size", type=int, default=None)
@click.option("--min-samples", type=int, default=None)
@click.option("--selection", type=click.Choice([clustering.SELECTION_EOM, clustering.SELECTION_LEAF]),
              default=None)
@click.option("--distance-threshold", type=float, default=None,
              help="Top-level dendrogram cut distance.")
@click.pass_context
def cmd_cluster(ctx: click.Context, workdir: str, min_cluster_size: int | None,
                min_samples: int | None, selection: str | None,
                distance_threshold: float | None) -> None:
    """HDBSCAN the span vectors, then build and cut the top-level dendrogram."""
    cfg = _config_from_ctx(
        ctx,
        min_cluster_size=min_cluster_size,
        min_samples=min_samples,
        selection=selection,
        distance_threshold=distance_threshold,
    )
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        artifacts.verify_chain(
            wd, "embed",
            {VECTORS_FILE: wd / VECTORS_FILE, VECTORS_REFS_FILE: wd / VECTORS_REFS_FILE},
            force,
        )
        refs, matrix = embedding.read_vector_file(wd / VECTORS_FILE)
        artifacts.verify_chain(wd, "validate", {VALID_SPANS_FILE: wd / VALID_SPANS_FILE}, force)
        valid = validation.read_valid_spans(wd / VALID_SPANS_FILE)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    params = clustering.DensityParams(
        min_cluster_size=cfg.min_cluster_size,
        min_samples=cfg.min_samples,
        selection=cfg.selection,
    )
    clustered = clustering.hdbscan(matrix, params)
    clustering.compute_centers(clustered, matrix)

    clusters_out = wd / CLUSTERS_FILE
    tmp = clusters_out.with_name(clusters_out.name + ".tmp")
    clustering.write_clusters(tmp, clustered, refs)
    os.replace(tmp, clusters_out)

    centers = [cl.center for cl in clustered.clusters]
    if centers:
        dend = clustering.average_link(centers)
        top_labels = clustering.cut_dendrogram(dend, cfg.distance_threshold)
        top_of_low = {
            cl.id: top_labels[i] for i, cl in enumerate(clustered.clusters)
        }
    else:
        logger.warning("no clusters found; taxonomy is empty")
        dend = clustering.Dendrogram(merges=(), leaf_count=0)
        top_of_low = {}

    dend_out = wd / DENDROGRAM_FILE
    tmp = dend_out.with_name(dend_out.name + ".tmp")
    clustering.write_dendrogram(tmp, dend)
    os.replace(tmp, dend_out)

    texts = _texts_in_row_order(valid, refs)
    reps = landscape_mod.top_representative_spans(top_of_low, clustered, texts, matrix)
    taxonomy = {
        "distance_threshold": cfg.distance_threshold,
        "top_of_low": {str(low): top for low, top in sorted(top_of_low.items())},
        "representatives": {str(top): reps[top] for top in sorted(reps)},
    }
    _atomic_json(wd / TAXONOMY_FILE, taxonomy)

    artifacts.write_stage_meta(
        wd, "cluster", cfg.to_dict(),
        inputs={
            VECTORS_FILE: wd / VECTORS_FILE,
            VECTORS_REFS_FILE: wd / VECTORS_REFS_FILE,
            VALID_SPANS_FILE: wd / VALID_SPANS_FILE,
        },
        outputs={
            CLUSTERS_FILE: clusters_out,
            DENDROGRAM_FILE: dend_out,
            TAXONOMY_FILE: wd / TAXONOMY_FILE,
        },
    )
    n_noise = sum(1 for lab in clustered.labels if lab == clustering.NOISE)
    click.echo(
        f"{len(clustered.clusters)} low-level clusters"
        f" ({n_noise} noise spans), {len(set(top_of_low.values()))} top-level"
        f" at threshold {cfg.distance_threshold}"
    )


def _texts_in_row_order(
    valid: dict[str, list[validation.ValidatedSpan]], refs: list[tuple[str, int]]
) -> list[str]:
    text_of = {
        (s.candidate.dialogue_id, s.candidate.rank): s.candidate.text
        for spans in valid.values()
        for s in spans
    }
    return [text_of.get(ref, "") for ref in refs]


def _load_cluster_artifacts(wd: Path, force: bool):
    artifacts.verify_chain(
        wd, "cluster",
        {
            CLUSTERS_FILE: wd / CLUSTERS_FILE,
            DENDROGRAM_FILE: wd / DENDROGRAM_FILE,
            TAXONOMY_FILE: wd / TAXONOMY_FILE,
        },
        force,
    )
    artifacts.verify_chain(
        wd, "embed",
        {VECTORS_FILE: wd / VECTORS_FILE, VECTORS_REFS_FILE: wd / VECTORS_REFS_FILE},
        force,
    )
    artifacts.verify_chain(wd, "validate", {VALID_SPANS_FILE: wd / VALID_SPANS_FILE}, force)
    clustered = clustering.read_clusters(wd / CLUSTERS_FILE)
    refs, matrix = embedding.read_vector_file(wd / VECTORS_FILE)
    valid = validation.read_valid_spans(wd / VALID_SPANS_FILE)
    taxonomy = json.loads((wd / TAXONOMY_FILE).read_text(encoding="utf-8"))
    top_of_low = {int(k): int(v) for k, v in taxonomy["top_of_low"].items()}
    return clustered, refs, matrix, valid, taxonomy, top_of_low


def _initial_mapping_from_taxonomy(taxonomy: dict) -> landscape_mod.IntentMapping:
    reps = {int(k): str(v) for k, v in taxonomy.get("representatives", {}).items()}
    return landscape_mod.build_initial_mapping(reps)


@main.command("landscape")
@_workdir_option
@click.option("--force-cluster-threshold", type=float, default=None)
@click.option("--mapping", "mapping_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Mapping file; defaults to the workdir mapping.json.")
@click.pass_context
def cmd_landscape(ctx: click.Context, workdir: str,
                  force_cluster_threshold: float | None,
                  mapping_path: str | None) -> None:
    """Attach dialogues, force-assign stragglers, and count volumes."""
    cfg = _config_from_ctx(ctx, force_cluster_threshold=force_cluster_threshold)
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        clustered, refs, matrix, valid, taxonomy, top_of_low = _load_cluster_artifacts(wd, force)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return

    mapping_file = Path(mapping_path) if mapping_path else wd / MAPPING_FILE
    created_mapping = False
    if mapping_file.exists():
        mapping = landscape_mod.read_mapping(mapping_file)
    else:
        mapping = _initial_mapping_from_taxonomy(taxonomy)
        landscape_mod.write_mapping(wd / MAPPING_FILE, mapping)
        created_mapping = True

    assignments = landscape_mod.attach_dialogues(valid, refs, clustered, top_of_low)
    params = landscape_mod.ForceParams(cfg.force_cluster_threshold)
    vectors_by_ref = {ref: matrix[i] for i, ref in enumerate(refs)}
    assignments = landscape_mod.force_assign(
        assignments, valid, vectors_by_ref, clustered, top_of_low, params
    )
    try:
        volumes, unassigned = landscape_mod.estimate_volumes(assignments, mapping)
    except UnmappedClusterError as exc:
        _fail(exc, artifacts.EXIT_DANGLING_CLUSTER)
        return
    result = landscape_mod.LandscapeResult(
        assignments=assignments, volumes=volumes, unassigned=unassigned
    )
    out = wd / LANDSCAPE_FILE
    landscape_mod.write_landscape(out, result)
    meta_inputs = {
        CLUSTERS_FILE: wd / CLUSTERS_FILE,
        TAXONOMY_FILE: wd / TAXONOMY_FILE,
        VECTORS_FILE: wd / VECTORS_FILE,
        VALID_SPANS_FILE: wd / VALID_SPANS_FILE,
    }
    meta_outputs = {LANDSCAPE_FILE: out}
    if created_mapping:
        meta_outputs[MAPPING_FILE] = wd / MAPPING_FILE
    else:
        meta_inputs[MAPPING_FILE] = mapping_file
    artifacts.write_stage_meta(wd, "landscape", cfg.to_dict(), meta_inputs, meta_outputs)
    counts = result.source_counts
    click.echo(
        f"landscape: {counts['clustered']} clustered, {counts['forced']} forced, "
        f"{counts['unassigned']} unassigned -> {out}"
    )


@main.command("evaluate")
@_workdir_option
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Turn-level gold labels (CSV or JSONL).")
@click.option("--unlabeled-threshold", type=float, default=None)
@click.option("--min-support", type=int, default=None)
@click.pass_context
def cmd_evaluate(ctx: click.Context, workdir: str, gold_path: str,
                 unlabeled_threshold: float | None, min_support: int | None) -> None:
    """Zero-shot classification of valid spans scored against gold intents."""
    cfg = _config_from_ctx(
        ctx, unlabeled_threshold=unlabeled_threshold, min_support=min_support
    )
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        clustered, refs, matrix, valid, _taxonomy, top_of_low = _load_cluster_artifacts(wd, force)
        mapping_file = artifacts.require_file(wd / MAPPING_FILE)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    mapping = landscape_mod.read_mapping(mapping_file)
    try:
        gold = evaluation.load_gold(gold_path)
    except RecordError as exc:
        _fail(exc)
        return
    params = evaluation.EvalParams(
        unlabeled_threshold=cfg.unlabeled_threshold, min_support=cfg.min_support
    )
    pairs, excluded = evaluation.align_gold(valid, gold)
    centers = [(cl.id, cl.center) for cl in clustered.clusters if cl.center is not None]
    vectors_by_ref = {ref: matrix[i] for i, ref in enumerate(refs)}
    predictions: list[int | None] = []
    for span, _intent in pairs:
        ref = (span.candidate.dialogue_id, span.candidate.rank)
        predictions.append(
            evaluation.zero_shot_classify(vectors_by_ref[ref], centers, params)
            if centers
            else None
        )
    try:
        report = evaluation.classification_report(
            pairs, predictions, mapping, top_of_low, params, excluded
        )
    except UnmappedClusterError as exc:
        _fail(exc, artifacts.EXIT_DANGLING_CLUSTER)
        return
    out = wd / REPORT_FILE
    meta = {
        "unlabeled_threshold": cfg.unlabeled_threshold,
        "min_support": cfg.min_support,
        "distance_threshold": cfg.distance_threshold,
        "force_cluster_threshold": cfg.force_cluster_threshold,
        "mapping_sha256": artifacts.sha256_file(mapping_file),
        "qa_backend": cfg.qa_backend,
        "tagger_backend": cfg.tagger_backend,
        "embedding_backend": cfg.embedding_backend,
    }
    evaluation.write_report(out, report, meta)
    artifacts.write_stage_meta(
        wd, "evaluate", cfg.to_dict(),
        inputs={
            CLUSTERS_FILE: wd / CLUSTERS_FILE,
            MAPPING_FILE: mapping_file,
            "gold": Path(gold_path),
        },
        outputs={REPORT_FILE: out},
    )
    for row in report.rows:
        click.echo(
            f"{row.intent}: P {row.precision:.2f} R {row.recall:.2f} "
            f"F1 {row.f1:.2f} (n={row.support})"
        )
    click.echo(f"unlabeled: {report.unlabeled_count} -> {out}")


@main.command("export-review")
@_workdir_option
@click.option("--coordinates", "coords_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Precomputed 2D coordinates (JSONL); default is PCA.")
@click.pass_context
def cmd_export_review(ctx: click.Context, workdir: str, coords_path: str | None) -> None:
    """Bundle points, dendrogram, threshold, and mapping for the review UI."""
    cfg = _config_from_ctx(ctx)
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        clustered, refs, matrix, valid, taxonomy, _top_of_low = _load_cluster_artifacts(wd, force)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    dend = clustering.read_dendrogram(wd / DENDROGRAM_FILE)
    mapping_file = wd / MAPPING_FILE
    if mapping_file.exists():
        mapping = landscape_mod.read_mapping(mapping_file)
    else:
        mapping = _initial_mapping_from_taxonomy(taxonomy)
    if coords_path:
        coords = {p.span_ref: (p.x, p.y) for p in embedding.read_coordinates(coords_path)}
        missing = [ref for ref in refs if ref not in coords]
        if missing:
            _fail(ValueError(f"coordinates file missing {len(missing)} span refs"))
    elif len(refs) >= 2:
        projections = embedding.project_2d(list(matrix), refs)
        coords = {p.span_ref: (p.x, p.y) for p in projections}
    else:
        coords = {ref: (0.0, 0.0) for ref in refs}
    texts = _texts_in_row_order(valid, refs)
    points = [
        {
            "dialogue_id": ref[0],
            "rank": ref[1],
            "text": texts[i],
            "x": coords[ref][0],
            "y": coords[ref][1],
            "low_cluster": clustered.labels[i],
        }
        for i, ref in enumerate(refs)
    ]
    centers = []
    for cl in clustered.clusters:
        xs = [coords[refs[i]][0] for i in cl.members]
        ys = [coords[refs[i]][1] for i in cl.members]
        centers.append(
            {"id": cl.id, "x": sum(xs) / len(xs), "y": sum(ys) / len(ys)}
        )
    payload = {
        "points": points,
        "centers": centers,
        "dendrogram": {
            "leaf_count": dend.leaf_count,
            "merges": [[a, b, d, s] for a, b, d, s in dend.merges],
        },
        "distance_threshold": taxonomy["distance_threshold"],
        "mapping": landscape_mod.mapping_to_payload(mapping),
    }
    out = wd / REVIEW_EXPORT_FILE
    _atomic_json(out, payload)
    artifacts.write_stage_meta(
        wd, "export_review", cfg.to_dict(),
        inputs={CLUSTERS_FILE: wd / CLUSTERS_FILE, DENDROGRAM_FILE: wd / DENDROGRAM_FILE},
        outputs={REVIEW_EXPORT_FILE: out},
    )
    click.echo(f"exported {len(points)} points, {dend.leaf_count} leaves -> {out}")


@main.command("import-mapping")
@click.argument("mapping_file", type=click.Path(exists=True, dir_okay=False))
@_workdir_option
@click.option("--force-cluster-threshold", type=float, default=None)
@click.pass_context
def cmd_import_mapping(ctx: click.Context, mapping_file: str, workdir: str,
                       force_cluster_threshold: float | None) -> None:
    """Adopt a review-UI mapping: replay its ops and recompute the landscape."""
    cfg = _config_from_ctx(ctx, force_cluster_threshold=force_cluster_threshold)
    wd = Path(workdir)
    force = (ctx.obj or {}).get("force", False)
    try:
        clustered, refs, matrix, valid, taxonomy, top_of_low = _load_cluster_artifacts(wd, force)
    except ArtifactError as exc:
        _fail(exc, exc.exit_code)
        return
    incoming = landscape_mod.read_mapping(mapping_file)
    live_tops = set(top_of_low.values())
    dangling = sorted(set(incoming.entries) - live_tops)
    if dangling:
        _fail(
            UnmappedClusterError(dangling, "mapping references unknown clusters"),
            artifacts.EXIT_DANGLING_CLUSTER,
        )
        return

    assignments = landscape_mod.attach_dialogues(valid, refs, clustered, top_of_low)
    params = landscape_mod.ForceParams(cfg.force_cluster_threshold)
    vectors_by_ref = {ref: matrix[i] for i, ref in enumerate(refs)}
    assignments = landscape_mod.force_assign(
        assignments, valid, vectors_by_ref, clustered, top_of_low, params
    )

    initial = _initial_mapping_from_taxonomy(taxonomy)
    try:
        replayed, assignments = landscape_mod.apply_mapping_ops(
            initial, incoming.merge_log, assignments
        )
    except MappingOpError as exc:
        _fail(exc, artifacts.EXIT_DANGLING_CLUSTER)
        return
    if replayed.entries != incoming.entries:
        _fail(
            ValueError(
                "mapping entries do not replay from its merge_log; "
                "refusing an inconsistent mapping file"
            )
        )
        return
    try:
        volumes, unassigned = landscape_mod.estimate_volumes(assignments, replayed)
    except UnmappedClusterError as exc:
        _fail(exc, artifacts.EXIT_DANGLING_CLUSTER)
        return
    result = landscape_mod.LandscapeResult(
        assignments=assignments, volumes=volumes, unassigned=unassigned  # type: ignore[arg-type]
    )
    landscape_mod.write_mapping(wd / MAPPING_FILE, replayed)
    landscape_mod.write_landscape(wd / LANDSCAPE_FILE, result)
    artifacts.write_stage_meta(
        wd, "import_mapping", cfg.to_dict(),
        inputs={"mapping_source": Path(mapping_file), TAXONOMY_FILE: wd / TAXONOMY_FILE},
        outputs={MAPPING_FILE: wd / MAPPING_FILE, LANDSCAPE_FILE: wd / LANDSCAPE_FILE},
    )
    click.echo(
        f"imported mapping with {len(replayed.entries)} entries; volumes for "
        f"{len(volumes)} intents -> {wd / LANDSCAPE_FILE}"
    )


if __name__ == "__main__":
    main()
