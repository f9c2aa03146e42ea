"""Command-line pipeline: overcorrect -> recover/emit -> score, plus
system combination and tagged-diff rendering.

Every command is a pure function of its input files, flags, and cache state;
manifests isolate the run timestamp in a dedicated field.  Exit codes:
0 success, 1 operational (provider) failure beyond tolerance, 2 input or
usage error.
"""
from __future__ import annotations

import json
import logging
import sys
import time

import click

from . import corpus, ensemble, llm, score
from .align import tag_diff, tokenize
from .corpus import FormatError
from .recover import RecoveryTriple, build_recovered

log = logging.getLogger(__name__)


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _resolve(ctx: click.Context, config: dict, **values):
    """Fill defaulted flags from the config file; explicit flags win."""
    resolved = {}
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        if source == click.core.ParameterSource.DEFAULT and name in config:
            resolved[name] = config[name]
        else:
            resolved[name] = value
    return resolved


def _read_m2(path: str) -> list[corpus.AnnotatedSentence]:
    try:
        with open(path, encoding="utf-8") as fh:
            return list(corpus.parse_m2(fh))
    except FormatError as exc:
        _fail(str(exc))
    raise AssertionError  # unreachable


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _read_overcorrections(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                _fail(f"{path}: line {line_no} is not valid JSON")
    return records


def _triples(sentences, overcorrections) -> list[RecoveryTriple]:
    if len(overcorrections) != len(sentences):
        _fail(
            f"record count mismatch: {len(sentences)} sentences vs "
            f"{len(overcorrections)} overcorrections"
        )
    triples = []
    for index, (sentence, record) in enumerate(zip(sentences, overcorrections)):
        if record.get("record_id") != index:
            _fail(f"record_id mismatch at index {index}: got {record.get('record_id')}")
        triples.append(
            RecoveryTriple(
                source=sentence.source,
                gold=sentence.gold_target(),
                overcorrected=tokenize(record["overcorrected"]),
            )
        )
    return triples


def _write_manifest(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["generated_at"] = time.time()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """GEC pipeline tools."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO)


@main.command()
@click.argument("m2_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--provider", "provider_name", type=click.Choice(["mock", "http"]), default="mock")
@click.option("--endpoint", default="", help="HTTP provider endpoint URL.")
@click.option("--model", default="gpt-3.5-turbo-0125")
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--max-attempts", default=3, show_default=True)
@click.option("--max-workers", default=1, show_default=True)
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None)
@click.option(
    "--max-failure-rate",
    default=1.0,
    show_default=True,
    help="Exit 1 when the fraction of provider failures exceeds this.",
)
@click.pass_context
def overcorrect(
    ctx, m2_file, output, config_path, provider_name, endpoint, model,
    temperature, max_attempts, max_workers, cache_path, max_failure_rate,
):
    """Trigger LLM overcorrection for every source sentence in an M2 file."""
    config = _load_config(config_path)
    opts = _resolve(
        ctx,
        config,
        provider_name=provider_name,
        endpoint=endpoint,
        model=model,
        temperature=temperature,
        max_attempts=max_attempts,
        max_workers=max_workers,
        cache_path=cache_path,
        max_failure_rate=max_failure_rate,
    )
    sentences = _read_m2(m2_file)
    if opts["provider_name"] == "http":
        if not opts["endpoint"]:
            _fail("http provider requires --endpoint")
        provider = llm.HTTPProvider(opts["endpoint"])
    else:
        provider = llm.MockProvider()
    client = llm.CompletionClient(provider, llm.CompletionCache(opts["cache_path"]))
    results = llm.overcorrect_corpus(
        (corpus.detokenize(s.source) for s in sentences),
        client,
        model=opts["model"],
        temperature=opts["temperature"],
        max_attempts=opts["max_attempts"],
        max_workers=opts["max_workers"],
    )
    with open(output, "w", encoding="utf-8") as fh:
        for index, result in enumerate(results):
            fh.write(
                json.dumps(
                    {
                        "record_id": index,
                        "source": result.source,
                        "overcorrected": result.overcorrected,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    failures = sum(1 for r in results if r.failed)
    _write_manifest(
        output + ".manifest.json",
        {
            "records": len(results),
            "provider_failures": failures,
            "model": opts["model"],
            "temperature": opts["temperature"],
            "provider": opts["provider_name"],
            "input_digest": corpus.file_digest(m2_file),
        },
    )
    if results and failures / len(results) > opts["max_failure_rate"]:
        _fail(f"{failures}/{len(results)} provider failures exceed tolerance", code=1)


@main.command()
@click.argument("m2_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("overcorrections", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
def recover(m2_file, overcorrections, output):
    """Construct recovered targets from gold annotations and LLM outputs."""
    sentences = _read_m2(m2_file)
    triples = _triples(sentences, _read_overcorrections(overcorrections))
    with open(output, "w", encoding="utf-8") as fh:
        for index, triple in enumerate(triples):
            result = build_recovered(triple)
            fh.write(
                json.dumps(
                    {
                        "record_id": index,
                        "source": corpus.detokenize(triple.source),
                        "gold": corpus.detokenize(triple.gold),
                        "recovered": corpus.detokenize(result.recovered),
                        "kept_edits": len(result.kept_edits),
                        "dropped_gold_edits": len(result.dropped_gold_edits),
                        "spurious_llm_edits": len(result.spurious_llm_edits),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


@main.command()
@click.argument("m2_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("overcorrections", type=click.Path(exists=True, dir_okay=False))
@click.option("--strategy", type=click.Choice(["seq", "mix"]), default="mix", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output-prefix", "prefix", required=True)
def emit(m2_file, overcorrections, strategy, seed, prefix):
    """Emit gold/recovered training pairs as JSONL plus a manifest."""
    sentences = _read_m2(m2_file)
    triples = _triples(sentences, _read_overcorrections(overcorrections))
    streams = corpus.emit_pairs(triples, strategy=strategy, seed=seed)
    if strategy == "seq":
        names = [f"{prefix}.gold.jsonl", f"{prefix}.recovered.jsonl"]
    else:
        names = [f"{prefix}.mix.jsonl"]
    for name, stream in zip(names, streams):
        with open(name, "w", encoding="utf-8") as fh:
            fh.write(corpus.write_pairs_jsonl(stream))
    _write_manifest(
        f"{prefix}.manifest.json",
        {
            "strategy": strategy,
            "seed": seed,
            "triples": len(triples),
            "pairs": sum(len(s) for s in streams),
            "outputs": names,
            "m2_digest": corpus.file_digest(m2_file),
            "overcorrections_digest": corpus.file_digest(overcorrections),
        },
    )


@main.command("score")
@click.argument("m2_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypothesis_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--beta", default=0.5, show_default=True)
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
def score_cmd(m2_file, hypothesis_file, beta, json_out):
    """Score one hypothesis per line against M2 references."""
    sentences = _read_m2(m2_file)
    hyp_lines = _read_lines(hypothesis_file)
    if len(hyp_lines) != len(sentences):
        _fail(
            f"line count mismatch: {len(sentences)} sentences vs {len(hyp_lines)} hypotheses"
        )
    records = []
    for sentence, line in zip(sentences, hyp_lines):
        annotations = [
            list(sentence.annotations[a]) for a in sorted(sentence.annotations)
        ] or [[]]
        records.append(score.ScoreRecord(sentence.source, tokenize(line), annotations))
    try:
        report = score.score_corpus(records, beta=beta)
    except score.EmptyCorpusError:
        _fail("empty corpus")
        return
    click.echo(report.to_text())
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")


@main.command("ensemble-train")
@click.argument("m2_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypothesis_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--beta", default=0.5, show_default=True)
@click.option("--l2", default=0.0, show_default=True)
@click.option("--epochs", default=300, show_default=True)
@click.option("--lr", default=0.5, show_default=True)
def ensemble_train(m2_file, hypothesis_files, output, beta, l2, epochs, lr):
    """Train the edit-combination model from gold M2 and k hypothesis files."""
    sentences = _read_m2(m2_file)
    systems = [_read_lines(path) for path in hypothesis_files]
    for path, lines in zip(hypothesis_files, systems):
        if len(lines) != len(sentences):
            _fail(f"{path}: {len(lines)} lines but {len(sentences)} sentences")
    records = [
        ensemble.EnsembleRecord(
            source=s.source,
            hypotheses=[tokenize(lines[i]) for lines in systems],
            gold_edits=list(s.gold_edits()),
        )
        for i, s in enumerate(sentences)
    ]
    combiner = ensemble.EditCombiner(
        k=len(systems), beta=beta, l2=l2, epochs=epochs, lr=lr
    ).fit(records)
    with open(output, "w", encoding="utf-8") as fh:
        fh.write(combiner.model_.to_json() + "\n")


@main.command("ensemble-apply")
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("source_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypothesis_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def ensemble_apply(model_file, source_file, hypothesis_files, output):
    """Combine k hypothesis files into one output using a trained model."""
    with open(model_file, encoding="utf-8") as fh:
        model = ensemble.EnsembleModel.from_json(fh.read())
    sources = _read_lines(source_file)
    systems = [_read_lines(path) for path in hypothesis_files]
    if len(systems) != model.k:
        _fail(f"model expects {model.k} systems, got {len(systems)}")
    for path, lines in zip(hypothesis_files, systems):
        if len(lines) != len(sources):
            _fail(f"{path}: {len(lines)} lines but {len(sources)} sources")
    combined = [
        corpus.detokenize(
            ensemble.combine(
                tokenize(src), [tokenize(lines[i]) for lines in systems], model
            )
        )
        for i, src in enumerate(sources)
    ]
    text = "\n".join(combined) + ("\n" if combined else "")
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("source_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypothesis_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
def tagdiff(source_file, hypothesis_file, output):
    """Render hypothesis lines with <R>/<M>/<U> change markup."""
    sources = _read_lines(source_file)
    hypotheses = _read_lines(hypothesis_file)
    if len(sources) != len(hypotheses):
        _fail(
            f"line count mismatch: {len(sources)} sources vs {len(hypotheses)} hypotheses"
        )
    tagged = [tag_diff(tokenize(s), tokenize(h)) for s, h in zip(sources, hypotheses)]
    text = "\n".join(tagged) + ("\n" if tagged else "")
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
