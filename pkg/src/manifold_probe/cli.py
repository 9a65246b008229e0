"""Command-line front door.

Every subcommand is a thin client over the evaluation service: flags become
a request model, the request goes through the HTTP interface (in-process by
default, or a remote server via --server), and artifacts land in --out.
Exit codes: 2 invalid flags, 3 data errors, 4 numerical failure.
"""

from __future__ import annotations

import json
import sys

import anyio
import click
import httpx



def _parse_layers(text: str | None) -> list[int] | None:
    """Accept '1..24', '3', or '1,5,9'."""
    if text is None:
        return None
    text = text.strip()
    if ".." in text:
        start, _, end = text.partition("..")
        return list(range(int(start), int(end) + 1))
    return [int(part) for part in text.split(",") if part]


def _parse_dims(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _fail(code: str, message: str, exit_code: int) -> None:
    message = " ".join(str(message).split())
    click.echo(f"error: {code}: {message}", err=True)
    sys.exit(exit_code)


def _call(server: str | None, path: str, payload: dict) -> dict:
    if server:
        try:
            response = httpx.post(f"{server.rstrip('/')}{path}", json=payload, timeout=None)
        except httpx.HTTPError as exc:
            _fail("data", f"cannot reach server: {exc}", 3)
        status, body = response.status_code, response.json()
    else:
        from .service.app import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://manifold-probe"
            ) as client:
                response = await client.post(path, json=payload, timeout=None)
                return response.status_code, response.json()

        status, body = anyio.run(go)
    if status == 200:
        return body
    if status == 422:
        _fail("invalid", json.dumps(body.get("detail", body)), 2)
    code = body.get("code", "numeric")
    _fail(code, body.get("message", str(body)), 3 if code == "data" else 4)
    raise AssertionError("unreachable")


def _print_artifacts(body: dict) -> None:
    for name, path in sorted(body.get("artifacts", {}).items()):
        click.echo(f"  {name}: {path}")


@click.group()
@click.option("--server", default=None, envvar="MANIFOLD_PROBE_SERVER",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    ctx.obj = {"server": server}


@main.command()
@click.option("--manifest", required=True, help="Dataset manifest path.")
@click.option("--out", default=None, help="Directory for the validation report.")
@click.pass_context
def ingest(ctx: click.Context, manifest: str, out: str | None) -> None:
    """Validate a manifest and its embedding files."""
    body = _call(ctx.obj["server"], "/v1/validate",
                 {"manifest_path": manifest, "out_dir": out})
    _print_artifacts(body)
    if not body["ok"]:
        problems = list(body["errors"])
        for layer in body["layers"]:
            problems.extend(f"layer {layer['layer']}: {msg}" for msg in layer["errors"])
        _fail("data", "; ".join(problems), 3)
    click.echo(
        f"ok: {body['dataset']}/{body['split']} ({body['backbone']}), "
        f"{len(body['layers'])} layer files validated"
    )


@main.command()
@click.option("--manifest", required=True)
@click.option("--layer", "layer_id", required=True, type=int)
@click.option("--way", default=5, show_default=True, type=int)
@click.option("--shot", default=5, show_default=True, type=int)
@click.option("--queries", "query_per_class", default=15, show_default=True, type=int,
              help="Query images per class per episode.")
@click.option("--episodes", default=600, show_default=True, type=int)
@click.option("--reduce", "reduction", default="raw", show_default=True,
              type=click.Choice(["raw", "pca", "ica"]))
@click.option("--dims", "output_dim", default=None, type=int,
              help="Output dimension for pca/ica.")
@click.option("--metric", default="mahalanobis", show_default=True,
              type=click.Choice(["mahalanobis", "euclidean", "cosine"]))
@click.option("--classifier", default="knn", show_default=True,
              type=click.Choice(["knn", "centroid"]))
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--variants/--no-variants", "include_variants", default=True,
              show_default=True, help="Include augmented variants in the support set.")
@click.option("--variant-exemplars/--variants-covariance-only", "variant_exemplars",
              default=True, show_default=True,
              help="Whether variants also vote as kNN exemplars or only feed "
                   "covariance estimation.")
@click.option("--seed", required=True, type=int, help="Master seed; all randomness derives from it.")
@click.option("--threads", default=None, type=int)
@click.option("--dump-episodes", default=0, show_default=True, type=int,
              help="Also dump the first N episodes as text.")
@click.option("--shrinkage-lambda", default=0.5, show_default=True, type=float)
@click.option("--out", required=True, help="Artifact directory.")
@click.option("--cache-dir", default=None, help="Projector cache directory.")
@click.pass_context
def fewshot(ctx, manifest, layer_id, way, shot, query_per_class, episodes, reduction,
            output_dim, metric, classifier, k, include_variants, variant_exemplars,
            seed, threads, dump_episodes, shrinkage_lambda, out, cache_dir) -> None:
    """Episodic N-way K-shot evaluation on one layer."""
    payload = {
        "manifest_path": manifest,
        "layer_id": layer_id,
        "way": way,
        "shot": shot,
        "query_per_class": query_per_class,
        "episodes": episodes,
        "reduction": reduction,
        "output_dim": output_dim,
        "metric": metric,
        "classifier": classifier,
        "k": k,
        "include_variants": include_variants,
        "variant_exemplars": variant_exemplars,
        "seed": seed,
        "threads": threads,
        "dump_episodes": dump_episodes,
        "shrinkage": {"lam": shrinkage_lambda},
        "out_dir": out,
        "cache_dir": cache_dir,
    }
    body = _call(ctx.obj["server"], "/v1/fewshot", payload)
    click.echo(
        f"{body['dataset']}: {body['mean_accuracy_pct']:.2f} ± "
        f"{body['ci95_halfwidth_pct']:.2f} over {body['episode_count']} episodes"
    )
    _print_artifacts(body)


@main.command()
@click.option("--manifest", required=True)
@click.option("--layers", default=None, help="Layer selection, e.g. 1..24 or 3,7,9.")
@click.option("--support", "support_per_class", default=64, show_default=True, type=int)
@click.option("--queries", "query_total", default=300, show_default=True, type=int,
              help="Total query budget, spread uniformly over classes.")
@click.option("--queries-per-class", default=None, type=int,
              help="Exact per-class query count (overrides --queries).")
@click.option("--k", default=15, show_default=True, type=int)
@click.option("--metric", default="mahalanobis", show_default=True,
              type=click.Choice(["mahalanobis", "euclidean", "cosine"]))
@click.option("--class-subsample", default=None, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--fit/--no-fit", "fit_curve", default=True, show_default=True,
              help="Fit the logistic maturation curve over layers.")
@click.option("--out", required=True)
@click.pass_context
def characterize(ctx, manifest, layers, support_per_class, query_total,
                 queries_per_class, k, metric, class_subsample, seed, fit_curve,
                 out) -> None:
    """Many-way per-layer accuracy on raw features."""
    payload = {
        "manifest_path": manifest,
        "layers": _parse_layers(layers),
        "support_per_class": support_per_class,
        "query_total": query_total,
        "query_per_class": queries_per_class,
        "k": k,
        "metric": metric,
        "class_subsample": class_subsample,
        "seed": seed,
        "fit_curve": fit_curve,
        "out_dir": out,
    }
    body = _call(ctx.obj["server"], "/v1/characterize", payload)
    for row in body["rows"]:
        click.echo(f"layer {row['layer']:>3}: {100.0 * row['accuracy']:6.2f}%")
    fit = body.get("logistic_fit")
    if fit:
        click.echo(
            f"logistic fit: plateau {fit['asymptote_pct']:.2f}%, rate "
            f"{fit['growth_rate']:.3f}/layer, midpoint {fit['midpoint']:.2f}, "
            f"R^2 {fit['r_squared']:.4f}"
        )
    _print_artifacts(body)


@main.command(name="dim-sweep")
@click.option("--manifest", required=True)
@click.option("--layers", required=True, help="e.g. 20..24 or 21,22")
@click.option("--dims", required=True, help="e.g. 512,256,128,64")
@click.option("--support", "support_per_class", default=64, show_default=True, type=int)
@click.option("--queries", "query_total", default=300, show_default=True, type=int)
@click.option("--queries-per-class", default=None, type=int)
@click.option("--k", default=15, show_default=True, type=int)
@click.option("--metric", default="mahalanobis", show_default=True,
              type=click.Choice(["mahalanobis", "euclidean", "cosine"]))
@click.option("--class-subsample", default=None, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True)
@click.option("--cache-dir", default=None)
@click.pass_context
def dim_sweep(ctx, manifest, layers, dims, support_per_class, query_total,
              queries_per_class, k, metric, class_subsample, seed, out,
              cache_dir) -> None:
    """Accuracy grid over (layer, PCA dimension) pairs."""
    payload = {
        "manifest_path": manifest,
        "layers": _parse_layers(layers),
        "dims": _parse_dims(dims),
        "support_per_class": support_per_class,
        "query_total": query_total,
        "query_per_class": queries_per_class,
        "k": k,
        "metric": metric,
        "class_subsample": class_subsample,
        "seed": seed,
        "out_dir": out,
        "cache_dir": cache_dir,
    }
    body = _call(ctx.obj["server"], "/v1/dim-sweep", payload)
    for cell in body["cells"]:
        click.echo(
            f"layer {cell['layer']:>3} dim {cell['output_dim']:>4}: "
            f"{100.0 * cell['accuracy']:6.2f}%"
        )
    _print_artifacts(body)


@main.command(name="fit-logistic")
@click.option("--input", "input_path", required=True,
              help="Characterization summary JSON; the fit is appended to it.")
@click.option("--out", default=None)
@click.pass_context
def fit_logistic_cmd(ctx, input_path, out) -> None:
    """Fit the logistic maturation curve to a characterization summary."""
    body = _call(ctx.obj["server"], "/v1/fit-logistic",
                 {"input_path": input_path, "out_dir": out})
    fit = body["fit"]
    click.echo(
        f"plateau {fit['asymptote_pct']:.2f}%, rate {fit['growth_rate']:.4f}/layer, "
        f"midpoint {fit['midpoint']:.2f}, R^2 {fit['r_squared']:.4f}"
        + (f" [{fit['warning']}]" if fit.get("warning") else "")
    )
    _print_artifacts(body)


@main.command()
@click.option("--inputs", required=True, multiple=True,
              help="Summary JSON files; repeat the flag for several.")
@click.option("--out", required=True)
@click.pass_context
def report(ctx, inputs, out) -> None:
    """Comparison table (CSV + aligned text) from evaluation summaries."""
    body = _call(ctx.obj["server"], "/v1/report",
                 {"summary_paths": list(inputs), "out_dir": out})
    click.echo(f"{body['row_count']} rows written")
    _print_artifacts(body)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8731, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the evaluation service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
