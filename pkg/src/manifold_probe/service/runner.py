"""Service-side execution of evaluation requests.

Each runner resolves a request model into library calls, writes the
artifacts the External Interfaces promise (per-episode CSV, summary JSON,
run.json echoing the full resolved request), and returns the response
model. The CLI and the HTTP layer are both thin shims over these functions,
and a successful run is reproducible from its run.json alone via
`execute_run_json`.
"""

from __future__ import annotations

import json
from pathlib import Path

from .. import __version__
from ..curvefit import LogisticFit, fit_logistic
from ..episodes import sample_episode, write_episode_dump
from ..errors import DataError
from ..harness import (
    CharacterizationParams,
    LayerAccuracy,
    artifact_basename,
    fit_layer_curve,
    fit_reduction_cached,
    run_characterization,
    run_dim_sweep,
    run_fewshot_eval,
    write_episode_csv,
    write_summary_json,
)
from ..concepts import Metric
from ..report import build_payload_rows, comparison_csv, comparison_text, layer_curve_csv
from ..store import read_embedding_file, read_manifest, validate_manifest
from . import models


def _write_run_json(out_dir: Path | None, subcommand: str, request) -> dict[str, str]:
    if out_dir is None:
        return {}
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "subcommand": subcommand,
        "request": request.model_dump(mode="json"),
        "package_version": __version__,
    }
    path = out_dir / "run.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {"run": str(path)}


def _fit_payload(fit: LogisticFit) -> models.LogisticFitPayload:
    return models.LogisticFitPayload(
        asymptote=fit.asymptote,
        asymptote_pct=fit.asymptote * 100.0,
        growth_rate=fit.growth_rate,
        midpoint=fit.midpoint,
        r_squared=fit.r_squared,
        iterations=fit.iterations,
        converged=fit.converged,
        warning=fit.warning,
    )


def run_validate(request: models.ValidateRequest) -> models.ValidateResponse:
    manifest = read_manifest(request.manifest_path)
    report = validate_manifest(manifest)
    response = models.ValidateResponse(
        ok=report.ok,
        dataset=manifest.dataset_name,
        split=manifest.split,
        backbone=manifest.backbone_name,
        layers=[
            models.LayerCheckPayload(
                layer=check.layer_id,
                path=str(check.path),
                errors=check.errors,
                class_count=check.class_count,
                item_count=check.item_count,
                feature_dim=check.feature_dim,
                tokens_per_item=check.tokens_per_item,
            )
            for check in report.layers
        ],
        errors=report.errors,
    )
    if request.out_dir:
        out_dir = Path(request.out_dir)
        artifacts = _write_run_json(out_dir, "ingest", request)
        report_path = out_dir / f"{manifest.dataset_name}_{manifest.split}_validation.json"
        report_path.write_text(
            response.model_dump_json(indent=2, exclude={"artifacts"}) + "\n"
        )
        artifacts["report"] = str(report_path)
        response.artifacts = artifacts
    return response


def run_fewshot(request: models.FewshotRequest) -> models.FewshotResponse:
    manifest = read_manifest(request.manifest_path)
    if request.layer_id not in manifest.layer_files:
        raise DataError(f"manifest has no file for layer {request.layer_id}")
    file_path = Path(manifest.layer_files[request.layer_id])
    eset = read_embedding_file(file_path, class_names=manifest.class_names or None)
    config = request.pipeline_config()
    config.validate()
    projector = fit_reduction_cached(
        eset,
        file_path,
        config.reduction,
        config.output_dim,
        config.ica,
        request.cache_dir,
    )
    summary = run_fewshot_eval(eset, projector, config, threads=request.threads)
    artifacts: dict[str, str] = {}
    if request.out_dir:
        out_dir = Path(request.out_dir)
        artifacts = _write_run_json(out_dir, "fewshot", request)
        base = artifact_basename(manifest.dataset_name, config)
        csv_path = out_dir / f"{base}.csv"
        json_path = out_dir / f"{base}.json"
        write_episode_csv(summary, csv_path)
        write_summary_json(
            summary,
            json_path,
            extra={"dataset": manifest.dataset_name, "seed": request.seed},
        )
        artifacts["episodes_csv"] = str(csv_path)
        artifacts["summary_json"] = str(json_path)
        if request.dump_episodes > 0:
            dump_dir = out_dir / "episodes"
            dump_dir.mkdir(exist_ok=True)
            for i in range(min(request.dump_episodes, config.sampler.episode_count)):
                episode = sample_episode(eset, config.sampler, i)
                write_episode_dump(episode, dump_dir / f"episode_{i:04d}.txt")
            artifacts["episode_dumps"] = str(dump_dir)
    return models.FewshotResponse(
        dataset=manifest.dataset_name,
        mean_accuracy_pct=summary.mean_accuracy,
        ci95_halfwidth_pct=summary.ci_halfwidth_95,
        episode_count=summary.episode_count,
        config_fingerprint=summary.config_fingerprint,
        wall_time_s=summary.wall_time,
        artifacts=artifacts,
    )


def _characterization_params(request) -> CharacterizationParams:
    return CharacterizationParams(
        support_per_class=request.support_per_class,
        query_total=request.query_total,
        query_per_class=request.query_per_class,
        k=request.k,
        metric=Metric(request.metric),
        class_subsample=request.class_subsample,
        seed=request.seed,
        shrinkage=request.shrinkage.to_config(),
    )


def _layer_rows(rows: list[LayerAccuracy]) -> list[models.LayerRow]:
    return [
        models.LayerRow(
            layer=r.layer_id,
            accuracy=r.accuracy,
            way=r.way,
            support_per_class=r.support_per_class,
            query_count=r.query_count,
        )
        for r in rows
    ]


def characterization_summary_dict(response: models.CharacterizeResponse) -> dict:
    payload = {
        "dataset": response.dataset,
        "rows": [row.model_dump() for row in response.rows],
    }
    if response.logistic_fit is not None:
        payload["logistic_fit"] = response.logistic_fit.model_dump()
    return payload


def run_characterize(request: models.CharacterizeRequest) -> models.CharacterizeResponse:
    manifest = read_manifest(request.manifest_path)
    params = _characterization_params(request)
    rows = run_characterization(manifest, params, layers=request.layers)
    fit = fit_layer_curve(rows) if request.fit_curve and len(rows) >= 4 else None
    response = models.CharacterizeResponse(
        dataset=manifest.dataset_name,
        rows=_layer_rows(rows),
        logistic_fit=_fit_payload(fit) if fit is not None else None,
    )
    if request.out_dir:
        out_dir = Path(request.out_dir)
        artifacts = _write_run_json(out_dir, "characterize", request)
        json_path = out_dir / f"{manifest.dataset_name}_characterization.json"
        json_path.write_text(
            json.dumps(characterization_summary_dict(response), indent=2, sort_keys=True)
            + "\n"
        )
        curve_path = out_dir / f"{manifest.dataset_name}_layer_curve.csv"
        curve_path.write_text(layer_curve_csv(rows, fit))
        artifacts["summary_json"] = str(json_path)
        artifacts["layer_curve_csv"] = str(curve_path)
        response.artifacts = artifacts
    return response


def run_sweep(request: models.DimSweepRequest) -> models.DimSweepResponse:
    manifest = read_manifest(request.manifest_path)
    params = _characterization_params(request)
    cells = run_dim_sweep(
        manifest,
        layers=request.layers,
        dims=request.dims,
        params=params,
        ica=request.ica.to_config(),
        cache_dir=request.cache_dir,
    )
    response = models.DimSweepResponse(
        dataset=manifest.dataset_name,
        cells=[
            models.SweepCellPayload(
                layer=c.layer_id, output_dim=c.output_dim, accuracy=c.accuracy
            )
            for c in cells
        ],
    )
    if request.out_dir:
        out_dir = Path(request.out_dir)
        artifacts = _write_run_json(out_dir, "dim-sweep", request)
        json_path = out_dir / f"{manifest.dataset_name}_dim_sweep.json"
        json_path.write_text(
            response.model_dump_json(indent=2, exclude={"artifacts"}) + "\n"
        )
        grid_path = out_dir / f"{manifest.dataset_name}_dim_sweep.csv"
        lines = ["layer,output_dim,accuracy"]
        lines.extend(f"{c.layer_id},{c.output_dim},{c.accuracy!r}" for c in cells)
        grid_path.write_text("\n".join(lines) + "\n")
        artifacts["summary_json"] = str(json_path)
        artifacts["grid_csv"] = str(grid_path)
        response.artifacts = artifacts
    return response


def run_fit_logistic(request: models.FitLogisticRequest) -> models.FitLogisticResponse:
    if request.input_path is not None:
        path = Path(request.input_path)
        if not path.exists():
            raise DataError(f"characterization summary not found: {path}")
        payload = json.loads(path.read_text())
        rows = payload.get("rows")
        if not rows:
            raise DataError(f"{path.name} has no characterization rows")
        xs = [row["layer"] for row in rows]
        ys = [row["accuracy"] for row in rows]
    elif request.xs is not None and request.ys is not None:
        xs, ys = request.xs, request.ys
        payload = None
        path = None
    else:
        raise DataError("fit-logistic needs either input_path or xs and ys")
    fit = fit_logistic(xs, ys)
    response = models.FitLogisticResponse(fit=_fit_payload(fit))
    artifacts: dict[str, str] = {}
    if path is not None and payload is not None:
        payload["logistic_fit"] = response.fit.model_dump()
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        artifacts["summary_json"] = str(path)
    if request.out_dir:
        artifacts.update(_write_run_json(Path(request.out_dir), "fit-logistic", request))
        fit_path = Path(request.out_dir) / "logistic_fit.json"
        fit_path.write_text(response.fit.model_dump_json(indent=2) + "\n")
        artifacts["fit_json"] = str(fit_path)
    response.artifacts = artifacts
    return response


def run_report(request: models.ReportRequest) -> models.ReportResponse:
    if not request.summary_paths:
        raise DataError("report needs at least one summary file")
    payloads = []
    for raw_path in request.summary_paths:
        path = Path(raw_path)
        if not path.exists():
            raise DataError(f"summary not found: {path}")
        payloads.append(json.loads(path.read_text()))
    rows = build_payload_rows(payloads)
    out_dir = Path(request.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = _write_run_json(out_dir, "report", request)
    csv_path = out_dir / "comparison.csv"
    text_path = out_dir / "comparison.txt"
    csv_path.write_text(comparison_csv(rows))
    text_path.write_text(comparison_text(rows))
    artifacts["comparison_csv"] = str(csv_path)
    artifacts["comparison_txt"] = str(text_path)
    return models.ReportResponse(row_count=len(rows), artifacts=artifacts)


_RUNNERS = {
    "ingest": (models.ValidateRequest, run_validate),
    "fewshot": (models.FewshotRequest, run_fewshot),
    "characterize": (models.CharacterizeRequest, run_characterize),
    "dim-sweep": (models.DimSweepRequest, run_sweep),
    "fit-logistic": (models.FitLogisticRequest, run_fit_logistic),
    "report": (models.ReportRequest, run_report),
}


def execute_run_json(path: str | Path):
    """Re-execute a run exactly as recorded by its run.json."""
    payload = json.loads(Path(path).read_text())
    subcommand = payload["subcommand"]
    if subcommand not in _RUNNERS:
        raise DataError(f"unknown subcommand in run.json: {subcommand}")
    model_cls, fn = _RUNNERS[subcommand]
    return fn(model_cls.model_validate(payload["request"]))
