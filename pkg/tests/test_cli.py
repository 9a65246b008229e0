from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from manifold_probe.cli import _parse_dims, _parse_layers, main

from synthdata import build_layer_manifest


@pytest.fixture(scope="module")
def manifest_path(tmp_path_factory) -> Path:
    tmp = tmp_path_factory.mktemp("cli")
    return build_layer_manifest(
        tmp,
        separations={layer: 0.25 * layer for layer in range(1, 25)},
        n_classes=8,
        dim=6,
        items_per_class=24,
        seed=31,
        dataset="clidemo",
    )


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def test_layer_range_parsing() -> None:
    assert _parse_layers("1..24") == list(range(1, 25))
    assert _parse_layers("7") == [7]
    assert _parse_layers("2,5,9") == [2, 5, 9]
    assert _parse_layers(None) is None
    assert _parse_dims("512,256,128,64") == [512, 256, 128, 64]


def test_fewshot_paper_protocol_flags(runner, manifest_path, tmp_path) -> None:
    out = tmp_path / "out"
    result = runner.invoke(main, [
        "fewshot", "--manifest", str(manifest_path), "--layer", "22",
        "--way", "5", "--shot", "5", "--episodes", "600",
        "--reduce", "pca", "--dims", "4", "--metric", "mahalanobis",
        "--k", "5", "--seed", "7", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    summary_path = out / "clidemo_22_pca4_5w5s.json"
    csv_path = out / "clidemo_22_pca4_5w5s.csv"
    assert summary_path.exists()
    payload = json.loads(summary_path.read_text())
    assert payload["episode_count"] == 600
    assert len(csv_path.read_text().splitlines()) == 601
    assert (out / "run.json").exists()


def test_characterize_full_depth_table(runner, manifest_path, tmp_path) -> None:
    out = tmp_path / "char"
    result = runner.invoke(main, [
        "characterize", "--manifest", str(manifest_path),
        "--support", "8", "--queries", "64", "--k", "15",
        "--layers", "1..24", "--seed", "3", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    table_lines = [line for line in result.output.splitlines() if line.startswith("layer")]
    assert len(table_lines) == 24
    summary = json.loads((out / "clidemo_characterization.json").read_text())
    assert len(summary["rows"]) == 24
    curve = (out / "clidemo_layer_curve.csv").read_text().splitlines()
    assert len(curve) == 25


def test_missing_required_flag_exits_2(runner, manifest_path) -> None:
    result = runner.invoke(main, ["fewshot", "--manifest", str(manifest_path),
                                  "--layer", "1"])  # no --seed
    assert result.exit_code == 2


def test_missing_manifest_flag_exits_2(runner) -> None:
    result = runner.invoke(main, ["fewshot", "--layer", "1", "--seed", "3"])
    assert result.exit_code == 2


def test_nonexistent_manifest_file_exits_3(runner, tmp_path) -> None:
    result = runner.invoke(main, [
        "fewshot", "--manifest", str(tmp_path / "missing.manifest"),
        "--layer", "1", "--seed", "3", "--out", str(tmp_path / "out"),
    ])
    assert result.exit_code == 3
    assert result.output.splitlines()[-1].startswith("error: data:")


def test_missing_out_dir_exits_2(runner, manifest_path) -> None:
    result = runner.invoke(main, [
        "fewshot", "--manifest", str(manifest_path), "--layer", "1", "--seed", "3",
    ])
    assert result.exit_code == 2


def test_inconsistent_reduction_flags_fail_without_artifacts(runner, manifest_path,
                                                             tmp_path) -> None:
    out = tmp_path / "x"
    result = runner.invoke(main, [
        "fewshot", "--manifest", str(manifest_path), "--layer", "1",
        "--seed", "3", "--reduce", "pca", "--out", str(out),
    ])  # pca without --dims
    assert result.exit_code in (2, 3)
    assert not out.exists()  # rejected before any artifact is written


def test_ingest_and_report_flow(runner, manifest_path, tmp_path) -> None:
    result = runner.invoke(main, ["ingest", "--manifest", str(manifest_path)])
    assert result.exit_code == 0, result.output
    assert "24 layer files validated" in result.output

    fs_out = tmp_path / "fs"
    result = runner.invoke(main, [
        "fewshot", "--manifest", str(manifest_path), "--layer", "24",
        "--way", "5", "--shot", "1", "--episodes", "20", "--seed", "11",
        "--out", str(fs_out),
    ])
    assert result.exit_code == 0, result.output
    summary = str(fs_out / "clidemo_24_raw_5w1s.json")
    report_out = tmp_path / "report"
    result = runner.invoke(main, [
        "report", "--inputs", summary, "--out", str(report_out),
    ])
    assert result.exit_code == 0, result.output
    assert (report_out / "comparison.csv").exists()
    assert (report_out / "comparison.txt").exists()


def test_fit_logistic_subcommand(runner, manifest_path, tmp_path) -> None:
    out = tmp_path / "char"
    result = runner.invoke(main, [
        "characterize", "--manifest", str(manifest_path), "--support", "8",
        "--queries", "48", "--k", "5", "--seed", "4", "--no-fit",
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    summary_path = out / "clidemo_characterization.json"
    assert "logistic_fit" not in json.loads(summary_path.read_text())
    result = runner.invoke(main, ["fit-logistic", "--input", str(summary_path)])
    assert result.exit_code == 0, result.output
    assert "R^2" in result.output
    assert "logistic_fit" in json.loads(summary_path.read_text())


def test_remote_server_mode(runner, manifest_path, tmp_path) -> None:
    import socket
    import threading
    import time

    import uvicorn

    from manifold_probe.service.app import create_app

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(create_app(), host="127.0.0.1", port=port,
                            log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.time() + 15
        while not server.started:
            if time.time() > deadline:
                pytest.fail("server did not start")
            time.sleep(0.05)
        result = runner.invoke(main, [
            "--server", f"http://127.0.0.1:{port}",
            "fewshot", "--manifest", str(manifest_path), "--layer", "2",
            "--way", "5", "--shot", "1", "--episodes", "10", "--seed", "4",
            "--out", str(tmp_path / "remote"),
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "remote" / "run.json").exists()
        missing = runner.invoke(main, [
            "--server", f"http://127.0.0.1:{port}",
            "ingest", "--manifest", str(tmp_path / "nope.manifest"),
        ])
        assert missing.exit_code == 3
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def test_dim_sweep_subcommand(runner, manifest_path, tmp_path) -> None:
    out = tmp_path / "sweep"
    result = runner.invoke(main, [
        "dim-sweep", "--manifest", str(manifest_path), "--layers", "23,24",
        "--dims", "2,4", "--support", "8", "--queries", "40", "--k", "3",
        "--seed", "5", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    grid = (out / "clidemo_dim_sweep.csv").read_text().splitlines()
    assert grid[0] == "layer,output_dim,accuracy"
    assert len(grid) == 5
