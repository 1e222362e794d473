import json
import socket
import subprocess
import sys

import numpy as np
import pytest

from gpff import (
    OracleForceProvider,
    PriorSpec,
    ReferenceSet,
    SamplerConfig,
    ScheduleParams,
    ensemble_report,
    load_xyz,
    run_batch,
    save_xyz,
    write_report_json,
)
from gpff.cli import main
from gpff.shapes import ShapeModel

from conftest import random_structure


@pytest.fixture
def refs_file(tmp_path, rng):
    path = tmp_path / "refs.xyz"
    elements = ("C", "C", "C", "H", "H", "H", "O", "O")
    refs = [
        random_structure(rng, elements=elements, name=f"ref-{i}") for i in range(2)
    ]
    save_xyz(path, refs)
    return str(path)


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_is_deterministic(tmp_path, refs_file, capsys):
    first = tmp_path / "a.xyz"
    second = tmp_path / "b.xyz"
    base = [
        "generate",
        "--refs",
        refs_file,
        "--sampler",
        "dd",
        "--count",
        "3",
        "--seed",
        "5",
    ]
    code, out, _ = run_cli(base + ["--out", str(first), "--traces", str(tmp_path / "a.jsonl")], capsys)
    assert code == 0
    assert "wrote 3 structures" in out
    code, _, _ = run_cli(base + ["--out", str(second), "--traces", str(tmp_path / "b.jsonl")], capsys)
    assert code == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    structures = load_xyz(first)
    assert [s.name for s in structures] == ["sample-00000", "sample-00001", "sample-00002"]


def test_generate_matches_library_batch(tmp_path, refs_file, capsys):
    out = tmp_path / "cli.xyz"
    code, _, _ = run_cli(
        ["generate", "--refs", refs_file, "--sampler", "dd", "--count", "2", "--seed", "9", "--out", str(out)],
        capsys,
    )
    assert code == 0

    refs = ReferenceSet(load_xyz(refs_file))
    provider = OracleForceProvider(refs)
    cfg = SamplerConfig(kind="dd", schedule=ScheduleParams(steps=64))
    results = run_batch(
        PriorSpec.isotropic(30.0), refs.elements, provider, cfg, 2, 9, jobs=1
    )
    expected = tmp_path / "lib.xyz"
    save_xyz(expected, [s for s, _ in results])
    assert out.read_bytes() == expected.read_bytes()


def test_generate_missing_refs_is_usage_error(tmp_path, capsys):
    missing = str(tmp_path / "nope.xyz")
    code, _, err = run_cli(
        ["generate", "--refs", missing, "--out", str(tmp_path / "x.xyz")], capsys
    )
    assert code == 2
    assert "nope.xyz" in err


def test_generate_rejects_unknown_sampler(refs_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--refs", refs_file, "--sampler", "metropolis"])
    assert exc.value.code == 2


def test_generate_adaptive_needs_ode_sampler(refs_file, tmp_path, capsys):
    code, _, err = run_cli(
        [
            "generate",
            "--refs",
            refs_file,
            "--sampler",
            "dd",
            "--adaptive",
            "--out",
            str(tmp_path / "x.xyz"),
        ],
        capsys,
    )
    assert code == 2
    assert "adaptive" in err


def test_remote_provider_requires_endpoint(refs_file, tmp_path, capsys):
    code, _, err = run_cli(
        ["generate", "--provider", "remote", "--refs", refs_file, "--out", str(tmp_path / "x.xyz")],
        capsys,
    )
    assert code == 2
    assert "endpoint" in err


def test_config_file_supplies_defaults_flags_override(tmp_path, refs_file, capsys):
    config_out = tmp_path / "fromconfig.xyz"
    config = tmp_path / "gen.json"
    config.write_text(
        json.dumps({"count": 4, "seed": 3, "out": str(config_out), "sampler": "dd"})
    )
    code, out, _ = run_cli(
        ["generate", "--refs", refs_file, "--config", str(config), "--count", "1"],
        capsys,
    )
    assert code == 0
    assert "wrote 1 structures" in out
    assert len(load_xyz(config_out)) == 1

    flag_out = tmp_path / "flagseed.xyz"
    code, _, _ = run_cli(
        [
            "generate",
            "--refs",
            refs_file,
            "--config",
            str(config),
            "--count",
            "1",
            "--seed",
            "3",
            "--out",
            str(flag_out),
        ],
        capsys,
    )
    assert code == 0
    assert flag_out.read_bytes() == config_out.read_bytes()


def test_generate_scaffold_keeps_frozen_rows(tmp_path, rng, capsys):
    refs_path = tmp_path / "refs.xyz"
    save_xyz(
        refs_path,
        [random_structure(rng, elements=("C", "C", "C", "H", "H"), name="r")],
    )
    scaffold_path = tmp_path / "scaffold.xyz"
    scaffold = random_structure(rng, elements=("C", "C", "C"), name="scaffold")
    save_xyz(scaffold_path, [scaffold])
    out = tmp_path / "grown.xyz"
    code, _, _ = run_cli(
        [
            "generate",
            "--refs",
            str(refs_path),
            "--sampler",
            "dd+scaffold",
            "--scaffold",
            str(scaffold_path),
            "--elements",
            "H,H",
            "--count",
            "2",
            "--seed",
            "1",
            "--out",
            str(out),
        ],
        capsys,
    )
    assert code == 0
    frozen = load_xyz(scaffold_path)[0]
    for s in load_xyz(out):
        assert s.n == 5
        assert s.elements[:3] == frozen.elements
        assert np.array_equal(s.positions[:3], frozen.positions)


def test_generate_shape_sampler(tmp_path, refs_file, capsys):
    out = tmp_path / "rods.xyz"
    code, printed, _ = run_cli(
        [
            "generate",
            "--refs",
            refs_file,
            "--sampler",
            "dd+shape",
            "--shape-target",
            "rod",
            "--count",
            "2",
            "--seed",
            "7",
            "--out",
            str(out),
        ],
        capsys,
    )
    assert code == 0
    assert "NFE mean" in printed
    assert len(load_xyz(out)) == 2

    code, _, err = run_cli(
        [
            "generate",
            "--refs",
            refs_file,
            "--sampler",
            "dd+shape",
            "--shape-target",
            "blob",
            "--out",
            str(out),
        ],
        capsys,
    )
    assert code == 2
    assert "--shape-target" in err


def test_metrics_report_matches_library(tmp_path, rng, capsys):
    generated = [random_structure(rng, n=6, name=f"g{i}") for i in range(4)]
    reference = [random_structure(rng, n=6, name=f"r{i}") for i in range(3)]
    gen_path = tmp_path / "gen.xyz"
    ref_path = tmp_path / "ref.xyz"
    save_xyz(gen_path, generated)
    save_xyz(ref_path, reference)

    report_path = tmp_path / "report.json"
    csv_dir = tmp_path / "csv"
    code, out, _ = run_cli(
        [
            "metrics",
            "--generated",
            str(gen_path),
            "--reference",
            str(ref_path),
            "--out",
            str(report_path),
            "--csv-dir",
            str(csv_dir),
        ],
        capsys,
    )
    assert code == 0
    assert "validity" in out

    expected_path = tmp_path / "expected.json"
    report = ensemble_report(load_xyz(gen_path), load_xyz(ref_path), bins=100)
    write_report_json(report, expected_path)
    assert report_path.read_bytes() == expected_path.read_bytes()
    assert (csv_dir / "mpd_histogram.csv").exists()


def test_shape_fit_produces_loadable_model(tmp_path, rng, capsys):
    structures = [random_structure(rng, n=7, name=f"s{i}") for i in range(12)]
    path = tmp_path / "train.xyz"
    save_xyz(path, structures)
    model_path = tmp_path / "shapes.json"
    code, out, _ = run_cli(
        [
            "shape-fit",
            "--structures",
            str(path),
            "--components",
            "2",
            "--seed",
            "1",
            "--out",
            str(model_path),
        ],
        capsys,
    )
    assert code == 0
    assert "atom counts [7]" in out
    model = ShapeModel.load(model_path)
    assert model.atom_counts() == [7]


def test_loss_audit_reports_tiny_loss_for_exact_oracle(tmp_path, rng, capsys):
    # One reference only: the mixture prediction then coincides with the
    # perturbation target at every noise level, so the loss is numerically 0.
    path = tmp_path / "single.xyz"
    save_xyz(path, [random_structure(rng, n=6, name="only")])
    code, out, _ = run_cli(
        ["loss-audit", "--refs", str(path), "--draws", "40", "--seed", "2"], capsys
    )
    assert code == 0
    assert out.startswith("loss: ")
    value = float(out.split()[1])
    assert value < 1e-10


def test_serve_refuses_occupied_port(refs_file, capsys):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        code, _, err = run_cli(
            ["serve", "--refs", refs_file, "--bind", f"127.0.0.1:{port}"], capsys
        )
    finally:
        blocker.close()
    assert code == 2
    assert "cannot bind" in err


def test_cli_module_runs_as_subprocess(tmp_path, refs_file):
    out = tmp_path / "sub.xyz"
    result = subprocess.run(
        [
            sys.executable,
            "-m",
            "gpff.cli",
            "generate",
            "--refs",
            refs_file,
            "--count",
            "1",
            "--seed",
            "0",
            "--out",
            str(out),
        ],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0, result.stderr
    assert "wrote 1 structures" in result.stdout
    assert len(load_xyz(out)) == 1
