import json
from dataclasses import dataclass

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from gpff import (
    Structure,
    ensemble_report,
    js_divergence,
    perceive_bonds,
    validity,
    write_report_csv,
    write_report_json,
)
from gpff.metrics import BOND_SCALE, COVALENT_RADII, MIN_CONTACT


@dataclass
class StubTrace:
    nfe: int


def methane():
    corners = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    )
    positions = np.vstack([[0.0, 0.0, 0.0], corners * (1.09 / np.sqrt(3.0))])
    return Structure(["C", "H", "H", "H", "H"], positions, name="methane")


def ch5():
    positions = np.vstack(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return Structure(["C"] + ["H"] * 5, positions, name="ch5")


def h2_pair():
    positions = np.array(
        [[0.0, 0.0, 0.0], [0.74, 0.0, 0.0], [10.0, 0.0, 0.0], [10.74, 0.0, 0.0]]
    )
    return Structure(["H", "H", "H", "H"], positions, name="h2-pair")


def rigid_motion(structure, rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    shift = rng.normal(scale=5.0, size=3)
    return structure.with_positions(structure.positions @ q.T + shift)


def test_hh_bond_cutoff():
    near = Structure(["H", "H"], [[0, 0, 0], [0.74, 0, 0]])
    far = Structure(["H", "H"], [[0, 0, 0], [0.75, 0, 0]])
    assert perceive_bonds(near) == [(0, 1)]
    assert perceive_bonds(far) == []
    # the cutoff itself: 1.2 * (0.31 + 0.31)
    assert BOND_SCALE * 2 * COVALENT_RADII["H"] == pytest.approx(0.744)


def test_cc_long_distance_not_bonded():
    s = Structure(["C", "C"], [[0, 0, 0], [3.0, 0, 0]])
    assert perceive_bonds(s) == []


def test_perceive_bonds_rejects_unknown_element():
    s = Structure(["C", "Xe"], [[0, 0, 0], [1.5, 0, 0]])
    with pytest.raises(ValueError, match="unknown element"):
        perceive_bonds(s)


def test_methane_is_valid():
    entry = validity(methane())
    assert entry.valid
    assert entry.reason is None


def test_separated_fragments_are_disconnected():
    entry = validity(h2_pair())
    assert not entry.valid
    assert entry.reason == "disconnected"


def test_overloaded_carbon_is_bad_valence():
    entry = validity(ch5())
    assert not entry.valid
    assert entry.reason == "bad-valence"


def test_lone_atom_misses_its_valence():
    entry = validity(Structure(["H"], [[0.0, 0.0, 0.0]]))
    assert not entry.valid
    assert entry.reason == "bad-valence"


def test_close_contact_reported_before_connectivity():
    positions = [[0, 0, 0], [0.3, 0, 0], [9, 0, 0], [9.74, 0, 0]]
    entry = validity(Structure(["H", "H", "H", "H"], positions))
    assert not entry.valid
    assert entry.reason == "overlapping-atoms"
    assert MIN_CONTACT == 0.5


def test_unknown_element_reports_parse():
    entry = validity(Structure(["Si", "H"], [[0, 0, 0], [1.4, 0, 0]]))
    assert not entry.valid
    assert entry.reason == "parse"


def test_validity_is_rigid_motion_invariant(rng):
    for structure in (methane(), ch5(), h2_pair()):
        base = validity(structure)
        for _ in range(5):
            moved = validity(rigid_motion(structure, rng))
            assert moved.valid == base.valid
            assert moved.reason == base.reason


def test_js_identical_samples(rng):
    a = rng.normal(size=1000)
    assert js_divergence(a, a.copy()) == pytest.approx(0.0, abs=1e-12)


def test_js_disjoint_samples(rng):
    a = rng.uniform(0.0, 1.0, size=500)
    b = rng.uniform(10.0, 11.0, size=500)
    assert js_divergence(a, b) == pytest.approx(1.0, abs=1e-12)


def test_js_degenerate_shared_value():
    assert js_divergence([5.0, 5.0, 5.0], [5.0, 5.0]) == 0.0


def test_js_rejects_empty():
    with pytest.raises(ValueError):
        js_divergence([], [1.0])


def continuous_js(pdf_a, pdf_b, lo, hi):
    def integrand(x):
        p = pdf_a(x)
        q = pdf_b(x)
        m = 0.5 * (p + q)
        total = 0.0
        if p > 0:
            total += 0.5 * p * np.log2(p / m)
        if q > 0:
            total += 0.5 * q * np.log2(q / m)
        return total

    value, _ = quad(integrand, lo, hi, limit=300)
    return value


def test_js_matches_quadrature_for_gaussians():
    rng = np.random.default_rng(17)
    a = rng.normal(0.0, 1.0, size=100_000)
    b = rng.normal(1.0, 1.5, size=100_000)
    sampled = js_divergence(a, b, bins=150)
    exact = continuous_js(
        lambda x: norm.pdf(x, 0.0, 1.0), lambda x: norm.pdf(x, 1.0, 1.5), -12.0, 14.0
    )
    assert abs(sampled - exact) < 0.015


def test_ensemble_report_counts_and_reasons():
    report = ensemble_report([methane(), ch5(), h2_pair()])
    assert report.n_generated == 3
    assert report.validity_fraction == pytest.approx(1.0 / 3.0)
    assert report.failure_counts == {"bad-valence": 1, "disconnected": 1}
    assert [e.valid for e in report.entries] == [True, False, False]
    assert len(report.mpd_generated) == 3
    assert report.mpd_js is None
    assert report.shape_mean is not None


def test_ensemble_report_flags_degenerate_shapes():
    pointlike = Structure(["H", "H"], [[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]])
    report = ensemble_report([methane(), pointlike])
    assert report.shape_points[0] is not None
    assert report.shape_points[1] is None
    # the mean skips the degenerate entry instead of poisoning it
    assert np.allclose(report.shape_mean, report.shape_points[0])


def test_ensemble_report_reference_and_traces(rng):
    generated = [rigid_motion(methane(), rng) for _ in range(4)]
    reference = [rigid_motion(methane(), rng) for _ in range(4)]
    traces = [StubTrace(nfe=n) for n in (3, 5, 5, 9)]
    report = ensemble_report(generated, reference=reference, traces=traces)
    assert report.mpd_js is not None
    assert 0.0 <= report.mpd_js <= 1.0
    assert report.nfe["mean"] == pytest.approx(5.5)
    assert report.nfe["min"] == 3
    assert report.nfe["max"] == 9
    assert report.nfe["per_structure"] == [3, 5, 5, 9]


def test_ensemble_report_trace_misalignment():
    with pytest.raises(ValueError, match="align"):
        ensemble_report([methane()], traces=[StubTrace(2), StubTrace(3)])


def test_ensemble_report_requires_structures():
    with pytest.raises(ValueError):
        ensemble_report([])


def test_report_json_is_deterministic(tmp_path, rng):
    generated = [rigid_motion(methane(), rng) for _ in range(3)]
    report = ensemble_report(generated, reference=[methane()])
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    write_report_json(report, first)
    write_report_json(report, second)
    assert first.read_bytes() == second.read_bytes()
    payload = json.loads(first.read_text())
    assert payload["n_generated"] == 3
    assert payload["mpd"]["js_divergence"] == report.mpd_js
    assert list(payload) == sorted(payload)


def test_report_csv_files(tmp_path, rng):
    generated = [rigid_motion(methane(), rng) for _ in range(4)]
    reference = [rigid_motion(methane(), rng) for _ in range(2)]
    traces = [StubTrace(nfe=n) for n in (3, 3, 7, 7)]
    report = ensemble_report(generated, reference=reference, traces=traces, bins=20)
    paths = write_report_csv(report, tmp_path)
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == ["mpd_histogram.csv", "validity_vs_nfe.csv"]

    nfe_lines = (tmp_path / "validity_vs_nfe.csv").read_text().strip().splitlines()
    assert nfe_lines[0] == "nfe,count,valid,valid_fraction"
    assert nfe_lines[1].startswith("3,2,2,")
    assert nfe_lines[2].startswith("7,2,2,")

    hist_lines = (tmp_path / "mpd_histogram.csv").read_text().strip().splitlines()
    assert hist_lines[0] == "bin_left,bin_right,generated,reference"
    assert len(hist_lines) == 21
    gen_total = sum(int(line.split(",")[2]) for line in hist_lines[1:])
    ref_total = sum(int(line.split(",")[3]) for line in hist_lines[1:])
    assert gen_total == 4
    assert ref_total == 2


def test_report_csv_without_traces(tmp_path):
    report = ensemble_report([methane()], bins=10)
    paths = write_report_csv(report, tmp_path)
    assert len(paths) == 1
    assert paths[0].endswith("mpd_histogram.csv")
