"""Acceptance criteria 1 to 11, each printing one PASS/FAIL line."""

import json
import math
import struct
import time
from fractions import Fraction

import numpy as np
import pytest

from nl4s.evolution import EvolveConfig, fit_blowup_rate, scaling_test, strang_evolve
from nl4s.experiments import RunConfig, manifest_fingerprint, run_experiment
from nl4s.exponents import compute_paper_exponents, gamma_lower_gwp, gamma_pq, named_pairs
from nl4s.ground_state import ground_state, gn_verify, petviashvili_solve
from nl4s.i_operator import almost_conservation_sweep, build_m, check_I_properties, modified_energy
from nl4s.observables import NonlinearityParams, energy
from nl4s.snapshot import SnapshotError, snapshot_load, snapshot_save
from nl4s.spectral import GridSpec, PhysicalField, dyadic_ladder, lp_project

from conftest import random_field
from test_exponents import brute_force, close

P8 = NonlinearityParams(8.0)
GRID = GridSpec(1, 1024, 20.0)


def report(capsys, k: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\nACCEPTANCE {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def rel(a, b) -> float:
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


@pytest.fixture(scope="module")
def blowup_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("blowup")
    t0 = time.perf_counter()
    man = run_experiment(RunConfig.from_dict({"kind": "blowup_concentration"}), out)
    return man, time.perf_counter() - t0


def test_c01_spectral(capsys):
    g = GridSpec(1, 256, 10.0)
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {"plancherel": 0.0, "roundtrip": 0.0, "partition": 0.0}
    for _ in range(100):
        f = random_field(g, rng)
        F = g.fft(f.values)
        lhs, rhs = g.integrate(np.abs(f.values) ** 2), float(np.sum(np.abs(F) ** 2))
        worst["plancherel"] = max(worst["plancherel"], abs(lhs - rhs) / lhs)
        worst["roundtrip"] = max(worst["roundtrip"], rel(g.ifft(F), f.values))
        parts = lp_project(f, 1.0, "leq").values + sum(lp_project(f, M, "eq").values for M in dyadic_ladder(g, 1.0))
        worst["partition"] = max(worst["partition"], rel(parts, f.values))
    dt = time.perf_counter() - t0
    ok = all(v < 1e-12 for v in worst.values()) and dt < 10
    report(capsys, 1, ok, f"max rel errors {worst}, {dt:.2f}s")


def test_c02_ground_state(capsys):
    t0 = time.perf_counter()
    rec = petviashvili_solve(GRID, 8.0)
    rep = gn_verify(rec, samples=500, tol=1e-6, raise_on_violation=False)
    dt = time.perf_counter() - t0
    ok = rec.residual < 1e-10 and rep.attainment_rel_error < 1e-6 and rep.energy_rel < 1e-6 and rep.ok and dt < 60
    report(
        capsys,
        2,
        ok,
        f"residual {rec.residual:.2e}, GN identity {rep.attainment_rel_error:.1e}, |E(Q)|/||dQ||^2 {rep.energy_rel:.1e}, "
        f"max sample ratio/C {rep.max_sample_ratio / rep.C_attained:.4f}, {dt:.1f}s",
    )


def test_c03_conservation(capsys):
    u0 = ground_state(GRID).Q * 0.9
    t0 = time.perf_counter()
    drifts, mdrift = [], 0.0
    for c in (2.5e-4, 1.25e-4, 6.25e-5):
        traj = strang_evolve(u0, EvolveConfig(P8, dt0=1.0, c_dt=c, T_max=1.0))
        assert traj.stop_reason == "T_max"
        e, m = traj.series.array("energy"), traj.series.array("mass")
        drifts.append(float(np.max(np.abs(e - e[0])) / abs(e[0])))
        mdrift = max(mdrift, float(np.max(np.abs(m - m[0])) / m[0]))
    dt = time.perf_counter() - t0
    orders = [math.log2(drifts[0] / drifts[1]), math.log2(drifts[1] / drifts[2])]
    ok = mdrift < 1e-10 and drifts[-1] < 1e-8 and all(1.8 <= o <= 2.2 for o in orders) and dt < 120
    report(capsys, 3, ok, f"mass drift {mdrift:.1e}, energy drift {drifts[-1]:.2e} at c=6.25e-5, orders {orders[0]:.3f} {orders[1]:.3f}, {dt:.1f}s")


def test_c04_i_operator(capsys):
    notes = []
    boundary = all(
        build_m(N, g)(np.array([N]))[0] == 1.0 and build_m(N, g)(np.array([2 * N]))[0] == 2.0 ** (g - 2)
        for N in (1.0, 4.0, 16.0, 64.0)
        for g in (0.7, 1.2, 1.5, 1.9)
    )
    notes.append(f"boundary {boundary}")
    g256 = GridSpec(1, 256, 10.0)
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        rep = check_I_properties(random_field(g256, rng), build_m(2.0 ** (i % 6), 1.5), sigma=float(rng.uniform(0, 1.5)))
        worst = max(worst, rep.max_normalized())
    notes.append(f"max normalized ratio {worst:.12f}")
    gm = GridSpec(1, 128, math.pi)
    single = 0.0
    for k in (10, 24, 60):
        u = PhysicalField(gm, np.exp(1j * k * gm.axis))
        rep = check_I_properties(u, build_m(4.0, 1.5), sigma=1.0)
        single = max(single, abs(rep.raw["bounded"] - (k / 4.0) ** -0.5), abs(rep.raw["homogeneous"] - 1.0))
    notes.append(f"single-mode error {single:.1e}")
    u = ground_state(GRID).Q * 0.9
    m = build_m(2 * GRID.xi_max, 1.5)
    exact = modified_energy(u, m, P8) == energy(u, P8)
    notes.append(f"E(Iu)=E(u) {exact}")
    report(capsys, 4, boundary and worst <= 1 + 1e-9 and single < 1e-12 and exact, ", ".join(notes))


def test_c05_almost_conservation(capsys):
    g = GridSpec(1, 2048, 20.0)
    u0 = ground_state(g).Q * 0.9
    t0 = time.perf_counter()
    res = almost_conservation_sweep(u0, 1.5, 0.05, [8, 16, 32, 64], 0.5, EvolveConfig(P8, dt0=1.0, c_dt=2e-4))
    dt = time.perf_counter() - t0
    ok = res.strictly_decreasing() and res.slope <= -0.25 and dt < 600
    incs = ", ".join(f"{x:.6e}" for x in res.sup_increment)
    report(capsys, 5, ok, f"sup increments [{incs}], slope {res.slope:.3g}, raw drift {res.raw_energy_drift:.3e}, {dt:.1f}s")


def test_c06_blowup_rate(capsys, blowup_manifest):
    man, dt = blowup_manifest
    b = man.outcome.get("blowup", {})
    t = 0.99 - np.geomspace(0.5, 1e-4, 60)
    fit = fit_blowup_rate(t, 3.0 * (0.99 - t) ** -0.5)
    synth = abs(fit["T_star"] - 0.99) / 0.99 < 0.01 and abs(fit["beta"] - 0.5) / 0.5 < 0.04
    beta = b.get("rate_exponent", float("nan"))
    ok = bool(b.get("detected")) and beta >= 1.5 / 4 and synth and dt < 600 and not man.errors
    report(capsys, 6, ok, f"detected {b.get('detected')}, beta {beta:.4f} (bound 0.375), T* {b.get('T_star_estimate', float('nan')):.6f}, synthetic ok {synth}, {dt:.0f}s")


def test_c07_concentration(capsys, blowup_manifest):
    man, _ = blowup_manifest
    c = man.outcome.get("concentration", {})
    frac = c.get("max_trusted_fraction", float("nan"))
    report(capsys, 7, frac >= 0.9, f"max trusted concentration / ||Q||^2 = {frac:.4f} over {c.get('snapshots')} snapshots")


def test_c08_global_existence(capsys, tmp_path):
    t0 = time.perf_counter()
    man = run_experiment(RunConfig.from_dict({"kind": "gwp_below_threshold"}), tmp_path)
    dt = time.perf_counter() - t0
    o = man.outcome
    ok = man.passed and dt < 600
    report(capsys, 8, ok, f"stop {o.get('stop_reason')}, max H^g ratio {o.get('max_hgamma_ratio', float('nan')):.4f}, min E(Iu) {o.get('min_modified_energy', float('nan')):.4f}, {dt:.1f}s")


def test_c09_exponents(capsys):
    pairs_ok = all(gamma_pq(p, q, d) == 0 for d in (5, 6, 7) for p, q in named_pairs(d).values())
    rng = np.random.default_rng(99)
    sweep_ok = True
    for _ in range(100):
        d, g, de = int(rng.integers(5, 8)), float(rng.uniform(1.6, 1.999)), float(rng.uniform(0, 0.6))
        ref = brute_force(d, g, de)
        rep = compute_paper_exponents(d, g, de, strict=False)
        for key, val in ref.items():
            got = getattr(rep, key)
            sweep_ok &= math.isnan(got) if val is None else close(got, val)
    gwp_ok = [gamma_lower_gwp(d) for d in (5, 6, 7)] == [Fraction(40, 23), Fraction(24, 13), Fraction(56, 29)]
    report(capsys, 9, pairs_ok and sweep_ok and gwp_ok, f"named pairs exact {pairs_ok}, sweep {sweep_ok}, gwp thresholds {gwp_ok}")


def test_c10_scaling(capsys):
    u0 = ground_state(GRID).Q * 0.9
    cfg = EvolveConfig(P8, dt0=1.0, c_dt=2.5e-4)
    r2 = scaling_test(u0, 2.0, cfg, t=0.1)
    r1 = scaling_test(u0, 1.0, cfg, t=0.1)
    ok = r2.ok and r1.discrepancy == 0.0
    report(capsys, 10, ok, f"lambda=2 discrepancy {r2.discrepancy:.3e} vs Richardson {r2.richardson:.3e}; lambda=1 discrepancy {r1.discrepancy}")


def test_c11_persistence(capsys, tmp_path):
    g = GridSpec(2, 32, 6.0)
    f = random_field(g, np.random.default_rng(0))
    path = snapshot_save(f, tmp_path / "f.nl4s", time=1.0)
    roundtrip = snapshot_load(path).values.tobytes() == f.values.tobytes()
    raw = path.read_bytes()
    caught = []
    for name, bad in (
        ("magic", b"NL5S" + raw[4:]),
        ("version", raw[:4] + struct.pack("<I", 7) + raw[8:]),
        ("length", raw[:-3]),
    ):
        p = tmp_path / f"bad_{name}.nl4s"
        p.write_bytes(bad)
        try:
            snapshot_load(p)
        except SnapshotError:
            caught.append(name)
    cfg = RunConfig.from_dict({"kind": "evolve", "seed": 5, "grid": {"n": 256}, "initial": {"recipe": "random_localized", "mass": 1.0}, "evolve": {"T_max": 0.05}})
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a, b = (json.loads((tmp_path / x / "manifest.json").read_text()) for x in "ab")
    same = manifest_fingerprint(a) == manifest_fingerprint(b)
    ok = roundtrip and caught == ["magic", "version", "length"] and same
    report(capsys, 11, ok, f"roundtrip bit-identical {roundtrip}, detected {caught}, manifests identical {same}")
