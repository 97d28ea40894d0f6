"""Acceptance criteria, each evaluated at its stated tolerance.

Every test records a PASS/FAIL line (echoed in the terminal summary) before
asserting, so a failing criterion still reports the measured value.
"""

import json
import time

import numpy as np
import pytest

from fiberpiano import cli
from fiberpiano.config import ExperimentConfig
from fiberpiano.experiments import Setup, ensemble_samples, run_optimize, run_schmidt
from fiberpiano.fiber import FiberPiano, assemble_tm, build_actuator_bank, random_segment_unitary
from fiberpiano.metrics import enhancement_report
from fiberpiano.modes import DetectorSpec, FiberSpec, build_mode_basis, detector_mode, render_field
from fiberpiano.optimize import make_cost, pso_run
from fiberpiano.quantum import coincidence_map, contrast, singles_map, spdc_state

# Oracle-run coincidence enhancements of the default configuration (root seed
# 20230611), frozen as regression references with a +/-20% band.
FROZEN_FOCUS = {"heralded": 21.95, "two_photon": 38.76}
BAND = 0.20

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def focus_runs(setup):
    runs, times = {}, {}
    for conf in ("heralded", "two_photon"):
        t0 = time.perf_counter()
        runs[conf] = run_optimize(setup, "single_spot", conf)
        times[conf] = time.perf_counter() - t0
    return runs, times


@pytest.fixture(scope="module")
def equal_setup(default_cfg):
    return Setup(default_cfg.replace(state={"spectrum": "equal", "configuration": "two_photon"}))


def test_c01_unitarity(default_cfg, verdict):
    a = default_cfg.actuators
    bank = build_actuator_bank(30, a.count, a.coupling_strength, 0.0, default_cfg.derived_seed("actuators"))
    fiber_seed = default_cfg.derived_seed("fiber")
    V = np.random.default_rng(default_cfg.derived_seed("baseline")).uniform(-1, 1, (100, 37))
    t0 = time.perf_counter()
    ref = max(assemble_tm(bank, v, fiber_seed).unitarity_error() for v in V)
    fast = FiberPiano(bank, fiber_seed).tm(V)
    eye = np.eye(30)
    fast_err = float(np.max(np.abs(np.conj(np.swapaxes(fast, 1, 2)) @ fast - eye)))
    elapsed = time.perf_counter() - t0
    ok = ref < 1e-10 and fast_err < 1e-10 and elapsed < 10
    assert verdict(1, "unitarity at beta=0", ok,
                   f"max |T^H T - I| = {max(ref, fast_err):.2e} (< 1e-10), {elapsed:.1f} s (< 10 s)")


def test_c02_contrast_law(default_cfg, verdict):
    t0 = time.perf_counter()
    parts, ok = [], True
    for k in (1, 5, 15):
        s = Setup(default_cfg.replace(state={"schmidt_number": k, "spectrum": "equal"}))
        singles, _ = ensemble_samples(s, 500)
        c = contrast(singles)
        rel = c * np.sqrt(k) - 1
        ok &= abs(rel) <= 0.10
        parts.append(f"K={k}: {c:.4f} vs {1 / np.sqrt(k):.4f} ({rel:+.1%})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    assert verdict(2, "singles contrast 1/sqrt(K) within 10%", ok,
                   "; ".join(parts) + f"; {elapsed:.1f} s")


def test_c03_two_photon_contrast(equal_setup, verdict):
    _, coinc = ensemble_samples(equal_setup, 500)
    c = contrast(coinc)
    ok = abs(c - 1) <= 0.15
    assert verdict(3, "two-photon contrast 1 within 15%", ok,
                   f"equal-weight K=15 coincidence contrast {c:.4f}")


def _oracle(basis, t, lam, fixed, scanner, xs, ys):
    """Direct summation over Schmidt terms with full-grid quadrature."""
    def amp(a, det):
        g = detector_mode(det, basis.grid).values
        return np.sum(g.conj() * render_field(t[:, a], basis).values) * basis.grid.cell_area

    fixed_amps = [amp(a, fixed) for a in range(len(lam))]
    singles = np.zeros((len(ys), len(xs)))
    coinc = np.zeros((len(ys), len(xs)))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            amps = [amp(a, scanner.moved(x, y)) for a in range(len(lam))]
            singles[i, j] = sum(lam[a] * abs(amps[a]) ** 2 for a in range(len(lam)))
            coinc[i, j] = abs(sum(np.sqrt(lam[a]) * amps[a] * fixed_amps[a]
                                  for a in range(len(lam)))) ** 2
    return singles, coinc


def test_c04_brute_force_equivalence(verdict):
    scanner = DetectorSpec((0.0, 0.0), 25.0, "scanning", 12.5)
    fixed = DetectorSpec((-4.0, 3.0), 25.0, "fixed", 12.5)
    xs = np.linspace(-8, 8, 5)
    ys = np.linspace(-6, 6, 4)
    worst = 0.0
    for n in (1, 2, 3, 4):
        basis = build_mode_basis(FiberSpec(mode_truncation=n))
        t = random_segment_unitary(n, seed=n)
        for k in range(1, min(n, 2) + 1):
            for equal in (True, False):
                state = spdc_state(k, n, equal_weights=equal)
                ref_s, ref_c = _oracle(basis, t, state.schmidt_coeffs, fixed, scanner, xs, ys)
                s = singles_map(state, t, basis, scanner, xs, ys).values
                c = coincidence_map(state, t, basis, fixed, scanner, xs, ys).values
                worst = max(worst, np.max(np.abs(s - ref_s)), np.max(np.abs(c - ref_c)))
    ok = worst < 1e-10
    assert verdict(4, "maps equal direct-summation oracle", ok,
                   f"max abs deviation {worst:.2e} (< 1e-10) for N<=4, K<=2")


def test_c05_focusing(focus_runs, verdict):
    runs, times = focus_runs
    parts, ok = [], True
    for conf, res in runs.items():
        eta = res.enhancement
        ref = FROZEN_FOCUS[conf]
        in_band = abs(eta / ref - 1) <= BAND
        ok &= eta >= 8 and in_band
        parts.append(f"{conf} eta={eta:.2f} (>= 8, frozen {ref} +/-20%)")
    total = sum(times.values())
    ok &= total < 900
    assert verdict(5, "focusing enhancement", ok, "; ".join(parts) + f"; {total:.1f} s")


def test_c06_negative_control(focus_runs, equal_setup, verdict):
    # evaluated with K=15 equal weights in the two-photon configuration
    runs, _ = focus_runs
    coinc_fb = run_optimize(equal_setup, "single_spot", "two_photon")
    singles_fb = run_optimize(equal_setup, "singles_feedback", "two_photon")
    eta_s = singles_fb.enhancement
    ratio_c5 = runs["two_photon"].enhancement / eta_s
    ratio_same = coinc_fb.enhancement / eta_s
    ok = eta_s <= 2 and ratio_c5 >= 4 and ratio_same >= 4
    assert verdict(6, "singles feedback does not focus coincidences", ok,
                   f"singles-feedback eta={eta_s:.2f} (<= 2); ratio to focusing eta "
                   f"{ratio_c5:.1f} and to same-state coincidence feedback {ratio_same:.1f} (>= 4)")


def test_c07_two_spot(setup, verdict):
    parts, ok = [], True
    for conf in ("heralded", "two_photon"):
        res = run_optimize(setup, "two_spot", conf)
        e1, e2 = res.spot_enhancements
        c1, c2 = res.spot_values
        imbalance = abs(c1 - c2) / max(c1, c2)
        ok &= min(e1, e2) >= 3 and imbalance <= 0.3
        parts.append(f"{conf} spots {e1:.2f}x/{e2:.2f}x (>= 3), imbalance {imbalance:.3f} (<= 0.3)")
    assert verdict(7, "two-spot focusing", ok, "; ".join(parts))


def test_c08_smf_coupling(setup, verdict):
    res = run_optimize(setup, "smf_coupling")
    trace = res.run.trace_best / res.smf_baseline.mean
    crossed = np.flatnonzero(trace >= 5)
    first = int(crossed[0]) if crossed.size else None
    ok = res.enhancement >= 8 and first is not None and first <= 300
    assert verdict(8, "SMF coupling", ok,
                   f"coupling eta={res.enhancement:.2f} (>= 8); trace reaches 5x at iteration "
                   f"{first} (<= 300), {trace[min(300, len(trace) - 1)]:.1f}x at 300")


def test_c09_schmidt_pipeline(setup, verdict):
    res = run_schmidt(setup, 1900)
    k = res.schmidt_estimate
    ok = 12 <= k <= 18
    assert verdict(9, "Schmidt estimate for K=15", ok,
                   f"K_est={k:.2f} from {res.n_configurations} configurations (target [12, 18]), "
                   f"uncorrected 1/C^2 ratio {res.plain_estimate:.2f}; "
                   f"singles contrast {res.singles_contrast:.4f}, "
                   f"coincidence contrast {res.coincidence_contrast:.4f}")


def test_c10_enhancement_decomposition(default_cfg, focus_runs, verdict):
    runs, _ = focus_runs
    identity = max(abs(r.report.enhancement - r.report.normalized_enhancement * r.report.total_ratio)
                   / r.report.enhancement for r in runs.values())
    lossless = Setup(default_cfg.replace(actuators={"loss_coefficient": 0.0}))
    parts, ok = [], identity < 1e-9
    for conf in ("heralded", "two_photon"):
        res = run_optimize(lossless, "single_spot", conf)
        v0 = np.zeros(37)
        totals = (lossless.full_aperture_total(v0, conf),
                  lossless.full_aperture_total(res.run.best_displacements, conf))
        rep = enhancement_report(res.before["coincidence"], res.after["coincidence"],
                                 lossless.target.position, res.coincidence_baseline, totals=totals)
        ok &= abs(rep.total_ratio - 1) <= 0.02
        ok &= abs(rep.enhancement - rep.normalized_enhancement * rep.total_ratio) <= 1e-9 * rep.enhancement
        parts.append(f"{conf} rho_total={rep.total_ratio:.5f}")
    assert verdict(10, "enhancement decomposition", ok,
                   f"max relative |eta - eta_norm rho| = {identity:.1e}; beta=0 full aperture: "
                   + ", ".join(parts) + " (1 within 2%)")


def test_c11_determinism(tmp_path, default_cfg, verdict):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(default_cfg.to_dict()))
    mismatched = []
    for command, folder in (("speckle", "speckle"), ("optimize", "optimize_single_spot"),
                            ("schmidt", "schmidt")):
        assert cli.main([command, "--config", str(cfg_path), "--out", str(tmp_path / "a"),
                         "--no-figures"]) == 0
        first = tmp_path / "a" / folder / "manifest.json"
        assert cli.main([command, "--config", str(first), "--out", str(tmp_path / "b"),
                         "--no-figures"]) == 0
        second = tmp_path / "b" / folder / "manifest.json"
        out1 = json.loads(first.read_text())["outputs"]
        out2 = json.loads(second.read_text())["outputs"]
        for name, entry in out1.items():
            a = (tmp_path / "a" / folder / entry["file"]).read_bytes()
            b = (tmp_path / "b" / folder / out2[name]["file"]).read_bytes()
            if a != b:
                mismatched.append(f"{folder}/{entry['file']}")
    seeds = np.random.default_rng(11).integers(0, 2**31, 20)
    nonmonotone = 0
    for seed in seeds:
        s = Setup(default_cfg.replace(seed=int(seed)))
        run = pso_run(make_cost("single_spot", s.context()), s.pso_config())
        nonmonotone += bool(np.any(np.diff(run.trace_best) < 0))
    ok = not mismatched and nonmonotone == 0
    assert verdict(11, "determinism", ok,
                   f"manifest replays bit-identical for speckle/optimize/schmidt "
                   f"({len(mismatched)} mismatched files); {20 - nonmonotone}/20 seeds with "
                   f"monotone best-so-far traces")
