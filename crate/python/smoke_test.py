#!/usr/bin/env python3
"""Smoke test for the mpec_funnel_py extension module.

Builds nothing itself: compile the extension first with

    cargo build -p mpec-funnel-py --release

then run

    python3 python/smoke_test.py
"""

import ctypes.util
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    candidates = [
        REPO / "target" / profile / f"libmpec_funnel_py{ext}"
        for profile in ("release", "debug")
        for ext in (".so", ".dylib")
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit(
            "extension not found; run `cargo build -p mpec-funnel-py --release` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="mpec_funnel_py_"))
    shutil.copy2(built, stage / f"mpec_funnel_py{suffix}")
    sys.path.insert(0, str(stage))
    import mpec_funnel_py

    return mpec_funnel_py


def approx(a, b, tol=1e-6):
    return abs(a - b) <= tol


def main():
    mf = load_module()

    names = [str(n) for n in mf.registry()]
    assert "lin_biactive" in names and "quad_branch" in names, names
    print(f"registry: {', '.join(names)}")

    # Solve the biactive fixture and certify S-stationarity at the origin.
    prob = mf.MpecProblem.from_registry("lin_biactive")
    assert (prob.n, prob.m, prob.p, prob.q) == (2, 0, 0, 1)
    result = prob.solve([1.0, 1.0])
    assert result.status == "s_stationary_point", result.status
    assert result.stationarity_class == "S"
    assert all(abs(v) <= 1e-6 for v in result.x), result.x
    mults = result.multipliers
    assert approx(mults["nu_hat"][0], 1.0, 1e-4)
    assert approx(mults["xi_hat"][0], 1.0, 1e-4)
    rows = result.trace()
    assert rows and rows[-1]["theta"] <= 1e-6
    print(f"lin_biactive: x = {result.x}, class {result.stationarity_class}, "
          f"{result.iterations} iterations")

    # quad_branch reaches a branch minimum with f = 1.
    result = mf.MpecProblem.from_registry("quad_branch").solve()
    assert result.status == "s_stationary_point"
    assert approx(result.f, 1.0), result.f
    print(f"quad_branch: f = {result.f:.9f} at {result.x}")

    # Gradient verification and point diagnostics.
    report = prob.check_gradients([0.3, 0.7])
    assert report["pass"], report
    check = mf.MpecProblem.from_registry("quad_branch").check_point([0.0, 0.0])
    assert check["class"] == "C", check
    assert approx(check["nu_hat"][0], -2.0, 1e-4)
    print(f"quad_branch origin classified {check['class']} with "
          f"nu_hat = {check['nu_hat'][0]:.4f}")

    # A problem document round-trips through the loader.
    doc = """{
        "name": "doc_problem", "n": 2,
        "objective": { "P": [[0,0],[0,0]], "c": [1.0, 1.0] },
        "G": { "A": [[1,0]], "b": [0] },
        "H": { "A": [[0,1]], "b": [0] },
        "x0": [1.0, 1.0]
    }"""
    result = mf.MpecProblem.from_document(doc).solve()
    assert result.status == "s_stationary_point"
    evals = prob.evaluate([1.0, 1.0])
    assert approx(evals["Q"], 1.0) and approx(evals["theta"], 1.0)

    # Config knobs reach the solver: an out-of-range rho is rejected.
    try:
        prob.solve([1.0, 1.0], config_json='{"rho": 0.9}')
    except ValueError:
        pass
    else:
        sys.exit("expected rho = 0.9 to be rejected")

    print("smoke test: OK")


if __name__ == "__main__":
    main()
