"""Acceptance criteria at full size.

Each test prints one ``PASS``/``FAIL`` line for its criterion (also repeated
in the terminal summary) and then asserts on the same verdict.  Details of
every underlying check are printed below the criterion line.
"""

from pathlib import Path

import pytest

from mincusum import checks, cli
from mincusum.montecarlo import default_workers

from conftest import ACCEPTANCE_LINES

SEED = 0
WORKERS = default_workers()


def report(number, title, results):
    ok = all(r.passed for r in results)
    seconds = sum(r.seconds for r in results)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} ({seconds:.1f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    for r in results:
        print("    " + r.line())
    assert ok, "\n".join(r.line() for r in results if not r.passed)


def test_01_engine_equivalence():
    report(1, "recursion equals direct definition (Gaussian 1e-12, Bernoulli exact, < 5 s)",
           checks.check_engine_equivalence(n_paths=1000, length=100, seed=SEED, time_limit=5.0))


@pytest.fixture(scope="module")
def fig2_rows():
    return checks.reproduce("fig2", seed=SEED, n_paths=10_000, workers=WORKERS).rows


def test_02_fig2(fig2_rows):
    report(2, "single-fault misid below 6 b e^-b, nu=20 ~ nu=100, decreasing in b",
           checks.check_fig2(rows=fig2_rows))


def test_03_fig4_partial_ordering():
    report(3, "concurrent partial ordering P{2} >= P{1,3} >= P{3} on b in [3, 6]",
           checks.check_fig4_ordering(n_paths=10_000, seed=SEED, workers=WORKERS))


def test_04_arl():
    report(4, "no-change ARL >= e^b/3 - 3se at b in {3, 4}, <= 0.1% truncated",
           checks.check_arl((3.0, 4.0), n_paths=10_000, horizon=100_000, seed=SEED, workers=WORKERS))


def test_05_delay():
    report(5, "delay at b=6 inside [b/I - 3se, b/I + B + 3se]",
           checks.check_delay(6.0, n_paths=10_000, horizon=100_000, seed=SEED, workers=WORKERS,
                              n_excess=1_000_000))


def test_06_roots():
    report(6, "roots 1 (single fault) and 1 + 2|g_j/g_i| (two-sided) within 1e-8; psi'(0) within 1e-6",
           checks.check_roots(1e-8))


def test_07_enumeration_oracle():
    report(7, "Monte Carlo vs exact enumeration, >= 99/100 agreements at nu in {0, 2}",
           checks.check_enumeration_oracle(reps=100, n_paths=100_000, b=1.0, horizon=8, nus=(0, 2),
                                           min_agree=99, seed=SEED))


def test_08_condition34():
    report(8, "conditional tail <= e^-x + 3se at nu=20, b=4, x in {0, 0.5, ..., 4}",
           checks.check_condition34(nu=20, b=4.0, n_paths=10_000, seed=SEED))


def test_09_lemma1():
    report(9, "L(x; b) >= l(x; b) - 3se at b=5, x in {0..4}, and non-increasing",
           checks.check_lemma1(5.0, (0.0, 1.0, 2.0, 3.0, 4.0), n_paths=10_000, seed=SEED,
                               workers=WORKERS))


def test_10_kernel_monotonicity():
    report(10, "one-step kernel ECDF dominance within the DKW band",
           checks.check_kernel_monotonicity(n_samples=100_000, seed=SEED))


def test_11_determinism(tmp_path):
    outputs = []
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        code = cli.main(["reproduce", "fig2", "--seed", str(SEED), "--workers", str(workers),
                         "--out-dir", str(out)])
        assert code == 0
        outputs.append(Path(out / "fig2.csv").read_bytes())
    same = outputs[0] == outputs[1]
    report(11, "reproduce fig2 twice (1 and 2 workers) gives byte-identical CSVs",
           [checks.CheckResult("determinism.cli_fig2", same, "identical" if same else "different",
                               "identical", "byte-exact")])
