import csv

import numpy as np
import pytest

from dress.density_ratio import PolyBasis

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """``ok`` is True, False or None (skipped)."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"[{status}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def synthetic_spam(seed=0, n=4601, d=57):
    """Spambase-shaped data: sparse non-negative features, misspecified logistic labels."""
    r = np.random.default_rng(seed)
    X = r.exponential(1.0, (n, d)) * (r.random((n, d)) < 0.4)
    beta = 2.0 * r.normal(0, 1, d) / np.sqrt(d)
    logit = X @ beta - 1 + 0.8 * np.sin(2 * X[:, 0]) - 0.5 * X[:, 1] ** 2
    y = (r.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    return X, y


def write_spam_csv(path, X, y, header=False, labels=("0", "1")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"f{k}" for k in range(X.shape[1])] + ["type"])
        for row, lab in zip(X, y):
            w.writerow([f"{v:.4f}" for v in row] + [labels[int(lab)]])
    return path


def random_instance(seed, N=400):
    """ubar and phi samples with d <= 3, d < r <= 7 and a constant first basis column."""
    r = np.random.default_rng(seed)
    dx = int(r.integers(1, 4))
    X = r.normal(size=(N, dx))
    L = int(r.integers(1, 3))
    while L * dx + 1 > 7:
        L -= 1
    Phi = PolyBasis(L)(X)
    # E[ubar] = 0 and phi_1 = 1 cap rank(B) at r - 1, so keep d < r
    d = int(r.integers(1, min(3, Phi.shape[1] - 1) + 1))
    mix = r.normal(size=(Phi.shape[1] + 2, d))
    feats = np.hstack([Phi, np.sin(X[:, :1]), X[:, :1] ** 3])
    U = feats @ mix
    n = int(r.integers(10, 500))
    nprime = int(r.integers(n + 1, 5000))
    return U, Phi, n, nprime


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def spam_csv(tmp_path_factory):
    X, y = synthetic_spam()
    return write_spam_csv(tmp_path_factory.mktemp("data") / "spam_synth.data", X, y)
