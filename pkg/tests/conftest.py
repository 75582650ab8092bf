import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def path_laplacian(n: int) -> sp.csr_matrix:
    W = sp.diags([np.ones(n - 1)], [1], shape=(n, n))
    W = W + W.T
    return sp.csr_matrix(sp.diags(np.asarray(W.sum(1)).ravel()) - W)


def complete_laplacian(n: int) -> sp.csr_matrix:
    W = np.ones((n, n)) - np.eye(n)
    return sp.csr_matrix(np.diag(W.sum(1)) - W)


def random_laplacian(n: int, density: float, rng: np.random.Generator) -> sp.csr_matrix:
    """Random weighted graph, made connected by a path through all nodes."""
    A = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
    A[np.arange(n - 1), np.arange(1, n)] = np.maximum(A[np.arange(n - 1), np.arange(1, n)], 0.1)
    W = A + A.T
    return sp.csr_matrix(np.diag(W.sum(1)) - W)


def dense_schur(L: np.ndarray, keep: np.ndarray) -> np.ndarray:
    rest = np.setdiff1d(np.arange(L.shape[0]), keep)
    if rest.size == 0:
        return L[np.ix_(keep, keep)]
    return (L[np.ix_(keep, keep)]
            - L[np.ix_(keep, rest)] @ np.linalg.solve(L[np.ix_(rest, rest)], L[np.ix_(rest, keep)]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
