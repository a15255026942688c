"""Numerical self-check suites run by ``qtrack selfcheck``."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .assignment import brute_force_assignment, hungarian_solve
from .embedding import assignment_probabilities, bidirectional_softmax
from .losses import (FocalParams, TrackTrainingPair, contrastive_focal_loss_grad,
                     finite_difference_grad, relative_error)

GRAD_TOL = 1e-5
NORM_TOL = 1e-9


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    cases: int
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} cases={self.cases:<5} max_error={self.max_error:.3e}  ({self.seconds:.2f}s)"


def _timed(name, fn, *args, **kwargs) -> SuiteResult:
    t0 = time.perf_counter()
    passed, err, cases = fn(*args, **kwargs)
    return SuiteResult(name, passed, err, cases, time.perf_counter() - t0)


def hungarian_vs_brute_force(cases: int = 1000, max_size: int = 7, seed: int = 0):
    """Random matrices up to max_size x max_size, half integer-valued, half real."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for k in range(cases):
        rows, cols = rng.integers(1, max_size + 1, size=2)
        if k % 2:
            cost = rng.integers(-20, 21, size=(rows, cols)).astype(float)
        else:
            cost = rng.normal(scale=10.0, size=(rows, cols))
        fast = hungarian_solve(cost)
        exact = brute_force_assignment(cost)
        if k % 2:
            ok &= fast.total_cost == exact.total_cost
            err = abs(fast.total_cost - exact.total_cost)
        else:
            err = abs(fast.total_cost - exact.total_cost) / max(abs(exact.total_cost), 1.0)
            ok &= err <= 1e-9
        ok &= len(fast.pairs) == min(rows, cols)
        worst = max(worst, err)
    return bool(ok), worst, cases


def random_pair(rng: np.random.Generator, max_dim: int = 16, max_refs: int = 5) -> TrackTrainingPair:
    """Random candidate/reference embeddings with dot products of order one."""
    d = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(0, max_refs + 1))
    scale = 1.5 / np.sqrt(d)
    cand = rng.normal(scale=scale, size=d)
    refs = [rng.normal(scale=scale, size=d) for _ in range(n)]
    return TrackTrainingPair(cand, refs, int(rng.integers(0, n + 1)))


def gradient_check(cases: int = 100, seed: int = 0, step: float = 1e-4,
                   grad_fn: Callable | None = None):
    grad_fn = grad_fn or contrastive_focal_loss_grad
    rng = np.random.default_rng(seed)
    fp = FocalParams()
    worst = 0.0
    for _ in range(cases):
        pair = random_pair(rng)
        _, analytic = grad_fn(pair, fp)
        numeric = finite_difference_grad(pair, fp, step)
        worst = max(worst, relative_error(analytic, numeric))
    return worst < GRAD_TOL, worst, cases


def assignment_probability_mass(cases: int = 1000, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for k in range(cases):
        d = int(rng.integers(1, 65))
        n = int(rng.integers(0, 11))
        scale = 1e3 if k % 4 == 0 else 1.0
        e = rng.uniform(-scale, scale, size=d)
        refs = rng.uniform(-scale, scale, size=(n, d))
        p = assignment_probabilities(e, list(refs))
        ok &= bool(np.isfinite(p).all() and (p >= 0).all() and (p <= 1).all())
        worst = max(worst, abs(p.sum() - 1.0))
    return bool(ok) and worst <= NORM_TOL, worst, cases


def bidirectional_mass(cases: int = 1000, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for k in range(cases):
        m, n = (int(v) for v in rng.integers(1, 11, size=2))
        d = int(rng.integers(1, 65))
        scale = 1e3 if k % 4 == 0 else 1.0
        S = bidirectional_softmax(rng.uniform(-scale, scale, (m, d)), rng.uniform(-scale, scale, (n, d)))
        ok &= bool(np.isfinite(S).all() and (S >= 0).all() and (S <= 1).all())
        worst = max(worst, abs(S.sum() - (m + n) / 2))
    return bool(ok) and worst <= NORM_TOL, worst, cases


def run_all(grad_fn: Callable | None = None) -> List[SuiteResult]:
    return [
        _timed("hungarian_vs_brute_force", hungarian_vs_brute_force),
        _timed("gradient_finite_difference", gradient_check, grad_fn=grad_fn),
        _timed("assignment_prob_mass", assignment_probability_mass),
        _timed("bidirectional_softmax_mass", bidirectional_mass),
    ]
