"""Finite-difference verification of analytic gradients.

Central differences in float64: perturbing float32 parameters by 1e-5
would lose most significant digits, so the check temporarily promotes
every parameter to 64-bit and restores the originals afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DeterminismError
from .tensor import Parameter, backward, use_dtype


@dataclass
class GradReport:
    """Worst absolute analytic-vs-numeric gradient error per parameter."""

    max_abs_err: float
    per_param: dict[str, float]
    entries_checked: int
    passed: bool
    tol: float

    def summary(self) -> str:
        state = "OK" if self.passed else "FAIL"
        return (f"gradcheck {state}: max|analytic-numeric|={self.max_abs_err:.3e} "
                f"tol={self.tol:.1e} over {self.entries_checked} entries")


@dataclass
class _Slot:
    name: str
    param: Parameter
    saved: np.ndarray
    entries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def finite_diff_check(f, named_params, eps: float = 1e-5, tol: float = 1e-4,
                      entries_per_param: int | None = None,
                      sample_seed: int = 0) -> GradReport:
    """Compare backward() gradients of the scalar f() against central differences.

    `f` must close over the parameters in `named_params` (an iterable of
    (name, Parameter)) and return a scalar Tensor. It is called twice up
    front; any bitwise difference between the two losses means `f` is not
    a deterministic function of the parameters and the comparison would
    be meaningless, so that raises instead of reporting garbage.

    With entries_per_param=None every entry is perturbed (exact but
    O(2 * total_params) forward passes); an integer checks that many
    uniformly sampled entries of each parameter.
    """
    slots = [_Slot(name, p, p.data.copy()) for name, p in named_params]
    if not slots:
        raise ContractError("finite_diff_check needs at least one parameter")

    with use_dtype(np.float64):
        for s in slots:
            s.param.data = s.saved.astype(np.float64)

        loss_a = f()
        loss_b = f()
        if loss_a.data.tobytes() != loss_b.data.tobytes():
            for s in slots:
                s.param.data = s.saved
            raise DeterminismError(
                "loss function changed between identical calls; "
                "freeze dropout/sampling before gradient checking")
        grads = backward(loss_a)

        rng = np.random.default_rng(sample_seed)
        per_param: dict[str, float] = {}
        total = 0
        worst = 0.0
        for s in slots:
            n = s.param.data.size
            if entries_per_param is None or entries_per_param >= n:
                idx = np.arange(n)
            else:
                idx = rng.choice(n, size=entries_per_param, replace=False)
            analytic = grads.get(s.param)
            if analytic is None:
                analytic = np.zeros_like(s.param.data)
            flat = s.param.data.reshape(-1)
            aflat = np.asarray(analytic, dtype=np.float64).reshape(-1)
            err = 0.0
            for j in idx:
                keep = flat[j]
                flat[j] = keep + eps
                up = float(f().data)
                flat[j] = keep - eps
                down = float(f().data)
                flat[j] = keep
                numeric = (up - down) / (2.0 * eps)
                err = max(err, abs(numeric - aflat[j]))
            per_param[s.name] = err
            worst = max(worst, err)
            total += len(idx)

        for s in slots:
            s.param.data = s.saved

    return GradReport(max_abs_err=worst, per_param=per_param,
                      entries_checked=total, passed=worst < tol, tol=tol)
