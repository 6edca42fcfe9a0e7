"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: dict = field(default_factory=dict)
    h: float = 1e-3
    tol: float = 1e-4
    kinks: dict = field(default_factory=dict)

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst < self.tol

    def __str__(self):
        lines = [f"grad_check h={self.h:g} tol={self.tol:g} -> {'PASS' if self.passed else 'FAIL'}"]
        for name, err in self.max_rel_error.items():
            extra = f" (kinks at {self.kinks[name]})" if self.kinks.get(name) else ""
            lines.append(f"  {name}: max rel err {err:.3e}{extra}")
        return "\n".join(lines)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(f, params, h=1e-3, tol=1e-4, kink_check=True, max_elements=None, seed=0):
    """Compare tape gradients of scalar ``f()`` against central differences.

    ``params`` is a list of tensors or a ``{name: tensor}`` mapping; each is
    perturbed in place and restored. With ``kink_check`` the one-sided slopes
    at steps ``h`` and ``h/2`` are also compared: on a smooth function their
    gap halves with the step, at a kink it does not, and such elements are
    scored with that non-shrinking gap. ``max_elements`` checks a random subset
    of entries per parameter.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    named = dict(params) if isinstance(params, dict) else {
        (p.name or f"param{i}"): p for i, p in enumerate(params)}
    for p in named.values():
        p.data = np.ascontiguousarray(p.data)
        p.grad = None
        p.requires_grad = True

    with Tape() as tape:
        loss = f()
    if loss.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {loss.shape}")
    base = float(loss.data)
    tape.backward(loss)
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)).copy()
                for k, p in named.items()}

    def evaluate(pidx, name):
        val = float(f().data)
        if not np.isfinite(val):
            raise NonFiniteError(f"non-finite function value while perturbing {name}[{pidx}]")
        return val

    rng = np.random.default_rng(seed)
    report = GradCheckReport(h=h, tol=tol)
    for name, p in named.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        worst = 0.0
        kinks = []
        for i in idx:
            orig = flat[i]
            try:
                flat[i] = orig + h
                fp = evaluate(i, name)
                flat[i] = orig - h
                fm = evaluate(i, name)
                if kink_check:
                    flat[i] = orig + h / 2
                    fph = evaluate(i, name)
                    flat[i] = orig - h / 2
                    fmh = evaluate(i, name)
            finally:
                flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = analytic[name].reshape(-1)[i]
            err = float(_rel(a, numeric))
            if kink_check:
                gap_h = (fp - base) / h - (base - fm) / h
                gap_half = (fph - base) / (h / 2) - (base - fmh) / (h / 2)
                scale = max(abs(fp - base) / h, abs(base - fm) / h, 1e-8)
                kink = abs(gap_h - 2 * gap_half) / scale
                if kink > tol and kink > err:
                    kinks.append(int(i))
                    err = max(err, kink)
            worst = max(worst, err)
        report.max_rel_error[name] = worst
        report.kinks[name] = kinks
    for p in named.values():
        p.grad = None
    return report


def scalar_param(value, name="x"):
    return Tensor(np.array([float(value)]), requires_grad=True, name=name)
