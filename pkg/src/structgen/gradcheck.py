"""Finite-difference verification of tape gradients.

The oracle side never touches the backward rules: it reruns the forward
computation on a non-recording tape with each parameter entry nudged up and
down, so a corrupted backward rule cannot hide.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    worst_index: int
    analytic: float
    numeric: float
    ok: bool

    def format(self):
        verdict = "ok" if self.ok else "FAIL"
        return (f"{self.name:<28s} max_rel_err={self.max_rel_err:.3e} "
                f"(analytic={self.analytic:+.6e} numeric={self.numeric:+.6e} "
                f"at flat index {self.worst_index}) {verdict}")


@dataclass
class GradCheckReport:
    tol: float
    step: float
    entries: list

    @property
    def ok(self):
        return all(e.ok for e in self.entries)

    @property
    def failures(self):
        return [e for e in self.entries if not e.ok]

    @property
    def max_rel_err(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def format(self):
        lines = [e.format() for e in self.entries]
        verdict = "all gradients ok" if self.ok else f"{len(self.failures)} parameter(s) FAILED"
        lines.append(f"gradcheck: {verdict} (tol={self.tol:g}, step={self.step:g})")
        return "\n".join(lines)


def grad_check(build_loss, params, tol=1e-4, step=1e-5, rel_floor=1e-6):
    """Compare tape gradients of ``build_loss`` against central differences.

    ``build_loss(tape)`` must deterministically build and return a scalar
    loss tensor reading the tensors in ``params`` (a name -> Tensor mapping).
    The relative error denominator is floored at ``rel_floor`` so that
    near-zero gradient pairs are compared absolutely at that scale.
    """
    items = list(params.items())
    for _, p in items:
        p.zero_grad()
    tape = Tape()
    loss = build_loss(tape)
    tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in items
    }
    for _, p in items:
        p.zero_grad()

    def forward():
        return build_loss(Tape(record=False)).item()

    entries = []
    for name, p in items:
        flat = p.data.ravel()
        ana = analytic[name].ravel()
        worst = (0.0, 0, 0.0, 0.0)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = forward()
            flat[i] = orig - step
            f_minus = forward()
            flat[i] = orig
            num = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(ana[i]), abs(num), rel_floor)
            rel = abs(ana[i] - num) / denom
            if rel > worst[0]:
                worst = (rel, i, float(ana[i]), float(num))
        entries.append(ParamCheck(
            name=name,
            max_rel_err=worst[0],
            worst_index=worst[1],
            analytic=worst[2],
            numeric=worst[3],
            ok=worst[0] <= tol,
        ))
    return GradCheckReport(tol=tol, step=step, entries=entries)
