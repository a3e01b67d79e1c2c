"""Central finite-difference gradient verification.

Works on the live parameter tensors: they are upcast to float64 in place
(restored afterwards) so both the reverse-mode gradients and the
finite-difference oracle run at full precision. For large parameters only a
seeded random subset of entries is perturbed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradcheckReport:
    passed: bool
    tolerance: float
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)

    def __str__(self):
        lines = [f"gradcheck {'PASS' if self.passed else 'FAIL'} "
                 f"(max_rel_error={self.max_rel_error:.3e}, tol={self.tolerance:.1e})"]
        for name, err in self.per_param.items():
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def gradcheck(loss_fn, params: dict[str, Tensor], tolerance=1e-4, eps=1e-3,
              max_entries=24, seed=0) -> GradcheckReport:
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn()`` takes no arguments, must return a scalar Tensor, and must
    read the parameters through the Tensor objects in ``params`` (closures
    over a model work as-is).
    """
    saved = {k: (p.data, p.grad, p.requires_grad) for k, p in params.items()}
    try:
        for p in params.values():
            p.data = p.data.astype(np.float64)
            p.grad = None
            p.requires_grad = True

        loss = loss_fn()
        if loss.data.size != 1:
            raise ValueError("gradcheck requires a scalar loss")
        loss.backward()
        analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                    for k, p in params.items()}

        rng = np.random.default_rng(seed)
        per_param = {}
        for name, p in params.items():
            flat = p.data.reshape(-1)
            n = flat.size
            if n > max_entries:
                idxs = rng.choice(n, size=max_entries, replace=False)
            else:
                idxs = np.arange(n)
            worst = 0.0
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(loss_fn().data)
                flat[i] = orig - eps
                f_minus = float(loss_fn().data)
                flat[i] = orig
                fd = (f_plus - f_minus) / (2 * eps)
                a = float(analytic[name].reshape(-1)[i])
                err = abs(a - fd) / max(abs(a) + abs(fd), 1e-6)
                worst = max(worst, err)
            per_param[name] = worst
    finally:
        for k, p in params.items():
            p.data, p.grad, p.requires_grad = saved[k]

    max_err = max(per_param.values()) if per_param else 0.0
    return GradcheckReport(passed=max_err < tolerance, tolerance=tolerance,
                           max_rel_error=max_err, per_param=per_param)
