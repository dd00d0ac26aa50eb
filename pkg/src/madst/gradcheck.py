"""Central finite-difference checks for analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .autograd import Tensor, no_grad

# relative errors are taken against max(|analytic|, |numeric|, REL_FLOOR) so that
# entries whose true gradient is ~0 are judged on absolute error instead (the
# central-difference noise floor at eps=1e-5 in float64 is ~1e-10)
REL_FLOOR = 1e-5


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    checked: int
    per_param: dict

    @property
    def ok(self) -> bool:
        return self.max_rel_error < 1e-4


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def check_gradients(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-5,
                    max_entries: Optional[int] = 12, seed: int = 0) -> GradCheckResult:
    """Compare backward() against central differences of ``loss_fn``.

    ``loss_fn`` must be deterministic (eval mode).  At most ``max_entries``
    randomly chosen coordinates of each parameter are perturbed.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    worst, worst_name, checked, per_param = 0.0, "", 0, {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            err = 0.0
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                err = max(err, relative_error(analytic[name].reshape(-1)[i], numeric))
                checked += 1
            per_param[name] = err
            if err >= worst:
                worst, worst_name = err, name
    return GradCheckResult(worst, worst_name, checked, per_param)
