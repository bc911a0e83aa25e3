"""Common contract for stochastic-gradient estimators.

An estimator owns whatever auxiliary state its method maintains (gradient
tables, shifts, anchors) and, per step, turns the current iterate into a
stochastic gradient while advancing that state. The driver owns the iterate.

RNG discipline: each step consumes draws in a fixed order within each of the
four dedicated streams -- component/coordinate indices from ``streams.index``,
Bernoulli coins from ``streams.coin``, quantizer randomness from
``streams.quantizer``, additive noise from ``streams.noise``. Multi-node
methods consume per-node draws in node order. Combinators hand each child its
own stream family via ``streams.child(j)``. This makes same-stream
trajectory-equivalence tests exact.
"""

from __future__ import annotations

import numpy as np


def _copy(value):
    if isinstance(value, np.ndarray):
        return value.copy()
    if isinstance(value, list):
        return [_copy(v) for v in value]
    return value


class Estimator:
    """Base class; subclasses set ``method_id`` and ``_state`` (names of the
    mutable attributes that snapshot/restore must capture)."""

    method_id = "?"
    _state: tuple = ()

    def start(self, x0: np.ndarray) -> None:
        """(Re)initialize state for a run beginning at x0."""
        raise NotImplementedError

    def next(self, x: np.ndarray, streams) -> np.ndarray:
        """Produce g for the current iterate and advance internal state."""
        raise NotImplementedError

    def sigma_sq(self, ref) -> float:
        """The method's auxiliary state variance against the reference
        minimizer; identically 0 for stateless estimators."""
        return 0.0

    def param_set(self, ref=None):
        """The certified assumption constants for this estimator instance.

        Methods whose noise floor depends on the gradients at the minimizer
        need ``ref`` (a ReferenceSolution); variance-reduced methods ignore
        it.
        """
        raise NotImplementedError

    def post_step(self, x: np.ndarray) -> np.ndarray:
        """Hook called by the driver after the proximal step; may replace
        the iterate (epoch-restart methods). Default: pass through."""
        return x

    def snapshot(self) -> dict:
        return {a: _copy(getattr(self, a)) for a in self._state}

    def restore(self, snap: dict) -> None:
        for a in self._state:
            setattr(self, a, _copy(snap[a]))

    def __repr__(self):
        return f"{type(self).__name__}()"
