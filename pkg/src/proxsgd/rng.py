"""Deterministic random-stream management.

Every run owns four named Philox streams -- ``index``, ``coin``, ``quantizer``,
``noise`` -- plus spawnable child bundles for composite estimators.  Philox is
counter-based, so draws are reproducible bit-for-bit across platforms, which
several trajectory-equality tests rely on.

Seeding scheme (fixed, do not change): the stream with purpose id ``p`` of the
bundle at path ``(c_1, ..., c_j)`` under root seed ``s`` is::

    Generator(Philox(SeedSequence(s, spawn_key=(c_1, ..., c_j, p))))

with purpose ids 0=index, 1=coin, 2=quantizer, 3=noise.  The child bundle
number ``c`` extends the path by ``4 + c``, so purpose ids and child slots can
never collide.

By convention estimators take their draws from the streams as: component /
coordinate selection from ``index``, Bernoulli decisions from ``coin``,
compressor randomness from ``quantizer``, oracle noise from ``noise``.  The
streams are independent generators, so the temporal interleaving of draws
across *different* streams has no effect on determinism; only the per-stream
draw sequence matters.  numpy guarantees that one array draw equals the same
number of repeated scalar draws from the same generator (unit-tested in
``tests/test_rng.py``), which lets batch runners pre-draw whole arrays while
staying draw-for-draw identical to a per-step loop.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {"index": 0, "coin": 1, "quantizer": 2, "noise": 3}


def _generator(seed: int, spawn_key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=spawn_key)))


class Streams:
    """Bundle of the four purpose streams for one run (or one sub-estimator).

    Parameters
    ----------
    seed : int
        Root seed of the run.
    path : tuple of int, optional
        Spawn path of this bundle; ``()`` for the run's root bundle.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(c) for c in path)
        self.index = _generator(self.seed, self.path + (PURPOSES["index"],))
        self.coin = _generator(self.seed, self.path + (PURPOSES["coin"],))
        self.quantizer = _generator(self.seed, self.path + (PURPOSES["quantizer"],))
        self.noise = _generator(self.seed, self.path + (PURPOSES["noise"],))
        self._children: dict[int, "Streams"] = {}

    def child(self, c: int) -> "Streams":
        """Persistent child bundle ``c`` (memoized: repeated calls return the
        same object, so a composite estimator's sub-streams advance across
        steps instead of being re-seeded)."""
        c = int(c)
        if c not in self._children:
            self._children[c] = Streams(self.seed, self.path + (4 + c,))
        return self._children[c]

    def __repr__(self):  # pragma: no cover - debugging nicety
        return f"Streams(seed={self.seed}, path={self.path})"


def uniform_index(u: float, n: int) -> int:
    """Map a uniform ``u in [0,1)`` to an index in ``range(n)`` by flooring.

    This is the one fixed convention used everywhere a *uniform* index is
    drawn (coordinate picks, inner-component picks), so batch and per-step
    code agree exactly.
    """
    i = int(u * n)
    return n - 1 if i >= n else i
