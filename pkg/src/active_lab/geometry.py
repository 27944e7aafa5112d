"""Unit-sphere geometry and the random sampling shared by oracles and learners.

Vectors are plain 1-D ``numpy`` arrays; :func:`unit` is the single place
where the unit-norm invariant is enforced.  All randomness flows through
:class:`RandomSource`, a thin wrapper over a counter-based Philox generator
whose child streams are derived from ``(seed, key...)`` so that parallel
trials stay reproducible regardless of scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

NORM_TOL = 1e-9


def unit(v, *, normalize: bool = False) -> np.ndarray:
    """Return ``v`` as a float array on the unit sphere.

    With ``normalize=False`` the input must already have norm 1 (within
    ``NORM_TOL``); otherwise it is rescaled.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError(f"expected a vector of dimension >= 2, got shape {v.shape}")
    n = np.linalg.norm(v)
    if normalize:
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return v / n
    if abs(n - 1.0) > NORM_TOL:
        raise ValueError(f"vector is not unit-norm (|v| = {n!r})")
    return v


def _check_dims(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")


def angle(u, v) -> float:
    """Angle ``arccos(u . v)`` in ``[0, pi]`` between two unit vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dims(u, v)
    return float(np.arccos(np.clip(u @ v, -1.0, 1.0)))


def signed_angle(x, w):
    """Signed acute angle between ``x`` and the hyperplane with normal ``w``.

    Equals ``pi/2 - angle(x, w)``; positive iff ``w . x > 0``.  ``x`` may be a
    single unit vector or an ``(n, d)`` array of them.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_dims(x, w)
    phi = np.pi / 2 - np.arccos(np.clip(x @ w, -1.0, 1.0))
    return float(phi) if np.ndim(phi) == 0 else phi


def margin_test(x, w, b: float):
    """True where ``|w . x| <= b``.  ``b`` may be ``inf``."""
    if not b > 0:
        raise ValueError(f"margin b must be positive or inf, got {b}")
    return np.abs(np.asarray(x, dtype=float) @ np.asarray(w, dtype=float)) <= b


def rotate_toward(w, u, theta: float) -> np.ndarray:
    """Rotate unit ``w`` by ``theta`` inside the plane spanned by ``w`` and ``u``."""
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    tangent = u - (u @ w) * w
    n = np.linalg.norm(tangent)
    if n < 1e-12:
        raise ValueError("u is parallel to w; rotation plane undefined")
    tangent /= n
    out = np.cos(theta) * w + np.sin(theta) * tangent
    return out / np.linalg.norm(out)


class RandomSource:
    """Seeded, splittable random stream (Philox counter-based bit generator).

    ``spawn(*key)`` derives an independent child from the root seed and the
    key path, so ``RandomSource(s).spawn(7)`` is the same stream no matter
    how many other children were created first.  Instances are not
    thread-safe; give each worker its own child.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def spawn(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.key + tuple(key))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, key={self.key})"


def unit_sphere(n: int, d: int, rng: RandomSource) -> np.ndarray:
    g = rng.gen.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class DistKind(str, Enum):
    UNIFORM_BALL = "uniform_ball"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class DataDistribution:
    kind: DistKind
    d: int

    def __post_init__(self):
        object.__setattr__(self, "kind", DistKind(self.kind))
        if self.d < 2:
            raise ValueError("dimension must be >= 2")

    @classmethod
    def uniform_ball(cls, d: int) -> "DataDistribution":
        return cls(DistKind.UNIFORM_BALL, d)

    @classmethod
    def gaussian(cls, d: int) -> "DataDistribution":
        return cls(DistKind.GAUSSIAN, d)

    def sample(self, n: int, rng: RandomSource) -> np.ndarray:
        """Draw ``n`` i.i.d. points as an ``(n, d)`` array."""
        if self.kind is DistKind.GAUSSIAN:
            return rng.gen.standard_normal((n, self.d))
        # direction x radius U^(1/d): exact and rejection-free
        g = rng.gen.standard_normal((n, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.gen.random(n) ** (1.0 / self.d)
        return g * r[:, None]


def sample(dist: DataDistribution, rng: RandomSource) -> np.ndarray:
    """One draw from ``dist``."""
    return dist.sample(1, rng)[0]


def sample_in_cone(center, beta: float, rng: RandomSource, n: int | None = None) -> np.ndarray:
    """Unit vector(s) within angle ``beta`` of ``center``.

    A random tangent direction is drawn and ``center`` is rotated toward it by
    an angle uniform in ``[0, beta]``.  The result has full support on the cap
    but is not uniform over it.
    """
    if not beta > 0:
        raise ValueError(f"cone half-angle must be positive, got {beta}")
    beta = min(beta, np.pi)
    c = unit(center)
    m = 1 if n is None else n
    g = rng.gen.standard_normal((m, c.shape[0]))
    g -= np.outer(g @ c, c)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    g /= norms
    theta = rng.gen.uniform(0.0, beta, m)
    out = np.cos(theta)[:, None] * c + np.sin(theta)[:, None] * g
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if n is None else out


class Stream:
    """Sequential view of an i.i.d. source, generated in fixed-size blocks.

    Block generation makes the consumed prefix independent of how callers
    batch their requests, which keeps paired trials aligned.
    """

    def __init__(self, draw, rng: RandomSource, block: int = 4096):
        self._draw = draw
        self._rng = rng
        self.block = block
        self._buf = None
        self._pos = 0
        self.consumed = 0

    def _refill(self):
        self._buf = self._draw(self.block, self._rng)
        self._pos = 0

    def peek_block(self):
        if self._buf is None or self._pos >= len(self._buf):
            self._refill()
        return self._buf[self._pos:]

    def advance(self, m: int) -> None:
        self._pos += m
        self.consumed += m

    def take(self, m: int):
        parts = []
        while m > 0:
            chunk = self.peek_block()[:m]
            parts.append(chunk)
            self.advance(len(chunk))
            m -= len(chunk)
        return np.concatenate(parts) if parts else self._draw(0, self._rng)
