"""Laplacian spectra of the supported domains and the mode numbering.

Three domain kinds are supported, all with closed-form spectra:

* ``dirichlet_interval`` -- (0, pi) with u = 0 at both ends, lambda_j = j;
* ``dirichlet_box`` -- a box with sides L_i and product-sine modes,
  lambda^2 = sum (pi j_i / L_i)^2;
* ``torus`` -- (0, 2 pi)^d with periodic boundary conditions, lambda = |m|.

Torus modes are stored as real cos/sin functions rather than complex
exponentials: the label ``m`` with first nonzero entry positive is the
cosine mode, ``-m`` the matching sine mode. All eigenfunctions are
L^2-orthonormal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityExceeded, DomainError

KINDS = ("dirichlet_interval", "dirichlet_box", "torus")

#: hard cap on the number of enumerated modes
MAX_MODES = 200_000


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    dimension: int = 1
    sides: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.dimension}")
        if self.kind == "dirichlet_interval" and self.dimension != 1:
            raise DomainError("dirichlet_interval is one-dimensional")
        if self.kind == "dirichlet_box":
            sides = self.sides if self.sides is not None else (math.pi,) * self.dimension
            sides = tuple(float(s) for s in sides)
            if len(sides) != self.dimension:
                raise DomainError("need one side length per dimension")
            if any(not s > 0 for s in sides):
                raise DomainError("side lengths must be positive")
            object.__setattr__(self, "sides", sides)
        elif self.sides is not None:
            raise DomainError(f"{self.kind} does not take side lengths")

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def first_index(self) -> int:
        """Index of the first mode: 0 on the torus (constant mode), else 1."""
        return 0 if self.is_torus else 1

    @property
    def lengths(self) -> tuple[float, ...]:
        if self.kind == "dirichlet_interval":
            return (math.pi,)
        if self.kind == "dirichlet_box":
            return self.sides
        return (2 * math.pi,) * self.dimension

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def to_json(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == "dirichlet_box":
            out["sides"] = list(self.sides)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "DomainSpec":
        sides = data.get("sides")
        return cls(data["kind"], int(data.get("dimension", 1)),
                   tuple(sides) if sides is not None else None)


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Modes with lambda <= cutoff, sorted by (lambda, label)."""

    domain: DomainSpec
    labels: np.ndarray  # (n, d) integer labels
    lambdas: np.ndarray  # (n,) nonnegative frequencies
    cutoff: float

    def __post_init__(self):
        self.labels.setflags(write=False)
        self.lambdas.setflags(write=False)

    def __len__(self) -> int:
        return len(self.lambdas)

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, ModeTable):
            return NotImplemented
        return (self.domain == other.domain and self.labels.shape == other.labels.shape
                and np.array_equal(self.labels, other.labels))

    __hash__ = object.__hash__

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self)) + self.domain.first_index

    @property
    def lambda_sq(self) -> np.ndarray:
        return self.lambdas ** 2

    def row(self, j: int) -> int:
        r = j - self.domain.first_index
        if not 0 <= r < len(self):
            raise KeyError(f"mode index {j} not in table")
        return r

    def lam(self, j: int) -> float:
        return float(self.lambdas[self.row(j)])

    def label(self, j: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.labels[self.row(j)])

    def find(self, label) -> int:
        """Mode index j of an integer label."""
        label = np.atleast_1d(np.asarray(label, dtype=int))
        hits = np.nonzero((self.labels == label).all(axis=1))[0]
        if len(hits) == 0:
            raise KeyError(f"label {tuple(label)} not in table (cutoff {self.cutoff})")
        return int(hits[0]) + self.domain.first_index

    def count_below(self, N: float) -> int:
        """Number of leading rows with lambda <= N."""
        return int(np.searchsorted(self.lambdas, N * (1 + 1e-12), side="right"))

    def to_json(self) -> list[dict]:
        return [{"j": int(j), "label": [int(v) for v in lab], "lambda": float(lam)}
                for j, lab, lam in zip(self.indices, self.labels, self.lambdas)]

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _dirichlet_labels(domain: DomainSpec, cutoff: float):
    L = np.array(domain.lengths)
    jmax = np.floor(cutoff * L / math.pi + 1e-9).astype(int)
    if np.prod(np.maximum(jmax, 1).astype(float)) > 50 * MAX_MODES:
        raise CapacityExceeded(f"cutoff {cutoff} enumerates too many Dirichlet modes")
    if np.any(jmax < 1):
        return np.zeros((0, domain.dimension), dtype=int), np.zeros(0)
    grids = np.meshgrid(*[np.arange(1, m + 1) for m in jmax], indexing="ij")
    labels = np.stack([g.ravel() for g in grids], axis=1)
    lam2 = ((labels * math.pi / L) ** 2).sum(axis=1)
    return labels, lam2


def _torus_labels(domain: DomainSpec, cutoff: float):
    d = domain.dimension
    m = int(math.floor(cutoff + 1e-9))
    if (2 * m + 1) ** d > 50 * MAX_MODES:
        raise CapacityExceeded(f"cutoff {cutoff} enumerates too many torus modes")
    grids = np.meshgrid(*[np.arange(-m, m + 1)] * d, indexing="ij")
    labels = np.stack([g.ravel() for g in grids], axis=1)
    lam2 = (labels ** 2).sum(axis=1).astype(float)
    return labels, lam2


def enumerate_modes(domain: DomainSpec, cutoff: float, max_modes: int = MAX_MODES) -> ModeTable:
    """All modes with lambda <= cutoff, sorted by lambda then label."""
    if not cutoff > 0:
        raise DomainError(f"cutoff must be positive, got {cutoff}")
    if domain.is_torus:
        labels, lam2 = _torus_labels(domain, cutoff)
    else:
        labels, lam2 = _dirichlet_labels(domain, cutoff)
    keep = lam2 <= cutoff ** 2 * (1 + 1e-12)
    labels, lam2 = labels[keep], lam2[keep]
    if len(lam2) > max_modes:
        raise CapacityExceeded(f"{len(lam2)} modes below cutoff {cutoff} exceed the cap {max_modes}")
    # lexsort: last key is primary
    order = np.lexsort(tuple(labels[:, i] for i in reversed(range(labels.shape[1]))) + (lam2,))
    labels = np.ascontiguousarray(labels[order])
    lam2 = lam2[order]
    return ModeTable(domain, labels, np.sqrt(lam2), float(cutoff))


def weyl_envelope(domain: DomainSpec, jmax: int) -> tuple[float, float]:
    """Tightest (C, C') with C j^(1/d) <= lambda_j <= C' j^(1/d) for 1 <= j <= jmax."""
    if jmax < 1:
        raise DomainError("jmax must be >= 1")
    d = domain.dimension
    start = 1 if domain.is_torus else 0  # row of j = 1
    need = start + jmax
    # first guess from the lattice-point count, then grow
    cutoff = max(1.0, (need / domain.volume * (2 * math.pi) ** d) ** (1 / d)) + 2
    while True:
        table = enumerate_modes(domain, cutoff)
        if len(table) >= need:
            break
        cutoff *= 1.5
    lam = table.lambdas[start:need]
    j = np.arange(1, jmax + 1, dtype=float)
    ratio = lam / j ** (1.0 / d)
    return float(ratio.min()), float(ratio.max())


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def eigenfunctions(table: ModeTable, points: np.ndarray) -> np.ndarray:
    """Evaluate every mode of ``table`` at ``points`` (shape (P, d)); returns (P, n)."""
    domain = table.domain
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[1] != domain.dimension:
        x = x.reshape(-1, domain.dimension)
    labels = table.labels.astype(float)
    if not domain.is_torus:
        L = np.array(domain.lengths)
        out = np.ones((x.shape[0], len(table)))
        for i in range(domain.dimension):
            out *= math.sqrt(2 / L[i]) * np.sin(np.outer(x[:, i], labels[:, i]) * math.pi / L[i])
        return out
    d = domain.dimension
    norm = (2 * math.pi) ** (-d / 2)
    positive = _first_nonzero_sign(table.labels) > 0
    rep = np.where(positive[:, None], labels, -labels)
    phase = x @ rep.T
    out = np.where(positive, math.sqrt(2) * np.cos(phase), math.sqrt(2) * np.sin(phase)) * norm
    zero = ~table.labels.any(axis=1)
    out[:, zero] = norm
    return out


def _first_nonzero_sign(labels: np.ndarray) -> np.ndarray:
    signs = np.zeros(len(labels), dtype=int)
    for i in reversed(range(labels.shape[1])):
        col = np.sign(labels[:, i])
        signs = np.where(col != 0, col, signs)
    return signs
