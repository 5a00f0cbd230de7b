"""Balanced spinner matrices.

A spinner is an invertible ``n x n`` perturbation matrix whose rows are
used as finite-difference directions. Every non-explicit spinner built here
satisfies ``M @ M.T == n * I``; none of them is stored densely unless its
kind requires it (quadratic-residue cores are kept as small dense arrays).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "DEFAULT_DIMENSION_CAP",
    "CapacityError",
    "Spinner",
    "SpinnerKind",
    "SpinnerVerificationReport",
    "build_hadamard",
    "build_multispinner",
    "build_quadratic_residue",
    "explicit",
    "from_descriptor",
    "is_prime",
    "quadratic_residues",
    "randomize",
    "residue_tournament",
    "sign_diagonal",
    "smallest_spinner_dimension",
    "verify_balanced",
]

DEFAULT_DIMENSION_CAP = 2**20


class CapacityError(ValueError):
    """Requested spinner dimension exceeds the configured cap."""


class SpinnerKind(str, enum.Enum):
    HADAMARD = "hadamard"
    HADAMARD_RANDOM = "hadamard_random"
    QUADRATIC_RESIDUE = "quadratic_residue"
    QUADRATIC_RESIDUE_RANDOM = "quadratic_residue_random"
    MULTISPINNER = "multispinner"
    EXPLICIT = "explicit"


_HADAMARD_FAMILY = (SpinnerKind.HADAMARD, SpinnerKind.HADAMARD_RANDOM)
_RESIDUE_FAMILY = (SpinnerKind.QUADRATIC_RESIDUE, SpinnerKind.QUADRATIC_RESIDUE_RANDOM)


@dataclass(frozen=True, eq=False)
class Spinner:
    """Immutable description of a structured ``n x n`` matrix.

    The implicit matrix is ``(B D_1 B D_2 ... B D_k) / normalization`` where
    ``B`` is the deterministic base (Sylvester Hadamard or quadratic-residue)
    and ``D_i`` are the entries of ``sign_diagonals``. With no sign diagonals
    the matrix is ``B`` itself. ``EXPLICIT`` spinners carry ``explicit_rows``
    and nothing else.
    """

    n: int
    kind: SpinnerKind
    sign_diagonals: tuple = ()
    chain_length: int = 1
    explicit_rows: Optional[np.ndarray] = None
    normalization: float = 1.0
    base: Optional[SpinnerKind] = None
    order: Optional[int] = None  # l for Hadamard (n = 2**l), p for quadratic residue
    seed: Optional[int] = None
    core: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_orthogonal(self) -> bool:
        return self.kind is not SpinnerKind.EXPLICIT

    def dense(self) -> np.ndarray:
        """Materialize the matrix as an ``(n, n)`` float array."""
        if self.explicit_rows is not None:
            return np.array(self.explicit_rows, dtype=float)
        from .transform import apply

        return apply(self, np.eye(self.n))

    def row(self, i: int) -> np.ndarray:
        """Row ``i`` of the matrix, computed as ``M.T @ e_i`` in O(n) extra space."""
        if self.explicit_rows is not None:
            return np.array(self.explicit_rows[i], dtype=float)
        from .transform import apply_transpose

        e = np.zeros(self.n)
        e[i] = 1.0
        return apply_transpose(self, e)

    def to_descriptor(self) -> dict:
        """Compact JSON-able descriptor ``{kind, n_or_p, k, seed}``."""
        if self.kind is SpinnerKind.EXPLICIT:
            raise ValueError("explicit spinners have no compact descriptor")
        base = self.base if self.kind is SpinnerKind.MULTISPINNER else None
        desc = {
            "kind": self.kind.value,
            "n_or_p": self.n if _family(self) is SpinnerKind.HADAMARD else self.order,
            "k": self.chain_length,
            "seed": self.seed,
        }
        if base is not None:
            desc["base"] = base.value
        return desc


@dataclass(frozen=True)
class SpinnerVerificationReport:
    invertible: bool
    alpha_achieved: float
    beta_achieved: float
    max_abs_entry: float
    min_singular_value: float


def _family(s: Spinner) -> SpinnerKind:
    if s.kind is SpinnerKind.MULTISPINNER:
        return s.base
    if s.kind in _HADAMARD_FAMILY:
        return SpinnerKind.HADAMARD
    return SpinnerKind.QUADRATIC_RESIDUE


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise CapacityError(f"spinner dimension {n} exceeds cap {cap}")


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p % 2 == 0:
        return p == 2
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


def quadratic_residues(p: int) -> set:
    """Nonzero quadratic residues modulo ``p``."""
    return {(a * a) % p for a in range(1, p)}


def residue_tournament(p: int) -> np.ndarray:
    """Signed adjacency matrix ``Q_p`` of the quadratic-residue tournament.

    ``Q_p[i, j] = +1`` when ``i == j`` or ``(i - j) mod p`` is a nonzero
    quadratic residue, ``-1`` otherwise. Returned as an integer array.
    """
    res = quadratic_residues(p)
    idx = np.arange(p)
    diff = (idx[:, None] - idx[None, :]) % p
    q = np.where(np.isin(diff, list(res)), 1, -1)
    np.fill_diagonal(q, 1)
    return q.astype(np.int64)


def _residue_core(p: int) -> np.ndarray:
    # Q_p^* borders Q_p^T with -1 on row 0 and column 0; the spinner is its transpose.
    q = residue_tournament(p)
    bordered = -np.ones((p + 1, p + 1), dtype=np.int64)
    bordered[1:, 1:] = q.T
    return bordered.T.copy()


def sign_diagonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform signs as a float array of ``+-1``."""
    return np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)


def build_hadamard(l: int, cap: int = DEFAULT_DIMENSION_CAP) -> Spinner:
    """Sylvester Walsh-Hadamard spinner of dimension ``2**l``."""
    if l < 0:
        raise ValueError("l must be non-negative")
    n = 2**l
    _check_cap(n, cap)
    return Spinner(n=n, kind=SpinnerKind.HADAMARD, order=l, base=SpinnerKind.HADAMARD)


def build_quadratic_residue(p: int, cap: int = DEFAULT_DIMENSION_CAP) -> Spinner:
    """Quadratic-residue spinner of dimension ``p + 1`` for a prime ``p = 3 mod 4``."""
    if not is_prime(p) or p % 4 != 3:
        raise ValueError(f"p must be a prime congruent to 3 mod 4, got {p}")
    _check_cap(p + 1, cap)
    core = _residue_core(p).astype(float)
    core.setflags(write=False)
    return Spinner(
        n=p + 1,
        kind=SpinnerKind.QUADRATIC_RESIDUE,
        order=p,
        base=SpinnerKind.QUADRATIC_RESIDUE,
        core=core,
    )


def randomize(base: Spinner, rng_seed: int) -> Spinner:
    """Right-multiply a deterministic spinner by a random sign diagonal.

    The diagonal is drawn from ``numpy.random.default_rng(rng_seed)`` (PCG64),
    so identical seeds give bit-identical signs on every platform.
    """
    if base.kind not in (SpinnerKind.HADAMARD, SpinnerKind.QUADRATIC_RESIDUE):
        raise ValueError(f"cannot randomize a {base.kind.value} spinner")
    rng = np.random.default_rng(rng_seed)
    d = sign_diagonal(base.n, rng)
    d.setflags(write=False)
    kind = (
        SpinnerKind.HADAMARD_RANDOM
        if base.kind is SpinnerKind.HADAMARD
        else SpinnerKind.QUADRATIC_RESIDUE_RANDOM
    )
    return Spinner(
        n=base.n,
        kind=kind,
        sign_diagonals=(d,),
        base=base.base,
        order=base.order,
        seed=rng_seed,
        core=base.core,
    )


def _base_for(kind: SpinnerKind, n_or_p: int, cap: int) -> Spinner:
    kind = SpinnerKind(kind)
    if kind in _HADAMARD_FAMILY:
        n = int(n_or_p)
        if n < 1 or n & (n - 1):
            raise ValueError(f"Hadamard dimension must be a power of two, got {n}")
        return build_hadamard(n.bit_length() - 1, cap=cap)
    if kind in _RESIDUE_FAMILY:
        return build_quadratic_residue(int(n_or_p), cap=cap)
    raise ValueError(f"no deterministic base for kind {kind.value}")


def build_multispinner(
    base_kind: SpinnerKind | str,
    k: int,
    rng_seed: int,
    n_or_p: int,
    cap: int = DEFAULT_DIMENSION_CAP,
) -> Spinner:
    """Chain ``k`` randomized copies of a base spinner.

    Represents ``(B D_1 ... B D_k) / n**((k-1)/2)``, so that ``M / sqrt(n)``
    stays an isometry. ``k == 1`` reduces exactly to :func:`randomize`.
    ``n_or_p`` is the dimension for Hadamard bases and the prime for
    quadratic-residue bases.
    """
    if k < 1:
        raise ValueError("chain length k must be >= 1")
    base = _base_for(base_kind, n_or_p, cap)
    if k == 1:
        return randomize(base, rng_seed)
    rng = np.random.default_rng(rng_seed)
    diags = []
    for _ in range(k):
        d = sign_diagonal(base.n, rng)
        d.setflags(write=False)
        diags.append(d)
    return Spinner(
        n=base.n,
        kind=SpinnerKind.MULTISPINNER,
        sign_diagonals=tuple(diags),
        chain_length=k,
        normalization=float(base.n) ** ((k - 1) / 2),
        base=base.kind,
        order=base.order,
        seed=rng_seed,
        core=base.core,
    )


def explicit(rows) -> Spinner:
    """Wrap a dense square matrix (oracles, Gaussian baselines)."""
    rows = np.array(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
        raise ValueError("explicit spinner needs a square matrix")
    rows.setflags(write=False)
    return Spinner(n=rows.shape[0], kind=SpinnerKind.EXPLICIT, explicit_rows=rows)


def from_descriptor(desc: dict, cap: int = DEFAULT_DIMENSION_CAP) -> Spinner:
    """Rebuild a spinner from :meth:`Spinner.to_descriptor` output."""
    kind = SpinnerKind(desc["kind"])
    n_or_p = int(desc["n_or_p"])
    k = int(desc.get("k", 1))
    seed = desc.get("seed")
    if kind in (SpinnerKind.HADAMARD, SpinnerKind.QUADRATIC_RESIDUE):
        return _base_for(kind, n_or_p, cap)
    if kind in (SpinnerKind.HADAMARD_RANDOM, SpinnerKind.QUADRATIC_RESIDUE_RANDOM):
        return randomize(_base_for(kind, n_or_p, cap), int(seed))
    if kind is SpinnerKind.MULTISPINNER:
        return build_multispinner(SpinnerKind(desc["base"]), k, int(seed), n_or_p, cap)
    raise ValueError("explicit spinners cannot be rebuilt from a descriptor")


def verify_balanced(matrix_rows) -> SpinnerVerificationReport:
    """Measure how balanced a square matrix is.

    ``alpha`` is the smallest row norm over ``sqrt(n)``; ``beta`` solves
    ``max_{i<j} |m_i . m_j| = (1 - beta) * min_i ||m_i||``. Singular input is
    reported through ``invertible=False`` rather than raised.
    """
    m = np.asarray(matrix_rows, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("verify_balanced expects a square matrix")
    n = m.shape[0]
    norms = np.sqrt(np.sum(m * m, axis=1))
    min_norm = float(norms.min())
    gram = m @ m.T
    if n > 1:
        off = np.abs(gram[np.triu_indices(n, k=1)]).max()
    else:
        off = 0.0
    beta = 1.0 - off / min_norm if min_norm > 0 else 0.0
    sv = np.linalg.svd(m, compute_uv=False)
    return SpinnerVerificationReport(
        invertible=bool(sv[-1] > 1e-10 * sv[0]) if sv[0] > 0 else False,
        alpha_achieved=min_norm / np.sqrt(n),
        beta_achieved=float(beta),
        max_abs_entry=float(np.abs(m).max()),
        min_singular_value=float(sv[-1]),
    )


def smallest_spinner_dimension(
    kind: SpinnerKind | str, d: int, cap: int = DEFAULT_DIMENSION_CAP
) -> int:
    """Smallest admissible spinner size that is at least ``d``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    kind = SpinnerKind(kind)
    if kind is SpinnerKind.MULTISPINNER:
        raise ValueError("ask for the multispinner's base kind instead")
    if kind is SpinnerKind.EXPLICIT:
        n = d
    elif kind in _HADAMARD_FAMILY:
        n = 1 << (d - 1).bit_length()
    else:
        p = max(3, d - 1)
        while not (p % 4 == 3 and is_prime(p)):
            p += 1
            if p + 1 > cap:
                break
        n = p + 1
    _check_cap(n, cap)
    return n
