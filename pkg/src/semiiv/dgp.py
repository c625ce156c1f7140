"""Data generating processes and simulated datasets.

A :class:`DgpSpec` pins down every primitive of the model: the unique
outcome functions ``q(eta)``, the selection probabilities ``p(d | eta, z)``
and the marginal law of the semi-IV. Ranks ``eta`` are uniform on (0, 1)
and independent of ``z``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, SpecificationError
from .exclusion import ExclusionSpec, build_exclusion_map

__all__ = [
    "OutcomeFunction",
    "LogitSelection",
    "DgpSpec",
    "Dataset",
    "draw_sample",
    "analytic_truth",
    "PROB_FLOOR",
    "CHUNK_SIZE",
]

PROB_FLOOR = 1e-3
CHUNK_SIZE = 1 << 16
_CHECK_GRID = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class OutcomeFunction:
    """Strictly increasing map from ranks on [0, 1] to outcomes.

    Families
    --------
    ``affine``     ``a + b * eta``, ``b > 0``
    ``power``      ``a + b * eta**c``, ``b > 0``, ``c > 0``
    ``quadratic``  ``a + b * eta + c * eta**2``, ``b > 0``, ``b + 2c > 0``
    """

    family: str
    a: float
    b: float
    c: float = 0.0

    def __post_init__(self):
        fam, b, c = self.family, self.b, self.c
        if fam == "affine":
            ok = b > 0
        elif fam == "power":
            ok = b > 0 and c > 0
        elif fam == "quadratic":
            ok = b > 0 and b + 2 * c > 0
        else:
            raise SpecificationError(f"unknown outcome family {fam!r}")
        if not ok:
            raise SpecificationError(f"{fam} outcome with b={b}, c={c} is not strictly increasing")

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.family == "affine":
            return self.a + self.b * eta
        if self.family == "power":
            return self.a + self.b * eta**self.c
        return self.a + eta * (self.b + self.c * eta)

    def derivative(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.family == "affine":
            return np.full_like(eta, self.b)
        if self.family == "power":
            return self.b * self.c * eta ** (self.c - 1)
        return self.b + 2 * self.c * eta

    def inverse(self, y):
        """Rank of outcome ``y``; values outside the support map outside [0, 1]."""
        y = np.asarray(y, dtype=float)
        if self.family == "affine":
            return (y - self.a) / self.b
        if self.family == "power":
            u = (y - self.a) / self.b
            return np.sign(u) * np.abs(u) ** (1 / self.c)
        if self.c == 0:
            return (y - self.a) / self.b
        # stable root of c e^2 + b e + (a - y) = 0 on the increasing branch
        disc = np.maximum(self.b**2 + 4 * self.c * (y - self.a), 0.0)
        return 2 * (y - self.a) / (self.b + np.sqrt(disc))

    def inverse_derivative(self, y):
        """``d eta / d y`` at outcome ``y``."""
        return 1.0 / self.derivative(np.clip(self.inverse(y), 0.0, 1.0))

    @property
    def bounds(self) -> tuple:
        return float(self(0.0)), float(self(1.0))

    def to_dict(self) -> dict:
        doc = {"family": self.family, "a": self.a, "b": self.b}
        if self.family != "affine":
            doc["c"] = self.c
        return doc


@dataclass(frozen=True)
class LogitSelection:
    """Multinomial logit ``p(d | eta, z) ∝ exp(intercept[z, d] + slope[z, d] * eta)``."""

    intercept: np.ndarray
    slope: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.intercept, dtype=float)
        b = np.asarray(self.slope, dtype=float)
        if a.ndim != 2 or a.shape != b.shape:
            raise SpecificationError("logit intercept and slope must be matching N_Z x J arrays")
        object.__setattr__(self, "intercept", a)
        object.__setattr__(self, "slope", b)

    @property
    def shape(self) -> tuple:
        return self.intercept.shape

    def probabilities(self, eta):
        """Array of shape ``eta.shape + (N_Z, J)``."""
        eta = np.asarray(eta, dtype=float)
        u = self.intercept + self.slope * eta[..., None, None]
        u = u - u.max(axis=-1, keepdims=True)
        e = np.exp(u)
        return e / e.sum(axis=-1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "family": "logit",
            "intercept": self.intercept.tolist(),
            "slope": self.slope.tolist(),
        }


@dataclass(frozen=True)
class DgpSpec:
    """Complete generative model.

    Parameters
    ----------
    exclusion : ExclusionSpec
    outcomes : sequence of OutcomeFunction
        One per unique outcome, in chi column order.
    selection : LogitSelection
        Coefficients of shape ``(N_Z, J)``.
    z_marginal : array_like
        Positive probabilities of ``z = 1..N_Z``.
    """

    exclusion: ExclusionSpec
    outcomes: tuple
    selection: LogitSelection
    z_marginal: np.ndarray = field(default=None)

    def __post_init__(self):
        emap = build_exclusion_map(self.exclusion)
        outcomes = tuple(self.outcomes)
        if len(outcomes) != emap.n_q:
            raise SpecificationError(
                f"expected {emap.n_q} outcome functions (one per unique outcome), got {len(outcomes)}"
            )
        nz, J = self.exclusion.support_size, self.exclusion.num_alternatives
        if self.selection.shape != (nz, J):
            raise SpecificationError(
                f"selection coefficients must have shape ({nz}, {J}), got {self.selection.shape}"
            )
        pz = (
            np.full(nz, 1.0 / nz)
            if self.z_marginal is None
            else np.asarray(self.z_marginal, dtype=float)
        )
        if pz.shape != (nz,) or np.any(pz <= 0) or abs(pz.sum() - 1) > 1e-9:
            raise SpecificationError("z_marginal must be N_Z positive probabilities summing to 1")
        p = self.selection.probabilities(_CHECK_GRID)
        if p.min() <= PROB_FLOOR or p.max() >= 1 - PROB_FLOOR:
            raise SpecificationError(
                f"selection probabilities must stay inside ({PROB_FLOOR}, {1 - PROB_FLOOR});"
                f" range is [{p.min():.3g}, {p.max():.3g}]"
            )
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "z_marginal", pz)
        object.__setattr__(self, "_emap", emap)

    @property
    def exclusion_map(self):
        return self._emap

    def qtilde(self, eta):
        """Unique outcomes at ``eta``; shape ``eta.shape + (N_Q,)``."""
        eta = np.asarray(eta, dtype=float)
        return np.stack([q(eta) for q in self.outcomes], axis=-1)

    def selection_probs(self, eta):
        return self.selection.probabilities(eta)

    def outcome(self, d: int, z: int) -> OutcomeFunction:
        return self.outcomes[self._emap.column(d, z)]

    def to_dict(self) -> dict:
        emap = self._emap
        outs = []
        for (d, k), q in zip(emap.labels(), self.outcomes):
            outs.append({"d": d, "k": k, **q.to_dict()})
        return {
            "exclusion": self.exclusion.to_dict(),
            "outcomes": outs,
            "selection": self.selection.to_dict(),
            "z_marginal": self.z_marginal.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DgpSpec":
        try:
            excl = ExclusionSpec.from_dict(doc["exclusion"])
            emap = build_exclusion_map(excl)
            outs = [None] * emap.n_q
            for item in doc["outcomes"]:
                key = (int(item["d"]), int(item["k"]))
                if key not in emap.column_index:
                    raise SpecificationError(f"outcome {key} is not a unique outcome of the spec")
                outs[emap.column_index[key]] = OutcomeFunction(
                    item.get("family", "affine"),
                    float(item["a"]),
                    float(item["b"]),
                    float(item.get("c", 0.0)),
                )
            if any(o is None for o in outs):
                missing = [lab for lab, o in zip(emap.labels(), outs) if o is None]
                raise SpecificationError(f"missing outcome functions for {missing}")
            sel = doc["selection"]
            if sel.get("family", "logit") != "logit":
                raise SpecificationError(f"unsupported selection family {sel.get('family')!r}")
            selection = LogitSelection(sel["intercept"], sel["slope"])
        except KeyError as exc:
            raise SpecificationError(f"DGP spec is missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, SpecificationError):
                raise
            raise SpecificationError(f"malformed DGP spec: {exc}") from None
        return cls(excl, tuple(outs), selection, doc.get("z_marginal"))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "DgpSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)


@dataclass(frozen=True)
class Dataset:
    """Observed sample ``(d, y, z)``; ``eta`` is kept only for debugging."""

    d: np.ndarray
    y: np.ndarray
    z: np.ndarray
    eta: np.ndarray = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=np.int64)
        if not (d.shape == y.shape == z.shape) or d.ndim != 1:
            raise DataError("d, y and z must be 1-d arrays of equal length")
        if d.size and (d.min() < 1 or z.min() < 1):
            raise DataError("alternative and semi-IV labels are 1-based")
        if not np.all(np.isfinite(y)):
            raise DataError("outcomes must be finite")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if self.eta is not None:
            object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))

    def __len__(self) -> int:
        return self.d.size

    def cell(self, d: int, z: int) -> np.ndarray:
        return self.y[(self.d == d) & (self.z == z)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("#schema=semiiv.dataset/1\n")
            writer = csv.writer(fh)
            debug = self.eta is not None
            writer.writerow(["d", "y", "z", "eta"] if debug else ["d", "y", "z"])
            for i in range(len(self)):
                row = [int(self.d[i]), repr(float(self.y[i])), int(self.z[i])]
                if debug:
                    row.append(repr(float(self.eta[i])))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        try:
            with open(path, newline="") as fh:
                lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
        except OSError as exc:
            raise DataError(f"cannot read dataset: {exc}") from None
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or not {"d", "y", "z"} <= set(header):
            raise DataError(f"{path}: expected a header with columns d,y,z")
        idx = {name: header.index(name) for name in header}
        rows = list(reader)
        try:
            cols = {name: [r[i] for r in rows] for name, i in idx.items()}
            eta = np.asarray(cols["eta"], dtype=float) if "eta" in cols else None
            return cls(
                np.asarray(cols["d"], dtype=np.int64),
                np.asarray(cols["y"], dtype=float),
                np.asarray(cols["z"], dtype=np.int64),
                eta,
            )
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed row ({exc})") from None


def _draw_chunk(dgp: DgpSpec, n: int, rng: np.random.Generator):
    emap = dgp.exclusion_map
    z = rng.choice(dgp.exclusion.support_size, size=n, p=dgp.z_marginal)
    eta = rng.random(n)
    u = rng.random(n)
    p = dgp.selection_probs(eta)[np.arange(n), z]
    cum = np.cumsum(p, axis=1)
    d = np.minimum((u[:, None] > cum).sum(axis=1), p.shape[1] - 1)
    cols = emap.cell_column[z, d]
    y = np.empty(n)
    for col, q in enumerate(dgp.outcomes):
        sel = cols == col
        y[sel] = q(eta[sel])
    return d + 1, y, z + 1, eta


def draw_sample(dgp: DgpSpec, n: int, seed: int, debug_eta: bool = False) -> Dataset:
    """Simulate ``n`` observations.

    Rows are produced in chunks of ``CHUNK_SIZE``; chunk ``i`` draws from
    the ``i``-th child of ``SeedSequence(seed)``, so chunks can be generated
    independently and the output does not depend on how they are scheduled.
    """
    if n < 1:
        raise SpecificationError("sample size must be at least 1")
    n_chunks = -(-n // CHUNK_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    parts = []
    for i, child in enumerate(children):
        size = min(CHUNK_SIZE, n - i * CHUNK_SIZE)
        parts.append(_draw_chunk(dgp, size, np.random.default_rng(child)))
    d, y, z, eta = (np.concatenate(col) for col in zip(*parts))
    return Dataset(d, y, z, eta if debug_eta else None)


def analytic_truth(dgp: DgpSpec, grid=None):
    """True unique outcomes on ``grid`` as a :class:`~semiiv.path.MonotonePath`."""
    from .path import MonotonePath

    grid = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, dtype=float)
    return MonotonePath(
        grid=grid,
        values=dgp.qtilde(grid),
        labels=dgp.exclusion_map.labels(),
        metadata={"source": "analytic"},
    )
