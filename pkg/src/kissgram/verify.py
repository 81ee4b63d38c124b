"""Certification of claimed kissing configurations.

A certificate records every constraint verdict (unit norms, cosine cap,
positive semidefiniteness, rank) plus descriptive statistics: the cosine
spectrum, per-row contact degrees and the antipodality flag.  Rational mode
certifies with exact arithmetic end to end; floating mode reports worst-case
residuals.  Certificates are pure functions of their input.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cosines import CosineValue, snap_value
from .errors import MixedModeEntries, NonUnitVector
from .gram import COSINE_CAP, DEFAULT_TOLS, GramState, Tolerances, is_psd, rank_of
from .rational import format_rational

PASS = "Pass"
FAIL = "Fail"

CONTACT_TOL = 1e-9


@dataclass(frozen=True)
class SpectrumEntry:
    """One distinct off-diagonal cosine with its pair multiplicity."""

    cosine: CosineValue
    multiplicity: int


@dataclass(frozen=True)
class Certificate:
    mode: str
    sphere_count: int
    dim: int
    max_cosine: float
    max_cosine_exact: Fraction | None
    psd: bool
    rank: int
    unit_norm_max_error: float | None
    cosine_spectrum: tuple[SpectrumEntry, ...]
    contact_degrees: tuple[int, ...]
    non_antipodal: bool
    verdict: str
    fail_reason: str | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def max_cosine_text(self) -> str:
        if self.max_cosine_exact is not None:
            return format_rational(self.max_cosine_exact)
        return f"{self.max_cosine:.12g}"


def spectrum_report(state: GramState, tols: Tolerances = DEFAULT_TOLS) -> tuple[SpectrumEntry, ...]:
    """Sorted distinct off-diagonal values with multiplicities (pairs counted
    once).  Rational mode is exact; floating mode clusters values within 1e-7
    and snaps cluster means to recognized exact forms."""
    m = state.m
    if m < 2:
        return ()
    if state.exact is not None:
        counts: dict[Fraction, int] = {}
        for i in range(m):
            for j in range(i + 1, m):
                counts[state.exact[i][j]] = counts.get(state.exact[i][j], 0) + 1
        return tuple(
            SpectrumEntry(CosineValue(value=float(v), exact=v, label=format_rational(v)), c)
            for v, c in sorted(counts.items()))
    iu = np.triu_indices(m, k=1)
    values = np.sort(state.entries[iu])
    entries: list[SpectrumEntry] = []
    start = 0
    for k in range(1, len(values) + 1):
        if k == len(values) or values[k] - values[k - 1] > 1e-7:
            cluster = values[start:k]
            entries.append(SpectrumEntry(snap_value(float(cluster.mean())), len(cluster)))
            start = k
    return tuple(entries)


def _contact_degrees(g: np.ndarray, gmax: float) -> tuple[int, ...]:
    m = g.shape[0]
    off = ~np.eye(m, dtype=bool)
    hits = (np.abs(g - gmax) <= CONTACT_TOL) & off
    return tuple(int(c) for c in hits.sum(axis=1))


def verify_gram(state: GramState, mode: str | None = None,
                tols: Tolerances = DEFAULT_TOLS,
                unit_norm_max_error: float | None = None) -> Certificate:
    """Full certificate for a Gram state.

    ``mode`` defaults to the state's own arithmetic mode.  Rational mode
    demands exact entries and performs every comparison exactly.
    """
    if mode is None:
        mode = state.mode
    if mode not in ("float", "rational"):
        raise ValueError(f"unknown verification mode: {mode!r}")
    if mode == "rational" and state.exact is None:
        raise MixedModeEntries("rational verification needs exact entries")
    g = state.entries
    m = state.m
    reasons: list[str] = []
    if not np.all(np.diag(g) == 1.0):
        reasons.append("UnitDiagonalViolation")
    if not np.array_equal(g, g.T):
        reasons.append("NotSymmetric")
    if mode == "rational":
        from .rational import rational_gram_check

        check = rational_gram_check(state.exact)
        max_exact = check.max_off_diagonal if m > 1 else Fraction(-1)
        max_cos = float(max_exact)
        psd, rank = check.psd, check.rank
        if m > 1 and max_exact > Fraction(1, 2):
            reasons.append("CosineCapViolation")
        non_antipodal = all(state.exact[i][j] != -1
                            for i in range(m) for j in range(i + 1, m))
    else:
        max_exact = None
        off = g[~np.eye(m, dtype=bool)]
        max_cos = float(off.max()) if m > 1 else -1.0
        psd = is_psd(state, tols.psd)
        rank = rank_of(state, tols.rank)
        if m > 1 and max_cos > COSINE_CAP + tols.cosine:
            reasons.append("CosineCapViolation")
        non_antipodal = not (m > 1 and np.any(np.abs(off + 1.0) <= CONTACT_TOL))
    if not psd:
        reasons.append("NotPositiveSemidefinite")
    if rank > state.dim:
        reasons.append("RankExceedsDimension")
    if unit_norm_max_error is not None and unit_norm_max_error > 1e-6:
        reasons.append("NonUnitVector")
    return Certificate(
        mode=mode,
        sphere_count=m,
        dim=state.dim,
        max_cosine=max_cos,
        max_cosine_exact=max_exact,
        psd=psd,
        rank=rank,
        unit_norm_max_error=unit_norm_max_error,
        cosine_spectrum=spectrum_report(state, tols),
        contact_degrees=_contact_degrees(g, max_cos) if m > 1 else (0,) * m,
        non_antipodal=non_antipodal,
        verdict=PASS if not reasons else FAIL,
        fail_reason=None if not reasons else reasons[0],
    )


def verify_vectors(vectors: np.ndarray, dim: int | None = None, mode: str = "float",
                   tols: Tolerances = DEFAULT_TOLS,
                   exact_rows: list[list[Fraction]] | None = None) -> Certificate:
    """Certify explicit coordinates: unit-norm residuals plus the Gram checks.

    Raises NonUnitVector when any coordinate vector misses unit norm by more
    than 1e-6; smaller residuals are reported on the certificate.
    """
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2:
        raise NonUnitVector("vectors must form a 2-d array")
    norms = np.linalg.norm(v, axis=1)
    max_err = float(np.abs(norms - 1.0).max()) if len(v) else 0.0
    if max_err > 1e-6:
        raise NonUnitVector(f"worst unit-norm residual {max_err:.3e} exceeds 1e-06")
    unit = v / norms[:, None]
    g = unit @ unit.T
    g = (g + g.T) / 2.0
    np.fill_diagonal(g, 1.0)
    exact = None
    if mode == "rational":
        if exact_rows is None:
            raise MixedModeEntries("rational verification needs exact coordinates")
        from .refconfigs import _rational_sqrt

        mm = len(exact_rows)
        sq = [sum(x * x for x in row) for row in exact_rows]
        rows = [[Fraction(0)] * mm for _ in range(mm)]
        for i in range(mm):
            rows[i][i] = Fraction(1)
            for j in range(i + 1, mm):
                root = _rational_sqrt(sq[i] * sq[j])
                if root is None:
                    raise MixedModeEntries("pairwise cosines are not exactly rational")
                dot = sum(a * b for a, b in zip(exact_rows[i], exact_rows[j]))
                rows[i][j] = rows[j][i] = dot / root
        exact = tuple(tuple(r) for r in rows)
        g = np.array([[float(x) for x in row] for row in rows])
    state = GramState(dim=dim if dim is not None else v.shape[1], entries=g, exact=exact)
    return verify_gram(state, mode=mode, tols=tols, unit_norm_max_error=max_err)
