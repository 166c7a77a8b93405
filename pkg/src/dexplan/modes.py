"""Contacting-separating mode enumeration over environment contacts.

A mode assigns each contact either Maintain (0, zero normal velocity) or
Separate (+, strictly positive normal velocity).  Feasibility of a sign
vector means some object twist satisfies every row; the set of feasible
vectors is exactly the face structure of the contact velocity cone.

Enumeration brute-forces the 2^N sign vectors.  Each check projects the
separating rows onto the null space of the maintaining rows and applies
Gordan's theorem: a strict witness exists iff the origin is outside the
convex hull of the projected rows, decided by one small NNLS solve.  The
margin-LP formulation the tests use as an oracle is equivalent and an
order of magnitude slower.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import TooManyContacts
from .se3 import Pose, cross3

MAX_CONTACTS = 16
SEPARATION_MARGIN = 1e-6  # strictness margin for separating rows
_HULL_TOL = 1e-8

MAINTAIN = 0
SEPARATE = 1


@dataclass(frozen=True)
class CsMode:
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if any(s not in (MAINTAIN, SEPARATE) for s in self.signs):
            raise ValueError("mode entries must be 0 or 1")

    def __len__(self):
        return len(self.signs)

    def __str__(self):
        return "".join("0" if s == MAINTAIN else "+" for s in self.signs)

    @staticmethod
    def from_string(s: str) -> "CsMode":
        table = {"0": MAINTAIN, "+": SEPARATE}
        try:
            return CsMode(tuple(table[ch] for ch in s))
        except KeyError as e:
            raise ValueError(f"bad mode character in {s!r}") from e

    @staticmethod
    def all_maintain(n: int) -> "CsMode":
        return CsMode((MAINTAIN,) * n)

    def maintained(self):
        return tuple(i for i, s in enumerate(self.signs) if s == MAINTAIN)

    def separating(self):
        return tuple(i for i, s in enumerate(self.signs) if s == SEPARATE)


@dataclass
class ModeConstraints:
    """Linear constraints a twist must satisfy under a mode.

    eq rows: n^T J v = 0 for maintained contacts.
    ineq rows: n^T J v >= margin for separating contacts.
    """

    eq: np.ndarray
    ineq: np.ndarray
    margin: float = SEPARATION_MARGIN


def contact_rows(contacts, x: Pose) -> np.ndarray:
    """Normal-velocity rows: row_i . twist = normal speed of contact i."""
    if not contacts:
        return np.zeros((0, 6))
    rows = np.empty((len(contacts), 6))
    for i, c in enumerate(contacts):
        r = c.position - x.position
        rows[i, :3] = c.normal
        rows[i, 3:] = cross3(r, c.normal)
    return rows


def contact_signature(contacts, x: Pose, digits: int = 7):
    """Hashable object-frame signature; congruent contact sets share it."""
    rt = x.rotation().T
    sig = []
    for c in contacts:
        p = rt @ (c.position - x.position)
        n = rt @ c.normal
        sig.append((round(p[0], digits), round(p[1], digits), round(p[2], digits),
                    round(n[0], digits), round(n[1], digits), round(n[2], digits)))
    return tuple(sig)


def dedup_contacts(contacts, tol: float = 1e-9):
    out = []
    for c in contacts:
        if not any(np.linalg.norm(c.position - o.position) <= tol
                   and np.linalg.norm(c.normal - o.normal) <= tol for o in out):
            out.append(c)
    return out


def _null_space(a: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    if a.shape[0] == 0:
        return np.eye(a.shape[1])
    _, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > rcond * max(a.shape) * (s[0] if len(s) else 1.0)))
    return vt[rank:].T


def _sign_vector_feasible(rows: np.ndarray, signs) -> bool:
    z = [i for i, s in enumerate(signs) if s == MAINTAIN]
    p = [i for i, s in enumerate(signs) if s == SEPARATE]
    if not p:
        return True  # v = 0 satisfies every maintain row
    basis = _null_space(rows[z]) if z else np.eye(6)
    if basis.shape[1] == 0:
        return False  # maintains pin the twist to zero, nothing can separate
    m = rows[p] @ basis
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= 1e-12):
        return False  # some separating row is unreachable in the null space
    m = m / norms[:, None]
    # Gordan: exists u with m u > 0  iff  0 not in conv(rows of m)
    k = m.shape[1]
    a = np.vstack([m.T, np.ones((1, len(p)))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    _, resid = nnls(a, b)
    return resid > _HULL_TOL


def enumerate_cs_modes(contacts, x: Pose, max_contacts: int = MAX_CONTACTS):
    """All feasible contacting-separating modes, lexicographic (0 before +).

    Contacts duplicated within 1e-9 are removed first; the returned modes
    index the deduplicated list.  Raises TooManyContacts beyond the limit.
    """
    contacts = dedup_contacts(contacts)
    n = len(contacts)
    if n > max_contacts:
        raise TooManyContacts(f"{n} contacts exceeds limit {max_contacts}")
    if n == 0:
        return [CsMode(())]
    rows = contact_rows(contacts, x)
    out = []
    for signs in itertools.product((MAINTAIN, SEPARATE), repeat=n):
        if _sign_vector_feasible(rows, signs):
            out.append(CsMode(signs))
    return out


def mode_constraints(mode: CsMode, contacts, x: Pose) -> ModeConstraints:
    if len(mode) != len(contacts):
        raise ValueError(f"mode length {len(mode)} != contact count {len(contacts)}")
    rows = contact_rows(contacts, x)
    z = list(mode.maintained())
    p = list(mode.separating())
    return ModeConstraints(eq=rows[z].reshape(-1, 6), ineq=rows[p].reshape(-1, 6))


def mode_allows_motion(mode: CsMode, contacts, x: Pose) -> bool:
    """True when some nonzero twist satisfies the mode's constraints."""
    if mode.separating():
        return True  # strict witness is nonzero by definition
    rows = contact_rows(contacts, x)
    z = list(mode.maintained())
    return _null_space(rows[z]).shape[1] > 0 if z else True
