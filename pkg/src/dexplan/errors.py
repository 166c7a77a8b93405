"""Exception types shared across the planner."""


class DexplanError(Exception):
    """Base class for all planner errors."""


class PenetrationTooDeep(DexplanError):
    """A pose placed a body more than 10x the contact threshold inside another."""


class TooManyContacts(DexplanError):
    """Contact-mode enumeration refused: more than 16 simultaneous contacts."""


class SolverFailure(DexplanError):
    """A convex subproblem broke down numerically (distinct from infeasible)."""


class ProjectionDiverged(DexplanError):
    """Contact-maintenance projection failed to converge within its budget."""


class NoActions(DexplanError):
    """A search root offered no feasible action at all."""


class BudgetExhausted(DexplanError):
    """Search budget ran out; carries the best partial result if any."""

    def __init__(self, message="budget exhausted", best=None):
        super().__init__(message)
        self.best = best


class EmptyMesh(DexplanError):
    """Mesh file parsed to zero triangles."""


class ParseError(DexplanError):
    """Malformed input file (mesh, config, or trajectory)."""


class ValidationError(DexplanError):
    """Config or trajectory validation failed; carries every violation found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateLabels(DexplanError):
    """Reward fitting given labels with no contrast."""
