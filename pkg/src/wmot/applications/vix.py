"""Model-free upper bound for the VIX future from two option-implied marginals."""

from __future__ import annotations

from dataclasses import dataclass

from ..couplings import DiscreteCoupling
from ..costs import VixCost, VixParams
from ..errors import DomainError
from ..measures import DiscreteMeasure
from ..solver import SolveOptions, SolverReport, solve_wmot


@dataclass
class VixResult:
    d_super: float
    optimizer: DiscreteCoupling
    report: SolverReport

    def to_dict(self) -> dict:
        return {"d_super": self.d_super, "delta": self.report.info.get("delta"),
                **self.report.to_dict()}


def vix_superreplication(mu: DiscreteMeasure, nu: DiscreteMeasure, delta: float,
                         opts: SolveOptions | None = None) -> VixResult:
    """``D_super``: the largest ``E[sqrt((2/delta) E[ln(X/Y) | X])]`` over martingale couplings."""
    if min(mu.atoms[0], nu.atoms[0]) <= 0:
        raise DomainError("VIX marginals must live on (0, inf)")
    cost = VixCost(VixParams(delta))
    opts = opts or SolveOptions()
    if not opts.martingale:
        raise DomainError("the VIX bound is a martingale problem")
    report = solve_wmot(mu, nu, cost, opts)
    report.info["delta"] = float(delta)
    d = -report.value
    return VixResult(d if d > 0 else 0.0, report.coupling, report)
