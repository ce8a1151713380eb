"""Per-iteration learning traces and their CSV serialization.

Every learner records one row per iteration (batch) or per sweep
(online): the score it optimizes, the exact log-likelihood, the live
component count, and wall time. For plain EM learners the ``fic``
column carries the log-likelihood, which is the metric those learners
drive to convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .io import format_real


class TraceRow(NamedTuple):
    iteration: int
    fic: float
    loglik: float
    n_components: int
    wall_ms: float


CSV_HEADER = "iteration,fic,loglik,n_components,wall_ms"


@dataclass
class FicTrace:
    """Ordered per-iteration records; iterations strictly increasing from 0."""

    rows: list[TraceRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, iteration, fic, loglik, n_components, wall_ms=0.0):
        if self.rows and iteration <= self.rows[-1].iteration:
            raise ValueError(
                f"iteration {iteration} not greater than previous {self.rows[-1].iteration}"
            )
        if not self.rows and iteration != 0:
            raise ValueError("first trace row must have iteration 0")
        self.rows.append(TraceRow(int(iteration), float(fic), float(loglik), int(n_components), float(wall_ms)))

    def __len__(self):
        return len(self.rows)

    @property
    def fics(self):
        return [r.fic for r in self.rows]

    @property
    def logliks(self):
        return [r.loglik for r in self.rows]

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def to_csv(self, path, comments=()):
        """Write the trace; wall_ms is serialized as 0 so files are reproducible.

        Wall time is process noise, so persisting it would break the
        byte-identical-rerun guarantee; it stays available in memory.
        """
        lines = [f"# {c}" for c in comments]
        lines.append(CSV_HEADER)
        for r in self.rows:
            lines.append(
                f"{r.iteration},{format_real(r.fic)},{format_real(r.loglik)},{r.n_components},0"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FicTrace":
        trace = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("iteration"):
                    continue
                it, fic, ll, ncomp, wall = line.split(",")
                trace.append(int(it), float(fic), float(ll), int(ncomp), float(wall))
        return trace
