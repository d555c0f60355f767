"""Solver configuration and run statistics."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the recursive solver chain.

    Parameters
    ----------
    p : float
        Exponent of the stretch norm, in (1/2, 1).
    delta : float
        Sampling weight per draw.
    c : float
        Constant in the per-level condition number and its cap.
    c_s : float
        Spectral constant of the sampled preconditioners; sets the inner
        accuracy of the randomized Richardson steps.
    c_z : float, optional
        When set, the randomized Richardson termination test uses the
        target ``eps / (c_z · log⁴ n)``. When ``None`` the coarse
        operator's own sandwich factor is used (1 for the direct solver).
    edge_factor, stretch_factor : float
        Acceptance constants of the preconditioner resampling loop.
    base_vertices, base_off_tree : int
        A level is solved directly when it has at most this many vertices
        or at most this many off-tree edges.
    shrink_factor : float
        A reduced graph gets its own recursive level only when it has at
        most this fraction of the parent level's vertices; otherwise it is
        solved directly. Guards against chains that do not shrink.
    eps0 : float
        Accuracy of the recursive solve inside the top-level refinement.
    seed : int
        Master seed; every random stream is derived from it.
    tree : {"lsst", "mst"}
    t_const : float
        Constant in the initial randomized Richardson pass length.
    step : float
        Randomized Richardson step size.
    inner_rule : {"literal", "derived"}
        Accuracy requested from the preconditioner inside Chebyshev
        iteration: ``eps⁴/(30κ⁴)`` or ``eps/(12·N·(N+1))`` for ``N``
        Chebyshev steps.
    max_depth, max_restarts, max_loops : int
        Safety caps.
    flow_stage1 : {"cubic-log", "half"}
        First-stage accuracy of the electrical-flow routine:
        ``eps / log³ n`` or ``eps / 2``.
    """

    p: float = 0.9
    delta: float = 0.1
    c: float = 1.0
    c_s: float = 2.0
    c_z: float | None = None
    edge_factor: float = 4800.0
    stretch_factor: float = 480.0
    base_vertices: int = 500
    base_off_tree: int = 50
    shrink_factor: float = 0.5
    eps0: float = 0.1
    seed: int = 0
    tree: str = "lsst"
    t_const: float = 4.0
    step: float = 0.1
    inner_rule: str = "literal"
    max_depth: int = 50
    max_restarts: int = 100
    max_loops: int = 1000
    flow_stage1: str = "cubic-log"

    def __post_init__(self):
        if not (0.5 < self.p < 1.0):
            raise ValueError(f"p must lie in (1/2, 1), got {self.p}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (0.0 < self.shrink_factor <= 1.0):
            raise ValueError("shrink_factor must lie in (0, 1]")
        for name in ("c", "c_s", "edge_factor", "stretch_factor", "eps0", "t_const", "step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c_z is not None and not self.c_z > 0:
            raise ValueError("c_z must be positive")
        if not self.eps0 < 1:
            raise ValueError("eps0 must be below 1")
        if self.tree not in ("lsst", "mst"):
            raise ValueError(f"unknown tree method {self.tree!r}")
        if self.inner_rule not in ("literal", "derived"):
            raise ValueError(f"unknown inner accuracy rule {self.inner_rule!r}")
        if self.flow_stage1 not in ("cubic-log", "half"):
            raise ValueError(f"unknown flow stage-1 rule {self.flow_stage1!r}")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class LevelStats:
    depth: int
    n: int = 0
    m: int = 0
    off_tree: int = 0
    norm_p: float = 0.0
    kappa: float = 0.0
    solves: int = 0
    cheby_iterations: int = 0
    rr_calls: int = 0
    rr_iterations: int = 0
    restarts: int = 0
    precon_loops: int = 0
    precon_draws: int = 0
    direct_solves: int = 0
    stalled: int = 0
    operators: int = 0


@dataclass
class SolveStats:
    """Counters collected during one top-level solve."""

    levels: dict = field(default_factory=dict)
    outer_iterations: int = 0
    timings: dict = field(default_factory=dict)

    def level(self, depth: int) -> LevelStats:
        if depth not in self.levels:
            self.levels[depth] = LevelStats(depth)
        return self.levels[depth]

    @property
    def total_restarts(self) -> int:
        return sum(lv.restarts for lv in self.levels.values())

    @property
    def inner_iterations(self) -> int:
        return sum(lv.rr_iterations for lv in self.levels.values())

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "restarts": self.total_restarts,
            "inner_iterations": self.inner_iterations,
            "levels": [dataclasses.asdict(self.levels[d]) for d in sorted(self.levels)],
        }
