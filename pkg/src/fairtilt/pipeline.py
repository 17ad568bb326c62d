"""Replicated measure bundles over evaluation grids.

One conditional sample set can price every measure of interest at once:
the sampling measure itself, the score-constrained tilts with and without
the expectation constraint, and the barycentres of the marginal tilts.
``evaluate_bundle`` runs that shared-sample protocol over replicates with
the rejection rule, and ``run_grid`` assembles per-measure reports over a
covariate grid. Replication seeds derive from (seed, node, replicate), so
any node or replicate can be recomputed in isolation.

Measures that renormalise globally (the barycentre family) change the
conditional ranks, so their premia and sensitivities are evaluated on
weighted midranks rather than the sampling ranks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barycentre import BarycentreWeights, constrained_barycentre, pure_barycentre
from .distortion import DistortionWeight, premium, reranked_premium, weighted_midranks
from .errors import BinningError, ReplicationError, TiltOverflow
from .io import spawn_seed
from .metrics import SensitivityReport, XGrid, aggregate_sensitivities
from .oracle import tilt_projection_gap
from .scenario import Scenario, sample_conditional
from .sensitivity import build_phi, sensitivity
from .solver import SolverOptions, solve_insensitive, solve_marginal
from .tilt import BinScheme, TiltParameters, compute_weights, kl_divergence

__all__ = [
    "MeasureRequest",
    "parse_measure",
    "default_bundle",
    "NodeMeasureResult",
    "evaluate_bundle",
    "GridRun",
    "run_grid",
    "oracle_check_node",
    "WeightSearchData",
    "prepare_weight_search",
]

_KINDS = ("base", "insensitive", "marginal", "barycentre", "constrained_barycentre")


@dataclass(frozen=True)
class MeasureRequest:
    """One measure to evaluate, identified by kind and its parameters.

    ``index`` selects the protected coordinate (0-based) for single-score
    kinds; ``pi`` carries barycentric weights. ``insensitive`` with
    ``index=None`` constrains every score. The label is the canonical
    token accepted by :func:`parse_measure`.
    """

    kind: str
    index: int | None = None
    pi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "marginal" and self.index is None:
            raise ValueError("marginal measures need a covariate index")
        if self.kind in ("barycentre", "constrained_barycentre") and self.pi is None:
            raise ValueError(f"{self.kind} needs barycentric weights")
        if self.pi is not None:
            BarycentreWeights(self.pi)

    @property
    def label(self) -> str:
        if self.kind == "insensitive" and self.index is not None:
            return f"insensitive:{self.index + 1}"
        if self.kind == "marginal":
            return f"marginal:{self.index + 1}"
        if self.pi is not None:
            return f"{self.kind}:" + ",".join(f"{p:g}" for p in self.pi)
        return self.kind


def parse_measure(token: str, m: int) -> MeasureRequest:
    """Parse a measure token: kind, optionally ``:`` and an argument.

    Single-score kinds take a 1-based protected coordinate
    (``marginal:2``); barycentre kinds take comma-separated weights
    (``constrained_barycentre:0.58,0.42``). ``m`` is the number of
    protected covariates, used for validation.
    """
    token = token.strip()
    head, _, arg = token.partition(":")
    head = head.strip()
    arg = arg.strip()
    if head not in _KINDS:
        raise ValueError(f"unknown measure {token!r}; expected one of {', '.join(_KINDS)}")
    if head == "base":
        if arg:
            raise ValueError("base takes no argument")
        return MeasureRequest(kind="base")
    if head in ("insensitive", "marginal"):
        if head == "insensitive" and not arg:
            return MeasureRequest(kind="insensitive")
        if not arg:
            raise ValueError(f"{head} needs a covariate number, as in {head}:1")
        index = int(arg)
        if not 1 <= index <= m:
            raise ValueError(f"covariate number {index} outside 1..{m}")
        return MeasureRequest(kind=head, index=index - 1)
    weights = tuple(float(p) for p in arg.split(",")) if arg else ()
    if len(weights) != m:
        raise ValueError(f"{head} needs {m} comma-separated weights")
    return MeasureRequest(kind=head, pi=weights)


def default_bundle(m: int, pi_list: tuple[tuple[float, ...], ...] = ()) -> list[MeasureRequest]:
    """The standard comparison set: sampling measure, every constrained tilt,
    every marginal tilt, and a constrained barycentre per weight vector."""
    requests = [MeasureRequest(kind="base")]
    requests += [MeasureRequest(kind="insensitive", index=i) for i in range(m)]
    requests.append(MeasureRequest(kind="insensitive"))
    requests += [MeasureRequest(kind="marginal", index=i) for i in range(m)]
    requests += [MeasureRequest(kind="constrained_barycentre", pi=pi) for pi in pi_list]
    return requests


@dataclass(frozen=True)
class NodeMeasureResult:
    """Replicate-averaged outputs of one measure at one grid node.

    ``eta``, ``lam`` and ``residual_sup`` come from the first accepted
    replicate (multipliers are not averaged); premium, sensitivities and
    kl are means over accepted replicates.
    """

    label: str
    premium: float
    sensitivities: np.ndarray
    kl: float
    converged: bool
    accepted: int
    attempted: int
    eta: tuple[float, ...] | None = None
    lam: float | None = None
    residual_sup: float = float("inf")
    diagnosis: str = ""


@dataclass(frozen=True)
class _RepValues:
    premium: float
    sensitivities: np.ndarray
    kl: float
    residual_sup: float
    ok: bool
    eta: tuple[float, ...] | None
    lam: float | None
    diagnosis: str


def _global_measure_values(model, d, y, r, w) -> tuple[float, np.ndarray]:
    """Premium and sensitivities of a globally normalised measure.

    The measure's own conditional ranks are the weighted midranks of the
    losses, so the distortion and the scores are evaluated there.
    """
    u_tilted = weighted_midranks(y, r)
    phi_tilted = build_phi(model, d, u_tilted, w)
    sens = np.array([sensitivity(phi_tilted, i, r) for i in phi_tilted.indices])
    return reranked_premium(y, r, w), sens


def _evaluate_one(
    request: MeasureRequest,
    scenario: Scenario,
    samples,
    phi_matrix,
    bins: BinScheme,
    w: DistortionWeight,
    opts: SolverOptions,
    marginal_cache: dict,
) -> _RepValues:
    model = scenario.model
    y = samples.y
    m = phi_matrix.m

    def marginal(i: int):
        if i not in marginal_cache:
            marginal_cache[i] = solve_marginal(samples, phi_matrix, i, bins, opts)
        return marginal_cache[i]

    if request.kind == "base":
        sens = np.array([sensitivity(phi_matrix, i) for i in range(m)])
        return _RepValues(
            premium=premium(y, samples.u, w),
            sensitivities=sens,
            kl=0.0,
            residual_sup=0.0,
            ok=True,
            eta=None,
            lam=None,
            diagnosis="",
        )

    if request.kind == "insensitive":
        subset = phi_matrix if request.index is None else phi_matrix.select((request.index,))
        measure = solve_insensitive(samples, subset, bins, opts, include_expectation=True)
        r = measure.weights.r
        sens = np.array([sensitivity(phi_matrix, i, r) for i in range(m)])
        residual_sup = float(np.max(np.abs(measure.residuals)))
        eta = tuple(np.asarray(measure.params.eta, dtype=float).tolist())
        return _RepValues(
            premium=premium(y, samples.u, w, r),
            sensitivities=sens,
            kl=measure.kl,
            residual_sup=residual_sup,
            ok=measure.converged and residual_sup <= opts.tol_accept,
            eta=eta,
            lam=measure.params.eta_expectation,
            diagnosis=measure.diagnosis,
        )

    if request.kind == "marginal":
        measure = marginal(request.index)
        r = measure.weights.r
        sens = np.array([sensitivity(phi_matrix, i, r) for i in range(m)])
        residual_sup = float(np.max(np.abs(measure.residuals)))
        return _RepValues(
            premium=premium(y, samples.u, w, r),
            sensitivities=sens,
            kl=measure.kl,
            residual_sup=residual_sup,
            ok=measure.converged and residual_sup <= opts.tol_accept,
            eta=tuple(np.asarray(measure.params.eta, dtype=float).tolist()),
            lam=None,
            diagnosis=measure.diagnosis,
        )

    # barycentre family: members are the marginal tilts on this sample set
    members = [marginal(i) for i in range(m)]
    bad = next((mm for mm in members if not mm.converged), None)
    if bad is not None:
        return _RepValues(
            premium=float("nan"),
            sensitivities=np.full(m, np.nan),
            kl=float("nan"),
            residual_sup=float("inf"),
            ok=False,
            eta=None,
            lam=None,
            diagnosis=f"member {bad.indices[0] + 1} diverged: {bad.diagnosis}",
        )
    member_residual = max(float(np.max(np.abs(mm.residuals))) for mm in members)
    pi = BarycentreWeights(request.pi)
    if request.kind == "barycentre":
        weights = pure_barycentre([mm.weights for mm in members], pi)
        r = weights.r
        prem, sens = _global_measure_values(model, samples.d, y, r, w)
        return _RepValues(
            premium=prem,
            sensitivities=sens,
            kl=kl_divergence(weights),
            residual_sup=member_residual,
            ok=member_residual <= opts.tol_accept,
            eta=None,
            lam=None,
            diagnosis="",
        )
    try:
        result = constrained_barycentre(y, [mm.weights for mm in members], pi, opts)
    except TiltOverflow as exc:
        return _RepValues(
            premium=float("nan"),
            sensitivities=np.full(m, np.nan),
            kl=float("nan"),
            residual_sup=float("inf"),
            ok=False,
            eta=None,
            lam=None,
            diagnosis=str(exc),
        )
    r = result.weights.r
    sd = float(np.std(y))
    expectation_residual = abs(float(np.mean(r * (y - y.mean())))) / sd if sd > 0 else 0.0
    residual_sup = max(member_residual, expectation_residual)
    prem, sens = _global_measure_values(model, samples.d, y, r, w)
    return _RepValues(
        premium=prem,
        sensitivities=sens,
        kl=result.kl,
        residual_sup=residual_sup,
        ok=residual_sup <= opts.tol_accept,
        eta=None,
        lam=result.lam,
        diagnosis="",
    )


def evaluate_bundle(
    scenario: Scenario,
    x,
    requests: list[MeasureRequest],
    w: DistortionWeight,
    bins: BinScheme,
    n: int,
    reps: int,
    seed: int,
    node_key: int = 0,
    opts: SolverOptions = SolverOptions(),
) -> dict[str, NodeMeasureResult]:
    """Evaluate every requested measure at one covariate point.

    Each replicate draws a fresh conditional sample set (seeded by
    (seed, node_key, replicate)) shared by all measures, solves what needs
    solving, and is accepted per measure by the residual rule. Averages
    are over accepted replicates; a measure with none is reported
    non-converged with the last diagnosis, never raised.
    """
    m = len(scenario.protected)
    per_request: dict[str, list[_RepValues]] = {req.label: [] for req in requests}
    for rep in range(reps):
        rep_seed = spawn_seed(seed, node_key, rep)
        samples = sample_conditional(scenario, x, n, rep_seed)
        phi_matrix = build_phi(scenario.model, samples.d, samples.u, w)
        marginal_cache: dict = {}
        for req in requests:
            try:
                values = _evaluate_one(
                    req, scenario, samples, phi_matrix, bins, w, opts, marginal_cache
                )
            except (TiltOverflow, BinningError) as exc:
                values = _RepValues(
                    premium=float("nan"),
                    sensitivities=np.full(m, np.nan),
                    kl=float("nan"),
                    residual_sup=float("inf"),
                    ok=False,
                    eta=None,
                    lam=None,
                    diagnosis=str(exc),
                )
            per_request[req.label].append(values)

    results: dict[str, NodeMeasureResult] = {}
    for req in requests:
        outcomes = per_request[req.label]
        accepted = [o for o in outcomes if o.ok]
        if accepted:
            results[req.label] = NodeMeasureResult(
                label=req.label,
                premium=float(np.mean([o.premium for o in accepted])),
                sensitivities=np.mean([o.sensitivities for o in accepted], axis=0),
                kl=float(np.mean([o.kl for o in accepted])),
                converged=True,
                accepted=len(accepted),
                attempted=reps,
                eta=accepted[0].eta,
                lam=accepted[0].lam,
                residual_sup=accepted[0].residual_sup,
            )
        else:
            results[req.label] = NodeMeasureResult(
                label=req.label,
                premium=float("nan"),
                sensitivities=np.full(m, np.nan),
                kl=float("nan"),
                converged=False,
                accepted=0,
                attempted=reps,
                diagnosis=outcomes[-1].diagnosis if outcomes else "no replicates run",
            )
    return results


@dataclass(frozen=True)
class GridRun:
    """Bundle outcomes over a grid: aggregated reports plus raw node results."""

    grid: XGrid
    reports: dict[str, SensitivityReport]
    node_results: dict[str, list[NodeMeasureResult]]


def run_grid(
    scenario: Scenario,
    requests: list[MeasureRequest],
    w: DistortionWeight,
    bins: BinScheme,
    grid: XGrid,
    n: int,
    reps: int,
    seed: int,
    opts: SolverOptions = SolverOptions(),
) -> GridRun:
    """Evaluate a measure bundle at every grid node and assemble reports."""
    m = len(scenario.protected)
    nodes = grid.size
    node_results: dict[str, list[NodeMeasureResult]] = {req.label: [] for req in requests}
    for node_index, node in enumerate(grid.nodes):
        bundle = evaluate_bundle(
            scenario, node.x, requests, w, bins, n, reps, seed, node_key=node_index, opts=opts
        )
        for label, result in bundle.items():
            node_results[label].append(result)
    reports = {}
    for req in requests:
        results = node_results[req.label]
        reports[req.label] = SensitivityReport(
            measure_label=req.label,
            grid=grid,
            premiums=np.array([r.premium for r in results]),
            sensitivities=np.array([r.sensitivities for r in results]).reshape(nodes, m),
            kl=np.array([r.kl for r in results]),
            converged=np.array([r.converged for r in results], dtype=bool),
            accepted=np.array([r.accepted for r in results], dtype=int),
            attempted=np.array([r.attempted for r in results], dtype=int),
        )
    return GridRun(grid=grid, reports=reports, node_results=node_results)


def oracle_check_node(
    scenario: Scenario,
    x,
    requests: list[MeasureRequest],
    w: DistortionWeight,
    bins: BinScheme,
    n: int,
    seed: int,
    node_key: int = 0,
    opts: SolverOptions = SolverOptions(),
) -> dict[str, float]:
    """Sup-norm gap between solved weights and the direct KL projection.

    Runs the first replicate of each projection-type measure (the
    barycentre family has its own closed-form checks) and compares the
    closed-form tilt against the explicit projection on the realised
    sample space. Only usable at oracle scale (n at most 4096).
    Non-converged solves report a nan gap.
    """
    samples = sample_conditional(scenario, x, n, spawn_seed(seed, node_key, 0))
    phi_matrix = build_phi(scenario.model, samples.d, samples.u, w)
    y = samples.y
    gaps: dict[str, float] = {}
    for req in requests:
        if req.kind == "insensitive":
            subset = phi_matrix if req.index is None else phi_matrix.select((req.index,))
            measure = solve_insensitive(samples, subset, bins, opts, include_expectation=True)
            columns = np.hstack([subset.values, y[:, None]])
            targets = np.concatenate([np.zeros(subset.m), [y.mean()]])
        elif req.kind == "marginal":
            measure = solve_marginal(samples, phi_matrix, req.index, bins, opts)
            columns = phi_matrix.select((req.index,)).values
            targets = np.zeros(1)
        else:
            continue
        if not measure.converged:
            gaps[req.label] = float("nan")
            continue
        gaps[req.label] = tilt_projection_gap(
            columns, targets, samples.u, bins.count, measure.weights.r
        )
    return gaps


@dataclass(frozen=True)
class _MemberRecord:
    node_index: int
    rep_seed: int
    etas: tuple[float, ...]
    ok: bool


@dataclass(frozen=True)
class WeightSearchData:
    """Solved marginal members, reusable across barycentric weight choices.

    The member tilts do not depend on the barycentric weights, so the
    expensive solves happen once; evaluating a candidate weight vector
    regenerates each sample set from its seed and recombines the stored
    multipliers.
    """

    scenario: Scenario
    w: DistortionWeight
    bins: BinScheme
    grid: XGrid
    n: int
    records: tuple[_MemberRecord, ...]
    xi_reference: np.ndarray
    opts: SolverOptions

    def evaluate(self, pi1: float) -> np.ndarray:
        """Aggregated sensitivities of the constrained barycentre at (pi1, 1 - pi1)."""
        m = len(self.scenario.protected)
        pi = BarycentreWeights((float(pi1), 1.0 - float(pi1)))
        nodes = self.grid.size
        sums = np.zeros((nodes, m))
        counts = np.zeros(nodes)
        for record in self.records:
            if not record.ok:
                continue
            node = self.grid.nodes[record.node_index]
            samples = sample_conditional(self.scenario, node.x, self.n, record.rep_seed)
            phi_matrix = build_phi(self.scenario.model, samples.d, samples.u, self.w)
            members = [
                compute_weights(
                    phi_matrix.values[:, i : i + 1],
                    samples.y,
                    samples.u,
                    TiltParameters(eta=np.array([record.etas[i]])),
                    self.bins,
                )
                for i in range(m)
            ]
            result = constrained_barycentre(samples.y, members, pi, self.opts)
            _, sens = _global_measure_values(
                self.scenario.model, samples.d, samples.y, result.weights.r, self.w
            )
            sums[record.node_index] += sens
            counts[record.node_index] += 1
        converged = counts > 0
        if not np.any(converged):
            raise ReplicationError("no node has an accepted member pair")
        means = np.full((nodes, m), np.nan)
        means[converged] = sums[converged] / counts[converged, None]
        return aggregate_sensitivities(self.grid.weights, means, converged).per_coordinate


def prepare_weight_search(
    scenario: Scenario,
    w: DistortionWeight,
    bins: BinScheme,
    grid: XGrid,
    n: int,
    reps: int,
    seed: int,
    opts: SolverOptions = SolverOptions(),
) -> WeightSearchData:
    """Solve the marginal members once per (node, replicate) for weight search.

    Also computes the reference aggregated sensitivities under the
    sampling measure, the yardstick of the proportional-reduction
    objective.
    """
    m = len(scenario.protected)
    if m != 2:
        raise ValueError("weight search is defined for exactly two protected covariates")
    records = []
    nodes = grid.size
    base_sums = np.zeros((nodes, m))
    base_counts = np.zeros(nodes)
    for node_index, node in enumerate(grid.nodes):
        for rep in range(reps):
            rep_seed = spawn_seed(seed, node_index, rep)
            samples = sample_conditional(scenario, node.x, n, rep_seed)
            phi_matrix = build_phi(scenario.model, samples.d, samples.u, w)
            base_sums[node_index] += [sensitivity(phi_matrix, i) for i in range(m)]
            base_counts[node_index] += 1
            etas = []
            ok = True
            for i in range(m):
                measure = solve_marginal(samples, phi_matrix, i, bins, opts)
                residual_sup = float(np.max(np.abs(measure.residuals)))
                if not (measure.converged and residual_sup <= opts.tol_accept):
                    ok = False
                    break
                etas.append(float(measure.params.eta[0]))
            records.append(
                _MemberRecord(
                    node_index=node_index,
                    rep_seed=rep_seed,
                    etas=tuple(etas) if ok else (),
                    ok=ok,
                )
            )
    base_means = base_sums / base_counts[:, None]
    xi_reference = aggregate_sensitivities(grid.weights, base_means).per_coordinate
    return WeightSearchData(
        scenario=scenario,
        w=w,
        bins=bins,
        grid=grid,
        n=n,
        records=tuple(records),
        xi_reference=xi_reference,
        opts=opts,
    )
