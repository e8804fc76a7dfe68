"""Projected gradient descent on the blow-up residual energy with epsilon continuation.

E(A, psi) = |pi D_A psi|^2 + |eps^2 *F_A - mu(psi)|^2 + penalty |c psi|^2   (L^2 norms)

After each step psi is renormalized to unit L^4 norm; steps are accepted by
Armijo backtracking on the renormalized iterate, so accepted energies strictly
decrease within a stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lattice import (
    LatticeGeometry,
    SpinorHomField,
    U1Connection,
    clifford_field,
    fueter_residual,
    covariant_derivative,
    curl_adjoint,
    curvature_star,
    from_moment,
    gauge_phase,
    l2_inner,
    l2_norm,
    l2_norm_spinor,
    l4_norm,
    read_checkpoint,
    residuals,
    shift,
    write_checkpoint,
)
from .moduli import quotient_project
from .spinor_hom import clifford_contract, inner, iota, moment_map, project_threehalf

DEFAULT_PENALTY = 1e3
ARMIJO = 1e-4


class FlowDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    epsilon_schedule: tuple[float, ...]
    step: float
    max_iters: int
    grad_tol: float
    seed: int
    n: int = 8
    length: float = 2 * np.pi
    penalty: float = DEFAULT_PENALTY
    hard_projection: bool = False
    init_connection_scale: float = 0.1
    max_backtracks: int = 60
    fueter_threshold: float = 1e-3

    def __post_init__(self):
        sched = tuple(float(e) for e in self.epsilon_schedule)
        object.__setattr__(self, "epsilon_schedule", sched)
        if not sched:
            raise ValueError("epsilon_schedule must be nonempty")
        if any(e < 0 for e in sched):
            raise ValueError("epsilon_schedule entries must be >= 0")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("epsilon_schedule must be strictly decreasing")
        geom = self.geometry
        if not 0 < self.step <= step_cap(geom):
            raise ValueError(f"step must lie in (0, {step_cap(geom):.6g}] for h = {geom.h:.6g}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be >= 0")
        if self.penalty < 0:
            raise ValueError("penalty must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def geometry(self) -> LatticeGeometry:
        return LatticeGeometry.from_length(self.n, self.length)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["epsilon_schedule"] = list(self.epsilon_schedule)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


def dirac_norm_bound(geometry: LatticeGeometry) -> float:
    """Norm of the free lattice Dirac operator, sqrt(3) / h.

    A connection can push the twisted norm up to 3 / h; the Armijo
    backtracking absorbs that factor, so the cap is a starting step only.
    """
    return np.sqrt(3.0) / geometry.h


def step_cap(geometry: LatticeGeometry) -> float:
    """1 / |D|^2, the stable step for the quadratic Dirac part of the energy."""
    return 1.0 / dirac_norm_bound(geometry) ** 2


@dataclass
class FlowReport:
    config: dict
    seed: int
    start_stage: int = 0
    stages: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    final_residuals: dict = field(default_factory=dict)
    fueter: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / "flow_report.json"
        report.write_text(self.to_json())
        trace = out / "flow_trace.csv"
        with open(trace, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
            writer.writeheader()
            writer.writerows(self.trace)
        return report, trace


TRACE_FIELDS = [
    "stage",
    "epsilon",
    "iteration",
    "energy",
    "rs_residual",
    "curvature_residual",
    "kerc_residual",
    "l4_violation",
    "grad_norm",
    "step",
]


def energy_terms(a: U1Connection, psi: SpinorHomField, epsilon: float, penalty: float = DEFAULT_PENALTY) -> dict:
    geom = a.geometry
    q = project_threehalf(_dirac(a, psi.value))
    m = epsilon**2 * curvature_star(a) - moment_map(psi.value)
    dirac = l2_norm(geom, q) ** 2
    curv = l2_norm(geom, m) ** 2
    kerc = penalty * l2_norm_spinor(geom, clifford_contract(psi.value)) ** 2
    return {
        "dirac": dirac,
        "curvature": curv,
        "kerc_penalty": kerc,
        "total": dirac + curv + kerc,
        "l4_violation": abs(l4_norm(psi) - 1.0),
    }


def energy(a: U1Connection, psi: SpinorHomField, epsilon: float, penalty: float = DEFAULT_PENALTY) -> float:
    return energy_terms(a, psi, epsilon, penalty)["total"]


def _dirac(a: U1Connection, value: np.ndarray) -> np.ndarray:
    nabla = covariant_derivative(a, SpinorHomField(a.geometry, value))
    return sum(clifford_field(k, nabla[k]) for k in range(3))


def _generator(value: np.ndarray) -> np.ndarray:
    """Infinitesimal gauge action (right multiplication by I on the spinor factor)."""
    return value * np.array([1j, -1j])[:, None]


def gradient(
    a: U1Connection, psi: SpinorHomField, epsilon: float, penalty: float = DEFAULT_PENALTY
) -> tuple[np.ndarray, np.ndarray]:
    """L^2 gradient of ``energy`` (connection pairing h^3 sum a.b, spinor pairing h^3 sum (.,.))."""
    geom = a.geometry
    h = geom.h
    v = psi.value
    q = project_threehalf(_dirac(a, v))
    m = epsilon**2 * curvature_star(a) - moment_map(v)
    cpsi = clifford_contract(v)

    dpsi = 2 * _dirac(a, q) - 4 * (m @ v) - 4 * penalty * iota(cpsi)

    da = np.empty(a.a.shape)
    for k in range(3):
        link = h * a.a[..., k]
        fwd = clifford_field(k, _generator(gauge_phase(link, shift(v, k, 1))))
        bwd = clifford_field(k, _generator(gauge_phase(-link, v)))
        da[..., k] = inner(q, fwd) + inner(shift(q, k, 1), bwd)
    da += 2 * epsilon**2 * curl_adjoint(geom, from_moment(m))
    return da, dpsi


def _l4_normal(value: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(value) ** 2, axis=(-2, -1))[..., None, None] * value


def _tangent(geom: LatticeGeometry, value: np.ndarray, dpsi: np.ndarray) -> np.ndarray:
    nrm = _l4_normal(value)
    denom = l2_inner(geom, nrm, nrm)
    if denom == 0.0:
        return dpsi
    return dpsi - (l2_inner(geom, dpsi, nrm) / denom) * nrm


def _grad_norm(geom: LatticeGeometry, da: np.ndarray, dpsi: np.ndarray) -> float:
    return float(np.sqrt(geom.volume_element * np.sum(da**2) + l2_inner(geom, dpsi, dpsi)))


def _normalize(psi: SpinorHomField, hard_projection: bool) -> SpinorHomField:
    value = project_threehalf(psi.value) if hard_projection else psi.value
    out = psi.with_value(value)
    return out.with_value(value / l4_norm(out))


def initial_fields(config: FlowConfig) -> tuple[U1Connection, SpinorHomField]:
    """Seeded Gaussian start from a counter-based (Philox) generator."""
    geom = config.geometry
    n = geom.n
    rng = np.random.Generator(np.random.Philox(int(config.seed)))
    a = config.init_connection_scale * rng.standard_normal((n, n, n, 3))
    psi = rng.standard_normal((n, n, n, 2, 3)) + 1j * rng.standard_normal((n, n, n, 2, 3))
    psi_field = SpinorHomField(geom, psi)
    return U1Connection(geom, a), _normalize(psi_field, config.hard_projection)


def _trace_row(stage, eps, it, a, psi, config, gnorm, step) -> dict:
    res = residuals(a, psi, eps, "blowup")
    return {
        "stage": stage,
        "epsilon": eps,
        "iteration": it,
        "energy": energy(a, psi, eps, config.penalty),
        "rs_residual": res.rs_residual,
        "curvature_residual": res.curvature_residual,
        "kerc_residual": res.kerc_residual,
        "l4_violation": res.l4_constraint,
        "grad_norm": gnorm,
        "step": step,
    }


def run_stage(config: FlowConfig, stage: int, a: U1Connection, psi: SpinorHomField, trace: list) -> tuple:
    geom = a.geometry
    eps = config.epsilon_schedule[stage]
    e_cur = energy(a, psi, eps, config.penalty)
    status = "max_iters"
    it = 0
    for it in range(config.max_iters + 1):
        da, dpsi = gradient(a, psi, eps, config.penalty)
        dpsi = _tangent(geom, psi.value, dpsi)
        gnorm = _grad_norm(geom, da, dpsi)
        if not np.isfinite(e_cur) or not np.isfinite(gnorm):
            raise FlowDivergence(f"stage {stage} (eps={eps}): non-finite energy or gradient at iteration {it}")
        if gnorm <= config.grad_tol:
            trace.append(_trace_row(stage, eps, it, a, psi, config, gnorm, 0.0))
            status = "converged"
            break
        if it == config.max_iters:
            trace.append(_trace_row(stage, eps, it, a, psi, config, gnorm, 0.0))
            break
        t = config.step
        for _ in range(config.max_backtracks):
            a_new = U1Connection(geom, a.a - t * da)
            psi_new = _normalize(psi.with_value(psi.value - t * dpsi), config.hard_projection)
            e_new = energy(a_new, psi_new, eps, config.penalty)
            if e_new <= e_cur - ARMIJO * t * gnorm**2:
                break
            t *= 0.5
        else:
            trace.append(_trace_row(stage, eps, it, a, psi, config, gnorm, 0.0))
            status = "line_search_exhausted"
            break
        trace.append(_trace_row(stage, eps, it, a, psi, config, gnorm, t))
        a, psi, e_cur = a_new, psi_new, e_new
    return a, psi, {"stage": stage, "epsilon": eps, "iterations": it, "status": status, "energy": e_cur}


def run_flow(
    config: FlowConfig,
    initial: tuple[U1Connection, SpinorHomField] | None = None,
    *,
    start_stage: int = 0,
    checkpoint_dir=None,
) -> tuple[FlowReport, U1Connection, SpinorHomField]:
    a, psi = initial if initial is not None else initial_fields(config)
    if a.geometry != config.geometry or psi.geometry != config.geometry:
        raise ValueError("initial fields do not match the configured geometry")
    if start_stage == 0:
        # resumed iterates are already on the constraint; renormalizing would perturb their bits
        psi = _normalize(psi, config.hard_projection)
    report = FlowReport(config=config.as_dict(), seed=int(config.seed), start_stage=start_stage)
    for stage in range(start_stage, len(config.epsilon_schedule)):
        a, psi, summary = run_stage(config, stage, a, psi, report.trace)
        report.stages.append(summary)
        if checkpoint_dir is not None:
            report.checkpoints.extend(save_stage(checkpoint_dir, config, stage, a, psi))
    final = residuals(a, psi, None, "degenerate")
    report.final_residuals = final.as_dict()
    report.fueter = _fueter_summary(a, psi, final, config)
    return report, a, psi


def _fueter_summary(a, psi, final, config) -> dict:
    scale = l2_norm(psi.geometry, psi.value)
    small = max(final.kerc_residual, final.curvature_residual) <= config.fueter_threshold * max(scale, 1.0)
    pointwise = np.sqrt(0.5 * np.sum(np.abs(psi.value) ** 2, axis=(-2, -1)))
    if not small:
        return {"emitted": False, "reason": "kerc or mu residual above threshold"}
    if pointwise.min() == 0.0:
        return {"emitted": False, "reason": "psi vanishes somewhere"}
    try:
        phi = quotient_project(psi.value, tol=config.fueter_threshold)
    except ValueError as exc:
        return {"emitted": False, "reason": str(exc)}
    return {"emitted": True, "fueter_residual": fueter_residual(a, phi)}


def save_stage(out_dir, config: FlowConfig, stage: int, a: U1Connection, psi: SpinorHomField) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"stage": stage, "seed": int(config.seed), "config_digest": config.digest()}
    pa = write_checkpoint(out / f"stage{stage}_a.rkf", a.geometry, "u1_connection", a.a, meta)
    pp = write_checkpoint(out / f"stage{stage}_psi.rkf", psi.geometry, "spinor_hom", psi.value, meta)
    return [pa.name, pp.name]


def load_stage(out_dir, stage: int) -> tuple[U1Connection, SpinorHomField]:
    out = Path(out_dir)
    geom_a, _, a, _ = read_checkpoint(out / f"stage{stage}_a.rkf")
    geom_p, _, psi, _ = read_checkpoint(out / f"stage{stage}_psi.rkf")
    if geom_a != geom_p:
        raise ValueError("checkpoint geometries disagree")
    return U1Connection(geom_a, a), SpinorHomField(geom_p, psi)


def gradient_check(a, psi, epsilon, directions, rng, penalty=DEFAULT_PENALTY, fd_step=1e-5) -> float:
    """Worst relative error between <grad, v> and a central difference of the energy."""
    geom = a.geometry
    da, dpsi = gradient(a, psi, epsilon, penalty)
    worst = 0.0
    for _ in range(directions):
        va = rng.standard_normal(a.a.shape)
        vp = rng.standard_normal(psi.value.shape) + 1j * rng.standard_normal(psi.value.shape)
        pair = geom.volume_element * np.sum(da * va) + l2_inner(geom, dpsi, vp)
        plus = energy(U1Connection(geom, a.a + fd_step * va), psi.with_value(psi.value + fd_step * vp), epsilon, penalty)
        minus = energy(U1Connection(geom, a.a - fd_step * va), psi.with_value(psi.value - fd_step * vp), epsilon, penalty)
        fd = (plus - minus) / (2 * fd_step)
        worst = max(worst, abs(pair - fd) / max(abs(fd), abs(pair), 1e-300))
    return worst
