"""Conditional (stochastic) master equations of a continuous Bell measurement.

Two homodyne currents are recorded,

    I_k dt = sqrt(eta/2) <a_k + a_k^dag> dt + dW_k,      k = +, -,

with noise covariance ``E[dW_k dW_l] = W_kl dt``.  The conditional state
obeys the Itô equation

    d rho = L rho dt + sqrt(eta/2) sum_k H[c_k] rho dW_k,
    H[c] rho = c rho + rho c^dag - <c + c^dag> rho,

where the update operators solve ``W c = a`` so that the state update is
the optimal filter for the correlated record.  For teleportation with a
squeezed input ``a = (s, i s)`` and ``c = (mu s, i nu s)``; for swapping
``a = c = (s+, i s-)`` with unit noise.

Feedback is applied operationally: after each measurement increment the
state is kicked by ``exp(-i (F+ I+ dt + F- I- dt) / sqrt(2 eta))``.

States are processed in batches (arrays of shape ``(B, d, d)``); each
trajectory draws its increments from its own counter-based stream, so
results do not depend on batching or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .feedback import FeedbackSpec, swap_feedback_liouvillian, teleport_feedback_liouvillian
from .master import GeneratorTerm, Liouvillian, StepSizeError, dissipator, hamiltonian, liouvillian_build
from .noise import UNIT_NOISE, NoiseCov, SqueezingSpec, epr_coeffs, noise_covariance, trajectory_rng
from .parallel import ordered_map
from .qops import DensityOp, LayoutError, Operator, SpaceLayout, project_psd

logger = logging.getLogger(__name__)

PSD_TOL = -1e-9


class MeasurementChannel(NamedTuple):
    """One homodyne current: state-update operator, signal operator, label."""

    update: Operator
    signal: Operator
    label: str


@dataclass(frozen=True, eq=False)
class SMEModel:
    """Everything needed to integrate the conditional dynamics.

    Parameters
    ----------
    layout : SpaceLayout
    terms : tuple of GeneratorTerm
        Unconditional generator ``L`` (Hamiltonian plus all decoherence,
        including the measurement back-action ``D[s]``).
    channels : tuple of MeasurementChannel
        The ``+`` and ``-`` currents, in that order.
    cov : NoiseCov
        Covariance of ``(dW+, dW-)``.
    eta : float
        Detection efficiency.
    kind : str
        ``"teleport"`` or ``"swap"``; selects the matching feedback
        master equation in :meth:`feedback_liouvillian`.
    couplings : tuple of Operator
        ``(s,)`` for teleportation, ``(s1, s2)`` for swapping.
    H_sys : Operator or None
    """

    layout: SpaceLayout
    terms: tuple
    channels: tuple
    cov: NoiseCov
    eta: float = 1.0
    kind: str = "teleport"
    couplings: tuple = ()
    H_sys: Operator | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if len(self.channels) != 2:
            raise ValueError("a Bell measurement has exactly two channels")
        for ch in self.channels:
            if ch.update.layout != self.layout or ch.signal.layout != self.layout:
                raise LayoutError("channel operators must match the model layout")
        for t in self.terms:
            if t.operator.layout != self.layout:
                raise LayoutError("generator terms must match the model layout")

    @property
    def dim(self) -> int:
        return self.layout.total

    def liouvillian(self) -> Liouvillian:
        if "L" not in self._cache:
            self._cache["L"] = liouvillian_build(self.terms, layout=self.layout)
        return self._cache["L"]

    def feedback_liouvillian(self, fb: FeedbackSpec) -> Liouvillian:
        """Unconditional generator of this model under feedback ``fb``."""
        H = self.H_sys
        if self.kind == "teleport":
            (s,) = self.couplings
            return teleport_feedback_liouvillian(H, s, fb, self.cov, self.eta)
        if self.kind == "swap":
            s1, s2 = self.couplings
            return swap_feedback_liouvillian(H, None, s1, s2, fb, self.eta)
        raise ValueError(f"no feedback master equation for model kind {self.kind!r}")

    def operator_form(self):
        """``(K, [(rate, A)])`` with ``L rho = K rho + rho K^dag + sum rate A rho A^dag``."""
        if "op" not in self._cache:
            d = self.dim
            K = np.zeros((d, d), complex)
            jumps = []
            for t in self.terms:
                m = t.operator.matrix
                if t.kind == "hamiltonian":
                    K += -1j * t.rate * m
                else:
                    K += -0.5 * t.rate * (m.conj().T @ m)
                    jumps.append((t.rate, m))
            self._cache["op"] = (K, jumps)
        return self._cache["op"]


def teleport_sme_model(s: Operator, sq: SqueezingSpec, eta: float = 1.0, H_sys: Operator | None = None,
                       extra_terms: Sequence[GeneratorTerm] = (), nu_sign: float = 1.0) -> SMEModel:
    """Single system measured through ``s`` with a squeezed Bell-measurement input.

    ``extra_terms`` adds decoherence beyond ``D[s]`` (e.g. a thermal bath).
    ``nu_sign = -1`` flips the sign of the ``-`` update operator; it exists
    only as a negative control for validation and breaks the consistency
    between record and state update.
    """
    e = epr_coeffs(sq)
    terms = [dissipator(s)] + list(extra_terms)
    if H_sys is not None:
        terms.insert(0, hamiltonian(H_sys))
    channels = (
        MeasurementChannel(e.mu * s, s, "+"),
        MeasurementChannel(nu_sign * 1j * e.nu * s, 1j * s, "-"),
    )
    return SMEModel(s.layout, tuple(terms), channels, noise_covariance(sq), eta, "teleport", (s,), H_sys)


def swap_sme_model(s1: Operator, s2: Operator, eta: float = 1.0, H_sys: Operator | None = None) -> SMEModel:
    """Two systems whose couplings' sum and difference quadratures are measured."""
    terms = [dissipator(s1), dissipator(s2)]
    if H_sys is not None:
        terms.insert(0, hamiltonian(H_sys))
    sp, sm = s1 + s2, s1 - s2
    channels = (MeasurementChannel(sp, sp, "+"), MeasurementChannel(1j * sm, 1j * sm, "-"))
    return SMEModel(s1.layout, tuple(terms), channels, UNIT_NOISE, eta, "swap", (s1, s2), H_sys)


# --- single steps (batched) ----------------------------------------------


def _as_batch(rho) -> tuple[np.ndarray, bool]:
    m = rho.matrix if isinstance(rho, DensityOp) else np.asarray(rho, complex)
    if m.ndim == 2:
        return m[None], True
    return m, False


def _as_incr(increments, B: int) -> np.ndarray:
    dw = np.asarray(increments, float)
    if dw.ndim == 1:
        dw = np.broadcast_to(dw, (B, 2))
    if dw.shape != (B, 2):
        raise ValueError(f"increments of shape {dw.shape} do not match batch size {B}")
    return dw


def _drift(model: SMEModel, rho: np.ndarray) -> np.ndarray:
    K, jumps = model.operator_form()
    out = K @ rho
    out = out + out.conj().transpose(0, 2, 1)
    for r, A in jumps:
        out += r * (A @ rho @ A.conj().T)
    return out


def _expect_sum(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``<op + op^dag> = 2 Re tr(op rho)`` for each state in the batch."""
    return 2.0 * np.real(np.einsum("ij,bji->b", op, rho))


def _signals(model: SMEModel, rho: np.ndarray) -> np.ndarray:
    k = np.sqrt(model.eta / 2)
    return np.stack([k * _expect_sum(ch.signal.matrix, rho) for ch in model.channels], axis=-1)


def _clean(rho: np.ndarray, events: list | None = None) -> np.ndarray:
    if not np.all(np.isfinite(rho)):
        raise StepSizeError("non-finite state in stochastic step; reduce dt")
    rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
    tr = np.real(np.trace(rho, axis1=1, axis2=2))
    rho = rho / tr[:, None, None]
    emin = np.linalg.eigvalsh(rho)[:, 0]
    bad = np.nonzero(emin < PSD_TOL)[0]
    for b in bad:
        logger.debug("projecting state %d onto PSD cone (eigenvalue %.3e)", b, emin[b])
        rho[b] = project_psd(rho[b])
    if events is not None and bad.size:
        events.append(int(bad.size))
    return rho


def _measure_euler(model: SMEModel, rho: np.ndarray, dw: np.ndarray, dt: float) -> np.ndarray:
    k = np.sqrt(model.eta / 2)
    new = rho + _drift(model, rho) * dt
    for j, ch in enumerate(model.channels):
        c = ch.update.matrix
        cr = c @ rho
        h = cr + cr.conj().transpose(0, 2, 1) - _expect_sum(c, rho)[:, None, None] * rho
        new += k * dw[:, j, None, None] * h
    return new


def _measure_kraus(model: SMEModel, rho: np.ndarray, dy: np.ndarray, dt: float) -> np.ndarray:
    """``M rho M^dag + dt * (unmonitored jumps)``, unnormalized.

    ``M = 1 + K dt + sqrt(eta/2) sum_k c_k dY_k`` with ``dY`` the current
    increments.  The monitored part ``(eta/2) sum_kl W_kl c_k rho c_l^dag``
    is generated by ``M`` to first order and removed from the jump term.
    """
    K, jumps = model.operator_form()
    k = np.sqrt(model.eta / 2)
    d = model.dim
    M = np.eye(d) + K * dt + k * sum(dy[:, j, None, None] * ch.update.matrix
                                     for j, ch in enumerate(model.channels))
    new = M @ rho @ M.conj().transpose(0, 2, 1)
    for r, A in jumps:
        new += (r * dt) * (A @ rho @ A.conj().T)
    W = model.cov.matrix
    for a, ca in enumerate(model.channels):
        for b, cb in enumerate(model.channels):
            if W[a, b] != 0:
                new -= (0.5 * model.eta * W[a, b] * dt) * (ca.update.matrix @ rho @ cb.update.matrix.conj().T)
    return new


SCHEMES = ("kraus", "euler")


def _measure(model: SMEModel, rho: np.ndarray, dw: np.ndarray, dt: float, scheme: str = "kraus",
             signals: np.ndarray | None = None) -> np.ndarray:
    if scheme == "euler":
        return _measure_euler(model, rho, dw, dt)
    if scheme == "kraus":
        sig = _signals(model, rho) if signals is None else signals
        return _measure_kraus(model, rho, sig * dt + dw, dt)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def _kick(model: SMEModel, rho: np.ndarray, Fp: np.ndarray, Fm: np.ndarray, charge: np.ndarray) -> np.ndarray:
    """Apply ``exp(-i (F+ q+ + F- q-) / sqrt(2 eta))`` with ``q = I dt``."""
    scale = 1.0 / np.sqrt(2 * model.eta)
    G = scale * (charge[:, 0, None, None] * Fp + charge[:, 1, None, None] * Fm)
    w, v = np.linalg.eigh(G)
    U = (v * np.exp(-1j * w)[:, None, :]) @ v.conj().transpose(0, 2, 1)
    return U @ rho @ U.conj().transpose(0, 2, 1)


def step_conditional(model: SMEModel, rho, increments, dt: float, scheme: str = "kraus"):
    """One Euler-Maruyama step of the conditional master equation.

    ``rho`` may be a :class:`DensityOp`, a ``(d, d)`` array or a batch
    ``(B, d, d)``; ``increments`` holds ``(dW+, dW-)`` per state.  The
    result has the same form as ``rho`` and is renormalized.

    ``scheme="kraus"`` (default) writes the Euler step as
    ``M rho M^dag`` plus the unmonitored jumps, which keeps states positive;
    it agrees with the plain Euler-Maruyama update ``scheme="euler"`` to
    first order in ``dt``.  Plain Euler-Maruyama can leave the PSD cone by
    ``O(dt)``; such states are projected back (and logged), which biases
    ensemble means, so it is kept for comparison only.
    """
    batch, single = _as_batch(rho)
    dw = _as_incr(increments, batch.shape[0])
    out = _clean(_measure(model, batch, dw, dt, scheme))
    return _wrap(out, rho, single, model)


def photocurrent_sample(model: SMEModel, rho, increments, dt: float) -> np.ndarray:
    """Currents ``(I+, I-) = signal + dW/dt`` for the pre-step state(s)."""
    batch, single = _as_batch(rho)
    dw = _as_incr(increments, batch.shape[0])
    cur = _signals(model, batch) + dw / dt
    return cur[0] if single else cur


def step_with_feedback(model: SMEModel, rho, F_plus: Operator, F_minus: Operator, increments, dt: float,
                       scheme: str = "kraus"):
    """Measurement step followed by the current-driven feedback unitary.

    Both use the same increments, which enforces the ordering in which
    feedback acts after the measurement back-action.
    """
    for F in (F_plus, F_minus):
        if not F.is_hermitian(1e-12):
            raise ValueError("feedback generators must be Hermitian")
    batch, single = _as_batch(rho)
    dw = _as_incr(increments, batch.shape[0])
    sig = _signals(model, batch)
    charge = sig * dt + dw
    out = _measure(model, batch, dw, dt, scheme, sig)
    out = _kick(model, out, F_plus.matrix, F_minus.matrix, charge)
    out = _clean(out)
    return _wrap(out, rho, single, model)


def _wrap(out, rho, single, model):
    if single:
        out = out[0]
        if isinstance(rho, DensityOp):
            return DensityOp(model.layout, out, validate=False)
    return out


# --- trajectories --------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryConfig:
    """Time grid and seed of a run; snapshots every ``stride`` steps."""

    dt: float
    n_steps: int
    seed: int
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.stride < 1 or (self.n_steps and self.n_steps % self.stride):
            raise ValueError(f"stride {self.stride} must divide n_steps {self.n_steps}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def total_time(self) -> float:
        return self.dt * self.n_steps

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.dt * np.arange(0, self.n_steps + 1, self.stride)


class PhotocurrentRecord(NamedTuple):
    """Currents over each step ``[t, t + dt)``; ``times`` are step starts."""

    times: np.ndarray
    I_plus: np.ndarray
    I_minus: np.ndarray


class Trajectory(NamedTuple):
    times: np.ndarray
    states: list
    record: PhotocurrentRecord
    config: TrajectoryConfig
    index: int = 0


class EnsembleRun(NamedTuple):
    """Snapshots of many trajectories: ``states[i, k]`` is trajectory ``i`` at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray
    currents: np.ndarray | None
    config: TrajectoryConfig
    indices: np.ndarray
    projections: int


_CHUNK = 512


def _run_batch(model: SMEModel, feedback: FeedbackSpec | None, cfg: TrajectoryConfig, rho0: np.ndarray,
               indices: Sequence[int], substeps: int = 1, record: bool = False, scheme: str = "kraus"):
    """Integrate trajectories ``indices`` together.

    Increments are drawn at resolution ``dt/substeps`` and summed, so that a
    run at ``dt`` and one at ``dt/substeps`` share their noise path.
    """
    B = len(indices)
    d = model.dim
    rngs = [trajectory_rng(cfg.seed, i) for i in indices]
    chol = model.cov.cholesky()
    rho = np.broadcast_to(rho0, (B, d, d)).astype(complex)
    n_snap = cfg.n_steps // cfg.stride + 1
    snaps = np.empty((B, n_snap, d, d), complex)
    snaps[:, 0] = rho
    cur = np.empty((B, cfg.n_steps, 2)) if record else None
    Fp = Fm = None
    if feedback is not None and not feedback.is_off:
        Fp, Fm = feedback.F_plus.matrix, feedback.F_minus.matrix
    fine = cfg.dt / substeps
    events: list = []
    step = 0
    while step < cfg.n_steps:
        m = min(_CHUNK, cfg.n_steps - step)
        z = np.stack([r.standard_normal((m * substeps, 2)) for r in rngs])
        dw = np.sqrt(fine) * z @ chol.T
        dw = dw.reshape(B, m, substeps, 2).sum(axis=2)
        for k in range(m):
            inc = dw[:, k]
            sig = _signals(model, rho)
            charge = sig * cfg.dt + inc
            if record:
                cur[:, step] = charge / cfg.dt
            new = _measure(model, rho, inc, cfg.dt, scheme, sig)
            if Fp is not None:
                new = _kick(model, new, Fp, Fm, charge)
            rho = _clean(new, events)
            step += 1
            if step % cfg.stride == 0:
                snaps[:, step // cfg.stride] = rho
    return snaps, cur, sum(events)


def _batch_task(args):
    return _run_batch(*args)


def run_trajectory(model: SMEModel, feedback: FeedbackSpec | None, cfg: TrajectoryConfig, rho0: DensityOp,
                   index: int = 0, scheme: str = "kraus") -> Trajectory:
    """Single seeded trajectory with its photocurrent record."""
    if rho0.layout != model.layout:
        raise LayoutError("initial state does not match the model layout")
    snaps, cur, _ = _run_batch(model, feedback, cfg, rho0.matrix, [index], record=True,
                                scheme=scheme)
    times = cfg.snapshot_times
    states = [DensityOp(model.layout, s, validate=False) for s in snaps[0]]
    t_rec = cfg.dt * np.arange(cfg.n_steps)
    rec = PhotocurrentRecord(t_rec, cur[0, :, 0].copy(), cur[0, :, 1].copy())
    return Trajectory(times, states, rec, cfg, index)


def run_ensemble(model: SMEModel, feedback: FeedbackSpec | None, cfg: TrajectoryConfig, rho0: DensityOp,
                 n_traj: int, workers: int | None = 1, batch_size: int = 500, substeps: int = 1,
                 record: bool = False, first_index: int = 0, scheme: str = "kraus") -> EnsembleRun:
    """Trajectories ``first_index .. first_index + n_traj - 1`` under ``cfg``.

    Batches of ``batch_size`` trajectories are farmed to ``workers``
    processes and merged by index, so the result is independent of the
    worker count.
    """
    if rho0.layout != model.layout:
        raise LayoutError("initial state does not match the model layout")
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    idx = np.arange(first_index, first_index + n_traj)
    tasks = [
        (model, feedback, cfg, rho0.matrix, idx[i:i + batch_size].tolist(), substeps, record, scheme)
        for i in range(0, n_traj, batch_size)
    ]
    parts = ordered_map(_batch_task, tasks, workers)
    states = np.concatenate([p[0] for p in parts])
    cur = np.concatenate([p[1] for p in parts]) if record else None
    return EnsembleRun(cfg.snapshot_times, states, cur, cfg, idx, int(sum(p[2] for p in parts)))


class EnsembleAverage(NamedTuple):
    """Mean state per snapshot time with a trace-distance standard error.

    ``se[k] = sqrt(sum_i T(rho_i, mean)^2 / (n (n - 1)))`` where ``T`` is the
    trace distance.
    """

    times: np.ndarray
    mean: list
    se: np.ndarray


def _trace_norms(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + a.conj().swapaxes(-1, -2))
    return np.sum(np.abs(np.linalg.eigvalsh(a)), axis=-1)


def ensemble_average(run: EnsembleRun | Sequence[Trajectory], layout=None) -> EnsembleAverage:
    """Pointwise mean of trajectory snapshots and its standard error."""
    if isinstance(run, EnsembleRun):
        states, times = run.states, run.times
        layout = layout or _layout_of(states)
    else:
        trajs = list(run)
        if len(trajs) < 2:
            raise ValueError("need at least two trajectories")
        cfg = trajs[0].config
        if any(t.config != cfg for t in trajs):
            raise ValueError("trajectories were produced with different configurations")
        times = trajs[0].times
        layout = trajs[0].states[0].layout
        states = np.stack([np.stack([s.matrix for s in t.states]) for t in trajs])
    n = states.shape[0]
    if n < 2:
        raise ValueError("need at least two trajectories")
    mean = states.mean(axis=0)
    dist = 0.5 * _trace_norms(states - mean[None])
    se = np.sqrt(np.sum(dist ** 2, axis=0) / (n * (n - 1)))
    means = [DensityOp(layout, m, validate=False) for m in mean]
    return EnsembleAverage(np.asarray(times), means, se)


def _layout_of(states: np.ndarray) -> SpaceLayout:
    return SpaceLayout((states.shape[-1],))


def suggest_dt(model: SMEModel, feedback: FeedbackSpec | None = None, target: float = 1e-2) -> float:
    """Step with ``(rate scale) * dt <= target``.

    The rate scale is the largest absolute row sum of the unconditional
    (feedback) Liouvillian, an upper bound on its spectral radius.
    """
    L = model.liouvillian() if feedback is None else model.feedback_liouvillian(feedback)
    rate = float(np.max(np.sum(np.abs(L.matrix), axis=1)))
    return target / rate if rate > 0 else target


# --- export --------------------------------------------------------------


def trajectory_rows(traj: Trajectory, observables: dict[str, Operator] | None = None):
    """Rows ``time, I_plus, I_minus, <obs>...`` aligned with the record.

    Observables are evaluated on the snapshot at the start of each step
    when a snapshot exists there, otherwise left blank.
    """
    observables = observables or {}
    cfg = traj.config
    header = ["time", "I_plus", "I_minus"] + list(observables)
    rows = []
    for k in range(cfg.n_steps):
        row = [repr(float(traj.record.times[k])), repr(float(traj.record.I_plus[k])),
               repr(float(traj.record.I_minus[k]))]
        if k % cfg.stride == 0:
            rho = traj.states[k // cfg.stride]
            row += [repr(float(np.real(rho.expect(o)))) for o in observables.values()]
        else:
            row += [""] * len(observables)
        rows.append(row)
    return header, rows


def trajectory_csv(traj: Trajectory, observables: dict[str, Operator] | None = None,
                   comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    header, rows = trajectory_rows(traj, observables)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
