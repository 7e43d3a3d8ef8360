"""Scenario types, random instance generation and exact per-draw SINR/MSE.

Array conventions
-----------------
Interference channel: ``h_hat[k, j]`` is the estimated channel from
transmitter ``j`` to receiver ``k`` (shape ``(K, K, M)``), ``g[j]`` the unit
beam direction of transmitter ``j`` (shape ``(K, M)``).

Broadcast channel: ``H_hat`` is ``(K, M)``, ``G_mat`` its pseudoinverse
``(M, K)`` and ``Lambda[k]`` the diagonal of the error covariance of row
``k`` of the error matrix.

Realizations may carry any number of leading batch axes; every function
that consumes them broadcasts over those axes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateChannelError, InvalidGeometryError, InvalidPowerError
from .rng import complex_normal, substream

REFERENCE_DISTANCE = 200.0
PATHLOSS_EXPONENT = 3.5
SHADOWING_DB = 8.0


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Geometry:
    """Transmitter and receiver planar coordinates in metres."""

    tx: np.ndarray
    rx: np.ndarray
    layout: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tx", _frozen(self.tx, float).reshape(-1, 2))
        object.__setattr__(self, "rx", _frozen(self.rx, float).reshape(-1, 2))
        if self.tx.shape != self.rx.shape:
            raise InvalidGeometryError("tx and rx must list the same number of nodes")

    @property
    def K(self) -> int:
        return self.tx.shape[0]

    def distances(self) -> np.ndarray:
        """``d[k, j]``: distance from transmitter j to receiver k."""
        diff = self.rx[:, None, :] - self.tx[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        if np.any(d <= 0):
            raise InvalidGeometryError("all transmitter-receiver distances must be positive")
        return d


def paper_layout(K: int, link: float = 200.0, spacing: float = 400.0) -> Geometry:
    """Parallel links on a line: pair k sits at x = k*spacing, receivers `link` m away."""
    x = spacing * np.arange(K, dtype=float)
    tx = np.column_stack([x, np.zeros(K)])
    rx = np.column_stack([x, np.full(K, float(link))])
    return Geometry(tx, rx, layout="line")


@dataclass(frozen=True)
class InterferenceScenario:
    K: int
    M: int
    h_hat: np.ndarray
    sigma2: np.ndarray
    eta2: np.ndarray
    g: np.ndarray
    alpha: np.ndarray
    eps: np.ndarray
    p_bar: Optional[np.ndarray] = None
    p_bar_tot: Optional[float] = None
    seed: Optional[int] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        K, M = int(self.K), int(self.M)
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("h_hat", _frozen(self.h_hat, complex).reshape(K, K, M))
        set_("sigma2", _frozen(np.broadcast_to(np.asarray(self.sigma2, float), (K, K))))
        set_("eta2", _frozen(np.broadcast_to(np.asarray(self.eta2, float), (K,))))
        set_("g", _frozen(self.g, complex).reshape(K, M))
        set_("alpha", _frozen(np.broadcast_to(np.asarray(self.alpha, float), (K,))))
        set_("eps", _frozen(np.broadcast_to(np.asarray(self.eps, float), (K,))))
        if self.p_bar is not None:
            set_("p_bar", _frozen(np.broadcast_to(np.asarray(self.p_bar, float), (K,))))
        # sigma2 == 0 is accepted so the deterministic limit can be exercised.
        if np.any(self.sigma2 < 0) or np.any(self.eta2 <= 0):
            raise ValueError("error variances must be >= 0 and noise variances > 0")
        if np.any(self.eps <= 0) or np.any(self.eps >= 1):
            raise ValueError("outage tolerances must lie strictly inside (0, 1)")
        if np.any(np.abs(np.linalg.norm(self.g, axis=1) - 1.0) > 1e-12):
            raise ValueError("beam directions must have unit norm")

    def replace(self, **changes) -> "InterferenceScenario":
        return dataclasses.replace(self, **changes)

    def direct_gains(self) -> np.ndarray:
        """``|h_hat[k, k]^H g[k]|^2`` for every link."""
        idx = np.arange(self.K)
        return np.abs(np.einsum("km,km->k", self.h_hat[idx, idx].conj(), self.g)) ** 2


@dataclass(frozen=True)
class BroadcastScenario:
    K: int
    M: int
    H_hat: np.ndarray
    Lambda: np.ndarray
    eta2: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    G_mat: np.ndarray = field(default=None)
    seed: Optional[int] = None

    def __post_init__(self):
        K, M = int(self.K), int(self.M)
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("H_hat", _frozen(self.H_hat, complex).reshape(K, M))
        set_("Lambda", _frozen(np.broadcast_to(np.asarray(self.Lambda, float), (K, M))))
        set_("eta2", _frozen(np.broadcast_to(np.asarray(self.eta2, float), (K,))))
        set_("mu", _frozen(np.broadcast_to(np.asarray(self.mu, float), (K,))))
        set_("phi", _frozen(np.broadcast_to(np.asarray(self.phi, float), (K,))))
        if self.G_mat is None:
            set_("G_mat", _frozen(np.linalg.pinv(self.H_hat)))
        else:
            set_("G_mat", _frozen(self.G_mat, complex).reshape(M, K))
        if np.linalg.matrix_rank(self.H_hat) < K:
            raise DegenerateChannelError("estimated channel matrix must have full row rank")
        if np.any(self.Lambda < 0) or np.any(self.eta2 <= 0) or np.any(self.mu <= 0):
            raise ValueError("Lambda must be >= 0, noise and MSE targets > 0")
        if np.any(self.phi <= 0) or np.any(self.phi >= 1):
            raise ValueError("satisfaction probabilities must lie strictly inside (0, 1)")

    def replace(self, **changes) -> "BroadcastScenario":
        return dataclasses.replace(self, **changes)

    def column_energy(self) -> np.ndarray:
        """``||G[:, k]||^2``; the power objective is linear in q with these weights."""
        return np.sum(np.abs(self.G_mat) ** 2, axis=0)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw (or a batch of draws) of the true channels.

    ``h`` holds the interference-channel vectors, ``Delta`` the broadcast
    error matrix; exactly one of them is set.
    """

    seed: int
    h: Optional[np.ndarray] = None
    Delta: Optional[np.ndarray] = None


def generate_interference_scenario(
    K,
    M,
    kappa,
    eps,
    alpha,
    geometry: Optional[Geometry] = None,
    seed: int = 0,
    noise=1.0,
    p_bar=None,
    p_bar_tot=None,
) -> InterferenceScenario:
    """Draw a random MISO interference-channel instance.

    Estimates follow ``(200/d)^3.5 * l * hbar`` with 8 dB log-normal
    shadowing ``l`` and Rayleigh ``hbar``. The error standard deviation of
    every component is ``kappa`` times the estimate's standard deviation
    given the realized distance and shadowing. Beam directions are matched
    to the direct-link estimates.
    """
    if K < 1 or M < 1:
        raise ValueError("K and M must be positive")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    geometry = paper_layout(K) if geometry is None else geometry
    if geometry.K != K:
        raise InvalidGeometryError(f"geometry describes {geometry.K} links, expected {K}")
    d = geometry.distances()

    rng = substream(seed, "scenario/interference")
    shadow_db = rng.normal(0.0, SHADOWING_DB, size=(K, K))
    amplitude = (REFERENCE_DISTANCE / d) ** PATHLOSS_EXPONENT * 10.0 ** (shadow_db / 10.0)
    hbar = complex_normal(rng, (K, K, M))
    h_hat = amplitude[:, :, None] * hbar

    estimate_var = amplitude**2
    sigma2 = kappa**2 * estimate_var

    scenario = InterferenceScenario(
        K=K,
        M=M,
        h_hat=h_hat,
        sigma2=sigma2,
        eta2=noise,
        g=_matched_directions(h_hat),
        alpha=alpha,
        eps=eps,
        p_bar=p_bar,
        p_bar_tot=p_bar_tot,
        seed=seed,
        kappa=kappa,
    )
    return scenario


def _matched_directions(h_hat: np.ndarray) -> np.ndarray:
    K = h_hat.shape[0]
    direct = h_hat[np.arange(K), np.arange(K)]
    norms = np.linalg.norm(direct, axis=1)
    if np.any(norms == 0):
        raise DegenerateChannelError("direct-link channel estimate is the zero vector")
    return direct / norms[:, None]


def make_channel_matched_beamformers(scenario: InterferenceScenario) -> InterferenceScenario:
    return scenario.replace(g=_matched_directions(scenario.h_hat))


def generate_broadcast_scenario(K, M, sigma2, mu, phi, seed: int = 0, noise=1.0) -> BroadcastScenario:
    """I.i.d. unit-variance Rayleigh estimates with row-wise error variance ``sigma2``."""
    if M < K:
        raise ValueError("zero-forcing needs at least as many antennas as users")
    rng = substream(seed, "scenario/broadcast")
    H_hat = complex_normal(rng, (K, M))
    Lambda = np.broadcast_to(np.asarray(sigma2, float).reshape(-1, 1), (K, M))
    return BroadcastScenario(K=K, M=M, H_hat=H_hat, Lambda=Lambda, eta2=noise, mu=mu, phi=phi, seed=seed)


def realize_channels(scenario: InterferenceScenario, seed: int, size=None, purpose="realize") -> ChannelRealization:
    """True channels ``h = h_hat + delta`` with i.i.d. CN(0, sigma2[k, j]) components."""
    rng = substream(seed, f"{purpose}/interference")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    var = scenario.sigma2[:, :, None]
    delta = complex_normal(rng, shape + scenario.h_hat.shape, var)
    return ChannelRealization(seed=seed, h=scenario.h_hat + delta)


def realize_errors(bscenario: BroadcastScenario, seed: int, size=None, purpose="realize") -> ChannelRealization:
    """Broadcast error matrix with independent CN(0, Lambda[k, m]) entries."""
    rng = substream(seed, f"{purpose}/broadcast")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    delta = complex_normal(rng, shape + bscenario.Lambda.shape, bscenario.Lambda)
    return ChannelRealization(seed=seed, Delta=delta)


def link_gains(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``|h[..., k, j]^H g[j]|^2`` for channel arrays with leading batch axes."""
    return np.abs(np.einsum("...kjm,jm->...kj", h.conj(), g)) ** 2


def compute_sinr(realization, scenario: InterferenceScenario, p) -> np.ndarray:
    h = realization.h if isinstance(realization, ChannelRealization) else np.asarray(realization)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise InvalidPowerError("powers must be nonnegative")
    gains = link_gains(h, scenario.g)
    received = gains * p
    K = scenario.K
    signal = received[..., np.arange(K), np.arange(K)]
    # Summing the off-diagonal terms directly avoids cancellation against a dominant signal.
    interference = np.where(np.eye(K, dtype=bool), 0.0, received).sum(axis=-1)
    return signal / (scenario.eta2 + interference)


def compute_mse(realization, bscenario: BroadcastScenario, q) -> np.ndarray:
    """Per-user MSE ``(Delta[k] G Q G^H Delta[k]^H + eta2_k) / q_k``."""
    Delta = realization.Delta if isinstance(realization, ChannelRealization) else np.asarray(realization)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise InvalidPowerError("power allocation q must be strictly positive")
    # Delta[k] G Q G^H Delta[k]^H = sum_j q_j |Delta[k] G[:, j]|^2
    leak = np.abs(Delta @ bscenario.G_mat) ** 2
    return (leak @ q + bscenario.eta2) / q
