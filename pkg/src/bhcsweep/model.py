"""Model parameters, unit conventions and the sweep protocol.

Units: the hopping scale K fixes energy and time (K=1 by default). The
dimensionless interaction and detuning are

    u = sqrt(2) N U / K,      v = sqrt(2) V / K,

and the interaction enters every dynamics engine through g = N*U.
Sweep rates are quoted as (pi/2) * 10**(-k) via the ``rate_exponent`` k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SQRT2 = math.sqrt(2.0)
THETA_END = math.pi / 2.0

#: config keys understood by :func:`resolve_params` (flat key=value files)
CONFIG_KEYS = ("M", "N", "U", "V", "K", "u", "v", "rate_exponent")


@dataclass(frozen=True)
class ModelParams:
    """Bose-Hubbard chain parameters.

    M: site count, N: particle number, U: on-site interaction,
    V: middle-site detuning, K: hopping scale (sets the units).
    """

    M: int
    N: int
    U: float = 0.0
    V: float = 0.0
    K: float = 1.0

    def __post_init__(self):
        if self.M < 2:
            raise ParameterError(f"need at least 2 sites, got M={self.M}")
        if self.N < 1:
            raise ParameterError(f"need at least 1 particle, got N={self.N}")
        if not self.K > 0:
            raise ParameterError(f"hopping scale must be positive, got K={self.K}")

    @property
    def g(self) -> float:
        """Mean-field interaction scale g = N*U."""
        return self.N * self.U

    @property
    def mid_site(self) -> int:
        """0-based index of the detuned site."""
        return self.M // 2

    @classmethod
    def from_dimensionless(cls, M: int, N: int, u: float = 0.0, v: float = 0.0,
                           K: float = 1.0) -> "ModelParams":
        """Construct from (u, v); U and V are derived, never stored twice."""
        if not K > 0:
            raise ParameterError(f"hopping scale must be positive, got K={K}")
        return cls(M=M, N=N, U=u * K / (SQRT2 * N), V=v * K / SQRT2, K=K)

    def site_potentials(self) -> np.ndarray:
        pot = np.zeros(self.M)
        pot[self.mid_site] = self.V
        return pot


def derive_dimensionless(params: ModelParams) -> tuple[float, float]:
    """Return (u, v) for the given parameters."""
    if not params.K > 0:
        raise ParameterError(f"hopping scale must be positive, got K={params.K}")
    u = SQRT2 * params.N * params.U / params.K
    v = SQRT2 * params.V / params.K
    return u, v


def hopping_profile(theta: float, params: ModelParams) -> np.ndarray:
    """Bond couplings Omega_j, j = 1..M-1: K sin(theta) on odd bonds,
    K cos(theta) on even bonds (1-based bond index)."""
    bonds = np.arange(params.M - 1)
    return np.where(bonds % 2 == 0,
                    params.K * np.sin(theta),
                    params.K * np.cos(theta))


def single_particle_hamiltonian(theta: float, params: ModelParams) -> np.ndarray:
    """Dense M x M orbital Hamiltonian: detuned middle site, -Omega_j/2 bonds."""
    h = np.diag(params.site_potentials()).astype(float)
    om = hopping_profile(theta, params)
    idx = np.arange(params.M - 1)
    h[idx, idx + 1] = -om / 2.0
    h[idx + 1, idx] = -om / 2.0
    return h


@dataclass(frozen=True)
class SweepProtocol:
    """Linear sweep theta(t) = rate*t, clamped to [0, pi/2]."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ParameterError(f"sweep rate must be positive, got {self.rate}")

    @classmethod
    def from_exponent(cls, k: float) -> "SweepProtocol":
        """rate = (pi/2) * 10**(-k), the convention used for all reported rates."""
        return cls(rate=THETA_END * 10.0 ** (-k))

    @property
    def t_total(self) -> float:
        return THETA_END / self.rate

    @property
    def rate_exponent(self) -> float:
        return -math.log10(self.rate / THETA_END)

    def theta_of(self, t):
        return np.clip(self.rate * np.asarray(t, dtype=float), 0.0, THETA_END)


def dark_state(theta: float, M: int) -> np.ndarray:
    """Zero-hopping-energy orbital for an odd-M chain: support on odd sites,
    (cos, 0, -sin) for M=3, with alternating-sign powers for longer chains."""
    if M % 2 == 0:
        raise ParameterError("the dark state is defined for odd M only")
    half = (M + 1) // 2
    k = np.arange(half)
    comps = (-np.sin(theta)) ** k * np.cos(theta) ** (half - 1 - k)
    psi = np.zeros(M)
    psi[::2] = comps
    return psi / np.linalg.norm(psi)


def load_config(path) -> dict:
    """Read a flat key-value config file (``key = value``, '#' comments)."""
    values: dict[str, float] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            elif ":" in line:
                key, _, val = line.partition(":")
            else:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ParameterError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = float(val.strip())
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: bad number for {key}: {val!r}") from exc
    return values


def resolve_params(file_values: dict | None = None,
                   overrides: dict | None = None) -> tuple[ModelParams, dict]:
    """Merge config-file values and CLI overrides into ModelParams.

    Overrides win over file values. When both (U, V) and (u, v) are present
    after merging, the dimensionless pair wins and (U, V) are derived.
    Returns the params plus a dict of leftover resolved settings
    (currently only ``rate_exponent``).
    """
    merged: dict[str, float] = {}
    for src in (file_values or {}), (overrides or {}):
        for key, val in src.items():
            if val is not None:
                merged[key] = val
    for key in merged:
        if key not in CONFIG_KEYS:
            raise ParameterError(f"unknown parameter {key!r}")
    if "M" not in merged or "N" not in merged:
        raise ParameterError("both M and N are required")
    M, N = int(merged["M"]), int(merged["N"])
    K = float(merged.get("K", 1.0))
    if "u" in merged or "v" in merged:
        u = float(merged.get("u", 0.0))
        v = float(merged.get("v", 0.0))
        params = ModelParams.from_dimensionless(M=M, N=N, u=u, v=v, K=K)
    else:
        params = ModelParams(M=M, N=N, U=float(merged.get("U", 0.0)),
                             V=float(merged.get("V", 0.0)), K=K)
    extra = {}
    if "rate_exponent" in merged:
        extra["rate_exponent"] = float(merged["rate_exponent"])
    return params, extra
