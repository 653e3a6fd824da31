"""Dynamic (N, K) adaptation from observed stragglers and Byzantine workers."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .coding import CodingScheme
from .errors import SchemeCollapse

MDS = "mds"
LAGRANGE = "lagrange"


@dataclass(frozen=True)
class EpochObservation:
    N_t: int
    K_t: int
    S_t: int = 0
    M_t: int = 0
    T_t: int = 0

    def __post_init__(self):
        if min(self.S_t, self.M_t, self.T_t) < 0:
            raise ValueError("observed counts must be non-negative")

    def check_budget(self, scheme: CodingScheme):
        """Raise if the observation exceeds the scheme's S/M/T budget."""
        if self.S_t > scheme.S or self.M_t > scheme.M or self.T_t > scheme.T:
            raise ValueError(
                f"observed (S,M,T)=({self.S_t},{self.M_t},{self.T_t}) exceeds "
                f"budget ({scheme.S},{scheme.M},{scheme.T})")


@dataclass(frozen=True)
class SchemeTransition:
    old: CodingScheme
    new: CodingScheme
    slack: int
    re_encode_required: bool
    S_t: int = 0
    M_t: int = 0


def slack_mds(obs: EpochObservation) -> int:
    return obs.N_t - obs.M_t - obs.S_t - obs.K_t - obs.T_t


def slack_lagrange(obs: EpochObservation, deg_f: int) -> int:
    return obs.N_t - obs.M_t - obs.S_t - (obs.K_t + obs.T_t - 1) * deg_f


def next_scheme(old: CodingScheme, obs: EpochObservation, mode: str = MDS) -> SchemeTransition:
    """Remove detected Byzantines from N; shrink K when the slack is negative.

    In Lagrange mode K moves by ``floor(A / deg_f)`` (toward -inf), where A
    counts spare workers beyond the full decode threshold; that is the
    reported slack minus one, which makes the Lagrange rule coincide with
    the MDS rule when ``deg_f == 1, T == 0`` and keeps the new scheme
    decodable by the surviving non-stragglers. The returned scheme's S/M
    budgets are recomputed: M shrinks by the Byzantines removed and S takes
    whatever slack remains.
    """
    if mode == MDS:
        A = slack_mds(obs)
        spare = A
        dK = A
    elif mode == LAGRANGE:
        A = slack_lagrange(obs, old.deg_f)
        spare = A - 1
        dK = spare // old.deg_f
    else:
        raise ValueError(f"unknown adaptation mode {mode!r}")
    N_new = obs.N_t - obs.M_t
    K_new = obs.K_t if spare >= 0 else obs.K_t + dK
    if K_new < 1:
        raise SchemeCollapse(f"slack {A} would leave K={K_new} at N={N_new}")
    if K_new + old.T > N_new:
        raise SchemeCollapse(f"K+T={K_new + old.T} exceeds the {N_new} remaining workers")
    M_new = max(old.M - obs.M_t, 0)
    S_new = max(N_new - ((K_new + old.T - 1) * old.deg_f + 1) - M_new, 0)
    new = replace(old, N=N_new, K=K_new, S=S_new, M=M_new)
    if new.N == old.N and new.K == old.K:
        new = old
    return SchemeTransition(old, new, A, new.N != old.N or new.K != old.K, obs.S_t, obs.M_t)
