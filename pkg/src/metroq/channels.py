"""Parametrized qubit channels K_i(phi) = K_i^noise U_z(phi) and their N-fold Choi data."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .wirealg import LabeledOperator, Wire, RANK_CUTOFF

SZ = np.diag([1.0, -1.0]).astype(complex)


class ChannelError(ValueError):
    """Invalid channel parameters or configuration."""


def uz(phi, t):
    return np.diag(np.exp(-0.5j * phi * t * np.array([1.0, -1.0])))


@dataclass(frozen=True)
class ParamChannel:
    """Kraus family phi -> [K_i(phi)] with analytic derivatives.

    Channels act as rho -> sum_i K_i rho K_i^dagger.
    """

    d_in: int
    d_out: int
    s: int
    kraus_fn: Callable
    dkraus_fn: Callable
    meta: dict = field(default_factory=dict)

    def kraus(self, phi):
        return [np.asarray(k, dtype=complex) for k in self.kraus_fn(phi)]

    def dkraus(self, phi):
        return [np.asarray(k, dtype=complex) for k in self.dkraus_fn(phi)]

    def apply(self, rho, phi):
        return sum(k @ rho @ k.conj().T for k in self.kraus(phi))

    def choi(self, phi) -> LabeledOperator:
        v = kraus_columns(self.kraus(phi))
        return LabeledOperator([Wire(1, self.d_in), Wire(2, self.d_out)], v @ v.conj().T)

    def check(self, phi=0.37, fd_step=1e-6, tol=1e-10):
        ks = self.kraus(phi)
        acc = sum(k.conj().T @ k for k in ks)
        err = np.abs(acc - np.eye(self.d_in)).max()
        if err > tol:
            raise ChannelError(f"not trace preserving: |sum K^dag K - I| = {err:.2e}")
        fd = [(a - b) / (2 * fd_step) for a, b in zip(self.kraus(phi + fd_step), self.kraus(phi - fd_step))]
        dk = self.dkraus(phi)
        scale = max(max(np.abs(d).max() for d in dk), 1.0)
        gap = max(np.abs(a - b).max() for a, b in zip(fd, dk))
        if gap > 1e-5 * scale:
            raise ChannelError(f"dkraus disagrees with finite differences ({gap:.2e})")
        return self


def encoded(noise, t, meta):
    """Compose fixed noise Kraus operators after the phase rotation U_z(phi)."""
    noise = [np.asarray(k, dtype=complex) for k in noise]
    gen = -0.5j * t * SZ
    d_out, d_in = noise[0].shape
    if d_in != 2:
        raise ChannelError("the phase rotation acts on a qubit input")

    def kraus(phi):
        u = uz(phi, t)
        return [k @ u for k in noise]

    def dkraus(phi):
        u = uz(phi, t)
        return [k @ gen @ u for k in noise]

    return ParamChannel(d_in, d_out, len(noise), kraus, dkraus, dict(meta, t=t)).check()


def make_ad_channel(p, t=1.0):
    """Amplitude damping with decay p after a Z rotation."""
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"decay p={p} outside [0, 1]")
    k1 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - p)]])
    k2 = np.array([[0.0, np.sqrt(p)], [0.0, 0.0]])
    return encoded([k1, k2], t, {"family": "ad", "p": p})


def make_swap_channel(g_tau, t=1.0):
    """Partial SWAP with an environment qubit in |0>, coupling angle g*tau."""
    k1 = np.array([[np.exp(-1j * g_tau), 0.0], [0.0, np.cos(g_tau)]])
    k2 = np.array([[0.0, -1j * np.sin(g_tau)], [0.0, 0.0]])
    return encoded([k1, k2], t, {"family": "swap", "g_tau": g_tau})


def choi_to_kraus(choi, d_in, d_out, cutoff=RANK_CUTOFF):
    """Kraus operators from a Choi matrix on (in, out), largest weight first."""
    w, v = np.linalg.eigh(0.5 * (choi + choi.conj().T))
    top = w.max()
    ks = []
    for k in np.argsort(w)[::-1]:
        if w[k] <= cutoff * top:
            break
        # column index is n_in * d_out + m_out and holds K[m, n]
        ks.append(np.sqrt(w[k]) * v[:, k].reshape(d_in, d_out).T)
    return ks


def sample_bruzda_noise(rng, d=2, rank=2, max_tries=100):
    """Random CPTP noise: normalized Ginibre Choi matrix of the given rank."""
    for _ in range(max_tries):
        g = (rng.standard_normal((d * d, rank)) + 1j * rng.standard_normal((d * d, rank))) / np.sqrt(2)
        w = g @ g.conj().T
        # wires ordered (in, out): trace out the output
        y = np.einsum("iaja->ij", w.reshape(d, d, d, d))
        ev, evec = np.linalg.eigh(y)
        if ev.min() <= RANK_CUTOFF * ev.max():
            continue
        yis = (evec / np.sqrt(ev)) @ evec.conj().T
        m = np.kron(yis, np.eye(d))
        choi = m @ w @ m
        ks = choi_to_kraus(choi, d, d)
        if len(ks) == rank:
            return ks
    raise ChannelError("could not sample a full-rank noise channel")


def sample_bruzda_channel(seed, rank=2, t=1.0):
    rng = np.random.default_rng(seed)
    ks = sample_bruzda_noise(rng, 2, rank)
    return encoded(ks, t, {"family": "bruzda", "seed": seed, "rank": rank})


def make_kraus_channel(noise, t=1.0):
    return encoded(noise, t, {"family": "kraus"})


def channel_from_config(cfg):
    """Build a channel from a config dict (see README for the schema)."""
    if isinstance(cfg, str):
        cfg = json.loads(cfg)
    fam = cfg.get("family")
    t = float(cfg.get("t", 1.0))
    if fam == "ad":
        if "p" not in cfg:
            raise ChannelError("field 'p' is required for family 'ad'")
        return make_ad_channel(float(cfg["p"]), t)
    if fam == "swap":
        if "g_tau" not in cfg:
            raise ChannelError("field 'g_tau' is required for family 'swap'")
        return make_swap_channel(float(cfg["g_tau"]), t)
    if fam == "bruzda":
        return sample_bruzda_channel(int(cfg.get("seed", 0)), int(cfg.get("rank", 2)), t)
    if fam == "kraus":
        try:
            ks = [np.array(k, dtype=float) for k in cfg["kraus"]]
            if not ks or any(k.ndim != 3 or k.shape[2] != 2 or k.shape[:2] != ks[0].shape[:2] for k in ks):
                raise ValueError("expected equal-shape matrices of [re, im] pairs")
            ks = [k[..., 0] + 1j * k[..., 1] for k in ks]
        except (KeyError, IndexError, ValueError, TypeError) as exc:
            raise ChannelError(f"field 'kraus' must be a list of [re, im] matrices ({exc})") from None
        ch = make_kraus_channel(ks, t)
        try:
            ch.check()
        except ChannelError as exc:
            raise ChannelError(f"field 'kraus': {exc}") from None
        return ch
    raise ChannelError(f"field 'family' must be one of ad|swap|bruzda|kraus, got {fam!r}")


def vec_kraus(k):
    """|K>> on wires (in, out): entry n_in * d_out + m_out equals K[m, n]."""
    return np.ascontiguousarray(k.T).reshape(-1)


def kraus_columns(ks):
    return np.stack([vec_kraus(k) for k in ks], axis=1)


@dataclass
class ChoiFamily:
    """Columns |N_i> = ⊗_k |E_{i_k}> of the N-fold Choi operator and their derivatives."""

    N: int
    d_in: int
    d_out: int
    s: int
    N_vec: np.ndarray
    dN_vec: np.ndarray

    @property
    def r(self):
        return self.N_vec.shape[1]

    @property
    def wires(self):
        return [Wire(k, self.d_in if k % 2 else self.d_out) for k in range(1, 2 * self.N + 1)]

    def choi(self) -> LabeledOperator:
        return LabeledOperator(self.wires, self.N_vec @ self.N_vec.conj().T)

    def dchoi(self) -> LabeledOperator:
        m = self.dN_vec @ self.N_vec.conj().T
        return LabeledOperator(self.wires, m + m.conj().T)


def power_columns(e, de, N):
    """N-fold tensor columns and their product-rule derivative."""
    s = e.shape[1]
    cols, dcols = [], []
    for idx in itertools.product(range(s), repeat=N):
        v = np.ones(1, dtype=complex)
        dv = np.zeros(1, dtype=complex)
        for i in idx:
            dv = np.kron(dv, e[:, i]) + np.kron(v, de[:, i])
            v = np.kron(v, e[:, i])
        cols.append(v)
        dcols.append(dv)
    return np.stack(cols, axis=1), np.stack(dcols, axis=1)


def choi_power(ch: ParamChannel, N: int, phi: float) -> ChoiFamily:
    if N < 1:
        raise ChannelError("N must be at least 1")
    e = kraus_columns(ch.kraus(phi))
    de = kraus_columns(ch.dkraus(phi))
    nv, dnv = power_columns(e, de, N)
    return ChoiFamily(N, ch.d_in, ch.d_out, ch.s, nv, dnv)
