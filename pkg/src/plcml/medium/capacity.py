"""Shannon capacity over a frequency grid and water-filling power allocation."""

from __future__ import annotations

import numpy as np

from .line import ChannelResponse

NOISE_FLOOR_DBM_HZ = -110.0


def dbm_hz_to_w_hz(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def capacity(h: ChannelResponse, noise_psd, tx_psd) -> float:
    """Sum over bins of spacing * log2(1 + |H|^2 P_tx / P_noise), in bit/s."""
    n = h.grid.n_bins
    noise = np.broadcast_to(np.asarray(noise_psd, dtype=float), (n,))
    tx = np.broadcast_to(np.asarray(tx_psd, dtype=float), (n,))
    if np.any(noise <= 0):
        raise ValueError("noise PSD must be positive in every bin")
    snr = np.abs(h.h) ** 2 * tx / noise
    return float(h.grid.spacing * np.sum(np.log2(1.0 + snr)))


def waterfill(channel_gains, noise_psd, total_power: float, spacing: float = 1.0,
              tol: float = 1e-12) -> np.ndarray:
    """PSD per bin p_i = max(0, mu - N_i/|H_i|^2) with sum(p) * spacing = total_power.

    The water level is bracketed and bisected, then snapped to the closed-form
    level of the resulting active set.
    """
    if total_power <= 0:
        raise ValueError("total power must be positive")
    g2 = np.abs(np.asarray(channel_gains)) ** 2
    noise = np.broadcast_to(np.asarray(noise_psd, dtype=float), g2.shape)
    if not np.any(g2 > 0):
        raise ValueError("all channel gains are zero")
    with np.errstate(divide="ignore"):
        floor = np.where(g2 > 0, noise / g2, np.inf)
    budget = total_power / spacing

    def used(mu):
        return np.sum(np.maximum(0.0, mu - floor))

    lo = float(np.min(floor))
    hi = lo + budget
    while used(hi) < budget:
        hi = lo + 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if used(mid) < budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    mu = 0.5 * (lo + hi)
    for _ in range(len(g2)):
        active = floor < mu
        refined = (budget + floor[active].sum()) / active.sum()
        if np.array_equal(floor < refined, active):
            mu = refined
            break
        mu = refined
    return np.maximum(0.0, mu - floor)
