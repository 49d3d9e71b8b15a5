#!/usr/bin/env python

"Jitted functions for the per-RB SINR hot loop"

import numpy as np
from numba import njit


@njit
def rb_sinr(alloc, gains, rb_power, rb_noise, cochannel):
    """
    Return an (nbs, nrbs) array of linear SINR for every allocated RB.

    alloc[n, r] is the row index into gains of the UE served on RB r
    of BS n, or -1 if the RB is empty. gains has shape (nues, nbs).
    Only BSs flagged in cochannel[n] add interference on the same RB.
    Unallocated RBs get SINR 0.
    """
    nbs, nrbs = alloc.shape
    out = np.zeros((nbs, nrbs), dtype=np.float64)
    for bidx in range(nbs):
        for ridx in range(nrbs):
            uidx = alloc[bidx, ridx]
            if uidx < 0:
                continue
            signal = gains[uidx, bidx] * rb_power[bidx]
            interference = 0.0
            for oidx in range(nbs):
                if oidx == bidx or not cochannel[bidx, oidx]:
                    continue
                if alloc[oidx, ridx] >= 0:
                    interference += gains[uidx, oidx] * rb_power[oidx]
            out[bidx, ridx] = signal / (interference + rb_noise)
    return out


@njit
def worst_case_sinr(gains, rb_power, rb_noise, cochannel):
    """
    Return (nues, nbs) SINR assuming every co-carrier BS transmits on
    the RB. Used to estimate RB demand before allocation.
    """
    nues, nbs = gains.shape
    out = np.zeros((nues, nbs), dtype=np.float64)
    for uidx in range(nues):
        for bidx in range(nbs):
            interference = 0.0
            for oidx in range(nbs):
                if oidx != bidx and cochannel[bidx, oidx]:
                    interference += gains[uidx, oidx] * rb_power[oidx]
            out[uidx, bidx] = gains[uidx, bidx] * rb_power[bidx] / (interference + rb_noise)
    return out
