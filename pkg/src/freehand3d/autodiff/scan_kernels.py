"""Compiled loops for the diagonal selective scan and its adjoint."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def scan_forward(u, delta, A, B, C, Dskip):
    L, D = u.shape
    S = A.shape[1]
    hs = np.empty((L, D, S))
    y = np.empty((L, D))
    h = np.zeros((D, S))
    for t in range(L):
        for d in range(D):
            dt = delta[t, d]
            x = u[t, d]
            acc = 0.0
            for s in range(S):
                h[d, s] = np.exp(dt * A[d, s]) * h[d, s] + dt * B[t, s] * x
                acc += C[t, s] * h[d, s]
            y[t, d] = acc + Dskip[d] * x
        hs[t] = h
    return y, hs


@njit(cache=True)
def scan_backward(gy, u, delta, A, B, C, Dskip, hs):
    L, D = u.shape
    S = A.shape[1]
    gu = np.zeros((L, D))
    gdelta = np.zeros((L, D))
    gA = np.zeros((D, S))
    gB = np.zeros((L, S))
    gC = np.zeros((L, S))
    gD = np.zeros(D)
    # gh carries dLoss/dh_t; contributions from step t+1 are folded in before step t
    gh = np.zeros((D, S))
    for t in range(L - 1, -1, -1):
        for d in range(D):
            dt = delta[t, d]
            x = u[t, d]
            g = gy[t, d]
            gD[d] += g * x
            gu_td = Dskip[d] * g
            gdt = 0.0
            for s in range(S):
                h_t = hs[t, d, s]
                gC[t, s] += g * h_t
                ght = gh[d, s] + g * C[t, s]
                decay = np.exp(dt * A[d, s])
                h_prev = hs[t - 1, d, s] if t > 0 else 0.0
                gA[d, s] += ght * h_prev * decay * dt
                gdt += ght * (h_prev * decay * A[d, s] + B[t, s] * x)
                gB[t, s] += ght * dt * x
                gu_td += ght * dt * B[t, s]
                gh[d, s] = ght * decay
            gdelta[t, d] = gdt
            gu[t, d] = gu_td
    return gu, gdelta, gA, gB, gC, gD
