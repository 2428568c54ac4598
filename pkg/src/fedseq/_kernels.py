"""Compiled time loops for the recurrent cells.

The per-timestep work is a small mat-vec plus a handful of pointwise ops;
in plain numpy the call overhead dominates. Every kernel uses explicit
loops with a fixed summation order, so results do not depend on BLAS
threading.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _matvec_into(out, v, M):
    # out[j] = sum_k v[k] * M[k, j]
    rows, cols = M.shape
    for j in range(cols):
        out[j] = 0.0
    for k in range(rows):
        vk = v[k]
        for j in range(cols):
            out[j] += vk * M[k, j]


@njit(cache=True)
def rnn_forward(P, Whh_T, hs):
    T, h = P.shape
    q = np.empty(h)
    for t in range(T):
        _matvec_into(q, hs[t], Whh_T)
        for j in range(h):
            hs[t + 1, j] = math.tanh(P[t, j] + q[j])


@njit(cache=True)
def rnn_backward(dH, hs, W_hh, dP):
    T, h = dH.shape
    dh_next = np.zeros(h)
    for t in range(T - 1, -1, -1):
        for j in range(h):
            hc = hs[t + 1, j]
            dP[t, j] = (dH[t, j] + dh_next[j]) * (1.0 - hc * hc)
        _matvec_into(dh_next, dP[t], W_hh)


@njit(cache=True)
def gru_forward(P, Whh_T, hs, gates, qns):
    T = P.shape[0]
    h = hs.shape[1]
    q = np.empty(3 * h)
    for t in range(T):
        _matvec_into(q, hs[t], Whh_T)
        for j in range(h):
            r = _sigmoid(P[t, j] + q[j])
            z = _sigmoid(P[t, h + j] + q[h + j])
            qn = q[2 * h + j]
            n = math.tanh(P[t, 2 * h + j] + r * qn)
            hs[t + 1, j] = n + z * (hs[t, j] - n)
            gates[t, j] = r
            gates[t, h + j] = z
            gates[t, 2 * h + j] = n
            qns[t, j] = qn


@njit(cache=True)
def gru_backward(dH, hs, gates, qns, W_hh, dP, dQ):
    T, h = dH.shape
    dh_next = np.zeros(h)
    carry = np.empty(h)
    for t in range(T - 1, -1, -1):
        for j in range(h):
            dh = dH[t, j] + dh_next[j]
            r = gates[t, j]
            z = gates[t, h + j]
            n = gates[t, 2 * h + j]
            dan = dh * (1.0 - z) * (1.0 - n * n)
            daz = dh * (hs[t, j] - n) * z * (1.0 - z)
            dar = dan * qns[t, j] * r * (1.0 - r)
            dP[t, j] = dar
            dP[t, h + j] = daz
            dP[t, 2 * h + j] = dan
            dQ[t, j] = dar
            dQ[t, h + j] = daz
            dQ[t, 2 * h + j] = dan * r
            carry[j] = dh * z
        _matvec_into(dh_next, dQ[t], W_hh)
        for j in range(h):
            dh_next[j] += carry[j]


@njit(cache=True)
def lstm_forward(P, Whh_T, hs, cs, gates):
    T = P.shape[0]
    h = hs.shape[1]
    a = np.empty(4 * h)
    for t in range(T):
        _matvec_into(a, hs[t], Whh_T)
        for j in range(h):
            i = _sigmoid(P[t, j] + a[j])
            f = _sigmoid(P[t, h + j] + a[h + j])
            g = math.tanh(P[t, 2 * h + j] + a[2 * h + j])
            o = _sigmoid(P[t, 3 * h + j] + a[3 * h + j])
            c = f * cs[t, j] + i * g
            cs[t + 1, j] = c
            hs[t + 1, j] = o * math.tanh(c)
            gates[t, j] = i
            gates[t, h + j] = f
            gates[t, 2 * h + j] = g
            gates[t, 3 * h + j] = o


@njit(cache=True)
def lstm_backward(dH, cs, gates, W_hh, dP):
    T, h = dH.shape
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(T - 1, -1, -1):
        for j in range(h):
            i = gates[t, j]
            f = gates[t, h + j]
            g = gates[t, 2 * h + j]
            o = gates[t, 3 * h + j]
            tc = math.tanh(cs[t + 1, j])
            dh = dH[t, j] + dh_next[j]
            dc = dc_next[j] + dh * o * (1.0 - tc * tc)
            dP[t, j] = dc * g * i * (1.0 - i)
            dP[t, h + j] = dc * cs[t, j] * f * (1.0 - f)
            dP[t, 2 * h + j] = dc * i * (1.0 - g * g)
            dP[t, 3 * h + j] = dh * tc * o * (1.0 - o)
            dc_next[j] = dc * f
        _matvec_into(dh_next, dP[t], W_hh)
