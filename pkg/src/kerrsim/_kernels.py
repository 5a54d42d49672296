"""Compiled inner loops for the stochastic Kerr-oscillator integrator."""

import numpy as np
from numba import njit


@njit(cache=True)
def evolve_block(alpha, dnu, ascale, K, gam, amp, m, h, sig, noise,
                 step0, rec, rec_every, thr_unstable, thr_mid, dwell_steps,
                 crossed, dwell, cross_step, switch_step):
    """Advance every trajectory of a block by ``len(amp)`` coarse steps.

    Each coarse step is ``m`` exponential stochastic-Heun sub-steps of size
    ``h``.  ``amp[k]`` is sqrt(F) during coarse step ``k``; per-trajectory
    detunings and amplitude factors come from ``dnu`` and ``ascale``.
    ``noise`` has shape (ntraj, len(amp) * m, 2).  Recording (``rec_every > 0``)
    accumulates the coarse-step mean into ``rec``; detection (``dwell_steps > 0``)
    runs a cross-then-dwell state machine on |alpha|^2.
    """
    tw = 2.0 * np.pi
    pg = np.pi * gam
    nco = amp.shape[0]
    for j in range(alpha.shape[0]):
        x = alpha[j]
        d = dnu[j]
        for k in range(nco):
            sF = amp[k] * ascale[j]
            drv = complex(0.0, -sF)
            acc = 0j
            for s in range(m):
                i = k * m + s
                dw = sig * complex(noise[j, i, 0], noise[j, i, 1])
                n0 = x.real * x.real + x.imag * x.imag
                lam = complex(-pg, tw * (d - 2.0 * K * n0))
                e = np.exp(lam * h)
                xp = e * x + (e - 1.0) / lam * drv + dw
                n1 = xp.real * xp.real + xp.imag * xp.imag
                lam = complex(-pg, tw * (d - K * (n0 + n1)))
                e = np.exp(lam * h)
                x = e * x + (e - 1.0) / lam * drv + dw
                acc += x
            step = step0 + k
            if rec_every > 0:
                rec[j, step // rec_every] += acc / (m * rec_every)
            if dwell_steps > 0 and switch_step[j] < 0:
                n = x.real * x.real + x.imag * x.imag
                if n > thr_unstable:
                    if not crossed[j]:
                        crossed[j] = True
                        cross_step[j] = step
                    if n > thr_mid:
                        dwell[j] += 1
                        if dwell[j] >= dwell_steps:
                            switch_step[j] = cross_step[j]
                    else:
                        dwell[j] = 0
                else:
                    crossed[j] = False
                    dwell[j] = 0
        alpha[j] = x
