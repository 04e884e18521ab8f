"""Time-stepping kernels for noisy spin-locking trajectories.

Two interchangeable backends are provided. The numba backend loops over
realizations and steps in compiled code. The numpy backend vectorizes over
realizations and loops over steps in Python. Set ``MLQNS_NUMBA=0`` to force
the numpy backend (it is also used when numba is not importable).

Step s of a trajectory applies the symmetric split
    P_half(s) . D(s) . P_half(s)
where P_half(s) = exp(-i H0(s) dt / 2) is exact for the drive Hamiltonian
and D(s) = diag(exp(-i B_k dt - G_k dt / 2)) carries the noise sampled at
the step midpoint plus the no-jump decay of the quantum-jump unravelling.
Adjacent half steps are merged. Step index i = min(s, n_ramp) selects the
propagator table entry, so the first n_ramp steps can follow a ramped
envelope and every later step shares the plateau entry.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - import guard
    import numba
    from numba import njit
    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("MLQNS_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"


# ---------------------------------------------------------------- pure states, numpy

def _pure_numpy(psi0, ph, pm, n_ramp, x, w, dt, gam, ckpt, jump_r):
    n_real, n_steps, _ = x.shape
    d = psi0.shape[0]
    n_ck = ckpt.shape[0]
    out = np.zeros((n_real, n_ck, d), dtype=np.complex128)
    n_jumps = np.zeros(n_real, dtype=np.int64)
    overflow = np.zeros(n_real, dtype=np.bool_)
    max_j = jump_r.shape[1]

    psi = np.tile(ph[0] @ psi0, (n_real, 1))
    thresh = jump_r[:, 0, 0].copy()
    has_decay = bool(np.any(gam > 0))
    decay = np.exp(-0.5 * gam * dt)
    rows = np.arange(n_real)
    ci = 0
    for s in range(n_steps):
        i = s if s < n_ramp else n_ramp
        b = x[:, s, :] @ w  # (n_real, d)
        psi = psi * np.exp(-1j * dt * b) * decay
        if has_decay:
            norm2 = np.einsum("rk,rk->r", psi.real, psi.real) + np.einsum("rk,rk->r", psi.imag, psi.imag)
            jump = norm2 < thresh
            if np.any(jump):
                for r in rows[jump]:
                    jdx = n_jumps[r]
                    if jdx + 1 >= max_j:
                        overflow[r] = True
                        thresh[r] = -1.0
                        continue
                    p = gam[1:] * np.abs(psi[r, 1:]) ** 2
                    cum = np.cumsum(p)
                    k = int(np.searchsorted(cum, jump_r[r, jdx, 1] * cum[-1], side="right")) + 1
                    k = min(k, d - 1)
                    new = np.zeros(d, dtype=np.complex128)
                    new[k - 1] = psi[r, k]
                    psi[r] = new / np.sqrt(np.sum(np.abs(new) ** 2))
                    n_jumps[r] = jdx + 1
                    thresh[r] = jump_r[r, jdx + 1, 0]
        if ci < n_ck and ckpt[ci] == s:
            phi = psi @ ph[i].T
            out[:, ci, :] = phi
            nxt = s + 1 if s + 1 < n_ramp else n_ramp
            psi = phi @ ph[nxt].T
            ci += 1
        else:
            psi = psi @ pm[i].T
    return out, n_jumps, overflow


# ---------------------------------------------------------------- density matrices, numpy

def _density_numpy(rho0, sh, sm, n_ramp, x, w, dt, ckpt):
    """Vectorized-rho propagation; sh/sm are superoperators on row-major vec(rho)."""
    n_real, n_steps, _ = x.shape
    d = rho0.shape[0]
    n_ck = ckpt.shape[0]
    out = np.zeros((n_real, n_ck, d, d), dtype=np.complex128)
    v = np.tile((sh[0] @ rho0.reshape(-1)), (n_real, 1))
    ci = 0
    for s in range(n_steps):
        i = s if s < n_ramp else n_ramp
        b = x[:, s, :] @ w
        ph = np.exp(-1j * dt * (b[:, :, None] - b[:, None, :])).reshape(n_real, d * d)
        v = v * ph
        if ci < n_ck and ckpt[ci] == s:
            u = v @ sh[i].T
            out[:, ci] = u.reshape(n_real, d, d)
            nxt = s + 1 if s + 1 < n_ramp else n_ramp
            v = u @ sh[nxt].T
            ci += 1
        else:
            v = v @ sm[i].T
    return out


# ---------------------------------------------------------------- numba versions

if HAVE_NUMBA:

    @njit(cache=True)
    def _matvec(m, v, out):
        d = v.shape[0]
        for a in range(d):
            acc = 0j
            for b in range(d):
                acc += m[a, b] * v[b]
            out[a] = acc

    @njit(cache=True)
    def _pure_numba(psi0, ph, pm, n_ramp, x, w, dt, gam, ckpt, jump_r):
        n_real, n_steps, n_src = x.shape
        d = psi0.shape[0]
        n_ck = ckpt.shape[0]
        max_j = jump_r.shape[1]
        out = np.zeros((n_real, n_ck, d), dtype=np.complex128)
        n_jumps = np.zeros(n_real, dtype=np.int64)
        overflow = np.zeros(n_real, dtype=np.bool_)
        decay = np.exp(-0.5 * gam * dt)
        has_decay = False
        for k in range(d):
            if gam[k] > 0:
                has_decay = True
        psi = np.empty(d, dtype=np.complex128)
        tmp = np.empty(d, dtype=np.complex128)
        probs = np.empty(d, dtype=np.float64)
        for r in range(n_real):
            _matvec(ph[0], psi0, psi)
            jdx = 0
            thresh = jump_r[r, 0, 0]
            ci = 0
            for s in range(n_steps):
                i = s if s < n_ramp else n_ramp
                for k in range(d):
                    bk = 0.0
                    for q in range(n_src):
                        bk += x[r, s, q] * w[q, k]
                    ang = -dt * bk
                    psi[k] = psi[k] * complex(np.cos(ang), np.sin(ang)) * decay[k]
                if has_decay:
                    norm2 = 0.0
                    for k in range(d):
                        norm2 += psi[k].real ** 2 + psi[k].imag ** 2
                    if norm2 < thresh:
                        if jdx + 1 >= max_j:
                            overflow[r] = True
                            thresh = -1.0
                        else:
                            tot = 0.0
                            for k in range(1, d):
                                probs[k] = gam[k] * (psi[k].real ** 2 + psi[k].imag ** 2)
                                tot += probs[k]
                            target = jump_r[r, jdx, 1] * tot
                            acc = 0.0
                            kj = d - 1
                            for k in range(1, d):
                                acc += probs[k]
                                if target < acc:
                                    kj = k
                                    break
                            amp = psi[kj]
                            nrm = np.sqrt(amp.real ** 2 + amp.imag ** 2)
                            for k in range(d):
                                psi[k] = 0j
                            psi[kj - 1] = amp / nrm
                            jdx += 1
                            thresh = jump_r[r, jdx, 0]
                if ci < n_ck and ckpt[ci] == s:
                    _matvec(ph[i], psi, tmp)
                    for k in range(d):
                        out[r, ci, k] = tmp[k]
                    nxt = s + 1 if s + 1 < n_ramp else n_ramp
                    _matvec(ph[nxt], tmp, psi)
                    ci += 1
                else:
                    _matvec(pm[i], psi, tmp)
                    for k in range(d):
                        psi[k] = tmp[k]
            n_jumps[r] = jdx
        return out, n_jumps, overflow

    @njit(cache=True)
    def _density_numba(rho0, sh, sm, n_ramp, x, w, dt, ckpt):
        n_real, n_steps, n_src = x.shape
        d = rho0.shape[0]
        dd = d * d
        n_ck = ckpt.shape[0]
        out = np.zeros((n_real, n_ck, d, d), dtype=np.complex128)
        v0 = rho0.reshape(dd).copy()
        v = np.empty(dd, dtype=np.complex128)
        tmp = np.empty(dd, dtype=np.complex128)
        b = np.empty(d, dtype=np.float64)
        for r in range(n_real):
            _matvec(sh[0], v0, v)
            ci = 0
            for s in range(n_steps):
                i = s if s < n_ramp else n_ramp
                for k in range(d):
                    bk = 0.0
                    for q in range(n_src):
                        bk += x[r, s, q] * w[q, k]
                    b[k] = bk
                for a in range(d):
                    for c in range(d):
                        ang = -dt * (b[a] - b[c])
                        v[a * d + c] = v[a * d + c] * complex(np.cos(ang), np.sin(ang))
                if ci < n_ck and ckpt[ci] == s:
                    _matvec(sh[i], v, tmp)
                    for a in range(dd):
                        out[r, ci, a // d, a % d] = tmp[a]
                    nxt = s + 1 if s + 1 < n_ramp else n_ramp
                    _matvec(sh[nxt], tmp, v)
                    ci += 1
                else:
                    _matvec(sm[i], v, tmp)
                    for a in range(dd):
                        v[a] = tmp[a]
        return out


# ---------------------------------------------------------------- dispatch

def _prep(psi0, ph, pm, x, w, ckpt):
    return (np.ascontiguousarray(psi0, dtype=np.complex128),
            np.ascontiguousarray(ph, dtype=np.complex128),
            np.ascontiguousarray(pm, dtype=np.complex128),
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w, dtype=np.float64),
            np.ascontiguousarray(ckpt, dtype=np.int64))


def propagate_pure(psi0, ph, pm, n_ramp, x, w, dt, gam, ckpt, jump_r, backend=None):
    """Propagate a batch of state vectors.

    Parameters
    ----------
    psi0 : (d,) initial state at the start of the lock.
    ph, pm : (n_ramp + 1, d, d) half-step and merged propagators.
    x : (n_real, n_steps, n_src) noise samples at step midpoints.
    w : (n_src, d) level weights, B = x @ w in rad/us.
    gam : (d,) decay rate out of each level (level 0 must be 0).
    ckpt : sorted step indices after which the state is recorded.
    jump_r : (n_real, max_jumps, 2) uniforms for the quantum-jump thresholds
        and channel choice.

    Returns (states, n_jumps, overflow); states are unnormalized.
    """
    psi0, ph, pm, x, w, ckpt = _prep(psi0, ph, pm, x, w, ckpt)
    gam = np.ascontiguousarray(gam, dtype=np.float64)
    jump_r = np.ascontiguousarray(jump_r, dtype=np.float64)
    use = (backend or backend_name()) == "numba"
    if use and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    if ckpt.size and (ckpt[-1] >= x.shape[1] or np.any(np.diff(ckpt) <= 0)):
        raise ValueError("checkpoints must be strictly increasing and inside the step range")
    fn = _pure_numba if use else _pure_numpy
    return fn(psi0, ph, pm, int(n_ramp), x, w, float(dt), gam, ckpt, jump_r)


def propagate_density(rho0, sh, sm, n_ramp, x, w, dt, ckpt, backend=None):
    """Density-matrix counterpart of :func:`propagate_pure` with superoperator tables."""
    rho0, sh, sm, x, w, ckpt = _prep(rho0, sh, sm, x, w, ckpt)
    use = (backend or backend_name()) == "numba"
    if use and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    fn = _density_numba if use else _density_numpy
    return fn(rho0, sh, sm, int(n_ramp), x, w, float(dt), ckpt)
