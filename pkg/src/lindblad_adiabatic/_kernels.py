"""Compiled inner loops for qubit models.

The pure-numpy integrators in :mod:`dynamics` and :mod:`adiabatic` accept any
Python callable but pay interpreter overhead on every stage evaluation.  For
Hamiltonians given as :class:`~lindblad_adiabatic.superop.PauliHamiltonian`
the same algorithms run here under numba.  The Python versions stay the
reference; the test suite checks the two agree.

The driver :func:`dp45` selects its right-hand side, accept hook and output
map through an integer ``kind`` (:data:`MASTER`, :data:`SUPEROP`,
:data:`COEFF`) rather than taking functions as arguments, which keeps every
kernel cacheable across processes.

Conventions shared by every right-hand side ``rhs(t, y, p, w, err, out)``:

* ``p`` is a float64 parameter array, its first 12 entries the packed
  harmonic coefficients ``[const, sin, cos, freq]`` of ``H``;
* ``w`` is a complex work array holding constant matrices and mutable state;
* ``err[0]`` is set to a nonzero code to abort the integration.
"""

import numpy as np
from numba import njit

OK = 0
UNDERFLOW = 1
BUDGET = 2
RHS_ERROR = 3

MASTER = 0
SUPEROP = 1
COEFF = 2

ERR_GAP = 1
ERR_MATCH = 2
ERR_EIG = 3

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = np.zeros((6, 5))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def _err_norm(err, y, y_new, rtol, atol, absolute):
    acc = 0.0
    for i in range(y.size):
        if absolute[i]:
            sc = atol + rtol
        else:
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        r = abs(err[i]) / sc
        acc += r * r
    return np.sqrt(acc / y.size)


@njit(cache=True)
def dp45(kind, t0, y0, t_end, grid, n_out, rtol, atol, absolute,
         max_step, h_init, max_steps, p, w, err):
    """Dormand-Prince 5(4); see :func:`dynamics.dormand_prince`.

    ``emit`` writes output rows; ``accept`` returns 1 when it modified ``y``
    in place (the FSAL stage is then recomputed).  Returns
    ``(out, n_steps, n_rejected, n_evals, t, status)``.
    """
    n = y0.size
    out = np.zeros((grid.size, n_out), dtype=np.complex128)
    y = y0.copy()
    f = np.empty(n, dtype=np.complex128)
    K = np.empty((7, n), dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    y_new = np.empty(n, dtype=np.complex128)
    e = np.empty(n, dtype=np.complex128)
    row = np.empty(n_out, dtype=np.complex128)
    gi = 0
    t = t0
    while gi < grid.size and grid[gi] <= t0:
        _emit(kind, t, y, p, w, row)
        out[gi] = row
        gi += 1
    _rhs(kind, t, y, p, w, err, f)
    n_evals = 1
    if err[0] != 0:
        return out, 0, 0, n_evals, t, RHS_ERROR
    span = t_end - t0
    if h_init > 0:
        h = h_init
    else:
        # Hairer, Norsett & Wanner starting-step heuristic
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + abs(y[i]) * rtol
            d0 += (abs(y[i]) / sc) ** 2
            d1 += (abs(f[i]) / sc) ** 2
        d0 = np.sqrt(d0 / n)
        d1 = np.sqrt(d1 / n)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, span)
        for i in range(n):
            ytmp[i] = y[i] + h0 * f[i]
        _rhs(kind, t + h0, ytmp, p, w, err, K[1])
        n_evals += 1
        if err[0] != 0:
            return out, 0, 0, n_evals, t, RHS_ERROR
        d2 = 0.0
        for i in range(n):
            sc = atol + abs(y[i]) * rtol
            d2 += (abs(K[1, i] - f[i]) / sc) ** 2
        d2 = np.sqrt(d2 / n) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h0, h1, span)
    h = min(h, max_step)
    n_steps = 0
    n_rej = 0
    while t < t_end:
        if n_steps >= max_steps:
            return out, n_steps, n_rej, n_evals, t, BUDGET
        min_step = 16 * np.spacing(max(abs(t), 1.0))
        h = min(h, t_end - t)
        if h < min_step:
            return out, n_steps, n_rej, n_evals, t, UNDERFLOW
        K[0] = f
        while True:
            for s in range(1, 6):
                for i in range(n):
                    acc = 0j
                    for j in range(s):
                        acc += _A[s, j] * K[j, i]
                    ytmp[i] = y[i] + h * acc
                _rhs(kind, t + _C[s] * h, ytmp, p, w, err, K[s])
            for i in range(n):
                acc = 0j
                for j in range(6):
                    acc += _B[j] * K[j, i]
                y_new[i] = y[i] + h * acc
            _rhs(kind, t + h, y_new, p, w, err, K[6])
            n_evals += 6
            if err[0] == ERR_MATCH and h >= 4 * min_step:
                # frames turned too far within the trial step: shrink it
                err[0] = 0
                n_rej += 1
                h *= 0.25
                continue
            if err[0] != 0:
                return out, n_steps, n_rej, n_evals, t, RHS_ERROR
            for i in range(n):
                acc = 0j
                for j in range(7):
                    acc += _E[j] * K[j, i]
                e[i] = h * acc
            en = _err_norm(e, y, y_new, rtol, atol, absolute)
            if en <= 1.0:
                break
            n_rej += 1
            h *= max(0.2, 0.9 * en ** -0.2)
            if h < min_step:
                return out, n_steps, n_rej, n_evals, t, UNDERFLOW
        t_new = t + h if t_end - (t + h) > min_step else t_end
        while gi < grid.size and grid[gi] <= t_new:
            x = (grid[gi] - t) / h
            for i in range(n):
                acc = 0j
                for j in range(7):
                    acc += K[j, i] * x * (_P[j, 0] + x * (_P[j, 1] + x * (_P[j, 2] + x * _P[j, 3])))
                ytmp[i] = y[i] + h * acc
            _emit(kind, grid[gi], ytmp, p, w, row)
            out[gi] = row
            gi += 1
        n_steps += 1
        t = t_new
        y[:] = y_new
        f[:] = K[6]
        if _accept(kind, t, y, p, w) != 0:
            _rhs(kind, t, y, p, w, err, f)
            n_evals += 1
            if err[0] != 0:
                return out, n_steps, n_rej, n_evals, t, RHS_ERROR
        if en == 0:
            factor = 10.0
        else:
            factor = min(10.0, 0.9 * en ** -0.2)
        h = min(h * factor, max_step)
    while gi < grid.size:
        _emit(kind, t, y, p, w, row)
        out[gi] = row
        gi += 1
    return out, n_steps, n_rej, n_evals, t, OK


@njit(cache=True)
def _pauli_coeffs(t, p, h):
    for k in range(3):
        h[k] = p[k] + p[3 + k] * np.sin(p[9 + k] * t) + p[6 + k] * np.cos(p[9 + k] * t)


@njit(cache=True)
def _pauli_rates(t, p, h):
    for k in range(3):
        wk = p[9 + k]
        h[k] = wk * (p[3 + k] * np.cos(wk * t) - p[6 + k] * np.sin(wk * t))


# -- density-matrix picture ------------------------------------------------
# p = [hpack(12), n_jumps, rates...]; w = jump operators, row-major 2x2 each


@njit(cache=True)
def _mm2(A, B, C):
    for i in range(2):
        for j in range(2):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j]


@njit(cache=True)
def master_rhs(t, y, p, w, err, out):
    h = np.empty(3)
    _pauli_coeffs(t, p, h)
    H = np.empty((2, 2), dtype=np.complex128)
    H[0, 0] = h[2]
    H[1, 1] = -h[2]
    H[0, 1] = h[0] - 1j * h[1]
    H[1, 0] = h[0] + 1j * h[1]
    rho = y.reshape((2, 2))
    T1 = np.empty((2, 2), dtype=np.complex128)
    T2 = np.empty((2, 2), dtype=np.complex128)
    d = out.reshape((2, 2))
    _mm2(H, rho, T1)
    _mm2(rho, H, T2)
    for i in range(2):
        for j in range(2):
            d[i, j] = -1j * (T1[i, j] - T2[i, j])
    nj = int(p[12])
    Lk = np.empty((2, 2), dtype=np.complex128)
    Lh = np.empty((2, 2), dtype=np.complex128)
    half = np.empty((2, 2), dtype=np.complex128)
    for k in range(nj):
        rate = p[13 + k]
        for i in range(2):
            for j in range(2):
                Lk[i, j] = w[4 * k + 2 * i + j]
                Lh[j, i] = np.conj(w[4 * k + 2 * i + j])
        _mm2(Lh, Lk, half)
        _mm2(Lk, rho, T1)
        _mm2(T1, Lh, T2)
        for i in range(2):
            for j in range(2):
                acc = 0.5 * (half[i, 0] * rho[0, j] + half[i, 1] * rho[1, j]
                             + rho[i, 0] * half[0, j] + rho[i, 1] * half[1, j])
                d[i, j] += rate * (T2[i, j] - acc)


# -- coherence-vector picture ----------------------------------------------
# w[:48] = 2 * G[1:4] (generators for h_x, h_y, h_z), w[48:64] = dissipator


@njit(cache=True)
def _superop(t, p, w, L):
    h = np.empty(3)
    _pauli_coeffs(t, p, h)
    for i in range(4):
        for j in range(4):
            L[i, j] = w[48 + 4 * i + j] + h[0] * w[4 * i + j] + h[1] * w[16 + 4 * i + j] \
                + h[2] * w[32 + 4 * i + j]


@njit(cache=True)
def _superop_rate(t, p, w, L):
    h = np.empty(3)
    _pauli_rates(t, p, h)
    for i in range(4):
        for j in range(4):
            L[i, j] = h[0] * w[4 * i + j] + h[1] * w[16 + 4 * i + j] + h[2] * w[32 + 4 * i + j]


@njit(cache=True)
def superop_rhs(t, y, p, w, err, out):
    L = np.empty((4, 4), dtype=np.complex128)
    _superop(t, p, w, L)
    for i in range(4):
        acc = 0j
        for j in range(4):
            acc += L[i, j] * y[j]
        out[i] = acc


# -- 3x3 eigensolver for the trailing block --------------------------------


@njit(cache=True)
def _cbrt(z):
    if z == 0:
        return 0j
    r = abs(z) ** (1.0 / 3.0)
    return r * np.exp(1j * np.angle(z) / 3.0)


@njit(cache=True)
def eig3(B, lam, V):
    """Eigenpairs of a 3x3 complex matrix; returns False if unreliable.

    Characteristic-polynomial roots by Cardano, Newton-polished, with
    eigenvectors from cross products of rows of ``B - lam I``.
    """
    s = 0.0
    for i in range(3):
        for j in range(3):
            s = max(s, abs(B[i, j]))
    if s == 0:
        return False
    M = B / s
    a = -(M[0, 0] + M[1, 1] + M[2, 2])
    b = (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
         + M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
    det = (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
           - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
           + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))
    c = -det
    d0 = a * a - 3 * b
    d1 = 2 * a * a * a - 9 * a * b + 27 * c
    sq = np.sqrt(d1 * d1 - 4 * d0 * d0 * d0 + 0j)
    C1 = 0.5 * (d1 + sq)
    C2 = 0.5 * (d1 - sq)
    Cc = C1 if abs(C1) >= abs(C2) else C2
    C = _cbrt(Cc)
    xi = np.exp(2j * np.pi / 3)
    for k in range(3):
        if C == 0:
            r = -a / 3
        else:
            Ck = C * xi ** k
            r = -(a + Ck + d0 / Ck) / 3
        for _ in range(3):
            pv = ((r + a) * r + b) * r + c
            dp = (3 * r + 2 * a) * r + b
            if dp == 0:
                break
            rn = r - pv / dp
            if abs(((rn + a) * rn + b) * rn + c) >= abs(pv):
                break
            r = rn
        lam[k] = r
    tol = 1e-10 * max(1.0, np.abs(M).sum(axis=1).max())
    for k in range(3):
        r = lam[k]
        best = 0.0
        v0 = 0j
        v1 = 0j
        v2 = 0j
        for (i, j) in ((0, 1), (0, 2), (1, 2)):
            x0 = M[i, 0] - (r if i == 0 else 0)
            x1 = M[i, 1] - (r if i == 1 else 0)
            x2 = M[i, 2] - (r if i == 2 else 0)
            z0 = M[j, 0] - (r if j == 0 else 0)
            z1 = M[j, 1] - (r if j == 1 else 0)
            z2 = M[j, 2] - (r if j == 2 else 0)
            c0 = x1 * z2 - x2 * z1
            c1 = x2 * z0 - x0 * z2
            c2 = x0 * z1 - x1 * z0
            nrm = np.sqrt(abs(c0) ** 2 + abs(c1) ** 2 + abs(c2) ** 2)
            if nrm > best:
                best = nrm
                v0, v1, v2 = c0 / nrm, c1 / nrm, c2 / nrm
        if best == 0:
            return False
        V[0, k] = v0
        V[1, k] = v1
        V[2, k] = v2
        for i in range(3):
            res = M[i, 0] * v0 + M[i, 1] * v1 + M[i, 2] * v2 - r * V[i, k]
            if abs(res) > tol:
                return False
    for k in range(3):
        lam[k] *= s
    # distinct eigenvalues needed for an independent eigenvector set
    for k in range(3):
        for m in range(k + 1, 3):
            if abs(lam[k] - lam[m]) <= 1e-12 * s:
                return False
    return True


@njit(cache=True)
def eig3_safe(B, lam, V):
    if eig3(B, lam, V):
        return True
    vals, vecs = np.linalg.eig(B)
    for k in range(3):
        nrm = np.sqrt((np.abs(vecs[:, k]) ** 2).sum())
        lam[k] = vals[k]
        V[:, k] = vecs[:, k] / nrm
    scale = max(1.0, np.abs(B).sum(axis=1).max())
    for k in range(3):
        vk = V[:, k].copy()
        r = B @ vk - lam[k] * vk
        if np.sqrt((np.abs(r) ** 2).sum()) > 1e-10 * scale:
            return False
    return True


@njit(cache=True)
def _inv3(D, E):
    det = (D[0, 0] * (D[1, 1] * D[2, 2] - D[1, 2] * D[2, 1])
           - D[0, 1] * (D[1, 0] * D[2, 2] - D[1, 2] * D[2, 0])
           + D[0, 2] * (D[1, 0] * D[2, 1] - D[1, 1] * D[2, 0]))
    if det == 0:
        return False
    E[0, 0] = (D[1, 1] * D[2, 2] - D[1, 2] * D[2, 1]) / det
    E[0, 1] = (D[0, 2] * D[2, 1] - D[0, 1] * D[2, 2]) / det
    E[0, 2] = (D[0, 1] * D[1, 2] - D[0, 2] * D[1, 1]) / det
    E[1, 0] = (D[1, 2] * D[2, 0] - D[1, 0] * D[2, 2]) / det
    E[1, 1] = (D[0, 0] * D[2, 2] - D[0, 2] * D[2, 0]) / det
    E[1, 2] = (D[0, 2] * D[1, 0] - D[0, 0] * D[1, 2]) / det
    E[2, 0] = (D[1, 0] * D[2, 1] - D[1, 1] * D[2, 0]) / det
    E[2, 1] = (D[0, 1] * D[2, 0] - D[0, 0] * D[2, 1]) / det
    E[2, 2] = (D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]) / det
    return True


# -- coefficient picture ---------------------------------------------------
# y = [c_0..c_3, Lambda_0..Lambda_3]
# p = [hpack(12), couple, gap_tol]
# w = [generators(64), anchor rows R (9)]
_PERMS = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]])


@njit(cache=True)
def _gauged_frame(t, p, w, lam, D, E):
    """Eigendata of the trailing block in the anchored gauge ``r_a . D_a = 1``.

    Columns of ``D`` and rows of ``E`` are labelled by the anchor rows.
    Returns an error code.
    """
    L = np.empty((4, 4), dtype=np.complex128)
    _superop(t, p, w, L)
    B = L[1:, 1:].copy()
    raw_l = np.empty(3, dtype=np.complex128)
    V = np.empty((3, 3), dtype=np.complex128)
    if not eig3_safe(B, raw_l, V):
        return ERR_EIG
    R = w[64:73].reshape((3, 3))
    ov = np.empty((3, 3))
    dots = np.empty((3, 3), dtype=np.complex128)
    for a in range(3):
        rn = np.sqrt((np.abs(R[a]) ** 2).sum())
        for j in range(3):
            d = R[a, 0] * V[0, j] + R[a, 1] * V[1, j] + R[a, 2] * V[2, j]
            dots[a, j] = d
            ov[a, j] = abs(d) / rn
    best = -1.0
    second = -1.0
    bi = 0
    for q in range(6):
        sc = ov[0, _PERMS[q, 0]] + ov[1, _PERMS[q, 1]] + ov[2, _PERMS[q, 2]]
        if sc > best:
            second = best
            best = sc
            bi = q
        elif sc > second:
            second = sc
    worst = 1.0
    for a in range(3):
        worst = min(worst, ov[a, _PERMS[bi, a]])
    if worst < 0.1 or best - second < 1e-6:
        return ERR_MATCH
    for a in range(3):
        j = _PERMS[bi, a]
        lam[a] = raw_l[j]
        for i in range(3):
            D[i, a] = V[i, j] / dots[a, j]
    if not _inv3(D, E):
        return ERR_EIG
    return 0


@njit(cache=True)
def coeff_rhs(t, y, p, w, err, out):
    lam = np.empty(3, dtype=np.complex128)
    D = np.empty((3, 3), dtype=np.complex128)
    E = np.empty((3, 3), dtype=np.complex128)
    code = _gauged_frame(t, p, w, lam, D, E)
    if code != 0:
        err[0] = code
        return
    Ld = np.empty((4, 4), dtype=np.complex128)
    _superop_rate(t, p, w, Ld)
    Bd = Ld[1:, 1:].copy()
    X = E @ Bd @ D
    scale = np.abs(X).max() + 1e-300
    K = np.zeros((3, 3), dtype=np.complex128)
    gap_tol = p[13]
    for a in range(3):
        for b in range(3):
            if a == b:
                continue
            num = X[b, a]
            den = lam[a] - lam[b]
            if abs(num) <= 1e-14 * scale:
                continue
            if abs(den) <= gap_tol:
                err[0] = ERR_GAP
                return
            K[b, a] = num / den
    R = w[64:73].reshape((3, 3))
    for a in range(3):
        acc = 0j
        for b in range(3):
            if b != a:
                acc += K[b, a] * (R[a, 0] * D[0, b] + R[a, 1] * D[1, b] + R[a, 2] * D[2, b])
        K[a, a] = -acc
    couple = p[12] != 0
    out[0] = 0
    out[4] = 0
    for b in range(3):
        acc = K[b, b] * y[1 + b]
        if couple:
            for a in range(3):
                if a != b:
                    acc += K[b, a] * y[1 + a] * np.exp(y[5 + a] - y[5 + b])
        out[1 + b] = -acc
        out[5 + b] = lam[b]


@njit(cache=True)
def coeff_accept(t, y, p, w):
    """Re-anchor the gauge once an anchored vector has drifted."""
    lam = np.empty(3, dtype=np.complex128)
    D = np.empty((3, 3), dtype=np.complex128)
    E = np.empty((3, 3), dtype=np.complex128)
    if _gauged_frame(t, p, w, lam, D, E) != 0:
        return 0
    R = w[64:73].reshape((3, 3))
    drift = False
    for a in range(3):
        dn = np.sqrt((np.abs(D[:, a]) ** 2).sum())
        rn = np.sqrt((np.abs(R[a]) ** 2).sum())
        if 1.0 / (dn * rn) < 0.5:
            drift = True
    if not drift:
        return 0
    for a in range(3):
        dn = np.sqrt((np.abs(D[:, a]) ** 2).sum())
        for i in range(3):
            w[64 + 3 * a + i] = np.conj(D[i, a]) / dn
        # D_a -> D_a / dn keeps r_a . D_a = 1, so c_a absorbs the norm
        y[1 + a] *= dn
    return 1


@njit(cache=True)
def coeff_emit(t, y, p, w, row):
    """Row layout: ``[v(4), c(4), Lambda(4), lambda(4), D (4x4 row-major)]``."""
    lam = np.empty(3, dtype=np.complex128)
    D = np.empty((3, 3), dtype=np.complex128)
    E = np.empty((3, 3), dtype=np.complex128)
    for i in range(row.size):
        row[i] = np.nan
    if _gauged_frame(t, p, w, lam, D, E) != 0:
        return
    v = np.zeros(4, dtype=np.complex128)
    v[0] = y[0] * np.exp(y[4])
    for a in range(3):
        amp = y[1 + a] * np.exp(y[5 + a])
        for i in range(3):
            v[1 + i] += amp * D[i, a]
    row[0:4] = v
    row[4:12] = y
    row[12] = 0
    row[13:16] = lam
    Dfull = np.zeros((4, 4), dtype=np.complex128)
    Dfull[0, 0] = 1
    Dfull[1:, 1:] = D
    row[16:32] = Dfull.ravel()


# -- dispatch -------------------------------------------------------------------


@njit(cache=True)
def _rhs(kind, t, y, p, w, err, out):
    if kind == MASTER:
        master_rhs(t, y, p, w, err, out)
    elif kind == SUPEROP:
        superop_rhs(t, y, p, w, err, out)
    else:
        coeff_rhs(t, y, p, w, err, out)


@njit(cache=True)
def _accept(kind, t, y, p, w):
    if kind == COEFF:
        return coeff_accept(t, y, p, w)
    return 0


@njit(cache=True)
def _emit(kind, t, y, p, w, row):
    if kind == COEFF:
        coeff_emit(t, y, p, w, row)
    else:
        row[:] = y
