"""Pure numpy trajectory kernel, vectorized over trajectories.

Consumes the same pre-drawn uniforms as the compiled kernel and reproduces its
arithmetic step for step, so both backends return identical outcomes.
"""

import numpy as np

OP_U1, OP_CZ, OP_DEP1, OP_DEP2, OP_AMPD, OP_DEPH = range(6)


def _apply_u1(re, im, rows, i0, i1, mre, mim, k):
    ar0 = re[rows][:, i0]
    ai0 = im[rows][:, i0]
    ar1 = re[rows][:, i1]
    ai1 = im[rows][:, i1]
    m00r, m00i = mre[k, 0, 0], mim[k, 0, 0]
    m01r, m01i = mre[k, 0, 1], mim[k, 0, 1]
    m10r, m10i = mre[k, 1, 0], mim[k, 1, 0]
    m11r, m11i = mre[k, 1, 1], mim[k, 1, 1]
    nr0 = (m00r * ar0 - m00i * ai0) + (m01r * ar1 - m01i * ai1)
    ni0 = (m00r * ai0 + m00i * ar0) + (m01r * ai1 + m01i * ar1)
    nr1 = (m10r * ar0 - m10i * ai0) + (m11r * ar1 - m11i * ai1)
    ni1 = (m10r * ai0 + m10i * ar0) + (m11r * ai1 + m11i * ar1)
    if isinstance(rows, slice):
        re[:, i0], im[:, i0], re[:, i1], im[:, i1] = nr0, ni0, nr1, ni1
    else:
        sub_re, sub_im = re[rows], im[rows]
        sub_re[:, i0], sub_im[:, i0], sub_re[:, i1], sub_im[:, i1] = nr0, ni0, nr1, ni1
        re[rows], im[rows] = sub_re, sub_im


def run_trajectories(opcode, qa, qb, param, midx, mre, mim, nq, meas, ro01, ro10, uni):
    B = uni.shape[0]
    dim = 1 << nq
    states = np.arange(dim)
    re = np.zeros((B, dim))
    im = np.zeros((B, dim))
    re[:, 0] = 1.0
    everyone = slice(None)

    def split(q):
        m = 1 << (nq - 1 - q)
        return m, states[(states & m) == 0], states[(states & m) != 0]

    d = 0
    for i in range(len(opcode)):
        op = opcode[i]
        if op == OP_U1:
            _, i0, i1 = split(qa[i])
            _apply_u1(re, im, everyone, i0, i1, mre, mim, midx[i])
        elif op == OP_CZ:
            ma, mb = 1 << (nq - 1 - qa[i]), 1 << (nq - 1 - qb[i])
            both = states[((states & ma) != 0) & ((states & mb) != 0)]
            re[:, both] = -re[:, both]
            im[:, both] = -im[:, both]
        elif op in (OP_DEP1, OP_DEP2):
            u = uni[:, d]
            d += 1
            p = param[i]
            hit = u < p
            if not hit.any():
                continue
            n_paulis = 4 if op == OP_DEP1 else 16
            k = np.minimum(((u / p) * float(n_paulis)).astype(np.int64), n_paulis - 1)
            if op == OP_DEP1:
                parts = [(qa[i], k)]
            else:
                parts = [(qa[i], k >> 2), (qb[i], k & 3)]
            for q, kq in parts:
                _, i0, i1 = split(q)
                for pauli in (1, 2, 3):
                    rows = np.nonzero(hit & (kq == pauli))[0]
                    if rows.size:
                        _apply_u1(re, im, rows, i0, i1, mre, mim, pauli)
        elif op == OP_AMPD:
            u = uni[:, d]
            d += 1
            g = param[i]
            m, i0, i1 = split(qa[i])
            p1 = np.zeros(B)
            for s in i1:
                p1 = p1 + (re[:, s] * re[:, s] + im[:, s] * im[:, s])
            jump = u < g * p1
            stay = ~jump
            if jump.any():
                rows = np.nonzero(jump)[0]
                scale = (1.0 / np.sqrt(p1[rows]))[:, None]
                sub_re, sub_im = re[rows], im[rows]
                sub_re[:, i0] = sub_re[:, i1] * scale
                sub_im[:, i0] = sub_im[:, i1] * scale
                sub_re[:, i1] = 0.0
                sub_im[:, i1] = 0.0
                re[rows], im[rows] = sub_re, sub_im
            if stay.any():
                rows = np.nonzero(stay)[0]
                f0 = 1.0 / np.sqrt(1.0 - g * p1[rows])
                f1 = (np.sqrt(1.0 - g) * f0)[:, None]
                f0 = f0[:, None]
                sub_re, sub_im = re[rows], im[rows]
                sub_re[:, i1] = sub_re[:, i1] * f1
                sub_im[:, i1] = sub_im[:, i1] * f1
                sub_re[:, i0] = sub_re[:, i0] * f0
                sub_im[:, i0] = sub_im[:, i0] * f0
                re[rows], im[rows] = sub_re, sub_im
        elif op == OP_DEPH:
            u = uni[:, d]
            d += 1
            rows = np.nonzero(u < param[i])[0]
            if rows.size:
                _, i0, i1 = split(qa[i])
                _apply_u1(re, im, rows, i0, i1, mre, mim, 3)

    u = uni[:, d]
    d += 1
    w = re * re + im * im
    cum = np.cumsum(w, axis=1)
    above = cum > u[:, None]
    chosen = np.argmax(above, axis=1)
    missing = ~above.any(axis=1)
    if missing.any():
        nz = w[missing] > 0.0
        chosen[missing] = dim - 1 - np.argmax(nz[:, ::-1], axis=1)
    outcome = np.zeros(B, dtype=np.int64)
    for j, q in enumerate(meas):
        bit = (chosen >> (nq - 1 - q)) & 1
        u = uni[:, d + j]
        flipped = np.where(bit == 0, u < ro01[j], ~(u < ro10[j]))
        outcome = (outcome << 1) | flipped.astype(np.int64)
    return outcome
