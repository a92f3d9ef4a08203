"""Hot numeric kernels, each with a numba loop version and a numpy version.

The public names at the bottom of the module are bound to one or the other
according to :data:`uashape._accel.USE_NUMBA`. Both variants are importable
directly (``*_loops`` / ``*_numpy``) so tests can cross-check them.

Observation vectors are sparse 0/1 encodings, so the loop kernels skip zero
inputs in the first layer; the numpy kernels use dense products.
"""

import numpy as np

from uashape._accel import njit, select

UNREACHABLE = 1 << 30

_DR = np.array([0, 1, 0, -1], dtype=np.int64)
_DC = np.array([1, 0, -1, 0], dtype=np.int64)


# ---------------------------------------------------------------------------
# planner cost tables
# ---------------------------------------------------------------------------

def _cost_table_loops(passable, finish):
    """Actions needed to finish a mission from every (row, col, dir) pose.

    ``passable[r, c]``: the agent may stand on / walk into the cell.
    ``finish[r, c]``: facing this cell allows the completing action.
    Turns, forward moves and the completing action all cost 1.
    """
    H, W = passable.shape
    dist = np.full((H, W, 4), UNREACHABLE, dtype=np.int64)
    for r in range(1, H - 1):
        for c in range(1, W - 1):
            if not passable[r, c]:
                continue
            for d in range(4):
                if finish[r + _DR[d], c + _DC[d]]:
                    dist[r, c, d] = 1
    changed = True
    while changed:
        changed = False
        for r in range(1, H - 1):
            for c in range(1, W - 1):
                if not passable[r, c]:
                    continue
                for d in range(4):
                    best = dist[r, c, d]
                    cand = dist[r, c, (d + 3) % 4] + 1
                    if cand < best:
                        best = cand
                    cand = dist[r, c, (d + 1) % 4] + 1
                    if cand < best:
                        best = cand
                    fr = r + _DR[d]
                    fc = c + _DC[d]
                    if passable[fr, fc]:
                        cand = dist[fr, fc, d] + 1
                        if cand < best:
                            best = cand
                    if best < dist[r, c, d]:
                        dist[r, c, d] = best
                        changed = True
    return dist


def _cost_table_numpy(passable, finish):
    H, W = passable.shape
    dist = np.full((H, W, 4), UNREACHABLE, dtype=np.int64)
    # front[..., d] = value of the neighbouring cell in direction d
    def front(a):
        out = np.zeros(a.shape[:2] + (4,), dtype=a.dtype)
        out[:, :-1, 0] = a[:, 1:]
        out[:-1, :, 1] = a[1:, :]
        out[:, 1:, 2] = a[:, :-1]
        out[1:, :, 3] = a[:-1, :]
        return out

    mask = passable[:, :, None] & np.ones(4, dtype=bool)
    dist[mask & front(finish)] = 1
    front_ok = front(passable)
    while True:
        turn = np.minimum(np.roll(dist, 1, axis=2), np.roll(dist, -1, axis=2)) + 1
        ahead = np.full_like(dist, UNREACHABLE)
        ahead[:, :-1, 0] = dist[:, 1:, 0]
        ahead[:-1, :, 1] = dist[1:, :, 1]
        ahead[:, 1:, 2] = dist[:, :-1, 2]
        ahead[1:, :, 3] = dist[:-1, :, 3]
        ahead = np.where(front_ok, ahead + 1, UNREACHABLE)
        new = np.where(mask, np.minimum(dist, np.minimum(turn, ahead)), UNREACHABLE)
        new = np.minimum(new, UNREACHABLE)
        if np.array_equal(new, dist):
            return dist
        dist = new


# ---------------------------------------------------------------------------
# actor / critic
# ---------------------------------------------------------------------------

def _actor_probs_loops(x, W1, b1, W2, b2):
    n_in, n_hid = W1.shape
    n_out = W2.shape[1]
    pre = b1.copy()
    for i in range(n_in):
        xi = x[i]
        if xi != 0.0:
            for j in range(n_hid):
                pre[j] += xi * W1[i, j]
    z = b2.copy()
    for j in range(n_hid):
        hj = np.tanh(pre[j])
        for k in range(n_out):
            z[k] += hj * W2[j, k]
    zmax = z.max()
    p = np.exp(z - zmax)
    return p / p.sum()


def _actor_probs_numpy(x, W1, b1, W2, b2):
    h = np.tanh(x @ W1 + b1)
    z = h @ W2 + b2
    p = np.exp(z - z.max())
    return p / p.sum()


def _critic_values_loops(X, W1, b1, w2, b2):
    m = X.shape[0]
    n_in, n_hid = W1.shape
    out = np.empty(m)
    pre = np.empty(n_hid)
    for s in range(m):
        pre[:] = b1
        for i in range(n_in):
            xi = X[s, i]
            if xi != 0.0:
                for j in range(n_hid):
                    pre[j] += xi * W1[i, j]
        v = b2[0]
        for j in range(n_hid):
            v += np.tanh(pre[j]) * w2[j]
        out[s] = v
    return out


def _critic_values_numpy(X, W1, b1, w2, b2):
    return np.tanh(X @ W1 + b1) @ w2 + b2[0]


def _ppo_loss_grad_loops(X, actions, old_logp, adv, returns, p_llm, c_agent,
                         W1a, b1a, W2a, b2a, W1c, b1c, w2c, b2c,
                         clip_eps, vf_coef, ent_coef,
                         gW1a, gb1a, gW2a, gb2a, gW1c, gb1c, gw2c, gb2c):
    """Clipped-surrogate PPO loss on a minibatch, gradients written in place.

    The policy probability of each action is the mixture
    ``(1 - c_agent) * p_llm + c_agent * softmax(actor logits)``.
    Returns ``(total, policy_loss, value_loss, mean_entropy, mean_ratio)``.
    """
    m, n_in = X.shape
    n_hid = W1a.shape[1]
    n_out = W2a.shape[1]
    gW1a[:] = 0.0
    gb1a[:] = 0.0
    gW2a[:] = 0.0
    gb2a[:] = 0.0
    gW1c[:] = 0.0
    gb1c[:] = 0.0
    gw2c[:] = 0.0
    gb2c[:] = 0.0
    pol_sum = 0.0
    val_sum = 0.0
    ent_sum = 0.0
    ratio_sum = 0.0
    inv_m = 1.0 / m
    ha = np.empty(n_hid)
    hc = np.empty(n_hid)
    z = np.empty(n_out)
    dz = np.empty(n_out)
    dh = np.empty(n_hid)
    for s in range(m):
        # actor forward
        ha[:] = b1a
        hc[:] = b1c
        for i in range(n_in):
            xi = X[s, i]
            if xi != 0.0:
                for j in range(n_hid):
                    ha[j] += xi * W1a[i, j]
                    hc[j] += xi * W1c[i, j]
        for j in range(n_hid):
            ha[j] = np.tanh(ha[j])
            hc[j] = np.tanh(hc[j])
        z[:] = b2a
        for j in range(n_hid):
            for k in range(n_out):
                z[k] += ha[j] * W2a[j, k]
        zmax = z.max()
        p = np.exp(z - zmax)
        p /= p.sum()
        a = actions[s]
        c = c_agent[s]
        mix = (1.0 - c) * p_llm[s, a] + c * p[a]
        logp = np.log(mix)
        ratio = np.exp(logp - old_logp[s])
        A = adv[s]
        lo = 1.0 - clip_eps
        hi = 1.0 + clip_eps
        clipped = ratio
        if clipped < lo:
            clipped = lo
        elif clipped > hi:
            clipped = hi
        s1 = ratio * A
        s2 = clipped * A
        if s1 <= s2:
            pol_sum -= s1
            g_logp = -A * ratio
        else:
            pol_sum -= s2
            g_logp = 0.0
        ratio_sum += ratio
        ent = 0.0
        for k in range(n_out):
            if p[k] > 0.0:
                ent -= p[k] * np.log(p[k])
        ent_sum += ent
        scale = g_logp * c * p[a] / mix
        for k in range(n_out):
            lp = np.log(p[k]) if p[k] > 0.0 else 0.0
            dz[k] = -scale * p[k] + ent_coef * p[k] * (lp + ent)
        dz[a] += scale
        for k in range(n_out):
            dz[k] *= inv_m
        # critic forward
        v = b2c[0]
        for j in range(n_hid):
            v += hc[j] * w2c[j]
        err = v - returns[s]
        val_sum += err * err
        dv = 2.0 * vf_coef * err * inv_m
        # backward, output layers
        for k in range(n_out):
            gb2a[k] += dz[k]
        for j in range(n_hid):
            acc = 0.0
            for k in range(n_out):
                gW2a[j, k] += ha[j] * dz[k]
                acc += W2a[j, k] * dz[k]
            dh[j] = acc * (1.0 - ha[j] * ha[j])
            gb1a[j] += dh[j]
        gb2c[0] += dv
        for j in range(n_hid):
            gw2c[j] += hc[j] * dv
            dhc = w2c[j] * dv * (1.0 - hc[j] * hc[j])
            hc[j] = dhc
            gb1c[j] += dhc
        for i in range(n_in):
            xi = X[s, i]
            if xi != 0.0:
                for j in range(n_hid):
                    gW1a[i, j] += xi * dh[j]
                    gW1c[i, j] += xi * hc[j]
    pol = pol_sum * inv_m
    val = val_sum * inv_m
    ent = ent_sum * inv_m
    total = pol + vf_coef * val - ent_coef * ent
    return total, pol, val, ent, ratio_sum * inv_m


def _ppo_loss_grad_numpy(X, actions, old_logp, adv, returns, p_llm, c_agent,
                         W1a, b1a, W2a, b2a, W1c, b1c, w2c, b2c,
                         clip_eps, vf_coef, ent_coef,
                         gW1a, gb1a, gW2a, gb2a, gW1c, gb1c, gw2c, gb2c):
    m = X.shape[0]
    rows = np.arange(m)
    ha = np.tanh(X @ W1a + b1a)
    z = ha @ W2a + b2a
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    pa = p[rows, actions]
    mix = (1.0 - c_agent) * p_llm[rows, actions] + c_agent * pa
    ratio = np.exp(np.log(mix) - old_logp)
    s1 = ratio * adv
    s2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    unclipped = s1 <= s2
    pol = -np.where(unclipped, s1, s2).mean()
    g_logp = np.where(unclipped, -adv * ratio, 0.0)
    logp_all = np.log(np.where(p > 0.0, p, 1.0))
    ent_i = -(p * logp_all).sum(axis=1)

    scale = g_logp * c_agent * pa / mix
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dz = scale[:, None] * (onehot - p) + ent_coef * p * (logp_all + ent_i[:, None])
    dz /= m

    hc = np.tanh(X @ W1c + b1c)
    v = hc @ w2c + b2c[0]
    err = v - returns
    dv = 2.0 * vf_coef * err / m

    gW2a[:] = ha.T @ dz
    gb2a[:] = dz.sum(axis=0)
    dpre = (dz @ W2a.T) * (1.0 - ha**2)
    gW1a[:] = X.T @ dpre
    gb1a[:] = dpre.sum(axis=0)
    gw2c[:] = hc.T @ dv
    gb2c[:] = dv.sum()
    dprec = np.outer(dv, w2c) * (1.0 - hc**2)
    gW1c[:] = X.T @ dprec
    gb1c[:] = dprec.sum(axis=0)

    val = float((err**2).mean())
    ent = float(ent_i.mean())
    total = pol + vf_coef * val - ent_coef * ent
    return total, pol, val, ent, float(ratio.mean())


def _adam_loops(params, grad, m, v, lr, beta1, beta2, eps, t):
    step = lr / (1.0 - beta1**t)
    inv_bc2 = 1.0 / (1.0 - beta2**t)
    keep1 = 1.0 - beta1
    keep2 = 1.0 - beta2
    for i in range(params.shape[0]):
        g = grad[i]
        mi = beta1 * m[i] + keep1 * g
        vi = beta2 * v[i] + keep2 * g * g
        m[i] = mi
        v[i] = vi
        params[i] -= step * mi / (np.sqrt(vi * inv_bc2) + eps)


def _adam_numpy(params, grad, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    params -= lr * (m / (1.0 - beta1**t)) / (np.sqrt(v / (1.0 - beta2**t)) + eps)


cost_table_loops = njit(_cost_table_loops)
actor_probs_loops = njit(_actor_probs_loops)
critic_values_loops = njit(_critic_values_loops)
ppo_loss_grad_loops = njit(_ppo_loss_grad_loops)
adam_loops = njit(_adam_loops)

cost_table_numpy = _cost_table_numpy
actor_probs_numpy = _actor_probs_numpy
critic_values_numpy = _critic_values_numpy
ppo_loss_grad_numpy = _ppo_loss_grad_numpy
adam_numpy = _adam_numpy

cost_table = select(cost_table_loops, cost_table_numpy)
actor_probs = select(actor_probs_loops, actor_probs_numpy)
critic_values = select(critic_values_loops, critic_values_numpy)
ppo_loss_grad = select(ppo_loss_grad_loops, ppo_loss_grad_numpy)
adam_step = select(adam_loops, adam_numpy)
