"""Add-compare-select and traceback kernel shared by the Viterbi detectors."""
import numpy as np
from numba import njit

NORMALIZE_EVERY = 1024


@njit(cache=True)
def _trace(decisions, pred_state, in_bit, state, k_from, k_to, out):
    # Walk survivors from ``state`` (at time k_from + 1) down to step k_to,
    # writing the released bits into ``out`` when out is non-empty.
    for k in range(k_from, k_to - 1, -1):
        c = decisions[k, state]
        if out.shape[0] > 0:
            out[k] = in_bit[state, c]
        state = pred_state[state, c]
    return state


@njit(cache=True)
def viterbi_kernel(branch_metrics, pred_state, in_bit, init_metric, delay):
    """Minimum-metric sequence search with fixed-delay release.

    ``branch_metrics[k, n, c]`` is the metric of the ``c``-th incoming branch
    of state ``n`` at step ``k``.  Ties go to the lower ``c`` / state index.
    Returns ``(bits, final_metric, best_metric_trace)``.
    """
    n_steps, n_states, _ = branch_metrics.shape
    decisions = np.zeros((n_steps, n_states), dtype=np.uint8)
    bits = np.zeros(n_steps, dtype=np.uint8)
    released = np.zeros(n_steps, dtype=np.uint8)
    trace = np.zeros(n_steps, dtype=np.float64)
    metric = init_metric.copy()
    new_metric = np.empty(n_states, dtype=np.float64)
    empty = np.zeros(0, dtype=np.uint8)

    for k in range(n_steps):
        best = np.inf
        best_state = 0
        for n in range(n_states):
            m0 = metric[pred_state[n, 0]] + branch_metrics[k, n, 0]
            m1 = metric[pred_state[n, 1]] + branch_metrics[k, n, 1]
            if m1 < m0:
                new_metric[n] = m1
                decisions[k, n] = 1
            else:
                new_metric[n] = m0
                decisions[k, n] = 0
            if new_metric[n] < best:
                best = new_metric[n]
                best_state = n
        metric[:] = new_metric
        trace[k] = best
        if (k + 1) % NORMALIZE_EVERY == 0 and k + 1 < n_steps:
            metric -= best
        if k >= delay:
            # Release the bit of step k - delay from the current best state.
            state = _trace(decisions, pred_state, in_bit, best_state, k, k - delay + 1, empty)
            c = decisions[k - delay, state]
            bits[k - delay] = in_bit[state, c]
            released[k - delay] = 1

    best_state = 0
    for n in range(n_states):
        if metric[n] < metric[best_state]:
            best_state = n
    state = best_state
    for k in range(n_steps - 1, -1, -1):
        c = decisions[k, state]
        if released[k] == 0:
            bits[k] = in_bit[state, c]
        state = pred_state[state, c]
    return bits, metric, trace
