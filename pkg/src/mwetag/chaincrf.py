"""Linear-chain CRF scoring, inference, and loss.

Scores live in log-space. A labeling y of an n-token sentence scores

    start[y_0] + sum_i e[i, y_i] + sum_i trans[y_{i-1}, y_i] + stop[y_{n-1}]

with explicit start/stop vectors instead of padded boundary labels. The
emission matrix may come from any source: the neural tagger's projection
layer or a sparse feature dot product. crf_nll is differentiable with respect
to emissions and transition scores through the tape; the sparse baseline
instead consumes forward_backward marginals directly to form
expected-minus-observed feature counts.

No transition is masked as impossible (for example O followed by a
continuation label): decoding may emit such sequences and the corpus-level
orphan filter repairs them afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _check_finite(name: str, arr: np.ndarray):
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class Emissions:
    """Per-position label scores, n x T. scores may be a plain array or a
    Tensor (for the differentiable loss path)."""

    scores: object

    def __post_init__(self):
        arr = _array(self.scores)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"emission scores must be n x T with n,T >= 1, got {arr.shape}")
        _check_finite("emission scores", arr)

    @property
    def n(self) -> int:
        return _array(self.scores).shape[0]

    @property
    def label_count(self) -> int:
        return _array(self.scores).shape[1]


@dataclass(frozen=True)
class Transitions:
    """trans[a, b] scores label a followed by label b; start/stop score the
    first and last label of a sequence. Fields may be arrays or Tensors."""

    trans: object
    start: object
    stop: object

    def __post_init__(self):
        trans, start, stop = _array(self.trans), _array(self.start), _array(self.stop)
        t = trans.shape[0] if trans.ndim == 2 else -1
        if trans.ndim != 2 or trans.shape != (t, t):
            raise ValueError(f"transition matrix must be square, got {trans.shape}")
        if start.shape != (t,) or stop.shape != (t,):
            raise ValueError("start/stop vectors must match the transition matrix width")
        for name, arr in (("trans", trans), ("start", start), ("stop", stop)):
            _check_finite(name, arr)

    @property
    def label_count(self) -> int:
        return _array(self.trans).shape[0]


def _unpack(e: Emissions, t: Transitions):
    scores = _array(e.scores)
    if scores.shape[1] != t.label_count:
        raise ValueError(
            f"emissions have {scores.shape[1]} labels, transitions {t.label_count}"
        )
    return scores, _array(t.trans), _array(t.start), _array(t.stop)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def score_path(e: Emissions, t: Transitions, path) -> float:
    scores, trans, start, stop = _unpack(e, t)
    path = np.asarray(path, dtype=int)
    n = scores.shape[0]
    if path.shape != (n,):
        raise ValueError(f"path length {path.shape} does not match {n} positions")
    total = start[path[0]] + stop[path[-1]] + scores[np.arange(n), path].sum()
    if n > 1:
        total += trans[path[:-1], path[1:]].sum()
    return float(total)


def viterbi(e: Emissions, t: Transitions) -> tuple[list[int], float]:
    """Highest-scoring label sequence and its score. Ties break toward the
    lower label index at every backpointer (first maximum)."""
    scores, trans, start, stop = _unpack(e, t)
    n, t_count = scores.shape
    delta = start + scores[0]
    backptr = np.zeros((n, t_count), dtype=int)
    for i in range(1, n):
        cand = delta[:, None] + trans  # cand[a, b]: best-through-a then b
        backptr[i] = cand.argmax(axis=0)
        delta = cand.max(axis=0) + scores[i]
    delta = delta + stop
    last = int(delta.argmax())
    best_score = float(delta[last])
    path = [last]
    for i in range(n - 1, 0, -1):
        path.append(int(backptr[i, path[-1]]))
    path.reverse()
    return path, best_score


def log_partition(e: Emissions, t: Transitions) -> float:
    """log of the summed exponentiated scores over all T^n paths, by the
    forward recursion with max-subtracted log-sum-exp."""
    scores, trans, start, stop = _unpack(e, t)
    alpha = start + scores[0]
    for i in range(1, scores.shape[0]):
        alpha = _logsumexp(alpha[:, None] + trans, axis=0) + scores[i]
    return float(_logsumexp(alpha + stop, axis=0))


def forward_backward(e: Emissions, t: Transitions):
    """Posterior marginals under the CRF distribution.

    Returns (gamma, xi, logZ): gamma[i, a] = P(y_i = a), an n x T matrix whose
    rows sum to 1, and xi[i, a, b] = P(y_i = a, y_{i+1} = b), an
    (n-1) x T x T block. These are exactly the gradient of logZ with respect
    to emissions and transition counts.
    """
    scores, trans, start, stop = _unpack(e, t)
    n, t_count = scores.shape
    alpha = np.empty((n, t_count))
    alpha[0] = start + scores[0]
    for i in range(1, n):
        alpha[i] = _logsumexp(alpha[i - 1][:, None] + trans, axis=0) + scores[i]
    beta = np.empty((n, t_count))
    beta[n - 1] = stop
    for i in range(n - 2, -1, -1):
        beta[i] = _logsumexp(trans + (scores[i + 1] + beta[i + 1])[None, :], axis=1)
    log_z = float(_logsumexp(alpha[n - 1] + stop, axis=0))
    gamma = np.exp(alpha + beta - log_z)
    xi = np.empty((max(n - 1, 0), t_count, t_count))
    for i in range(n - 1):
        xi[i] = np.exp(
            alpha[i][:, None] + trans + (scores[i + 1] + beta[i + 1])[None, :] - log_z
        )
    return gamma, xi, log_z


def crf_nll(e: Emissions, t: Transitions, gold) -> Tensor:
    """Negative log-likelihood of the gold path: log_partition - score(gold).

    Returned as a Tensor; when emissions or transition fields are
    tape-attached Tensors the node records a fused backward whose gradient is
    expected counts (forward-backward marginals) minus observed gold counts.
    """
    scores, trans, start, stop = _unpack(e, t)
    n, t_count = scores.shape
    gold = np.asarray(gold, dtype=int)
    if gold.shape != (n,):
        raise ValueError(f"gold path length {gold.shape} does not match {n} positions")
    if gold.min() < 0 or gold.max() >= t_count:
        raise ValueError("gold label index out of range")

    gamma, xi, log_z = forward_backward(e, t)
    loss = log_z - score_path(e, t, gold)

    tensors = [
        x for x in (e.scores, t.trans, t.start, t.stop) if isinstance(x, Tensor)
    ]
    tape = None
    for x in tensors:
        if x.tape is not None:
            if tape is not None and tape is not x.tape:
                raise ValueError("operation mixes tensors from two tapes")
            tape = x.tape
    out = Tensor(np.asarray(loss), tape=tape)
    if tape is not None:
        observed_e = np.zeros_like(scores)
        observed_e[np.arange(n), gold] = 1.0

        def node():
            if out.grad is None:
                return
            g = float(out.grad)

            def push(x, grad_value):
                if isinstance(x, Tensor) and (x.requires_grad or x.tape is not None):
                    if x.grad is None:
                        x.grad = np.zeros_like(x.data)
                    x.grad += g * grad_value

            push(e.scores, gamma - observed_e)
            expected_trans = xi.sum(axis=0) if n > 1 else np.zeros_like(trans)
            observed_trans = np.zeros_like(trans)
            if n > 1:
                np.add.at(observed_trans, (gold[:-1], gold[1:]), 1.0)
            push(t.trans, expected_trans - observed_trans)
            start_grad = gamma[0].copy()
            start_grad[gold[0]] -= 1.0
            push(t.start, start_grad)
            stop_grad = gamma[-1].copy()
            stop_grad[gold[-1]] -= 1.0
            push(t.stop, stop_grad)

        tape.record(node)
    return out


def brute_force(e: Emissions, t: Transitions) -> tuple[list[int], float, float]:
    """Exhaustive enumeration over all T^n paths: (best path, best score,
    log partition). Testing ground truth for viterbi and log_partition;
    refuses instances with more than 10^6 paths."""
    scores, trans, start, stop = _unpack(e, t)
    n, t_count = scores.shape
    if t_count**n > 10**6:
        raise ValueError(f"instance too large for enumeration: {t_count}^{n} paths")
    # paths as a (T^n, n) index grid
    paths = np.indices((t_count,) * n).reshape(n, -1).T
    totals = start[paths[:, 0]] + stop[paths[:, -1]]
    for i in range(n):
        totals = totals + scores[i, paths[:, i]]
    for i in range(1, n):
        totals = totals + trans[paths[:, i - 1], paths[:, i]]
    best = int(totals.argmax())
    m = totals.max()
    log_z = float(m + np.log(np.exp(totals - m).sum()))
    return list(map(int, paths[best])), float(totals[best]), log_z
