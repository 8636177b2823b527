"""Named gradient checks over every differentiable building block.

Each check builds a small seeded instance, compares tape gradients against
central finite differences over every parameter coordinate, and reports the
max relative error. Piecewise-linear kinks (relu) make finite differences
meaningless within eps of zero, so checks through relu redraw
deterministically until every pre-activation clears a margin well above
eps; the redraw is a property of the probe, not of the gradients under
test.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    LstmParams,
    RngStream,
    Tape,
    Tensor,
    add,
    bilstm,
    conv1d_same,
    cross_entropy,
    dense,
    grad_check,
    matmul,
    param,
    relu,
    softmax_rows,
    sum_all,
)
from .chaincrf import Emissions, Transitions, crf_nll
from .embed import N_SHAPE_FEATURES, SentenceEncoding
from .tagger import TaggerConfig, build, loss

SUITE_TOLERANCE = 1e-4
DEFAULT_ROUNDS = 5
_KINK_MARGIN = 5e-3  # far above the 1e-4 finite-difference step
_EPS = 1e-4


def _attach(data: np.ndarray, tape: Tape) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), tape=tape)


def _check_dense(stream: RngStream) -> float:
    """relu(x @ w + b), pre-activations redrawn clear of the kink."""
    for salt in range(100, 200):
        r = stream.child(salt)
        x = r.uniform(-1.5, 1.5, (4, 3))
        w = r.uniform(-1.0, 1.0, (3, 2))
        b = r.uniform(-0.5, 0.5, 2)
        if np.abs(x @ w + b).min() > _KINK_MARGIN:
            break
    else:
        raise RuntimeError("no kink-free dense draw found")
    w_t, b_t = param(w), param(b)

    def build_loss():
        tape = Tape()
        return sum_all(dense(_attach(x, tape), w_t, b_t, activation="relu"))

    return grad_check(build_loss, [w_t, b_t], eps=_EPS)


def _check_conv(stream: RngStream) -> float:
    """Width-2 and width-3 banks on one input, summed."""
    r = stream.child(1)
    x = r.uniform(-1.0, 1.0, (5, 3))
    params = []
    banks = []
    for width in (2, 3):
        k = param(r.uniform(-1.0, 1.0, (2, width, 3)))
        b = param(r.uniform(-0.5, 0.5, 2))
        params += [k, b]
        banks.append((k, b))

    def build_loss():
        tape = Tape()
        xt = _attach(x, tape)
        total = None
        for k, b in banks:
            term = sum_all(conv1d_same(xt, k, b))
            total = term if total is None else add(total, term)
        return total

    return grad_check(build_loss, params, eps=_EPS)


def _lstm_params(r: RngStream, d: int, h: int) -> LstmParams:
    return LstmParams(
        wx=param(r.uniform(-0.8, 0.8, (d, 4 * h))),
        wh=param(r.uniform(-0.8, 0.8, (h, 4 * h))),
        b=param(r.uniform(-0.3, 0.3, 4 * h)),
    )


def _check_bilstm(stream: RngStream, dropped: bool) -> float:
    r = stream.child(2)
    x = r.uniform(-1.0, 1.0, (4, 2))
    fwd = _lstm_params(r.child(0), 2, 2)
    bwd = _lstm_params(r.child(1), 2, 2)
    mask_seed = stream.child(3).integers(0, 2**31)

    def build_loss():
        tape = Tape()
        xt = _attach(x, tape)
        if dropped:
            out = bilstm(xt, fwd, bwd, dropout=0.5, recurrent_dropout=0.2,
                         mode="train", rng=RngStream(mask_seed))
        else:
            out = bilstm(xt, fwd, bwd)
        return sum_all(out)

    return grad_check(build_loss, fwd.tensors() + bwd.tensors(), eps=_EPS)


def _check_softmax_cross_entropy(stream: RngStream) -> float:
    r = stream.child(4)
    x = r.uniform(-1.0, 1.0, (5, 3))
    w = param(r.uniform(-1.0, 1.0, (3, 4)))
    gold = [int(r.child(i).integers(0, 4)) for i in range(5)]

    def build_loss():
        tape = Tape()
        return cross_entropy(softmax_rows(matmul(_attach(x, tape), w)), gold)

    return grad_check(build_loss, [w], eps=_EPS)


def _check_crf_nll(stream: RngStream) -> float:
    r = stream.child(5)
    n, t_count = 4, 3
    e_scores = param(r.uniform(-2.0, 2.0, (n, t_count)))
    trans = param(r.uniform(-2.0, 2.0, (t_count, t_count)))
    start = param(r.uniform(-2.0, 2.0, t_count))
    stop = param(r.uniform(-2.0, 2.0, t_count))
    gold = [int(r.child(i).integers(0, t_count)) for i in range(n)]

    def build_loss():
        tape = Tape()
        carrier = _attach(np.zeros((n, t_count)), tape)
        return crf_nll(
            Emissions(add(e_scores, carrier)), Transitions(trans, start, stop), gold
        )

    return grad_check(build_loss, [e_scores, trans, start, stop], eps=_EPS)


def _conv_margin(model, word_input: np.ndarray) -> float:
    """Smallest |pre-activation| the conv banks would see, using the same op
    the forward pass runs (no tape, pure evaluation)."""
    x = Tensor(word_input)
    margin = np.inf
    for width in model.config.filter_widths:
        pre = conv1d_same(
            x,
            model.params[f"conv{width}_kernels"],
            model.params[f"conv{width}_bias"],
        )
        margin = min(margin, float(np.abs(pre.data).min()))
    return margin


def _check_tagger_loss(stream: RngStream, head: str) -> float:
    """Full network loss in train mode with frozen dropout masks; every
    trainable parameter is finite-differenced."""
    config = TaggerConfig(
        filters_per_width=2,
        lstm_hidden=2,
        head=head,
        batch_size=1,
        seed=0,
    )
    emb_dim, pos_count, tag_count, n = 3, 2, 3, 4
    tag_vocab = ("O", "B-X", "I-X")
    for salt in range(300, 400):
        r = stream.child(salt)
        model = build(config, emb_dim, pos_count, tag_count, r.child(0),
                      tag_vocab=tag_vocab)
        word_input = r.uniform(-1.0, 1.0, (n, emb_dim + N_SHAPE_FEATURES))
        if _conv_margin(model, word_input) > _KINK_MARGIN:
            break
    else:
        raise RuntimeError("no kink-free tagger draw found")
    pos_input = np.zeros((n, pos_count))
    for i in range(n):
        pos_input[i, int(r.child(i).integers(0, pos_count))] = 1.0
    enc = SentenceEncoding(word_input, pos_input, ("w",) * n)
    gold = [tag_vocab[int(r.child(50 + i).integers(0, tag_count))] for i in range(n)]
    mask_seed = r.child(99).integers(0, 2**31)
    params = model.trainable()

    def build_loss():
        tape = Tape()
        return loss(model, enc, gold, mode="train", rng=RngStream(mask_seed),
                    tape=tape)

    return grad_check(build_loss, params, eps=_EPS)


CHECKS = (
    ("dense", _check_dense),
    ("conv1d_same", _check_conv),
    ("bilstm", lambda s: _check_bilstm(s, dropped=False)),
    ("bilstm_dropout", lambda s: _check_bilstm(s, dropped=True)),
    ("softmax_cross_entropy", _check_softmax_cross_entropy),
    ("crf_nll", _check_crf_nll),
    ("tagger_loss_softmax", lambda s: _check_tagger_loss(s, "softmax")),
    ("tagger_loss_crf", lambda s: _check_tagger_loss(s, "crf")),
)


def gradient_suite(seed: int = 0, rounds: int = DEFAULT_ROUNDS) -> dict[str, float]:
    """Max relative error per check across ``rounds`` seeded repetitions."""
    results = {name: 0.0 for name, _ in CHECKS}
    for round_index in range(rounds):
        base = RngStream(seed).child(round_index)
        for offset, (name, fn) in enumerate(CHECKS):
            results[name] = max(results[name], fn(base.child(offset)))
    return results


def format_suite(results: dict[str, float]) -> str:
    width = max(len(name) for name in results)
    lines = [
        f"{name:<{width}}  {err:.3e}  {'ok' if err < SUITE_TOLERANCE else 'FAIL'}"
        for name, err in results.items()
    ]
    return "\n".join(lines)
