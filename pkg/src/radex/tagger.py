"""Bidirectional recurrent token tagger over frozen word embeddings.

Architecture, per token t with embedding x_t::

    f_t = tanh(x_t Wf_x + f_{t-1} Wf_h + bf)      left to right, f_{-1} = 0
    b_t = tanh(x_t Wb_x + b_{t+1} Wb_h + bb)      right to left, b_T = 0
    p_t = softmax([f_t, b_t] Wo + bo)             column 1 is KEYWORD

Training minimises mean per-token cross-entropy with plain SGD, one sequence
at a time, clipping the global gradient norm. Embeddings never receive a
gradient.

Out-of-vocabulary words get a vector derived from the word alone: the 64-bit
FNV-1a hash of its UTF-8 bytes seeds a SplitMix64 stream, and component k is
``-0.25 + 0.5 * u_k`` where ``u_k`` is the k-th draw mapped to [0, 1) by
taking its top 53 bits.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from radex.corpus import Report, SplitMix64, shuffled
from radex.errors import (
    DimensionMismatch,
    EmptyFile,
    EmptySequence,
    EmptyTrainingSet,
    ModelFormatError,
)
from radex.textprep import KEYWORD, NONKEYWORD, PLACEHOLDER, Label, LabeledSequence, tokenize_report

log = logging.getLogger(__name__)

MAGIC = b"RADEXM1"
FORMAT_VERSION = 1
PARAM_NAMES = ("Wf_x", "Wf_h", "bf", "Wb_x", "Wb_h", "bb", "Wo", "bo")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def oov_vector(word: str, dim: int) -> np.ndarray:
    rng = SplitMix64(fnv1a64(word.encode("utf-8")))
    return np.array([-0.25 + 0.5 * rng.uniform() for _ in range(dim)])


class EmbeddingTable:
    """Word vectors loaded from a GloVe-style text file, total over all words."""

    oov_policy = "fnv1a64 -> splitmix64 -> uniform[-0.25, 0.25]"

    def __init__(self, dim: int, vocab: dict[str, int] | None = None,
                 matrix: np.ndarray | None = None):
        if dim <= 0:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self.vocab = dict(vocab or {})
        if matrix is None:
            matrix = np.zeros((len(self.vocab), dim))
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.shape != (len(self.vocab), dim):
            raise ValueError(f"matrix shape {self.matrix.shape} does not fit vocab")
        self.duplicates = 0
        self._oov: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def lookup(self, word: str) -> np.ndarray:
        row = self.vocab.get(word)
        if row is not None:
            return self.matrix[row]
        vec = self._oov.get(word)
        if vec is None:
            vec = self._oov[word] = oov_vector(word, self.dim)
        return vec

    def embed(self, words: Sequence[str]) -> np.ndarray:
        return np.stack([self.lookup(w) for w in words])


def load_embeddings(path: str | Path, dim: int = 100) -> EmbeddingTable:
    vocab: dict[str, int] = {}
    rows = []
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DimensionMismatch(lineno, dim, len(parts) - 1)
            word = parts[0]
            if word in vocab:
                duplicates += 1
                continue
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise DimensionMismatch(lineno, dim, len(parts) - 1) from None
            vocab[word] = len(vocab)
    if not vocab:
        raise EmptyFile(f"{path}: no embedding rows")
    if duplicates:
        log.warning("%s: %d duplicate words ignored", path, duplicates)
    table = EmbeddingTable(dim, vocab, np.array(rows, dtype=np.float64))
    table.duplicates = duplicates
    return table


def param_shapes(dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "Wf_x": (dim, hidden),
        "Wf_h": (hidden, hidden),
        "bf": (hidden,),
        "Wb_x": (dim, hidden),
        "Wb_h": (hidden, hidden),
        "bb": (hidden,),
        "Wo": (2 * hidden, 2),
        "bo": (2,),
    }


@dataclass
class TaggerModel:
    embedding: EmbeddingTable
    params: dict[str, np.ndarray]
    hidden_size: int
    seed: int = 0
    version: int = FORMAT_VERSION

    def copy(self) -> "TaggerModel":
        return TaggerModel(
            self.embedding,
            {k: v.copy() for k, v in self.params.items()},
            self.hidden_size,
            self.seed,
            self.version,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params.values())


def init_model(embedding: EmbeddingTable, hidden_size: int = 64, seed: int = 0,
               scale: float = 0.1) -> TaggerModel:
    """Parameters drawn uniformly from [-scale, scale] by SplitMix64(seed).

    Draws fill the blocks in ``PARAM_NAMES`` order, each row-major.
    """
    if hidden_size < 1:
        raise ValueError("hidden_size must be >= 1")
    rng = SplitMix64(seed)
    params = {}
    for name, shape in param_shapes(embedding.dim, hidden_size).items():
        size = math.prod(shape)
        values = [scale * (2.0 * rng.uniform() - 1.0) for _ in range(size)]
        params[name] = np.array(values, dtype=np.float64).reshape(shape)
    return TaggerModel(embedding, params, hidden_size, seed)


def zero_model(embedding: EmbeddingTable, hidden_size: int) -> TaggerModel:
    params = {k: np.zeros(s) for k, s in param_shapes(embedding.dim, hidden_size).items()}
    return TaggerModel(embedding, params, hidden_size)


@dataclass
class ForwardCache:
    x: np.ndarray
    hf: np.ndarray
    hb: np.ndarray
    hidden: np.ndarray
    probs: np.ndarray


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_x(params: dict[str, np.ndarray], x: np.ndarray) -> ForwardCache:
    T = x.shape[0]
    h = params["bf"].shape[0]
    af = x @ params["Wf_x"] + params["bf"]
    ab = x @ params["Wb_x"] + params["bb"]
    hf = np.empty((T, h))
    hb = np.empty((T, h))
    Wf_h, Wb_h = params["Wf_h"], params["Wb_h"]
    prev = np.zeros(h)
    for t in range(T):
        prev = hf[t] = np.tanh(af[t] + prev @ Wf_h)
    prev = np.zeros(h)
    for t in range(T - 1, -1, -1):
        prev = hb[t] = np.tanh(ab[t] + prev @ Wb_h)
    hidden = np.concatenate([hf, hb], axis=1)
    probs = _softmax(hidden @ params["Wo"] + params["bo"])
    return ForwardCache(x, hf, hb, hidden, probs)


def forward(model: TaggerModel, norms: Sequence[str]) -> tuple[np.ndarray, ForwardCache]:
    """Per-token (NONKEYWORD, KEYWORD) probabilities and cached activations."""
    if len(norms) == 0:
        raise EmptySequence("cannot run the tagger on an empty sequence")
    cache = _forward_x(model.params, model.embedding.embed(norms))
    return cache.probs, cache


def _targets(sequence: LabeledSequence) -> np.ndarray:
    return np.array([1 if l is KEYWORD else 0 for l in sequence.labels], dtype=np.intp)


def _loss_from_probs(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _backward(params: dict[str, np.ndarray], cache: ForwardCache,
              y: np.ndarray) -> dict[str, np.ndarray]:
    T = len(y)
    h = params["bf"].shape[0]
    dlogits = cache.probs.copy()
    dlogits[np.arange(T), y] -= 1.0
    dlogits /= T
    grads = {
        "Wo": cache.hidden.T @ dlogits,
        "bo": dlogits.sum(axis=0),
    }
    dhidden = dlogits @ params["Wo"].T
    dhf, dhb = dhidden[:, :h], dhidden[:, h:]

    # Left-to-right chain: gradient flows from t+1 back to t.
    daf = np.empty((T, h))
    carry = np.zeros(h)
    Wf_hT = params["Wf_h"].T
    for t in range(T - 1, -1, -1):
        daf[t] = (dhf[t] + carry) * (1.0 - cache.hf[t] ** 2)
        carry = daf[t] @ Wf_hT
    prev_f = np.vstack([np.zeros((1, h)), cache.hf[:-1]])

    # Right-to-left chain: gradient flows from t-1 back to t.
    dab = np.empty((T, h))
    carry = np.zeros(h)
    Wb_hT = params["Wb_h"].T
    for t in range(T):
        dab[t] = (dhb[t] + carry) * (1.0 - cache.hb[t] ** 2)
        carry = dab[t] @ Wb_hT
    next_b = np.vstack([cache.hb[1:], np.zeros((1, h))])

    grads["Wf_x"] = cache.x.T @ daf
    grads["Wf_h"] = prev_f.T @ daf
    grads["bf"] = daf.sum(axis=0)
    grads["Wb_x"] = cache.x.T @ dab
    grads["Wb_h"] = next_b.T @ dab
    grads["bb"] = dab.sum(axis=0)
    return grads


def loss(model: TaggerModel, sequence: LabeledSequence) -> float:
    probs, _ = forward(model, sequence.norms)
    return _loss_from_probs(probs, _targets(sequence))


def loss_and_grads(model: TaggerModel,
                   sequence: LabeledSequence) -> tuple[float, dict[str, np.ndarray]]:
    probs, cache = forward(model, sequence.norms)
    y = _targets(sequence)
    return _loss_from_probs(probs, y), _backward(model.params, cache, y)


GradFn = Callable[[TaggerModel, LabeledSequence], tuple[float, dict[str, np.ndarray]]]


def grad_check(model: TaggerModel, sequence: LabeledSequence, step: float = 1e-4,
               tolerance: float = 1e-3, grad_fn: GradFn = loss_and_grads) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(1e-8, |a| + |n|)``. Every parameter
    entry is perturbed. ``grad_fn`` lets a test substitute a deliberately
    broken backward pass.
    """
    _, analytic = grad_fn(model, sequence)
    x = model.embedding.embed(sequence.norms)
    y = _targets(sequence)
    params = {k: v.copy() for k, v in model.params.items()}
    worst, where = 0.0, None
    for name in PARAM_NAMES:
        p = params[name]
        flat = p.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = _loss_from_probs(_forward_x(params, x).probs, y)
            flat[i] = orig - step
            minus = _loss_from_probs(_forward_x(params, x).probs, y)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            err = abs(grad[i] - numeric) / max(1e-8, abs(grad[i]) + abs(numeric))
            if err > worst:
                worst, where = err, (name, i)
    if worst > tolerance:
        log.warning("gradient check failed: rel. error %.3g at %s", worst, where)
    return worst


def predict_labels(model: TaggerModel, norms: Sequence[str]) -> list[Label]:
    if not norms:
        return []
    probs, _ = forward(model, norms)
    # Exact ties go to NONKEYWORD.
    return [KEYWORD if p[1] > p[0] else NONKEYWORD for p in probs]


def predict_terms(model: TaggerModel, report: Report) -> list[str]:
    tokens = tokenize_report(report)
    if not tokens:
        return []
    labels = predict_labels(model, [t.norm for t in tokens])
    terms = []
    prev = None
    for tok, label in zip(tokens, labels):
        hit = label is KEYWORD and tok.norm != PLACEHOLDER
        if hit and not (prev is not None and prev.norm == tok.norm):
            terms.append(tok.norm)
        prev = tok if hit else None
    return terms


def keyword_f1(model: TaggerModel, sequences: Sequence[LabeledSequence]) -> float:
    """Token-level micro F1 of the KEYWORD class."""
    tp = fp = fn = 0
    for seq in sequences:
        if not len(seq):
            continue
        for pred, gold in zip(predict_labels(model, seq.norms), seq.labels):
            if pred is KEYWORD and gold is KEYWORD:
                tp += 1
            elif pred is KEYWORD:
                fp += 1
            elif gold is KEYWORD:
                fn += 1
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.05
    hidden_size: int = 64
    clip: float = 5.0
    seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_f1: float
    val_f1: float | None


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float, clip: float) -> float:
    """In-place clipped SGD update; returns the pre-clip global gradient norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    scale = lr
    if clip > 0 and norm > clip:
        scale = lr * clip / norm
    for name, g in grads.items():
        params[name] -= scale * g
    return norm


def train(model: TaggerModel, train_set: Sequence[LabeledSequence],
          val_set: Sequence[LabeledSequence], cfg: TrainConfig,
          ) -> tuple[TaggerModel, list[EpochRecord]]:
    """Train a copy of ``model``; the input model is left untouched.

    With a validation set, the parameters of the best validation epoch are
    returned (on ties the later epoch wins, but only a strict improvement
    resets the patience counter).
    """
    data = [s for s in train_set if len(s)]
    if not data:
        raise EmptyTrainingSet("no non-empty training sequences")
    val = [s for s in val_set if len(s)]
    model = model.copy()
    params = model.params
    rng_seed = cfg.seed
    history: list[EpochRecord] = []
    best_f1 = -1.0
    best_params = None
    wait = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffled(range(len(data)), (rng_seed + epoch) & _MASK64)
        total = 0.0
        for idx in order:
            seq_loss, grads = loss_and_grads(model, data[idx])
            total += seq_loss
            sgd_step(params, grads, cfg.lr, cfg.clip)
        val_f1 = keyword_f1(model, val) if val else None
        record = EpochRecord(epoch, total / len(data), keyword_f1(model, data), val_f1)
        history.append(record)
        log.info("epoch %d loss %.4f train-F1 %.4f val-F1 %s", epoch,
                 record.train_loss, record.train_f1, val_f1)
        if val_f1 is None:
            continue
        if val_f1 >= best_f1:
            best_params = {k: v.copy() for k, v in params.items()}
        if val_f1 > best_f1:
            best_f1 = val_f1
            wait = 0
        else:
            wait += 1
            if cfg.patience and wait >= cfg.patience:
                break
    if best_params is not None:
        model.params = best_params
    return model, history


# Model file layout, little-endian:
#   magic "RADEXM1" | u32 version | u32 dim | u32 hidden | u64 seed | u32 vocab_size
#   vocab_size x (u32 byte_length, UTF-8 word)
#   f64[vocab_size * dim] embedding matrix, row-major
#   f64 blocks in PARAM_NAMES order, each row-major

def model_to_bytes(model: TaggerModel) -> bytes:
    emb = model.embedding
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIIQI", FORMAT_VERSION, emb.dim, model.hidden_size,
                          model.seed & _MASK64, len(emb.vocab)))
    for word, _ in sorted(emb.vocab.items(), key=lambda kv: kv[1]):
        raw = word.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(np.ascontiguousarray(emb.matrix, dtype="<f8").tobytes())
    for name in PARAM_NAMES:
        buf.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> TaggerModel:
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a radex model file (bad magic)")
    view = memoryview(data)
    pos = len(MAGIC)

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ModelFormatError("model file is truncated")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    version, dim, hidden, seed, n_vocab = struct.unpack("<IIIQI", take(24))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    if dim < 1 or hidden < 1:
        raise ModelFormatError("model dimensions must be positive")
    vocab = {}
    for i in range(n_vocab):
        (length,) = struct.unpack("<I", take(4))
        vocab[bytes(take(length)).decode("utf-8")] = i

    def floats(shape):
        count = math.prod(shape)
        return np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)

    matrix = floats((n_vocab, dim))
    params = {name: floats(shape) for name, shape in param_shapes(dim, hidden).items()}
    if pos != len(view):
        raise ModelFormatError("trailing bytes after model parameters")
    model = TaggerModel(EmbeddingTable(dim, vocab, matrix), params, hidden, seed, version)
    if not model.is_finite():
        raise ModelFormatError("model contains non-finite parameters")
    return model


def save_model(model: TaggerModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> TaggerModel:
    return model_from_bytes(Path(path).read_bytes())
