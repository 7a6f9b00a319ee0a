"""Two-phase training pipeline, ablation variants, checkpoints, evaluation.

Phase 1 is closed-form given the data and seed: co-occurrence counts,
label embeddings, the normalized correlation matrix, and (for contrastive
variants) the surrogate cluster labels. Phase 2 trains the encoder and the
classifier with momentum SGD while everything from phase 1 stays frozen.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .cooccur import (
    AdjacencyConfig,
    WeightingConfig,
    build_adjacency,
    build_cooccurrence,
    normalize_adjacency,
)
from .corpus import Dataset, LabelVocabulary
from .encoder import EncoderConfig, EncoderParams, encode, encoder_gradients, init_encoder
from .glove import GloveConfig, train_glove
from .graph import GcnLayer, GcnStack, gcn_forward, gcn_gradients, init_gcn_stack
from .losses import (
    CONTRASTIVE_MODES,
    LossConfig,
    contrastive_loss_and_grad,
    mll_loss_and_grad,
    sigmoid,
)
from .metrics import MetricsReport, ScoreTable, compute_report, exact_match
from .relabel import KMeansResult, RelabeledDataset, kmeans, relabel
from .seeding import stage_rng, stage_seed

VARIANT_NAMES = (
    "Single-MLL",
    "MLL-CL",
    "MLL-CRC",
    "MLL-GCN",
    "MLL-GCN-CL",
    "MLL-GCN-CRC",
)

_VARIANT_FLAGS = {
    "Single-MLL": (False, "none"),
    "MLL-CL": (False, "vanilla"),
    "MLL-CRC": (False, "cluster_relabeled"),
    "MLL-GCN": (True, "none"),
    "MLL-GCN-CL": (True, "vanilla"),
    "MLL-GCN-CRC": (True, "cluster_relabeled"),
}


@dataclass(frozen=True)
class VariantSpec:
    """One ablation cell: classifier shape plus contrastive labeling mode."""

    name: str
    use_gcn: bool
    contrastive_mode: str

    def __post_init__(self):
        if self.contrastive_mode not in CONTRASTIVE_MODES:
            raise ValueError(f"unknown contrastive mode: {self.contrastive_mode!r}")

    @classmethod
    def from_name(cls, name: str) -> "VariantSpec":
        if name not in _VARIANT_FLAGS:
            raise ValueError(
                f"unknown variant {name!r}; expected one of {', '.join(VARIANT_NAMES)}"
            )
        use_gcn, mode = _VARIANT_FLAGS[name]
        return cls(name=name, use_gcn=use_gcn, contrastive_mode=mode)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    n_clusters: int = 10
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    loss: LossConfig = field(default_factory=LossConfig)
    glove: GloveConfig = field(default_factory=GloveConfig)
    weighting: WeightingConfig = field(default_factory=WeightingConfig)
    adjacency: AdjacencyConfig = field(default_factory=AdjacencyConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be positive")
        if self.kmeans_max_iter < 1:
            raise ValueError("kmeans_max_iter must be positive")
        if self.kmeans_tol < 0:
            raise ValueError("kmeans_tol must be nonnegative")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def train_config_to_dict(cfg: TrainConfig) -> dict:
    """JSON-safe nested dict; sub-seeds are derived from `seed`, never stored."""
    return {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "momentum": cfg.momentum,
        "batch_size": cfg.batch_size,
        "n_clusters": cfg.n_clusters,
        "kmeans_max_iter": cfg.kmeans_max_iter,
        "kmeans_tol": cfg.kmeans_tol,
        "loss": {
            "alpha": cfg.loss.alpha,
            "beta": cfg.loss.beta,
            "lam": cfg.loss.lam,
            "contrastive_normalization": cfg.loss.contrastive_normalization,
        },
        "glove": {
            "d": cfg.glove.d,
            "epochs": cfg.glove.epochs,
            "learning_rate": cfg.glove.learning_rate,
            "beta1": cfg.glove.beta1,
            "beta2": cfg.glove.beta2,
            "eps": cfg.glove.eps,
            "init_scale": cfg.glove.init_scale,
        },
        "weighting": {"x_max": cfg.weighting.x_max, "exponent": cfg.weighting.exponent},
        "adjacency": {
            "threshold": cfg.adjacency.threshold,
            "reweight": cfg.adjacency.reweight,
            "mode": cfg.adjacency.mode,
        },
        "encoder": {
            "layer_widths": list(cfg.encoder.layer_widths),
            "slope": cfg.encoder.slope,
        },
    }


def _check_keys(mapping, allowed, where: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ValueError(f"{where}: unknown key {unknown[0]!r}")


def train_config_from_dict(data) -> TrainConfig:
    top = (
        "seed", "epochs", "learning_rate", "momentum", "batch_size",
        "n_clusters", "kmeans_max_iter", "kmeans_tol",
        "loss", "glove", "weighting", "adjacency", "encoder",
    )
    _check_keys(data, top, "train config")
    sections = {
        "loss": LossConfig,
        "glove": GloveConfig,
        "weighting": WeightingConfig,
        "adjacency": AdjacencyConfig,
        "encoder": EncoderConfig,
    }
    kwargs = {k: v for k, v in data.items() if k not in sections}
    for name, cls in sections.items():
        sub = dict(data.get(name, {}))
        _check_keys(sub, [f.name for f in dataclasses.fields(cls)], name)
        if name == "encoder" and "layer_widths" in sub:
            sub["layer_widths"] = tuple(sub["layer_widths"])
        kwargs[name] = cls(**sub)
    return TrainConfig(**kwargs)


@dataclass
class Checkpoint:
    """Everything needed to score new samples and resume evaluation."""

    variant: VariantSpec
    config: TrainConfig
    vocabulary: LabelVocabulary
    encoder_params: EncoderParams
    classifier_kind: str              # "gcn" | "linear"
    gcn_stack: object                 # GcnStack or None
    linear_head: object               # (C, D) ndarray or None
    embeddings: np.ndarray            # frozen phase-1 label embeddings
    correlation: object               # (C, C) ndarray or None
    centroids: object                 # (N, d) ndarray or None
    epoch: int                        # epoch the retained parameters come from


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_exact_match: float


@dataclass
class PipelineResult:
    checkpoint: Checkpoint
    trace: list
    glove_loss_trace: np.ndarray
    relabeled: object        # RelabeledDataset or None
    kmeans_result: object    # KMeansResult or None


class _MomentumSGD:
    """Classic momentum: v <- m v - lr g; p <- p + v. Updates in place."""

    def __init__(self, params, learning_rate: float, momentum: float):
        self.params = params
        self.velocity = [np.zeros_like(p) for p in params]
        self.learning_rate = learning_rate
        self.momentum = momentum

    def step(self, grads) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


def vanilla_contrast_labels(dataset: Dataset) -> np.ndarray:
    """Plane-bucket labels: the sample's plane index, or a shared no-plane bucket."""
    sp_idx = dataset.vocabulary.sp_indices
    bucket = sp_idx.size
    out = np.empty(len(dataset), dtype=np.int64)
    for i, s in enumerate(dataset.samples):
        bits = s.labels[sp_idx]
        out[i] = int(np.argmax(bits)) if bits.any() else bucket
    return out


def _snapshot_encoder(enc: EncoderParams) -> EncoderParams:
    return EncoderParams([W.copy() for W in enc.weights], [b.copy() for b in enc.biases], enc.slope)


def _snapshot_stack(stack) -> GcnStack:
    return GcnStack([GcnLayer(l.weights.copy(), l.activation, l.slope) for l in stack.layers])


def run_pipeline(train: Dataset, val: Dataset, variant: VariantSpec, cfg: TrainConfig) -> PipelineResult:
    """Run both phases and return the best-validation checkpoint.

    Per-stage randomness is derived from cfg.seed through fixed stage
    indices, so e.g. the k-means seed never shifts the batch order. The
    retained checkpoint is the earliest epoch with the highest validation
    exact-match.
    """
    if train.vocabulary != val.vocabulary:
        raise ValueError("train and val must share one vocabulary")
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val must be nonempty")

    # phase 1: statistics, embeddings, correlation, surrogate labels
    X = build_cooccurrence(train)
    glove_cfg = dataclasses.replace(cfg.glove, seed=stage_seed(cfg.seed, "glove_init"))
    glove_res = train_glove(X.counts, glove_cfg, cfg.weighting)
    Z = glove_res.embedding.vectors

    bhat = None
    if variant.use_gcn:
        bhat = normalize_adjacency(build_adjacency(X, cfg.adjacency)).matrix

    relabeled = None
    km = None
    contrast_labels = None
    centroids = None
    if variant.contrastive_mode == "cluster_relabeled":
        km = kmeans(
            Z,
            cfg.n_clusters,
            seed=stage_seed(cfg.seed, "kmeans"),
            max_iter=cfg.kmeans_max_iter,
            tol=cfg.kmeans_tol,
        )
        relabeled = relabel(train, Z, km.model)
        contrast_labels = relabeled.assignments
        centroids = km.model.centroids
    elif variant.contrastive_mode == "vanilla":
        contrast_labels = vanilla_contrast_labels(train)

    # phase 2: encoder + classifier under momentum SGD; phase-1 tensors frozen
    enc_cfg = dataclasses.replace(cfg.encoder, seed=stage_seed(cfg.seed, "encoder_init"))
    enc = init_encoder(train.feature_dim, enc_cfg)
    D = enc_cfg.output_dim
    C = train.vocabulary.size
    cls_seed = stage_seed(cfg.seed, "classifier_init")
    stack = None
    head = None
    if variant.use_gcn:
        stack = init_gcn_stack((glove_cfg.d, glove_cfg.d, D), slope=0.2, seed=cls_seed)
        cls_params = [layer.weights for layer in stack.layers]
    else:
        rng = np.random.default_rng(cls_seed)
        head = rng.uniform(-1.0 / np.sqrt(D), 1.0 / np.sqrt(D), (C, D))
        cls_params = [head]
    params = list(enc.weights) + list(enc.biases) + cls_params
    sgd = _MomentumSGD(params, cfg.learning_rate, cfg.momentum)
    rng_batches = stage_rng(cfg.seed, "batches")

    Xtr = train.features_matrix()
    Ytr = train.labels_matrix().astype(np.float64)
    Xval = val.features_matrix()
    Yval = val.labels_matrix()
    n = len(train)
    frozen_digest = hashlib.sha256(Z.tobytes() + (bhat.tobytes() if bhat is not None else b"")).hexdigest()

    def current_classifier() -> np.ndarray:
        if variant.use_gcn:
            K, _ = gcn_forward(Z, bhat, stack)
            return K
        return head

    best_match = -1.0
    best = None
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        perm = rng_batches.permutation(n)
        loss_sum = 0.0
        for bstart in range(0, n, cfg.batch_size):
            batch = perm[bstart:bstart + cfg.batch_size]
            reps, ecache = encode(Xtr[batch], enc)
            if variant.use_gcn:
                K, gcache = gcn_forward(Z, bhat, stack)
            else:
                K = head
            scores = reps @ K.T
            mll, d_scores = mll_loss_and_grad(scores, Ytr[batch])
            d_reps = d_scores @ K
            total = mll
            if variant.contrastive_mode != "none":
                closs, d_reps_c = contrastive_loss_and_grad(reps, contrast_labels[batch], cfg.loss)
                total = mll + cfg.loss.lam * closs
                d_reps = d_reps + cfg.loss.lam * d_reps_c
            if not np.isfinite(total):
                raise TrainingDivergedError(epoch, bstart // cfg.batch_size)
            dK = d_scores.T @ reps
            dWs_e, dbs_e, _ = encoder_gradients(d_reps, ecache, enc)
            if variant.use_gcn:
                dWs_g, _ = gcn_gradients(dK, gcache, bhat, stack)
                sgd.step(dWs_e + dbs_e + dWs_g)
            else:
                sgd.step(dWs_e + dbs_e + [dK])
            loss_sum += total * batch.size
        digest = hashlib.sha256(Z.tobytes() + (bhat.tobytes() if bhat is not None else b"")).hexdigest()
        if digest != frozen_digest:
            raise RuntimeError("phase-1 tensors changed during phase 2")
        val_reps, _ = encode(Xval, enc)
        probs = sigmoid(val_reps @ current_classifier().T)
        vm = exact_match(ScoreTable(probs, Yval, 0.5))
        trace.append(EpochRecord(epoch=epoch, train_loss=loss_sum / n, val_exact_match=vm))
        if vm > best_match:
            best_match = vm
            best = (
                epoch,
                _snapshot_encoder(enc),
                _snapshot_stack(stack) if stack is not None else None,
                head.copy() if head is not None else None,
            )

    best_epoch, best_enc, best_stack, best_head = best
    checkpoint = Checkpoint(
        variant=variant,
        config=cfg,
        vocabulary=train.vocabulary,
        encoder_params=best_enc,
        classifier_kind="gcn" if variant.use_gcn else "linear",
        gcn_stack=best_stack,
        linear_head=best_head,
        embeddings=Z.copy(),
        correlation=bhat.copy() if bhat is not None else None,
        centroids=centroids.copy() if centroids is not None else None,
        epoch=best_epoch,
    )
    return PipelineResult(
        checkpoint=checkpoint,
        trace=trace,
        glove_loss_trace=glove_res.loss_trace,
        relabeled=relabeled,
        kmeans_result=km,
    )


def classifier_matrix(cp: Checkpoint) -> np.ndarray:
    """The (C, D) classifier the checkpoint scores with."""
    if cp.classifier_kind == "gcn":
        K, _ = gcn_forward(cp.embeddings, cp.correlation, cp.gcn_stack)
        return K
    return cp.linear_head


def score_dataset(cp: Checkpoint, dataset: Dataset, threshold: float = 0.5) -> ScoreTable:
    if dataset.vocabulary != cp.vocabulary:
        raise ValueError("dataset vocabulary does not match the checkpoint")
    if len(dataset) == 0:
        raise ValueError("cannot score an empty dataset")
    reps, _ = encode(dataset.features_matrix(), cp.encoder_params)
    probs = sigmoid(reps @ classifier_matrix(cp).T)
    return ScoreTable(probs, dataset.labels_matrix(), threshold)


def evaluate(cp: Checkpoint, dataset: Dataset, threshold: float = 0.5, sp_mode: str = "exact") -> MetricsReport:
    table = score_dataset(cp, dataset, threshold)
    return compute_report(table, cp.vocabulary.sp_indices, sp_mode)


# ---------------------------------------------------------------------------
# checkpoint binary format
#
#   magic "MLLG" | u32 version | u32 header length | canonical header JSON
#   | per tensor: u64 byte length + little-endian float64 C-order payload
#   | u32 CRC-32 of everything before the footer
# ---------------------------------------------------------------------------

MAGIC = b"MLLG"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint I/O failures."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    def __init__(self, found: int):
        super().__init__(f"unsupported checkpoint version {found}; this build reads {FORMAT_VERSION}")
        self.found = found
        self.supported = FORMAT_VERSION


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


def _tensor_entries(cp: Checkpoint):
    entries = [("embeddings", cp.embeddings)]
    if cp.correlation is not None:
        entries.append(("correlation", cp.correlation))
    if cp.centroids is not None:
        entries.append(("centroids", cp.centroids))
    for i, (W, b) in enumerate(zip(cp.encoder_params.weights, cp.encoder_params.biases)):
        entries.append((f"encoder.{i}.weight", W))
        entries.append((f"encoder.{i}.bias", b))
    if cp.classifier_kind == "gcn":
        for i, layer in enumerate(cp.gcn_stack.layers):
            entries.append((f"gcn.{i}.weight", layer.weights))
    else:
        entries.append(("classifier", cp.linear_head))
    return entries


def checkpoint_bytes(cp: Checkpoint) -> bytes:
    entries = [(name, np.ascontiguousarray(arr, dtype=np.float64)) for name, arr in _tensor_entries(cp)]
    header = {
        "variant": cp.variant.name,
        "classifier_kind": cp.classifier_kind,
        "epoch": cp.epoch,
        "config": train_config_to_dict(cp.config),
        "vocabulary": [{"name": n, "kind": k} for n, k in cp.vocabulary.entries],
        "encoder_slope": cp.encoder_params.slope,
        "gcn_layers": (
            [{"activation": l.activation, "slope": l.slope} for l in cp.gcn_stack.layers]
            if cp.classifier_kind == "gcn"
            else None
        ),
        "tensors": [
            {"name": name, "shape": list(arr.shape), "dtype": "<f8"} for name, arr in entries
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(header_bytes))
    out += header_bytes
    for _, arr in entries:
        blob = arr.astype("<f8", copy=False).tobytes(order="C")
        out += struct.pack("<Q", len(blob))
        out += blob
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def save_checkpoint(cp: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(cp))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    version = struct.unpack("<I", r.take(4))[0]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version)
    header_len = struct.unpack("<I", r.take(4))[0]
    header_bytes = r.take(header_len)
    if len(data) - r.pos < 4:
        raise CheckpointTruncatedError("missing checksum footer")
    # verify integrity before trusting any parsed structure
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CheckpointChecksumError("checksum mismatch; the file is corrupted")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable header: {exc}") from exc

    tensors = {}
    for meta in header["tensors"]:
        nbytes = struct.unpack("<Q", r.take(8))[0]
        expected = int(np.prod(meta["shape"], dtype=np.int64)) * 8
        if nbytes != expected:
            raise CheckpointFormatError(
                f"tensor {meta['name']!r}: {nbytes} bytes for shape {meta['shape']}"
            )
        blob = r.take(nbytes)
        tensors[meta["name"]] = np.frombuffer(blob, dtype="<f8").reshape(meta["shape"]).copy()
    if len(data) - r.pos != 4:
        raise CheckpointFormatError("trailing bytes after the tensor payload")

    config = train_config_from_dict(header["config"])
    vocab = LabelVocabulary(tuple((e["name"], e["kind"]) for e in header["vocabulary"]))
    n_enc = len(config.encoder.layer_widths)
    enc = EncoderParams(
        [tensors[f"encoder.{i}.weight"] for i in range(n_enc)],
        [tensors[f"encoder.{i}.bias"] for i in range(n_enc)],
        header["encoder_slope"],
    )
    kind = header["classifier_kind"]
    stack = None
    head = None
    if kind == "gcn":
        layers = [
            GcnLayer(tensors[f"gcn.{i}.weight"], meta["activation"], meta["slope"])
            for i, meta in enumerate(header["gcn_layers"])
        ]
        stack = GcnStack(layers)
    else:
        head = tensors["classifier"]
    return Checkpoint(
        variant=VariantSpec.from_name(header["variant"]),
        config=config,
        vocabulary=vocab,
        encoder_params=enc,
        classifier_kind=kind,
        gcn_stack=stack,
        linear_head=head,
        embeddings=tensors["embeddings"],
        correlation=tensors.get("correlation"),
        centroids=tensors.get("centroids"),
        epoch=int(header["epoch"]),
    )
