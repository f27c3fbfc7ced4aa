from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from sklearn.cluster import KMeans

from app.core.errors import FeatureKindMismatch, ShapeMismatch, TooFewFrames
from app.core.schemas.audio import MelConfig
from app.ml.datasets.manifest import read_jsonl
from app.ml.datasets.schema import ExternalSpeakerRow, ExternalUnitsRow
from app.ml.models.speaker_encoder import SpeakerEmbedding
from app.ml.nn.checkpoint import read_container, write_container
from app.ml.signal.audio import AudioClip
from app.ml.signal.mel import MelSpectrogram, mel_spectrogram

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
_ASSIGN_CHUNK = 2048


@dataclass
class CepstralFeatureExtractor:
    """
    Per-frame content features from the shared log-mel: orthonormal DCT-II
    across mel bands, first `n_coeffs` coefficients.
    """

    n_coeffs: int = 13

    @property
    def kind(self) -> str:
        return f"mfcc{self.n_coeffs}"

    def transform(self, mel: MelSpectrogram | np.ndarray) -> np.ndarray:
        values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
        if values.ndim != 2 or values.shape[1] < self.n_coeffs:
            raise ShapeMismatch(f"need (frames, >= {self.n_coeffs}) log-mel, got {values.shape}")
        ceps = scipy.fft.dct(values.astype(np.float64), type=2, norm="ortho", axis=1)
        return ceps[:, : self.n_coeffs]

    @classmethod
    def for_kind(cls, kind: str) -> "CepstralFeatureExtractor":
        if not kind.startswith("mfcc") or not kind[4:].isdigit():
            raise FeatureKindMismatch(f"no built-in extractor for feature kind {kind!r}")
        return cls(n_coeffs=int(kind[4:]))


@dataclass(frozen=True, eq=False)
class ContentUnits:
    ids: np.ndarray
    frame_rate: float = MelConfig().sample_rate / MelConfig().hop_length

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if ids.size and ids.min() < 0:
            raise ValueError("unit ids must be non-negative")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray
    feature_kind: str = "mfcc13"

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(np.asarray(self.centroids, dtype=np.float32))
        if c.ndim != 2 or c.shape[0] < 1:
            raise ShapeMismatch(f"centroids must be (K >= 1, dim), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("codebook centroids must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.centroids.shape[1])

    def config(self) -> dict:
        return {"k": self.k, "feature_dim": self.feature_dim, "feature_kind": self.feature_kind}

    def save(self, path: str | Path) -> Path:
        return write_container(path, {"centroids": self.centroids}, kind="codebook", config=self.config())

    @classmethod
    def load(cls, path: str | Path, expected_config_hash: str | None = None) -> "Codebook":
        header, tensors = read_container(
            path, expected_kind="codebook", expected_config_hash=expected_config_hash
        )
        return cls(centroids=tensors["centroids"], feature_kind=header["config"]["feature_kind"])


def fit_codebook(
    corpus_features: np.ndarray | list[np.ndarray],
    k: int,
    seed: int = 0,
    feature_kind: str = "mfcc13",
) -> Codebook:
    """k-means (k-means++ init, 100 iterations max, seeded); centroids sorted by first coordinate."""
    if isinstance(corpus_features, list):
        feats = np.concatenate([np.asarray(f, dtype=np.float64) for f in corpus_features], axis=0)
    else:
        feats = np.asarray(corpus_features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeMismatch(f"corpus features must be (frames, dim), got {feats.shape}")
    if k < 1 or feats.shape[0] < k:
        raise TooFewFrames(f"need at least K={k} frames to fit the codebook, got {feats.shape[0]}")

    km = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=KMEANS_MAX_ITER,
        random_state=seed,
    )
    km.fit(feats)
    centroids = km.cluster_centers_
    order = np.argsort(centroids[:, 0], kind="stable")
    logger.info("fitted %d-unit codebook on %d frames (%d iters)", k, feats.shape[0], km.n_iter_)
    return Codebook(centroids=centroids[order], feature_kind=feature_kind)


def assign_units(features: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest centroid per frame (squared Euclidean); ties go to the lowest index."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != codebook.feature_dim:
        raise ShapeMismatch(
            f"features must be (frames, {codebook.feature_dim}), got {feats.shape}"
        )
    cents = codebook.centroids.astype(np.float64)
    out = np.empty(feats.shape[0], dtype=np.int64)
    for start in range(0, feats.shape[0], _ASSIGN_CHUNK):
        chunk = feats[start : start + _ASSIGN_CHUNK]
        d = ((chunk[:, None, :] - cents[None, :, :]) ** 2).sum(axis=-1)
        out[start : start + chunk.shape[0]] = np.argmin(d, axis=1)
    return out


def extract_units(
    audio: AudioClip,
    codebook: Codebook,
    extractor: CepstralFeatureExtractor | None = None,
    mel_config: MelConfig | None = None,
) -> ContentUnits:
    extractor = extractor or CepstralFeatureExtractor.for_kind(codebook.feature_kind)
    if extractor.kind != codebook.feature_kind:
        raise FeatureKindMismatch(
            f"codebook was fitted on {codebook.feature_kind!r}, extractor gives {extractor.kind!r}"
        )
    config = mel_config or MelConfig()
    mel = mel_spectrogram(audio, config)
    ids = assign_units(extractor.transform(mel), codebook)
    return ContentUnits(ids=ids, frame_rate=config.sample_rate / config.hop_length)


def load_external_units(path: str | Path) -> dict[str, ContentUnits]:
    """JSONL {utterance_id, ids} rows, e.g. units from an external SSL model + VQ."""
    return {row.utterance_id: ContentUnits(ids=row.ids) for row in read_jsonl(path, ExternalUnitsRow)}


def load_external_speaker_embeddings(path: str | Path) -> dict[str, SpeakerEmbedding]:
    return {
        row.speaker_id: SpeakerEmbedding(vector=np.asarray(row.vector))
        for row in read_jsonl(path, ExternalSpeakerRow)
    }
