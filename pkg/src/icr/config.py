"""Strict key-value configuration for the CLI.

Format: one ``key = value`` per line, ``#`` comments, blank lines ignored.
Unknown keys are rejected so a misspelled hyperparameter cannot silently
fall back to a default. An absent file (or empty one) yields all defaults:
early_stop 3, max_iters 10, fusion k 60, depth 100, and the topiocqa BM25
profile (k1 0.9, b 0.4); ``bm25.profile = qrecc`` switches to k1 0.82,
b 0.68, and explicit ``bm25.k1`` / ``bm25.b`` override either profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crdg import CrdgConfig
from .errors import TypeMismatch, UnknownKey
from .evaluation import F_MODES
from .fusion import FUSION_MODES, FusionConfig
from .pipeline import RETRIEVER_CHOICES, InferenceConfig
from .sparse_index import BM25_PROFILES, Bm25Params


def _parse_int(key: str, raw: str, minimum: int | None = None) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise TypeMismatch(key, f"expected an integer, got {raw!r}") from None
    if minimum is not None and value < minimum:
        raise TypeMismatch(key, f"must be >= {minimum}, got {value}")
    return value


def _parse_float(key: str, raw: str, minimum: float | None = None, exclusive: bool = False) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise TypeMismatch(key, f"expected a number, got {raw!r}") from None
    if minimum is not None:
        if exclusive and value <= minimum:
            raise TypeMismatch(key, f"must be > {minimum}, got {value}")
        if not exclusive and value < minimum:
            raise TypeMismatch(key, f"must be >= {minimum}, got {value}")
    return value


def _parse_choice(key: str, raw: str, choices) -> str:
    if raw not in choices:
        raise TypeMismatch(key, f"expected one of {sorted(choices)}, got {raw!r}")
    return raw


# key -> parser(raw string) -> validated value
_SCHEMA = {
    "dataset.collection": lambda k, v: v,
    "dataset.collection_format": lambda k, v: _parse_choice(k, v, ("tsv", "jsonl")),
    "dataset.train": lambda k, v: v,
    "dataset.test": lambda k, v: v,
    "dataset.qrels": lambda k, v: v,
    "bm25.profile": lambda k, v: _parse_choice(k, v, tuple(BM25_PROFILES)),
    "bm25.k1": lambda k, v: _parse_float(k, v, minimum=0.0),
    "bm25.b": lambda k, v: _parse_float(k, v, minimum=0.0),
    "crdg.early_stop": lambda k, v: _parse_int(k, v, minimum=1),
    "crdg.max_iters": lambda k, v: _parse_int(k, v, minimum=1),
    "crdg.resample_budget": lambda k, v: _parse_int(k, v, minimum=0),
    "crdg.f_mode": lambda k, v: _parse_choice(k, v, F_MODES),
    "fusion.k": lambda k, v: _parse_float(k, v, minimum=0.0, exclusive=True),
    "fusion.mode": lambda k, v: _parse_choice(k, v, FUSION_MODES),
    "fusion.depth": lambda k, v: _parse_int(k, v, minimum=1),
    "inference.max_iters": lambda k, v: _parse_int(k, v, minimum=1),
    "inference.retrieval_k": lambda k, v: _parse_int(k, v, minimum=1),
    "inference.retriever": lambda k, v: _parse_choice(k, v, RETRIEVER_CHOICES),
    "dense.dim": lambda k, v: _parse_int(k, v, minimum=1),
    "gen.temperature": lambda k, v: _parse_float(k, v, minimum=0.0),
}


@dataclass
class Config:
    collection: str | None = None
    collection_format: str | None = None
    train: str | None = None
    test: str | None = None
    qrels: str | None = None
    bm25: Bm25Params = field(default_factory=Bm25Params)
    crdg: CrdgConfig = field(default_factory=CrdgConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    dense_dim: int = 256
    gen_temperature: float = 0.7
    #: raw key -> value snapshot, recorded in run manifests
    raw: dict = field(default_factory=dict)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise TypeMismatch(f"{source}:{line_no}", f"expected 'key = value', got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise UnknownKey(key)
        values[key] = _SCHEMA[key](key, raw)
    return values


def resolve_config(values: dict) -> Config:
    profile = BM25_PROFILES[values.get("bm25.profile", "topiocqa")]
    k1 = values.get("bm25.k1", profile.k1)
    b = values.get("bm25.b", profile.b)
    try:
        bm25 = Bm25Params(k1=k1, b=b)
    except ValueError as e:
        raise TypeMismatch("bm25.b", str(e)) from None
    cfg = Config(
        collection=values.get("dataset.collection"),
        collection_format=values.get("dataset.collection_format"),
        train=values.get("dataset.train"),
        test=values.get("dataset.test"),
        qrels=values.get("dataset.qrels"),
        bm25=bm25,
        crdg=CrdgConfig(
            early_stop=values.get("crdg.early_stop", 3),
            max_iters=values.get("crdg.max_iters", 10),
            resample_budget=values.get("crdg.resample_budget", 3),
            f_mode=values.get("crdg.f_mode", "both"),
        ),
        fusion=FusionConfig(
            k=values.get("fusion.k", 60.0),
            mode=values.get("fusion.mode", "prrf"),
            depth=values.get("fusion.depth", 100),
        ),
        inference=InferenceConfig(
            max_iters=values.get("inference.max_iters", 10),
            retrieval_k=values.get("inference.retrieval_k", 100),
            retriever=values.get("inference.retriever", "sparse"),
        ),
        dense_dim=values.get("dense.dim", 256),
        gen_temperature=values.get("gen.temperature", 0.7),
        raw=dict(values),
    )
    cfg.inference.fusion = cfg.fusion
    return cfg


def load_config(path: str | None) -> Config:
    """Load and validate a config file; None gives all defaults."""
    if path is None:
        return resolve_config({})
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return resolve_config(parse_config_text(text, source=str(path)))
