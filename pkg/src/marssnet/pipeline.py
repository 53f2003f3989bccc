"""End-to-end runs: load, preprocess, segment, infer, aggregate, threshold, report.

Every file written goes through :class:`ManifestWriter`, which records its
SHA-256. Manifests contain no timestamps or absolute output paths, so two
runs of the same configuration produce byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence


from .errors import MarssError, ValidationError
from .gibbs import PosteriorSummary, run_gibbs, save_summaries
from .io import load_layout, load_recording
from .metrics import (
    connectivity_series,
    localize_soz,
    onset_tests,
    score_localization,
)
from .model import Hyperparams, Recording, Segment
from .preprocess import PreprocessOptions, preprocess
from .windows import WindowedProbabilities, aggregate_all, baseline_thresholds, build_network, segment_recording

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "MARSSNET_OUTPUT_DIR"
MANIFEST_NAME = "manifest.json"

__all__ = [
    "OUTPUT_DIR_ENV",
    "RunConfig",
    "ManifestWriter",
    "default_output_dir",
    "sha256_file",
    "load_inputs",
    "fit_segments",
    "write_networks",
    "write_series",
    "run_pipeline",
    "label_index",
]


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "marssnet-out")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunConfig:
    inputs: list[str]
    hp: Hyperparams = field(default_factory=Hyperparams)
    span: tuple[int, int] = (-300, 300)
    format: str | None = None
    tau_d: float | None = None
    tau_c: float | None = None
    notch: bool = False
    remove_pc: bool = False
    target_rate: float | None = None
    output_dir: str | None = None
    soz: list[str] = field(default_factory=list)
    layout: str | None = None
    onset: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.inputs:
            raise ValidationError("no input recordings")
        self.inputs = [str(p) for p in self.inputs]
        self.span = (int(self.span[0]), int(self.span[1]))
        if self.span[1] <= self.span[0]:
            raise ValidationError(f"empty span {self.span}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if isinstance(self.soz, str):
            self.soz = [self.soz]
        self.soz = [str(s) for s in self.soz]

    @property
    def preprocess_options(self) -> PreprocessOptions:
        return PreprocessOptions(notch=self.notch, remove_pc=self.remove_pc, target_rate=self.target_rate)

    @property
    def out(self) -> Path:
        return Path(self.output_dir or default_output_dir())

    def to_dict(self, include_output: bool = True) -> dict:
        obj = asdict(self)
        obj["span"] = list(self.span)
        if not include_output:
            obj.pop("output_dir")
            obj.pop("workers")  # never changes results
        return obj

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        hp = obj.pop("hp", {}) or {}
        if not isinstance(hp, Hyperparams):
            try:
                hp = Hyperparams(**hp)
            except TypeError as exc:
                raise ValidationError(f"bad hyperparameters: {exc}") from None
        if "inputs" not in obj:
            raise ValidationError("config needs 'inputs'")
        return cls(hp=hp, **obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        base = Path(path).parent
        obj["inputs"] = [str(base / p) if not Path(p).is_absolute() else p for p in obj.get("inputs", [])]
        if obj.get("layout") and not Path(obj["layout"]).is_absolute():
            obj["layout"] = str(base / obj["layout"])
        return cls.from_dict(obj)


class ManifestWriter:
    """Single point through which outputs are written and hashed."""

    def __init__(self, root, fresh: bool = True, meta: dict | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.path = self.root / MANIFEST_NAME
        self.doc = {"artifacts": {}, "complete": False}
        if not fresh and self.path.exists():
            with open(self.path) as fh:
                self.doc = json.load(fh)
        if meta:
            self.doc.update(meta)

    def _record(self, rel: str) -> Path:
        p = self.root / rel
        self.doc["artifacts"][rel] = sha256_file(p)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="") as fh:
            fh.write(text)
        return self._record(rel)

    def write_json(self, rel: str, obj) -> Path:
        return self.write_text(rel, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    def add_file(self, rel: str) -> Path:
        """Register a file already written under root by another writer."""
        return self._record(rel)

    def finish(self, complete: bool = True, **extra) -> Path:
        self.doc["complete"] = complete
        self.doc.update(extra)
        self.doc["artifacts"] = dict(sorted(self.doc["artifacts"].items()))
        with open(self.path, "w") as fh:
            json.dump(self.doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return self.path


def label_index(labels: Sequence[str], name) -> int:
    labels = list(labels)
    if str(name) in labels:
        return labels.index(str(name))
    raise ValidationError(f"unknown region label {name!r}")


def load_inputs(paths, fmt=None, opts: PreprocessOptions | None = None) -> list[Recording]:
    recs = [load_recording(p, fmt) for p in paths]
    if opts is not None:
        recs = [preprocess(r, opts) for r in recs]
    ids = [r.seizure_id for r in recs]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate seizure ids {ids}")
    labels = {r.channel_labels for r in recs}
    if len(labels) != 1:
        raise ValidationError("recordings disagree on channel labels")
    return recs


def _fit_one(args):
    seg, hp = args
    return run_gibbs(seg, hp)


def fit_segments(segments: Sequence[Segment], hp: Hyperparams, workers: int = 1) -> list[PosteriorSummary]:
    """Independent chains per segment; results come back in input order."""
    jobs = [(s, hp) for s in segments]
    if workers <= 1 or len(jobs) <= 1:
        return [_fit_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_fit_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def write_networks(mw: ManifestWriter, wp: WindowedProbabilities, tau_d, tau_c, soz_idx=None, prefix="networks"):
    labels = tuple(wp.labels)
    for t in wp.window_starts:
        net = build_network(wp.edge[t], wp.cocluster[t], tau_d, tau_c, soz_idx, t, labels)
        mw.write_json(f"{prefix}/window_{t}.json", net.to_dict())
        mw.write_text(f"{prefix}/window_{t}.dot", net.to_dot())


def write_series(mw: ManifestWriter, series) -> None:
    mw.write_text("D.csv", series.csv_text("D"))
    mw.write_text("DC.csv", series.csv_text("DC"))


class _Stage:
    def __init__(self, mw: ManifestWriter):
        self.mw = mw
        self.name = "setup"

    def __call__(self, name):
        self.name = name
        log.info("stage %s", name)
        return self


def run_pipeline(cfg: RunConfig) -> Path:
    """Run every stage and return the manifest path.

    On failure the manifest is written with ``complete: false`` and the
    failing stage, then the error is re-raised with the stage name prefixed.
    """
    mw = ManifestWriter(cfg.out, fresh=True, meta={"config": cfg.to_dict(include_output=False)})
    stage = _Stage(mw)
    try:
        stage("load")
        recs = load_inputs(cfg.inputs, cfg.format, cfg.preprocess_options)
        mw.doc["inputs"] = {Path(p).name: sha256_file(p) for p in cfg.inputs}
        labels = list(recs[0].channel_labels)
        soz_idx = [label_index(labels, s) for s in cfg.soz]

        stage("segment")
        segments = [seg for r in recs for seg in segment_recording(r, cfg.span)]

        stage("infer")
        sums = fit_segments(segments, cfg.hp, cfg.workers)
        rel = "summaries.json"
        save_summaries(cfg.out / rel, sums)
        mw.add_file(rel)

        stage("aggregate")
        wp = aggregate_all(sums, seizures=[r.seizure_id for r in recs], labels=labels)
        mw.write_json("windows.json", wp.to_dict())

        stage("threshold")
        base = wp.window_starts[0]
        tau_d, tau_c = baseline_thresholds(wp.edge[base], wp.cocluster[base])
        if cfg.tau_d is not None:
            tau_d = cfg.tau_d
        if cfg.tau_c is not None:
            tau_c = cfg.tau_c
        mw.write_json("thresholds.json", {"baseline_window": base, "tau_d": tau_d, "tau_c": tau_c})

        stage("network")
        write_networks(mw, wp, tau_d, tau_c, soz_idx[0] if soz_idx else None)

        stage("metrics")
        series = connectivity_series(wp)
        write_series(mw, series)

        stage("localize")
        if cfg.onset in series.dc_grid:
            rep = localize_soz(series, cfg.onset)
            mw.write_json("soz_report.json", rep.to_dict())
            if soz_idx and cfg.layout:
                adj = load_layout(cfg.layout)
                cands = [labels[k] for k in sorted(rep.candidates)]
                score = score_localization(cands, [set(cfg.soz)], adj, analyzed=labels)
                mw.write_json("localization_score.json", score.to_dict())
        else:
            mw.doc["skipped"] = {"localize": f"no DC at onset t={cfg.onset}; span needs a window at t-{wp.window_length_seconds}"}

        stage("test")
        if soz_idx:
            results = {}
            for name, k in zip(cfg.soz, soz_idx):
                results[name] = onset_tests(wp, k, cfg.onset, (tau_d, tau_c)).to_dict()
            mw.write_json("tests.json", results)
    except MarssError as exc:
        mw.finish(complete=False, failed_stage=stage.name, error=str(exc))
        raise type(exc)(f"stage {stage.name}: {exc}") from exc
    except OSError as exc:
        mw.finish(complete=False, failed_stage=stage.name, error=str(exc))
        raise ValidationError(f"stage {stage.name}: {exc}") from exc
    return mw.finish(complete=True)
