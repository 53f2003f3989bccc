"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import cross_coherence, fit_var_ls, pdc, roc_curve
from .errors import NumericalError, ValidationError
from .gibbs import load_summaries, run_gibbs, save_summaries
from .io import FORMATS, load_layout, load_recording, read_header, save_recording
from .metrics import connectivity_series, localize_soz, onset_tests, score_localization
from .model import Hyperparams, Segment, default_n_clusters, standardize_segment
from .pipeline import (
    ManifestWriter,
    RunConfig,
    default_output_dir,
    fit_segments,
    label_index,
    load_inputs,
    run_pipeline,
    write_networks,
    write_series,
)
from .preprocess import PreprocessOptions
from .simgen import (
    GroundTruth,
    add_ictal_edges,
    generate_clustered_network,
    generate_recording,
    grid_adjacency,
    plant_seizure,
)
from .windows import WindowedProbabilities, aggregate_all, baseline_thresholds, segment_recording

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("marssnet")


def _span(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"span must look like START:STOP, got {text!r}") from None
    return a, b


def _add_out(p):
    p.add_argument("-o", "--out", default=None, help="output directory (default $MARSSNET_OUTPUT_DIR or ./marssnet-out)")


def _add_hp(p):
    g = p.add_argument_group("sampler")
    g.add_argument("--clusters", "-K", type=int, default=None, help="number of clusters (default max(2, round(d/10)))")
    g.add_argument("--iters", type=int, default=1500)
    g.add_argument("--burnin", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--l0", type=float, default=0.9)
    g.add_argument("--u0", type=float, default=0.1)


def _add_pre(p):
    g = p.add_argument_group("preprocessing")
    g.add_argument("--format", choices=FORMATS, default=None)
    g.add_argument("--notch", action="store_true", help="60 Hz notch (Q=30)")
    g.add_argument("--remove-pc", action="store_true", help="subtract the first principal component")
    g.add_argument("--target-rate", type=float, default=None, help="integer-factor decimation target in Hz")
    g.add_argument("--span", type=_span, default=(-300, 300), help="seconds around onset, START:STOP")


def _hp(args, d: int) -> Hyperparams:
    K = args.clusters if args.clusters is not None else default_n_clusters(d)
    return Hyperparams(K=K, l0=args.l0, u0=args.u0, n_iter=args.iters, n_burnin=args.burnin, seed=args.seed)


def _writer(args, fresh=False) -> ManifestWriter:
    return ManifestWriter(args.out or default_output_dir(), fresh=fresh)


def _load_windows(path) -> WindowedProbabilities:
    try:
        return WindowedProbabilities.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read windows file {path}: {exc}") from None


def _thresholds(args, wp):
    base = wp.window_starts[0]
    tau_d, tau_c = baseline_thresholds(wp.edge[base], wp.cocluster[base])
    if getattr(args, "tau_d", None) is not None:
        tau_d = args.tau_d
    if getattr(args, "tau_c", None) is not None:
        tau_c = args.tau_c
    return base, tau_d, tau_c


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows, cols = args.grid
    d = rows * cols
    gt = generate_clustered_network(d, args.clusters, args.p_within, args.p_between, rng,
                                    coef_sd=args.coef_sd, radius=args.radius)
    labels = [f"r{k}" for k in range(d)]
    adj = grid_adjacency(rows, cols)
    mw = _writer(args, fresh=True)
    mw.write_json("layout.json", {"adjacency": {labels[k]: [labels[n] for n in sorted(v)] for k, v in adj.items()}})
    meta = {"seed": args.seed, "network": gt.to_dict()}
    if args.soz is not None:
        soz = label_index(labels, args.soz)
        gti = add_ictal_edges(gt, adj[soz] | {soz}, weight=args.ictal_weight, rng=rng)
        meta.update(soz=labels[soz], ictal_network=gti.to_dict())
    else:
        gti = gt
    for s in range(args.seizures):
        sid = f"sz{s}"
        if args.onset is None:
            rec = generate_recording(gt, int(args.seconds * args.rate), rng=rng, noise_sd=args.noise_sd,
                                     rate=args.rate, labels=labels, seizure_id=sid)
        else:
            rec = plant_seizure(gt, gti, args.onset, args.seconds, rate=args.rate, noise_sd=args.noise_sd,
                                rng=rng, labels=labels, seizure_id=sid)
        ext = ".f32" if args.format == "raw-f32" else ".csv"
        written = save_recording(rec, mw.root / f"{sid}{ext}", args.format, extra={"ground_truth": meta})
        for p in written:
            mw.add_file(p.name)
    mw.write_json("ground_truth.json", meta)
    mw.finish()
    print(mw.path)
    return EXIT_OK


def cmd_fit(args) -> int:
    opts = PreprocessOptions(args.notch, args.remove_pc, args.target_rate)
    recs = load_inputs(args.inputs, args.format, opts)
    hp = _hp(args, recs[0].n_channels)
    segs = [s for r in recs for s in segment_recording(r, args.span)]
    sums = fit_segments(segs, hp, args.workers)
    mw = _writer(args)
    save_summaries(mw.root / "summaries.json", sums)
    mw.add_file("summaries.json")
    mw.doc["labels"] = list(recs[0].channel_labels)
    mw.doc["seizures"] = [r.seizure_id for r in recs]
    mw.finish()
    print(mw.root / "summaries.json")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    try:
        sums = load_summaries(args.summaries)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read summaries {args.summaries}: {exc}") from None
    labels = args.labels.split(",") if args.labels else []
    if not labels:
        man = Path(args.summaries).parent / "manifest.json"
        if man.exists():
            labels = json.loads(man.read_text()).get("labels", [])
    wp = aggregate_all(sums, labels=labels)
    mw = _writer(args)
    mw.write_json("windows.json", wp.to_dict())
    mw.finish()
    print(mw.root / "windows.json")
    return EXIT_OK


def cmd_network(args) -> int:
    wp = _load_windows(args.windows)
    base, tau_d, tau_c = _thresholds(args, wp)
    soz = label_index(wp.labels or [str(k) for k in range(wp.d)], args.soz) if args.soz else None
    mw = _writer(args)
    mw.write_json("thresholds.json", {"baseline_window": base, "tau_d": tau_d, "tau_c": tau_c})
    write_networks(mw, wp, tau_d, tau_c, soz)
    mw.finish()
    print(json.dumps({"tau_d": tau_d, "tau_c": tau_c, "windows": len(wp.window_starts)}))
    return EXIT_OK


def cmd_metrics(args) -> int:
    wp = _load_windows(args.windows)
    mw = _writer(args)
    write_series(mw, connectivity_series(wp))
    mw.finish()
    print(mw.root / "D.csv")
    return EXIT_OK


def cmd_localize(args) -> int:
    wp = _load_windows(args.windows)
    rep = localize_soz(connectivity_series(wp), args.onset, args.decile)
    mw = _writer(args)
    out = rep.to_dict()
    mw.write_json("soz_report.json", out)
    if args.layout and args.soz:
        adj = load_layout(args.layout)
        names = wp.labels or [str(k) for k in range(wp.d)]
        cands = [names[k] for k in sorted(rep.candidates)]
        sites = [set(s.split("+")) for s in args.soz]
        score = score_localization(cands, sites, adj, analyzed=names)
        mw.write_json("localization_score.json", score.to_dict())
        out["score"] = score.to_dict()
    mw.finish()
    print(json.dumps(out["candidates"] if "score" not in out else {"candidates": out["candidates"], **out["score"]}))
    return EXIT_OK


def cmd_test(args) -> int:
    wp = _load_windows(args.windows)
    _, tau_d, tau_c = _thresholds(args, wp)
    names = wp.labels or [str(k) for k in range(wp.d)]
    res = {s: onset_tests(wp, label_index(names, s), args.onset, (tau_d, tau_c)).to_dict() for s in args.soz}
    mw = _writer(args)
    mw.write_json("tests.json", res)
    mw.finish()
    print(json.dumps({s: {"p_count": r["p_count"], "p_cluster": r["p_cluster"]} for s, r in res.items()}))
    return EXIT_OK


def cmd_roc(args) -> int:
    rec = load_recording(args.recording, args.format)
    header = read_header(args.recording)
    gt_obj = header.get("ground_truth", {})
    key = "ictal_network" if args.ictal else "network"
    if key not in gt_obj:
        raise ValidationError(f"{args.recording} carries no ground truth '{key}'")
    truth = GroundTruth.from_dict(gt_obj[key]).gamma_true
    n = int(round(rec.rate))
    start = rec.onset_index + args.offset * n
    length = args.seconds * n
    if start < 0 or start + length > rec.n_samples:
        raise ValidationError("requested segment lies outside the recording")
    seg = standardize_segment(Segment(rec.data[:, start:start + length], args.offset, rec.seizure_id))
    results = {}
    mw = _writer(args)
    for method in args.methods:
        if method == "marss":
            hp = _hp(args, rec.n_channels)
            scores = run_gibbs(seg, hp).edge_prob
        elif method == "pdc":
            fit = fit_var_ls(seg, args.order)
            scores = pdc(fit.coefs, np.linspace(0, rec.rate / 2, 65), rec.rate).scores
        else:
            scores = cross_coherence(seg, (0, rec.rate / 2), rec.rate).scores
        roc = roc_curve(scores, truth)
        roc.to_csv(mw.root / f"roc_{method}.csv")
        mw.add_file(f"roc_{method}.csv")
        results[method] = roc.auc
    mw.write_json("auc.json", results)
    mw.finish()
    print(json.dumps(results))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.out:
        cfg.output_dir = args.out
    if args.workers:
        cfg.workers = args.workers
    print(run_pipeline(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="marssnet", description="Clustered directional network inference for multichannel recordings.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic recordings with ground truth")
    _add_out(p)
    p.add_argument("--grid", type=lambda s: tuple(int(v) for v in s.split("x")), default=(5, 6), help="electrode grid ROWSxCOLS")
    p.add_argument("--clusters", "-K", type=int, default=3)
    p.add_argument("--p-within", type=float, default=0.3)
    p.add_argument("--p-between", type=float, default=0.02)
    p.add_argument("--coef-sd", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.9)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--seizures", type=int, default=3)
    p.add_argument("--seconds", type=int, default=90)
    p.add_argument("--onset", type=int, default=None, help="onset second; omit for a stationary recording")
    p.add_argument("--soz", default=None, help="label of the region whose neighbourhood becomes ictal")
    p.add_argument("--ictal-weight", type=float, default=0.4)
    p.add_argument("--rate", type=int, default=256)
    p.add_argument("--format", choices=FORMATS, default="raw-f32")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler on every one-second segment")
    p.add_argument("inputs", nargs="+")
    _add_out(p)
    _add_pre(p)
    _add_hp(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("aggregate", help="average segment summaries into 25-second windows")
    p.add_argument("summaries")
    p.add_argument("--labels", default=None, help="comma-separated channel labels")
    _add_out(p)
    p.set_defaults(func=cmd_aggregate)

    for name, func, hlp in (("network", cmd_network, "threshold windows into networks (JSON + DOT)"),
                            ("test", cmd_test, "onset hypothesis test for SOZ regions")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("windows")
        p.add_argument("--tau-d", type=float, default=None)
        p.add_argument("--tau-c", type=float, default=None)
        if name == "test":
            p.add_argument("--soz", nargs="+", required=True)
            p.add_argument("--onset", type=int, default=0)
        else:
            p.add_argument("--soz", default=None)
        _add_out(p)
        p.set_defaults(func=func)

    p = sub.add_parser("metrics", help="extent of directional connectivity and its change (CSV)")
    p.add_argument("windows")
    _add_out(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("localize", help="select SOZ candidates, optionally score them")
    p.add_argument("windows")
    p.add_argument("--onset", type=int, default=0)
    p.add_argument("--decile", type=float, default=0.1)
    p.add_argument("--layout", default=None, help="electrode adjacency JSON")
    p.add_argument("--soz", nargs="*", default=None, help="SOZ sites; join regions of one site with '+'")
    _add_out(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("roc", help="edge-recovery ROC against simulated ground truth")
    p.add_argument("recording")
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--methods", nargs="+", choices=("marss", "pdc", "cc"), default=["marss", "pdc", "cc"])
    p.add_argument("--offset", type=int, default=0, help="segment start, seconds from onset")
    p.add_argument("--seconds", type=int, default=1)
    p.add_argument("--order", type=int, default=5, help="VAR order for PDC")
    p.add_argument("--ictal", action="store_true", help="score against the ictal network")
    _add_hp(p)
    _add_out(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
