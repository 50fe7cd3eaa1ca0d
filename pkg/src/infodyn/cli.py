"""Command-line pipelines.

Every subcommand reads its parameters from an optional JSON config file
(``--config``), overridden by flags, and validates all of them before any
output is written.  Exit status: 0 success, 2 invalid configuration or input,
1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import clustering, hodgepodge, kernelspec, lcms, pdg, zstack
from .io import dumps, read_json, write_json, write_pgm

log = logging.getLogger("infodyn")


class ConfigError(ValueError):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text):
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _json(text):
    return json.loads(text) if isinstance(text, str) else text


def _bool(text):
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_p = hodgepodge.HodgepodgeParams()
_synth = lcms.SynthConfig()

# name -> (parser, default, help)
SCHEMAS = {
    "simulate-bz": {
        "width": (int, _p.width, "lattice width"),
        "height": (int, _p.height, "lattice height"),
        "q": (int, _p.q, "ill state"),
        "k1": (int, _p.k1, "infected-neighbour constant"),
        "k2": (int, _p.k2, "ill-neighbour constant"),
        "g": (int, _p.g, "growth per step"),
        "eta_max": (int, _p.eta_max, "largest noise increment"),
        "p_noise": (float, _p.p_noise, "noise probability"),
        "ignition": (_json, [list(p) for p in _p.ignition], "JSON list of [x, y]"),
        "boundary": (str, _p.boundary, "torus or fixed"),
        "n_steps": (int, 2000, "steps to simulate"),
        "emit_every": (int, 1, "keep every n-th lattice"),
    },
    "spectra": {
        "input": (str, None, "series directory from simulate-bz"),
        "alphas": (_floats, list(pdg.DEFAULT_ALPHAS), "comma-separated alpha list"),
        "decimate": (int, 1, "pair frames i and i+n for i = 0, n, 2n, ..."),
    },
    "cluster": {
        "input": (str, None, "series directory or spectra CSV"),
        "decimated_input": (str, None, "spectra CSV of the decimated series"),
        "alphas": (_floats, list(pdg.DEFAULT_ALPHAS), "alpha list when computing spectra"),
        "k": (_ints, [3, 4, 5, 6], "cluster counts, e.g. 3..6"),
        "decimate": (int, 10, "decimation step for the comparison branch (1 disables)"),
        "features": (_strs, ["I", "P"], "feature modes: I, P, IP"),
        "standardize": (_bool, False, "z-score feature columns"),
        "max_iter": (int, 300, "k-means iteration cap"),
        "tol": (float, 1e-8, "k-means centroid-shift tolerance"),
    },
    "zstack": {
        "input": (str, None, "stack directory or raw volume descriptor"),
        "channel": (str, None, "channel to transform"),
        "alpha": (float, 0.99, "Renyi order"),
        "eps": (float, 0.0, "|omega| <= eps counts as time-stable"),
        "render_depth": (int, 16, "bit depth of the quantized omega before LIL"),
    },
    "lcms-synth": {
        "n_mass": (int, _synth.n_mass, "mass rows"),
        "n_scan": (int, _synth.n_scan, "scans"),
        "mu": (float, _synth.mu, "log-domain noise location"),
        "sigma": (float, _synth.sigma, "log-domain noise scale"),
        "truth_k": (float, _synth.truth_k, "envelope multiplier for the truth mask"),
        "ridge_rows": (_ints, [], "explicit ridge rows"),
        "n_ridges": (int, _synth.n_ridges, "random ridges when ridge_rows is empty"),
        "ridge_amplitude": (float, _synth.ridge_amplitude, "ridge level / envelope"),
        "peaks": (_json, [], "JSON list of {m, t0, width, height}"),
        "n_peaks": (int, _synth.n_peaks, "random peaks when peaks is empty"),
        "snr_range": (_floats, list(_synth.snr_range), "peak height / envelope range"),
        "peak_width": (float, _synth.peak_width, "Gaussian sigma in scans"),
        "n_spikes": (int, _synth.n_spikes, "isolated spikes"),
        "spike_height": (float, _synth.spike_height, "spike height / envelope"),
        "format": (str, "csv", "grid format: csv or bin"),
    },
    "lcms-analyze": {
        "input": (str, None, "grid CSV or binary descriptor"),
        "k": (float, 4.0, "envelope multiplier"),
        "clip": (float, 3.0, "clipping multiplier of the robust fit"),
        "ridge_frac": (float, 0.8, "above-envelope fraction that makes a row a ridge"),
        "blank": (str, None, "grid of a blank run"),
        "m_tol": (float, 0.0, "blank match tolerance in mass rows"),
        "t_tol": (float, 3.0, "blank match tolerance in scans"),
        "truth": (str, None, "truth mask grid for scoring"),
        "format": (str, "csv", "output grid format: csv or bin"),
    },
    "kernel-check": {
        "input": (str, None, "system spec file"),
    },
}


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser():
    ap = argparse.ArgumentParser(prog="infodyn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, schema in SCHEMAS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--verbose", "-v", action="store_true")
        for name, (_, default, help_) in schema.items():
            sp.add_argument(_flag(name), dest=name, default=None,
                            help=f"{help_} (default: {default})")
    return ap


def resolve_config(cmd, args) -> dict:
    """Defaults < config file < flags; unknown keys are rejected."""
    schema = SCHEMAS[cmd]
    cfg = {name: default for name, (_, default, _) in schema.items()}
    cfg.update(seed=0, out_dir="out", threads=None)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: file {path} not found")
        try:
            loaded = read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config: top level must be an object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    for name in schema:
        val = getattr(args, name)
        if val is not None:
            cfg[name] = val
    for key in ("seed", "out_dir", "threads"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    for name, (parse, _, _) in schema.items():
        if cfg[name] is None:
            continue
        try:
            cfg[name] = parse(cfg[name])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
    try:
        cfg["seed"] = int(cfg["seed"])
    except (TypeError, ValueError):
        raise ConfigError("seed: must be an integer") from None
    return cfg


def _need(cfg, key, kind="path"):
    val = cfg.get(key)
    if val is None:
        raise ConfigError(f"{key}: required")
    if kind == "path" and not Path(val).exists():
        raise ConfigError(f"{key}: {val} does not exist")
    if kind == "dir" and not Path(val).is_dir():
        raise ConfigError(f"{key}: {val} is not a directory")
    return val


def _wrap_validation(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# -- subcommands: each returns a zero-argument runner after validating -------

def _prep_simulate(cfg):
    keys = [f.name for f in hodgepodge.HodgepodgeParams.__dataclass_fields__.values() if f.name != "seed"]
    params = _wrap_validation(hodgepodge.HodgepodgeParams.from_dict,
                              {**{k: cfg[k] for k in keys}, "seed": cfg["seed"]})
    if cfg["n_steps"] < 1:
        raise ConfigError("n_steps: must be >= 1")
    if cfg["emit_every"] < 1:
        raise ConfigError("emit_every: must be >= 1")

    def go(out):
        series = hodgepodge.run(params, cfg["n_steps"], cfg["emit_every"])
        hodgepodge.save_series(series, out)
        return {"frames": len(series), "last_step": series.steps[-1]}
    return go


def _prep_spectra(cfg):
    src = _need(cfg, "input", "dir")
    alphas = _wrap_validation(lambda: [pdg._check_alpha(a) for a in cfg["alphas"]])
    if not alphas:
        raise ConfigError("alphas: empty")
    if cfg["decimate"] < 1:
        raise ConfigError("decimate: must be >= 1")

    def go(out):
        series = hodgepodge.load_series(src)
        spectra = pdg.spectra_series(series.frames, alphas, step=cfg["decimate"])
        pdg.write_spectra_csv(out / "spectra.csv", spectra)
        return {"pairs": len(spectra)}
    return go


def _load_spectra(src, alphas, step):
    src = Path(src)
    if src.is_dir():
        series = hodgepodge.load_series(src)
        return pdg.spectra_series(series.frames, alphas, step=step)
    if step != 1:
        raise ValueError("decimated spectra need the frame series, not a spectra CSV")
    return pdg.read_spectra_csv(src)


def _prep_cluster(cfg):
    src = _need(cfg, "input")
    ks = cfg["k"]
    if not ks or min(ks) < 1:
        raise ConfigError("k: need cluster counts >= 1")
    if cfg["decimate"] < 1:
        raise ConfigError("decimate: must be >= 1")
    for mode in cfg["features"]:
        if mode not in ("I", "P", "IP"):
            raise ConfigError(f"features: unknown mode {mode!r}")
    if cfg["decimated_input"] is not None:
        _need(cfg, "decimated_input")
    elif cfg["decimate"] > 1 and not Path(src).is_dir():
        raise ConfigError("decimate: needs a series directory as input, or decimated_input")
    alphas = _wrap_validation(lambda: [pdg._check_alpha(a) for a in cfg["alphas"]])
    n = cfg["decimate"]

    def go(out):
        full = _load_spectra(src, alphas, 1)
        dec = None
        if cfg["decimated_input"]:
            dec = pdg.read_spectra_csv(cfg["decimated_input"])
        elif n > 1:
            dec = _load_spectra(src, alphas, n)
        report = {"rows_full": len(full), "rows_decimated": len(dec) if dec else 0, "modes": {}}
        for mode in cfg["features"]:
            X = clustering.feature_matrix(full, mode, cfg["standardize"])
            if len(X) < max(ks):
                raise ValueError(f"{len(X)} frame pairs cannot form {max(ks)} clusters")
            models = {k: clustering.kmeans(X, k, cfg["seed"], cfg["max_iter"], cfg["tol"]) for k in ks}
            segs = {k: clustering.labels_to_segments(m.labels) for k, m in models.items()}
            clustering.write_labels_csv(out / f"labels_full_{mode}.csv", models)
            clustering.write_segments_csv(out / f"segments_full_{mode}.csv", segs)
            entry = {"full": {str(k): _model_summary(models[k], segs[k]) for k in ks}}
            if dec:
                Xd = clustering.feature_matrix(dec, mode, cfg["standardize"])
                dk = [k for k in ks if k <= len(Xd)]
                dmodels = {k: clustering.kmeans(Xd, k, cfg["seed"], cfg["max_iter"], cfg["tol"]) for k in dk}
                dsegs = {k: clustering.labels_to_segments(m.labels) for k, m in dmodels.items()}
                # decimated pair j spans frames (n*j, n*j + n); compare with full pair n*j
                index = np.arange(len(Xd)) * n
                clustering.write_labels_csv(out / f"labels_decimated_{mode}.csv", dmodels, index)
                clustering.write_segments_csv(out / f"segments_decimated_{mode}.csv", dsegs, index)
                entry["decimated"] = {str(k): _model_summary(dmodels[k], dsegs[k]) for k in dk}
                entry["ari_full_vs_decimated"] = {
                    str(k): clustering.compare_clusterings(models[k].labels[index], dmodels[k].labels)
                    for k in dk if len(index) >= 2}
            report["modes"][mode] = entry
        return report
    return go


def _model_summary(model, segs):
    osc = clustering.oscillating_stretches(segs)
    return {
        "objective": model.objective,
        "iterations": model.iterations,
        "cluster_sizes": np.bincount(model.labels, minlength=model.k).tolist(),
        "segments": len(segs),
        "oscillating_stretches": len(osc),
        "longest_oscillation_runs": max((b - a + 1 for a, b, _ in osc), default=0),
    }


def _prep_zstack(cfg):
    src = _need(cfg, "input")
    stack = _wrap_validation(zstack.load_stack, src)
    ch = cfg["channel"] or stack.channels[0]
    if ch not in stack.channels:
        raise ConfigError(f"channel: {ch!r} not among {list(stack.channels)}")
    if len(stack) < 2:
        raise ConfigError("input: stack needs at least 2 planes")
    _wrap_validation(pdg._check_alpha, cfg["alpha"])
    if cfg["eps"] < 0:
        raise ConfigError("eps: must be >= 0")
    if not 9 <= cfg["render_depth"] <= 16:
        raise ConfigError("render_depth: must be 9..16")

    def go(out):
        images = zstack.pdg_transform_stack(stack, ch, cfg["alpha"])
        zstack.write_omega_volume(out / "omega.f64", images, stack)
        pairs = []
        for im in images:
            tag = f"z{im.pair[0]:04d}"
            neg, pos = zstack.split_signs(im)
            for name, part in (("neg", neg), ("pos", pos)):
                deep = zstack.quantize_omega(part, cfg["render_depth"])
                img8, lmap = zstack.lil_rescale(deep, cfg["render_depth"])
                write_pgm(out / f"{tag}_{name}_lil.pgm", img8, maxval=255)
                write_pgm(out / f"{tag}_{name}_section.pgm",
                          zstack.section_rescale(deep, cfg["render_depth"]), maxval=255)
                zstack.write_level_map_csv(out / f"{tag}_{name}_levels.csv", lmap)
            stable = zstack.stable_mask(im, cfg["eps"])
            pairs.append({"pair": list(im.pair), "stable_fraction": float(stable.mean()),
                          "omega_min": float(im.omega.min()), "omega_max": float(im.omega.max())})
        return {"channel": ch, "pairs": pairs}
    return go


def _prep_lcms_synth(cfg):
    if cfg["format"] not in ("csv", "bin"):
        raise ConfigError("format: must be csv or bin")
    fields = {k: cfg[k] for k in SCHEMAS["lcms-synth"] if k != "format"}
    synth_cfg = _wrap_validation(lcms.SynthConfig, **fields)

    def go(out):
        res = lcms.synth_generate(synth_cfg, cfg["seed"])
        ext = ".csv" if cfg["format"] == "csv" else ".f64"
        lcms.write_grid(out / f"grid{ext}", res.grid)
        lcms.write_grid(out / f"truth_mask{ext}", res.grid, res.truth.astype(float))
        true_peaks = [{"m": p.m, "t0": p.t0, "width": p.width, "height": p.height} for p in res.peaks]
        write_json(out / "true_peaks.json", true_peaks)
        counts = {lcms.LABELS[c]: int((res.truth == c).sum()) for c in lcms.LABELS}
        return {"shape": list(res.grid.shape), "truth_counts": counts,
                "noise_fraction": counts["r"] / res.truth.size,
                "envelope": res.components["envelope"], "ridge_rows": res.components["ridge_rows"]}
    return go


def _prep_lcms_analyze(cfg):
    src = _need(cfg, "input")
    grid = _wrap_validation(lcms.read_grid, src)
    if grid.y.size < 100:
        raise ConfigError("input: grid needs at least 100 cells")
    blank = _wrap_validation(lcms.read_grid, _need(cfg, "blank")) if cfg["blank"] else None
    truth = None
    if cfg["truth"]:
        truth = _wrap_validation(lcms.read_grid, _need(cfg, "truth")).y.astype(np.uint8)
        if truth.shape != grid.shape:
            raise ConfigError("truth: shape differs from the grid")
    if cfg["format"] not in ("csv", "bin"):
        raise ConfigError("format: must be csv or bin")
    if not 0 < cfg["ridge_frac"] <= 1:
        raise ConfigError("ridge_frac: must lie in (0, 1]")
    if cfg["m_tol"] < 0 or cfg["t_tol"] < 0:
        raise ConfigError("m_tol, t_tol: must be >= 0")

    def analyze(g):
        model = lcms.fit_noise_envelope(g, cfg["k"], cfg["clip"])
        mask = lcms.classify(g, model, cfg["ridge_frac"])
        r, q, s = lcms.decompose(g, mask, model)
        return model, mask, (r, q, s), lcms.extract_peaks(s)

    def go(out):
        ext = ".csv" if cfg["format"] == "csv" else ".f64"
        model, mask, (r, q, s), peaks = analyze(grid)
        for name, part in (("r", r), ("q", q), ("s", s), ("mask", mask.astype(float))):
            lcms.write_grid(out / f"{name}{ext}", grid, part)
        lcms.write_peaks_csv(out / "peaks_all.csv", peaks, grid)
        report = {
            "noise_fit": {"mu": model.mu, "sigma": model.sigma, "k": model.k,
                          "degenerate": model.degenerate},
            "thresholds": {"envelope": model.envelope, "noise_mean": model.mean_level,
                           "ridge_frac": cfg["ridge_frac"]},
            "counts": {lcms.LABELS[c]: int((mask == c).sum()) for c in lcms.LABELS},
            "peaks": len(peaks),
            "additivity_max_error": float(np.abs(grid.y - ((r + q) + s)).max()),
        }
        final = peaks
        if blank is not None:
            *_, blank_peaks = analyze(blank)
            final = lcms.subtract_blank(peaks, blank_peaks, cfg["m_tol"], cfg["t_tol"])
            report["blank_peaks"] = len(blank_peaks)
        lcms.write_peaks_csv(out / "peaks.csv", final, grid)
        report["peaks_after_blank"] = len(final)
        if truth is not None:
            report["scores"] = {lcms.LABELS[c]: lcms.cell_scores(mask, truth, c) for c in (lcms.Q, lcms.S)}
        return report
    return go


def _prep_kernel_check(cfg):
    src = _need(cfg, "input")
    spec = _wrap_validation(kernelspec.load_system_spec, src)

    def go(out):
        report = kernelspec.check_system(spec)
        if not report["ok"]:
            go.status = 2
        return report
    go.status = 0
    return go


PREP = {
    "simulate-bz": _prep_simulate,
    "spectra": _prep_spectra,
    "cluster": _prep_cluster,
    "zstack": _prep_zstack,
    "lcms-synth": _prep_lcms_synth,
    "lcms-analyze": _prep_lcms_analyze,
    "kernel-check": _prep_kernel_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmd = args.command
    try:
        cfg = resolve_config(cmd, args)
        runner = PREP[cmd](cfg)
    except ConfigError as exc:
        print(f"infodyn {cmd}: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["out_dir"])
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg["threads"]):
            out.mkdir(parents=True, exist_ok=True)
            log.info("running %s into %s", cmd, out)
            result = runner(out)
        write_json(out / f"{cmd}.report.json", {"command": cmd, "config": cfg, "result": result})
    except Exception as exc:  # noqa: BLE001 - report any failure as exit 1
        log.debug("failure", exc_info=True)
        print(f"infodyn {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        print(dumps(result), end="")
    return getattr(runner, "status", 0)


if __name__ == "__main__":
    sys.exit(main())
