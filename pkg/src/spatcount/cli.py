"""Command-line surface.

Subcommands: simulate, fit, summary, map, study, rerun (plus a hidden
oracle helper for debugging).  Exit codes: 0 success, 2 configuration
error, 3 unreadable or malformed file, 4 data validation failure,
6 threshold check failed (study success rate below 90%, or a rerun
byte comparison mismatch).
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np

from . import __version__
from .config import RunConfig, config_from_echo, load_config
from .io import (CHAIN_HEADER, MANIFEST_NAME, RASTER_NAME, SUMMARY_NAME,
                 FileFormatError, centers_filename, chain_filename,
                 read_centers_npz, read_chain_csv, read_counts_csv,
                 read_manifest, read_marked_csv, read_raster_header,
                 read_traps_csv, sha256_of, write_centers_npz,
                 write_chain_csv, write_counts_csv, write_manifest,
                 write_marked_csv, write_raster_csv, write_summary_csv,
                 write_traps_csv, write_truth_csv)
from .mcmc import run_chains
from .model import (ConfigError, DataError, PriorSpec, StateSpace,
                    state_space_from_traps)
from .oracle import brute_force_N_posterior
from .posterior import calibrate, density_surface, summarize
from .simulate import preset, preset_names, simulate_dataset

JOBS_ENV = "SPATCOUNT_JOBS"

_MANIFEST_FORMAT = "spatcount-run/1"
_RHAT_WARN = 1.1
_CEILING_FRACTION = 0.05    # draws within this fraction of M count as at-ceiling
_CEILING_WARN = 0.01        # warn when more than this share of draws is there


def _jobs(args) -> int:
    if getattr(args, "jobs", None) is not None:
        jobs = args.jobs
    else:
        raw = os.environ.get(JOBS_ENV, "").strip()
        if raw:
            try:
                jobs = int(raw)
            except ValueError:
                raise ConfigError(
                    f"{JOBS_ENV}={raw!r} is not an integer") from None
        else:
            jobs = 1
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def _warn(msg: str) -> None:
    print(f"WARNING: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    rc = load_config(args.config)
    if rc.scenario is None:
        raise ConfigError("simulate needs a [scenario] section")
    scen = rc.scenario
    if args.seed is not None:
        scen = replace(scen, seed=args.seed)
    truth = simulate_dataset(scen)
    os.makedirs(args.out, exist_ok=True)
    write_traps_csv(os.path.join(args.out, "traps.csv"), scen.traps,
                    rc.unit_scale)
    write_counts_csv(os.path.join(args.out, "counts.csv"), truth.counts)
    write_truth_csv(os.path.join(args.out, "truth.csv"), truth.centers,
                    truth.marked_index, rc.unit_scale)
    if truth.marked is not None:
        write_marked_csv(os.path.join(args.out, "marked.csv"), truth.marked,
                         individual_ids=[int(i) for i in truth.marked_index])
    total = int(truth.counts.counts.sum())
    print(f"simulated {scen.name or 'scenario'}: R={scen.traps.R} T={scen.T} "
          f"N_true={scen.N_true} m={scen.m} total_count={total} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _read_dataset(traps_path: str, counts_path: str, marked_path,
                  unit_scale: float):
    traps, trap_ids = read_traps_csv(traps_path, unit_scale)
    data = read_counts_csv(counts_path, trap_ids)
    marked = None
    if marked_path:
        marked, _ = read_marked_csv(marked_path, trap_ids, data.T)
        marked.validate_against(data)
    return traps, data, marked


def _input_record(path):
    if path is None:
        return None
    return {"path": os.path.abspath(path), "sha256": sha256_of(path)}


def _write_run_outputs(out_dir: str, chains, cfg) -> list:
    entries = []
    for c in chains:
        draws = chain_filename(c.chain_id)
        centers = centers_filename(c.chain_id)
        write_chain_csv(os.path.join(out_dir, draws), c, cfg.burn_in, cfg.thin)
        write_centers_npz(os.path.join(out_dir, centers), c, cfg.burn_in)
        entries.append({
            "chain_id": c.chain_id,
            "draws": draws,
            "centers": centers,
            "n_kept": c.n_kept,
            "acceptance_rates": c.acceptance_rates,
        })
    return entries


def cmd_fit(args) -> int:
    rc = load_config(args.config)
    if rc.mcmc is None:
        raise ConfigError("fit needs an [mcmc] section")
    cfg = rc.mcmc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        rc = replace(rc, mcmc=cfg)
    jobs = _jobs(args)

    traps, data, marked = _read_dataset(args.traps, args.counts, args.marked,
                                        rc.unit_scale)
    space = state_space_from_traps(traps, rc.buffer)
    os.makedirs(args.out, exist_ok=True)

    t0 = time.monotonic()
    chains = run_chains(data, traps, space, rc.priors, cfg, marked, jobs=jobs)
    wall = time.monotonic() - t0

    entries = _write_run_outputs(args.out, chains, cfg)
    manifest = {
        "format": _MANIFEST_FORMAT,
        "command": "fit",
        "versions": _versions(),
        "inputs": {
            "traps": _input_record(args.traps),
            "counts": _input_record(args.counts),
            "marked": _input_record(args.marked),
            "config": _input_record(args.config),
        },
        "config_echo": rc.echo(),
        "seed": cfg.seed,
        "jobs": jobs,
        "R": traps.R,
        "T": data.T,
        "m": 0 if marked is None else marked.m,
        "space": {"xmin": space.xmin, "xmax": space.xmax,
                  "ymin": space.ymin, "ymax": space.ymax,
                  "area": space.area},
        "area_model_units": space.area,
        "density_factor": rc.density_factor,
        "area_unit_name": rc.area_unit_name,
        "chains": entries,
        "wall_time_seconds": wall,
    }
    # written last: its presence marks the run complete
    write_manifest(os.path.join(args.out, MANIFEST_NAME), manifest)
    kept = entries[0]["n_kept"] if entries else 0
    print(f"fit: {len(chains)} chain(s) x {kept} kept draws "
          f"({cfg.algorithm}, M={cfg.M}) in {wall:.1f} s -> {args.out}")
    return 0


def _versions() -> dict:
    import scipy
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:   # numba is optional at runtime (pure-python path)
        numba_version = None
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba_version,
        "spatcount": __version__,
    }


# ---------------------------------------------------------------------------
# summary


def _space_from_manifest(mf: dict) -> StateSpace:
    try:
        s = mf["space"]
        return StateSpace(xmin=float(s["xmin"]), xmax=float(s["xmax"]),
                          ymin=float(s["ymin"]), ymax=float(s["ymax"]))
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"manifest missing space bounds: {exc}") from None


def _load_run(run_dir: str) -> dict:
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FileFormatError(
            f"{run_dir}: no {MANIFEST_NAME}; not a completed run directory")
    return read_manifest(path)


def _summary_rows(chains, space, density_factor: float, area_unit_name: str):
    summ = summarize(chains, space)
    rows = list(summ.rows())
    rows.append(summ.parameters["D"].scaled(f"D_per_{area_unit_name}",
                                            density_factor))
    return summ, rows


def _print_summary_table(rows, include_rhat: bool) -> None:
    cols = ["mean", "sd", "mode", "q025", "q500", "q975"]
    if include_rhat:
        cols.append("rhat")
    head = f"{'parameter':<14}" + "".join(f"{c:>11}" for c in cols)
    print(head)
    for r in rows:
        cells = [r.mean, r.sd, r.mode, r.q025, r.q500, r.q975]
        line = f"{r.name:<14}" + "".join(f"{v:>11.4g}" for v in cells)
        if include_rhat:
            line += f"{r.rhat:>11.4f}" if r.rhat is not None else f"{'':>11}"
        print(line)


def _write_summary_for_run(run_dir: str, out_dir: str, mf: dict,
                           quiet: bool = False):
    chains = [read_chain_csv(os.path.join(run_dir, c["draws"]))
              for c in mf["chains"]]
    space = _space_from_manifest(mf)
    summ, rows = _summary_rows(chains, space, float(mf["density_factor"]),
                               str(mf["area_unit_name"]))
    include_rhat = summ.n_chains >= 2
    write_summary_csv(os.path.join(out_dir, SUMMARY_NAME), rows, include_rhat)
    if quiet:
        return summ, chains
    _print_summary_table(rows, include_rhat)
    if not include_rhat:
        print("note: single chain, rhat needs at least two chains")
    else:
        for name in ("sigma", "lambda0", "N"):
            r = summ.parameters[name].rhat
            if r is not None and r >= _RHAT_WARN:
                _warn(f"rhat({name}) = {r:.3f} >= {_RHAT_WARN}; "
                      "chains disagree, run longer")
    M = int(mf["config_echo"]["mcmc"]["M"])
    pooled = np.concatenate([c.N for c in chains])
    frac = float(np.mean(pooled >= (1.0 - _CEILING_FRACTION) * M))
    if frac > _CEILING_WARN:
        _warn(f"{100 * frac:.1f}% of abundance draws lie within "
              f"{int(100 * _CEILING_FRACTION)}% of the augmentation ceiling "
              f"M={M}; raise M and refit")
    return summ, chains


def cmd_summary(args) -> int:
    mf = _load_run(args.run_dir)
    _write_summary_for_run(args.run_dir, args.run_dir, mf)
    return 0


# ---------------------------------------------------------------------------
# map


def _load_centers(run_dir: str, mf: dict) -> list:
    loaded = []
    for c in mf["chains"]:
        path = os.path.join(run_dir, c["centers"])
        if not os.path.exists(path):
            raise FileFormatError(f"center draws not stored: {path} missing")
        _, x, y, w = read_centers_npz(path)
        loaded.append(SimpleNamespace(centers_x=x, centers_y=y, centers_w=w))
    if sum(ch.centers_x.shape[0] for ch in loaded) == 0:
        raise FileFormatError(
            f"{run_dir}: center files hold zero snapshots (center storage "
            "was effectively disabled)")
    return loaded


def _resolve_pixel(args, mf: dict) -> float:
    if args.pixel is not None:
        return args.pixel
    echo_pixel = (mf.get("config_echo", {}).get("output") or {}).get("pixel")
    if echo_pixel is None:
        raise ConfigError("no --pixel given and none in the run's config echo")
    return float(echo_pixel)


def _render_image(path: str, raster) -> None:
    try:
        from matplotlib import image as mpimage
    except ImportError:
        raise ConfigError(
            "image rendering needs matplotlib (install the 'plot' extra); "
            "the raster CSV was still written") from None
    arr = raster.values[::-1]   # row 0 of the file/raster is ymin; image top is ymax
    vmax = float(arr.max())
    mpimage.imsave(path, arr, cmap="Greys", vmin=0.0,
                   vmax=vmax if vmax > 0 else 1.0, origin="upper")


def cmd_map(args) -> int:
    mf = _load_run(args.run_dir)
    pixel = _resolve_pixel(args, mf)
    loaded = _load_centers(args.run_dir, mf)
    space = _space_from_manifest(mf)
    raster = density_surface(loaded, space, pixel)
    out_path = os.path.join(args.run_dir, RASTER_NAME)
    write_raster_csv(out_path, raster, units="model")
    print(f"raster {raster.nx}x{raster.ny} pixel={pixel:g} "
          f"mass={raster.total():.4f} snapshots={raster.n_snapshots} "
          f"-> {out_path}")
    if args.image:
        img = os.path.join(args.run_dir, args.image_name)
        _render_image(img, raster)
        print(f"image -> {img}")
    return 0


# ---------------------------------------------------------------------------
# study


def cmd_study(args) -> int:
    rc = load_config(args.config) if args.config else None
    if args.preset is not None:
        if args.preset not in preset_names():
            raise ConfigError(f"unknown preset {args.preset!r}; known: "
                              f"{', '.join(preset_names())}")
        if rc is not None and rc.scenario is not None:
            raise ConfigError("give either --preset or a [scenario] section, "
                              "not both")
        scen = preset(args.preset)
    elif rc is not None and rc.scenario is not None:
        scen = rc.scenario
    else:
        raise ConfigError("study needs --preset or a config [scenario] section")
    if rc is None or rc.mcmc is None:
        raise ConfigError("study needs a config with an [mcmc] section")
    cfg = rc.mcmc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.replicates < 1:
        raise ConfigError("--replicates must be >= 1")

    report = calibrate(scen, args.replicates, cfg, priors=rc.priors,
                       jobs=_jobs(args))

    os.makedirs(args.out, exist_ok=True)
    _write_study_csv(os.path.join(args.out, "study.csv"), report)
    _write_replicates_csv(os.path.join(args.out, "study_replicates.csv"),
                          report)

    head = (f"{'scenario':<22}{'N_true':>7}{'reps':>6}{'ok':>5}"
            f"{'mean':>9}{'RMSE':>9}{'mode':>9}{'RMSE':>9}{'coverage':>10}")
    print(head)
    print(f"{report.scenario_name:<22}{report.N_true:>7}"
          f"{report.replicates:>6}{report.n_completed:>5}"
          f"{report.avg_mean:>9.3f}{report.rmse_mean:>9.3f}"
          f"{report.avg_mode:>9.3f}{report.rmse_mode:>9.3f}"
          f"{report.coverage:>10.3f}")
    for k, msg in report.failures:
        _warn(f"replicate {k} failed: {msg}")
    success = report.n_completed / report.replicates
    if success < 0.9:
        _warn(f"only {report.n_completed}/{report.replicates} replicates "
              "completed (< 90%)")
        return 6
    return 0


def _write_study_csv(path: str, report) -> None:
    import csv
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "N_true", "replicates", "completed",
                    "avg_mean", "rmse_mean", "avg_mode", "rmse_mode",
                    "coverage"])
        w.writerow([report.scenario_name, report.N_true, report.replicates,
                    report.n_completed, repr(report.avg_mean),
                    repr(report.rmse_mean), repr(report.avg_mode),
                    repr(report.rmse_mode), repr(report.coverage)])


def _write_replicates_csv(path: str, report) -> None:
    import csv
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["replicate", "post_mean", "post_mode", "q025", "q975",
                    "covered"])
        for k, mean, mode, q025, q975, covered in report.per_replicate:
            w.writerow([k, repr(mean), repr(mode), repr(q025), repr(q975),
                        int(covered)])


# ---------------------------------------------------------------------------
# rerun


def _verify_inputs_unchanged(mf: dict) -> None:
    for name in ("traps", "counts", "marked"):
        rec = mf["inputs"].get(name)
        if rec is None:
            continue
        path = rec["path"]
        if not os.path.exists(path):
            raise FileFormatError(f"recorded input missing: {path}")
        digest = sha256_of(path)
        if digest != rec["sha256"]:
            raise DataError(f"input {name} changed since the original run: "
                            f"{path} (sha256 differs)")


def cmd_rerun(args) -> int:
    run = args.run_dir
    mf = _load_run(run)
    out = args.out or os.path.join(run, "rerun")
    if os.path.abspath(out) == os.path.abspath(run):
        raise ConfigError("rerun output directory must differ from the run")
    _verify_inputs_unchanged(mf)

    rc = config_from_echo(mf["config_echo"])
    if rc.mcmc is None:
        raise FileFormatError("manifest echo lacks the mcmc configuration")
    traps, data, marked = _read_dataset(
        mf["inputs"]["traps"]["path"], mf["inputs"]["counts"]["path"],
        (mf["inputs"].get("marked") or {}).get("path"), rc.unit_scale)
    space = state_space_from_traps(traps, rc.buffer)

    os.makedirs(out, exist_ok=True)
    chains = run_chains(data, traps, space, rc.priors, rc.mcmc, marked,
                        jobs=_jobs(args))
    _write_run_outputs(out, chains, rc.mcmc)

    names = [c["draws"] for c in mf["chains"]]
    names += [c["centers"] for c in mf["chains"]]
    if os.path.exists(os.path.join(run, SUMMARY_NAME)):
        _write_summary_for_run(out, out, mf, quiet=True)
        names.append(SUMMARY_NAME)
    if os.path.exists(os.path.join(run, RASTER_NAME)):
        header = read_raster_header(os.path.join(run, RASTER_NAME))
        loaded = _load_centers(out, mf)
        raster = density_surface(loaded, space, header["pixel"])
        write_raster_csv(os.path.join(out, RASTER_NAME), raster,
                         units=header["units"])
        names.append(RASTER_NAME)

    mismatched = []
    for name in names:
        with open(os.path.join(run, name), "rb") as f:
            original = f.read()
        with open(os.path.join(out, name), "rb") as f:
            redone = f.read()
        status = "ok" if original == redone else "MISMATCH"
        if status == "MISMATCH":
            mismatched.append(name)
        print(f"  {name}: {status}")
    if mismatched:
        _warn(f"{len(mismatched)} file(s) differ: {', '.join(mismatched)}")
        return 6
    print(f"rerun: all {len(names)} files byte-identical")
    return 0


# ---------------------------------------------------------------------------
# hidden oracle helper


def cmd_oracle(args) -> int:
    traps, trap_ids = read_traps_csv(args.traps)
    data = read_counts_csv(args.counts, trap_ids)
    space = state_space_from_traps(traps, args.buffer)
    post = brute_force_N_posterior(data, traps, space, args.sigma,
                                   args.lambda0, args.m_small, G=args.grid)
    for n, p in enumerate(post.pmf):
        print(f"P(N={n}) = {p:.10f}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spatcount",
        description="Spatially explicit density estimation from "
                    "trap-count data.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True,
                           metavar="{simulate,fit,summary,map,study,rerun}")

    s = sub.add_parser("simulate", help="write a simulated dataset")
    s.add_argument("config", help="INI config with a [scenario] section")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run the sampler on a dataset")
    f.add_argument("traps", help="traps.csv")
    f.add_argument("counts", help="counts.csv")
    f.add_argument("--marked", default=None, help="marked.csv (optional)")
    f.add_argument("--config", required=True, help="INI config with [mcmc]")
    f.add_argument("--out", required=True, help="run output directory")
    f.add_argument("--seed", type=int, default=None,
                   help="override the mcmc seed")
    f.add_argument("--jobs", type=int, default=None,
                   help=f"parallel chain workers (default ${JOBS_ENV} or 1)")
    f.set_defaults(func=cmd_fit)

    su = sub.add_parser("summary", help="summarize a completed run")
    su.add_argument("run_dir", help="directory written by fit")
    su.set_defaults(func=cmd_summary)

    mp = sub.add_parser("map", help="rasterize the posterior density surface")
    mp.add_argument("run_dir", help="directory written by fit")
    mp.add_argument("--pixel", type=float, default=None,
                    help="pixel side length in model units")
    mp.add_argument("--image", action="store_true",
                    help="also render a greyscale PNG (needs matplotlib)")
    mp.add_argument("--image-name", default="map.png",
                    help="image filename inside the run directory")
    mp.set_defaults(func=cmd_map)

    st = sub.add_parser("study", help="replicated simulate-fit calibration")
    st.add_argument("--preset", default=None,
                    help="scenario preset name (see docs)")
    st.add_argument("--config", default=None,
                    help="INI config ([mcmc] required; [scenario] optional)")
    st.add_argument("--replicates", type=int, required=True)
    st.add_argument("--out", default=".", help="report output directory")
    st.add_argument("--seed", type=int, default=None,
                    help="override the study root seed")
    st.add_argument("--jobs", type=int, default=None)
    st.set_defaults(func=cmd_study)

    rr = sub.add_parser("rerun", help="re-execute a run from its manifest "
                                      "and byte-compare the outputs")
    rr.add_argument("run_dir", help="directory written by fit")
    rr.add_argument("--out", default=None,
                    help="where to write the re-executed outputs "
                         "(default <run_dir>/rerun)")
    rr.add_argument("--jobs", type=int, default=None)
    rr.set_defaults(func=cmd_rerun)

    orc = sub.add_parser("oracle")   # debugging helper, not advertised
    orc.add_argument("--traps", required=True)
    orc.add_argument("--counts", required=True)
    orc.add_argument("--sigma", type=float, required=True)
    orc.add_argument("--lambda0", type=float, required=True)
    orc.add_argument("--buffer", type=float, required=True)
    orc.add_argument("--m-small", type=int, default=2)
    orc.add_argument("--grid", type=int, default=21)
    orc.set_defaults(func=cmd_oracle)

    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileFormatError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
