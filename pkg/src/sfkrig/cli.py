"""Command-line front end for the kriging pipeline.

Every subcommand is a thin client over the service operations: it parses
files and flags into a request model, dispatches it either in-process or
to a remote server (``--server URL``), and writes the response out as
CSV/JSON/SVG artifacts. Exit codes: 0 success, 1 runtime failure, 2
usage/validation error.

A TOML config file (``--config``) may supply any flag value; explicit
flags win. Keys live either at the top level (``seed``, ``jobs``, ``out``,
``server``) or in a table named after the subcommand. Unknown keys are
rejected.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import httpx
import numpy as np
import pydantic

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .dataio import (_fmt, _write_csv, load_locations, load_longitudinal,
                     read_prediction, read_weights, write_json_model,
                     write_locations, write_observations, write_prediction,
                     write_weights)
from .errors import DataError, DomainError, IoError, SfkrigError
from .report import (WeightDistanceTable, curve_rows, svg_bar_chart,
                     svg_box_chart, svg_line_chart,
                     write_weight_distance_csv)
from .service import ops
from .service import schemas as S

_COMMON_KEYS = {"seed", "jobs", "out", "server"}


def _fail_validation(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _fail_runtime(stage: str, message: str):
    click.echo(f"error in {stage}: {message}", err=True)
    sys.exit(1)


def _merged_params(ctx: click.Context, config_path) -> dict:
    """Layer: defaults < config file < explicit flags."""
    params = dict(ctx.params)
    params.pop("config_path", None)
    if config_path is None:
        return params
    try:
        with open(config_path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        _fail_validation(f"cannot read config {config_path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        _fail_validation(f"invalid TOML in {config_path}: {exc}")
    known_commands = set(ctx.parent.command.commands) if ctx.parent else set()
    merged: dict = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in known_commands:
                _fail_validation(f"unknown config table [{key}]")
            if key == ctx.command.name:
                merged.update(value)
        elif key in _COMMON_KEYS:
            merged[key] = value
        else:
            _fail_validation(f"unknown config key {key!r}")
    flag_to_param = {}
    for param in ctx.command.params:
        flag_to_param[param.name] = param.name
        for opt in param.opts:
            if opt.startswith("--"):
                flag_to_param[opt[2:].replace("-", "_")] = param.name
    for key, value in merged.items():
        name = flag_to_param.get(key.replace("-", "_"))
        if name is None or name not in params:
            _fail_validation(
                f"config key {key!r} not recognized by {ctx.command.name!r}")
        source = ctx.get_parameter_source(name)
        if source != click.core.ParameterSource.COMMANDLINE:
            params[name] = value
    return params


def _call(server, path: str, req_model, payload: dict, resp_model, op,
          stage: str):
    try:
        req = req_model.model_validate(payload)
    except pydantic.ValidationError as exc:
        _fail_validation(f"{stage}: {exc}")
    if server:
        try:
            r = httpx.post(server.rstrip("/") + path,
                           json=req.model_dump(), timeout=600.0)
        except httpx.HTTPError as exc:
            _fail_runtime(stage, f"request to {server} failed: {exc}")
        if r.status_code == 422:
            _fail_validation(f"{stage}: {r.text}")
        if r.status_code != 200:
            _fail_runtime(stage, f"server returned {r.status_code}: {r.text}")
        return resp_model.model_validate(r.json())
    try:
        return op(req)
    except (DataError, DomainError, ValueError) as exc:
        _fail_validation(f"{stage}: {exc}")
    except SfkrigError as exc:
        _fail_runtime(stage, str(exc))


def _require(p: dict, **flags):
    """flags: param name -> flag string; missing after config merge is a
    usage error."""
    for name, flag in flags.items():
        if p.get(name) is None:
            _fail_validation(f"missing option '{flag}'")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(locations_path, observations_path):
    try:
        loc = load_locations(locations_path)
        table = load_longitudinal(observations_path, loc)
    except (DataError, IoError) as exc:
        _fail_validation(str(exc))
    return S.Locations.from_core(loc), S.Observations.from_core(table)


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        _fail_validation(f"{what} must be comma-separated numbers: {text!r}")
    if not values:
        _fail_validation(f"{what} is empty")
    return values


def _grid_payload(etas, taus):
    if etas is None and taus is None:
        return None
    grid = {}
    if etas is not None:
        grid["etas"] = _parse_floats(etas, "--etas")
    if taus is not None:
        grid["taus"] = _parse_floats(taus, "--taus")
    if "etas" not in grid:
        _fail_validation("--taus requires --etas")
    return grid


def _common(fn):
    fn = click.option("--server", default=None, metavar="URL",
                      help="Remote service URL (default: in-process).")(fn)
    fn = click.option("--out", default=".", metavar="DIR",
                      help="Output directory.")(fn)
    fn = click.option("--config", "config_path", default=None, metavar="PATH",
                      help="TOML config file; explicit flags win.")(fn)
    return fn


def _basis_opts(fn):
    fn = click.option("--period", type=float, default=None,
                      help="Fourier period (default: domain length).")(fn)
    fn = click.option("--order", type=int, default=4,
                      help="B-spline order.")(fn)
    fn = click.option("--t1", type=float, default=1.0,
                      help="Domain end.")(fn)
    fn = click.option("--t0", type=float, default=0.0,
                      help="Domain start.")(fn)
    fn = click.option("--m", "m_basis", type=int, default=10,
                      help="Number of basis functions.")(fn)
    fn = click.option("--basis-kind", type=click.Choice(["bspline", "fourier"]),
                      default="bspline")(fn)
    return fn


def _basis_payload(p: dict) -> dict:
    return {"kind": p["basis_kind"], "m": p["m_basis"],
            "domain": (p["t0"], p["t1"]), "order": p["order"],
            "period": p["period"]}


def _fit_opts(fn):
    fn = click.option("--fixed-nugget", type=float, default=None,
                      help="Hold the nugget at this value during fitting.")(fn)
    fn = click.option("--range-factor", type=float, default=3.0,
                      help="Cap on fitted range, in cutoff multiples.")(fn)
    fn = click.option("--cutoff", type=float, default=None,
                      help="Max pair distance (default: half the maximum).")(fn)
    fn = click.option("--bins", "n_bins", type=int, default=15,
                      help="Number of distance bins.")(fn)
    fn = click.option("--nu", type=float, default=None,
                      help="Matern smoothness (0.5, 1.5, or 2.5).")(fn)
    fn = click.option("--family",
                      type=click.Choice(["exponential", "gaussian", "matern"]),
                      default="exponential")(fn)
    return fn


def _fit_payload(p: dict) -> dict:
    return {"family": p["family"], "nu": p["nu"], "n_bins": p["n_bins"],
            "cutoff": p["cutoff"], "range_factor": p["range_factor"],
            "fixed_nugget": p["fixed_nugget"]}


def _solver_opts(fn):
    fn = click.option("--max-inner", type=int, default=10000)(fn)
    fn = click.option("--max-outer", type=int, default=200)(fn)
    fn = click.option("--inner-tol", type=float, default=1e-10)(fn)
    fn = click.option("--feas-tol", type=float, default=1e-8)(fn)
    return fn


def _solver_payload(p: dict) -> dict:
    return {"feas_tol": p["feas_tol"], "inner_tol": p["inner_tol"],
            "max_outer": p["max_outer"], "max_inner": p["max_inner"]}


@click.group()
@click.version_option()
def main():
    """Sparse functional kriging: simulate, smooth, fit, predict, report."""


@main.command()
@_common
@click.option("--n", "n_observed", type=int, default=None,
              help="Number of observed sites.")
@click.option("--range", "range_param", type=float, default=None,
              help="True variogram range.")
@click.option("--grid-side", type=int, default=15)
@click.option("--sill", type=float, default=2.0)
@click.option("--nugget", type=float, default=0.0)
@click.option("--noise-sd", type=float, default=0.3)
@click.option("--n-time", type=int, default=31)
@click.option("--m", "m_basis", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.pass_context
def simulate(ctx, config_path, **_):
    """Generate synthetic locations, observations, and held-out truth."""
    p = _merged_params(ctx, config_path)
    _require(p, n_observed="--n", range_param="--range")
    resp = _call(p["server"], "/simulate", S.SimulateRequest,
                 {"n_observed": p["n_observed"],
                  "range_param": p["range_param"],
                  "grid_side": p["grid_side"], "sill": p["sill"],
                  "nugget": p["nugget"], "noise_sd": p["noise_sd"],
                  "n_time": p["n_time"], "m_basis": p["m_basis"],
                  "seed": p["seed"]},
                 S.SimulateResponse, ops.simulate_op, "simulate")
    out = _outdir(p["out"])
    write_locations(out / "locations.csv", resp.locations.to_core())
    write_observations(out / "observations.csv",
                       resp.observations.to_core(resp.locations.to_core()))
    all_loc = resp.all_locations
    observed = set(resp.observed_indices)
    m = len(resp.truth_coefficients[0])
    header = (["site_id"] + [f"x{k + 1}" for k in range(len(all_loc.coords[0]))]
              + ["observed"] + [f"w{j + 1}" for j in range(m)])
    rows = [
        (sid, *map(_fmt, coords), int(i in observed),
         *map(_fmt, resp.truth_coefficients[i]))
        for i, (sid, coords) in enumerate(zip(all_loc.site_ids,
                                              all_loc.coords))
    ]
    _write_csv(out / "truth.csv", header, rows)
    click.echo(f"wrote locations.csv, observations.csv, truth.csv to {out}")


@main.command()
@_common
@_basis_opts
@click.option("--locations", "locations_path", default=None, metavar="PATH")
@click.option("--observations", "observations_path", default=None,
              metavar="PATH")
@click.option("--ridge", type=float, default=0.0,
              help="Ridge stabilizer for per-site least squares.")
@click.pass_context
def smooth(ctx, config_path, **_):
    """Fit per-site basis coefficients to longitudinal observations."""
    p = _merged_params(ctx, config_path)
    _require(p, locations_path="--locations",
              observations_path="--observations")
    locations, observations = _load_inputs(p["locations_path"],
                                           p["observations_path"])
    resp = _call(p["server"], "/smooth", S.SmoothRequest,
                 {"locations": locations.model_dump(),
                  "observations": observations.model_dump(),
                  "basis": _basis_payload(p), "ridge": p["ridge"]},
                 S.SmoothResponse, ops.smooth_op, "smooth")
    out = _outdir(p["out"])
    m = len(resp.coefficients[0])
    _write_csv(out / "coefficients.csv",
               ["site_id"] + [f"w{j + 1}" for j in range(m)],
               ((sid, *map(_fmt, row))
                for sid, row in zip(locations.site_ids, resp.coefficients)))
    write_json_model(out / "basis.json",
                     S.Basis.model_validate(_basis_payload(p))
                     .to_core().to_json())
    click.echo(f"wrote coefficients.csv, basis.json to {out}")


@main.command()
@_common
@_basis_opts
@_fit_opts
@click.option("--locations", "locations_path", default=None, metavar="PATH")
@click.option("--observations", "observations_path", default=None,
              metavar="PATH")
@click.pass_context
def variogram(ctx, config_path, **_):
    """Estimate the empirical trace-variogram and fit a parametric model."""
    p = _merged_params(ctx, config_path)
    _require(p, locations_path="--locations",
              observations_path="--observations")
    locations, observations = _load_inputs(p["locations_path"],
                                           p["observations_path"])
    resp = _call(p["server"], "/variogram", S.VariogramRequest,
                 {"locations": locations.model_dump(),
                  "observations": observations.model_dump(),
                  "basis": _basis_payload(p), "fit": _fit_payload(p)},
                 S.VariogramResponse, ops.variogram_op, "variogram")
    out = _outdir(p["out"])
    _write_csv(out / "empirical.csv", ["r", "gamma", "count"],
               ((_fmt(r), _fmt(g), c)
                for r, g, c in zip(resp.empirical.r, resp.empirical.gamma,
                                   resp.empirical.count)))
    write_json_model(out / "variogram.json", resp.model.to_core().to_json())
    click.echo(f"wrote empirical.csv, variogram.json to {out}")


@main.command()
@_common
@_basis_opts
@_fit_opts
@_solver_opts
@click.option("--locations", "locations_path", default=None, metavar="PATH")
@click.option("--observations", "observations_path", default=None,
              metavar="PATH")
@click.option("--target", default=None, metavar="X,Y",
              help="Target coordinates.")
@click.option("--target-site", default=None, metavar="ID",
              help="Predict at this site, excluding it from estimation.")
@click.option("--sparse/--no-sparse", default=False,
              help="Use the sparse solver (with CV unless --eta is given).")
@click.option("--eta", type=float, default=None,
              help="Fixed penalty level (skips CV).")
@click.option("--tau", type=float, default=1.0,
              help="Adaptive-weight exponent used with --eta.")
@click.option("--etas", default=None, metavar="LIST",
              help="Comma-separated CV grid for eta.")
@click.option("--taus", default=None, metavar="LIST",
              help="Comma-separated CV grid for tau.")
@click.option("--n-grid", type=int, default=101,
              help="Prediction time points.")
@click.pass_context
def krige(ctx, config_path, **_):
    """Predict the function at a target location."""
    p = _merged_params(ctx, config_path)
    _require(p, locations_path="--locations",
              observations_path="--observations")
    locations, observations = _load_inputs(p["locations_path"],
                                           p["observations_path"])
    if (p["target"] is None) == (p["target_site"] is None):
        _fail_validation("exactly one of --target and --target-site "
                         "is required")
    payload = {"locations": locations.model_dump(),
               "observations": observations.model_dump(),
               "basis": _basis_payload(p), "fit": _fit_payload(p),
               "sparse": p["sparse"], "eta": p["eta"], "tau": p["tau"],
               "grid": _grid_payload(p["etas"], p["taus"]),
               "n_prediction_times": p["n_grid"],
               "solver": _solver_payload(p)}
    if p["target"] is not None:
        payload["target"] = _parse_floats(p["target"], "--target")
    else:
        payload["target_site_id"] = p["target_site"]
    resp = _call(p["server"], "/krige", S.KrigeRequest, payload,
                 S.KrigeResponse, ops.krige_op, "krige")
    out = _outdir(p["out"])
    write_weights(out / "weights.csv", resp.site_ids, resp.weights)
    write_prediction(out / "prediction.csv", resp.prediction_times,
                     resp.prediction_values)
    write_json_model(out / "summary.json", {
        "sparse": resp.sparse, "eta": resp.eta, "tau": resp.tau,
        "mu": resp.mu, "support_size": resp.support_size,
        "feasibility_residual": resp.feasibility_residual,
        "variogram": resp.model.to_core().to_json()})
    artifacts = "weights.csv, prediction.csv, summary.json"
    if resp.diagnostics is not None:
        _write_csv(out / "diagnostics.csv",
                   ["outer_iter", "objective", "abs_gap", "rho", "mu",
                    "inner_iters"],
                   ((int(k), _fmt(f), _fmt(g), _fmt(r), _fmt(m), int(it))
                    for k, f, g, r, m, it in resp.diagnostics))
        artifacts += ", diagnostics.csv"
    click.echo(f"wrote {artifacts} to {out}")


@main.command(name="cv-select")
@_common
@_basis_opts
@_fit_opts
@_solver_opts
@click.option("--locations", "locations_path", default=None, metavar="PATH")
@click.option("--observations", "observations_path", default=None,
              metavar="PATH")
@click.option("--etas", default=None, metavar="LIST",
              help="Comma-separated CV grid for eta.")
@click.option("--taus", default=None, metavar="LIST",
              help="Comma-separated CV grid for tau.")
@click.pass_context
def cv_select(ctx, config_path, **_):
    """Score the (eta, tau) grid by leave-one-out CV and pick the best."""
    p = _merged_params(ctx, config_path)
    _require(p, locations_path="--locations",
              observations_path="--observations")
    locations, observations = _load_inputs(p["locations_path"],
                                           p["observations_path"])
    resp = _call(p["server"], "/cv-select", S.CvSelectRequest,
                 {"locations": locations.model_dump(),
                  "observations": observations.model_dump(),
                  "basis": _basis_payload(p), "fit": _fit_payload(p),
                  "grid": _grid_payload(p["etas"], p["taus"]),
                  "solver": _solver_payload(p)},
                 S.CvSelectResponse, ops.cv_select_op, "cv-select")
    out = _outdir(p["out"])
    _write_csv(out / "cv_scores.csv", ["eta", "tau", "score"],
               ((_fmt(s.eta), _fmt(s.tau), _fmt(s.score))
                for s in resp.scores))
    write_json_model(out / "selection.json",
                     {"eta": resp.best_eta, "tau": resp.best_tau})
    click.echo(f"wrote cv_scores.csv, selection.json to {out}")


@main.command()
@_common
@click.option("--n", "n_observed", type=int, default=None)
@click.option("--range", "range_param", type=float, default=None)
@click.option("--replicates", type=int, default=20)
@click.option("--jobs", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--sill", type=float, default=2.0)
@click.option("--nugget", type=float, default=0.0)
@click.option("--noise-sd", type=float, default=0.3)
@click.option("--etas", default=None, metavar="LIST")
@click.option("--taus", default=None, metavar="LIST")
@click.pass_context
def experiment(ctx, config_path, **_):
    """Run the sparse-vs-plain prediction experiment over replicates."""
    p = _merged_params(ctx, config_path)
    _require(p, n_observed="--n", range_param="--range")
    resp = _call(p["server"], "/experiment", S.ExperimentRequest,
                 {"n_observed": p["n_observed"],
                  "range_param": p["range_param"], "sill": p["sill"],
                  "nugget": p["nugget"], "noise_sd": p["noise_sd"],
                  "seed": p["seed"], "n_replicates": p["replicates"],
                  "jobs": p["jobs"],
                  "grid": _grid_payload(p["etas"], p["taus"])},
                 S.ExperimentResponse, ops.experiment_op, "experiment")
    out = _outdir(p["out"])
    _write_csv(out / "experiment.csv",
               ["replicate", "n", "range", "sofk_mse", "ofk_mse",
                "nonzero_mean"],
               ((r.replicate, r.n, _fmt(r.range_param), _fmt(r.sofk_mse),
                 _fmt(r.ofk_mse), _fmt(r.nonzero_mean)) for r in resp.rows))
    s = resp.summary
    _write_csv(out / "summary.csv",
               ["n_replicates", "n", "range", "sofk_mse_mean", "sofk_mse_sd",
                "ofk_mse_mean", "ofk_mse_sd", "nonzero_mean", "nonzero_sd",
                "nearest_zero_fraction"],
               [(s["n_replicates"], s["n"], _fmt(s["range"]),
                 _fmt(s["sofk_mse_mean"]), _fmt(s["sofk_mse_sd"]),
                 _fmt(s["ofk_mse_mean"]), _fmt(s["ofk_mse_sd"]),
                 _fmt(s["nonzero_mean"]), _fmt(s["nonzero_sd"]),
                 _fmt(resp.nearest_zero_fraction))])
    edges = resp.hist_edges
    _write_csv(out / "zero_fraction.csv",
               ["bin_lo", "bin_hi", "zero_fraction"],
               ((_fmt(edges[b]), _fmt(edges[b + 1]),
                 _fmt(resp.zero_fraction[b]))
                for b in range(len(resp.zero_fraction))))
    svg = svg_bar_chart(edges[:-1], edges[1:], resp.zero_fraction,
                        "Zero-weight fraction by distance", "distance",
                        "zero fraction")
    (out / "zero_fraction.svg").write_text(svg)
    click.echo(f"wrote experiment.csv, summary.csv, zero_fraction.csv, "
               f"zero_fraction.svg to {out}")


@main.command()
@_common
@_basis_opts
@click.option("--weights", "weights_path", default=None, metavar="PATH")
@click.option("--locations", "locations_path", default=None, metavar="PATH")
@click.option("--target", default=None, metavar="X,Y",
              help="Target coordinates the weights refer to.")
@click.option("--bins", "n_bins", type=int, default=10)
@click.option("--prediction", "prediction_path", default=None, metavar="PATH",
              help="Render this prediction.csv as an SVG curve.")
@click.option("--observations", "observations_path", default=None,
              metavar="PATH",
              help="Also write per-site observed-vs-smoothed curves.")
@click.pass_context
def report(ctx, config_path, **_):
    """Summarize a kriging run as figure-ready CSV/SVG tables."""
    p = _merged_params(ctx, config_path)
    _require(p, weights_path="--weights", locations_path="--locations",
             target="--target")
    try:
        loc = load_locations(p["locations_path"])
        weight_ids, weights = read_weights(p["weights_path"])
    except (DataError, IoError) as exc:
        _fail_validation(str(exc))
    if list(weight_ids) != list(loc.site_ids):
        _fail_validation("weights.csv site order does not match "
                         "locations.csv")
    target = _parse_floats(p["target"], "--target")
    resp = _call(p["server"], "/report", S.ReportRequest,
                 {"locations": S.Locations.from_core(loc).model_dump(),
                  "weights": list(map(float, weights)), "target": target,
                  "n_bins": p["n_bins"]},
                 S.ReportResponse, ops.report_op, "report")
    out = _outdir(p["out"])
    table = WeightDistanceTable(
        np.array([b.bin_lo for b in resp.bins]),
        np.array([b.bin_hi for b in resp.bins]),
        np.array([b.count for b in resp.bins], dtype=int),
        np.array([b.zero_fraction for b in resp.bins]),
        np.array([b.min for b in resp.bins]),
        np.array([b.q25 for b in resp.bins]),
        np.array([b.median for b in resp.bins]),
        np.array([b.q75 for b in resp.bins]),
        np.array([b.max for b in resp.bins]))
    write_weight_distance_csv(out / "weight_distance.csv", table)
    (out / "weight_distance.svg").write_text(
        svg_box_chart(table, "Kriging weights by distance", "distance",
                      "weight"))
    (out / "zero_fraction.svg").write_text(
        svg_bar_chart(table.bin_lo, table.bin_hi, table.zero_fraction,
                      "Zero-weight fraction by distance", "distance",
                      "zero fraction"))
    artifacts = "weight_distance.csv, weight_distance.svg, zero_fraction.svg"
    if p["prediction_path"] is not None:
        try:
            ts, vs = read_prediction(p["prediction_path"])
        except (DataError, IoError) as exc:
            _fail_validation(str(exc))
        (out / "prediction.svg").write_text(
            svg_line_chart([(ts, vs, "steelblue")], "Predicted curve", "t",
                           "value"))
        artifacts += ", prediction.svg"
    if p["observations_path"] is not None:
        locations = S.Locations.from_core(loc)
        try:
            table_obs = load_longitudinal(p["observations_path"], loc)
        except (DataError, IoError) as exc:
            _fail_validation(str(exc))
        observations = S.Observations.from_core(table_obs)
        sresp = _call(p["server"], "/smooth", S.SmoothRequest,
                      {"locations": locations.model_dump(),
                       "observations": observations.model_dump(),
                       "basis": _basis_payload(p)},
                      S.SmoothResponse, ops.smooth_op, "report")
        from .basis import FunctionalDataset
        dataset = FunctionalDataset(
            loc, S.Basis.model_validate(_basis_payload(p)).to_core(),
            np.array(sresp.coefficients))
        _write_csv(out / "curves.csv", ["site_id", "t", "observed",
                                        "smoothed"],
                   curve_rows(dataset, table_obs.times, table_obs.values))
        artifacts += ", curves.csv"
    click.echo(f"wrote {artifacts} to {out}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
