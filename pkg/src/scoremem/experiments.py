"""Named experiments driven by JSON configs.

A config is a JSON object with blocks ``schedule``, ``dataset``, ``model``,
``sampling``, ``training`` (neural experiments), ``sweep`` and ``output``.
User values are merged over per-experiment defaults (see ``template``).
Seeds are never defaulted: every config must state the ones it uses.
"""

from __future__ import annotations

import copy
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .datasets import gen_dataset, write_dataset
from .dynamics import (TimeGrid, generate_samples, initial_states, integrate_reverse_ode,
                       integrate_reverse_sde, sample_seed, time_transform)
from .errors import ConfigError, NotCollapsedError
from .geometry import (convergence_rate_fit, memorization_fraction, voronoi_edges_2d)
from .neural import (Loss, NeuralScore, ScoreNet, TrainConfig, save_checkpoint, train,
                     write_loss_history)
from .outputs import (write_csv, write_json, write_manifest, write_terminals,
                      write_trajectories)
from .schedules import Schedule
from .scores import (ConditionalScore, Dataset, EmpiricalBayesScore, ExactScore,
                     TikhonovScore)
from .svg import PALETTE, Plot

log = logging.getLogger("scoremem")

OUTPUT_ENV = "SCOREMEM_OUTPUT_DIR"

VE_EXP10 = {"kind": "ve", "g.name": "exp10", "g.params": {}, "T": 1.0}
VP_LINEAR = {"kind": "vp", "g.name": "linear", "g.params": {"beta_min": 0.001, "beta_max": 3.0},
             "T": 1.0}

_BASE = {
    "schedule": VE_EXP10,
    "dataset": {"generator": "gaussian2d", "n": 20, "seed": 0},
    "model": {"score": "exact", "c": 0.0},
    "sampling": {"count": 1000, "tau": 1e-2, "t_min": 1e-4, "steps": 400, "seed": 1},
    "output": {"dir": None, "svg_timestamp": True, "trajectories": 30},
}

_NEURAL = {
    "schedule": VP_LINEAR,
    "sampling": {"count": 1000, "tau": 1e-1, "t_min": 1e-4, "steps": 400},
    "training": {"width": 64, "epochs": 30000, "loss": "score_matching", "c": 0.0,
                 "lr": 1e-3, "batch_size": None, "t_lo": None, "fourier_scale": 1.0,
                 "seeds": [0, 1, 2]},
}

TEMPLATES = {
    "voronoi-trajectories": {
        "description": "reverse-ODE samples, trajectories and Voronoi cells (VE)",
        "sampling": {"init": "reference"},
    },
    "vp-trajectories": {
        "description": "same as voronoi-trajectories under the VP schedule, optional SDE noise",
        "schedule": VP_LINEAR,
        "sampling": {"alpha2": 0.0, "init": "reference"},
    },
    "rate-fit": {
        "description": "log-distance vs s slopes over the final window of each trajectory",
        "sampling": {"count": 30, "t_min": 1e-6, "steps": 600},
        "rate": {"window": 0.3, "skip_last": 3, "band": [-1.1, -0.9], "r2_min": 0.98},
    },
    "two-point": {
        "description": "two symmetric points: invariant bisector and collapse off it",
        "schedule": {"kind": "ve", "g.name": "two_t", "g.params": {}, "T": 1.0},
        "dataset": {"generator": "symmetric2"},
        "sampling": {"count": 100, "on_axis": [1.0, -0.5, 2.0]},
    },
    "tikhonov-sweep": {
        "description": "collapse fraction of the Tikhonov-damped score versus c (to t = 0)",
        "sampling": {"t_min": 0.0},
        "sweep": {"values": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1]},
    },
    "eb-sweep": {
        "description": "collapse fraction of the empirical-Bayes score versus c",
        "sampling": {"seeds": [1, 2, 3]},
        "sweep": {"values": [0.0, 0.01, 0.1, 1.0]},
    },
    "nn-epoch-sweep": {
        "description": "trained-network collapse fraction versus training epochs",
        "sweep": {"values": [5000, 30000, 300000]},
        **copy.deepcopy(_NEURAL),
    },
    "nn-width-sweep": {
        "description": "trained-network collapse fraction versus layer width",
        "sweep": {"values": [8, 32, 128]},
        **copy.deepcopy(_NEURAL),
    },
    "nn-tikhonov-sweep": {
        "description": "networks trained with the Tikhonov-penalized loss versus c",
        "sweep": {"values": [0.001, 0.01, 0.1]},
        **copy.deepcopy(_NEURAL),
    },
    "nn-loss-compare": {
        "description": "score-matching versus denoising loss at matched width and epochs",
        "sweep": {"values": ["score_matching", "denoising"]},
        **copy.deepcopy(_NEURAL),
    },
    "conditional-demo": {
        "description": "conditional empirical score on paired data, one run per observation",
        "dataset": {"generator": "paired-linear", "n": 20, "seed": 0, "step": 1.0},
        "model": {"score": "conditional", "observations": None},
    },
}


def list_experiments():
    return {k: v["description"] for k, v in TEMPLATES.items()}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def template(name) -> dict:
    """Complete default config for ``name`` (seeds filled in)."""
    if name not in TEMPLATES:
        raise ConfigError(f"unknown experiment {name!r}")
    t = {k: v for k, v in TEMPLATES[name].items() if k != "description"}
    cfg = {"experiment": name, **_merge(_BASE, t)}
    if name.startswith("nn-"):
        cfg["sampling"].pop("seed", None)
    if name == "eb-sweep":
        cfg["sampling"].pop("seed", None)
    if "generator" in cfg["dataset"] and cfg["dataset"]["generator"].startswith("symmetric"):
        cfg["dataset"] = {"generator": cfg["dataset"]["generator"]}
    return cfg


def _strip_seeds(cfg):
    out = copy.deepcopy(cfg)
    out["sampling"].pop("seed", None)
    out["sampling"].pop("seeds", None)
    out["dataset"].pop("seed", None)
    if "training" in out:
        out["training"].pop("seeds", None)
    return out


def resolve_config(raw: dict) -> dict:
    """Merge a user config over its experiment defaults and validate it."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("experiment")
    if name not in TEMPLATES:
        raise ConfigError(f"unknown experiment {name!r}; see list-experiments")
    unknown = set(raw) - {"experiment", "schedule", "dataset", "model", "sampling",
                          "training", "sweep", "output", "rate"}
    if unknown:
        raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
    base = _strip_seeds(template(name))
    # user dataset and schedule blocks replace the defaults wholesale
    for key in ("dataset", "schedule"):
        if key in raw:
            base[key] = {}
    cfg = _merge(base, raw)
    _require_seeds(cfg)
    return cfg


def _require_seeds(cfg):
    name = cfg["experiment"]
    ds = cfg["dataset"]
    if ds.get("generator") in ("gaussian2d", "paired-linear") and "seed" not in ds:
        raise ConfigError("dataset.seed is required for random generators")
    if name.startswith("nn-"):
        seeds = cfg.get("training", {}).get("seeds")
        if not seeds:
            raise ConfigError("training.seeds (non-empty list) is required")
    elif name == "eb-sweep":
        if not cfg["sampling"].get("seeds"):
            raise ConfigError("sampling.seeds (non-empty list) is required")
    elif "seed" not in cfg["sampling"]:
        raise ConfigError("sampling.seed is required")


def _schedule(block) -> Schedule:
    block = dict(block)
    if "g" in block and "g.name" not in block:
        block["g.name"] = block.pop("g")
    if "params" in block and "g.params" not in block:
        block["g.params"] = block.pop("params")
    try:
        return Schedule.from_dict(block)
    except (TypeError, KeyError) as err:
        raise ConfigError(f"bad schedule block: {err}") from None


def _analytic_model(block, dataset, schedule, c=None):
    kind = block.get("score", "exact")
    c = float(block.get("c", 0.0) if c is None else c)
    if kind == "exact" or (kind == "tikhonov" and c == 0.0):
        return ExactScore(dataset, schedule)
    if kind == "tikhonov":
        return TikhonovScore(dataset, schedule, c)
    if kind == "empirical_bayes":
        return EmpiricalBayesScore(dataset, schedule, c)
    raise ConfigError(f"unknown score model {kind!r}")


# ---------------------------------------------------------------------------


@dataclass
class RunContext:
    config: dict
    out_dir: Path
    base_dir: Path
    timestamp: bool = True
    written: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def path(self, name) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        write_json(self.path(name), obj)

    def svg(self, name, plot: Plot):
        plot.save(self.path(name), timestamp=self.timestamp)

    @property
    def sampling(self):
        return self.config["sampling"]

    def dataset(self) -> Dataset:
        ds = gen_dataset(self.config["dataset"], base_dir=self.base_dir)
        write_dataset(ds, self.path("dataset.csv"))
        return ds

    def schedule(self) -> Schedule:
        return _schedule(self.config["schedule"])

    def grid(self, schedule, t_min=None):
        s = self.sampling
        return TimeGrid.geometric(schedule.T, s["t_min"] if t_min is None else t_min,
                                  int(s["steps"]))


def _bbox(dataset, X, pad=0.5):
    pts = np.vstack([dataset.points, X]) if X is not None and len(X) else dataset.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return (float(lo[0] - pad), float(hi[0] + pad), float(lo[1] - pad), float(hi[1] + pad))


def _scatter(ctx, dataset, X, title, trajectories=None, edges=True, name="scatter.svg",
             groups=None):
    if dataset.d != 2:
        return
    plot = Plot(title=title, xlabel="x_1", ylabel="x_2", equal_aspect=True)
    extent = [dataset.points, X]
    if trajectories is not None:
        extent.append(trajectories[0])
    view = _bbox(dataset, np.vstack(extent), pad=0.3)
    if edges and dataset.N >= 2:
        segs = [e[:4] for e in voronoi_edges_2d(dataset, view)]
        if segs:
            plot.segments(segs, color="#bbbbbb", label="Voronoi edges")
    if trajectories is not None:
        for j in range(trajectories.shape[1]):
            plot.line(trajectories[:, j, 0], trajectories[:, j, 1], color="#888888",
                      width=0.6, opacity=0.6)
    plot.points(dataset.points, color="black", r=3.5, label="data")
    if groups is None:
        plot.points(X, color=PALETTE[1], r=1.5, label="generated", opacity=0.8)
    else:
        for k, (lab, Xg) in enumerate(groups):
            plot.points(Xg, color=PALETTE[(k + 1) % len(PALETTE)], r=1.5, label=lab,
                        opacity=0.8)
    plot.bounds = view
    ctx.svg(name, plot)


def _export_edges(ctx, dataset, X):
    if dataset.d != 2 or dataset.N < 2:
        return
    edges = voronoi_edges_2d(dataset, _bbox(dataset, X))
    ctx.csv("voronoi_edges.csv", ["x1", "y1", "x2", "y2", "cell_a", "cell_b"], edges)


def _report_summary(report, extra=None):
    out = report.summary()
    out.update(extra or {})
    return out


# -- analytic-score experiments ---------------------------------------------

def _square_init(schedule, count):
    """Points evenly spaced on the square of half-width sigma(T)."""
    a = float(schedule.std(schedule.T))
    u = np.arange(count) / count * 4.0
    side, frac = np.floor(u).astype(int), u - np.floor(u)
    v = -a + 2 * a * frac
    pts = np.empty((count, 2))
    pts[side == 0] = np.column_stack([v, np.full_like(v, -a)])[side == 0]
    pts[side == 1] = np.column_stack([np.full_like(v, a), v])[side == 1]
    pts[side == 2] = np.column_stack([-v, np.full_like(v, a)])[side == 2]
    pts[side == 3] = np.column_stack([np.full_like(v, -a), -v])[side == 3]
    return pts


def _trajectories(ctx: RunContext):
    ds, sch = ctx.dataset(), ctx.schedule()
    s = ctx.sampling
    model = _analytic_model(ctx.config["model"], ds, sch)
    count, seed = int(s["count"]), int(s["seed"])
    if s.get("init", "reference") == "square":
        if ds.d != 2:
            raise ConfigError("square initialization needs d = 2")
        xT = _square_init(sch, count)
    else:
        xT = initial_states(sch, count, ds.d, seed)
    grid = ctx.grid(sch)
    alpha2 = float(s.get("alpha2", 0.0))
    if alpha2 > 0.0:
        rng = np.random.default_rng(sample_seed(seed, 1 << 32))
        traj = integrate_reverse_sde(model, sch, xT, alpha2, grid, rng)
    else:
        traj = integrate_reverse_ode(model, sch, xT, grid)
    X = traj.states[-1]
    report = memorization_fraction(X, ds, float(s["tau"]))
    keep = min(int(ctx.config["output"]["trajectories"]), count)
    svals = _s_values(sch, traj.times)
    write_trajectories(ctx.path("trajectories.csv"), traj.times, traj.states[:, :keep], svals)
    write_terminals(ctx.path("terminals.csv"), X, report)
    _export_edges(ctx, ds, X)
    summary = _report_summary(report, {"schedule": sch.label, "model": model.label,
                                       "alpha2": alpha2})
    ctx.json("report.json", summary)
    _scatter(ctx, ds, X, f"{model.label}, {sch.kind.value.upper()}",
             trajectories=traj.states[:, :keep])
    ctx.results.update(summary)


def _s_values(schedule, times, c=0.0):
    times = np.asarray(times, dtype=float)
    out = np.full(times.shape, np.inf)
    pos = schedule.variance(times) + c > 0
    out[pos] = time_transform(schedule, times[pos], c)
    return out


def _rate_fit(ctx: RunContext):
    ds, sch = ctx.dataset(), ctx.schedule()
    s, rc = ctx.sampling, ctx.config["rate"]
    model = _analytic_model(ctx.config["model"], ds, sch)
    count = int(s["count"])
    xT = initial_states(sch, count, ds.d, int(s["seed"]))
    traj = integrate_reverse_ode(model, sch, xT, ctx.grid(sch))
    svals = _s_values(sch, traj.times)
    fits, rows = [], []
    lo, hi = rc["band"]
    plot = Plot(title=f"convergence, {sch.kind.value.upper()}", xlabel="s",
                ylabel="log10 |x - x0^n|", ylog=False)
    for j in range(count):
        single = type(traj)(traj.times, traj.states[:, j], svals)
        try:
            f = convergence_rate_fit(single, ds, sch, window=rc["window"],
                                     skip_last=rc["skip_last"], tau=s["tau"], sample_id=j)
        except NotCollapsedError:
            rows.append([j, -1, np.nan, np.nan, np.nan, 0])
            continue
        ok = lo <= f.slope_s <= hi and f.r2 >= rc["r2_min"]
        fits.append(f)
        rows.append([j, f.limit_index, f.slope_s, f.slope_sigma, f.r2, int(ok)])
        dist = np.sqrt(((traj.states[:, j] - ds.points[f.limit_index]) ** 2).sum(-1))
        with np.errstate(divide="ignore"):
            plot.line(svals, np.log10(dist), color=PALETTE[j % len(PALETTE)], width=0.8)
    ctx.csv("rate_fits.csv", ["sample_id", "limit_index", "slope_s", "slope_sigma", "r2",
                              "within_band"], rows)
    write_trajectories(ctx.path("trajectories.csv"), traj.times, traj.states, svals)
    ctx.svg("rate.svg", plot)
    passed = sum(r[-1] for r in rows)
    summary = {"schedule": sch.label, "trajectories": count, "collapsed": len(fits),
               "within_band": passed, "band": [lo, hi], "r2_min": rc["r2_min"],
               "median_slope_s": float(np.median([f.slope_s for f in fits])) if fits else None}
    ctx.json("report.json", summary)
    ctx.results.update(summary)


def _two_point(ctx: RunContext):
    ds, sch = ctx.dataset(), ctx.schedule()
    s = ctx.sampling
    model = _analytic_model(ctx.config["model"], ds, sch)
    grid = ctx.grid(sch)
    ys = np.asarray(s.get("on_axis", [1.0]), dtype=float)
    xT_axis = np.column_stack([np.zeros_like(ys), ys])
    traj = integrate_reverse_ode(model, sch, xT_axis, grid)
    exact = traj.times[:, None, None] / sch.T * xT_axis[None]
    dev = np.sqrt(((traj.states - exact) ** 2).sum(-1))
    svals = _s_values(sch, traj.times)
    write_trajectories(ctx.path("trajectories.csv"), traj.times, traj.states, svals)
    plot = Plot(title="on-axis trajectories", xlabel="s", ylabel="log10 |x(t)|")
    for j in range(len(ys)):
        plot.line(svals, np.log10(np.sqrt((traj.states[:, j] ** 2).sum(-1))),
                  label=f"x_2(T) = {ys[j]:g}")
    ctx.svg("rate.svg", plot)

    count = int(s["count"])
    xT = initial_states(sch, count, ds.d, int(s["seed"]))
    X = integrate_reverse_ode(model, sch, xT, grid, record=False)
    report = memorization_fraction(X, ds, float(s["tau"]))
    write_terminals(ctx.path("terminals.csv"), X, report)
    _export_edges(ctx, ds, X)
    _scatter(ctx, ds, X, "two-point example", trajectories=traj.states)
    summary = _report_summary(report, {
        "schedule": sch.label,
        "on_axis_max_deviation": float(dev.max()),
        "on_axis_terminal_norm": np.sqrt((traj.states[-1] ** 2).sum(-1)).tolist()})
    ctx.json("report.json", summary)
    ctx.results.update(summary)


def _sweep_plot(ctx, values, means, xlabel, title, xlog=True):
    plot = Plot(title=title, xlabel=xlabel, ylabel="fraction collapsed", xlog=xlog)
    v = np.asarray(values, dtype=float)
    m = np.asarray(means, dtype=float)
    keep = v > 0 if xlog else np.ones(len(v), bool)
    plot.line(v[keep], m[keep], markers=True, label="fraction")
    ctx.svg("sweep.svg", plot)


_SWEEP_HEADER = ["value", "seed", "fraction", "collapsed", "boundary_proximal",
                 "unclassified", "count"]


def _sweep_row(value, seed, report):
    return [value, seed, report.fraction_collapsed, int(report.collapsed.sum()),
            report.boundary_proximal_count, report.unclassified_count, report.total]


def _mean_rows(rows):
    out = []
    for v in dict.fromkeys(r[0] for r in rows):
        fr = [r[2] for r in rows if r[0] == v]
        out.append([v, float(np.mean(fr)), float(np.std(fr)), len(fr)])
    return out


def _analytic_sweep(ctx: RunContext, seeds, score_kind):
    ds, sch = ctx.dataset(), ctx.schedule()
    s = ctx.sampling
    values = ctx.config["sweep"]["values"]
    block = dict(ctx.config["model"], score=score_kind)
    rows = []
    for k, c in enumerate(values):
        model = _analytic_model(block, ds, sch, c=c)
        for seed in seeds:
            X = generate_samples(model, sch, int(s["count"]), t_min=float(s["t_min"]),
                                 seed=int(seed), steps=int(s["steps"]))
            rep = memorization_fraction(X, ds, float(s["tau"]))
            write_terminals(ctx.path(f"terminals/value{k}_seed{seed}.csv"), X, rep)
            rows.append(_sweep_row(c, seed, rep))
            log.info("%s c=%g seed=%s fraction=%.3f", score_kind, c, seed,
                     rep.fraction_collapsed)
    ctx.csv("sweep.csv", _SWEEP_HEADER, rows)
    means = _mean_rows(rows)
    ctx.csv("sweep_mean.csv", ["value", "mean_fraction", "std_fraction", "seeds"], means)
    _sweep_plot(ctx, [m[0] for m in means], [m[1] for m in means], "c",
                f"{score_kind} sweep")
    ctx.results.update({"values": [m[0] for m in means], "mean_fraction": [m[1] for m in means]})
    ctx.json("report.json", ctx.results)


def _tikhonov_sweep(ctx):
    _analytic_sweep(ctx, [ctx.sampling["seed"]], "tikhonov")


def _eb_sweep(ctx):
    _analytic_sweep(ctx, ctx.sampling["seeds"], "empirical_bayes")


# -- neural experiments -----------------------------------------------------

def _train_config(tb, seed, **over):
    kw = dict(loss=tb["loss"], c=tb["c"], epochs=int(tb["epochs"]), lr=tb["lr"],
              batch_size=tb["batch_size"], t_lo=tb["t_lo"], seed=int(seed))
    kw.update(over)
    if Loss(kw["loss"]) is not Loss.TIKHONOV:
        kw["c"] = 0.0
    return TrainConfig(**kw)


def _neural_sweep(ctx: RunContext):
    name = ctx.config["experiment"]
    ds, sch = ctx.dataset(), ctx.schedule()
    s, tb = ctx.sampling, ctx.config["training"]
    values = ctx.config["sweep"]["values"]
    rows = []

    def evaluate(net, value, seed, k):
        X = generate_samples(NeuralScore(net, sch), sch, int(s["count"]),
                             t_min=float(s["t_min"]), seed=int(seed), steps=int(s["steps"]))
        rep = memorization_fraction(X, ds, float(s["tau"]))
        write_terminals(ctx.path(f"terminals/value{k}_seed{seed}.csv"), X, rep)
        save_checkpoint(net, ctx.path(f"checkpoints/value{k}_seed{seed}.npz"),
                        extra={"experiment": name, "value": value})
        rows.append(_sweep_row(value, seed, rep))
        log.info("%s value=%s seed=%s fraction=%.3f", name, value, seed, rep.fraction_collapsed)

    for seed in tb["seeds"]:
        if name == "nn-epoch-sweep":
            epochs = sorted(int(v) for v in values)
            cfg = _train_config(tb, seed, epochs=epochs[-1])
            net = ScoreNet.init(ds.d, int(tb["width"]), int(seed), mode=cfg.mode,
                                fourier_scale=tb["fourier_scale"])
            _, hist = train(net, ds, sch, cfg, checkpoints=epochs,
                            on_checkpoint=lambda e, n: evaluate(n, e, seed, epochs.index(e)))
            write_loss_history(hist, ctx.path(f"loss/seed{seed}.csv"))
            continue
        for k, v in enumerate(values):
            width = int(v) if name == "nn-width-sweep" else int(tb["width"])
            over = {}
            if name == "nn-tikhonov-sweep":
                over = {"loss": "tikhonov", "c": float(v)}
            elif name == "nn-loss-compare":
                over = {"loss": v}
            cfg = _train_config(tb, seed, **over)
            net = ScoreNet.init(ds.d, width, int(seed), mode=cfg.mode,
                                fourier_scale=tb["fourier_scale"])
            _, hist = train(net, ds, sch, cfg)
            write_loss_history(hist, ctx.path(f"loss/value{k}_seed{seed}.csv"))
            evaluate(net, v, seed, k)
    order = {v: i for i, v in enumerate(values)}
    rows.sort(key=lambda r: (order[r[0]], tb["seeds"].index(r[1])))
    ctx.csv("sweep.csv", _SWEEP_HEADER, rows)
    means = _mean_rows(rows)
    ctx.csv("sweep_mean.csv", ["value", "mean_fraction", "std_fraction", "seeds"], means)
    if name != "nn-loss-compare":
        xlabel = {"nn-epoch-sweep": "epochs", "nn-width-sweep": "width",
                  "nn-tikhonov-sweep": "c"}[name]
        _sweep_plot(ctx, [m[0] for m in means], [m[1] for m in means], xlabel, name)
    else:
        plot = Plot(title=name, xlabel="loss index", ylabel="fraction collapsed")
        plot.line(np.arange(len(means)), [m[1] for m in means], markers=True,
                  label=" vs ".join(str(m[0]) for m in means))
        ctx.svg("sweep.svg", plot)
    ctx.results.update({"values": [m[0] for m in means], "mean_fraction": [m[1] for m in means]})
    ctx.json("report.json", ctx.results)


# -- conditional ---------------------------------------------------------------

def _conditional(ctx: RunContext):
    ds, sch = ctx.dataset(), ctx.schedule()
    s = ctx.sampling
    if ds.observations is None:
        raise ConfigError("conditional-demo needs a dataset with observations")
    obs = ctx.config["model"].get("observations")
    ys = ds.distinct_observations() if obs is None else [np.atleast_1d(np.asarray(y, float))
                                                         for y in obs]
    # validate every requested y before doing any work
    models = [ConditionalScore(ds, sch, y) for y in ys]
    tau = float(s["tau"])
    rows, groups = [], []
    for j, model in enumerate(models):
        members = model.members
        X = generate_samples(model, sch, int(s["count"]), t_min=float(s["t_min"]),
                             seed=sample_seed(int(s["seed"]), j), steps=int(s["steps"]))
        rep = memorization_fraction(X, ds, tau)
        write_terminals(ctx.path(f"terminals/group{j}.csv"), X, rep)
        out = np.setdiff1d(np.arange(ds.N), members)
        if out.size:
            dout = np.sqrt(((X[:, None, :] - ds.points[out][None]) ** 2).sum(-1)).min(axis=1)
        else:
            dout = np.full(X.shape[0], np.inf)
        din = np.sqrt(((X[:, None, :] - ds.points[members][None]) ** 2).sum(-1)).min(axis=1)
        rows.append([j, " ".join(repr(float(v)) for v in model.y), len(members),
                     float(np.mean(din < tau)), int(np.sum(dout < tau)), float(dout.min())])
        groups.append((f"y = {' '.join(f'{v:g}' for v in model.y)}", X))
    ctx.csv("groups.csv", ["group", "y", "members", "fraction_in_group",
                           "out_of_group_hits", "min_out_of_group_distance"], rows)
    _scatter(ctx, ds, np.vstack([g[1] for g in groups]), "conditional samples",
             groups=groups)
    summary = {"groups": len(rows), "out_of_group_hits": int(sum(r[4] for r in rows)),
               "fraction_in_group": [r[3] for r in rows]}
    ctx.json("report.json", summary)
    ctx.results.update(summary)


RUNNERS = {
    "voronoi-trajectories": _trajectories,
    "vp-trajectories": _trajectories,
    "rate-fit": _rate_fit,
    "two-point": _two_point,
    "tikhonov-sweep": _tikhonov_sweep,
    "eb-sweep": _eb_sweep,
    "nn-epoch-sweep": _neural_sweep,
    "nn-width-sweep": _neural_sweep,
    "nn-tikhonov-sweep": _neural_sweep,
    "nn-loss-compare": _neural_sweep,
    "conditional-demo": _conditional,
}


def output_dir_for(cfg, override=None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    d = cfg.get("output", {}).get("dir")
    return Path(d) if d else Path("runs") / cfg["experiment"]


def run_experiment(raw_config: dict, output_dir=None, base_dir=".", timestamp=None) -> dict:
    """Run one experiment; returns ``{"out_dir", "results", "manifest"}``."""
    cfg = resolve_config(raw_config)
    if timestamp is None:
        timestamp = bool(cfg["output"].get("svg_timestamp", True))
    out = output_dir_for(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out, Path(base_dir), timestamp=timestamp)
    hashed = copy.deepcopy(cfg)
    hashed["output"].pop("dir", None)
    ctx.json("config.json", cfg)
    t0 = time.perf_counter()
    log.info("running %s into %s (backend %s)", cfg["experiment"], out, _kernels.BACKEND)
    RUNNERS[cfg["experiment"]](ctx)
    log.info("finished in %.1fs", time.perf_counter() - t0)
    manifest = write_manifest(out, ctx.written, hashed, extra={"experiment": cfg["experiment"]})
    return {"out_dir": out, "results": ctx.results, "manifest": manifest}
