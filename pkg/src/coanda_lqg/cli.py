"""Command-line front end.

Each subcommand reads an optional JSON experiment config, runs one
experiment and writes CSV, JSON and SVG artifacts into ``--out``. Exit codes:
0 success, 2 configuration or invariant error, 3 numerical failure, 4 I/O
failure. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, io, svg
from .cloop import (
    ControlLawConfig,
    run_flowrate_sweep,
    run_input_disturbance,
    run_step_experiment,
)
from .control import (
    DEFAULT_INTEGRATOR_COST,
    DEFAULT_R,
    DEFAULT_V,
    DEFAULT_W,
    RiccatiError,
    augment,
    default_q,
    default_realization,
    ltr_sweep,
    margin_grid,
    synthesize,
)
from .dsp import AmSpec, FrequencyResponse, SteppedSineSpec
from .lti import TransferFunction
from .plant import (
    DeflectionCurve,
    NoiseSpec,
    PlantInstance,
    StaticNonlinearity,
    default_deflection_curve,
    default_nonlinearity,
    default_plant_tf,
    make_plant_bank,
    printed_plant_tf,
    quasi_steady_analytic,
    simulate_quasi_steady,
)
from .sysid import FitSpec, fit_nonlinearity, fit_rational_tf, run_identification_campaign

log = logging.getLogger("coanda_lqg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DEFAULT_RATIOS = (1e-2, 1e-1, 1.0, 1e1, 1e2, 1e4)
KIND_TO_COMMAND = {
    "identify": "identify",
    "synthesize": "synthesize",
    "simulate-step": "simulate",
    "disturbance": "simulate",
    "flow-sweep": "flow-sweep",
    "quasi-steady": "quasi-steady",
    "ltr-sweep": "ltr-sweep",
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def load_schema() -> dict:
    text = resources.files("coanda_lqg").joinpath("config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_config(path: str | None, command: str) -> dict:
    """Read and validate a config file; an absent path gives ``{}``.

    Raises
    ------
    ConfigError
        On a schema violation or a ``kind`` that does not match ``command``.
    """
    if path is None:
        cfg = {}
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg)
    kind = cfg.get("kind")
    if kind is not None and KIND_TO_COMMAND[kind] != command:
        raise ConfigError(f"config kind '{kind}' does not match command '{command}'")
    return cfg


def validate_config(cfg) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _threads() -> int:
    raw = os.environ.get("COANDA_LQG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError("COANDA_LQG_THREADS must be an integer") from exc


# ---------------------------------------------------------------------------
# config to objects


def build_tf(cfg: dict) -> TransferFunction:
    p = cfg.get("plant", {})
    source = p.get("source", "tf" if "tf" in p else "default")
    if source == "default":
        return default_plant_tf()
    if source == "printed":
        return printed_plant_tf()
    if source == "tf":
        if "tf" not in p:
            raise ConfigError("plant.source 'tf' needs plant.tf")
        t = p["tf"]
        return TransferFunction(t["num"], t["den"], t.get("delay", 0))
    if "fitted_path" not in p:
        raise ConfigError("plant.source 'fitted' needs plant.fitted_path")
    return TransferFunction.from_dict(io.read_json(p["fitted_path"]))


def build_nonlinearity(cfg: dict) -> StaticNonlinearity:
    p = cfg.get("plant", {})
    if "nonlinearity" in p:
        n = p["nonlinearity"]
        return StaticNonlinearity(tuple(n["num"]), tuple(n["den"]), n.get("x_max", 0.8))
    if "nonlinearity_csv" in p:
        cols = io.read_csv(p["nonlinearity_csv"])
        if set(cols) != {"x_volts", "f_of_x"}:
            raise ConfigError("nonlinearity CSV must have columns x_volts,f_of_x")
        return fit_nonlinearity(cols["x_volts"], cols["f_of_x"])
    return default_nonlinearity()


def build_noise(cfg: dict, seed: int) -> NoiseSpec:
    n = cfg.get("plant", {}).get("noise", {})
    if not n.get("enabled", False):
        return NoiseSpec.none()
    base = NoiseSpec()
    return replace(
        base,
        process_sigma=n.get("process_sigma", base.process_sigma),
        sensor_sigma=n.get("sensor_sigma", base.sensor_sigma),
        seed=seed,
    )


def build_plant(cfg: dict, seed: int, tf: TransferFunction | None = None) -> PlantInstance:
    p = cfg.get("plant", {})
    return PlantInstance(
        nonlinearity=build_nonlinearity(cfg),
        dynamics=build_tf(cfg) if tf is None else tf,
        noise=build_noise(cfg, seed),
        X_unforced=p.get("X_unforced", 0.0),
        anti_alias=p.get("anti_alias", True),
    )


def build_design(cfg: dict, tf: TransferFunction | None = None):
    c = cfg.get("controller", {})
    tf = build_tf(cfg) if tf is None else tf
    R = float(c.get("R", DEFAULT_R))
    if not R > 0:
        raise ConfigError("controller.R must be positive (R = 0 makes the regulator cost singular)")
    W = float(c.get("W", DEFAULT_W))
    if W < 0:
        raise ConfigError("controller.W must be non-negative")
    V = np.diag(c["V"]) if "V" in c else DEFAULT_V
    if np.any(np.diag(V) <= 0):
        raise ConfigError("controller.V entries must be positive")
    aug = augment(default_realization(tf))
    Q = default_q(aug, c.get("integrator_cost", DEFAULT_INTEGRATOR_COST))
    return synthesize(tf, Q=Q, R=R, W=W, V=V)


def build_law(cfg: dict, design, plant: PlantInstance) -> ControlLawConfig:
    c = cfg.get("controller", {})
    kwargs = {k: c[k] for k in ("alpha", "K_AW", "sat_lo", "sat_hi", "observer") if k in c}
    try:
        return ControlLawConfig.from_design(
            design, units_per_volt=plant.units_per_volt, X_unforced=plant.X_unforced, **kwargs
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _seed(cfg: dict, args) -> int:
    return int(args.seed) if args.seed is not None else int(cfg.get("seed", 0))


# ---------------------------------------------------------------------------
# commands


def cmd_identify(cfg: dict, out: Path, seed: int) -> list:
    """Stepped-sine identification campaign, rational fit and Bode plot."""
    ic = cfg.get("identify", {})
    protocol = SteppedSineSpec(
        A=ic.get("A", 0.3),
        f_0=ic.get("f_0", 10.0),
        step=ic.get("step", 30.0),
        dwell=ic.get("dwell", 3.03),
        n_steps=ic.get("n_steps", 66),
    )
    am = AmSpec(f_c=ic.get("f_c", 2750.0), B=ic.get("B", 0.3))
    plant = build_plant(cfg, seed)
    resp = run_identification_campaign(plant, protocol, am, segment_length=ic.get("segment_length", 2**15))
    spec = FitSpec(
        num_order=ic.get("num_order", 1),
        den_order=ic.get("den_order", 4),
        num_lead=ic.get("num_lead", 1),
        delay=ic.get("delay", "estimate"),
        max_delay=ic.get("max_delay", 100),
        force_stable=ic.get("force_stable", False),
    )
    fit = fit_rational_tf(resp, spec, plant.dynamics.ts)
    fitted = fit.tf.freqresp(resp.grid)
    return [
        io.write_csv(out / "etfe.csv", io.response_columns(resp)),
        io.write_json(out / "fit.json", fit.to_dict()),
        io.atomic_write_text(
            out / "bode.svg", svg.render(svg.bode_panels([("ETFE", resp), ("fit", fitted)]), title="Plant ETFE and fit")
        ),
    ]


def cmd_synthesize(cfg: dict, out: Path, seed: int) -> list:
    """LQG design, margins, sensitivity and LTR sweep."""
    design = build_design(cfg)
    grid = margin_grid(1.0 / design.aug.ts)
    S = design.sensitivity(grid)
    ratios = cfg.get("ltr", {}).get("ratios", list(DEFAULT_RATIOS))
    W = float(cfg.get("controller", {}).get("W", DEFAULT_W))
    sweep = ltr_sweep(design.aug, design.lqr, ratios, design.kalman.V, grid)
    margins = {"delay_free": design.margins.to_dict(), "with_delay": design.margins_delayed.to_dict(), "stable": design.stable}
    return [
        io.write_json(out / "design.json", design.to_dict()),
        io.write_csv(out / "sensitivity.csv", io.response_columns(S)),
        io.write_json(out / "margins.json", margins),
        io.write_csv(out / "ltr_gaps.csv", {"ratio": sweep_ratios(sweep), "gap": sweep.gaps}),
        io.atomic_write_text(out / "ltr.svg", _ltr_svg(sweep, S, W / design.kalman.V[0, 0])),
    ]


def sweep_ratios(sweep) -> np.ndarray:
    return np.array([p.ratio for p in sweep.points])


def _ltr_svg(sweep, design_S: FrequencyResponse | None = None, design_ratio: float | None = None) -> str:
    panel = svg.Panel(xlabel="frequency (Hz)", ylabel="|S| (dB)", logx=True, title="Sensitivity against noise ratio")
    panel.add(sweep.reference.grid, sweep.reference.magnitude_db(), "LQR", dashed=True)
    for p in sweep.points:
        panel.add(p.sensitivity.grid, p.sensitivity.magnitude_db(), f"W/V = {p.ratio:g}")
    if design_S is not None:
        panel.add(design_S.grid, design_S.magnitude_db(), f"design ({design_ratio:g})")
    return svg.render(panel)


def cmd_ltr_sweep(cfg: dict, out: Path, seed: int) -> list:
    """Sensitivity against process-to-sensor noise ratio."""
    design = build_design(cfg)
    ratios = cfg.get("ltr", {}).get("ratios", list(DEFAULT_RATIOS))
    sweep = ltr_sweep(design.aug, design.lqr, ratios, design.kalman.V)
    summary = {
        "ratios": sweep_ratios(sweep),
        "gaps": sweep.gaps,
        "non_increasing": bool(np.all(np.diff(sweep.gaps) <= 0)),
        "margins": [p.margins.to_dict() for p in sweep.points],
    }
    return [
        io.write_csv(out / "ltr_gaps.csv", {"ratio": sweep_ratios(sweep), "gap": sweep.gaps}),
        io.write_json(out / "ltr.json", summary),
        io.atomic_write_text(out / "ltr.svg", _ltr_svg(sweep)),
    ]


def _trace_panels(traces, title: str) -> list:
    y = svg.Panel(xlabel="time (s)", ylabel="output (Pa)", title=title)
    u = svg.Panel(xlabel="time (s)", ylabel="drive (V)")
    for label, tr in traces:
        y.add(tr.t, tr.r + tr.dy_meas, label)
        u.add(tr.t, tr.drive, label)
    y.add(traces[0][1].t, traces[0][1].r, "reference", dashed=True)
    return [y, u]


def cmd_simulate(cfg: dict, out: Path, seed: int) -> list:
    """Closed-loop step or feed-forward removal experiment."""
    sc = cfg.get("simulate", {})
    mode = sc.get("mode", "disturbance" if cfg.get("kind") == "disturbance" else "step")
    tf = build_tf(cfg)
    design = build_design(cfg, tf)
    plant = build_plant(cfg, seed, tf)
    law = build_law(cfg, design, plant)
    notch = sc.get("notch", True)
    if mode == "step":
        res = run_step_experiment(
            plant,
            law,
            n_ensemble=sc.get("n_ensemble", 50),
            seed=seed,
            r_from=sc.get("r_from", 0.0),
            r_to=sc.get("r_to", 74.0),
            t_step=sc.get("t_step", 0.01),
            duration=sc.get("duration", 0.1),
            notch=notch,
        )
        return [
            io.write_csv(out / "trace.csv", io.trace_columns(res.trace)),
            io.write_json(out / "metrics.json", res.metrics.to_dict()),
            io.atomic_write_text(out / "step.svg", svg.render(_trace_panels([("closed loop", res.trace)], "Step response"))),
        ]
    res = run_input_disturbance(
        plant,
        law,
        r=sc.get("r", 50.0),
        t_disturbance=sc.get("t_disturbance", 0.5),
        duration=sc.get("duration", 0.7),
        n_ensemble=sc.get("n_ensemble", 50),
        repeats=sc.get("repeats", 6),
        seed=seed,
        notch=notch,
    )
    metrics = {
        "closed_loop": res.closed_metrics.to_dict(),
        "open_loop": res.open_metrics.to_dict(),
        "open_loop_settling_time": res.open_loop_settling,
        "mean_drive_before_disturbance": res.mean_drive,
        "reachable": res.reachable,
    }
    return [
        io.write_csv(out / "trace_closed.csv", io.trace_columns(res.closed)),
        io.write_csv(out / "trace_open.csv", io.trace_columns(res.open)),
        io.write_json(out / "metrics.json", metrics),
        io.atomic_write_text(
            out / "disturbance.svg",
            svg.render(_trace_panels([("closed loop", res.closed), ("open loop", res.open)], "Feed-forward removal")),
        ),
    ]


def cmd_flow_sweep(cfg: dict, out: Path, seed: int) -> list:
    """Disturbance experiment across the flow-rate plant bank."""
    fc = cfg.get("flow_sweep", {})
    bank_cfg = {k: fc[k] for k in ("flow_rates", "gain_peak", "gain_width") if k in fc}
    bank_cfg["noise"] = build_noise(cfg, seed)
    bank_cfg["nonlinearity"] = build_nonlinearity(cfg)
    bank_cfg["X_unforced"] = cfg.get("plant", {}).get("X_unforced", 0.0)
    try:
        bank = make_plant_bank(bank_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    design = build_design(cfg, default_plant_tf())
    law = build_law(cfg, design, bank[40.0])
    res = run_flowrate_sweep(
        bank,
        law,
        r=fc.get("r", 50.0),
        n_ensemble=fc.get("n_ensemble", 1),
        repeats=fc.get("repeats", 1),
        t_disturbance=fc.get("t_disturbance", 0.5),
        duration=fc.get("duration", 0.7),
        threads=_threads(),
    )
    cols = {
        "flow_lpm": res.flow_rates,
        "dc_gain_pa_per_v": res.dc_gain,
        "mean_input_v": res.mean_input,
        "reachable": res.reachable.astype(float),
        "closed_recovery_s": res.closed_recovery,
        "open_response_s": res.open_response,
        "closed_normalized": res.closed_normalized,
        "open_normalized": res.open_normalized,
    }
    ok = res.reachable
    summary = {
        "closed_spread": res.closed_spread,
        "open_spread": res.open_spread,
        "closed_spread_smaller": bool(res.closed_spread < res.open_spread),
        "min_input_flow_lpm": float(res.flow_rates[ok][np.nanargmin(res.mean_input[ok])]) if ok.any() else None,
        "max_gain_flow_lpm": float(res.flow_rates[np.argmax(res.dc_gain)]),
        "unreachable_flow_lpm": res.flow_rates[~ok],
    }
    top = svg.Panel(xlabel="flow rate (lpm)", ylabel="mean drive (V)", title="Drive needed to hold the reference")
    top.add(res.flow_rates[ok], res.mean_input[ok], "mean input")
    bottom = svg.Panel(xlabel="flow rate (lpm)", ylabel="normalised time")
    bottom.add(res.flow_rates[ok], res.closed_normalized[ok], "closed loop")
    bottom.add(res.flow_rates[ok], res.open_normalized[ok], "open loop", dashed=True)
    return [
        io.write_csv(out / "flow_sweep.csv", cols),
        io.write_json(out / "flow_sweep.json", summary),
        io.atomic_write_text(out / "flow_sweep.svg", svg.render([top, bottom])),
    ]


def cmd_quasi_steady(cfg: dict, out: Path, seed: int) -> list:
    """Quasi-steady jet response from counter-sweeping tones."""
    qc = cfg.get("quasi_steady", {})
    if "deflection_csv" in qc:
        cols = io.read_csv(qc["deflection_csv"])
        if set(cols) != {"f_hz", "value"}:
            raise ConfigError("deflection CSV must have columns f_hz,value")
        curve = DeflectionCurve(cols["f_hz"], cols["value"])
    else:
        curve = default_deflection_curve(qc.get("flow_rate", 40.0))
    f_c = qc.get("f_c", 2750.0)
    psi = simulate_quasi_steady(
        curve,
        f_c=f_c,
        sweep_rate=qc.get("sweep_rate", 28.0),
        duration=qc.get("duration", 50.0),
        segment_length=qc.get("segment_length", 2**15),
        f_max=qc.get("f_max", 1350.0),
    )
    analytic = quasi_steady_analytic(curve, psi.grid, f_c)
    panel = svg.Panel(xlabel="modulation frequency (Hz)", ylabel="gain (dB)", title="Quasi-steady jet response")
    panel.add(psi.grid, psi.psi_db(), "simulated sweep")
    panel.add(psi.grid, 20 * np.log10(np.abs(analytic)), "closed form", dashed=True)
    return [
        io.write_csv(out / "psi.csv", {"f_hz": psi.grid, "value": psi.psi, "closed_form": analytic}),
        io.atomic_write_text(out / "psi.svg", svg.render(panel)),
    ]


COMMANDS = {
    "identify": cmd_identify,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "flow-sweep": cmd_flow_sweep,
    "quasi-steady": cmd_quasi_steady,
    "ltr-sweep": cmd_ltr_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coanda-lqg", description="LQG/LTR control of an acoustically deflected jet")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="noise seed, overrides the config")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail(EXIT_CONFIG, ConfigError("seed must be an unsigned 64-bit integer"))
    try:
        cfg = load_config(args.config, args.command)
        seed = _seed(cfg, args)
        out = Path(args.out)
        written = COMMANDS[args.command](cfg, out, seed)
    except (ConfigError, jsonschema.ValidationError, ValueError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (RiccatiError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    if not args.quiet:
        for path in written:
            print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
