"""Command-line orchestration: config parsing, experiment dispatch, and
deterministic report emission.

Subcommands: sample, verify-constants, coupling, energy-scan, mixing,
tail-probe, drift-check, time-law.  Parameters come from an optional JSON
config file plus flags (flag overrides file); the seed is mandatory and
never defaults to wall-clock state.  Exit status is 0 iff every in-run
assertion passed; failures leave a machine-readable record in the output
directory.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .reports import config_hash, read_json, write_csv, write_json, write_plot_data
from .samplers import KernelConfig, run_chain
from .targets import diag_gaussian, power_law, std_gaussian
from .theory import (
    contraction_rho,
    contraction_rho_quadrature,
    creg_constants,
    f_budget,
    eta_star,
    gradient_budget_ratio,
    time_law_limit_density,
    time_law_pmf,
    violated_band,
)

SUBCOMMANDS = ("sample", "verify-constants", "coupling", "energy-scan",
               "mixing", "tail-probe", "drift-check", "time-law")

_COMMON_KEYS = {"seed": int, "out_dir": str, "allow_inadmissible_h": bool}

_KEYS = {
    "sample": {"target": str, "target_params": list, "variant": str, "h": float,
               "K_m": int, "T": int, "kstar": int, "n_steps": int, "d": int,
               "positions": str},
    "verify-constants": {"epsilon": float},
    "coupling": {"variant": str, "d": int, "h": float, "kstar": int,
                 "n_pairs": int, "n_steps": int, "exact_flow": bool},
    "energy-scan": {"d": int, "h": float, "alpha": float, "r": float,
                    "n_samples": int, "K_m": int, "band_delta": float},
    "mixing": {"d_grid": list, "variants": list, "threshold": float,
               "n_chains": int, "seeds": list, "K_m": int, "h_scale": float,
               "max_iter": int},
    "tail-probe": {"beta": float, "C": float, "radii": list, "h": float,
                   "K_m": int, "n_trials": int, "variant": str, "T": int},
    "drift-check": {"beta": float, "C": float, "a": float, "radii": list,
                    "h": float, "K_m": int, "n_mc": int, "variant": str},
    "time-law": {"variant": str, "kstar": int, "h": float},
}

_DEFAULTS = {
    "sample": {"target": "std-gaussian", "variant": "nuts-mul", "h": 0.25,
               "K_m": 8, "n_steps": 1000, "d": 2, "positions": "full"},
    "verify-constants": {"epsilon": 0.01},
    "coupling": {"variant": "mul", "d": 50, "h": math.pi / 128, "kstar": 7,
                 "n_pairs": 10000, "n_steps": 3, "exact_flow": False},
    "energy-scan": {"d": 100, "h": 1.0 / 30.0, "alpha": 30.0, "r": 30.0,
                    "n_samples": 1000, "K_m": 9, "band_delta": 0.5},
    "mixing": {"d_grid": [16, 64, 256, 1024], "variants": ["nuts-mul", "nuts-bps"],
               "threshold": 0.05, "n_chains": 3000, "seeds": [101, 102],
               "K_m": 8, "h_scale": 0.4, "max_iter": 80},
    "tail-probe": {"beta": 4.0, "C": 1.0, "radii": [2, 5, 10, 20], "h": 0.2,
                   "K_m": 6, "n_trials": 2000, "variant": "nuts-mul", "T": 1},
    "drift-check": {"beta": 1.5, "C": 1.0, "a": 0.1, "radii": [10, 25, 50],
                    "h": 0.15, "K_m": 7, "n_mc": 10000, "variant": "nuts-mul"},
    "time-law": {"variant": "bps", "kstar": 3, "h": 0.1},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _reject_duplicates(pairs):
    seen = set()
    out = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError([f"duplicate key: {k}"])
        seen.add(k)
        out[k] = v
    return out


def parse_config(text: str, subcommand: str) -> dict:
    """Validate JSON config text against the subcommand's key table.

    All errors are collected and reported together (never fail-fast);
    defaults are filled for omitted keys, the mandatory seed excepted.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError([f"unknown subcommand: {subcommand}"])
    errors = []
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates) if text.strip() else {}
    except ConfigError as exc:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"])
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])

    known = dict(_COMMON_KEYS)
    known.update(_KEYS[subcommand])
    cfg = dict(_DEFAULTS[subcommand])
    cfg["out_dir"] = os.environ.get("NUTSLAB_OUTDIR", "out")
    cfg["allow_inadmissible_h"] = False

    for key, value in raw.items():
        if key not in known:
            errors.append(f"unknown key: {key}")
            continue
        want = known[key]
        if want in (float, int) and isinstance(value, bool):
            errors.append(f"type mismatch for {key}: expected {want.__name__}")
        elif want is float and isinstance(value, (int, float)):
            cfg[key] = float(value)
        elif want is int and isinstance(value, int):
            cfg[key] = value
        elif want in (str, bool, list) and isinstance(value, want):
            cfg[key] = value
        else:
            errors.append(f"type mismatch for {key}: expected {want.__name__}")

    if "seed" not in raw and "seed" not in cfg:
        errors.append("seed is mandatory (no wall-clock default)")

    # admissibility pre-check for Gaussian-target experiments
    if subcommand in ("coupling", "energy-scan", "sample") and not errors:
        h = cfg.get("h")
        is_gaussian = subcommand != "sample" or cfg.get("target") == "std-gaussian"
        if h is not None and is_gaussian and not cfg["allow_inadmissible_h"]:
            # band width scales with h: a rung within h/2 of pi makes the
            # U-turn trigger a coin flip on the typical set
            band = violated_band(h, delta=min(0.05, h / 2.0),
                                 k_max=cfg.get("K_m", 10), low_band=False)
            if band is not None:
                k, rung, (lo, hi) = band
                errors.append(
                    f"h={h:.6g} is inadmissible: h(2^{k}-1)={rung:.4f} lies in the "
                    f"forbidden band ({lo:.4f}, {hi:.4f}); set allow_inadmissible_h "
                    f"to override")
    if errors:
        raise ConfigError(errors)
    return cfg


def _make_target(cfg):
    kind = cfg.get("target", "std-gaussian")
    if kind == "std-gaussian":
        return std_gaussian(cfg["d"])
    if kind == "diag-gaussian":
        return diag_gaussian(cfg["target_params"])
    if kind == "power-law":
        c, beta = cfg["target_params"]
        return power_law(float(c), float(beta), cfg["d"])
    raise ConfigError([f"unknown target kind: {kind}"])


# -- subcommand runners -------------------------------------------------------------

def _run_sample(cfg, out, chash):
    target = _make_target(cfg)
    kernel = KernelConfig(cfg["variant"], h=cfg["h"], seed=cfg["seed"],
                          K_m=cfg["K_m"], T=cfg.get("T"), kstar=cfg.get("kstar"))
    trace = run_chain(kernel, target, np.zeros(target.d), cfg["n_steps"])
    from . import __version__
    trace.to_jsonl(out / "trace.jsonl", positions=cfg["positions"],
                   header={"config_hash": chash, "seed": cfg["seed"],
                           "version": __version__})
    s = trace.summary()
    write_csv(out / "trace_summary.csv", chash, cfg["seed"],
              list(s.keys()), [s])
    return True, {"summary": s}


_REFERENCE_TABLE = [
    # name, computed (lambda eps), reference value, tolerance
    ("rho_mul", lambda e: contraction_rho("mul"), 0.363, 1e-3),
    ("rho_bps", lambda e: contraction_rho("bps"), 0.537, 1e-3),
    ("w_mul", lambda e: creg_constants("mul", eta_star(e))[0], 0.133, 5e-3),
    ("creg_mul", lambda e: creg_constants("mul", eta_star(e))[1], 0.656, 1e-2),
    ("w_bps", lambda e: creg_constants("bps", eta_star(e))[0], 0.452, 5e-3),
    ("creg_bps", lambda e: creg_constants("bps", eta_star(e))[1], 0.262, 1e-2),
    ("ng_ratio_limit", lambda e: gradient_budget_ratio()["limit"], 1.546, 1e-2),
    ("f_eta_star", lambda e: f_budget(eta_star(e), e), 0.186, 2e-3),
]


def _run_verify_constants(cfg, out, chash):
    eps = cfg["epsilon"]
    rows = []
    ok = True
    for name, fn, ref, tol in _REFERENCE_TABLE:
        val = fn(eps)
        diff = abs(val - ref)
        rows.append({"constant": name, "computed": f"{val:.6f}",
                     "reference": ref, "abs_diff": f"{diff:.2e}",
                     "tolerance": tol, "pass": diff <= tol})
        ok = ok and diff <= tol
    for v in ("mul", "bps"):
        closed = contraction_rho(v)
        quad = contraction_rho_quadrature(v)
        diff = abs(closed - quad)
        rows.append({"constant": f"rho_{v}_quadrature", "computed": f"{quad:.12f}",
                     "reference": f"{closed:.12f}", "abs_diff": f"{diff:.2e}",
                     "tolerance": 1e-9, "pass": diff <= 1e-9})
        ok = ok and diff <= 1e-9
    write_csv(out / "constants.csv", chash, cfg["seed"],
              ["constant", "computed", "reference", "abs_diff", "tolerance", "pass"],
              rows)
    return ok, {"rows": rows}


def _run_coupling(cfg, out, chash):
    from .experiments import coupling_contraction
    rep = coupling_contraction(cfg["variant"], cfg["d"], cfg["h"], cfg["kstar"],
                               cfg["n_pairs"], cfg["n_steps"], cfg["seed"],
                               exact_flow=cfg["exact_flow"])
    tag = f"{cfg['variant']}_d{cfg['d']}_h{cfg['h']:.6g}_seed{cfg['seed']}"
    rows = [{"step": i, "ratio": float(r), "se": float(s)}
            for i, (r, s) in enumerate(zip(rep.ratios, rep.ses))]
    write_csv(out / f"coupling_{tag}.csv", chash, cfg["seed"],
              ["step", "ratio", "se"], rows)
    write_plot_data(out / f"coupling_{tag}.txt", chash, cfg["seed"],
                    ["step", "ratio", "se"],
                    [(i, float(r), float(s)) for i, (r, s) in
                     enumerate(zip(rep.ratios, rep.ses))])
    ok = abs(rep.pooled_ratio - rep.predicted_discrete) <= 3 * float(np.mean(rep.ses)) + 1e-3
    write_json(out / f"coupling_{tag}.json", chash, cfg["seed"], rep.to_summary())
    return ok, rep.to_summary()


def _run_energy_scan(cfg, out, chash):
    from .experiments import energy_error_scan
    rep = energy_error_scan(cfg["d"], cfg["h"], cfg["alpha"], cfg["r"],
                            cfg["n_samples"], cfg["K_m"], cfg["seed"],
                            delta=cfg["band_delta"])
    tag = f"d{cfg['d']}_h{cfg['h']:.6g}_alpha{cfg['alpha']:g}_seed{cfg['seed']}"
    rows = [{"orbit_size": k, "count": v} for k, v in sorted(rep.size_counts.items())]
    write_csv(out / f"energy_scan_{tag}.csv", chash, cfg["seed"],
              ["orbit_size", "count"], rows)
    write_json(out / f"energy_scan_{tag}.json", chash, cfg["seed"], rep.to_summary())
    ok = rep.max_energy_error <= rep.Delta and rep.depth_agreement >= 0.99
    return ok, rep.to_summary()


def _run_mixing(cfg, out, chash):
    from .experiments import mixing_study

    unit_dir = out / "mixing_units"
    unit_dir.mkdir(parents=True, exist_ok=True)

    def on_entry(entry):
        write_json(unit_dir / f"{entry.variant}_d{entry.d}_seed{entry.seed}.json",
                   chash, entry.seed, entry.to_row())

    # resume: completed units with a matching config hash are reused as-is
    done = {}
    for p in unit_dir.glob("*.json"):
        doc = read_json(p)
        if doc.get("config_hash") == chash:
            row = doc["payload"]
            done[(row["variant"], row["d"], row["seed"])] = row

    rep = mixing_study(cfg["d_grid"], tuple(cfg["variants"]), cfg["threshold"],
                       cfg["n_chains"], tuple(cfg["seeds"]), cfg["K_m"],
                       cfg["h_scale"], cfg["max_iter"], on_entry=on_entry,
                       precomputed=done)

    rows = [e.to_row() for e in rep.entries]
    write_csv(out / "mixing.csv", chash, cfg["seed"],
              list(rows[0].keys()), rows)
    write_json(out / "mixing.json", chash, cfg["seed"], rep.to_summary())
    write_plot_data(out / "mixing_scaling.txt", chash, cfg["seed"],
                    ["d"] + list(rep.grads_by_variant.keys()),
                    [(d, *[rep.grads_by_variant[v][i] for v in rep.grads_by_variant])
                     for i, d in enumerate(rep.d_grid)])
    ok = all(e is not None for e in (x.iterations for x in rep.entries))
    if len(cfg["d_grid"]) >= 2:
        ok = ok and all(0.15 <= s <= 0.40 for s in rep.exponents.values())
    if "nuts-mul" in rep.grads_by_variant and "nuts-bps" in rep.grads_by_variant:
        ok = ok and all(rep.bps_le_mul())
    return ok, rep.to_summary()


def _run_tail_probe(cfg, out, chash):
    from .experiments import jump_bound_probe, stayput_probe, tail_energy_growth
    stay = stayput_probe(cfg["beta"], cfg["C"], cfg["radii"], cfg["h"],
                         cfg["K_m"], cfg["n_trials"], cfg["variant"], cfg["seed"])
    jump = jump_bound_probe(power_law(1.0, 1.0, 1), 0.1, 6, cfg["n_trials"],
                            cfg["seed"], grad_bound=1.0)
    growth = None
    ok = jump.violations == 0
    if cfg["beta"] > 2:
        growth = tail_energy_growth(cfg["beta"], cfg["C"], 0.1, cfg["T"],
                                    [31.6, 100.0, 316.0, 1000.0, 3162.0, 10000.0],
                                    seed=cfg["seed"])
        clean = [x for x in growth.normalized if math.isfinite(x)]
        ok = ok and (min(clean) > 0 if clean else False)
        ok = ok and stay.monotone()
    tag = f"{cfg['variant']}_beta{cfg['beta']:g}_h{cfg['h']:.6g}_seed{cfg['seed']}"
    rows = [{"radius": R, "stay_put": f, "se": s}
            for R, f, s in zip(stay.radii, stay.frequencies, stay.ses)]
    write_csv(out / f"stayput_{tag}.csv", chash, cfg["seed"],
              ["radius", "stay_put", "se"], rows)
    payload = {"stayput": stay.to_summary(), "jump_bound": jump.to_summary()}
    if growth is not None:
        payload["tail_growth"] = growth.to_summary()
    write_json(out / f"tail_probe_{tag}.json", chash, cfg["seed"], payload)
    return ok, payload


def _run_drift_check(cfg, out, chash):
    from .experiments import drift_check
    rep = drift_check(cfg["beta"], cfg["C"], cfg["a"], cfg["radii"], cfg["h"],
                      cfg["K_m"], cfg["n_mc"], cfg["seed"], cfg["variant"])
    tag = f"{cfg['variant']}_beta{cfg['beta']:g}_h{cfg['h']:.6g}_seed{cfg['seed']}"
    rows = [{"radius": R, "ratio": r, "se": s}
            for R, r, s in zip(rep.radii, rep.ratios, rep.ses)]
    write_csv(out / f"drift_{tag}.csv", chash, cfg["seed"],
              ["radius", "ratio", "se"], rows)
    write_json(out / f"drift_{tag}.json", chash, cfg["seed"], rep.to_summary())
    # drift holds (ratio < 1) at the largest radius inside the H3 regime
    ok = rep.ratios[-1] < 1.0 if 1 < cfg["beta"] <= 2 else True
    return ok, rep.to_summary()


def _run_time_law(cfg, out, chash):
    law = time_law_pmf(cfg["variant"], cfg["kstar"], cfg["h"])
    rows = [{"T": int(t), "prob": float(p), "numerator": int(n),
             "denominator": law.denominator}
            for t, p, n in zip(law.T_values, law.probs, law.numerators)]
    tag = f"{cfg['variant']}_k{cfg['kstar']}"
    write_csv(out / f"time_law_{tag}.csv", chash, cfg["seed"],
              ["T", "prob", "numerator", "denominator"], rows)
    # limiting triangular/tent densities on [-pi, pi] (three-column plot data)
    ts = np.linspace(-math.pi, math.pi, 401)
    write_plot_data(out / "time_law_densities.txt", chash, cfg["seed"],
                    ["t", "mul_density", "bps_density"],
                    [(float(t), time_law_limit_density("mul", math.pi, float(t)),
                      time_law_limit_density("bps", math.pi, float(t))) for t in ts])
    total = law.exact_total()
    return total == 1, {"exact_total": str(total),
                        "float_sum": float(np.sum(law.probs))}


_RUNNERS = {
    "sample": _run_sample,
    "verify-constants": _run_verify_constants,
    "coupling": _run_coupling,
    "energy-scan": _run_energy_scan,
    "mixing": _run_mixing,
    "tail-probe": _run_tail_probe,
    "drift-check": _run_drift_check,
    "time-law": _run_time_law,
}


def run(subcommand: str, cfg: dict) -> int:
    """Execute one subcommand; returns the process exit status."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash({k: v for k, v in cfg.items() if k != "out_dir"})
    print(f"{subcommand}: config[{chash}] "
          + json.dumps(cfg, sort_keys=True, default=str))
    ok, payload = _RUNNERS[subcommand](cfg, out, chash)
    if not ok:
        write_json(out / f"FAILED_{subcommand}.json", chash, cfg.get("seed"),
                   {"subcommand": subcommand, "assertions_passed": False,
                    "payload": payload})
        print(f"{subcommand}: assertion FAILED (see {out}/FAILED_{subcommand}.json)",
              file=sys.stderr)
        return 1
    print(f"{subcommand}: ok (outputs in {out})")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nutslab",
        description="No-U-Turn sampler variants and their theory-verification "
                    "experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None,
                        help="JSON config file; flags override file values")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", type=str, default=None)
        sp.add_argument("--allow-inadmissible-h", action="store_true", default=None)
        for key, typ in _KEYS[name].items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, action="store_true", default=None, dest=key)
            elif typ is list:
                sp.add_argument(flag, type=str, default=None, dest=key,
                                help="JSON list, e.g. [16,64]")
            else:
                sp.add_argument(flag, type=typ, default=None, dest=key)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    sub = args.subcommand
    text = Path(args.config).read_text() if args.config else "{}"
    try:
        file_cfg = json.loads(text, object_pairs_hook=_reject_duplicates) if text.strip() else {}
        if not isinstance(file_cfg, dict):
            raise ConfigError(["config must be a JSON object"])
        overrides = {}
        for key in list(_KEYS[sub]) + ["seed", "out_dir", "allow_inadmissible_h"]:
            val = getattr(args, key, None)
            if val is not None:
                if _KEYS[sub].get(key) is list and isinstance(val, str):
                    val = json.loads(val)
                overrides[key] = val
        merged = dict(file_cfg)
        merged.update(overrides)
        cfg = parse_config(json.dumps(merged), sub)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    return run(sub, cfg)


if __name__ == "__main__":
    sys.exit(main())
