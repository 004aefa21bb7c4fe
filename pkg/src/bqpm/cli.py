"""Command-line entry point.

Exit codes:

    0  success
    2  usage error (bad command line)
    3  input error (invalid config or argument value)
    4  range error (outside a dispersion model's validity)
    5  convergence error
    6  I/O or parse error
    7  other domain error (annihilated state, degenerate fit, bootstrap failure...)
"""

import argparse
import csv
import io
import math
import os
import sys

import numpy as np
import yaml

from . import __version__, analyze, biphoton, phasematch, simulate
from .config import load_config
from .errors import BqpmError, ConvergenceError, InputError, ParseError, RangeError

EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    "input": 3,
    "range": 4,
    "convergence": 5,
    "io": 6,
    "domain": 7,
}

COUNTS_HEADER = ["setting_id", "label", "singles_s", "singles_i", "coincidences", "duration_s"]


def exit_code_for(err):
    if isinstance(err, RangeError):
        return EXIT_CODES["range"]
    if isinstance(err, InputError):
        return EXIT_CODES["input"]
    if isinstance(err, ConvergenceError):
        return EXIT_CODES["convergence"]
    if isinstance(err, (ParseError, OSError)):
        return EXIT_CODES["io"]
    return EXIT_CODES["domain"]


# -- building domain objects from a config ------------------------------------

def build_crystal(cfg):
    c = cfg.crystal
    return phasematch.CrystalSpec(
        length_mm=c.length_mm,
        poling_period_um=c.poling_period_um,
        qpm_order=c.qpm_order,
        temperature_c=c.temperature_c,
        ratio_r=c.ratio_r,
        d33=c.d33_pm_per_v,
        d32=c.d32_pm_per_v,
        aperture_mm=c.aperture_mm,
    )


def pump_um(cfg):
    return cfg.pump.wavelength_nm * 1e-3


def spectral_crystal(cfg):
    crystal = build_crystal(cfg)
    if cfg.crystal.degenerate_match:
        return phasematch.matched_crystal(crystal, pump_um(cfg))
    return crystal


def build_chain(cfg):
    d = cfg.detection
    return simulate.DetectionChain(d.eta_signal, d.eta_idler, d.coincidence_window_ns, d.include_accidentals)


def net_phase(cfg):
    """Birefringent phase of the SPDC crystal minus the crossed compensator, plus any offset."""
    wl_s = 2 * pump_um(cfg)
    crystal = biphoton.birefringent_phase(cfg.crystal.length_mm, wl_s, cfg.crystal.temperature_c)
    comp = biphoton.birefringent_phase(cfg.compensator.length_mm, wl_s, cfg.compensator.temperature_c)
    return biphoton.wrap_phase(crystal - comp + cfg.compensator.extra_phase_rad)


def build_states(cfg):
    """(source state, state after the optional Brewster-window pair)."""
    src = biphoton.source_state(cfg.crystal.ratio_r, net_phase(cfg))
    out = src
    if cfg.brewster.enabled:
        bw = cfg.brewster
        window = (biphoton.BrewsterWindow(bw.t_h, bw.t_v) if bw.t_v is not None
                  else biphoton.brewster_window_for_ratio(cfg.crystal.ratio_r, bw.t_h))
        out = biphoton.apply_both(src, window)
    return src, out


def target_state(cfg, name=None):
    name = name or cfg.analysis.target
    src, out = build_states(cfg)
    return {"state": out, "source": src, "phi_plus": biphoton.PHI_PLUS, "phi_minus": biphoton.PHI_MINUS}[name]


def pair_rate(cfg):
    if cfg.simulation.pair_rate_per_s is not None:
        return cfg.simulation.pair_rate_per_s
    if not cfg.simulation.derive_from_brightness:
        raise InputError("simulation.pair_rate_per_s is null and derive_from_brightness is false")
    return compute_rates(cfg).generated_pairs


def bandwidth_ghz(cfg):
    if cfg.source.bandwidth_ghz is not None:
        return cfg.source.bandwidth_ghz
    return phasematch.bandwidth_fwhm(spectral_crystal(cfg), phasematch.PmType.TYPE0, pump_um(cfg))


def compute_rates(cfg):
    return simulate.rate_estimate(cfg.source.spectral_brightness, bandwidth_ghz(cfg),
                                  2 * cfg.pump.wavelength_nm, cfg.pump.power_mw, build_chain(cfg))


def noisy_density(cfg):
    """Werner-mixed config state scaled by its success probability (an unnormalized rate operator)."""
    _, state = build_states(cfg)
    return biphoton.werner_mix(state, cfg.simulation.werner_p) * state.success_probability


# -- serialization ----------------------------------------------------------

def _num(x):
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return x


def serialize_amplitudes(amps):
    amps = np.asarray(amps)
    return {"basis": list(biphoton.BASIS_LABELS), "real": [float(a.real) for a in amps],
            "imag": [float(a.imag) for a in amps]}


def serialize_matrix(m):
    m = np.asarray(m)
    return {"basis": list(biphoton.BASIS_LABELS), "real": [[float(v) for v in row] for row in m.real],
            "imag": [[float(v) for v in row] for row in m.imag]}


def write_counts_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    for i, r in enumerate(records):
        w.writerow([i, r.label, _num(r.singles_signal), _num(r.singles_idler), _num(r.coincidences),
                    _num(r.duration)])


def read_counts_csv(path, settings=None):
    """Tomography counts in the order of the pinned setting table.

    Every label of the table must appear exactly once; order in the file is free.
    """
    settings = analyze.TOMOGRAPHY_SETTINGS if settings is None else settings
    by_label = {s.label: s for s in settings}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COUNTS_HEADER:
            raise ParseError(f"{path}: row 1: header must be {','.join(COUNTS_HEADER)}, got {header}")
        found = {}
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(COUNTS_HEADER):
                raise ParseError(f"{path}: row {rowno}: expected {len(COUNTS_HEADER)} columns, got {len(row)}")
            values = {}
            for col, name in enumerate(COUNTS_HEADER):
                if name == "label":
                    continue
                try:
                    values[name] = float(row[col])
                except ValueError:
                    raise ParseError(f"{path}: row {rowno}, column {name}: not a number: {row[col]!r}") from None
                if not math.isfinite(values[name]) or values[name] < 0:
                    raise ParseError(f"{path}: row {rowno}, column {name}: must be a finite value >= 0")
            label = row[1].strip()
            if label not in by_label:
                raise ParseError(f"{path}: row {rowno}, column label: unknown label {label!r}")
            if label in found:
                raise ParseError(f"{path}: row {rowno}, column label: duplicate label {label!r}")
            if values["duration_s"] <= 0:
                raise ParseError(f"{path}: row {rowno}, column duration_s: must be > 0")
            found[label] = simulate.CountRecord(by_label[label], values["singles_s"], values["singles_i"],
                                                values["coincidences"], values["duration_s"])
    missing = [s.label for s in settings if s.label not in found]
    if missing:
        raise ParseError(f"{path}: missing tomography labels {missing}")
    return [found[s.label] for s in settings]


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


# -- commands ---------------------------------------------------------------
# Each returns (payload, files) where files maps a file name to its text.

def cmd_design(cfg, args):
    crystal = build_crystal(cfg)
    pump = pump_um(cfg)
    period = phasematch.solve_poling_period(pump, crystal.qpm_order, crystal.temperature_c)
    matched = phasematch.matched_crystal(crystal, pump)
    spec = matched if cfg.crystal.degenerate_match else crystal
    n_z = phasematch.dispersion.refractive_index(phasematch.dispersion.KTP_Z, pump, crystal.temperature_c)
    payload = {
        "pump_wavelength_um": pump,
        "qpm_order": crystal.qpm_order,
        "temperature_c": crystal.temperature_c,
        "n_z_pump": n_z,
        "poling_period_um": period,
        "configured_period_um": crystal.poling_period_um,
        "grating_vector_rad_per_um": phasematch.grating_vector(crystal.poling_period_um, crystal.qpm_order),
        "degenerate_temperature_c": phasematch.solve_degenerate_temperature(crystal, pump),
        "degenerate_wavelength_um": 2 * pump,
        "types": {},
    }
    for t in phasematch.PmType:
        payload["types"][t.value] = {
            "signal_roots_um": phasematch.solve_signal_wavelength(crystal, t, pump),
            "bandwidth_ghz": phasematch.bandwidth_fwhm(spec, t, pump),
            "linearized_bandwidth_ghz": phasematch.linearized_bandwidth(spec, t, pump),
        }
    payload["bandwidth_ghz"] = payload["types"]["type0"]["bandwidth_ghz"]
    return payload, {}


def cmd_state(cfg, args):
    src, out = build_states(cfg)
    return {
        "theta_rad": net_phase(cfg),
        "source": serialize_amplitudes(src.amplitudes),
        "brewster_enabled": cfg.brewster.enabled,
        "output": serialize_amplitudes(out.amplitudes),
        "success_probability": out.success_probability,
        "concurrence": analyze.concurrence(biphoton.to_density(out)),
        "pure_state_chsh_max": analyze.pure_state_chsh_max(out),
        "fidelity_phi_plus": analyze.fidelity(biphoton.to_density(out), biphoton.PHI_PLUS),
    }, {}


def _grid(start, stop, step):
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise InputError(f"empty grid: start={start}, stop={stop}, step={step}")
    return start + step * np.arange(n)


def cmd_curve(cfg, args):
    cc = cfg.curve
    noisy = cc.noisy or args.noisy
    seed = cfg.simulation.seed
    if args.kind == "polinterf":
        _, state = build_states(cfg)
        thetas_deg = _grid(cc.theta_start_deg, cc.theta_stop_deg, cc.theta_step_deg)
        thetas = np.radians(thetas_deg)
        bases = ["H", "V", "D", "A"]
        curves = {b: simulate.interference_curve(state, b, thetas) for b in bases}
        header = ["theta_deg"] + bases
        columns = [thetas_deg] + [curves[b] for b in bases]
        summary = {}
        for b in bases:
            k = int(np.argmax(curves[b]))
            summary[b] = {"visibility": analyze.visibility(np.column_stack([thetas, curves[b]])).visibility,
                          "max": float(curves[b][k]), "argmax_deg": float(thetas_deg[k])}
        if noisy:
            rho = noisy_density(cfg)
            settings = [simulate.interference_setting(b, t) for b in bases for t in thetas]
            recs = simulate.simulate_counts(rho, settings, pair_rate(cfg), build_chain(cfg),
                                            cfg.simulation.duration_s, seed)
            n = len(thetas)
            for j, b in enumerate(bases):
                header.append(f"counts_{b}")
                block = recs[j * n:(j + 1) * n]
                columns.append([r.coincidences for r in block])
                summary[b]["noisy_visibility"] = analyze.visibility(block).visibility
        name = "curve_polinterf.csv"
    else:
        pm_type = phasematch.PmType(cc.pm_type)
        delays = _grid(cc.delay_start_ps, cc.delay_stop_ps, cc.delay_step_ps)
        v0 = cfg.simulation.hom_overlap_visibility
        rc = simulate.hom_curve(spectral_crystal(cfg), pm_type, pump_um(cfg), v0, delays)
        header, columns = ["delay_ps", "coincidence_probability"], [delays, rc]
        summary = {"overlap_visibility": v0, "dip_visibility": simulate.dip_visibility(rc),
                   "min": float(rc.min()), "argmin_ps": float(delays[int(np.argmin(rc))])}
        if noisy:
            chain = build_chain(cfg)
            scale = pair_rate(cfg) * chain.eta_signal * chain.eta_idler * cfg.simulation.duration_s
            counts = [int(simulate.setting_rng(seed, i).poisson(scale * p)) for i, p in enumerate(rc)]
            header.append("counts")
            columns.append(counts)
        name = "curve_hom.csv"
    text = _csv_text(header, zip(*columns))
    return {"kind": args.kind, "noisy": noisy, "rows": len(columns[0]), "summary": summary}, {name: text}


def _tomo_records(cfg, args):
    if args.counts:
        return read_counts_csv(args.counts), "file", {}
    sim = cfg.simulation
    inputs = (noisy_density(cfg), analyze.TOMOGRAPHY_SETTINGS, pair_rate(cfg), build_chain(cfg), sim.duration_s)
    if sim.noiseless:
        recs = simulate.expected_counts(*inputs)
    else:
        recs = simulate.simulate_counts(*inputs, sim.seed)
    buf = io.StringIO()
    write_counts_csv(recs, buf)
    return recs, "simulated", {"tomo_counts.csv": buf.getvalue()}


def _angles(cfg, args):
    if getattr(args, "angles", None):
        return tuple(args.angles)
    return cfg.analysis.chsh_angles_deg


def cmd_tomo(cfg, args):
    records, origin, files = _tomo_records(cfg, args)
    label = "raw"
    if cfg.analysis.subtract_accidentals:
        records = analyze.subtract_accidentals(records, cfg.detection.coincidence_window_ns)
        label = "accidental-subtracted"
    target = target_state(cfg)
    resamples = cfg.simulation.bootstrap_resamples if args.resamples is None else args.resamples
    res = analyze.mle_reconstruct(records, target=target, chsh_angles=_angles(cfg, args),
                                  bootstrap_resamples=resamples, seed=cfg.simulation.seed)
    lin = analyze.linear_reconstruct(records)
    payload = {
        "counts_origin": origin,
        "counts": label,
        "rho": serialize_matrix(res.rho),
        "log_likelihood": res.log_likelihood,
        "linear_min_eigenvalue": float(np.linalg.eigvalsh(lin).min()),
        "target": cfg.analysis.target,
        "fidelity": res.fidelity_to_target,
        "purity": res.purity,
        "concurrence": res.concurrence,
        "chsh_s": res.chsh_s,
        "chsh_angles_deg": list(res.chsh_angles) if res.chsh_angles else None,
        "errors": res.errors,
        "iterations": res.iterations,
    }
    return payload, files


def cmd_chsh(cfg, args):
    angles = _angles(cfg, args)
    if args.counts:
        rho = analyze.mle_reconstruct(read_counts_csv(args.counts)).rho
        origin = "file"
    else:
        _, state = build_states(cfg)
        rho = biphoton.werner_mix(state, cfg.simulation.werner_p)
        origin = "config"
    s_opt, a_opt = analyze.optimal_chsh(rho)
    payload = {"origin": origin, "optimal_s": s_opt, "optimal_angles_deg": list(a_opt)}
    if angles != "optimal":
        payload["angles_deg"] = list(angles)
        payload["s"] = analyze.chsh_S(rho, angles)
    return payload, {}


def cmd_brightness(cfg, args):
    b = cfg.source.spectral_brightness if args.brightness is None else args.brightness
    w = cfg.source.beam_waist_um if args.waist_um is None else args.waist_um
    length = cfg.crystal.length_mm if args.length_mm is None else args.length_mm
    m = cfg.crystal.qpm_order if args.order is None else args.order
    return {"brightness": b, "beam_waist_um": w, "crystal_length_mm": length, "order": m,
            "normalized_brightness": simulate.normalized_brightness(b, w, length, m)}, {}


def cmd_rates(cfg, args):
    r = compute_rates(cfg)
    return {"pump_power_mw": cfg.pump.power_mw, "bandwidth_ghz": bandwidth_ghz(cfg),
            "generated_pairs": r.generated_pairs, "singles_signal": r.singles_signal,
            "singles_idler": r.singles_idler, "true_coincidences": r.true_coincidences,
            "accidental_coincidences": r.accidental_coincidences}, {}


COMMANDS = {
    "design": cmd_design,
    "state": cmd_state,
    "curve": cmd_curve,
    "tomo": cmd_tomo,
    "chsh": cmd_chsh,
    "brightness": cmd_brightness,
    "rates": cmd_rates,
}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


def make_bundle(command, cfg, payload):
    return {
        "provenance": {"command": command, "config_sha256": cfg.digest(),
                       "seed": cfg.simulation.seed, "version": __version__},
        "payload": _clean(payload),
    }


def _text_lines(obj, prefix=""):
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and "basis" in v:
            yield f"{key}: real={v['real']} imag={v['imag']}"
        elif isinstance(v, dict):
            yield from _text_lines(v, key + ".")
        else:
            yield f"{key}: {v}"


GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": None, "format": "text"}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML experiment config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--format", choices=("text", "structured"), default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="bqpm", parents=[common],
                                description="Backward QPM polarization-entangled source toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="poling period, degenerate wavelength, bandwidth")
    sub.add_parser("state", parents=[common], help="source and projected polarization state")
    c = sub.add_parser("curve", parents=[common], help="polarization-interference or HOM curve (CSV)")
    c.add_argument("kind", choices=("polinterf", "hom"))
    c.add_argument("--noisy", action="store_true", help="add Poisson-sampled counts")
    t = sub.add_parser("tomo", parents=[common], help="maximum-likelihood tomography")
    t.add_argument("--counts", help="counts CSV; simulated from the config when omitted")
    t.add_argument("--resamples", type=int, help="bootstrap resamples (0 disables)")
    t.add_argument("--angles", type=float, nargs=4, metavar=("A", "A2", "B", "B2"))
    h = sub.add_parser("chsh", parents=[common], help="CHSH S parameter")
    h.add_argument("--counts")
    h.add_argument("--angles", type=float, nargs=4, metavar=("A", "A2", "B", "B2"))
    b = sub.add_parser("brightness", parents=[common], help="normalized spectral brightness")
    b.add_argument("--brightness", type=float)
    b.add_argument("--waist-um", type=float)
    b.add_argument("--length-mm", type=float)
    b.add_argument("--order", type=int)
    sub.add_parser("rates", parents=[common], help="pair, singles and coincidence rates")
    return p


def run(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    # global flags may sit before or after the subcommand, so defaults are filled in afterwards
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"simulation": cfg.simulation.model_copy(update={"seed": args.seed})})
    build_crystal(cfg)
    build_chain(cfg)
    payload, files = COMMANDS[args.command](cfg, args)
    bundle = make_bundle(args.command, cfg, payload)
    text = yaml.safe_dump(bundle, sort_keys=False)
    out_dir = args.out or cfg.paths.output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{args.command}.yaml"), "w") as fh:
            fh.write(text)
        for name, content in files.items():
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(content)
    if args.format == "structured":
        stdout.write(text)
    elif args.command == "curve" and not out_dir:
        stdout.write(next(iter(files.values())))
    else:
        for line in _text_lines(bundle["payload"]):
            print(line, file=stdout)
    return bundle


def main(argv=None):
    try:
        run(argv)
    except BqpmError as err:
        print(f"error: {err}", file=sys.stderr)
        return exit_code_for(err)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
