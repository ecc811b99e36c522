#!/usr/bin/env python3
"""Drive the whole chain through the extension module on the built-in
device layout and check a few frozen numbers.

Build the module first: crates/heliotrap-py/build_ext.sh
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import heliotrap_py as ht


def check(name, ok, detail=""):
    print(f"{'ok' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    if not ok:
        sys.exit(1)


TRAP_BOX = (-0.8, 0.8, -0.8, 0.8)
CYCLE_VOLTAGES = {
    "bottom": 0.045,
    "split_gate_upper": -0.35,
    "split_gate_lower": -0.35,
    "resonator": 0.056,
    "unload": -0.1,
}

field = ht.PotentialField.device()
check(
    "device field has the six gate grids",
    sorted(field.electrodes)
    == [
        "bottom",
        "resonator_lower",
        "resonator_upper",
        "split_gate_lower",
        "split_gate_upper",
        "unload",
    ],
    repr(field),
)

bias = ht.Bias(CYCLE_VOLTAGES)
phi = field.phi(bias, 0.0, 0.0)
check("potential at the trap center is finite", math.isfinite(phi), f"phi = {phi:.6f} V")

eq, steps, capped = ht.load_trap(field, bias, seed=17, max_electrons=20, search_box=TRAP_BOX)
check(
    "pinched-off point traps exactly one electron",
    eq.n == 1 and eq.converged and not capped,
    repr(eq),
)
check(
    "chemical potential ladder is monotone",
    all(a[2] < b[2] for a, b in zip(steps, steps[1:])) if len(steps) > 1 else True,
    f"{len(steps)} fill steps",
)

spectrum = ht.eigenmodes(field, bias, eq, gamma_over_2pi_hz=0.5e9)
check("spectrum is stable with two modes", spectrum.stable and len(spectrum) == 2)

res = ht.Resonator()
filled = ht.couplings(field, eq, spectrum, res)
df = ht.frequency_shift(filled, res)
check(
    "single electron shifts the resonator by the frozen amount",
    abs(df - -24542.07177988152) < 1e-6,
    f"delta_f = {df:.3f} Hz",
)

chi = ht.susceptibility(filled, 2.0 * math.pi * res.f_r_hz)
check("electron branch only absorbs at the readout tone", chi.imag < 0.0, f"chi = {chi:.3e}")

g_closed = ht.single_electron_coupling(0.23, 0.2404e-12, 0.85) / (2.0 * math.pi)
check(
    "closed-form coupling sits at the design point",
    abs(g_closed / 9.8e6 - 1.0) < 0.05,
    f"g/2pi = {g_closed / 1e6:.3f} MHz",
)

linewidth = res.f_r_hz / res.q_t()
trace = ht.synthesize_trace(
    res,
    df,
    res.f_r_hz - 1.5 * linewidth,
    res.f_r_hz + 1.5 * linewidth,
    12001,
    noise_sigma=0.0109,
    seed=99,
)
fit = ht.fit_s11(trace, ht.Resonator(q_i=5000.0, q_c=5200.0))
check(
    "noisy fit recovers the shifted resonance",
    fit["converged"] and abs(fit["f_r_hz"] - (res.f_r_hz + df)) < 500.0,
    f"f_r off by {fit['f_r_hz'] - (res.f_r_hz + df):.1f} Hz, "
    f"stderr {fit['stderr']['f_r_hz']:.1f} Hz",
)
check(
    "fit recovers the quality factors",
    abs(fit["q_i"] / 5800.0 - 1.0) < 0.01 and abs(fit["q_c"] / 4800.0 - 1.0) < 0.01,
    f"q_i = {fit['q_i']:.0f}, q_c = {fit['q_c']:.0f}",
)

round_trip = ht.Trace.from_csv(trace.to_csv())
check(
    "trace survives a CSV round trip bit for bit",
    round_trip.freq_hz == trace.freq_hz and round_trip.s11 == trace.s11,
    f"{len(trace)} points",
)

cycle_spec = {
    "swept_electrodes": [
        {"name": "unload", "start_v": -0.1, "stop_v": -1.5, "steps": 2}
    ],
    "bias": {"voltages": CYCLE_VOLTAGES},
    "protocol": "single_electron_cycle",
    "unload_return_voltage": -0.1,
    "gamma_over_2pi": 0.5e9,
    "seed": 17,
    "search_box": list(TRAP_BOX),
    "max_electrons": 20,
}
report = json.loads(ht.single_electron_cycle(field, json.dumps(cycle_spec), 2))
check(
    "two load/unload cycles run clean",
    report["errors"] == 0
    and len(report["cycles"]) == 2
    and all(c["loaded_n_e"] == 1 and c["empty_n_e"] == 0 for c in report["cycles"]),
    f"loaded delta_f = {report['cycles'][0]['loaded_delta_f_hz']:.1f} Hz",
)

sweep_spec = dict(cycle_spec)
sweep_spec["protocol"] = "load"
sweep_spec["swept_electrodes"] = [
    {"name": "bottom", "start_v": 0.042, "stop_v": 0.052, "steps": 2}
]
points_csv, plateaus_json = ht.run_sweep(field, json.dumps(sweep_spec))
lines = points_csv.strip().splitlines()
check(
    "load sweep emits the points table",
    lines[0].startswith("idx,") and len(lines) == 3,
    lines[0],
)

print("smoke test passed")
