"""Smoke test for the mimo_altmin_py extension module.

Locates the cdylib produced by `cargo build -p mimo-altmin-py` (release or
debug), exposes it under the importable name, and exercises the bindings end
to end: realization determinism, modulation round trips, noiseless exact
recovery, detector agreement at high SNR, and the multiply tallies.

Run from anywhere: python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libmimo_altmin_py.so", "mimo_altmin_py.so", "libmimo_altmin_py.dylib")
    ]
    src = next((p for p in candidates if p.exists()), None)
    if src is None:
        sys.exit("extension not built; run: cargo build -p mimo-altmin-py")
    stage = pathlib.Path(tempfile.mkdtemp(prefix="mimo-altmin-py-"))
    shutil.copy2(src, stage / "mimo_altmin_py.so")
    sys.path.insert(0, str(stage))
    import mimo_altmin_py

    return mimo_altmin_py


def main():
    mod = load_module()
    checks = 0

    # Same seed and stream must reproduce the instance exactly; a different
    # stream must not.
    a = mod.realize_system(4, 16, 10.0, seed=7, stream=3)
    b = mod.realize_system(4, 16, 10.0, seed=7, stream=3)
    c = mod.realize_system(4, 16, 10.0, seed=7, stream=4)
    assert a.y == b.y and a.x_true == b.x_true
    assert a.y != c.y
    assert len(a.y) == 2 * a.n_r and len(a.x_true) == 2 * a.n_t
    assert len(a.channel()) == a.n_r and len(a.channel()[0]) == a.n_t
    assert isinstance(a.channel()[0][0], complex)
    checks += 1

    # Modulation round trip for both supported orders.
    for m, bits in ((4, [0, 1, 1, 0, 0, 0, 1, 1]), (16, [0, 1, 1, 0, 0, 0, 1, 1])):
        x = mod.modulate(bits, modulation=m)
        assert mod.demodulate(x, modulation=m) == bits
        assert all(v in mod.alphabet(m) for v in x)
    checks += 1

    # Noiseless system: strict C=1 AltMin recovers the transmission exactly.
    clean = mod.realize_system(4, 16, float("inf"), seed=11)
    assert clean.noise_var == 0.0
    det = mod.altmin_detect(clean, tol=1e-10, max_iter=5000, c_scale=1.0, trace=True)
    assert det.converged
    assert det.x_sliced == clean.x_true
    assert det.bit_errors == 0
    assert det.v_trace is not None and len(det.v_trace) == det.iterations + 1
    assert all(u >= v - 1e-12 for u, v in zip(det.v_trace, det.v_trace[1:]))
    checks += 1

    # High SNR, small system: every detector agrees with the transmission,
    # and ML's residual is no worse than the linear detectors'.
    sys25 = mod.realize_system(2, 8, 25.0, seed=5)
    results = [
        mod.altmin_detect(sys25, tol=1e-8, max_iter=100, c_scale=1.0),
        mod.mmse_detect(sys25),
        mod.zf_detect(sys25),
        mod.ml_detect(sys25),
    ]
    for det in results:
        assert det.bit_errors == 0, f"{det.detector} erred at 25 dB"
        assert det.real_mults > 0
    ml = results[-1]
    assert all(ml.residual_sq <= d.residual_sq + 1e-9 for d in results)
    assert results[1].sqrts == sys25.n_t
    checks += 1

    # The AltMin multiply tally matches its audited closed form.
    nt, nr, t = 16, 128, 8
    big = mod.realize_system(nt, nr, 12.0, seed=1)
    det = mod.altmin_detect(big, tol=1e-300, max_iter=t)
    assert det.iterations == t
    init = 8 * nt * nr + 6 * nr + 2
    per_iter = 8 * nt * nr + 2 * nt + 6 * nr + 2
    assert det.real_mults == init + t * per_iter, det.real_mults
    checks += 1

    # Utility functions round-trip sensible values.
    rate, errors, bits, half = mod.ber([0, 1, 1, 0], [0, 1, 0, 0])
    assert (errors, bits) == (1, 4) and abs(rate - 0.25) < 1e-15 and half > 0
    sigma, per_dim = mod.snr_to_noise_variance(12.0, 16)
    assert abs(sigma - 16 * 10 ** -1.2) < 1e-12
    assert abs(per_dim - sigma / 2) < 1e-15
    checks += 1

    print(f"smoke test passed: {checks} checks")


if __name__ == "__main__":
    main()
