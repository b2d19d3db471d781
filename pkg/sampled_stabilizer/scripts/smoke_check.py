"""
Smoke check for the sampled-data loop.
Run this to verify every preset resolves, runs and settles.
"""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.control.analysis import adaptation_window_steps, convergence_metric, input_convergence, lyapunov_audit
from app.control.errors import BlowUp
from app.control.scenarios import check_preset, preset, preset_names, resolve
from app.control.simloop import run, run_oracle


def check_system():
    """Run every preset once, data-driven and oracle."""
    print("=" * 50)
    print("Sampled Stabilizer Smoke Check")
    print("=" * 50)

    failures = 0
    for i, name in enumerate(preset_names(), start=1):
        print(f"\n[{i}] {name}")
        cfg = preset(name)

        findings = check_preset(cfg)
        for f in findings:
            print(f"    ⚠️  {f}")

        loop = resolve(cfg)
        try:
            trace = run(loop)
            oracle = run_oracle(loop)
        except BlowUp as e:
            print(f"    ❌ blow-up: {str(e).splitlines()[0]}")
            failures += 1
            continue

        metrics = convergence_metric(trace)
        audit = lyapunov_audit(trace, window=adaptation_window_steps(loop.T))
        conv = input_convergence(trace)
        print(f"    Steps: {len(trace) - 1}  T={loop.T:g}")
        print(f"    Terminal |z~|: {metrics.terminal_norm:.3e} (oracle {convergence_metric(oracle).terminal_norm:.3e})")
        print(f"    Settled: {metrics.settled}  steady error: {metrics.steady_error:.3e}")
        print(f"    W increases: {audit.violations}/{audit.audited} ({audit.late_violations} after the adaptation window)")
        print(f"    Input settled at: {conv.settled_time}")

        if not metrics.settled:
            print("    ⚠️  did not settle within the horizon")
            failures += 1

    print("\n" + "=" * 50)
    print("Check Complete" if failures == 0 else f"Check Finished with {failures} problem(s)")
    print("=" * 50)
    return failures


if __name__ == "__main__":
    sys.exit(1 if check_system() else 0)
