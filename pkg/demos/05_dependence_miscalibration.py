"""Why the matrix-normal model matters: the spherical shortcut miscalibrates.

Draw data with dependent rows and a banded feature covariance, then analyze
it two ways on identical draws: once pretending the noise is spherical
(independent rows, Sigma = 2I), once with the true scale matrices. The
naive p-values drift away from uniform as the dimension grows; the correct
analysis stays calibrated. Scale note: 300 replicates per dimension here
versus 2000 in the acceptance suite.
"""

from postclust import run_miscalibration

summaries, rows = run_miscalibration(n=100, dims=(5, 50), replicates=300, seed=9)

print(f"{'dim':>4} {'arm':>8} {'KS':>7} {'kept':>5}")
for s in summaries:
    print(f"{s['dim']:4d} {s['arm']:>8} {s['ks']:7.3f} {s['n_kept']:5d}")

naive = {s["dim"]: s["ks"] for s in summaries if s["arm"] == "naive"}
print(f"\nnaive KS grows from {naive[5]:.3f} at p=5 to {naive[50]:.3f} at p=50,")
print("so spherical-model p-values become badly anti-conservative in higher")
print("dimension, while the correctly specified arm stays near uniform.")
print("run `postclust miscalibration --dims 5,20,50 -M 2000` for the full study")
