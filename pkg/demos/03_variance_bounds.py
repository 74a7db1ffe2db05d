"""Output variance of stochastic filters and networks versus the
first-order theoretical bounds.

For a filter the variance over nodes obeys

    var <= p (1 - p) * 2 alpha M K Cg^2 * ||x||^2 + higher order,

so the bound is checked in the link-stable regime p >= 0.9 where the
first-order term dominates, plus the exact zeros at p in {0, 1}.  On tiny
graphs the exact variance comes from enumerating every mask sequence.

Run:  python3 demos/03_variance_bounds.py
"""

import numpy as np

import sgnn_lab as sl

rng = sl.Rng(1)

# --- single stochastic filter on a triangle -------------------------------
k3 = sl.build_sbm(3, 1, 1.0, 1.0, rng.child(0))
taps = np.array([0.3, 0.8])
x = np.array([1.0, -0.5, 0.25])
constants = sl.filter_constants(taps, k3, rng=rng.child(1))
print("filter constants: bound %.3f  lipschitz %.3f  domain %s"
      % (constants.response_bound, constants.response_lipschitz, constants.domain))

print("\n  p      exact var    first-order bound")
for p in (0.0, 0.5, 0.9, 0.95, 0.99, 1.0):
    exact = sl.exact_filter_variance(taps, k3, p, x)
    bound = sl.filter_variance_bound(taps, k3, p, x, constants)
    print(f"  {p:4.2f}   {exact:10.6f}   {bound:10.6f}")

# --- full network ----------------------------------------------------------
adj = sl.build_sbm(10, 2, 0.8, 0.2, rng.child(2))
base = sl.to_shift(adj, sl.NORMALIZED_ADJACENCY)
cfg = sl.SgnnConfig(layers=2, features=2, order=2, nonlinearity="relu")
tensor = sl.init_tensor(cfg, rng.child(3), 0.4)
signal = rng.child(4).normal(size=10)
net_constants = sl.tensor_constants(tensor, base, rng=rng.child(5))

print("\nnetwork variance (Monte Carlo over 4000 realization sets):")
print("  p      mc var      +/- 3 se     bound")
for p in (0.9, 0.95, 0.99):
    report = sl.make_sgnn_report(tensor, base, p, signal, 4000, rng.child(int(100 * p)),
                                 net_constants)
    print(f"  {p:4.2f}   {report.mc_variance:9.5f}  {3 * report.mc_std_error:9.5f}"
          f"   {report.bound_first_order:9.5f}")

# --- nonlinearities never increase variance --------------------------------
print("\nvariance through the nonlinearity (100k standard normal samples):")
normal = rng.child(6).normal(size=100_000)
for kind in ("relu", "abs", "tanh"):
    var_in, var_out = sl.check_nonlinearity_variance(kind, lambda n: normal[:n], 100_000)
    print(f"  {kind:4s}: var {var_in:.4f} -> {var_out:.4f}")
print("closed form for relu of a standard normal: 1/2 - 1/(2 pi) ="
      f" {0.5 - 1 / (2 * np.pi):.4f}")
