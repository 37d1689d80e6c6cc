"""
Measuring consistency orders against a tolerance-controlled reference
=====================================================================

One-step error of the first-order and frozen-state quadrature models on
the tracking error dynamics, swept over a decade of periods. The slope
of log(max error) vs log(T) is the empirical consistency order: 2 for
the first-order model, at least 2 for the quadrature variant.
"""

import numpy as np

from dtaudit import (
    Box,
    consistency_order,
    error_dynamics_field,
    euler_map,
    exact_proxy_map,
    modified_euler_map,
    validated_references,
)

field = error_dynamics_field(validated_references())
held = np.array([0.5, 0.3])
reference = exact_proxy_map(field, held, tol=1e-10)

box = Box.centered(1.0, 3)
T_list = [float(t) for t in np.logspace(-3.0, -1.0, 7)]

reports = {
    "first-order": consistency_order(reference, euler_map(field, held), box,
                                     T_list=T_list, n_samples=32),
    "quadrature": consistency_order(reference, modified_euler_map(field, held), box,
                                    T_list=T_list, n_samples=32),
}

print(f"{'T':>10} {'first-order err':>16} {'quadrature err':>16}")
for i, T in enumerate(reports["first-order"].T_samples):
    print(f"{T:10.5f} {reports['first-order'].max_errors[i]:16.3e}"
          f" {reports['quadrature'].max_errors[i]:16.3e}")

for name, rep in reports.items():
    print(f"{name}: fitted order {rep.slope:.3f}")
