"""
Auditing the tracking proof's constant chain on a grid
======================================================

The stability argument for the tracking loop is a ladder of constants:
excitation level, quadratic sandwich bounds, remainder fits, a
composite decrease rate, and a period ceiling. Each rung is computed
numerically and every downstream claim refuses to evaluate when a rung
fails. The published aggressive gains fail at the first rung; a gentler
regime passes the whole ladder and the pointwise decrease audit.
"""

import numpy as np

from dtaudit import (
    audit_lyapunov_chain,
    compute_case_constants,
    demo_gains,
    demo_references,
    validated_gains,
    validated_references,
)

# aggressive published gains: the sandwich lower bound already fails
loud = compute_case_constants(demo_references(), demo_gains(0.01),
                              T_star=0.01, L_pe=np.pi, grid_n=9, radius=2.0,
                              k_max=20)
print(f"aggressive regime: c1 = {loud.c1:.2f}, valid = {loud.all_valid},"
      f" first broken rung = {loud.first_violated()}")

# gentle regime: slow heading reference, moderate gains
refs = validated_references()
gains = validated_gains("full")
c = compute_case_constants(refs, gains, T_star=0.01, L_pe=2.0)
print("\ngentle regime constants")
for name in ("mu_pe", "c1", "c2", "alpha_x", "K1", "K2", "alpha_y_tilde",
             "eps_small", "c3_tilde", "T_tilde"):
    print(f"  {name:13s} = {getattr(c, name):.6g}")
print(f"  all rungs valid: {c.all_valid}")

verdict = audit_lyapunov_chain(refs, gains, c, T=0.01)
print(f"\ndecrease audit on the 41x41 grid: {verdict.kind}")
print(f"  worst composite decrease margin: {verdict.margins['U_decrease']:+.3e}")
print(f"  sandwich range observed: [{verdict.margins['V_lo']:.4f},"
      f" {verdict.margins['V_hi']:.4f}] inside [c1, c2] ="
      f" [{c.c1:.4f}, {c.c2:.4f}]")
