"""Two binary inputs feeding an OR: each edge gets half the change,
and Monte Carlo lands within a few standard errors of it."""

from flowcredit.flow import shapley_flow_exact, shapley_flow_mc
from flowcredit.synthetic import make_or_game

g, bg, fg = make_or_game()
exact = shapley_flow_exact(g, bg, fg)
mc = shapley_flow_mc(g, bg, fg, n=10_000, seed=0)
for e in [("X1", "f"), ("X2", "f")]:
    print(f"{e[0]} -> f  exact {exact.credit[e]:.4f}  mc {mc.credit[e]:.4f} +/- {mc.stderr[e]:.4f}")
