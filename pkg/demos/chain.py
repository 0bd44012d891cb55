"""Credit along a four-step copy chain.

The output equals X1 passed through three copies. Flow puts the whole
change on every chain edge; independent SHAP sees only X4, and a
source-only view sees only X1.
"""

from flowcredit.baselines import independent_shap
from flowcredit.flow import asv_view, shapley_flow_exact
from flowcredit.graph import augment_super_source
from flowcredit.synthetic import make_chain

g, bg, fg = make_chain(4, -1.82)
aug = augment_super_source(g)
attr = shapley_flow_exact(aug, bg, fg)

print("edge credit")
for (u, v), c in attr.credit.items():
    print(f"  {u:>3} -> {v:<3} {c:+.3f}")

shap = independent_shap(g, bg, fg)
asv = asv_view(attr, aug)
print("\nnode   independent  source-only")
for v in ("X1", "X2", "X3", "X4"):
    print(f"  {v}   {shap[v]:+.3f}       {asv[v]:+.3f}")
