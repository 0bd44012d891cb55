"""Explain an observed sample with inferred noise nodes.

Each non-source node gets an additive noise parent. Residuals between
the observed values and the structural equations become the noise
values, and the noise edges take credit for the unexplained part.
"""

import tempfile
from pathlib import Path

from flowcredit import io
from flowcredit.synthetic import augment_noise_nodes, make_chain

g, _, _ = make_chain()
noisy = augment_noise_nodes(g)
fg = {"X1": 1.0, "X2": 1.5, "X3": 1.5, "X4": 2.0}
bg = {"X1": 0.0, "X2": 0.0, "X3": 0.0, "X4": 0.0}

out = Path(tempfile.mkdtemp())
paths = io.write_case(out, noisy, fg, [bg])
report = io.run_attribution(io.load_case(paths["graph"], paths["fg"], paths["bg"]))
print(io.report_to_json(report))
