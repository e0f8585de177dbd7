# The whole chain at desk scale: data, dictionary, ordering, images.
#
# A 10x10 window, 60 receivers and 5 frequencies keep the learning step to a
# minute or two. Artifacts land in ./desk-run; summary.json collects the
# headline numbers printed here.

import json
from pathlib import Path

from threadpoolctl import threadpool_limits

from wavedl import config, pipeline

cfg = config.load_preset("desk")
cfg.seed = 7
out = Path("desk-run")
with threadpool_limits(limits=1):
    manifest = pipeline.run_pipeline(cfg, out)
summary = json.loads((out / "summary.json").read_text())

sim, learn = summary["simulate"], summary["learn"]
print(f"N={sim['N']} K={sim['K']} M={sim['M']}, coherence {sim['coherence']:.3f}")
print(f"learned columns with C_max > 0.95: {learn['fraction_cmax_above_0.95']:.2f} "
      f"after {learn['alternations']} alternations")

loc = summary["localize"]
print(f"columns placed on their own grid point: {loc['localized_fraction']:.2f}")

img = summary["image"]
for name in ("true", "learned", "homogeneous"):
    print(f"image peaks correct with {name:11s} Green's functions: {img['peak_correct_' + name]:.2f}")
print(f"{len(manifest.files)} artifacts, timings (s):",
      {k: round(v, 1) for k, v in manifest.timings.items() if isinstance(v, float)})
