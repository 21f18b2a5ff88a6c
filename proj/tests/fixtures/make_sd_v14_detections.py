"""Writes sd_v14_detections.jsonl: 1000 four-object prompts whose per-position
detection counts are 577 / 447 / 381 / 354."""

import json
import random
from pathlib import Path

COUNTS = [577, 447, 381, 354]
N = 1000

here = Path(__file__).resolve().parent
names = [
    line.split("\t")[0]
    for line in (here.parents[1] / "data" / "vocab" / "comco.tsv").read_text().splitlines()
    if line and not line.startswith("#")
]

rng = random.Random(1404)
detected_at = [set(rng.sample(range(N), k)) for k in COUNTS]
with open(here / "sd_v14_detections.jsonl", "w", newline="\n") as out:
    for i in range(N):
        objects = rng.sample(names, 4)
        detected = [o for p, o in enumerate(objects) if i in detected_at[p]]
        # Detectors also report objects that were never prompted.
        if rng.random() < 0.1:
            extra = rng.choice([n for n in names if n not in objects])
            detected.append(extra)
        record = {"prompt_id": f"sd14_{i:04d}", "prompt_objects": objects, "detected": sorted(detected)}
        out.write(json.dumps(record, separators=(",", ":")) + "\n")
